"""Seedable synthetic vector streams.

Every generator is a pure function of its :class:`GenSpec`. Randomness comes
from NumPy's PCG64 bit generator seeded through ``SeedSequence([seed, tag])``
where ``tag`` is the first four bytes (big-endian) of ``sha256(kind)``, so two
kinds never share a stream for the same seed.

Sampling routines: Gamma variates use NumPy's Marsaglia-Tsang sampler and a
Dirichlet draw is a row of unit-shape Gammas divided by its sum. Poisson
lengths use ``Generator.poisson``. Word counts for an LDA review are drawn
in one multinomial over the review's word distribution ``theta @ phi``,
which has the same law as drawing a topic and then a word per token.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, Iterator, Optional

import numpy as np

from .vectorspace import Point

__all__ = [
    "GenSpec",
    "Dataset",
    "KINDS",
    "make_rng",
    "generate",
    "gen_uniform",
    "gen_lda",
    "gen_multimodal",
    "gen_adversarial",
]

KINDS = ("uniform", "lda", "multimodal", "adversarial")


@dataclass(frozen=True)
class GenSpec:
    """What to generate.

    Parameters
    ----------
    kind : {"uniform", "lda", "multimodal", "adversarial"}
    n : int
        Stream length.
    dim : int, optional
        Dimensionality. Defaults to 100, and for ``lda`` must equal
        ``vocab`` (it defaults to it).
    seed : int
    topics, vocab, mean_length : LDA topic count, vocabulary size and mean
        review length.
    modes : int
        Number of Gaussian modes for ``multimodal``.
    sigma : float
        Per-coordinate noise of the ``adversarial`` stream.
    drift_scale : float
        Total distance per coordinate the adversarial mean travels.
    """

    kind: str = "uniform"
    n: int = 10_000
    dim: Optional[int] = None
    seed: int = 0
    topics: int = 10
    vocab: int = 100
    mean_length: float = 150.0
    modes: int = 4
    sigma: float = 0.01
    drift_scale: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.dim is not None and self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.kind == "lda":
            if self.topics < 1 or self.vocab < 1 or not self.mean_length > 0:
                raise ValueError("lda needs topics >= 1, vocab >= 1 and mean_length > 0")
            if self.dim is not None and self.dim != self.vocab:
                raise ValueError(f"lda output dimension is the vocabulary size {self.vocab}, got dim={self.dim}")
        if self.kind == "multimodal" and self.modes < 1:
            raise ValueError(f"modes must be >= 1, got {self.modes}")
        if self.kind == "adversarial" and self.sigma < 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")

    @property
    def out_dim(self) -> int:
        if self.kind == "lda":
            return self.vocab
        return 100 if self.dim is None else self.dim

    def as_dict(self) -> dict:
        d = asdict(self)
        d["dim"] = self.out_dim
        return d


@dataclass
class Dataset:
    """A generated stream; ``ids`` run from 1 in arrival order.

    ``labels`` holds the mode of each multimodal point and ``lengths`` the
    sampled length of each LDA review.
    """

    X: np.ndarray
    spec: Optional[GenSpec] = None
    ids: Optional[np.ndarray] = None
    texts: Optional[list] = None
    labels: Optional[np.ndarray] = None
    lengths: Optional[np.ndarray] = None
    extra: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=np.float64)
        if self.X.ndim != 2:
            raise ValueError(f"X must be 2-d, got shape {self.X.shape}")
        if self.ids is None:
            self.ids = np.arange(1, self.X.shape[0] + 1, dtype=np.int64)

    def __len__(self):
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def points(self) -> Iterator[Point]:
        for i, (pid, row) in enumerate(zip(self.ids.tolist(), self.X)):
            yield Point(pid, row, None if self.texts is None else self.texts[i])


def make_rng(seed: int, kind: str) -> np.random.Generator:
    tag = int.from_bytes(hashlib.sha256(kind.encode()).digest()[:4], "big")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), tag])))


def _dirichlet_ones(rng: np.random.Generator, rows: int, size: int) -> np.ndarray:
    g = rng.standard_gamma(1.0, size=(rows, size))
    return g / g.sum(axis=1, keepdims=True)


def gen_uniform(spec: GenSpec) -> Dataset:
    """i.i.d. points on ``[-1/2, 1/2]^D``."""
    rng = make_rng(spec.seed, "uniform")
    return Dataset(rng.random((spec.n, spec.out_dim)) - 0.5, spec=spec)


def gen_lda(spec: GenSpec) -> Dataset:
    """Mean one-hot word vector of each review drawn from an LDA model.

    Topic-word and review-topic distributions are Dir(1); lengths are
    Poisson(mean_length), redrawn while zero.
    """
    rng = make_rng(spec.seed, "lda")
    phi = _dirichlet_ones(rng, spec.topics, spec.vocab)
    X = np.empty((spec.n, spec.vocab))
    lengths = np.empty(spec.n, dtype=np.int64)
    for i in range(spec.n):
        theta = _dirichlet_ones(rng, 1, spec.topics)[0]
        length = 0
        while length == 0:
            length = int(rng.poisson(spec.mean_length))
        words = theta @ phi
        counts = rng.multinomial(length, words / words.sum())
        X[i] = counts / length
        lengths[i] = length
    return Dataset(X, spec=spec, lengths=lengths)


def gen_multimodal(spec: GenSpec) -> Dataset:
    """Equal-weight mixture of ``N(i * 1, I)`` for ``i = 1..modes``."""
    rng = make_rng(spec.seed, "multimodal")
    labels = rng.integers(1, spec.modes + 1, size=spec.n)
    X = rng.standard_normal((spec.n, spec.out_dim)) + labels[:, None].astype(np.float64)
    return Dataset(X, spec=spec, labels=labels)


def gen_adversarial(spec: GenSpec) -> Dataset:
    """``x_i ~ N(drift_scale * (i/n) * 1, sigma^2 I)`` for ``i = 1..n``."""
    rng = make_rng(spec.seed, "adversarial")
    centers = spec.drift_scale * np.arange(1, spec.n + 1, dtype=np.float64) / spec.n
    X = centers[:, None] + spec.sigma * rng.standard_normal((spec.n, spec.out_dim))
    return Dataset(X, spec=spec)


GENERATORS: Dict[str, Callable[[GenSpec], Dataset]] = {
    "uniform": gen_uniform,
    "lda": gen_lda,
    "multimodal": gen_multimodal,
    "adversarial": gen_adversarial,
}


def generate(spec: GenSpec) -> Dataset:
    return GENERATORS[spec.kind](spec)
