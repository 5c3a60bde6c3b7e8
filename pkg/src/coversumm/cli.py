"""``coversumm`` command line: gen, run, bench, verify.

Run outputs (one directory per dataset)::

    steps.csv          t, elapsed_ns, did_rs, cum_rs, reservoir_size, drift, lambda, changed
    summaries.jsonl    {"t", "ids", "distances", "texts"?} per step
    manifest.json      resolved config, seed, dataset hash, totals

Settings resolve as command-line flag, then ``--config`` JSON file, then
built-in default. The seed falls back to ``$COVERSUMM_SEED`` and then 0.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from . import __version__
from .baselines import BruteForce, DecayLambda, NaiveTree, RandomReservoir
from .datagen import GenSpec, generate
from .engine import CoverSumm
from .io import file_sha256, read_dataset, write_dataset
from .oracle_metrics import AccuracyReport, nn_accuracy

__all__ = ["main", "build_parser", "make_summarizer", "ALGORITHMS", "EXACT_ALGORITHMS"]

ALGORITHMS = (
    "coversumm",
    "coversumm_lazy",
    "coversumm_reservoir",
    "coversumm_knn_plus_range",
    "brute_force",
    "naive_tree",
    "random_reservoir",
    "decay_lambda",
)
EXACT_ALGORITHMS = frozenset(ALGORITHMS) - {"random_reservoir", "decay_lambda"}

RUN_DEFAULTS: Dict[str, object] = {
    "algorithm": "coversumm",
    "variant": "lazy_reservoir",
    "k": 20,
    "alpha": 0.005,
    "c_max": None,
    "gamma": 2.0,
    "support_width": None,
    "p": 0.1,
    "c1": 1.0,
    "c2": 1e-3,
    "seed": None,
}

GEN_DEFAULTS: Dict[str, object] = {
    "kind": "uniform",
    "n": 10_000,
    "dim": None,
    "seed": None,
    "topics": 10,
    "vocab": 100,
    "mean_length": 150.0,
    "modes": 4,
    "sigma": 0.01,
    "drift_scale": 1.0,
    "format": None,
    "width": 8,
}

STEP_COLUMNS = ("t", "elapsed_ns", "did_rs", "cum_rs", "reservoir_size", "drift", "lambda", "changed")


def env_seed() -> int:
    raw = os.environ.get("COVERSUMM_SEED")
    if raw is None or raw.strip() == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"COVERSUMM_SEED must be an integer, got {raw!r}") from None


def resolve(defaults: Dict[str, object], config_path: Optional[str], flags: argparse.Namespace) -> Dict[str, object]:
    """Merge settings: flags over config file over defaults."""
    out = dict(defaults)
    if config_path:
        with open(config_path, encoding="utf-8") as fh:
            cfg = json.load(fh)
        unknown = set(cfg) - set(defaults)
        if unknown:
            raise SystemExit(f"unknown config keys: {sorted(unknown)}")
        out.update(cfg)
    for key in defaults:
        value = getattr(flags, key, None)
        if value is not None:
            out[key] = value
    if out.get("seed") is None:
        out["seed"] = env_seed()
    return out


def make_summarizer(name: str, **cfg):
    """Build a summarizer from a resolved run config."""
    k = int(cfg.get("k", 20))
    alpha = float(cfg.get("alpha", RUN_DEFAULTS["alpha"]))
    gamma = float(cfg.get("gamma", 2.0))
    c_max = cfg.get("c_max")
    width = cfg.get("support_width")
    shared = dict(k=k, alpha=alpha, c_max=c_max, gamma=gamma, support_width=width)
    if name == "coversumm":
        return CoverSumm(variant=cfg.get("variant", "lazy_reservoir"), **shared)
    if name == "coversumm_lazy":
        return CoverSumm(variant="lazy_reservoir", **shared)
    if name == "coversumm_reservoir":
        return CoverSumm(variant="reservoir", **shared)
    if name == "coversumm_knn_plus_range":
        return CoverSumm(variant="knn_plus_range", **shared)
    if name == "brute_force":
        return BruteForce(k=k)
    if name == "naive_tree":
        return NaiveTree(k=k, gamma=gamma)
    if name == "random_reservoir":
        return RandomReservoir(p=float(cfg.get("p", 0.1)), random_state=cfg.get("seed"), **shared)
    if name == "decay_lambda":
        return DecayLambda(c1=float(cfg.get("c1", 1.0)), c2=float(cfg.get("c2", 1e-3)), **shared)
    raise SystemExit(f"unknown algorithm {name!r}; choose from {', '.join(ALGORITHMS)}")


def stream(model, data) -> List:
    """Feed every point in order; returns the step records."""
    return [model.step(p)[1] for p in data.points()]


# ---------------------------------------------------------------------- gen


def cmd_gen(args) -> int:
    cfg = resolve(GEN_DEFAULTS, args.config, args)
    spec = GenSpec(
        kind=cfg["kind"],
        n=int(cfg["n"]),
        dim=None if cfg["dim"] is None else int(cfg["dim"]),
        seed=int(cfg["seed"]),
        topics=int(cfg["topics"]),
        vocab=int(cfg["vocab"]),
        mean_length=float(cfg["mean_length"]),
        modes=int(cfg["modes"]),
        sigma=float(cfg["sigma"]),
        drift_scale=float(cfg["drift_scale"]),
    )
    data = generate(spec)
    write_dataset(args.out, data, fmt=cfg["format"], width=int(cfg["width"]))
    print(f"wrote {len(data)} x {data.dim} {spec.kind} points to {args.out}")
    return 0


# ---------------------------------------------------------------------- run


def run_one(dataset_path: str, out_dir: str, cfg: Dict[str, object]) -> Dict[str, object]:
    data = read_dataset(dataset_path)
    model = make_summarizer(cfg["algorithm"], **cfg)
    records = stream(model, data)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    texts = getattr(model, "texts_", None)
    if texts is None and data.texts is not None:
        texts = dict(zip(data.ids.tolist(), data.texts))
    with open(out / "steps.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(STEP_COLUMNS)
        for r in records:
            w.writerow(
                [
                    r.step,
                    r.elapsed_ns,
                    int(r.did_reservoir_search),
                    r.cumulative_rs,
                    r.reservoir_size,
                    repr(float(r.drift)),
                    repr(float(r.lam)),
                    int(r.summary.changed),
                ]
            )
    with open(out / "summaries.jsonl", "w", encoding="utf-8") as fh:
        for r in records:
            obj = {"t": r.step, "ids": r.summary.member_ids, "distances": r.summary.distances}
            if texts:
                obj["texts"] = [texts.get(pid) for pid in r.summary.member_ids]
            fh.write(json.dumps(obj) + "\n")
    totals = {
        "steps": len(records),
        "elapsed_ns": int(sum(r.elapsed_ns for r in records)),
        "reservoir_searches": int(sum(r.did_reservoir_search for r in records)),
        "changed_steps": int(sum(r.summary.changed for r in records)),
        "max_reservoir_size": int(max((r.reservoir_size for r in records), default=0)),
    }
    manifest = {
        "version": __version__,
        "dataset": {"path": str(dataset_path), "sha256": file_sha256(dataset_path), "n": len(data), "dim": data.dim},
        "config": cfg,
        "seed": cfg["seed"],
        "totals": totals,
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest


def _run_job(job):
    return run_one(*job)


def cmd_run(args) -> int:
    cfg = resolve(RUN_DEFAULTS, args.config, args)
    if cfg["algorithm"] not in ALGORITHMS:
        raise SystemExit(f"unknown algorithm {cfg['algorithm']!r}")
    # fail on bad parameters before touching any data
    make_summarizer(cfg["algorithm"], **cfg)._check_params()
    datasets = args.dataset
    if len(datasets) == 1:
        jobs = [(datasets[0], args.out, cfg)]
    else:
        jobs = [(d, str(Path(args.out) / Path(d).stem), cfg) for d in datasets]
    workers = max(1, int(args.parallel_entities or 1))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            manifests = list(pool.map(_run_job, jobs))
    else:
        manifests = [_run_job(j) for j in jobs]
    for (path, out, _), m in zip(jobs, manifests):
        t = m["totals"]
        print(
            f"{path}: {t['steps']} steps, {t['elapsed_ns'] / 1e9:.3f} s, {t['reservoir_searches']} reservoir searches -> {out}"
        )
    return 0


# -------------------------------------------------------------------- bench


def bench(data, algorithms: Sequence[str], repeats: int, cfg: Dict[str, object]) -> List[Dict[str, object]]:
    """Time each algorithm ``repeats`` times and score it against brute force."""
    truth_model = BruteForce(k=int(cfg["k"]))
    truth = [r.summary.member_ids for r in stream(truth_model, data)]
    rows = []
    for name in algorithms:
        times = []
        report = None
        max_r = total_rs = 0
        for _ in range(repeats):
            model = make_summarizer(name, **cfg)
            records = stream(model, data)
            times.append(sum(r.elapsed_ns for r in records) / 1e9)
            if report is None:
                report = nn_accuracy([r.summary.member_ids for r in records], truth)
                max_r = max(r.reservoir_size for r in records)
                total_rs = records[-1].cumulative_rs if records else 0
        rows.append(
            {
                "algorithm": name,
                "repeats": repeats,
                "total_time_mean": statistics.fmean(times),
                "total_time_sd": statistics.stdev(times) if len(times) > 1 else 0.0,
                "accuracy_pct": report.accuracy_pct,
                "max_reservoir_size": max_r,
                "total_rs": total_rs,
            }
        )
    return rows


def cmd_bench(args) -> int:
    cfg = resolve(RUN_DEFAULTS, args.config, args)
    data = read_dataset(args.dataset)
    rows = bench(data, args.algorithms, int(args.repeats), cfg)
    out = Path(args.out)
    if out.suffix == ".json":
        out.write_text(json.dumps(rows, indent=2))
    else:
        with open(out, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    for r in rows:
        print(
            f"{r['algorithm']:<26} {r['total_time_mean']:8.3f} +- {r['total_time_sd']:.3f} s  "
            f"acc {r['accuracy_pct']:6.2f}%  max|R| {r['max_reservoir_size']:4d}  n_rs {r['total_rs']}"
        )
    return 0


# ------------------------------------------------------------------- verify


def read_summaries(path: str) -> List[List[int]]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line)["ids"] for line in fh if line.strip()]


def cmd_verify(args) -> int:
    cfg = resolve(RUN_DEFAULTS, args.config, args)
    data = read_dataset(args.dataset)
    truth = [r.summary.member_ids for r in stream(BruteForce(k=int(cfg["k"])), data)]
    if args.summaries:
        candidate = read_summaries(args.summaries)
    else:
        candidate = [r.summary.member_ids for r in stream(make_summarizer(cfg["algorithm"], **cfg), data)]
    report: AccuracyReport = nn_accuracy(candidate, truth)
    print(json.dumps({"algorithm": cfg["algorithm"], **report.as_dict()}))
    exact = args.summaries is not None or cfg["algorithm"] in EXACT_ALGORITHMS
    if exact and report.steps_exact < report.steps_total:
        return 1
    return 0


# ------------------------------------------------------------------- parser


def _add_algorithm_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file of settings (flags win)")
    p.add_argument("--algorithm", choices=ALGORITHMS)
    p.add_argument("--variant", choices=("reservoir", "knn_plus_range", "lazy_reservoir"))
    p.add_argument("--k", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--c-max", dest="c_max", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--support-width", dest="support_width", type=float)
    p.add_argument("--p", type=float, help="admission probability of random_reservoir")
    p.add_argument("--c1", type=float)
    p.add_argument("--c2", type=float)
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coversumm", description="Incremental centroid summaries of vector streams.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic dataset")
    g.add_argument("--config")
    g.add_argument("--kind", choices=("uniform", "lda", "multimodal", "adversarial"))
    g.add_argument("--n", type=int)
    g.add_argument("--dim", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--topics", type=int)
    g.add_argument("--vocab", type=int)
    g.add_argument("--mean-length", dest="mean_length", type=float)
    g.add_argument("--modes", type=int)
    g.add_argument("--sigma", type=float)
    g.add_argument("--drift-scale", dest="drift_scale", type=float)
    g.add_argument("--format", choices=("bin", "jsonl"))
    g.add_argument("--width", type=int, choices=(4, 8))
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="stream datasets through one algorithm")
    r.add_argument("dataset", nargs="+")
    _add_algorithm_flags(r)
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--parallel-entities", dest="parallel_entities", type=int, default=1)
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("bench", help="compare algorithms on one dataset")
    b.add_argument("dataset")
    _add_algorithm_flags(b)
    b.add_argument(
        "--algorithms", nargs="+", default=["brute_force", "naive_tree", "coversumm_lazy"], choices=ALGORITHMS
    )
    b.add_argument("--repeats", type=int, default=5)
    b.add_argument("--out", required=True, help="table path (.csv or .json)")
    b.set_defaults(func=cmd_bench)

    v = sub.add_parser("verify", help="score an algorithm or a summaries file against brute force")
    v.add_argument("dataset")
    _add_algorithm_flags(v)
    v.add_argument("--summaries", help="summaries.jsonl to check instead of running an algorithm")
    v.set_defaults(func=cmd_verify)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return int(args.func(args) or 0)


if __name__ == "__main__":
    sys.exit(main())
