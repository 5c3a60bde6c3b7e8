"""Dataset files.

Binary layout (little-endian)::

    offset  size  field
    0       4     magic b"CVSM"
    4       4     u32 version (1)
    8       4     u32 dim
    12      8     u64 count
    20      1     u8 width flag: 4 -> float32 payload, 8 -> float64 payload
    21      ...   count * dim floats, row-major

Binary files carry no ids or texts; rows are numbered 1..count on read.

JSONL: one object per line, ``{"id": int, "vec": [float, ...], "text": str}``
with ``text`` optional and ids strictly increasing.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .datagen import Dataset

__all__ = [
    "MAGIC",
    "VERSION",
    "DatasetFormatError",
    "write_binary",
    "read_binary",
    "write_jsonl",
    "read_jsonl",
    "read_dataset",
    "write_dataset",
    "file_sha256",
]

MAGIC = b"CVSM"
VERSION = 1
_HEADER = struct.Struct("<4sIIQB")
_DTYPES = {4: np.dtype("<f4"), 8: np.dtype("<f8")}

PathLike = Union[str, Path]


class DatasetFormatError(ValueError):
    """A dataset file does not follow the documented layout."""


def write_binary(path: PathLike, X: np.ndarray, width: int = 8) -> None:
    if width not in _DTYPES:
        raise ValueError(f"width must be 4 or 8, got {width}")
    X = np.asarray(X)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-d array, got shape {X.shape}")
    count, dim = X.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, dim, count, width))
        fh.write(np.ascontiguousarray(X, dtype=_DTYPES[width]).tobytes())


def read_binary(path: PathLike) -> Dataset:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise DatasetFormatError(f"{path}: file shorter than the {_HEADER.size}-byte header")
    magic, version, dim, count, width = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DatasetFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise DatasetFormatError(f"{path}: unsupported version {version}")
    if width not in _DTYPES:
        raise DatasetFormatError(f"{path}: bad width flag {width}")
    expected = count * dim * width
    payload = raw[_HEADER.size :]
    if len(payload) != expected:
        raise DatasetFormatError(f"{path}: payload is {len(payload)} bytes, header implies {expected}")
    X = np.frombuffer(payload, dtype=_DTYPES[width]).reshape(count, dim).astype(np.float64)
    return Dataset(X)


def write_jsonl(path: PathLike, X: np.ndarray, ids=None, texts=None) -> None:
    X = np.asarray(X, dtype=np.float64)
    ids = range(1, X.shape[0] + 1) if ids is None else ids
    with open(path, "w", encoding="utf-8") as fh:
        for i, (pid, row) in enumerate(zip(ids, X)):
            obj = {"id": int(pid), "vec": row.tolist()}
            if texts is not None and texts[i] is not None:
                obj["text"] = texts[i]
            fh.write(json.dumps(obj) + "\n")


def read_jsonl(path: PathLike) -> Dataset:
    ids, rows, texts = [], [], []
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                pid = obj["id"]
                vec = obj["vec"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DatasetFormatError(f"{path}:{lineno}: {exc}") from None
            if not isinstance(pid, int) or isinstance(pid, bool):
                raise DatasetFormatError(f"{path}:{lineno}: id must be an integer")
            if ids and pid <= ids[-1]:
                raise DatasetFormatError(f"{path}:{lineno}: id {pid} is not greater than {ids[-1]}")
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise DatasetFormatError(f"{path}:{lineno}: vector has {len(vec)} entries, expected {dim}")
            ids.append(pid)
            rows.append(vec)
            texts.append(obj.get("text"))
    if not rows:
        raise DatasetFormatError(f"{path}: no records")
    has_text = any(t is not None for t in texts)
    return Dataset(
        np.array(rows, dtype=np.float64), ids=np.array(ids, dtype=np.int64), texts=texts if has_text else None
    )


def _is_binary(path: PathLike) -> bool:
    with open(path, "rb") as fh:
        return fh.read(4) == MAGIC


def read_dataset(path: PathLike) -> Dataset:
    """Read either format, sniffing the magic bytes."""
    return read_binary(path) if _is_binary(path) else read_jsonl(path)


def write_dataset(path: PathLike, data: Dataset, fmt: Optional[str] = None, width: int = 8) -> None:
    """Write ``data`` as ``fmt`` ("bin" or "jsonl"; inferred from the suffix)."""
    if fmt is None:
        fmt = "jsonl" if str(path).endswith((".jsonl", ".json")) else "bin"
    if fmt == "bin":
        write_binary(path, data.X, width=width)
    elif fmt == "jsonl":
        write_jsonl(path, data.X, ids=data.ids, texts=data.texts)
    else:
        raise ValueError(f"unknown format {fmt!r}")


def file_sha256(path: PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()
