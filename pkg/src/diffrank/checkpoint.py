"""Sorter checkpoint files.

Layout (version 1)::

    DIFFRANK-SORTER\\n
    <one line of UTF-8 JSON header>\\n
    <payload: float64 little-endian, row-major, arrays back to back>

The header holds ``format_version``, ``kind``, ``d``, ``hyperparameters``,
``metadata`` (free-form training provenance) and ``arrays``, a list of
``{"name", "shape"}`` entries in payload order. Parameter arrays use the
sorter's parameter names; batch-norm running statistics are stored as
``<layer>.running_mean`` and ``<layer>.running_var``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .sorters import Sorter, build_sorter

MAGIC = b"DIFFRANK-SORTER\n"
FORMAT_VERSION = 1

__all__ = [
    "CheckpointError",
    "CheckpointVersionError",
    "TruncatedCheckpointError",
    "KindMismatchError",
    "SorterCheckpoint",
    "save_checkpoint",
    "load_checkpoint",
    "load_sorter",
]


class CheckpointError(Exception):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class KindMismatchError(CheckpointError):
    pass


@dataclass
class SorterCheckpoint:
    kind: str
    d: int
    hyperparameters: dict
    arrays: dict[str, np.ndarray]
    metadata: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    @classmethod
    def from_sorter(cls, sorter: Sorter, metadata: dict | None = None) -> SorterCheckpoint:
        arrays = {name: p.data.copy() for name, p in sorter.params.items()}
        for name, st in sorter.bn_states.items():
            arrays[f"{name}.running_mean"] = st.running_mean.copy()
            arrays[f"{name}.running_var"] = st.running_var.copy()
        return cls(sorter.kind, sorter.d, sorter.hyperparameters(), arrays, dict(metadata or {}))

    def build(self) -> Sorter:
        hyper = dict(self.hyperparameters)
        sorter = build_sorter(self.kind, self.d, **hyper)
        for name, p in sorter.params.items():
            if name not in self.arrays:
                raise CheckpointError(f"checkpoint is missing array {name!r}")
            if self.arrays[name].shape != p.shape:
                raise CheckpointError(f"array {name!r} has shape {self.arrays[name].shape}, expected {p.shape}")
            p.data = self.arrays[name].copy()
        for name, st in sorter.bn_states.items():
            st.running_mean = self.arrays[f"{name}.running_mean"].copy()
            st.running_var = self.arrays[f"{name}.running_var"].copy()
            st.loaded = True
        return sorter.eval()


def save_checkpoint(sorter: Sorter | SorterCheckpoint, path, metadata: dict | None = None) -> Path:
    ckpt = sorter if isinstance(sorter, SorterCheckpoint) else SorterCheckpoint.from_sorter(sorter, metadata)
    if metadata and isinstance(sorter, SorterCheckpoint):
        ckpt.metadata.update(metadata)
    header = {
        "format_version": FORMAT_VERSION,
        "kind": ckpt.kind,
        "d": ckpt.d,
        "hyperparameters": ckpt.hyperparameters,
        "metadata": ckpt.metadata,
        "arrays": [{"name": k, "shape": list(v.shape)} for k, v in ckpt.arrays.items()],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for arr in ckpt.arrays.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return path


def load_checkpoint(path, kind: str | None = None) -> SorterCheckpoint:
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        if MAGIC.startswith(raw):
            raise TruncatedCheckpointError(f"{path}: file ends inside the magic line")
        raise CheckpointError(f"{path}: not a sorter checkpoint")
    end = raw.find(b"\n", len(MAGIC))
    if end < 0:
        raise TruncatedCheckpointError(f"{path}: header line is incomplete")
    try:
        header = json.loads(raw[len(MAGIC) : end])
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: unreadable header ({exc})") from None
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{path}: format version {header.get('format_version')!r}, this build reads {FORMAT_VERSION}"
        )
    if kind is not None and header["kind"] != kind:
        raise KindMismatchError(f"{path}: holds a {header['kind']} sorter, expected {kind}")
    payload = raw[end + 1 :]
    arrays = {}
    offset = 0
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        nbytes = 8 * int(np.prod(shape, dtype=np.int64))
        if offset + nbytes > len(payload):
            raise TruncatedCheckpointError(f"{path}: payload ends inside array {spec['name']!r}")
        arrays[spec["name"]] = np.frombuffer(payload, dtype="<f8", count=nbytes // 8, offset=offset).reshape(shape).astype(np.float64)
        offset += nbytes
    if offset != len(payload):
        raise CheckpointError(f"{path}: {len(payload) - offset} trailing bytes after the last array")
    return SorterCheckpoint(
        kind=header["kind"],
        d=int(header["d"]),
        hyperparameters=header["hyperparameters"],
        arrays=arrays,
        metadata=header.get("metadata", {}),
        format_version=header["format_version"],
    )


def load_sorter(path, kind: str | None = None) -> Sorter:
    return load_checkpoint(path, kind=kind).build()
