"""Artifact files: matrix containers, JSON/CSV tables and run manifests.

Matrix container layout (little endian)::

    8 bytes   magic b"SPWMAT01"
    8 bytes   uint64 rows
    8 bytes   uint64 cols
    rows*cols complex128, row-major

Every matrix gets a JSON sidecar ``<name>.json`` with shape, hash and a
free-text description. JSON and CSV writers sort keys and fix float
formatting so identical inputs give identical bytes.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, InvariantViolation

__all__ = ["MAGIC", "write_matrix", "read_matrix", "write_json", "write_csv",
           "file_hash", "RunManifest", "to_jsonable"]

MAGIC = b"SPWMAT01"


def file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def to_jsonable(obj):
    """Recursively convert numpy scalars/arrays and complex numbers."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        z = complex(obj)
        return {"re": _clean_float(z.real), "im": _clean_float(z.imag)}
    if isinstance(obj, (float, np.floating)):
        return _clean_float(float(obj))
    return obj


def _clean_float(x: float):
    if x != x:
        return "nan"
    if x in (float("inf"), float("-inf")):
        return "inf" if x > 0 else "-inf"
    return float(repr(x))


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".part")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def write_json(path, obj) -> Path:
    path = Path(path)
    text = json.dumps(to_jsonable(obj), sort_keys=True, indent=1) + "\n"
    _atomic_write(path, text.encode())
    return path


def write_csv(path, rows: list[dict], columns: list[str] | None = None) -> Path:
    path = Path(path)
    if columns is None:
        columns = sorted({k for row in rows for k in row})
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_csv_cell(row.get(c, "")) for c in columns])
    _atomic_write(path, buf.getvalue().encode())
    return path


def _csv_cell(v):
    if isinstance(v, (complex, np.complexfloating)):
        return repr(complex(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def write_matrix(path, A, description: str = "") -> Path:
    path = Path(path)
    A = np.ascontiguousarray(np.asarray(A, dtype="<c16"))
    if A.ndim != 2:
        raise ConfigurationError("matrix container holds 2-D arrays only")
    header = MAGIC + np.array(A.shape, dtype="<u8").tobytes()
    _atomic_write(path, header + A.tobytes(order="C"))
    write_json(path.with_name(path.name + ".json"),
               {"shape": list(A.shape), "dtype": "complex128", "order": "row-major",
                "sha256": file_hash(path), "description": description})
    return path


def read_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(24)
        if len(head) != 24 or head[:8] != MAGIC:
            raise ConfigurationError(f"{path} is not a matrix container")
        rows, cols = np.frombuffer(head[8:], dtype="<u8")
        data = np.frombuffer(fh.read(), dtype="<c16")
    if data.size != rows * cols:
        raise ConfigurationError(f"{path}: truncated matrix container")
    return data.reshape(int(rows), int(cols)).copy()


@dataclass
class RunManifest:
    """Record of one run directory: config hash, artifact hashes, stage data."""

    config_hash: str
    pipeline: str
    directory: str
    artifacts: dict = field(default_factory=dict)
    stages: dict = field(default_factory=dict)
    status: str = "running"

    def add(self, path) -> None:
        path = Path(path)
        rel = os.path.relpath(path, self.directory)
        self.artifacts[rel] = file_hash(path)

    def stage(self, name: str, seconds: float, residuals: dict | None = None) -> None:
        self.stages[name] = {"seconds": float(seconds), "residuals": residuals or {}}

    def to_dict(self) -> dict:
        return {"config_hash": self.config_hash, "pipeline": self.pipeline,
                "artifacts": dict(sorted(self.artifacts.items())), "stages": self.stages,
                "status": self.status}

    def write(self) -> Path:
        return write_json(Path(self.directory) / "manifest.json", self.to_dict())

    def verify(self) -> None:
        """Every listed artifact exists with the recorded hash."""
        for rel, digest in self.artifacts.items():
            path = Path(self.directory) / rel
            if not path.exists() or file_hash(path) != digest:
                raise InvariantViolation(f"artifact {rel} missing or modified")

    @classmethod
    def load(cls, directory) -> "RunManifest":
        with open(Path(directory) / "manifest.json", encoding="utf-8") as fh:
            d = json.load(fh)
        return cls(d["config_hash"], d["pipeline"], str(directory), d["artifacts"],
                   d["stages"], d["status"])
