"""RBMX matrix files and JSON manifests with content hashes.

Layout: ``b"RBMX"``, then version, rows, cols as little-endian u32, then the
matrix in row-major order as little-endian float64.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import ArtifactError

MAGIC = b"RBMX"
VERSION = 1
_HEADER = struct.Struct("<4sIII")


def write_rbmx(path, array) -> str:
    """Write a vector (stored as one column) or matrix; returns the file hash."""
    a = np.asarray(array, dtype="<f8")
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ValueError("RBMX stores 1-D or 2-D arrays only")
    payload = _HEADER.pack(MAGIC, VERSION, a.shape[0], a.shape[1]) + np.ascontiguousarray(a).tobytes()
    Path(path).write_bytes(payload)
    return hashlib.sha256(payload).hexdigest()


def read_rbmx(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ArtifactError(f"{path}: truncated RBMX header")
    magic, version, rows, cols = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ArtifactError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ArtifactError(f"{path}: unsupported RBMX version {version}")
    body = data[_HEADER.size:]
    if len(body) != rows * cols * 8:
        raise ArtifactError(f"{path}: payload size does not match {rows}x{cols}")
    return np.frombuffer(body, dtype="<f8").reshape(rows, cols).astype(float)


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(path, meta: dict, files) -> None:
    """Write ``meta`` plus the sha256 of each named file (relative to the manifest)."""
    path = Path(path)
    doc = dict(meta)
    doc["files"] = {name: file_hash(path.parent / name) for name in sorted(files)}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True))


def read_manifest(path, verify: bool = True) -> dict:
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"missing manifest {path}")
    doc = json.loads(path.read_text())
    if verify:
        for name, digest in doc.get("files", {}).items():
            target = path.parent / name
            if not target.exists():
                raise ArtifactError(f"{path.name}: missing artifact {name}")
            if file_hash(target) != digest:
                raise ArtifactError(f"{path.name}: hash mismatch for {name}")
    return doc
