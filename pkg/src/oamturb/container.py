"""Binary container for dense complex matrices.

Layout (all little-endian)::

    magic      8 bytes   b"OAMTURB\\0"
    version    uint32
    hlen       uint32    length of the JSON header in bytes
    header     hlen bytes, UTF-8 JSON object; always carries "rows", "cols"
               and, where relevant, L_cut, wavelength, waist, cn2, t, n_photons
    data       rows*cols complex128, row-major (real, imag interleaved)
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"OAMTURB\0"
VERSION = 1


class ContainerError(ValueError):
    pass


def write_container(path, matrix: np.ndarray, header: dict | None = None) -> Path:
    path = Path(path)
    m = np.ascontiguousarray(matrix, dtype="<c16")
    if m.ndim != 2:
        raise ContainerError(f"expected 2-d array, got shape {m.shape}")
    head = dict(header or {})
    head.update(rows=int(m.shape[0]), cols=int(m.shape[1]))
    hb = json.dumps(head, sort_keys=True).encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(hb)))
        fh.write(hb)
        fh.write(m.tobytes(order="C"))
    return path


def read_header(path) -> dict:
    with open(path, "rb") as fh:
        return _read_head(fh, path)


def _read_head(fh, path) -> dict:
    if fh.read(len(MAGIC)) != MAGIC:
        raise ContainerError(f"{path}: bad magic")
    version, hlen = struct.unpack("<II", fh.read(8))
    head = json.loads(fh.read(hlen).decode("utf-8"))
    head["version"] = version
    return head


def read_container(path) -> tuple[np.ndarray, dict]:
    with open(path, "rb") as fh:
        head = _read_head(fh, path)
        if head["version"] != VERSION:
            raise ContainerError(f"{path}: version {head['version']} != {VERSION}")
        raw = fh.read()
    rows, cols = head["rows"], head["cols"]
    data = np.frombuffer(raw, dtype="<c16")
    if data.size != rows * cols:
        raise ContainerError(f"{path}: expected {rows * cols} entries, found {data.size}")
    return data.reshape(rows, cols).astype(complex), head
