"""Binary container for states and block-diagonal density matrices.

Layout (all little-endian)::

    magic    4s   b"BWPC"
    version  u2   1
    kind     u1   0 = state vector, 1 = density matrix
    complex  u1   0 = real doubles, 1 = interleaved (re, im) doubles
    spin     f8
    L        u4   number of sites the object lives on
    nblocks  u4
    sector table, nblocks entries of (magnetization f8, dim u4);
        magnetization is NaN for an unblocked entry
    payload  f8[] blocks in table order, each row-major

A block with magnetization ``m`` covers the product-basis configurations of
total S^z ``m`` in ascending order; a NaN block covers the whole space.  A
state is stored as a single NaN block holding the vector.
"""
from __future__ import annotations

import math
import struct
from pathlib import Path
from typing import Union

import numpy as np

from .spectra import DensityMatrix, MatrixBlock, magnetizations

MAGIC = b"BWPC"
VERSION = 1
_HEADER = struct.Struct("<4sHBBdII")
_ENTRY = struct.Struct("<dI")


class ContainerError(ValueError):
    pass


def _payload(arrays, is_complex: bool) -> bytes:
    chunks = []
    for a in arrays:
        a = np.ascontiguousarray(a)
        if is_complex:
            a = np.ascontiguousarray(a, dtype="<c16").view("<f8")
        chunks.append(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return b"".join(chunks)


def dumps(obj: Union[np.ndarray, DensityMatrix], spin: float = 0.5, n_sites: int | None = None) -> bytes:
    if isinstance(obj, DensityMatrix):
        blocks = [(b.label, b.matrix) for b in obj.blocks]
        kind, spin, n_sites = 1, obj.spin, obj.n_sites
    else:
        vec = np.asarray(obj)
        if n_sites is None:
            n_sites = int(round(math.log(vec.size, 2 * spin + 1)))
        blocks = [(None, vec)]
        kind = 0
    is_complex = any(np.iscomplexobj(m) for _, m in blocks)
    head = _HEADER.pack(MAGIC, VERSION, kind, int(is_complex), float(spin), n_sites, len(blocks))
    table = b"".join(
        _ENTRY.pack(math.nan if label is None else float(label), m.shape[0]) for label, m in blocks)
    return head + table + _payload([m for _, m in blocks], is_complex)


def loads(data: bytes) -> Union[np.ndarray, DensityMatrix]:
    if len(data) < _HEADER.size:
        raise ContainerError("truncated header")
    magic, version, kind, is_complex, spin, n_sites, nblocks = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ContainerError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ContainerError(f"unsupported version {version}")
    offset = _HEADER.size
    table = []
    for _ in range(nblocks):
        table.append(_ENTRY.unpack_from(data, offset))
        offset += _ENTRY.size
    width = 2 if is_complex else 1
    mags = magnetizations(n_sites, spin)

    def take(count):
        nonlocal offset
        end = offset + 8 * width * count
        if end > len(data):
            raise ContainerError("truncated payload")
        arr = np.frombuffer(data[offset:end], dtype="<f8").astype(float)
        offset = end
        return arr.view(complex) if is_complex else arr

    if kind == 0:
        (_, dim), = table
        return take(dim)
    blocks = []
    for label, dim in table:
        mat = take(dim * dim).reshape(dim, dim)
        if math.isnan(label):
            blocks.append(MatrixBlock(None, np.arange(dim), mat))
        else:
            blocks.append(MatrixBlock(label, np.flatnonzero(mags == label), mat))
    if offset != len(data):
        raise ContainerError("trailing bytes after payload")
    return DensityMatrix(len(mags), n_sites, spin, tuple(blocks))


def save(path, obj, spin: float = 0.5, n_sites: int | None = None) -> None:
    Path(path).write_bytes(dumps(obj, spin, n_sites))


def load(path) -> Union[np.ndarray, DensityMatrix]:
    return loads(Path(path).read_bytes())
