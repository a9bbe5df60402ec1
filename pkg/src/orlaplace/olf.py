"""Binary field file format "OLF1".

Layout, all little-endian:

    4 bytes   magic "OLF1"
    u32       nx
    u32       ny
    f64       h
    f64       x0
    f64       y0
    u32       component count (1 scalar, 2 vector, 4 matrix)
    f64[...]  components, each nx*ny values row-major (y-major, x-minor)

Round-trips are bit-exact.
"""

from __future__ import annotations

import struct

import numpy as np

from .fields import Grid2D, MatrixField, ScalarField, VectorField2

__all__ = ["write_field", "read_field", "MAGIC"]

MAGIC = b"OLF1"
_HEADER = struct.Struct("<4sIIdddI")


def _components(field):
    if isinstance(field, ScalarField):
        return [field.values]
    if isinstance(field, VectorField2):
        return [field.vx, field.vy]
    if isinstance(field, MatrixField):
        return [field.m11, field.m12, field.m21, field.m22]
    raise TypeError(f"unsupported field type {type(field).__name__}")


def write_field(path, field) -> None:
    g = field.grid
    comps = _components(field)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, g.nx, g.ny, g.h, g.x0, g.y0, len(comps)))
        for c in comps:
            fh.write(np.ascontiguousarray(c, dtype="<f8").tobytes())


def read_field(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, nx, ny, h, x0, y0, count = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise ValueError(f"not an OLF1 file: bad magic {magic!r}")
    if count not in (1, 2, 4):
        raise ValueError(f"bad component count {count}")
    grid = Grid2D(nx, ny, h, x0, y0)
    need = _HEADER.size + count * nx * ny * 8
    if len(raw) != need:
        raise ValueError(f"truncated OLF1 file: {len(raw)} bytes, expected {need}")
    comps = []
    off = _HEADER.size
    for _ in range(count):
        arr = np.frombuffer(raw, dtype="<f8", count=nx * ny, offset=off)
        comps.append(arr.reshape(ny, nx).astype(float))
        off += nx * ny * 8
    if count == 1:
        return ScalarField(grid, comps[0])
    if count == 2:
        return VectorField2(grid, *comps)
    return MatrixField(grid, *comps)
