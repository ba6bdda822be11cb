"""
Leitura e escrita de campos amostrados (WaveFunction e SpinField) em binário.

Layout little-endian:
    magic 'PFLD' | version u32 | kind u32 | dim u32 | points u32[dim]
    | extents f64[2*dim] | hbar f64 | (spin weight f64, só esfera)
    | payload re/im f64 intercalados, ordem C

kind: 0 periodic, 1 box-doubled, 2 open, 3 sphere.
Uso:
    from src.fieldio import write_field, read_field
    write_field('out/psi.pfld', psi)
    psi = read_field('out/psi.pfld')
"""

import logging
import math
import os

import numpy as np

from src.errors import GridError
from src.grids import BOUNDARIES, SphereGrid, make_sphere_grid, make_uniform_grid
from src.quantum import WaveFunction
from src.spin import SpinField

logger = logging.getLogger(__name__)

MAGIC = b"PFLD"
VERSION = 1
SPHERE_KIND = 3
U32 = np.dtype("<u4")
F64 = np.dtype("<f8")


def _header(field) -> bytes:
    grid = field.grid
    if isinstance(grid, SphereGrid):
        kind, dim, points = SPHERE_KIND, 2, grid.shape
        extents = [0.0, math.pi, 0.0, 2.0 * math.pi]
        tail = [field.hbar, grid.spin_weight]
    else:
        kind, dim, points = BOUNDARIES.index(grid.boundary), grid.dim, grid.points
        extents = [v for pair in grid.extents for v in pair]
        tail = [field.hbar]
    return (MAGIC
            + np.array([VERSION, kind, dim, *points], dtype=U32).tobytes()
            + np.array(extents + tail, dtype=F64).tobytes())


def write_field(path: str, field) -> str:
    """Grava o campo e retorna o caminho. Erros de I/O citam o caminho."""
    payload = np.empty(field.values.size * 2, dtype=F64)
    flat = np.ascontiguousarray(field.values).ravel()
    payload[0::2] = flat.real
    payload[1::2] = flat.imag
    os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
    try:
        with open(path, "wb") as fh:
            fh.write(_header(field))
            fh.write(payload.tobytes())
    except OSError as e:
        raise OSError(f"falha ao gravar campo em {path}: {e}") from e
    logger.debug("campo %s gravado em %s", field.values.shape, path)
    return path


def _take(buf: bytes, offset: int, dtype: np.dtype, count: int, path: str):
    end = offset + dtype.itemsize * count
    if end > len(buf):
        raise GridError(f"{path}: arquivo truncado")
    return np.frombuffer(buf, dtype=dtype, count=count, offset=offset), end


def read_field(path: str):
    """Lê um arquivo PFLD e devolve WaveFunction (grade cartesiana) ou SpinField (esfera)."""
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as e:
        raise OSError(f"falha ao ler campo de {path}: {e}") from e
    if buf[:4] != MAGIC:
        raise GridError(f"{path}: não é um arquivo PFLD")
    head, offset = _take(buf, 4, U32, 3, path)
    version, kind, dim = (int(v) for v in head)
    if version != VERSION:
        raise GridError(f"{path}: versão {version} não suportada")
    points, offset = _take(buf, offset, U32, dim, path)
    points = tuple(int(n) for n in points)
    n_floats = 2 * dim + (2 if kind == SPHERE_KIND else 1)
    floats, offset = _take(buf, offset, F64, n_floats, path)
    payload, _ = _take(buf, offset, F64, 2 * int(np.prod(points)), path)
    values = (payload[0::2] + 1j * payload[1::2]).reshape(points)
    hbar = float(floats[2 * dim])
    if kind == SPHERE_KIND:
        grid = make_sphere_grid(points[0] - 2, float(floats[2 * dim + 1]))
        if grid.shape != points:
            raise GridError(f"{path}: grade esférica inconsistente {points}")
        return SpinField(grid, values, hbar)
    if kind >= len(BOUNDARIES):
        raise GridError(f"{path}: tipo de grade {kind} desconhecido")
    extents = floats[: 2 * dim].reshape(dim, 2)
    grid = make_uniform_grid(dim, extents, points, BOUNDARIES[kind])
    return WaveFunction(grid, values, hbar)
