# src/tests/test_fieldio.py
import math

import numpy as np
import pytest

from src.errors import GridError
from src.fieldio import MAGIC, read_field, write_field
from src.grids import make_sphere_grid, make_uniform_grid
from src.quantum import WaveFunction, coherent_state
from src.spin import SpinField, plus_state


def test_wavefunction_file_layout(tmp_path):
    grid = make_uniform_grid(1, (-8.0, 8.0), 32)
    psi = coherent_state(grid, 1.0, 0.5, hbar=0.5)
    path = write_field(str(tmp_path / "out" / "psi.pfld"), psi)
    raw = open(path, "rb").read()
    assert raw[:4] == MAGIC
    # magic + (version, kind, dim, points) + (2 extents, hbar) + 32 complex samples
    assert len(raw) == 4 + 4 * 4 + 8 * 3 + 16 * 32
    assert np.frombuffer(raw, dtype="<u4", count=4, offset=4).tolist() == [1, 0, 1, 32]
    back = read_field(path)
    assert isinstance(back, WaveFunction)
    assert back.grid == grid
    assert back.hbar == 0.5
    assert np.array_equal(back.values, psi.values)


def test_box_and_2d_grids_keep_their_kind(tmp_path):
    grid = make_uniform_grid(2, (0.0, math.pi), 8, "box-doubled")
    values = np.arange(64, dtype=float).reshape(8, 8) * (1 + 1j)
    back = read_field(write_field(str(tmp_path / "box.pfld"), WaveFunction(grid, values)))
    assert back.grid.boundary == "box-doubled"
    assert back.grid.points == (8, 8)
    assert np.array_equal(back.values, values)


def test_sphere_field_carries_spin_weight(tmp_path):
    grid = make_sphere_grid(6, 0.5)
    state = plus_state(grid)
    back = read_field(write_field(str(tmp_path / "plus.pfld"), state))
    assert isinstance(back, SpinField)
    assert back.spin_weight == 0.5
    assert back.grid.shape == grid.shape
    assert np.array_equal(back.values, state.values)


def test_corrupt_files_are_rejected(tmp_path):
    bad = tmp_path / "bad.pfld"
    bad.write_bytes(b"NOPE" + bytes(32))
    with pytest.raises(GridError):
        read_field(str(bad))
    grid = make_uniform_grid(1, (0.0, 1.0), 16)
    path = write_field(str(tmp_path / "cut.pfld"), WaveFunction(grid, np.ones(16)))
    data = open(path, "rb").read()
    truncated = tmp_path / "truncated.pfld"
    truncated.write_bytes(data[:-8])
    with pytest.raises(GridError):
        read_field(str(truncated))
    with pytest.raises(OSError):
        read_field(str(tmp_path / "missing.pfld"))
