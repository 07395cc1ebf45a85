"""ASCII ``.field`` I/O for coefficient fields and state snapshots.

Layout: a header line ``nx ny nz hx hy hz``, for snapshots an extra line
``time=<value>``, then one value per line in x-fastest cell order.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .discretization import StateVector
from .grid import CoefficientField, Grid3D

FIELD_SUFFIX = ".field"


def _header(grid: Grid3D) -> str:
    return f"{grid.nx} {grid.ny} {grid.nz} {grid.hx!r} {grid.hy!r} {grid.hz!r}"


def _format_values(values: np.ndarray) -> str:
    return "\n".join(repr(float(v)) for v in values)


def write_coefficient_field(field: CoefficientField, path: str | Path) -> Path:
    path = Path(path)
    text = _header(field.grid) + "\n" + _format_values(field.values) + "\n"
    path.write_text(text)
    return path


def write_state(state: StateVector, path: str | Path) -> Path:
    path = Path(path)
    text = (
        _header(state.grid)
        + f"\ntime={state.time!r}\n"
        + _format_values(state.values)
        + "\n"
    )
    path.write_text(text)
    return path


def _parse(path: Path) -> tuple[Grid3D, float | None, np.ndarray]:
    lines = path.read_text().splitlines()
    parts = lines[0].split()
    if len(parts) != 6:
        raise ValueError(f"{path}: malformed header {lines[0]!r}")
    nx, ny, nz = (int(p) for p in parts[:3])
    hx, hy, hz = (float(p) for p in parts[3:])
    grid = Grid3D(nx, ny, nz, hx, hy, hz)
    body = 1
    time = None
    if len(lines) > 1 and lines[1].startswith("time="):
        time = float(lines[1][len("time="):])
        body = 2
    values = np.array([float(line) for line in lines[body:] if line.strip()])
    if values.shape != (grid.n_cells,):
        raise ValueError(f"{path}: expected {grid.n_cells} values, got {values.size}")
    return grid, time, values


def read_coefficient_field(path: str | Path) -> CoefficientField:
    grid, _, values = _parse(Path(path))
    return CoefficientField(grid, values)


def read_state(path: str | Path) -> StateVector:
    grid, time, values = _parse(Path(path))
    return StateVector(grid, values, 0.0 if time is None else time)
