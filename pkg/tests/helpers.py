"""Shared test utilities: independent oracles and canned problems.

The oracles here deliberately re-derive results through different code paths
than the package (explicit loops, box enumeration, dense algebra) so the
tests do not just compare an implementation with itself.
"""

from __future__ import annotations

import numpy as np

from paraskin import BoundarySpec, BrickMortarSpec, Grid3D, StateVector, build_brick_mortar
from paraskin.grid import CORNEOCYTE, LIPID, effective_coefficient_1d, lag_time


def dense_system_oracle(values: np.ndarray, grid: Grid3D, bc: BoundarySpec, dt: float):
    """Dense (I - dt*L, dirichlet rhs) assembled cell by cell with loops."""
    n = grid.n_cells
    a = np.zeros((n, n))
    rhs_const = np.zeros(n)
    d = values.reshape(grid.nz, grid.ny, grid.nx)

    def lin(i, j, k):
        return i + grid.nx * (j + grid.ny * k)

    neighbors = (
        (1, 0, 0, grid.hx),
        (-1, 0, 0, grid.hx),
        (0, 1, 0, grid.hy),
        (0, -1, 0, grid.hy),
        (0, 0, 1, grid.hz),
        (0, 0, -1, grid.hz),
    )
    for k in range(grid.nz):
        for j in range(grid.ny):
            for i in range(grid.nx):
                row = lin(i, j, k)
                a[row, row] = 1.0
                for di, dj, dk, h in neighbors:
                    ii, jj, kk = i + di, j + dj, k + dk
                    if 0 <= ii < grid.nx and 0 <= jj < grid.ny and 0 <= kk < grid.nz:
                        dl, dr = d[k, j, i], d[kk, jj, ii]
                        w = dt * (2.0 * dl * dr / (dl + dr)) / h**2
                        a[row, row] += w
                        a[row, lin(ii, jj, kk)] -= w
                    elif dk == -1:
                        w = dt * 2.0 * d[k, j, i] / grid.hz**2
                        a[row, row] += w
                        rhs_const[row] += w * bc.bottom
                    elif dk == 1:
                        w = dt * 2.0 * d[k, j, i] / grid.hz**2
                        a[row, row] += w
                        rhs_const[row] += w * bc.top
                    # lateral faces: homogeneous Neumann, no contribution
    return a, rhs_const


def brick_phase_oracle(spec: BrickMortarSpec, grid: Grid3D) -> np.ndarray:
    """Classify cell centers by enumerating brick boxes explicitly."""
    m = spec.mortar_width
    bx, by, bz = spec.brick_extent
    px, py = bx + m, by + m
    xs, ys, zs = grid.cell_centers()
    phase = np.full((grid.nz, grid.ny, grid.nx), LIPID, dtype=np.uint8)

    def in_period(coord, shift, pitch, extent, domain):
        starts = []
        n0 = int(np.floor((-shift) / pitch)) - 1
        n1 = int(np.ceil((domain - shift) / pitch)) + 1
        for n in range(n0, n1 + 1):
            starts.append(shift + n * pitch)
        return any(s <= coord < s + extent for s in starts)

    for layer in range(spec.layers):
        z0 = m + layer * (bz + m)
        sx = (layer * spec.stagger_offset * px) % px
        sy = (layer * spec.stagger_offset * py) % py
        for k, z in enumerate(zs):
            if not z0 <= z < z0 + bz:
                continue
            for j, y in enumerate(ys):
                if not in_period(y, sy, py, by, grid.ny * grid.hy):
                    continue
                for i, x in enumerate(xs):
                    if in_period(x, sx, px, bx, grid.nx * grid.hx):
                        phase[k, j, i] = CORNEOCYTE
    return phase.reshape(-1)


def desk_problem(nx=40, ny=40, nz=42, hz=0.5, layers=10):
    """Brick-and-mortar benchmark problem sized for a workstation."""
    grid = Grid3D(nx, ny, nz, 1.0, 1.0, hz)
    spec = BrickMortarSpec(layers=layers, brick_extent=(4.0, 4.0, 1.0), mortar_width=1.0)
    field = build_brick_mortar(spec, grid)
    bc = BoundarySpec()
    t_end = lag_time(nz * hz, effective_coefficient_1d(field))
    return grid, spec, field, bc, t_end


def small_problem(n=16, layers=7):
    """16^3-style variant used by the fast engine tests."""
    grid = Grid3D(n, n, n, 1.0, 1.0, 1.0)
    spec = BrickMortarSpec(layers=layers, brick_extent=(4.0, 4.0, 1.0), mortar_width=1.0)
    field = build_brick_mortar(spec, grid)
    bc = BoundarySpec()
    t_end = lag_time(grid.nz * grid.hz, effective_coefficient_1d(field))
    return grid, spec, field, bc, t_end


def zero_state(grid: Grid3D) -> StateVector:
    return StateVector.zeros(grid)
