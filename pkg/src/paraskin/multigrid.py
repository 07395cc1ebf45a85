"""Geometric multigrid V-cycle for the backward-Euler stencil systems.

Levels are built by halving each axis (rounding up) and re-assembling the
operator from a block-averaged coefficient field. Transfers are piecewise
constant: restriction averages the up-to-eight child cells, prolongation
injects the parent value. Smoothing is damped Jacobi; the coarsest level is
solved directly by dense LU with partial pivoting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .discretization import (
    BoundarySpec,
    StateVector,
    StencilOperator,
    apply_matrix,
    to_dense,
)
from .errors import GridMismatchError, SingularMatrixError
from .grid import CoefficientField, Grid3D
from . import discretization


@dataclass(frozen=True)
class MGConfig:
    """Solver settings; the defaults are the ones used throughout."""

    omega: float = 0.6
    pre_smooth: int = 3
    post_smooth: int = 3
    max_cycles: int = 50
    rel_tol: float = 1e-8
    coarsest_max_unknowns: int = 4096

    def __post_init__(self):
        if not 0.0 < self.omega < 1.0:
            raise ValueError("omega must lie in (0, 1)")
        if self.pre_smooth < 1 or self.post_smooth < 1:
            raise ValueError("smoothing step counts must be >= 1")
        if self.rel_tol <= 0.0:
            raise ValueError("rel_tol must be positive")


@dataclass
class Level:
    grid: Grid3D
    coefficients: np.ndarray
    op: StencilOperator


@dataclass
class MGResult:
    state: StateVector
    cycles: int
    residual_history: list[float]
    converged: bool


def coarsen_grid(grid: Grid3D) -> Grid3D:
    """Half the cells per axis (rounding up); the domain extent is preserved."""
    nx = (grid.nx + 1) // 2
    ny = (grid.ny + 1) // 2
    nz = (grid.nz + 1) // 2
    return Grid3D(
        nx,
        ny,
        nz,
        grid.nx * grid.hx / nx,
        grid.ny * grid.hy / ny,
        grid.nz * grid.hz / nz,
        grid.origin,
    )


def _average_pairs(a: np.ndarray, axis: int) -> np.ndarray:
    """Mean of index pairs (2i, 2i+1) along one axis; a lone tail cell passes through."""
    n = a.shape[axis]
    even = n - (n % 2)
    head = a.take(range(0, even, 2), axis=axis)
    if even:
        head = 0.5 * (head + a.take(range(1, even, 2), axis=axis))
    if n % 2:
        head = np.concatenate([head, a.take([n - 1], axis=axis)], axis=axis)
    return head


def block_average(fine3: np.ndarray) -> np.ndarray:
    out = fine3
    for axis in (0, 1, 2):
        out = _average_pairs(out, axis)
    return out


def block_inject(coarse3: np.ndarray, fine_shape: tuple[int, int, int]) -> np.ndarray:
    out = coarse3
    for axis in (0, 1, 2):
        out = np.repeat(out, 2, axis=axis)
    return np.ascontiguousarray(out[: fine_shape[0], : fine_shape[1], : fine_shape[2]])


class MGHierarchy:
    """Immutable ladder of grids/operators for one (field, bc, dt) triple."""

    def __init__(self, field: CoefficientField, bc: BoundarySpec, dt: float, cfg: MGConfig):
        self.bc = bc
        self.dt = dt
        self.cfg = cfg
        self.levels: list[Level] = []
        grid = field.grid
        coeffs = field.values3d()
        while True:
            op = discretization.assemble(CoefficientField(grid, coeffs.reshape(-1)), bc, dt)
            self.levels.append(Level(grid, coeffs, op))
            if grid.n_cells <= cfg.coarsest_max_unknowns:
                break
            coarse_grid = coarsen_grid(grid)
            if coarse_grid.n_cells >= grid.n_cells:
                break
            coeffs = block_average(coeffs)
            grid = coarse_grid
        self._coarse_lu = None

    @property
    def fine_grid(self) -> Grid3D:
        return self.levels[0].grid

    def coarse_factorization(self):
        if self._coarse_lu is None:
            dense = to_dense(self.levels[-1].op)
            self._coarse_lu = _lu_factor(dense)
        return self._coarse_lu


def build_hierarchy(
    field: CoefficientField, bc: BoundarySpec, dt: float, cfg: MGConfig | None = None
) -> MGHierarchy:
    return MGHierarchy(field, bc, dt, cfg or MGConfig())


def _lu_factor(dense: np.ndarray):
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(dense, check_finite=False)
    if np.any(np.abs(np.diag(lu)) == 0.0):
        raise SingularMatrixError("coarse system is singular")
    return lu, piv


def _jacobi(op: StencilOperator, x3: np.ndarray, b3: np.ndarray, omega: float, steps: int) -> np.ndarray:
    assert np.all(op.center != 0.0), "operator has zero diagonal"
    for _ in range(steps):
        x3 = x3 + omega * (b3 - apply_matrix(op, x3)) / op.center
    return x3


def smooth(op: StencilOperator, x: StateVector, b: StateVector, omega: float, steps: int) -> StateVector:
    """Damped Jacobi sweeps for ``A x = b``; ``steps=0`` returns ``x`` unchanged."""
    if steps < 0:
        raise ValueError("steps must be >= 0")
    if x.grid != op.grid or b.grid != op.grid:
        raise GridMismatchError("smooth operands must share the operator grid")
    out = _jacobi(op, x.values3d().copy(), b.values3d(), omega, steps)
    return StateVector(op.grid, out.reshape(-1), x.time)


def restrict(fine: StateVector, coarse_grid: Grid3D) -> StateVector:
    if coarsen_grid(fine.grid).shape != coarse_grid.shape:
        raise GridMismatchError("target grid is not the coarsening of the source grid")
    return StateVector(coarse_grid, block_average(fine.values3d()).reshape(-1), fine.time)


def prolong(coarse: StateVector, fine_grid: Grid3D) -> StateVector:
    if coarsen_grid(fine_grid).shape != coarse.grid.shape:
        raise GridMismatchError("source grid is not the coarsening of the target grid")
    return StateVector(fine_grid, block_inject(coarse.values3d(), fine_grid.shape).reshape(-1), coarse.time)


def coarse_solve(op: StencilOperator, b: StateVector, factorization=None) -> StateVector:
    """Direct dense solve of ``A x = b``."""
    if b.grid != op.grid:
        raise GridMismatchError("right-hand side grid differs from operator grid")
    if factorization is None:
        factorization = _lu_factor(to_dense(op))
    x = scipy.linalg.lu_solve(factorization, b.values, check_finite=False)
    return StateVector(op.grid, x, b.time)


def _v_cycle(
    hierarchy: MGHierarchy, level: int, x3: np.ndarray, b3: np.ndarray, cfg: MGConfig
) -> np.ndarray:
    lev = hierarchy.levels[level]
    if level == len(hierarchy.levels) - 1:
        rhs = StateVector(lev.grid, b3.reshape(-1).copy())
        return coarse_solve(lev.op, rhs, hierarchy.coarse_factorization()).values3d()
    x3 = _jacobi(lev.op, x3, b3, cfg.omega, cfg.pre_smooth)
    r3 = b3 - apply_matrix(lev.op, x3)
    rc = block_average(r3)
    ec = _v_cycle(hierarchy, level + 1, np.zeros_like(rc), rc, cfg)
    x3 = x3 + block_inject(ec, lev.grid.shape)
    return _jacobi(lev.op, x3, b3, cfg.omega, cfg.post_smooth)


def solve(
    hierarchy: MGHierarchy,
    b: StateVector,
    x0: StateVector | None = None,
    cfg: MGConfig | None = None,
) -> MGResult:
    """V-cycle until the relative residual drops below ``rel_tol``.

    Exhausting ``max_cycles`` is reported through ``converged=False`` rather
    than an exception so that callers running with loose budgets can decide
    what to do with the iterate.
    """
    cfg = cfg or hierarchy.cfg
    op = hierarchy.levels[0].op
    if b.grid != op.grid:
        raise GridMismatchError("right-hand side grid differs from hierarchy grid")
    x = StateVector.zeros(op.grid, b.time) if x0 is None else x0
    if x.grid != op.grid:
        raise GridMismatchError("initial guess grid differs from hierarchy grid")

    b3 = b.values3d()
    x3 = x.values3d().copy()
    bnorm = float(np.linalg.norm(b3))
    target = cfg.rel_tol * (bnorm if bnorm > 0.0 else 1.0)

    res = float(np.linalg.norm(b3 - apply_matrix(op, x3)))
    history = [res]
    cycles = 0
    while res > target and cycles < cfg.max_cycles:
        x3 = _v_cycle(hierarchy, 0, x3, b3, cfg)
        res = float(np.linalg.norm(b3 - apply_matrix(op, x3)))
        history.append(res)
        cycles += 1
    state = StateVector(op.grid, x3.reshape(-1), x.time)
    return MGResult(state, cycles, history, res <= target)
