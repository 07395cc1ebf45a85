"""Cell-centered finite-volume discretization of div(D grad c).

Face coefficients are harmonic means of the adjacent cell values, which keeps
the discrete flux single-valued across coefficient jumps. Dirichlet data on
the top and bottom z-faces is eliminated through ghost values at half a cell
width; the lateral walls are zero-flux.

The assembled object represents the backward-Euler system matrix
``A = I - dt*L`` (L being the discrete diffusion operator) as a symmetric
7-point stencil plus the constant right-hand-side contribution of the
Dirichlet faces: a step solves ``A c_new = c_old + constant``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridMismatchError
from .grid import CoefficientField, Grid3D


@dataclass(frozen=True)
class BoundarySpec:
    """Dirichlet values on the top/bottom z-faces; lateral walls are zero-flux."""

    top: float = 1.0
    bottom: float = 0.0
    lateral: str = "neumann"

    def __post_init__(self):
        if self.lateral != "neumann":
            raise ValueError("only homogeneous Neumann lateral walls are supported")


@dataclass
class StateVector:
    """Cell-centered concentration field at one time instant."""

    grid: Grid3D
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_cells,):
            raise ValueError("values must hold one entry per cell")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("state contains non-finite values")

    @classmethod
    def zeros(cls, grid: Grid3D, time: float = 0.0) -> "StateVector":
        return cls(grid, np.zeros(grid.n_cells), time)

    def values3d(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)

    def copy(self) -> "StateVector":
        return StateVector(self.grid, self.values.copy(), self.time)

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


@dataclass(frozen=True)
class StencilOperator:
    """Backward-Euler system ``A = I - dt*L`` as a symmetric 7-point stencil.

    ``center`` holds the diagonal, ``tx/ty/tz`` the (positive) coupling of
    each interior face, already scaled by dt; the off-diagonal entry for a
    face is minus its coupling. ``constant`` is the Dirichlet contribution
    moved to the right-hand side. All arrays have grid shape ``(nz, ny, nx)``
    except the face arrays, which are one short along their axis.
    """

    grid: Grid3D
    dt: float
    center: np.ndarray
    tx: np.ndarray
    ty: np.ndarray
    tz: np.ndarray
    constant: np.ndarray

    @property
    def diagonal(self) -> np.ndarray:
        return self.center

    def constant_vector(self) -> np.ndarray:
        return self.constant.reshape(-1)


def face_coefficient(d_left, d_right):
    """Harmonic mean 2ab/(a+b) of two positive coefficients (scalar or array)."""
    d_left = np.asarray(d_left, dtype=float)
    d_right = np.asarray(d_right, dtype=float)
    if np.any(d_left <= 0.0) or np.any(d_right <= 0.0):
        raise ValueError("face coefficients require positive inputs")
    out = 2.0 * d_left * d_right / (d_left + d_right)
    return float(out) if out.ndim == 0 else out


def assemble(field: CoefficientField, bc: BoundarySpec, dt: float) -> StencilOperator:
    """Assemble ``I - dt*L`` for the given coefficients and boundary data."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    grid = field.grid
    d3 = field.values3d()

    tx = dt * face_coefficient(d3[:, :, :-1], d3[:, :, 1:]) / grid.hx**2
    ty = dt * face_coefficient(d3[:, :-1, :], d3[:, 1:, :]) / grid.hy**2
    tz = dt * face_coefficient(d3[:-1, :, :], d3[1:, :, :]) / grid.hz**2

    center = np.ones(grid.shape)
    center[:, :, :-1] += tx
    center[:, :, 1:] += tx
    center[:, :-1, :] += ty
    center[:, 1:, :] += ty
    center[:-1, :, :] += tz
    center[1:, :, :] += tz

    # Dirichlet faces: ghost value at distance hz/2 from the boundary cell.
    constant = np.zeros(grid.shape)
    t_bottom = dt * 2.0 * d3[0] / grid.hz**2
    t_top = dt * 2.0 * d3[-1] / grid.hz**2
    center[0] += t_bottom
    center[-1] += t_top
    constant[0] += t_bottom * bc.bottom
    constant[-1] += t_top * bc.top

    return StencilOperator(grid, dt, center, tx, ty, tz, constant)


def _require_same_grid(op: StencilOperator, state: StateVector):
    if state.grid != op.grid:
        raise GridMismatchError("state grid differs from operator grid")


def apply_matrix(op: StencilOperator, x3: np.ndarray) -> np.ndarray:
    """Pure stencil product ``A x`` on a grid-shaped array."""
    y = op.center * x3
    y[:, :, 1:] -= op.tx * x3[:, :, :-1]
    y[:, :, :-1] -= op.tx * x3[:, :, 1:]
    y[:, 1:, :] -= op.ty * x3[:, :-1, :]
    y[:, :-1, :] -= op.ty * x3[:, 1:, :]
    y[1:, :, :] -= op.tz * x3[:-1, :, :]
    y[:-1, :, :] -= op.tz * x3[1:, :, :]
    return y


def apply(op: StencilOperator, x: StateVector) -> StateVector:
    """Affine action ``A x - constant`` (zero for the exact step solution)."""
    _require_same_grid(op, x)
    y = apply_matrix(op, x.values3d()) - op.constant
    return StateVector(op.grid, y.reshape(-1), x.time)


def residual(op: StencilOperator, x: StateVector, b: StateVector) -> tuple[StateVector, float]:
    """``b - (A x - constant)`` and its Euclidean norm."""
    _require_same_grid(op, x)
    _require_same_grid(op, b)
    r = b.values3d() - (apply_matrix(op, x.values3d()) - op.constant)
    r = r.reshape(-1)
    return StateVector(op.grid, r, b.time), float(np.linalg.norm(r))


def to_dense(op: StencilOperator) -> np.ndarray:
    """Dense matrix of the stencil (linear part only). For small systems."""
    grid = op.grid
    n = grid.n_cells
    a = np.zeros((n, n))
    a[np.arange(n), np.arange(n)] = op.center.reshape(-1)

    def couple(t: np.ndarray, stride: int, shape_slices):
        idx = np.zeros(grid.shape, dtype=bool)
        idx[shape_slices] = True
        rows = np.flatnonzero(idx.reshape(-1))
        vals = t.reshape(-1)
        a[rows, rows + stride] = -vals
        a[rows + stride, rows] = -vals

    if grid.nx > 1:
        couple(op.tx, 1, (slice(None), slice(None), slice(0, grid.nx - 1)))
    if grid.ny > 1:
        couple(op.ty, grid.nx, (slice(None), slice(0, grid.ny - 1), slice(None)))
    if grid.nz > 1:
        couple(op.tz, grid.nx * grid.ny, (slice(0, grid.nz - 1), slice(None), slice(None)))
    return a


def interior_row_defect(op: StencilOperator) -> float:
    """Max |row sum - 1| over rows without Dirichlet coupling (zero for exact L)."""
    grid = op.grid
    rowsum = op.center.copy()
    rowsum[:, :, 1:] -= op.tx
    rowsum[:, :, :-1] -= op.tx
    rowsum[:, 1:, :] -= op.ty
    rowsum[:, :-1, :] -= op.ty
    rowsum[1:, :, :] -= op.tz
    rowsum[:-1, :, :] -= op.tz
    interior = rowsum[1:-1] if grid.nz > 2 else rowsum[0:0]
    if interior.size == 0:
        return 0.0
    return float(np.max(np.abs(interior - 1.0)))


def is_m_matrix(op: StencilOperator) -> bool:
    """Positive diagonal, non-positive off-diagonals, strict row dominance."""
    if not np.all(op.center > 0.0):
        return False
    for t in (op.tx, op.ty, op.tz):
        if t.size and not np.all(t >= 0.0):
            return False
    dominance = op.center.copy()
    dominance[:, :, 1:] -= op.tx
    dominance[:, :, :-1] -= op.tx
    dominance[:, 1:, :] -= op.ty
    dominance[:, :-1, :] -= op.ty
    dominance[1:, :, :] -= op.tz
    dominance[:-1, :, :] -= op.tz
    return bool(np.all(dominance > 0.0))
