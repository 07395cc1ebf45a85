"""Structured 3D grid, brick-and-mortar phase layout, and coefficient fields.

The computational domain is a box of ``nx * ny * nz`` equal cells. Cells are
addressed by ``(i, j, k)`` with ``0 <= i < nx`` along x and so on; the linear
index is x-fastest, ``lin = i + nx * (j + ny * k)``, which matches the raveled
order of an array of shape ``(nz, ny, nx)``.

The membrane geometry is a stack of flat "brick" slabs (corneocytes, low
diffusivity) separated on all sides by thin "mortar" channels (lipid, high
diffusivity). Successive slabs are shifted laterally so the channels zig-zag.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, ResolutionError

LIPID = 0
CORNEOCYTE = 1

PHASE_NAMES = {LIPID: "lipid", CORNEOCYTE: "corneocyte"}


@dataclass(frozen=True)
class Grid3D:
    """Uniform cell-centered grid.

    ``nx, ny, nz`` are cell counts, ``hx, hy, hz`` cell widths. Degenerate
    axes (a single cell) are allowed so quasi-1D columns can be built for
    validation runs.
    """

    nx: int
    ny: int
    nz: int
    hx: float
    hy: float
    hz: float
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if min(self.nx, self.ny, self.nz) < 1:
            raise ValueError("cell counts must be >= 1")
        if min(self.hx, self.hy, self.hz) <= 0.0:
            raise ValueError("cell widths must be positive")

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny * self.nz

    @property
    def shape(self) -> tuple[int, int, int]:
        """Array shape (nz, ny, nx) whose ravel order is the linear index."""
        return (self.nz, self.ny, self.nx)

    @property
    def extent(self) -> tuple[float, float, float]:
        return (self.nx * self.hx, self.ny * self.hy, self.nz * self.hz)

    def linear_index(self, i: int, j: int, k: int) -> int:
        return i + self.nx * (j + self.ny * k)

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-axis center coordinates (1D arrays of length nx, ny, nz)."""
        ox, oy, oz = self.origin
        xs = ox + (np.arange(self.nx) + 0.5) * self.hx
        ys = oy + (np.arange(self.ny) + 0.5) * self.hy
        zs = oz + (np.arange(self.nz) + 0.5) * self.hz
        return xs, ys, zs


@dataclass(frozen=True)
class BrickMortarSpec:
    """Layout parameters of the biphasic membrane.

    ``brick_extent`` is the corneocyte box (x, y, z) in length units; the
    default corresponds to a 40 x 40 x 1 slab in units of ``mortar_width``.
    ``stagger_offset`` shifts each successive layer laterally by that
    fraction of the brick pitch (brick extent plus one channel).
    """

    layers: int = 10
    brick_extent: tuple[float, float, float] = (40.0, 40.0, 1.0)
    mortar_width: float = 1.0
    stagger_offset: float = 0.5
    d_cor: float = 1e-3
    d_lip: float = 1.0

    def __post_init__(self):
        if self.layers < 1:
            raise GeometryError("layers must be >= 1")
        if self.mortar_width <= 0.0:
            raise GeometryError("mortar_width must be positive")
        if min(self.brick_extent) <= 0.0:
            raise GeometryError("brick_extent components must be positive")
        if not 0.0 <= self.stagger_offset < 1.0:
            raise ValueError("stagger_offset must lie in [0, 1)")
        if self.d_cor <= 0.0 or self.d_lip <= 0.0:
            raise ValueError("diffusion coefficients must be positive")

    @property
    def pitch(self) -> tuple[float, float]:
        """Lateral repeat distances (brick plus one channel)."""
        bx, by, _ = self.brick_extent
        return (bx + self.mortar_width, by + self.mortar_width)

    @property
    def stack_height(self) -> float:
        """Total height of the layered structure including bounding channels."""
        _, _, bz = self.brick_extent
        return self.layers * (bz + self.mortar_width) + self.mortar_width


@dataclass(frozen=True)
class CoefficientField:
    """Piecewise-constant diffusion coefficient, one value per cell.

    ``phase`` labels each cell LIPID or CORNEOCYTE for rasterized layouts;
    derived fields (e.g. coarsened averages) carry ``phase=None``.
    """

    grid: Grid3D
    values: np.ndarray
    phase: np.ndarray | None = None

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.shape != (self.grid.n_cells,):
            raise ValueError("values must hold one coefficient per cell")
        if not np.all(values > 0.0):
            raise ValueError("coefficients must be strictly positive")
        if self.phase is not None and self.phase.shape != values.shape:
            raise ValueError("phase must hold one label per cell")

    def values3d(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)


def uniform_field(grid: Grid3D, value: float) -> CoefficientField:
    """Homogeneous coefficient field (all cells lipid by convention)."""
    return CoefficientField(
        grid,
        np.full(grid.n_cells, float(value)),
        np.full(grid.n_cells, LIPID, dtype=np.uint8),
    )


def build_brick_mortar(spec: BrickMortarSpec, grid: Grid3D) -> CoefficientField:
    """Rasterize the brick-and-mortar layout onto ``grid``.

    Each cell is classified by its center point. The lateral pattern repeats
    with the brick pitch, layer ``l`` shifted by ``l * stagger_offset`` pitches,
    so bricks cut off at one lateral wall reappear at the opposite one and the
    corneocyte volume per layer is exact. Raises :class:`ResolutionError` when
    a channel could fall between cell centers and :class:`GeometryError` when
    the stack does not fit the domain height.
    """
    m = spec.mortar_width
    bx, by, bz = spec.brick_extent
    if grid.hz > m or grid.hx > m or grid.hy > m:
        raise ResolutionError(
            f"cell widths ({grid.hx}, {grid.hy}, {grid.hz}) must not exceed "
            f"the channel width {m}"
        )
    height = grid.nz * grid.hz
    if height < spec.stack_height:
        raise GeometryError(
            f"domain height {height} cannot hold {spec.layers} layers "
            f"(need {spec.stack_height})"
        )

    xs, ys, zs = grid.cell_centers()
    ox, oy, oz = grid.origin
    xs = xs - ox
    ys = ys - oy
    zs = zs - oz

    # Vertical structure: a channel below each layer and one above the stack.
    period_z = bz + m
    s = zs - m
    layer = np.floor(s / period_z).astype(int)
    in_brick_z = (s >= 0.0) & (layer < spec.layers) & (s - layer * period_z < bz)

    px, py = spec.pitch
    lateral = np.zeros((grid.ny, grid.nx), dtype=bool)
    phase3d = np.full(grid.shape, LIPID, dtype=np.uint8)
    for k in range(grid.nz):
        if not in_brick_z[k]:
            continue
        # Offsets in length units: exact for grid-aligned layouts, where a
        # scaled mod would round cell centers across the phase boundary.
        shift = layer[k] * spec.stagger_offset
        ux = np.mod(xs - shift * px, px)
        uy = np.mod(ys - shift * py, py)
        np.logical_and(uy[:, None] < by, ux[None, :] < bx, out=lateral)
        phase3d[k][lateral] = CORNEOCYTE

    phase = phase3d.reshape(-1)
    values = np.where(phase == CORNEOCYTE, spec.d_cor, spec.d_lip)
    return CoefficientField(grid, values, phase)


def lag_time(membrane_thickness: float, d_eff: float) -> float:
    """Characteristic diffusion time of a membrane: thickness^2 / (6 d_eff)."""
    if membrane_thickness <= 0.0 or d_eff <= 0.0:
        raise ValueError("membrane thickness and d_eff must be positive")
    return membrane_thickness**2 / (6.0 * d_eff)


def effective_coefficient_1d(field: CoefficientField) -> float:
    """Effective transverse coefficient of a layered field.

    Averages the coefficient laterally within each z-slab and combines the
    slabs in series (harmonic mean along z). The result lies between the
    smallest and largest cell value.
    """
    profile = field.values3d().mean(axis=(1, 2))
    return float(len(profile) / np.sum(1.0 / profile))


def swap_phases(spec: BrickMortarSpec) -> BrickMortarSpec:
    """Same layout with the two coefficients exchanged."""
    return BrickMortarSpec(
        layers=spec.layers,
        brick_extent=spec.brick_extent,
        mortar_width=spec.mortar_width,
        stagger_offset=spec.stagger_offset,
        d_cor=spec.d_lip,
        d_lip=spec.d_cor,
    )
