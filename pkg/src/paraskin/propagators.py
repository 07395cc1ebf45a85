"""Backward-Euler time integrators with per-step cost instrumentation.

A coarse and a fine propagator differ only in step size (and possibly solver
budget). Each step solves ``(I - dt*L) c_new = c_old + dirichlet`` with the
multigrid solver, warm-started from the previous state; warm starts are what
makes late, near-steady steps cheap and thereby creates the cost imbalance
across time that the performance models quantify.
"""

from __future__ import annotations

import time as _time
from dataclasses import dataclass, field as dc_field
from functools import cached_property

from . import multigrid
from .discretization import BoundarySpec, StateVector
from .errors import StepFailure
from .grid import CoefficientField
from .multigrid import MGConfig

COARSE = "coarse"
FINE = "fine"


@dataclass(frozen=True)
class PropagatorSpec:
    """Step size plus solver settings for one integrator.

    ``cost_per_step`` replaces the recorded wall time with a fixed value
    (deterministic simulated clock); ``min_step_seconds`` pads each step with
    a real sleep. Both exist for controlled-cost benchmark experiments and
    are off by default.
    """

    dt: float
    mg_cfg: MGConfig = MGConfig()
    label: str = FINE
    cost_per_step: float | None = None
    min_step_seconds: float | None = None

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.label not in (COARSE, FINE):
            raise ValueError(f"label must be '{COARSE}' or '{FINE}'")


@dataclass
class CostRecord:
    """Per-step seconds and multigrid cycle counts for one propagation."""

    label: str
    step_seconds: list[float] = dc_field(default_factory=list)
    step_cycles: list[int] = dc_field(default_factory=list)

    @property
    def total_seconds(self) -> float:
        return float(sum(self.step_seconds))

    @property
    def total_cycles(self) -> int:
        return int(sum(self.step_cycles))

    @property
    def n_steps(self) -> int:
        return len(self.step_seconds)

    def extend(self, other: "CostRecord") -> None:
        self.step_seconds.extend(other.step_seconds)
        self.step_cycles.extend(other.step_cycles)


def write_cost_csv(records, path) -> None:
    """Serialize cost records, one row per step.

    ``records`` is an iterable of (subinterval_index, CostRecord).
    """
    import csv
    from pathlib import Path

    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["subinterval_index", "label", "step_index", "mg_cycles", "seconds"])
        for subinterval, record in records:
            for i, (seconds, cycles) in enumerate(zip(record.step_seconds, record.step_cycles)):
                writer.writerow([subinterval, record.label, i, cycles, repr(seconds)])


def steps_between(t0: float, t1: float, dt: float) -> int:
    """Number of dt-steps covering [t0, t1]; the span must be a whole multiple."""
    span = t1 - t0
    if span < 0.0:
        raise ValueError("t1 must not precede t0")
    n = int(round(span / dt))
    if abs(n * dt - span) > 1e-9 * max(span, dt):
        raise ValueError(f"interval [{t0}, {t1}] is not a whole number of steps of {dt}")
    return n


class Propagator:
    """Integrator bound to one problem; reuses its multigrid hierarchy."""

    def __init__(self, spec: PropagatorSpec, field: CoefficientField, bc: BoundarySpec):
        self.spec = spec
        self.field = field
        self.bc = bc

    @cached_property
    def hierarchy(self) -> multigrid.MGHierarchy:
        return multigrid.build_hierarchy(self.field, self.bc, self.spec.dt, self.spec.mg_cfg)

    def step(self, state: StateVector) -> tuple[StateVector, tuple[float, int]]:
        """Advance one dt; returns the new state and (seconds, mg cycles)."""
        start = _time.perf_counter()
        op = self.hierarchy.levels[0].op
        rhs = StateVector(op.grid, state.values + op.constant_vector(), state.time)
        result = multigrid.solve(self.hierarchy, rhs, x0=state)
        if not result.converged:
            raise StepFailure(
                f"{self.spec.label} step at t={state.time:.6g} did not converge "
                f"(residual {result.residual_history[-1]:.3e} after {result.cycles} cycles)",
                time=state.time,
                label=self.spec.label,
            )
        new = StateVector(op.grid, result.state.values, state.time + self.spec.dt)
        if self.spec.min_step_seconds is not None:
            remaining = self.spec.min_step_seconds - (_time.perf_counter() - start)
            if remaining > 0.0:
                _time.sleep(remaining)
        seconds = _time.perf_counter() - start
        if self.spec.cost_per_step is not None:
            seconds = self.spec.cost_per_step
        return new, (seconds, result.cycles)

    def propagate(self, state: StateVector, t0: float, t1: float) -> tuple[StateVector, CostRecord]:
        """Apply exactly (t1 - t0)/dt steps starting from ``state``."""
        n = steps_between(t0, t1, self.spec.dt)
        record = CostRecord(self.spec.label)
        current = StateVector(state.grid, state.values, t0)
        for _ in range(n):
            current, (seconds, cycles) = self.step(current)
            record.step_seconds.append(seconds)
            record.step_cycles.append(cycles)
        if n > 0:
            current = StateVector(current.grid, current.values, t1)
        return current, record


def step(
    state: StateVector, spec: PropagatorSpec, field: CoefficientField, bc: BoundarySpec
) -> tuple[StateVector, tuple[float, int]]:
    return Propagator(spec, field, bc).step(state)


def propagate(
    state: StateVector,
    t0: float,
    t1: float,
    spec: PropagatorSpec,
    field: CoefficientField,
    bc: BoundarySpec,
) -> tuple[StateVector, CostRecord]:
    return Propagator(spec, field, bc).propagate(state, t0, t1)
