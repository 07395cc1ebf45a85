"""Analytic speedup and weak-scaling models, and their validation.

Cost notation: a serial fine (coarse) sweep over all subintervals costs the
sum of the per-subinterval costs; a pipelined run with k iterations costs the
full coarse sweep plus k times the most expensive coarse+fine subinterval.
The simple bound is the special case of equal per-step costs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class CostProfile:
    """Measured per-subinterval coarse/fine costs in seconds."""

    gamma_c: np.ndarray
    gamma_f: np.ndarray

    def __post_init__(self):
        gc = np.asarray(self.gamma_c, dtype=float)
        gf = np.asarray(self.gamma_f, dtype=float)
        object.__setattr__(self, "gamma_c", gc)
        object.__setattr__(self, "gamma_f", gf)
        if gc.shape != gf.shape or gc.ndim != 1:
            raise ValueError("profiles must be 1D arrays of equal length")
        if np.any(gc < 0.0) or np.any(gf < 0.0):
            raise ValueError("costs must be non-negative")

    @property
    def n_sub(self) -> int:
        return len(self.gamma_c)

    @property
    def total_coarse(self) -> float:
        return float(self.gamma_c.sum())

    @property
    def total_fine(self) -> float:
        return float(self.gamma_f.sum())

    @property
    def bottleneck(self) -> float:
        """Cost of the most expensive subinterval (coarse plus fine)."""
        return float((self.gamma_c + self.gamma_f).max())


@dataclass(frozen=True)
class SpeedupEstimate:
    model: str
    n_sub: int
    n_iter: int
    value: float
    total_coarse: float
    total_fine: float
    bottleneck: float


def speedup_simple(n_iter: int, n_sub: int, nc_over_nf: float, tauc_over_tauf: float) -> float:
    """Equal-cost speedup bound.

    ``nc_over_nf`` is the ratio of coarse to fine steps per subinterval and
    ``tauc_over_tauf`` the per-step runtime ratio.
    """
    if n_iter < 1 or n_sub < 1:
        raise ValueError("n_iter and n_sub must be >= 1")
    if nc_over_nf <= 0.0 or tauc_over_tauf <= 0.0:
        raise ValueError("cost ratios must be positive")
    ratio = n_iter / n_sub
    return 1.0 / ((1.0 + ratio) * nc_over_nf * tauc_over_tauf + ratio)


def speedup_general(profile: CostProfile, n_iter: int) -> SpeedupEstimate:
    """Speedup for arbitrary per-subinterval costs.

    Serial cost is the fine sweep total; parallel cost is the serial coarse
    sweep plus ``n_iter`` times the bottleneck subinterval.
    """
    if n_iter < 1:
        raise ValueError("n_iter must be >= 1")
    if profile.total_fine <= 0.0:
        raise ValueError("profile has zero fine cost")
    parallel = profile.total_coarse + n_iter * profile.bottleneck
    return SpeedupEstimate(
        model="general",
        n_sub=profile.n_sub,
        n_iter=n_iter,
        value=profile.total_fine / parallel,
        total_coarse=profile.total_coarse,
        total_fine=profile.total_fine,
        bottleneck=profile.bottleneck,
    )


def imbalance_scenario(n_sub: int, b: float) -> CostProfile:
    """Reference imbalance case: unit coarse cost, fine cost 10, with the
    third subinterval raised to (1+b)*10 and the second lowered to (1-b)*10.
    Total fine workload is independent of b."""
    if n_sub < 4:
        raise ValueError("scenario needs at least 4 subintervals")
    if not 0.0 <= b <= 1.0:
        raise ValueError("imbalance factor must lie in [0, 1]")
    gamma_c = np.ones(n_sub)
    gamma_f = np.full(n_sub, 10.0)
    gamma_f[2] = (1.0 - b) * 10.0
    gamma_f[3] = (1.0 + b) * 10.0
    return CostProfile(gamma_c, gamma_f)


def weak_scaling_efficiency(n_sub: int, n_iter: int, sigma: float) -> float:
    """Runtime ratio when doubling resolution, subintervals and cores.

    ``sigma`` is the coarse-to-fine cost ratio per subinterval. The value
    lies strictly between 1/2 and 1: the serial coarse sweep keeps doubled
    runs from ever scaling perfectly.
    """
    if n_sub < 1 or n_iter < 1:
        raise ValueError("n_sub and n_iter must be >= 1")
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    common = n_iter * (1.0 + sigma)
    return (n_sub * sigma + common) / (2.0 * n_sub * sigma + common)


def measured_profile(trace, serial_fine_record) -> CostProfile:
    """Per-subinterval costs from serial measurements.

    The fine column comes from the serial fine run, the coarse column from
    the trace's initial sweep (which is itself a serial coarse run).
    """
    from .parareal import per_subinterval_seconds
    from .propagators import COARSE

    gamma_c = trace.seconds_table(COARSE)[0]
    gamma_f = per_subinterval_seconds(serial_fine_record, trace.n_sub)
    return CostProfile(gamma_c, gamma_f)


def validate_model(trace, serial_fine_record, drop_off_threshold: float = 0.5) -> dict:
    """Compare a run's measured speedup with the general-model prediction.

    Returns measured and predicted speedups, their ratio, and a flag set when
    the measurement falls below ``drop_off_threshold`` of the prediction
    (communication and other overhead outside the model).
    """
    serial_seconds = serial_fine_record.total_seconds
    if serial_seconds <= 0.0 or trace.wall_seconds <= 0.0:
        raise ValueError("cost data is missing or non-positive")
    profile = measured_profile(trace, serial_fine_record)
    predicted = speedup_general(profile, trace.iterations_run)
    measured = serial_seconds / trace.wall_seconds
    ratio = measured / predicted.value
    return {
        "measured_speedup": measured,
        "predicted_speedup": predicted.value,
        "ratio": ratio,
        "flagged": ratio < drop_off_threshold,
        "estimate": predicted,
    }


def write_model_curves_csv(
    path: str | Path,
    n_subs,
    b_values,
    n_iter: int = 1,
) -> Path:
    """Speedup curves (ideal and imbalanced) for re-plotting."""
    path = Path(path)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["n_sub", "b", "n_iter", "speedup_ideal", "speedup_imbalanced"])
        for n_sub in n_subs:
            ideal = speedup_general(imbalance_scenario(n_sub, 0.0), n_iter).value
            for b in b_values:
                imbalanced = speedup_general(imbalance_scenario(n_sub, b), n_iter).value
                writer.writerow([n_sub, b, n_iter, repr(ideal), repr(imbalanced)])
    return path


def write_efficiency_csv(path: str | Path, n_subs, n_iters, sigmas) -> Path:
    path = Path(path)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["n_sub", "n_iter", "sigma", "efficiency"])
        for n_sub in n_subs:
            for n_iter in n_iters:
                for sigma in sigmas:
                    writer.writerow(
                        [n_sub, n_iter, sigma, repr(weak_scaling_efficiency(n_sub, n_iter, sigma))]
                    )
    return path
