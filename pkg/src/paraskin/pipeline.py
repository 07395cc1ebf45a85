"""Concurrent Parareal backend: one worker process per subinterval.

Workers form a chain; the only communication is the updated left boundary
value passed rank to rank, one message per iteration, so the schedule is a
software pipeline and the coarse sweep overlaps with downstream fine work.
Arithmetic and evaluation order per subinterval are identical to the
sequential backend, so the assembled trace is bit-identical to it.
"""

from __future__ import annotations

import multiprocessing as mp
import time as _time

import numpy as np

from .discretization import BoundarySpec, StateVector
from .errors import StepFailure
from .grid import CoefficientField
from .parareal import PararealConfig, PararealTrace, _update_norms
from .propagators import CostRecord, Propagator, PropagatorSpec

_FAILURE = "__pipeline_failure__"
_RESULT_TIMEOUT = 600.0


def _context():
    try:
        return mp.get_context("fork")
    except ValueError:  # platforms without fork
        return mp.get_context("spawn")


def _worker(
    rank: int,
    cfg: PararealConfig,
    coarse_spec: PropagatorSpec,
    fine_spec: PropagatorSpec,
    field: CoefficientField,
    bc: BoundarySpec,
    c0_values: np.ndarray | None,
    in_q,
    out_q,
    result_q,
):
    bounds = cfg.boundaries()
    t_left, t_right = float(bounds[rank]), float(bounds[rank + 1])
    grid = field.grid

    def forward(values):
        if out_q is not None:
            out_q.put(values)

    def receive():
        msg = in_q.get()
        if isinstance(msg, str) and msg == _FAILURE:
            raise _UpstreamFailure()
        return StateVector(grid, msg, t_left)

    try:
        coarse = Propagator(coarse_spec, field, bc)
        fine = Propagator(fine_spec, field, bc)

        left = StateVector(grid, c0_values, t_left) if rank == 0 else receive()
        try:
            g_prev, rec0 = coarse.propagate(left, t_left, t_right)
        except StepFailure as exc:
            raise _tag(exc, 0, rank)
        u_right = g_prev
        forward(u_right.values)

        iterates = {0: u_right.values}
        coarse_costs: dict[int, CostRecord] = {0: rec0}
        fine_costs: dict[int, CostRecord] = {}
        retired_at = None

        last_iter = min(cfg.max_iter, rank + 1) if cfg.retirement else cfg.max_iter
        # rank 0 has no predecessor; its left value is pinned to the initial state
        recv_limit = min(cfg.max_iter, rank) if cfg.retirement else (cfg.max_iter if rank > 0 else 0)
        left_prev = left

        for k in range(1, last_iter + 1):
            try:
                f_state, frec = fine.propagate(left_prev, t_left, t_right)
            except StepFailure as exc:
                raise _tag(exc, k, rank)
            fine_costs[k] = frec
            if k <= recv_limit:
                left = receive()
            if cfg.retirement and k == rank + 1:
                u_right = StateVector(grid, f_state.values, t_right)
                retired_at = k
            else:
                try:
                    g_new, crec = coarse.propagate(left, t_left, t_right)
                except StepFailure as exc:
                    raise _tag(exc, k, rank)
                coarse_costs[k] = crec
                corrected = g_new.values - g_prev.values + f_state.values
                u_right = StateVector(grid, corrected, t_right)
                g_prev = g_new
            forward(u_right.values)
            iterates[k] = u_right.values
            left_prev = left

        result_q.put(("ok", rank, iterates, coarse_costs, fine_costs, retired_at))
    except _UpstreamFailure:
        forward(_FAILURE)
        result_q.put(("aborted", rank))
    except StepFailure as exc:
        forward(_FAILURE)
        result_q.put(("error", rank, str(exc), exc.iteration, exc.subinterval))
    except Exception as exc:  # surface unexpected worker crashes to the parent
        forward(_FAILURE)
        result_q.put(("error", rank, f"{type(exc).__name__}: {exc}", None, rank))


class _UpstreamFailure(Exception):
    pass


def _tag(exc: StepFailure, iteration: int, subinterval: int) -> StepFailure:
    return StepFailure(
        f"{exc} (iteration {iteration}, subinterval {subinterval})",
        time=exc.time,
        label=exc.label,
        iteration=iteration,
        subinterval=subinterval,
    )


def run_concurrent(
    cfg: PararealConfig,
    coarse_spec: PropagatorSpec,
    fine_spec: PropagatorSpec,
    field: CoefficientField,
    bc: BoundarySpec,
    c0: StateVector,
) -> PararealTrace:
    ctx = _context()
    queues = [ctx.Queue() for _ in range(cfg.n_sub - 1)]
    result_q = ctx.Queue()

    procs = []
    start = _time.perf_counter()
    for rank in range(cfg.n_sub):
        in_q = queues[rank - 1] if rank > 0 else None
        out_q = queues[rank] if rank < cfg.n_sub - 1 else None
        procs.append(
            ctx.Process(
                target=_worker,
                args=(
                    rank,
                    cfg,
                    coarse_spec,
                    fine_spec,
                    field,
                    bc,
                    c0.values if rank == 0 else None,
                    in_q,
                    out_q,
                    result_q,
                ),
            )
        )
    for p in procs:
        p.start()

    results = {}
    failure = None
    try:
        for _ in range(cfg.n_sub):
            msg = result_q.get(timeout=_RESULT_TIMEOUT)
            if msg[0] == "ok":
                results[msg[1]] = msg[2:]
            elif msg[0] == "error" and failure is None:
                failure = msg
    finally:
        for p in procs:
            p.join(timeout=30.0)
        for p in procs:
            if p.is_alive():
                p.terminate()
    wall = _time.perf_counter() - start

    if failure is not None:
        _, rank, message, iteration, subinterval = failure
        raise StepFailure(message, iteration=iteration, subinterval=subinterval)

    return _assemble_trace(cfg, c0, results, wall)


def _assemble_trace(cfg: PararealConfig, c0: StateVector, results, wall: float) -> PararealTrace:
    n_sub = cfg.n_sub
    trace = PararealTrace(
        n_sub=n_sub,
        t_end=cfg.t_end,
        boundaries=cfg.boundaries(),
        backend="concurrent",
        retirement=cfg.retirement,
        retired_at=[None] * n_sub,
        simulated_clock=False,
    )

    for k in range(cfg.max_iter + 1):
        row = [c0.values]
        for rank in range(n_sub):
            iterates = results[rank][0]
            key = k if k in iterates else max(i for i in iterates if i <= k)
            row.append(iterates[key])
        trace.iterates.append(row)
        coarse_row = [results[rank][1].get(k) for rank in range(n_sub)]
        fine_row = [results[rank][2].get(k) for rank in range(n_sub)]
        trace.coarse_costs.append(coarse_row)
        trace.fine_costs.append(fine_row)
        if k >= 1:
            trace.update_norms.append(_update_norms(trace.iterates[k], trace.iterates[k - 1]))
    for rank in range(n_sub):
        trace.retired_at[rank] = results[rank][3]
    trace.iterations_run = cfg.max_iter

    # The pipeline runs speculatively past a tolerance stop; report the same
    # stopping iteration the sequential backend would.
    if cfg.defect_tol is not None:
        for k, norms in enumerate(trace.update_norms, start=1):
            if float(norms.max()) <= cfg.defect_tol:
                trace.iterates = trace.iterates[: k + 1]
                trace.update_norms = trace.update_norms[:k]
                trace.coarse_costs = trace.coarse_costs[: k + 1]
                trace.fine_costs = trace.fine_costs[: k + 1]
                trace.iterations_run = k
                trace.stopped_early = True
                break

    trace.wall_seconds = wall
    trace.compute_seconds = wall
    return trace
