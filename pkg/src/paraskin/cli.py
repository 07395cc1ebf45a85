"""Command-line experiment harness.

Each subcommand reads a declarative config, runs one experiment family at
desk scale, and writes CSV tables (plus ``.field`` snapshots for ``export``)
into the output directory. Every CSV starts with a provenance comment line
carrying the config hash. Timing columns are the only content allowed to
differ between reruns of the same config.

Exit codes: 0 success, 2 configuration error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

from . import fieldio, perf_model
from .config import ExperimentConfig, config_hash, load_config
from .discretization import StateVector
from .errors import ConfigError, StepFailure
from .grid import uniform_field
from .parareal import (
    defect_table,
    discretization_error_estimate,
    per_subinterval_seconds,
    run_parareal,
    run_serial_coarse,
    run_serial_fine,
)
from .propagators import COARSE


def _problem(cfg: ExperimentConfig):
    grid = cfg.grid()
    field = cfg.field()
    bc = cfg.boundary()
    t_end = cfg.t_end(field)
    c0 = StateVector.zeros(grid)
    return grid, field, bc, t_end, c0


def _write_csv(path: Path, cfg: ExperimentConfig, header: list[str], rows: list[list]):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        handle.write(f"# config={config_hash(cfg)}\n")
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def _fmt(x: float) -> str:
    return repr(float(x))


def cmd_convergence(cfg: ExperimentConfig, out_dir: Path) -> Path:
    """Defect at T per iteration for each requested subinterval count."""
    _, field, bc, t_end, c0 = _problem(cfg)
    rows = []
    for n_sub in cfg["experiment"]["n_sub_list"]:
        pcfg = cfg.parareal_config(t_end, n_sub)
        fine = cfg.propagator_spec("fine", t_end, n_sub)
        coarse = cfg.propagator_spec("coarse", t_end, n_sub)
        reference, _ = run_serial_fine(pcfg, fine, field, bc, c0)
        e_fine = discretization_error_estimate(pcfg, fine, field, bc, c0)[n_sub]
        trace = run_parareal(pcfg, coarse, fine, field, bc, c0)
        defects = defect_table(trace, reference)
        for k in range(1, trace.iterations_run + 1):
            rows.append([n_sub, k, _fmt(defects[k, n_sub]), _fmt(e_fine)])
    return _write_csv(
        out_dir / "convergence.csv", cfg, ["n_sub", "iteration", "defect", "e_fine"], rows
    )


def cmd_coefficients(cfg: ExperimentConfig, out_dir: Path) -> Path:
    """Defect per iteration for the layered field vs a constant-coefficient run."""
    grid, field, bc, t_end, c0 = _problem(cfg)
    constant = uniform_field(grid, cfg["problem"]["d_cor"])

    columns = {}
    for tag, fld in (("jumping", field), ("constant", constant)):
        pcfg = cfg.parareal_config(t_end)
        fine = cfg.propagator_spec("fine", t_end)
        coarse = cfg.propagator_spec("coarse", t_end)
        reference, _ = run_serial_fine(pcfg, fine, fld, bc, c0)
        e_fine = discretization_error_estimate(pcfg, fine, fld, bc, c0)[pcfg.n_sub]
        trace = run_parareal(pcfg, coarse, fine, fld, bc, c0)
        defects = defect_table(trace, reference)[:, pcfg.n_sub]
        columns[tag] = (defects, e_fine, trace.iterations_run)

    iters = max(columns["jumping"][2], columns["constant"][2])
    rows = []
    for k in range(1, iters + 1):
        row = [k]
        for tag in ("jumping", "constant"):
            defects, e_fine, ran = columns[tag]
            row.append(_fmt(defects[min(k, ran)]))
            row.append(_fmt(e_fine))
        rows.append(row)
    return _write_csv(
        out_dir / "coefficients.csv",
        cfg,
        ["iteration", "defect_jumping", "e_fine_jumping", "defect_constant", "e_fine_constant"],
        rows,
    )


def cmd_error_over_time(cfg: ExperimentConfig, out_dir: Path) -> Path:
    """Coarse/fine discretization error and early-iteration defects per boundary."""
    _, field, bc, t_end, c0 = _problem(cfg)
    n_iter = min(cfg["experiment"]["error_iters"], cfg["parareal"]["n_sub"])
    pcfg = cfg.parareal_config(t_end)
    fine = cfg.propagator_spec("fine", t_end)
    coarse = cfg.propagator_spec("coarse", t_end)

    fine_states, _ = run_serial_fine(pcfg, fine, field, bc, c0)
    coarse_states, _ = run_serial_coarse(pcfg, coarse, field, bc, c0)
    refined = cfg.propagator_spec("fine", t_end)
    refined = type(refined)(dt=refined.dt / 4.0, mg_cfg=refined.mg_cfg, label=refined.label)
    refined_states, _ = run_serial_fine(pcfg, refined, field, bc, c0)

    run_cfg = cfg.parareal_config(t_end)
    run_cfg = type(run_cfg)(
        n_sub=run_cfg.n_sub,
        t_end=run_cfg.t_end,
        max_iter=n_iter,
        defect_tol=None,
        backend=run_cfg.backend,
        retirement=run_cfg.retirement,
    )
    trace = run_parareal(run_cfg, coarse, fine, field, bc, c0)
    defects = defect_table(trace, fine_states)

    from .parareal import defect as _defect

    rows = []
    for n in range(1, pcfg.n_sub + 1):
        row = [
            n,
            _fmt(trace.boundaries[n]),
            _fmt(_defect(coarse_states[n], refined_states[n])),
            _fmt(_defect(fine_states[n], refined_states[n])),
        ]
        for k in range(1, n_iter + 1):
            row.append(_fmt(defects[k, n]))
        rows.append(row)
    header = ["boundary", "t", "coarse_error", "fine_error"]
    header += [f"d{k}" for k in range(1, n_iter + 1)]
    return _write_csv(out_dir / "error_over_time.csv", cfg, header, rows)


def cmd_speedup(cfg: ExperimentConfig, out_dir: Path, cores: int | None = None) -> Path:
    """Measured vs modeled speedup per subinterval count."""
    _, field, bc, t_end, c0 = _problem(cfg)
    cores = cores if cores is not None else (os.cpu_count() or 1)
    rows = []
    for n_sub in cfg["experiment"]["n_sub_list"]:
        pcfg = cfg.parareal_config(t_end, n_sub)
        requested = pcfg.backend
        backend = requested
        flag = ""
        if requested == "concurrent" and cores < n_sub:
            backend = "sequential"
            flag = f"insufficient cores ({cores} < {n_sub}); sequential simulation"
            print(f"warning: {flag}", file=sys.stderr)
        run_cfg = type(pcfg)(
            n_sub=n_sub,
            t_end=t_end,
            max_iter=pcfg.max_iter,
            defect_tol=pcfg.defect_tol,
            backend=backend,
            retirement=pcfg.retirement,
        )
        fine = cfg.propagator_spec("fine", t_end, n_sub)
        coarse = cfg.propagator_spec("coarse", t_end, n_sub)

        _, serial_record = run_serial_fine(run_cfg, fine, field, bc, c0)
        trace = run_parareal(run_cfg, coarse, fine, field, bc, c0)

        gamma_c = trace.seconds_table(COARSE)[0]
        gamma_f = per_subinterval_seconds(serial_record, n_sub)
        n_coarse_steps = cfg.total_steps("coarse", n_sub) // n_sub
        n_fine_steps = cfg.total_steps("fine", n_sub) // n_sub
        tau_c = gamma_c.mean() / n_coarse_steps
        tau_f = gamma_f.mean() / n_fine_steps
        ideal = perf_model.speedup_simple(
            trace.iterations_run, n_sub, n_coarse_steps / n_fine_steps, tau_c / tau_f
        )
        report = perf_model.validate_model(trace, serial_record)
        rows.append(
            [
                n_sub,
                backend,
                trace.iterations_run,
                _fmt(serial_record.total_seconds),
                _fmt(trace.wall_seconds),
                _fmt(ideal),
                _fmt(report["predicted_speedup"]),
                _fmt(report["measured_speedup"]),
                _fmt(report["ratio"]),
                flag,
            ]
        )
    return _write_csv(
        out_dir / "speedup.csv",
        cfg,
        [
            "n_sub",
            "backend",
            "iterations",
            "serial_fine_seconds",
            "parareal_wall_seconds",
            "predicted_ideal",
            "predicted_general",
            "measured_speedup",
            "model_ratio",
            "note",
        ],
        rows,
    )


def cmd_weak_scaling(cfg: ExperimentConfig, out_dir: Path) -> Path:
    """Ladder of runs doubling time resolution and subintervals while
    refining the grid, with per-core work held fixed."""
    from .grid import Grid3D, build_brick_mortar

    ws = cfg["weak_scaling"]
    base_grid = cfg.grid()
    spec = cfg.brick_spec()
    bc = cfg.boundary()
    base_n_sub = cfg["parareal"]["n_sub"]
    coarse_steps = ws["coarse_steps_per_subinterval"]
    fine_steps = ws["fine_steps_per_subinterval"]

    base_field = build_brick_mortar(spec, base_grid)
    t_end = cfg.t_end(base_field)

    rows = []
    prev_runtime = None
    for rung in range(ws["rungs"]):
        factor = 2**rung
        grid = Grid3D(
            base_grid.nx * factor,
            base_grid.ny * factor,
            base_grid.nz * factor,
            base_grid.hx / factor,
            base_grid.hy / factor,
            base_grid.hz / factor,
        )
        n_sub = base_n_sub * factor
        try:
            field = build_brick_mortar(spec, grid)
            pcfg = cfg.parareal_config(t_end, n_sub)
            sub_len = t_end / n_sub
            mg_cfg = cfg.mg_config()
            from .propagators import PropagatorSpec

            coarse = PropagatorSpec(dt=sub_len / coarse_steps, mg_cfg=mg_cfg, label="coarse")
            fine = PropagatorSpec(dt=sub_len / fine_steps, mg_cfg=mg_cfg, label="fine")
            c0 = StateVector.zeros(grid)

            reference, _ = run_serial_fine(pcfg, fine, field, bc, c0)
            e_fine = discretization_error_estimate(pcfg, fine, field, bc, c0)[n_sub]
            trace = run_parareal(pcfg, coarse, fine, field, bc, c0)
            defects = defect_table(trace, reference)
            d1 = defects[1, n_sub]
            iters_to_e_fine = next(
                (k for k in range(1, trace.iterations_run + 1) if defects[k, n_sub] < e_fine),
                None,
            )
        except MemoryError:
            print(f"notice: rung {rung} skipped (insufficient memory)", file=sys.stderr)
            continue
        runtime = trace.wall_seconds
        ratio = runtime / prev_runtime if prev_runtime else float("nan")
        prev_runtime = runtime
        rows.append(
            [
                rung,
                grid.nx,
                grid.ny,
                grid.nz,
                n_sub,
                n_sub * coarse_steps,
                n_sub * fine_steps,
                _fmt(e_fine),
                _fmt(d1),
                iters_to_e_fine if iters_to_e_fine is not None else "not-reached",
                _fmt(runtime),
                _fmt(ratio),
            ]
        )
    return _write_csv(
        out_dir / "weak_scaling.csv",
        cfg,
        [
            "rung",
            "nx",
            "ny",
            "nz",
            "n_sub",
            "coarse_steps_total",
            "fine_steps_total",
            "e_fine",
            "d1",
            "iters_to_e_fine",
            "runtime_seconds",
            "factor",
        ],
        rows,
    )


def cmd_export(cfg: ExperimentConfig, out_dir: Path, times: list[float] | None = None) -> list[Path]:
    """Serial fine run with ``.field`` snapshots at fractions of T."""
    _, field, bc, t_end, c0 = _problem(cfg)
    fractions = times if times is not None else cfg["experiment"]["snapshot_times"]
    for frac in fractions:
        if not 0.0 <= frac <= 1.0:
            raise ConfigError(f"snapshot time {frac} outside [0, 1] (fractions of T)")

    fine = cfg.propagator_spec("fine", t_end)
    from .propagators import Propagator

    prop = Propagator(fine, field, bc)
    # Snap each request to the nearest fine step.
    total_steps = round(t_end / fine.dt)
    targets = sorted({min(total_steps, round(f * t_end / fine.dt)) for f in fractions})

    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    state = c0
    done = 0
    for target in targets:
        while done < target:
            state, _ = prop.step(state)
            done += 1
        path = out_dir / f"solution_t{state.time:.6g}.field"
        fieldio.write_state(state, path)
        written.append(path)
    return written


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="paraskin", description="Parallel-in-time skin-transport benchmark harness"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("convergence", "coefficients", "error-over-time", "speedup", "weak-scaling", "export"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the experiment config")
        p.add_argument("--out", default=None, help="output directory (default: from config)")
        p.add_argument("--backend", choices=["seq", "par"], default=None)
        p.add_argument("--cores", type=int, default=None)
        if name == "export":
            p.add_argument("--times", type=float, nargs="*", default=None, help="fractions of T")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.backend is not None:
            cfg["parareal"]["backend"] = {"seq": "sequential", "par": "concurrent"}[args.backend]
        out_dir = Path(args.out) if args.out else Path(cfg["experiment"]["output_dir"])
        if args.command == "convergence":
            result = cmd_convergence(cfg, out_dir)
        elif args.command == "coefficients":
            result = cmd_coefficients(cfg, out_dir)
        elif args.command == "error-over-time":
            result = cmd_error_over_time(cfg, out_dir)
        elif args.command == "speedup":
            result = cmd_speedup(cfg, out_dir, cores=args.cores)
        elif args.command == "weak-scaling":
            result = cmd_weak_scaling(cfg, out_dir)
        else:
            paths = cmd_export(cfg, out_dir, times=args.times)
            for p in paths:
                print(p)
            return 0
        print(result)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except StepFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
