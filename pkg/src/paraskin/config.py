"""Experiment configuration: flat ``key = value`` text with [section] headers.

Blank lines and ``#`` comments are ignored. Unknown sections or keys are
rejected with the offending line number. Parsing resolves every key to its
typed value; emitting writes the resolved configuration back in canonical
order, so parse -> emit -> parse is a fixed point.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

from . import grid as grid_mod
from .discretization import BoundarySpec
from .errors import ConfigError
from .grid import BrickMortarSpec, Grid3D
from .multigrid import MGConfig
from .parareal import PararealConfig
from .propagators import PropagatorSpec

_FLOAT = "float"
_INT = "int"
_STR = "str"
_BOOL = "bool"
_FLOAT_LIST = "float_list"
_INT_LIST = "int_list"
_OPT_FLOAT = "optional_float"
_OPT_INT = "optional_int"

# Section -> key -> (type, default); a default of ... marks a required key.
SCHEMA: dict[str, dict[str, tuple[str, object]]] = {
    "problem": {
        "nx": (_INT, ...),
        "ny": (_INT, ...),
        "nz": (_INT, ...),
        "hx": (_FLOAT, ...),
        "hy": (_FLOAT, ...),
        "hz": (_FLOAT, ...),
        "layers": (_INT, 10),
        "brick_x": (_FLOAT, 4.0),
        "brick_y": (_FLOAT, 4.0),
        "brick_z": (_FLOAT, 1.0),
        "mortar_width": (_FLOAT, 1.0),
        "stagger_offset": (_FLOAT, 0.5),
        "d_cor": (_FLOAT, 1e-3),
        "d_lip": (_FLOAT, 1.0),
        "top": (_FLOAT, 1.0),
        "bottom": (_FLOAT, 0.0),
        "t_end_lag_times": (_FLOAT, 1.0),
        "membrane_thickness": (_OPT_FLOAT, None),
        "d_eff": (_OPT_FLOAT, None),
    },
    "parareal": {
        "n_sub": (_INT, ...),
        "max_iter": (_INT, ...),
        "defect_tol": (_OPT_FLOAT, None),
        "backend": (_STR, "sequential"),
        "retirement": (_BOOL, True),
    },
    # Step sizes: either per subinterval (held fixed as n_sub changes, the
    # weak-scaling convention) or total over [0, T] (fixed absolute step, the
    # strong-scaling convention). Exactly one of the two per integrator.
    "coarse": {
        "steps_per_subinterval": (_OPT_INT, None),
        "steps_total": (_OPT_INT, None),
    },
    "fine": {
        "steps_per_subinterval": (_OPT_INT, None),
        "steps_total": (_OPT_INT, None),
    },
    "solver": {
        "omega": (_FLOAT, 0.6),
        "pre_smooth": (_INT, 3),
        "post_smooth": (_INT, 3),
        "max_cycles": (_INT, 50),
        "rel_tol": (_FLOAT, 1e-8),
        "coarsest_max_unknowns": (_INT, 4096),
    },
    "experiment": {
        "name": (_STR, ""),
        "output_dir": (_STR, "out"),
        "seed": (_INT, 0),
        "n_sub_list": (_INT_LIST, [4, 8, 16]),
        "error_iters": (_INT, 2),
        "snapshot_times": (_FLOAT_LIST, [0.0625, 0.5, 1.0]),
    },
    "weak_scaling": {
        "rungs": (_INT, 3),
        "coarse_steps_per_subinterval": (_INT, 4),
        "fine_steps_per_subinterval": (_INT, 64),
    },
}


def _parse_value(kind: str, raw: str, line_no: int):
    try:
        if kind == _FLOAT:
            return float(raw)
        if kind == _OPT_FLOAT:
            return None if raw.lower() in ("", "none") else float(raw)
        if kind == _OPT_INT:
            return None if raw.lower() in ("", "none") else int(raw)
        if kind == _INT:
            return int(raw)
        if kind == _STR:
            return raw
        if kind == _BOOL:
            if raw.lower() in ("on", "true", "yes", "1"):
                return True
            if raw.lower() in ("off", "false", "no", "0"):
                return False
            raise ValueError(raw)
        if kind == _FLOAT_LIST:
            return [float(tok) for tok in raw.split()]
        if kind == _INT_LIST:
            return [int(tok) for tok in raw.split()]
    except ValueError:
        raise ConfigError(f"line {line_no}: cannot parse {raw!r} as {kind}") from None
    raise AssertionError(f"unhandled kind {kind}")


def _format_value(kind: str, value) -> str:
    if kind in (_FLOAT, _OPT_FLOAT):
        return repr(float(value))
    if kind == _BOOL:
        return "on" if value else "off"
    if kind in (_FLOAT_LIST, _INT_LIST):
        return " ".join(repr(float(v)) if kind == _FLOAT_LIST else str(v) for v in value)
    return str(value)


@dataclass
class ExperimentConfig:
    """Typed view of a parsed configuration."""

    sections: dict[str, dict[str, object]]

    def __getitem__(self, section: str) -> dict[str, object]:
        return self.sections[section]

    # -- derived problem objects ------------------------------------------

    def grid(self) -> Grid3D:
        p = self.sections["problem"]
        return Grid3D(p["nx"], p["ny"], p["nz"], p["hx"], p["hy"], p["hz"])

    def brick_spec(self) -> BrickMortarSpec:
        p = self.sections["problem"]
        return BrickMortarSpec(
            layers=p["layers"],
            brick_extent=(p["brick_x"], p["brick_y"], p["brick_z"]),
            mortar_width=p["mortar_width"],
            stagger_offset=p["stagger_offset"],
            d_cor=p["d_cor"],
            d_lip=p["d_lip"],
        )

    def boundary(self) -> BoundarySpec:
        p = self.sections["problem"]
        return BoundarySpec(top=p["top"], bottom=p["bottom"])

    def field(self):
        return grid_mod.build_brick_mortar(self.brick_spec(), self.grid())

    def t_end(self, field=None) -> float:
        """Final time: the configured multiple of the membrane lag time."""
        p = self.sections["problem"]
        d_eff = p["d_eff"]
        if d_eff is None:
            d_eff = grid_mod.effective_coefficient_1d(field if field is not None else self.field())
        thickness = p["membrane_thickness"]
        if thickness is None:
            g = self.grid()
            thickness = g.nz * g.hz
        return p["t_end_lag_times"] * grid_mod.lag_time(thickness, d_eff)

    def mg_config(self) -> MGConfig:
        s = self.sections["solver"]
        return MGConfig(
            omega=s["omega"],
            pre_smooth=s["pre_smooth"],
            post_smooth=s["post_smooth"],
            max_cycles=s["max_cycles"],
            rel_tol=s["rel_tol"],
            coarsest_max_unknowns=s["coarsest_max_unknowns"],
        )

    def parareal_config(self, t_end: float, n_sub: int | None = None) -> PararealConfig:
        pr = self.sections["parareal"]
        n = pr["n_sub"] if n_sub is None else n_sub
        return PararealConfig(
            n_sub=n,
            t_end=t_end,
            max_iter=min(pr["max_iter"], n),
            defect_tol=pr["defect_tol"],
            backend=pr["backend"],
            retirement=pr["retirement"],
        )

    def total_steps(self, label: str, n_sub: int) -> int:
        """Number of ``label`` steps covering [0, T] for a given n_sub."""
        sec = self.sections[label]
        if sec["steps_total"] is not None:
            return sec["steps_total"]
        per = sec["steps_per_subinterval"]
        if per is None:
            per = 1 if label == "coarse" else 16
        return per * n_sub

    def propagator_spec(self, label: str, t_end: float, n_sub: int | None = None) -> PropagatorSpec:
        pr = self.sections["parareal"]
        n = pr["n_sub"] if n_sub is None else n_sub
        return PropagatorSpec(
            dt=t_end / self.total_steps(label, n), mg_cfg=self.mg_config(), label=label
        )

    def validate(self):
        for label in ("coarse", "fine"):
            sec = self.sections[label]
            per, total = sec["steps_per_subinterval"], sec["steps_total"]
            if per is not None and total is not None:
                raise ConfigError(
                    f"section [{label}] sets both steps_per_subinterval and "
                    f"steps_total; use one"
                )
            chosen = per if per is not None else total
            if chosen is not None and chosen < 1:
                raise ConfigError(f"section [{label}] step count must be >= 1")
        pr = self.sections["parareal"]
        if pr["backend"] not in ("sequential", "concurrent"):
            raise ConfigError(f"unknown backend {pr['backend']!r}")
        subinterval_counts = {pr["n_sub"], *self.sections["experiment"]["n_sub_list"]}
        if min(subinterval_counts) < 1:
            raise ConfigError("subinterval counts must be >= 1")
        for n_sub in subinterval_counts:
            n_coarse = self.total_steps("coarse", n_sub)
            n_fine = self.total_steps("fine", n_sub)
            if n_coarse % n_sub or n_fine % n_sub:
                raise ConfigError(
                    f"step totals ({n_coarse} coarse, {n_fine} fine) must divide "
                    f"evenly into {n_sub} subintervals"
                )
            if n_fine % n_coarse:
                raise ConfigError(
                    f"fine step count {n_fine} must be a multiple of the coarse "
                    f"step count {n_coarse}"
                )
        try:
            spec = self.brick_spec()
            grid = self.grid()
        except (ValueError, ConfigError) as exc:
            raise ConfigError(str(exc)) from exc
        height = grid.nz * grid.hz
        if height < spec.stack_height:
            raise ConfigError(
                f"domain height {height} cannot hold the configured stack "
                f"({spec.stack_height})"
            )


def parse_config(text: str) -> ExperimentConfig:
    sections: dict[str, dict[str, object]] = {
        name: {key: default for key, (_, default) in keys.items()}
        for name, keys in SCHEMA.items()
    }
    seen: set[tuple[str, str]] = set()
    current: str | None = None
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if current not in SCHEMA:
                raise ConfigError(f"line {line_no}: unknown section [{current}]")
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}: expected 'key = value', got {raw_line!r}")
        if current is None:
            raise ConfigError(f"line {line_no}: key outside of any [section]")
        key, raw_value = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA[current]:
            raise ConfigError(f"line {line_no}: unknown key {key!r} in section [{current}]")
        if (current, key) in seen:
            raise ConfigError(f"line {line_no}: duplicate key {key!r} in section [{current}]")
        seen.add((current, key))
        kind = SCHEMA[current][key][0]
        sections[current][key] = _parse_value(kind, raw_value, line_no)

    for name, keys in SCHEMA.items():
        for key, (_, default) in keys.items():
            if default is ... and sections[name][key] is ...:
                raise ConfigError(f"missing required key {key!r} in section [{name}]")

    cfg = ExperimentConfig(sections)
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def emit_config(cfg: ExperimentConfig) -> str:
    lines = []
    for name, keys in SCHEMA.items():
        lines.append(f"[{name}]")
        for key, (kind, _) in keys.items():
            value = cfg.sections[name][key]
            if value is None:
                continue
            lines.append(f"{key} = {_format_value(kind, value)}")
        lines.append("")
    return "\n".join(lines)


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(emit_config(cfg).encode()).hexdigest()[:16]
