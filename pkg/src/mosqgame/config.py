"""Run configuration: schema, validation, presets and canonical (JSON) serialization.

A config is a nested mapping with the sections ``variant``, ``params``, ``initial``,
``time``, ``integrator``, ``analysis``, ``sweep`` (optional) and ``output``.  Files may be
TOML or JSON.  Every default is written back into the provenance block, so
``RunConfig.from_dict(json.loads(cfg.to_json()))`` reproduces ``cfg`` exactly.
"""

from __future__ import annotations

import copy
import dataclasses
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .analysis import AnalysisConfig, SweepAxis, SweepSpec
from .integrator import IntegratorConfig
from .model import PARAM_NAMES, Params, State, Variant

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TimeConfig:
    t0: float = 0.0
    t1: float = 100.0

    def __post_init__(self):
        if not (math.isfinite(self.t0) and math.isfinite(self.t1)):
            raise ConfigError("time.t0 and time.t1 must be finite")
        if not self.t1 > self.t0:
            raise ConfigError(f"time.t1 ({self.t1}) must exceed time.t0 ({self.t0})")


@dataclass(frozen=True)
class SweepConfig:
    axis1: SweepAxis
    axis2: SweepAxis
    mode: str = "regions"
    max_extensions: int = 0


@dataclass(frozen=True)
class OutputConfig:
    dir: str | None = None
    prefix: str = "run"


@dataclass(frozen=True)
class RunConfig:
    variant: Variant = Variant.PREVALENCE_DEPENDENT
    params: dict = field(default_factory=lambda: Params().flat())
    initial: State = State(2e4, 2e4, 0.5)
    time: TimeConfig = TimeConfig()
    integrator: IntegratorConfig = IntegratorConfig()
    analysis: AnalysisConfig = AnalysisConfig()
    sweep: SweepConfig | None = None
    output: OutputConfig = OutputConfig()

    def model_params(self) -> Params:
        return Params.from_flat(self.variant, **self.params)

    def sweep_spec(self) -> SweepSpec:
        if self.sweep is None:
            raise ConfigError("this command needs a [sweep] section")
        return SweepSpec(
            params=self.model_params(),
            axis1=self.sweep.axis1,
            axis2=self.sweep.axis2,
            s0=self.initial,
            t_span=(self.time.t0, self.time.t1),
            mode=self.sweep.mode,
            integrator=self.integrator,
            analysis=self.analysis,
            max_extensions=self.sweep.max_extensions,
        )

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        ic = self.integrator
        out = {
            "schema_version": SCHEMA_VERSION,
            "variant": self.variant.value,
            "params": {name: float(self.params[name]) for name in PARAM_NAMES},
            "initial": {"L_v": float(self.initial.L_v), "A_v": float(self.initial.A_v), "w": float(self.initial.w)},
            "time": {"t0": float(self.time.t0), "t1": float(self.time.t1)},
            "integrator": {
                "rel_tol": float(ic.rel_tol),
                "abs_tol": None if ic.abs_tol is None else [float(x) for x in ic.abs_tol],
                "abs_tol_log_odds": float(ic.abs_tol_log_odds),
                # null means unbounded
                "max_step": None if math.isinf(ic.max_step) else float(ic.max_step),
                "initial_step": None if ic.initial_step is None else float(ic.initial_step),
                "max_steps": int(ic.max_steps),
                "sample_stride": None if ic.sample_stride is None else float(ic.sample_stride),
                "w_coordinates": ic.w_coordinates,
            },
            "analysis": {f.name: getattr(self.analysis, f.name) for f in dataclasses.fields(AnalysisConfig)},
            "sweep": None,
            "output": {"dir": self.output.dir, "prefix": self.output.prefix},
        }
        if self.sweep is not None:
            out["sweep"] = {
                "axis1": dataclasses.asdict(self.sweep.axis1),
                "axis2": dataclasses.asdict(self.sweep.axis2),
                "mode": self.sweep.mode,
                "max_extensions": self.sweep.max_extensions,
            }
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        try:
            return _build(data)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# validation helpers

_SECTIONS = ("schema_version", "variant", "params", "initial", "time", "integrator", "analysis", "sweep", "output")


def _check_keys(section: str, data, allowed) -> dict:
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{section} must be a table, got {type(data).__name__}")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        where = f"{section}." if section else ""
        raise ConfigError(f"unknown key(s): {', '.join(where + k for k in unknown)}")
    return data


def _number(path: str, value, integer: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path} must be a number, got {value!r}")
    if integer:
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"{path} must be an integer, got {value!r}")
        return int(value)
    return float(value)


def _optional(path, value, fn):
    return None if value is None else fn(path, value)


def _string(path: str, value) -> str:
    if not isinstance(value, str):
        raise ConfigError(f"{path} must be a string, got {value!r}")
    return value


def _axis(path: str, data) -> SweepAxis:
    names = [f.name for f in dataclasses.fields(SweepAxis)]
    data = _check_keys(path, data, names)
    missing = [n for n in ("name", "min", "max", "count") if n not in data]
    if missing:
        raise ConfigError(f"{path} is missing {', '.join(missing)}")
    name = _string(f"{path}.name", data["name"])
    if name not in PARAM_NAMES and name not in ("N", "rc_minus_rd", "rc_over_rd"):
        raise ConfigError(f"{path}.name {name!r} is not a parameter or derived axis")
    return SweepAxis(
        name=name,
        min=_number(f"{path}.min", data["min"]),
        max=_number(f"{path}.max", data["max"]),
        count=_number(f"{path}.count", data["count"], integer=True),
        scale=_string(f"{path}.scale", data.get("scale", "linear")),
    )


def _build(data: dict) -> RunConfig:
    data = _check_keys("", data, _SECTIONS)
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r}")

    variant = Variant.parse(_string("variant", data.get("variant", Variant.PREVALENCE_DEPENDENT.value)))

    raw = _check_keys("params", data.get("params"), PARAM_NAMES)
    flat = Params().flat()
    flat.update({k: _number(f"params.{k}", v) for k, v in raw.items()})
    Params.from_flat(variant, **flat)  # validates

    ini = _check_keys("initial", data.get("initial"), State._fields)
    default_initial = RunConfig.initial
    initial = State(*(_number(f"initial.{k}", ini.get(k, getattr(default_initial, k))) for k in State._fields))

    tm = _check_keys("time", data.get("time"), ("t0", "t1"))
    time = TimeConfig(**{k: _number(f"time.{k}", v) for k, v in tm.items()})

    ig = _check_keys("integrator", data.get("integrator"), [f.name for f in dataclasses.fields(IntegratorConfig)])
    kw = {}
    for key, value in ig.items():
        path = f"integrator.{key}"
        if key == "abs_tol":
            if value is not None:
                if not isinstance(value, (list, tuple)) or len(value) != 3:
                    raise ConfigError(f"{path} must be a list of three numbers")
                value = tuple(_number(path, v) for v in value)
            kw[key] = value
        elif key == "max_step":
            kw[key] = math.inf if value is None else _number(path, value)
        elif key == "max_steps":
            kw[key] = _number(path, value, integer=True)
        elif key == "w_coordinates":
            kw[key] = _string(path, value)
        else:
            kw[key] = _optional(path, value, _number)
    integrator = IntegratorConfig(**kw)

    an_fields = {f.name: f for f in dataclasses.fields(AnalysisConfig)}
    an = _check_keys("analysis", data.get("analysis"), an_fields)
    analysis = AnalysisConfig(
        **{k: _number(f"analysis.{k}", v, integer=an_fields[k].type in ("int", int)) for k, v in an.items()}
    )

    sweep = None
    sw = data.get("sweep")
    if sw is not None:
        sw = _check_keys("sweep", sw, ("axis1", "axis2", "mode", "max_extensions"))
        for ax in ("axis1", "axis2"):
            if ax not in sw:
                raise ConfigError(f"sweep.{ax} is required")
        mode = _string("sweep.mode", sw.get("mode", "regions"))
        if mode not in ("regions", "oscillations"):
            raise ConfigError(f"sweep.mode must be regions or oscillations, got {mode!r}")
        ext = _number("sweep.max_extensions", sw.get("max_extensions", 0), integer=True)
        if ext < 0:
            raise ConfigError("sweep.max_extensions must be >= 0")
        sweep = SweepConfig(_axis("sweep.axis1", sw["axis1"]), _axis("sweep.axis2", sw["axis2"]), mode, ext)

    out = _check_keys("output", data.get("output"), ("dir", "prefix"))
    output = OutputConfig(
        dir=_optional("output.dir", out.get("dir"), _string),
        prefix=_string("output.prefix", out.get("prefix", "run")),
    )
    return RunConfig(variant, flat, initial, time, integrator, analysis, sweep, output)


# ---------------------------------------------------------------------------
# files, overrides, presets


def load_file(path: str | Path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".json":
            return json.loads(text)
        return tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc


def deep_merge(base: dict, top: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in top.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def parse_override(text: str) -> tuple[list[str], object]:
    """``section.key=value``; the value is read as a TOML literal, falling back to a bare string."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    parts = [p.strip() for p in key.strip().split(".")]
    if not all(parts):
        raise ConfigError(f"bad override key {key!r}")
    raw = raw.strip()
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return parts, value


def apply_override(data: dict, text: str) -> dict:
    parts, value = parse_override(text)
    out = copy.deepcopy(data)
    node = out
    for p in parts[:-1]:
        if node.get(p) is None:
            node[p] = {}
        node = node[p]
        if not isinstance(node, dict):
            raise ConfigError(f"override {text!r} descends into a non-table")
    node[parts[-1]] = value
    return out


_FIG2 = {"r": 0.5, "nu_L": 0.067, "mu_L": 0.62, "mu_A": 0.04, "K_max": 2e6, "K_min": 1e6, "k": 0.8}
_FIG3 = dict(_FIG2, K_min=1e5, m=0.3)
_FIG4 = {"r": 0.5, "nu_L": 0.04, "mu_L": 0.03, "mu_A": 0.2, "K_max": 2e6, "K_min": 1e5, "k": 0.8, "m": 0.3}


def _quadrant(params: dict, b: float, r_c: float, r_d: float, variant: str, w0: float = 0.5) -> dict:
    return {
        "variant": variant,
        "params": dict(params, b=b, r_c=r_c, r_d=r_d),
        "initial": {"L_v": 2e4, "A_v": 2e4, "w": w0},
        "time": {"t0": 0.0, "t1": 500.0},
        "integrator": {"sample_stride": 0.5},
    }


PRESETS: dict[str, dict] = {
    # constant payoffs; b sweep starts below 1 so the N < 1 half appears
    "fig2": {
        "variant": "constant-payoff",
        "params": dict(_FIG2, b=10.0, r_c=2.0, r_d=1.5),
        "initial": {"L_v": 2e4, "A_v": 2e4, "w": 0.5},
        "time": {"t0": 0.0, "t1": 100.0},
        "integrator": {"rel_tol": 1e-6},
        "sweep": {
            "axis1": {"name": "b", "min": 0.1, "max": 15.0, "count": 40, "scale": "linear"},
            "axis2": {"name": "rc_minus_rd", "min": -1.0, "max": 1.0, "count": 40, "scale": "linear"},
            "mode": "regions",
            "max_extensions": 4,
        },
    },
    "fig2-e01": _quadrant(_FIG2, 0.5, 2.0, 1.5, "constant-payoff"),
    "fig2-e02": _quadrant(_FIG2, 0.5, 1.0, 1.5, "constant-payoff"),
    "fig2-e03": _quadrant(_FIG2, 10.0, 2.0, 1.5, "constant-payoff"),
    "fig2-e04": _quadrant(_FIG2, 10.0, 1.0, 1.5, "constant-payoff"),
    "fig3": {
        "variant": "prevalence-dependent",
        "params": dict(_FIG3, b=10.0, r_c=1e5, r_d=1.0),
        "initial": {"L_v": 2e4, "A_v": 2e4, "w": 0.3},
        "time": {"t0": 0.0, "t1": 300.0},
        "integrator": {"rel_tol": 1e-6},
        "sweep": {
            "axis1": {"name": "b", "min": 0.1, "max": 15.0, "count": 40, "scale": "linear"},
            "axis2": {"name": "rc_over_rd", "min": 1e3, "max": 2e6, "count": 40, "scale": "log"},
            "mode": "regions",
            "max_extensions": 2,
        },
    },
    "fig4": {
        "variant": "prevalence-dependent",
        "params": dict(_FIG4, b=1.4, r_c=9000.0, r_d=1.0),
        "initial": {"L_v": 2e4, "A_v": 2e4, "w": 0.3},
        "time": {"t0": 0.0, "t1": 1000.0},
        "integrator": {"rel_tol": 1e-6},
        "sweep": {
            "axis1": {"name": "N", "min": 1.4, "max": 2.8, "count": 16, "scale": "linear"},
            "axis2": {"name": "rc_over_rd", "min": 5000.0, "max": 15000.0, "count": 16, "scale": "linear"},
            "mode": "oscillations",
            "max_extensions": 3,
        },
    },
    "fig4-oscillation": {
        "variant": "prevalence-dependent",
        "params": dict(_FIG4, b=1.4, r_c=9000.0, r_d=1.0),
        "initial": {"L_v": 2e4, "A_v": 2e4, "w": 0.3},
        "time": {"t0": 0.0, "t1": 1000.0},
        "integrator": {"sample_stride": 0.5},
    },
    "fig-s": {
        "variant": "intervention",
        "params": dict(_FIG2, b=10.0, r_c=3.0, r_d=1.5, gamma=0.4),
        "initial": {"L_v": 2e4, "A_v": 2e4, "w": 0.5},
        "time": {"t0": 0.0, "t1": 100.0},
        "integrator": {"rel_tol": 1e-6},
        "sweep": {
            "axis1": {"name": "b", "min": 0.1, "max": 15.0, "count": 40, "scale": "linear"},
            "axis2": {"name": "rc_minus_rd", "min": -1.0, "max": 2.0, "count": 40, "scale": "linear"},
            "mode": "regions",
            "max_extensions": 4,
        },
    },
}


def preset(name: str) -> dict:
    try:
        return copy.deepcopy(PRESETS[name])
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}") from None


def resolve(config_path=None, preset_name=None, overrides=()) -> RunConfig:
    """Preset, then config file, then ``--set`` overrides, validated as one document."""
    data: dict = {}
    if preset_name:
        data = preset(preset_name)
    if config_path:
        data = deep_merge(data, load_file(config_path))
    for text in overrides:
        data = apply_override(data, text)
    return RunConfig.from_dict(data)
