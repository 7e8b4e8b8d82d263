"""``mosqgame`` command line: simulate, report and sweep."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys
from pathlib import Path

from . import __version__
from .analysis import (
    AttractorOutcome,
    OscillationMetrics,
    SweepResult,
    run_sweep,
    simulate_outcome,
    trend_summary,
)
from .config import SCHEMA_VERSION, ConfigError, RunConfig, resolve
from .equilibria import e05_existence_interval, enumerate_equilibria
from .integrator import IntegrationError, InvalidInitialState
from .model import Params, Variant
from .stability import (
    AnalyticNumericMismatch,
    char_poly_coeffs_e05,
    classify_equilibrium,
    hopf_analysis,
    hopf_frequency,
    onset_period,
    transversality_rate,
)

OUT_ENV = "MOSQGAME_OUT"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def fmt(x) -> str:
    """Fixed 17-significant-digit text for CSV cells."""
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def clean(obj):
    """JSON-safe copy: non-finite floats become null, tuples become lists."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, complex):
        return [clean(obj.real), clean(obj.imag)]
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        return clean(obj.item())
    return obj


def dump_json(obj) -> str:
    return json.dumps(clean(obj), indent=2, allow_nan=False) + "\n"


def output_dir(cfg: RunConfig, cli_out: str | None) -> Path:
    path = Path(cli_out or cfg.output.dir or os.environ.get(OUT_ENV) or "mosqgame-out")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _envelope(kind: str, cfg: RunConfig) -> dict:
    return {"schema_version": SCHEMA_VERSION, "kind": kind, "tool_version": __version__, "provenance": cfg.to_dict()}


def _metrics_dict(m: OscillationMetrics | None) -> dict | None:
    if m is None:
        return None
    out = {name: dataclasses.asdict(getattr(m, name)) for name in ("L_v", "A_v", "w")}
    out["spectral_period"] = m.spectral_period
    out["amplitude_ratio"] = m.amplitude_ratio
    return out


def _outcome_dict(o: AttractorOutcome) -> dict:
    return {
        "kind": o.kind.value,
        "label": o.name,
        "final_state": dict(o.final_state._asdict()),
        "convergence_error": o.convergence_error,
    }


# ---------------------------------------------------------------------------
# report


def build_report(params: Params) -> dict:
    """Analytic picture of one parameter point; everything follows from ``parameters``."""
    derived: dict = {"N": params.N, "alpha": params.alpha, "ratio": params.ratio}
    hopf = None
    if params.N > 1:
        derived["hopf_frequency"] = hopf_frequency(params)
        derived["onset_period"] = onset_period(params)
        if params.variant is Variant.PREVALENCE_DEPENDENT:
            lo, hi = e05_existence_interval(params)
            derived["existence_interval"] = [lo, hi]
            c = char_poly_coeffs_e05(params)
            derived["char_poly_e05"] = {"a2": c.a2, "a1": c.a1, "a0": c.a0, "P": c.P, "Q": c.Q, "hurwitz_gap": c.hurwitz_gap}
            h = hopf_analysis(params)
            hopf = {
                "B": h.B,
                "C": h.C,
                "discriminant": h.discriminant,
                "x1": h.x1,
                "x2": h.x2,
                "degenerate": h.degenerate,
                "k_c": h.k_c,
                "ratio_in_window": h.in_window(params.ratio),
                "transversality_rate_at_k_c": None if h.k_c is None else transversality_rate(params.replace(k=h.k_c)),
            }
    equilibria = []
    for eq in enumerate_equilibria(params):
        item = {
            "label": eq.label.value,
            "exists": eq.exists,
            "reason": eq.existence_reason,
            "boundary": eq.boundary,
            "degenerate": eq.degenerate,
            "state": dict(eq.state._asdict()),
            "verdict": None,
        }
        if eq.exists:
            v = classify_equilibrium(params, eq)
            item["verdict"] = {
                "label": v.label.value,
                "method": v.method.value,
                "analytic": v.analytic.value,
                "numeric": v.numeric.value,
                "reason": v.reason,
                "max_real_part": v.max_real_part,
                "eigenvalues": [[z.real, z.imag] for z in v.eigenvalues],
            }
        equilibria.append(item)
    return {
        "variant": params.variant.value,
        "parameters": params.flat(),
        "derived": derived,
        "hopf": hopf,
        "equilibria": equilibria,
    }


def cmd_report(cfg: RunConfig, out: Path) -> dict:
    doc = _envelope("report", cfg)
    doc.update(build_report(cfg.model_params()))
    (out / f"{cfg.output.prefix}_report.json").write_text(dump_json(doc))
    return doc


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(cfg: RunConfig, out: Path) -> dict:
    params = cfg.model_params()
    span = (cfg.time.t0, cfg.time.t1)
    outcome, traj = simulate_outcome(params, cfg.initial, span, cfg.integrator, cfg.analysis)

    csv_path = out / f"{cfg.output.prefix}_trajectory.csv"
    with csv_path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "L_v", "A_v", "w"])
        for t, row in zip(traj.times, traj.y):
            w.writerow([fmt(t), fmt(row[0]), fmt(row[1]), fmt(row[2])])

    doc = _envelope("simulate", cfg)
    doc.update(
        {
            "outcome": _outcome_dict(outcome),
            "metrics": _metrics_dict(outcome.metrics),
            "step_stats": {"accepted": traj.n_accepted, "rejected": traj.n_rejected},
            "samples": len(traj),
            "t_end": float(traj.times[-1]),
            "w_coordinates": traj.meta.get("w_coordinates"),
            "trajectory_csv": csv_path.name,
        }
    )
    (out / f"{cfg.output.prefix}_summary.json").write_text(dump_json(doc))
    return doc


# ---------------------------------------------------------------------------
# sweep

GRID_COLUMNS = [
    "i",
    "j",
    "axis1",
    "axis2",
    "N",
    "ratio",
    "analytic_label",
    "simulated_label",
    "convergence_error",
    "amplitude_L_v",
    "amplitude_A_v",
    "amplitude_w",
    "period_L_v",
    "period_A_v",
    "period_w",
    "jitter_L_v",
    "spectral_period",
    "error",
]


def grid_rows(result: SweepResult):
    for c in result.flat():
        m = c.metrics
        comp = lambda name, attr: None if m is None else getattr(getattr(m, name), attr)  # noqa: E731
        yield [
            str(c.i),
            str(c.j),
            fmt(c.x1),
            fmt(c.x2),
            fmt(c.N),
            fmt(c.ratio),
            c.analytic_label,
            c.simulated_label,
            fmt(c.convergence_error),
            fmt(comp("L_v", "amplitude")),
            fmt(comp("A_v", "amplitude")),
            fmt(comp("w", "amplitude")),
            fmt(comp("L_v", "period")),
            fmt(comp("A_v", "period")),
            fmt(comp("w", "period")),
            fmt(comp("L_v", "jitter")),
            fmt(None if m is None else m.spectral_period),
            c.error or "",
        ]


def cmd_sweep(cfg: RunConfig, out: Path, workers: int = 1, metrics: bool = False) -> dict:
    if cfg.sweep is None:
        raise ConfigError("sweep needs a [sweep] section (or a preset that has one)")
    if metrics:
        cfg = dataclasses.replace(cfg, sweep=dataclasses.replace(cfg.sweep, mode="oscillations"))
    result = run_sweep(cfg.sweep_spec(), workers=workers)

    grid_path = out / f"{cfg.output.prefix}_grid.csv"
    with grid_path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GRID_COLUMNS)
        w.writerows(grid_rows(result))

    counts: dict = {}
    for c in result.flat():
        key = f"{c.analytic_label}|{c.simulated_label}"
        counts[key] = counts.get(key, 0) + 1
    doc = _envelope("sweep", cfg)
    doc.update(
        {
            "mode": cfg.sweep.mode,
            "shape": list(result.shape),
            "axes": {
                "axis1": dataclasses.asdict(cfg.sweep.axis1) | {"values": list(result.axis1_values)},
                "axis2": dataclasses.asdict(cfg.sweep.axis2) | {"values": list(result.axis2_values)},
            },
            "analytic_labels": sorted({c.analytic_label for c in result.flat() if c.analytic_label}),
            "label_counts": dict(sorted(counts.items())),
            "overlays": result.overlays,
            "trend_summary": trend_summary(result) if cfg.sweep.mode == "oscillations" else None,
            "cells": [{"i": c.i, "j": c.j, "params": c.params, "error": c.error} for c in result.flat()],
            "grid_csv": grid_path.name,
        }
    )
    (out / f"{cfg.output.prefix}_sweep.json").write_text(dump_json(doc))
    return doc


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mosqgame", description=__doc__)
    parser.add_argument("--version", action="version", version=f"mosqgame {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("simulate", "integrate one trajectory and classify its long-time behaviour"),
        ("report", "tabulate equilibria, verdicts and Hopf quantities"),
        ("sweep", "evaluate a two-parameter grid"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="TOML or JSON run configuration")
        p.add_argument("--preset", help="named starting configuration")
        p.add_argument("--out", help=f"output directory (default: output.dir, ${OUT_ENV}, ./mosqgame-out)")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
        p.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
        if name == "sweep":
            p.add_argument("--metrics", action="store_true", help="amplitude/period per cell")
    return parser


def _fail(code: int, exc: BaseException) -> int:
    err = {"schema_version": SCHEMA_VERSION, "error": {"type": type(exc).__name__, "message": str(exc), "exit_code": code}}
    sys.stderr.write(json.dumps(err) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = resolve(args.config, args.preset, args.overrides)
        cfg.model_params()
        out = output_dir(cfg, args.out)
    except (ConfigError, ValueError, OSError) as exc:
        return _fail(EXIT_CONFIG, exc)
    try:
        if args.command == "simulate":
            doc = cmd_simulate(cfg, out)
            summary = {"outcome": doc["outcome"], "metrics": doc["metrics"]}
        elif args.command == "report":
            doc = cmd_report(cfg, out)
            summary = {"derived": doc["derived"], "hopf": doc["hopf"]}
        else:
            doc = cmd_sweep(cfg, out, workers=args.threads, metrics=args.metrics)
            summary = {"shape": doc["shape"], "label_counts": doc["label_counts"]}
    except (ConfigError, InvalidInitialState) as exc:
        return _fail(EXIT_CONFIG, exc)
    except (IntegrationError, AnalyticNumericMismatch, ArithmeticError, ValueError) as exc:
        return _fail(EXIT_NUMERIC, exc)
    sys.stdout.write(dump_json({"command": args.command, "out": str(out), **summary}))
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
