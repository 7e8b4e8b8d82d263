"""Shared bits for the experiment scripts: argument parsing and a text rendering of label grids."""

import argparse
import csv
from pathlib import Path

from mosqgame.cli import cmd_sweep
from mosqgame.config import resolve

GLYPHS = {
    "E01": "1",
    "E02": "2",
    "E03": "3",
    "E04": "4",
    "E05": "5",
    "E01_tilde": "a",
    "E03_tilde": "c",
    "oscillation": "~",
    "undecided": "?",
    "": " ",
}


def parser(description: str, preset: str) -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(description=description)
    ap.add_argument("--preset", default=preset)
    ap.add_argument("--out", default=f"results/{preset}")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    return ap


def run(args, metrics: bool = False):
    """Run the sweep through the CLI layer; returns the summary document and the grid rows."""
    cfg = resolve(preset_name=args.preset, overrides=args.set)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = cmd_sweep(cfg, out, workers=args.threads, metrics=metrics)
    with (out / doc["grid_csv"]).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    return doc, rows


def label_map(doc: dict, rows: list[dict], key: str = "simulated_label") -> str:
    """Rows of text are axis-2 values (largest on top); columns are axis-1 values."""
    n1, n2 = doc["shape"]
    a1, a2 = doc["axes"]["axis1"], doc["axes"]["axis2"]
    grid = {(int(r["i"]), int(r["j"])): r[key] for r in rows}
    lines = []
    for j in reversed(range(n2)):
        row = "".join(GLYPHS.get(grid[i, j], "x") for i in range(n1))
        lines.append(f"{a2['values'][j]:>12.5g} | {row}")
    lines.append(" " * 13 + "+" + "-" * n1)
    lines.append(f"{'':15}{a1['name']} {a1['values'][0]:.3g} .. {a1['values'][-1]:.3g}   (vertical: {a2['name']})")
    legend = "  ".join(f"{g}={k}" for k, g in GLYPHS.items() if k)
    lines.append(f"{'':15}{legend}")
    return "\n".join(lines)


def agreement(rows: list[dict]) -> tuple[int, int]:
    from mosqgame.analysis import labels_agree

    decided = [r for r in rows if r["simulated_label"] not in ("", "undecided")]
    return sum(labels_agree(r["analytic_label"], r["simulated_label"]) for r in decided), len(decided)
