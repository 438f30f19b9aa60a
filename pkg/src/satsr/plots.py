"""Loss-curve rendering from the training CSV log.

Headless by construction (Agg backend); one PNG per loss term plus a
combined grid.  Branch colors are fixed so downstream tooling can key on
them.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  backend must be set first

from .train import LOSS_CSV_HEADER

PLOT_TERMS = ("l2", "lpips", "csd", "fft", "ndvi", "total")

BRANCH_COLORS = {"rgb": "#1f77b4", "ir": "#d62728"}


def parse_loss_log(path) -> list[dict]:
    """Rows of the training log as dicts with typed fields.

    Raises ValueError naming the first malformed line.
    """
    expected = LOSS_CSV_HEADER.split(",")
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != expected:
            raise ValueError(f"{path}: bad header {header!r}")
        for lineno, raw in enumerate(reader, start=2):
            if not raw:
                continue
            if len(raw) != len(expected):
                raise ValueError(
                    f"{path}: line {lineno}: expected {len(expected)} "
                    f"fields, got {len(raw)}"
                )
            try:
                row = {"step": int(raw[0]), "branch": raw[1]}
                for name, value in zip(expected[2:], raw[2:]):
                    row[name] = float(value)
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
            if row["branch"] not in BRANCH_COLORS:
                raise ValueError(
                    f"{path}: line {lineno}: unknown branch "
                    f"{row['branch']!r}"
                )
            rows.append(row)
    return rows


def _draw_term(ax, rows: list[dict], term: str) -> None:
    for branch, color in BRANCH_COLORS.items():
        steps = [r["step"] for r in rows if r["branch"] == branch]
        values = [r[term] for r in rows if r["branch"] == branch]
        ax.plot(steps, values, color=color, label=branch, linewidth=1.5)
    ax.set_xlabel("step")
    ax.set_ylabel(term)
    ax.grid(alpha=0.3)
    ax.legend(loc="upper right")


def plot_loss_curves(log_path, out_dir) -> list[str]:
    """One PNG per term plus combined.png; returns the written paths."""
    rows = parse_loss_log(log_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for term in PLOT_TERMS:
        fig, ax = plt.subplots(figsize=(6.0, 4.0), dpi=100)
        _draw_term(ax, rows, term)
        fig.tight_layout()
        path = out_dir / f"loss_{term}.png"
        fig.savefig(path)
        plt.close(fig)
        written.append(str(path))

    fig, axes = plt.subplots(2, 3, figsize=(14.0, 8.0), dpi=100)
    for ax, term in zip(axes.ravel(), PLOT_TERMS):
        _draw_term(ax, rows, term)
    fig.tight_layout()
    combined = out_dir / "combined.png"
    fig.savefig(combined)
    plt.close(fig)
    written.append(str(combined))
    return written
