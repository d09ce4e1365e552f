"""Render descent-history CSVs as log-log convergence figures.

Reads the pinned history schema produced by the ssdopt runner (the CSV is
the only coupling between the packages) and draws log-log decay plots:
single runs get the sampled dual norm against the cumulative step sum with
the (sum t_n)^(-1) reference curve dashed on top; run pairs are overlaid
for the steepest-descent versus gradient-descent comparison, for either
the dual norm or the Monte-Carlo energy column.
"""

from __future__ import annotations

import argparse
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

__version__ = "0.1.0"

#: versioned history schema shared with the runner
HISTORY_COLUMNS = ("n", "t_n", "dual_norm", "running_min", "cum_t", "rate_product", "energy")

QUANTITIES = {"derivative": "dual_norm", "energy": "energy"}


class SchemaError(ValueError):
    """The input file does not match the pinned history schema."""


@dataclass(frozen=True)
class PlotSpec:
    """One figure: input histories, output path, axis scale, labels."""

    inputs: tuple
    output: str
    quantity: str = "derivative"
    scale: str = "log-log"
    labels: tuple = ()
    reference: bool = True

    def __post_init__(self):
        if not self.inputs:
            raise ValueError("at least one input history is required")
        if self.quantity not in QUANTITIES:
            raise ValueError(f"quantity must be one of {sorted(QUANTITIES)}")
        if self.scale not in ("log-log", "linear"):
            raise ValueError("scale must be 'log-log' or 'linear'")


def load_history(path) -> dict:
    """Parse one history CSV; raises SchemaError on mismatch or no data."""
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"{path}: no such file")
    lines = path.read_text().splitlines()
    if not lines or tuple(lines[0].split(",")) != HISTORY_COLUMNS:
        raise SchemaError(f"{path}: header does not match {','.join(HISTORY_COLUMNS)}")
    if len(lines) == 1:
        raise SchemaError(f"{path}: no data rows")
    columns = {name: [] for name in HISTORY_COLUMNS}
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(HISTORY_COLUMNS):
            raise SchemaError(f"{path}: line {lineno}: expected {len(HISTORY_COLUMNS)} fields")
        try:
            for name, raw in zip(HISTORY_COLUMNS, parts):
                if name == "energy":
                    columns[name].append(float(raw) if raw else np.nan)
                else:
                    columns[name].append(float(raw))
        except ValueError:
            raise SchemaError(f"{path}: line {lineno}: unparsable number") from None
    return {name: np.asarray(vals) for name, vals in columns.items()}


def build_figure(spec: PlotSpec):
    """Assemble the figure for a spec (pure function of the CSV contents)."""
    histories = [load_history(p) for p in spec.inputs]
    column = QUANTITIES[spec.quantity]
    labels = spec.labels or _default_labels(len(histories), spec.quantity)

    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    for data, label in zip(histories, labels):
        x = data["cum_t"]
        y = data[column]
        keep = np.isfinite(y)
        if not keep.any():
            raise SchemaError(f"column {column!r} has no values to plot")
        ax.plot(x[keep], y[keep], marker=".", linewidth=1.2, label=label)
    if spec.reference:
        x = histories[0]["cum_t"]
        ax.plot(x, 1.0 / x, linestyle="--", color="black", linewidth=1.0,
                label=r"$(\sum_n t_n)^{-1}$")
    if spec.scale == "log-log":
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.set_xlabel(r"$\sum_{n \leq j} t_n$")
    ax.set_ylabel("Monte-Carlo energy" if spec.quantity == "energy" else "sampled dual norm")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    return fig


def _default_labels(count, quantity):
    if count == 2:
        return ("ssd", "sgd")
    return (quantity,) * count


def render(spec: PlotSpec) -> str:
    """Write the figure to spec.output (vector format by extension)."""
    fig = build_figure(spec)
    try:
        fig.savefig(spec.output)
    finally:
        plt.close(fig)
    return spec.output


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ssd-plots",
        description="Render descent-history CSVs as convergence figures.",
    )
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--input", metavar="HISTORY_CSV", help="single-run figure")
    group.add_argument("--compare", nargs=2, metavar=("SSD_CSV", "SGD_CSV"),
                       help="two-run comparison figure")
    parser.add_argument("--output", required=True, help="figure file (pdf/svg by extension)")
    parser.add_argument("--quantity", choices=sorted(QUANTITIES), default="derivative")
    parser.add_argument("--labels", nargs="*", default=None, help="series labels")
    parser.add_argument("--linear", action="store_true", help="linear axes instead of log-log")
    args = parser.parse_args(argv)

    inputs = tuple(args.compare) if args.compare else (args.input,)
    spec = PlotSpec(
        inputs=inputs,
        output=args.output,
        quantity=args.quantity,
        scale="linear" if args.linear else "log-log",
        labels=tuple(args.labels) if args.labels else (),
        reference=args.compare is None,
    )
    try:
        render(spec)
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}")
        return 1
    print(f"wrote {spec.output}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
