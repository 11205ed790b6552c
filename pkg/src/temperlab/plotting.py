"""Deterministic SVG line plots rendered from emitted CSV files.

CSV is the artifact of record; these renderings are a convenience.  The
output is byte-stable for identical input: fixed canvas, fixed hash salt,
and no embedded timestamps.
"""

from __future__ import annotations

import csv
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

_RC = {
    "svg.hashsalt": "temper-lab",
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 100,
    "font.size": 10,
}


def emit_svg_lineplot(
    csv_path,
    x_column: str,
    y_columns: Sequence[str],
    out_path,
    title: Optional[str] = None,
    logx: bool = False,
    logy: bool = False,
) -> str:
    """Render selected CSV columns as labeled polylines into an SVG file."""
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        missing = [c for c in [x_column, *y_columns] if c not in fields]
        if missing:
            raise ValueError(f"missing columns in {csv_path}: {missing}")
        rows = [r for r in reader]
    if not rows:
        raise ValueError(f"no data rows in {csv_path}")
    x = [float(r[x_column]) for r in rows]
    with matplotlib.rc_context(_RC):
        fig, ax = plt.subplots()
        for col in y_columns:
            ax.plot(x, [float(r[col]) for r in rows], label=col)
        ax.set_xlabel(x_column)
        if logx:
            ax.set_xscale("log")
        if logy:
            ax.set_yscale("log")
        if title:
            ax.set_title(title)
        ax.legend(loc="best")
        fig.tight_layout()
        fig.savefig(out_path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return str(out_path)
