"""Deterministic CSV / JSON / SVG artifacts for sweep records."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

from . import __version__
from .constants import CONSTANTS
from .sweep import COLUMNS, PlotSpec, SweepConfig, plot_spec

SCHEMA_VERSION = "1.0"


def _cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def records_csv(records: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for rec in records:
        writer.writerow([_cell(rec[c]) for c in COLUMNS])
    return buf.getvalue()


def meta_json(records: list[dict], config: SweepConfig) -> str:
    counts: dict[str, int] = {}
    for rec in records:
        counts[rec["status"]] = counts.get(rec["status"], 0) + 1
    meta = {
        "artifact_version": __version__,
        "schema_version": SCHEMA_VERSION,
        "columns": list(COLUMNS),
        "config": config.to_dict(),
        "constants": CONSTANTS,
        "n_records": len(records),
        "status_counts": dict(sorted(counts.items())),
    }
    return json.dumps(meta, indent=2, sort_keys=True) + "\n"


def _series(records, curve):
    pts = [
        (r["log10_alpha2"], r[curve.column])
        for r in records
        if r["status"] == "ok" and r["T"] == curve.T and r["variant"] == curve.variant
    ]
    pts = [(x, y) for x, y in pts if math.isfinite(x) and math.isfinite(y) and y > 0]
    return [p[0] for p in pts], [p[1] for p in pts]


def records_svg(records: list[dict], spec: PlotSpec) -> str:
    """Log-y line plot against ``log10 |alpha|^2``."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    style = {"svg.hashsalt": "optoqet", "svg.fonttype": "none"}
    with matplotlib.rc_context(style):
        fig, ax = plt.subplots(figsize=(6.4, 4.8))
        for curve in spec.curves:
            x, y = _series(records, curve)
            ax.plot(x, y, curve.style, label=curve.label, linewidth=1.4)
        ax.set_yscale("log")
        ax.set_xlabel("log10 |alpha|^2")
        ax.set_ylabel(spec.ylabel)
        ax.set_title(spec.title)
        ax.legend(fontsize="small")
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
        plt.close(fig)
    return buf.getvalue()


def emit(records: list[dict], config: SweepConfig, out_dir=None) -> list[Path]:
    """Write the requested formats and return the paths written."""
    if not records:
        raise ValueError("no records to emit")
    if not config.formats:
        raise ValueError("no output formats requested")
    out = Path(out_dir if out_dir is not None else config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in config.formats:
        path = out / "records.csv"
        path.write_text(records_csv(records))
        written.append(path)
    if "json" in config.formats:
        path = out / "meta.json"
        path.write_text(meta_json(records, config))
        written.append(path)
    if "svg" in config.formats:
        path = out / f"{config.preset or 'sweep'}.svg"
        path.write_text(records_svg(records, plot_spec(config)))
        written.append(path)
    return written
