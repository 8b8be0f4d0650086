"""SVG charts built from benchmark result files.

Output is a pure function of the inputs: the SVG id salt is fixed and the
creation date is omitted, so regenerating from the same files gives the same
bytes.
"""
from __future__ import annotations

import csv
import logging
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

log = logging.getLogger(__name__)


def _read(path):
    path = Path(path)
    if not path.exists():
        return []
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _save(fig, path):
    with matplotlib.rc_context({"svg.hashsalt": "spatialrent", "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def metric_series(rows):
    """``{(metric, scale): {model: [(n, value), ...]}}`` with points sorted by n."""
    out = {}
    for r in rows:
        key = (r["metric"], r["scale"])
        out.setdefault(key, {}).setdefault(r["model"], []).append((int(r["n"]), float(r["value"])))
    for series in out.values():
        for pts in series.values():
            pts.sort()
    return out


def emit_plots(results_dir, out_dir=None):
    """One chart per metric and scale, plus a band chart at the largest n.

    Returns the written paths; with no results, warns and writes nothing.
    """
    results_dir = Path(results_dir)
    out_dir = Path(out_dir) if out_dir is not None else results_dir
    rows = _read(results_dir / "results.csv")
    if not rows:
        log.warning("no results found in %s; no plots written", results_dir)
        return []
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for (metric, scale), series in sorted(metric_series(rows).items()):
        fig, ax = plt.subplots(figsize=(6, 4))
        for model in sorted(series):
            ns, vals = zip(*series[model])
            ax.plot(ns, vals, marker="o", label=model)
        ax.set_xscale("log")
        ax.set_xlabel("sample size n")
        ax.set_ylabel(f"{metric.upper()} ({scale} scale)")
        ax.legend(fontsize="small")
        path = out_dir / f"{metric}_{scale}.svg"
        _save(fig, path)
        written.append(path)
    bands = _read(results_dir / "bands.csv")
    if bands:
        n_max = max(int(b["n"]) for b in bands)
        fig, ax = plt.subplots(figsize=(6, 4))
        for model in sorted({b["model"] for b in bands}):
            pts = [((float(b["band_low"]) + float(b["band_high"])) / 2,
                    float(b["mape"]) if b["mape"] else math.nan)
                   for b in bands if b["model"] == model and int(b["n"]) == n_max]
            xs, ys = zip(*sorted(pts))
            ax.plot(xs, ys, marker="o", label=model)
        ax.set_xlabel("log rent (band midpoint)")
        ax.set_ylabel("MAPE (log scale)")
        ax.set_title(f"n = {n_max}")
        ax.legend(fontsize="small")
        path = out_dir / "bands.svg"
        _save(fig, path)
        written.append(path)
    return written
