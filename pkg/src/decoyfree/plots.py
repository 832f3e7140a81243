"""Figure rendering for sweep results and standalone plot-script emission."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

__all__ = ["render_figures", "plot_script_text"]

_AXIS_LABELS = {
    "loss_db": "channel loss (dB)",
    "visibility": "visibility",
    "misalignment": "misalignment angle (rad)",
    "cutoff_K": "photon cutoff K",
    "N": "total signals N",
    "none": "scenario",
}

_STYLES = {"BB84": "o-", "NPAB": "s--", "SARG04": "d-."}


def render_figures(cells, out_stem: str | Path, optimized_mu: bool) -> list[str]:
    """Rate-vs-axis figure (log y) and, when the intensity was optimized, the
    mu-vs-axis companion. Returns the written paths."""
    out_stem = Path(out_stem)
    axis = cells[0].axis if cells else "none"
    protocols = sorted({c.protocol for c in cells})
    written = []

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for prot in protocols:
        pts = [(c.value, c.rate) for c in cells if c.protocol == prot and c.rate > 0]
        if pts:
            ax.semilogy(*zip(*pts), _STYLES.get(prot, "o-"), label=prot)
    ax.set_xlabel(_AXIS_LABELS.get(axis, axis))
    ax.set_ylabel("secret key rate per signal")
    if axis == "N":
        ax.set_xscale("log")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    path = f"{out_stem}_rate.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)

    if optimized_mu:
        fig, ax = plt.subplots(figsize=(6.4, 4.2))
        for prot in protocols:
            pts = [(c.value, c.mu) for c in cells if c.protocol == prot and not math.isnan(c.mu)]
            if pts:
                ax.semilogy(*zip(*pts), _STYLES.get(prot, "o-"), label=prot)
        ax.set_xlabel(_AXIS_LABELS.get(axis, axis))
        ax.set_ylabel("optimal mean photon number")
        if axis == "N":
            ax.set_xscale("log")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend()
        fig.tight_layout()
        path = f"{out_stem}_mu.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written


def plot_script_text(csv_path: str, axis: str) -> str:
    """Standalone script that renders rate-vs-axis on a log-y axis from the CSV."""
    xlabel = _AXIS_LABELS.get(axis, axis)
    return f'''#!/usr/bin/env python3
"""Render the key-rate sweep in {csv_path} (log-y rate versus {xlabel})."""
import csv
from collections import defaultdict

import matplotlib.pyplot as plt

series = defaultdict(list)
with open({csv_path!r}) as fh:
    for row in csv.DictReader(fh):
        rate = float(row["rate_per_signal"])
        if rate > 0:
            series[row["protocol"]].append((float(row["axis_value"]), rate))

fig, ax = plt.subplots(figsize=(6.4, 4.2))
for protocol, pts in sorted(series.items()):
    pts.sort()
    ax.semilogy(*zip(*pts), marker="o", label=protocol)
ax.set_xlabel({xlabel!r})
ax.set_ylabel("secret key rate per signal")
ax.grid(True, which="both", alpha=0.3)
ax.legend()
fig.tight_layout()
fig.savefig({csv_path!r}.rsplit(".", 1)[0] + "_rate.png", dpi=150)
print("wrote", {csv_path!r}.rsplit(".", 1)[0] + "_rate.png")
'''
