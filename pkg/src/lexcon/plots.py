"""Evaluation figures (matplotlib, file output only)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .evaluate import EvalReport  # noqa: E402


def placement_scatter(report: EvalReport, path) -> Path:
    """Reference vs hypothesis start character of every satisfied constraint."""
    xs = [x for r in report.per_case for x in r.ref_start_chars]
    ys = [y for r in report.per_case for y in r.hyp_start_chars]
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.scatter(xs, ys, s=8, alpha=0.6)
    top = max(xs + ys, default=1)
    ax.plot([0, top], [0, top], lw=0.8, color="grey", ls="--")
    rho = "n/a" if report.placement_rho is None else f"{report.placement_rho:.3f}"
    ax.set_title(f"constraint placement (rho = {rho})")
    ax.set_xlabel("reference start (chars)")
    ax.set_ylabel("hypothesis start (chars)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def coverage_bars(report: EvalReport, path) -> Path:
    labels = ["Cvg", "Cvg_L"]
    values = [100 * report.cvg, 100 * report.cvg_l]
    if report.cvg_emitted is not None:
        labels.append("Cvg_emitted")
        values.append(100 * report.cvg_emitted)
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    bars = ax.bar(labels, values, color=["#4c72b0", "#55a868", "#c44e52"][:len(values)])
    ax.bar_label(bars, fmt="%.1f")
    ax.set_ylim(0, 105)
    ax.set_ylabel("% of constraints")
    misses = ", ".join(f"{k}: {v}" for k, v in sorted(report.miss_buckets.items()))
    ax.set_title(misses or "no misses", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def render_report(report: EvalReport, outdir) -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    return [placement_scatter(report, outdir / "placement.png"),
            coverage_bars(report, outdir / "coverage.png")]
