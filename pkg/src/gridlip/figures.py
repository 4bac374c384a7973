"""Figure rendering for study reports.

Everything draws through the Agg backend straight to files; nothing here
opens a window.  Functions return the list of paths written so callers can
log or test them.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .errors import ValidationError
from .experiments import StudyResult

__all__ = ["render_scaling", "render_deviation", "render_from_csv"]

_DPI = 130


def _finish(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def render_scaling(result: StudyResult, outdir: str | Path) -> list[Path]:
    """Ratio scatter and the max-ratio trend for a scaling study."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    q = result.plan.q
    written = []

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for row in result.rows:
        pts = [
            r.lipschitz / math.log2(r.n) ** q
            for r in result.records
            if r.n == row.n and r.lipschitz is not None
        ]
        ax.plot([row.n] * len(pts), pts, ".", color="#4878a8", alpha=0.25, markersize=4)
    ns = [row.n for row in result.rows if row.max_ratio is not None]
    tops = [row.max_ratio for row in result.rows if row.max_ratio is not None]
    ax.plot(ns, tops, "o-", color="#b03030", label="max over trials")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("n")
    ax.set_ylabel(f"Lip(g) / (log n)^{q:g}")
    ax.set_title("Normalized pipeline constant")
    ax.legend()
    written.append(_finish(fig, outdir / "scaling_ratio.png"))

    fig, ax = plt.subplots(figsize=(7, 4.5))
    ns = [row.n for row in result.rows if row.max_lipschitz is not None]
    tops = [row.max_lipschitz for row in result.rows if row.max_lipschitz is not None]
    ax.plot(ns, tops, "s-", color="#b03030", label="max Lip(g)")
    ref = [math.log2(n) ** q for n in ns]
    ax.plot(ns, ref, "--", color="#777777", label=f"(log n)^{q:g}")
    ax.set_xscale("log", base=2)
    ax.set_yscale("log", base=2)
    ax.set_xlabel("n")
    ax.set_ylabel("stretch")
    ax.set_title("Pipeline constant against the target rate")
    ax.legend()
    written.append(_finish(fig, outdir / "scaling_rate.png"))
    return written


def render_deviation(result: StudyResult, outdir: str | Path) -> list[Path]:
    """Observed deviation frequency against the union bound, per scale."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    scales = sorted({row.threshold_scale for row in result.rows})
    fig, axes = plt.subplots(
        1, len(scales), figsize=(4.2 * len(scales), 4.2), squeeze=False
    )
    floor = 0.5 / max(1, result.plan.trials)
    for ax, scale in zip(axes[0], scales):
        rows = sorted(
            (r for r in result.rows if r.threshold_scale == scale),
            key=lambda r: r.n,
        )
        ns = [r.n for r in rows]
        freq = [max(r.freq_low + r.freq_high, floor) for r in rows]
        union = [max(min(r.union_bound, 4.0), floor * 1e-6) for r in rows]
        ax.plot(ns, freq, "o-", color="#4878a8", label="observed")
        ax.plot(ns, union, "^--", color="#b03030", label="union bound")
        ax.set_xscale("log", base=2)
        ax.set_yscale("log")
        ax.set_xlabel("n")
        ax.set_title(f"scale {scale:g}")
        ax.legend(fontsize=8)
    axes[0][0].set_ylabel("P(some cell deviates)")
    fig.suptitle("Cell-count deviation events")
    written = [_finish(fig, outdir / "deviation_bounds.png")]

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for row in sorted(result.rows, key=lambda r: r.n):
        if row.threshold_scale != scales[0]:
            continue
        here = [r for r in result.records if r.n == row.n]
        center = row.n**result.plan.d / row.m**result.plan.d
        spread = [(r.min_count / center, r.max_count / center) for r in here]
        los = sorted(s[0] for s in spread)
        his = sorted(s[1] for s in spread)
        xs = [i / max(1, len(here) - 1) for i in range(len(here))]
        ax.plot(xs, los, color="#4878a8", alpha=0.8, label=f"n={row.n} min")
        ax.plot(xs, his, color="#b03030", alpha=0.8, label=f"n={row.n} max")
    ax.axhline(1.0, color="#777777", linewidth=0.8)
    ax.set_xlabel("trial quantile")
    ax.set_ylabel("cell count / expected")
    ax.set_title("Extreme cell occupancy across trials")
    ax.legend(fontsize=7, ncol=2)
    written.append(_finish(fig, outdir / "deviation_spread.png"))
    return written


def render_from_csv(csv_path: str | Path, outdir: str | Path) -> list[Path]:
    """Re-render what a records CSV supports, without the summary rows.

    With any lipschitz entries present this draws the per-n stretch spread;
    otherwise it falls back to the min/max occupancy picture.
    """
    csv_path = Path(csv_path)
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        needed = {"n", "level", "min_count", "max_count", "lipschitz"}
        if reader.fieldnames is None or not needed <= set(reader.fieldnames):
            raise ValidationError(f"{csv_path} is not a records CSV")
        records = list(reader)
    if not records:
        raise ValidationError(f"{csv_path} has no data rows")

    by_n: dict[int, list[dict]] = {}
    for rec in records:
        by_n.setdefault(int(rec["n"]), []).append(rec)
    lips_present = any(rec["lipschitz"] for rec in records)

    fig, ax = plt.subplots(figsize=(7, 4.5))
    if lips_present:
        for n, recs in sorted(by_n.items()):
            vals = [float(r["lipschitz"]) for r in recs if r["lipschitz"]]
            ax.plot([n] * len(vals), vals, ".", color="#4878a8", alpha=0.3, markersize=4)
        ns = sorted(by_n)
        tops = [
            max((float(r["lipschitz"]) for r in by_n[n] if r["lipschitz"]), default=None)
            for n in ns
        ]
        keep = [(n, t) for n, t in zip(ns, tops) if t is not None]
        ax.plot([n for n, _ in keep], [t for _, t in keep], "o-", color="#b03030")
        ax.set_xscale("log", base=2)
        ax.set_ylabel("Lip(g)")
        ax.set_title("Pipeline constants by n")
        name = "records_lipschitz.png"
    else:
        for n, recs in sorted(by_n.items()):
            level = int(recs[0]["level"])
            d = _infer_dimension(recs[0])
            center = n**d / (1 << level) ** d
            los = sorted(int(r["min_count"]) / center for r in recs)
            his = sorted(int(r["max_count"]) / center for r in recs)
            xs = [i / max(1, len(recs) - 1) for i in range(len(recs))]
            ax.plot(xs, los, alpha=0.8, label=f"n={n} min")
            ax.plot(xs, his, alpha=0.8, label=f"n={n} max")
        ax.axhline(1.0, color="#777777", linewidth=0.8)
        ax.set_xlabel("trial quantile")
        ax.set_ylabel("cell count / expected")
        ax.set_title("Extreme cell occupancy across trials")
        ax.legend(fontsize=7, ncol=2)
        name = "records_counts.png"
    return [_finish(fig, outdir / name)]


def _infer_dimension(rec: dict) -> int:
    """The CSV drops d; recover it from counts ~ n^d/m^d when possible."""
    n = int(rec["n"])
    m = 1 << int(rec["level"])
    mid = (int(rec["min_count"]) + int(rec["max_count"])) / 2
    if mid <= 0 or n == m:
        return 2
    est = math.log(mid) / math.log(n / m)
    return max(1, round(est))
