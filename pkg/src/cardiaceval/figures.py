"""Matplotlib figure rendering for the report commands.

Each report emits PNG figures next to its CSV/markdown output: per-structure
accuracy bars with error bars, grouped box plots with significance stars,
covariate scatter grids with the correlation coefficient annotated, DVH
curve panels (solid model, dotted manual), and manual-vs-model scatter with
the identity line.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .reports import DoseTableRow, MetricSummary, StatsRow
from .stats import significance_stars
from .structures import SUBSTRUCTURES

plt.rcParams.update(
    {
        "figure.dpi": 120,
        "axes.labelsize": 9,
        "axes.titlesize": 10,
        "font.size": 9,
        "legend.fontsize": 8,
        "xtick.labelsize": 8,
        "ytick.labelsize": 8,
    }
)

# Fixed metadata keeps PNG bytes stable for identical inputs.
_PNG_META = {"Software": "cardiaceval"}


def _save(fig, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, metadata=_PNG_META)
    plt.close(fig)


def summary_bars(summaries: list[MetricSummary], path, title: str) -> None:
    """Two panels of per-structure mean +/- std bars: DSC and HD95."""
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.2))
    for ax, metric, label in zip(axes, ("dsc", "hd95_mm"), ("DSC", "HD95 (mm)")):
        rows = [s for s in summaries if s.metric == metric]
        xs = np.arange(len(rows))
        means = [s.mean if s.mean is not None else 0.0 for s in rows]
        stds = [s.std if s.std is not None else 0.0 for s in rows]
        ax.bar(xs, means, yerr=stds, capsize=3, color="#4878a8")
        ax.set_xticks(xs)
        ax.set_xticklabels([s.structure for s in rows])
        ax.set_ylabel(label)
        for x, s in zip(xs, rows):
            if s.n == 0:
                ax.text(x, 0.02, "-", ha="center", fontsize=12)
        if metric == "dsc":
            ax.set_ylim(0, 1.05)
    fig.suptitle(title)
    fig.tight_layout()
    _save(fig, path)


def group_boxplots(
    per_structure: dict[str, dict[str, list[float]]],
    stats_rows: list[StatsRow],
    metric_label: str,
    grouping: str,
    path,
) -> None:
    """Side-by-side box plots per structure for two groups, starred when the
    (corrected) rank-sum p crosses a significance level."""
    stars_by_structure = {}
    for row in stats_rows:
        if row.result is not None:
            p = row.result.p_corrected if row.result.p_corrected is not None else row.result.p_value
            stars_by_structure[row.structure] = significance_stars(p)
    groups = sorted({g for by_group in per_structure.values() for g in by_group})
    fig, ax = plt.subplots(figsize=(9, 3.2))
    width = 0.35
    colors = ("#4878a8", "#d1605e")
    for gi, group in enumerate(groups[:2]):
        positions, data = [], []
        for si, name in enumerate(SUBSTRUCTURES):
            vals = per_structure.get(name, {}).get(group, [])
            if vals:
                positions.append(si + (gi - 0.5) * width)
                data.append(vals)
        if data:
            bp = ax.boxplot(
                data,
                positions=positions,
                widths=width * 0.9,
                patch_artist=True,
                showfliers=False,
                medianprops={"color": "black"},
            )
            for box in bp["boxes"]:
                box.set_facecolor(colors[gi % 2])
                box.set_alpha(0.7)
    for si, name in enumerate(SUBSTRUCTURES):
        stars = stars_by_structure.get(name, "")
        if stars:
            top = max(
                (max(v) for v in per_structure.get(name, {}).values() if v),
                default=1.0,
            )
            ax.text(si, top * 1.02, stars, ha="center")
    ax.set_xticks(range(len(SUBSTRUCTURES)))
    ax.set_xticklabels(SUBSTRUCTURES)
    ax.set_ylabel(metric_label)
    handles = [plt.Rectangle((0, 0), 1, 1, facecolor=c, alpha=0.7) for c in colors[: len(groups[:2])]]
    ax.legend(handles, groups[:2], title=grouping)
    fig.tight_layout()
    _save(fig, path)


def correlation_scatter_grid(
    points_by_structure: dict[str, list[tuple[str, float, float]]],
    rho_by_structure: dict[str, float | None],
    covariate: str,
    path,
) -> None:
    """2x4 grid of covariate-vs-DSC scatter plots with rho annotations."""
    fig, axes = plt.subplots(2, 4, figsize=(11, 5), sharey=True)
    for ax, name in zip(axes.ravel(), SUBSTRUCTURES):
        pts = points_by_structure.get(name, [])
        if pts:
            xs = [p[1] for p in pts]
            ys = [p[2] for p in pts]
            ax.scatter(xs, ys, s=8, color="#4878a8", alpha=0.7)
        rho = rho_by_structure.get(name)
        if rho is not None:
            ax.text(0.97, 0.95, f"ρ = {rho:.2f}", ha="right", va="top", transform=ax.transAxes)
        ax.set_title(name)
        ax.set_xlabel(covariate)
    axes[0, 0].set_ylabel("DSC")
    axes[1, 0].set_ylabel("DSC")
    fig.tight_layout()
    _save(fig, path)


def dvh_panel(
    curves_manual,
    curves_predicted,
    case_id: str,
    path,
) -> None:
    """Per-case DVH curves: dotted manual, solid model, one color per
    structure."""
    fig, ax = plt.subplots(figsize=(6, 4))
    cmap = plt.get_cmap("tab10")
    color_by_structure = {name: cmap(i % 10) for i, name in enumerate(SUBSTRUCTURES)}
    for curve in curves_manual:
        ax.plot(
            curve.dose_edges_gy,
            curve.volume_pct,
            linestyle=":",
            color=color_by_structure.get(curve.structure, "gray"),
        )
    for curve in curves_predicted:
        ax.plot(
            curve.dose_edges_gy,
            curve.volume_pct,
            linestyle="-",
            label=curve.structure,
            color=color_by_structure.get(curve.structure, "gray"),
        )
    ax.set_xlabel("Dose (Gy)")
    ax.set_ylabel("Volume (%)")
    ax.set_title(f"{case_id} (dotted = manual, solid = model)")
    ax.legend(ncol=2)
    fig.tight_layout()
    _save(fig, path)


def dose_scatter_grid(rows: list[DoseTableRow], pairs_by_structure, path) -> None:
    """Manual-vs-model designated-metric scatter with the y = x line."""
    fig, axes = plt.subplots(2, 4, figsize=(11, 5))
    metric_by_structure = {r.structure: r.metric for r in rows}
    for ax, name in zip(axes.ravel(), SUBSTRUCTURES):
        pairs = pairs_by_structure.get(name, [])
        if pairs:
            xs = [p[0] for p in pairs]
            ys = [p[1] for p in pairs]
            ax.scatter(xs, ys, s=10, color="#4878a8", alpha=0.7)
            lim = (min(xs + ys), max(xs + ys))
            pad = 0.05 * (lim[1] - lim[0] or 1.0)
            lims = (lim[0] - pad, lim[1] + pad)
            ax.plot(lims, lims, linestyle="--", color="#e08214", linewidth=1)
            ax.set_xlim(lims)
            ax.set_ylim(lims)
        ax.set_title(f"{name} ({metric_by_structure.get(name, '')})")
        ax.set_xlabel("Manual")
        ax.set_ylabel("Model")
    fig.tight_layout()
    _save(fig, path)
