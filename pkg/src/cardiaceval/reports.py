"""CSV and markdown report emitters.

Every writer produces byte-identical output for identical inputs: rows are
emitted in fixed structure order and case-id order, and floats go through
fixed format strings. CSVs are the machine-readable artifacts; markdown
tables mirror them for humans.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

from .dosimetry import DvhCurve
from .geom_metrics import STATUS_COMPUTED, StructureScore
from .manifest import SplitAssignment
from .stats import CorrelationResult, TestResult, significance_stars, summarize
from .structures import FULL_NAMES, SUBSTRUCTURES

SCORE_COLUMNS = ["case_id", "structure", "status", "dsc", "hd95_mm"]


def fmt_float(x: float | None) -> str:
    return "" if x is None else f"{x:.10g}"


def fmt_p(p: float | None) -> str:
    return "" if p is None else f"{p:.4g}"


def _write_rows(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _write_markdown(path, lines) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


def _md_table(header: list[str], rows: list[list[str]]) -> list[str]:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join(" --- " for _ in header) + "|"]
    lines += ["| " + " | ".join(row) + " |" for row in rows]
    return lines


# ---------------------------------------------------------------------------
# per-case structure scores and their summary
# ---------------------------------------------------------------------------


def write_scores_csv(scored: list[tuple[str, list[StructureScore]]], path) -> None:
    rows = []
    for case_id, scores in sorted(scored, key=lambda cs: cs[0]):
        for s in scores:
            rows.append([case_id, s.structure, s.status, fmt_float(s.dsc), fmt_float(s.hd95_mm)])
    _write_rows(path, SCORE_COLUMNS, rows)


def read_scores_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != SCORE_COLUMNS:
            raise ValueError(f"{path}: expected score columns {SCORE_COLUMNS}, got {reader.fieldnames}")
        out = []
        for row in reader:
            out.append(
                {
                    "case_id": row["case_id"],
                    "structure": row["structure"],
                    "status": row["status"],
                    "dsc": float(row["dsc"]) if row["dsc"] else None,
                    "hd95_mm": float(row["hd95_mm"]) if row["hd95_mm"] else None,
                }
            )
        return out


@dataclass(frozen=True)
class MetricSummary:
    structure: str
    metric: str
    n: int
    n_missing: int
    mean: float | None
    std: float | None


def summarize_scores(scored: list[tuple[str, list[StructureScore]]]) -> list[MetricSummary]:
    """Per-structure mean/std over computed cases only; absent structures
    are counted, never averaged as zero."""
    out = []
    for name in SUBSTRUCTURES:
        for metric in ("dsc", "hd95_mm"):
            values = []
            missing = 0
            for _, scores in scored:
                score = next(s for s in scores if s.structure == name)
                if score.status == STATUS_COMPUTED:
                    values.append(getattr(score, metric))
                else:
                    missing += 1
            if values:
                mean, std = summarize(values)
            else:
                mean, std = None, None
            out.append(
                MetricSummary(
                    structure=name,
                    metric=metric,
                    n=len(values),
                    n_missing=missing,
                    mean=mean,
                    std=std,
                )
            )
    return out


def _summary_cell(s: MetricSummary, decimals: int) -> str:
    if s.n == 0:
        return "-"
    cell = f"{s.mean:.{decimals}f}"
    if s.std is not None:
        cell += f" ±{s.std:.{decimals}f}"
    if s.n_missing:
        cell += f" ({s.n} scan{'s' if s.n != 1 else ''})"
    return cell


def write_summary(summaries: list[MetricSummary], csv_path, md_path, title: str) -> None:
    rows = [
        [s.structure, s.metric, str(s.n), str(s.n_missing), fmt_float(s.mean), fmt_float(s.std)]
        for s in summaries
    ]
    _write_rows(csv_path, ["structure", "metric", "n", "n_missing", "mean", "std"], rows)

    by_key = {(s.structure, s.metric): s for s in summaries}
    dsc_row = ["DSC"] + [_summary_cell(by_key[(n, "dsc")], 2) for n in SUBSTRUCTURES]
    hd_row = ["HD95 (mm)"] + [_summary_cell(by_key[(n, "hd95_mm")], 2) for n in SUBSTRUCTURES]
    lines = [f"# {title}", ""]
    lines += _md_table([""] + list(SUBSTRUCTURES), [dsc_row, hd_row])
    missing = [
        f"- {s.structure} {s.metric}: {s.n_missing} case(s) not segmented (excluded from the mean)"
        for s in summaries
        if s.n_missing
    ]
    if missing:
        lines += ["", "Notes:"] + missing
    _write_markdown(md_path, lines)


# ---------------------------------------------------------------------------
# statistical test tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StatsRow:
    structure: str
    metric: str
    result: TestResult | None
    note: str = ""


def write_stats_table(rows: list[StatsRow], csv_path, md_path, title: str) -> None:
    csv_rows = []
    for row in rows:
        r = row.result
        csv_rows.append(
            [
                row.structure,
                row.metric,
                fmt_float(r.statistic) if r else "",
                str(r.n_effective) if r else "",
                fmt_p(r.p_value) if r else "",
                fmt_p(r.p_corrected) if r else "",
                significance_stars(r.p_corrected if r.p_corrected is not None else r.p_value) if r else "",
                (r.method + (" (degenerate)" if r.degenerate else "")) if r else row.note,
            ]
        )
    _write_rows(
        csv_path,
        ["structure", "metric", "statistic", "n", "p_value", "p_corrected", "stars", "method"],
        csv_rows,
    )

    md_rows = []
    for row in rows:
        r = row.result
        if r is None:
            md_rows.append([FULL_NAMES.get(row.structure, row.structure), row.metric, "-", "-", row.note])
            continue
        stars = significance_stars(r.p_corrected if r.p_corrected is not None else r.p_value)
        md_rows.append(
            [
                FULL_NAMES.get(row.structure, row.structure),
                row.metric,
                fmt_p(r.p_value),
                fmt_p(r.p_corrected) if r.p_corrected is not None else "-",
                stars,
            ]
        )
    lines = [f"# {title}", ""]
    lines += _md_table(["Structure", "Metric", "p-value", "p-value (Bonferroni)", ""], md_rows)
    _write_markdown(md_path, lines)


# ---------------------------------------------------------------------------
# correlation tables and scatter data
# ---------------------------------------------------------------------------


def write_correlation_table(
    rows: list[tuple[str, CorrelationResult | None, str]], covariate: str, csv_path, md_path
) -> None:
    csv_rows = []
    md_rows = []
    for structure, res, note in rows:
        csv_rows.append(
            [structure, covariate, fmt_float(res.rho) if res else "", str(res.n) if res else "", note]
        )
        md_rows.append(
            [FULL_NAMES.get(structure, structure), f"{res.rho:.3f}" if res else "-", str(res.n) if res else "-"]
        )
    _write_rows(csv_path, ["structure", "covariate", "rho", "n", "note"], csv_rows)
    lines = [f"# Spearman rank correlation of DSC with {covariate}", ""]
    lines += _md_table(["Structure", "rho", "n"], md_rows)
    _write_markdown(md_path, lines)


def write_scatter_csv(points: list[tuple[str, float, float]], columns: list[str], path) -> None:
    rows = [[case_id, fmt_float(x), fmt_float(y)] for case_id, x, y in points]
    _write_rows(path, columns, rows)


# ---------------------------------------------------------------------------
# dose reports
# ---------------------------------------------------------------------------


def write_dvh_csv(curves: list[DvhCurve], path) -> None:
    rows = []
    for curve in curves:
        for edge, pct in zip(curve.dose_edges_gy, curve.volume_pct):
            rows.append([curve.structure, fmt_float(float(edge)), fmt_float(float(pct))])
    _write_rows(path, ["structure", "dose_gy", "volume_pct"], rows)


@dataclass(frozen=True)
class DoseTableRow:
    structure: str
    metric: str
    n: int
    n_excluded: int
    manual_mean: float | None
    manual_std: float | None
    predicted_mean: float | None
    predicted_std: float | None
    result: TestResult | None


def write_dose_table(rows: list[DoseTableRow], csv_path, md_path, title: str) -> None:
    csv_rows = []
    for r in rows:
        csv_rows.append(
            [
                r.structure,
                r.metric,
                str(r.n),
                str(r.n_excluded),
                fmt_float(r.manual_mean),
                fmt_float(r.manual_std),
                fmt_float(r.predicted_mean),
                fmt_float(r.predicted_std),
                fmt_p(r.result.p_value) if r.result else "",
            ]
        )
    _write_rows(
        csv_path,
        [
            "structure",
            "metric",
            "n",
            "n_excluded",
            "manual_mean",
            "manual_std",
            "predicted_mean",
            "predicted_std",
            "p_value",
        ],
        csv_rows,
    )

    def cell(mean, std):
        if mean is None:
            return "-"
        if std is None:
            return f"{mean:.2f}"
        return f"{mean:.2f} ± {std:.2f}"

    md_rows = []
    for r in rows:
        md_rows.append(
            [
                FULL_NAMES.get(r.structure, r.structure),
                r.metric,
                cell(r.manual_mean, r.manual_std),
                cell(r.predicted_mean, r.predicted_std),
                fmt_p(r.result.p_value) if r.result else "-",
            ]
        )
    lines = [f"# {title}", ""]
    lines += _md_table(["Structure", "Metric (Gy)", "Manual delineation", "Model", "p-value"], md_rows)
    excluded = [f"- {r.structure}: {r.n_excluded} case(s) excluded (empty structure)" for r in rows if r.n_excluded]
    if excluded:
        lines += ["", "Notes:"] + excluded
    _write_markdown(md_path, lines)


# ---------------------------------------------------------------------------
# split / fold outputs
# ---------------------------------------------------------------------------


def write_split(assignment: SplitAssignment, out_dir) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "seed": assignment.seed,
        "train": assignment.train,
        "holdout": assignment.holdout,
    }
    if assignment.folds is not None:
        payload["folds"] = assignment.folds
    (out_dir / "split.json").write_text(json.dumps(payload, indent=2) + "\n")
    rows = [[cid, "train"] for cid in assignment.train] + [[cid, "holdout"] for cid in assignment.holdout]
    rows.sort()
    _write_rows(out_dir / "split.csv", ["case_id", "subset"], rows)


def write_folds(folds: list[list[str]], seed: int, out_dir) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "folds.json").write_text(
        json.dumps({"seed": seed, "folds": folds}, indent=2) + "\n"
    )
    rows = []
    for f, fold in enumerate(folds):
        rows += [[cid, str(f)] for cid in fold]
    rows.sort()
    _write_rows(out_dir / "folds.csv", ["case_id", "fold"], rows)


def write_error_report(errors: list[tuple[str, str]], path) -> None:
    _write_rows(path, ["case_id", "error"], sorted(errors))
