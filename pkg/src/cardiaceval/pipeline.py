"""Cohort-level workflows behind the CLI: inference over a manifest,
geometric evaluation, statistical comparisons, covariate correlation, and
dosimetric comparison. Each workflow writes CSV + markdown reports (and
figures) into an output directory and collects per-case failures instead of
aborting on the first one.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import figures
from .dosimetry import dvh, align_dose, paired_dose_table
from .geom_metrics import STATUS_COMPUTED, score_structures
from .inference import argmax_labels, plan_windows, run_sliding_window, subprocess_predictor
from .manifest import CaseRecord, CohortManifest, load_manifest, save_manifest
from .reports import (
    DoseTableRow,
    StatsRow,
    read_scores_csv,
    summarize_scores,
    write_correlation_table,
    write_dose_table,
    write_dvh_csv,
    write_error_report,
    write_scatter_csv,
    write_scores_csv,
    write_stats_table,
    write_summary,
)
from .stats import (
    ConstantInputError,
    rank_sum_unpaired,
    spearman,
    summarize,
    wilcoxon_signed_rank,
)
from .structures import (
    DEFAULT_VX_THRESHOLD_GY,
    LABEL_IDS,
    SUBSTRUCTURES,
    dose_metric_label,
)
from .volume import (
    KIND_GY,
    KIND_LABEL,
    canonicalize_orientation,
    load_nifti,
    normalize_hu,
    resample,
    resample_to_geometry,
    save_nifti,
)

TARGET_SPACING_MM = (1.0, 1.0, 3.0)
DEFAULT_FAMILY_SIZE = 2  # DSC and HD95 tests of one comparison, corrected together


class CohortError(RuntimeError):
    """A workflow-level failure (as opposed to collected per-case errors)."""


def _run_per_case(records, worker, threads: int):
    """Run worker(record) per case, collecting (case_id, result) and
    (case_id, error message) lists; results come back in case_id order."""
    records = sorted(records, key=lambda r: r.case_id)

    def safe(rec):
        try:
            return rec.case_id, worker(rec), None
        except Exception as exc:  # collected, reported, and surfaced via exit code
            return rec.case_id, None, f"{type(exc).__name__}: {exc}"

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(safe, records))
    else:
        outcomes = [safe(rec) for rec in records]
    results = [(cid, res) for cid, res, err in outcomes if err is None]
    errors = [(cid, err) for cid, _, err in outcomes if err is not None]
    return results, errors


# ---------------------------------------------------------------------------
# inference
# ---------------------------------------------------------------------------


def infer_cohort(
    manifest: CohortManifest,
    predictor_command: str,
    out_dir,
    fusion: str = "uniform",
    patch=(128, 128, 128),
    overlap_fraction: float = 0.5,
    threads: int = 1,
) -> tuple[Path, list[tuple[str, str]]]:
    """Run sliding-window inference for every case and write predicted label
    masks plus an updated manifest.

    Pipeline per case: canonicalize orientation, normalize HU, resample to
    1 x 1 x 3 mm, predict windows, argmax, resample labels back to the
    native grid (nearest), save.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    predictor = subprocess_predictor(predictor_command)

    def worker(rec: CaseRecord) -> Path:
        native = load_nifti(rec.image_path, kind="HU")
        vol = canonicalize_orientation(native)
        vol = normalize_hu(vol)
        vol = resample(vol, TARGET_SPACING_MM, mode="trilinear")
        plan = plan_windows(vol.dims, patch=patch, overlap_fraction=overlap_fraction)
        probs = run_sliding_window(vol, predictor, plan=plan, fusion=fusion)
        labels = argmax_labels(probs)
        native_labels, _ = resample_to_geometry(labels, native, mode="nearest", outside="clamp")
        pred_path = out_dir / f"{rec.case_id}_pred.nii.gz"
        save_nifti(native_labels, pred_path)
        return pred_path

    results, errors = _run_per_case(manifest.records, worker, threads)
    pred_by_id = dict(results)
    new_records = [
        replace(rec, mask_pred_path=pred_by_id.get(rec.case_id, rec.mask_pred_path))
        for rec in manifest.records
    ]
    updated = CohortManifest(records=new_records, extra_columns=manifest.extra_columns)
    manifest_path = out_dir / "manifest.csv"
    save_manifest(updated, manifest_path)
    if errors:
        write_error_report(errors, out_dir / "errors.csv")
    return manifest_path, errors


# ---------------------------------------------------------------------------
# geometric evaluation
# ---------------------------------------------------------------------------


def evaluate_cohort(
    manifest: CohortManifest, out_dir, threads: int = 1
) -> tuple[list[tuple[str, list]], list[tuple[str, str]]]:
    """Score every case's predicted mask against the manual reference and
    write per-case scores, a per-structure summary, and a figure."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not manifest.records:
        raise CohortError("manifest has no cases")
    missing = sorted(r.case_id for r in manifest.records if r.mask_pred_path is None)
    if missing:
        raise CohortError(f"cases without mask_pred_path: {', '.join(missing)}")

    def worker(rec: CaseRecord):
        ref = load_nifti(rec.mask_manual_path, kind=KIND_LABEL)
        pred = load_nifti(rec.mask_pred_path, kind=KIND_LABEL)
        return score_structures(pred, ref)

    scored, errors = _run_per_case(manifest.records, worker, threads)
    write_scores_csv(scored, out_dir / "scores.csv")
    summaries = summarize_scores(scored)
    write_summary(
        summaries,
        out_dir / "summary.csv",
        out_dir / "summary.md",
        f"Segmentation accuracy over {len(scored)} cases",
    )
    figures.summary_bars(summaries, out_dir / "summary.png", "Per-structure accuracy")
    if errors:
        write_error_report(errors, out_dir / "errors.csv")
    return scored, errors


# ---------------------------------------------------------------------------
# statistics
# ---------------------------------------------------------------------------

_METRICS = (("dsc", "DSC"), ("hd95_mm", "HD95"))


def _computed_by_case(scores: list[dict], structure: str, metric: str) -> dict[str, float]:
    return {
        row["case_id"]: row[metric]
        for row in scores
        if row["structure"] == structure and row["status"] == STATUS_COMPUTED
    }


def stats_paired(
    scores_a_path,
    scores_b_path,
    out_dir,
    family_size: int = DEFAULT_FAMILY_SIZE,
) -> list[StatsRow]:
    """Paired Wilcoxon signed-rank comparison of two models' score tables,
    per structure and metric, with Bonferroni-corrected columns."""
    out_dir = Path(out_dir)
    scores_a = read_scores_csv(scores_a_path)
    scores_b = read_scores_csv(scores_b_path)
    cases_a = {row["case_id"] for row in scores_a}
    cases_b = {row["case_id"] for row in scores_b}
    if cases_a != cases_b:
        offending = sorted(cases_a ^ cases_b)
        raise CohortError(f"paired score tables cover different cases: {', '.join(offending)}")

    rows: list[StatsRow] = []
    for name in SUBSTRUCTURES:
        for metric, label in _METRICS:
            a = _computed_by_case(scores_a, name, metric)
            b = _computed_by_case(scores_b, name, metric)
            shared = sorted(set(a) & set(b))
            if not shared:
                rows.append(StatsRow(structure=name, metric=label, result=None, note="no paired cases"))
                continue
            result = wilcoxon_signed_rank(
                [a[c] for c in shared], [b[c] for c in shared]
            ).corrected(family_size)
            rows.append(StatsRow(structure=name, metric=label, result=result))
    write_stats_table(
        rows,
        out_dir / "stats.csv",
        out_dir / "stats.md",
        "Paired Wilcoxon signed-rank comparison (model A vs model B)",
    )
    return rows


def stats_grouped(
    scores_path,
    manifest: CohortManifest,
    grouping: str,
    out_dir,
    family_size: int = DEFAULT_FAMILY_SIZE,
) -> list[StatsRow]:
    """Rank-sum comparison of scores between the two values of a categorical
    case attribute (contrast, position, or sex)."""
    if grouping not in ("contrast", "position", "sex"):
        raise ValueError(f"unknown grouping {grouping!r}")
    out_dir = Path(out_dir)
    scores = read_scores_csv(scores_path)
    group_of = {rec.case_id: getattr(rec, grouping) for rec in manifest.records}
    unknown = sorted({row["case_id"] for row in scores} - set(group_of))
    if unknown:
        raise CohortError(f"scored cases missing from manifest: {', '.join(unknown)}")
    groups = sorted({group_of[row["case_id"]] for row in scores})
    if len(groups) < 2:
        raise CohortError(
            f"grouping by {grouping} needs two non-empty groups; found only {groups}"
        )

    rows: list[StatsRow] = []
    values_for_fig: dict[str, dict[str, dict[str, list[float]]]] = {m: {} for m, _ in _METRICS}
    for name in SUBSTRUCTURES:
        for metric, label in _METRICS:
            by_case = _computed_by_case(scores, name, metric)
            a = [v for c, v in sorted(by_case.items()) if group_of[c] == groups[0]]
            b = [v for c, v in sorted(by_case.items()) if group_of[c] == groups[1]]
            values_for_fig[metric][name] = {groups[0]: a, groups[1]: b}
            if not a or not b:
                rows.append(
                    StatsRow(structure=name, metric=label, result=None, note="a group is empty")
                )
                continue
            result = rank_sum_unpaired(a, b).corrected(family_size)
            rows.append(StatsRow(structure=name, metric=label, result=result))
    write_stats_table(
        rows,
        out_dir / "stats.csv",
        out_dir / "stats.md",
        f"Rank-sum comparison by {grouping} ({groups[0]} vs {groups[1]})",
    )
    for metric, label in _METRICS:
        figures.group_boxplots(
            values_for_fig[metric],
            [r for r in rows if r.metric == label],
            label,
            grouping,
            out_dir / f"groups_{grouping}_{metric}.png",
        )
    return rows


# ---------------------------------------------------------------------------
# correlation
# ---------------------------------------------------------------------------


def correlate_cohort(scores_path, manifest: CohortManifest, covariate: str, out_dir):
    """Spearman correlation of per-case DSC against age or BMI, with
    per-structure scatter CSVs and a scatter figure grid."""
    if covariate not in ("age", "bmi"):
        raise ValueError(f"covariate must be age or bmi, got {covariate!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scores = read_scores_csv(scores_path)
    attr = "age" if covariate == "age" else "bmi"
    cov_of = {rec.case_id: getattr(rec, attr) for rec in manifest.records}
    missing = sorted({row["case_id"] for row in scores} - set(cov_of))
    if missing:
        raise CohortError(f"no {covariate} available for scored case(s): {', '.join(missing)}")
    scored_cases = sorted({row["case_id"] for row in scores})
    if len(set(cov_of[c] for c in scored_cases)) <= 1:
        raise ConstantInputError(f"{covariate} is constant across scored cases")

    table_rows = []
    points_by_structure = {}
    rho_by_structure = {}
    for name in SUBSTRUCTURES:
        by_case = _computed_by_case(scores, name, "dsc")
        cases = sorted(by_case)
        points = [(c, cov_of[c], by_case[c]) for c in cases]
        points_by_structure[name] = points
        write_scatter_csv(
            points,
            ["case_id", covariate, "dsc"],
            out_dir / f"scatter_{covariate}_{name}.csv",
        )
        if len(cases) < 3:
            table_rows.append((name, None, "fewer than 3 computed cases"))
            rho_by_structure[name] = None
            continue
        try:
            res = spearman([cov_of[c] for c in cases], [by_case[c] for c in cases])
        except ConstantInputError:
            table_rows.append((name, None, "undefined (constant DSC)"))
            rho_by_structure[name] = None
            continue
        res = replace(res, covariate=covariate)
        table_rows.append((name, res, ""))
        rho_by_structure[name] = res.rho
    write_correlation_table(
        table_rows, covariate, out_dir / "correlation.csv", out_dir / "correlation.md"
    )
    figures.correlation_scatter_grid(
        points_by_structure, rho_by_structure, covariate, out_dir / f"scatter_{covariate}.png"
    )
    return table_rows


# ---------------------------------------------------------------------------
# dosimetry
# ---------------------------------------------------------------------------


def dose_cohort(
    manifest: CohortManifest,
    out_dir,
    vx_threshold_gy: float = DEFAULT_VX_THRESHOLD_GY,
    dvh_bin_gy: float = 0.1,
    threads: int = 1,
) -> tuple[list[DoseTableRow], list[tuple[str, str]]]:
    """Dosimetric comparison of manual vs predicted masks: designated
    per-structure metrics with paired Wilcoxon p, DVH curve CSVs and
    panels, and a manual-vs-model scatter."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    incomplete = sorted(
        r.case_id for r in manifest.records if r.dose_path is None or r.mask_pred_path is None
    )
    if incomplete:
        raise CohortError(f"cases without dose_path/mask_pred_path: {', '.join(incomplete)}")

    def worker(rec: CaseRecord):
        dose = load_nifti(rec.dose_path, kind=KIND_GY)
        manual = load_nifti(rec.mask_manual_path, kind=KIND_LABEL)
        pred = load_nifti(rec.mask_pred_path, kind=KIND_LABEL)
        aligned, coverage = align_dose(dose, manual)
        curves_manual, curves_pred = [], []
        for name in SUBSTRUCTURES:
            label = LABEL_IDS[name]
            m_mask = manual.values == label
            p_mask = pred.values == label
            if m_mask.any():
                curves_manual.append(
                    dvh(aligned, manual.with_values(m_mask.astype(np.uint8)), dvh_bin_gy, name)
                )
            if p_mask.any():
                curves_pred.append(
                    dvh(aligned, pred.with_values(p_mask.astype(np.uint8)), dvh_bin_gy, name)
                )
        write_dvh_csv(curves_manual, out_dir / f"dvh_{rec.case_id}_manual.csv")
        write_dvh_csv(curves_pred, out_dir / f"dvh_{rec.case_id}_model.csv")
        figures.dvh_panel(curves_manual, curves_pred, rec.case_id, out_dir / f"dvh_{rec.case_id}.png")
        return rec.case_id, dose, manual, pred, coverage

    loaded, errors = _run_per_case(manifest.records, worker, threads)
    cases = [(cid, dose, manual, pred) for _, (cid, dose, manual, pred, _) in loaded]
    columns = paired_dose_table(cases, vx_threshold_gy)

    table_rows: list[DoseTableRow] = []
    pairs_by_structure = {}
    scatter_rows = []
    for col in columns:
        pairs_by_structure[col.structure] = list(zip(col.manual, col.predicted))
        for cid, m, p in zip(col.case_ids, col.manual, col.predicted):
            scatter_rows.append((f"{cid}:{col.structure}", m, p))
        if not col.manual:
            table_rows.append(
                DoseTableRow(
                    structure=col.structure,
                    metric=col.metric,
                    n=0,
                    n_excluded=len(col.excluded_case_ids),
                    manual_mean=None,
                    manual_std=None,
                    predicted_mean=None,
                    predicted_std=None,
                    result=None,
                )
            )
            continue
        m_mean, m_std = summarize(col.manual)
        p_mean, p_std = summarize(col.predicted)
        result = wilcoxon_signed_rank(col.manual, col.predicted)
        table_rows.append(
            DoseTableRow(
                structure=col.structure,
                metric=col.metric,
                n=len(col.manual),
                n_excluded=len(col.excluded_case_ids),
                manual_mean=m_mean,
                manual_std=m_std,
                predicted_mean=p_mean,
                predicted_std=p_std,
                result=result,
            )
        )
    write_dose_table(
        table_rows,
        out_dir / "dose_metrics.csv",
        out_dir / "dose_table.md",
        "Dosimetric comparison: manual delineations vs model segmentations",
    )
    write_scatter_csv(
        scatter_rows, ["case_structure", "manual", "model"], out_dir / "dose_pairs.csv"
    )
    figures.dose_scatter_grid(table_rows, pairs_by_structure, out_dir / "dose_scatter.png")
    if errors:
        write_error_report(errors, out_dir / "errors.csv")
    return table_rows, errors


# ---------------------------------------------------------------------------
# one-shot report
# ---------------------------------------------------------------------------


def full_report(manifest: CohortManifest, out_dir, threads: int = 1, family_size: int = DEFAULT_FAMILY_SIZE):
    """Evaluate, then run every applicable analysis: covariate correlations,
    group comparisons for groupings with two non-empty groups, and the dose
    table when dose grids are available. Returns collected errors."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _, errors = evaluate_cohort(manifest, out_dir / "evaluate", threads=threads)
    scores_path = out_dir / "evaluate" / "scores.csv"

    sections = ["# Cohort report", "", f"- cases: {len(manifest.records)}", "- [evaluation](evaluate/summary.md)"]
    for covariate in ("age", "bmi"):
        try:
            correlate_cohort(scores_path, manifest, covariate, out_dir / f"correlate_{covariate}")
            sections.append(f"- [correlation vs {covariate}](correlate_{covariate}/correlation.md)")
        except ConstantInputError:
            sections.append(f"- correlation vs {covariate}: skipped (constant covariate)")
    for grouping in ("contrast", "position", "sex"):
        values = {getattr(rec, grouping) for rec in manifest.records}
        if len(values) < 2:
            sections.append(f"- comparison by {grouping}: skipped (single group)")
            continue
        stats_grouped(scores_path, manifest, grouping, out_dir / f"stats_{grouping}", family_size)
        sections.append(f"- [comparison by {grouping}](stats_{grouping}/stats.md)")
    if all(rec.dose_path is not None for rec in manifest.records):
        _, dose_errors = dose_cohort(manifest, out_dir / "dose", threads=threads)
        errors += dose_errors
        sections.append("- [dose comparison](dose/dose_table.md)")
    else:
        sections.append("- dose comparison: skipped (missing dose grids)")
    (out_dir / "report.md").write_text("\n".join(sections) + "\n")
    return errors
