"""Dose-volume histograms and per-structure dose metrics (DMax, DMean,
V(threshold)) over structure masks, plus pairing of manual vs predicted
delineations for the dosimetric comparison table.

Metrics are computed from voxels directly; the DVH binning only affects
curve export. The dose grid is always resampled onto the mask geometry,
never the other way around.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .structures import (
    DEFAULT_VX_THRESHOLD_GY,
    DOSE_METRIC_BY_STRUCTURE,
    LABEL_IDS,
    SUBSTRUCTURES,
)
from .volume import KIND_GY, VoxelGrid, require_same_geometry, resample_to_geometry

# Absorbs float error in bin-edge multiples when comparing dose >= edge.
_EDGE_EPS = 1e-9


class EmptyStructureError(ValueError):
    """Dose metrics are undefined for an empty structure mask."""


@dataclass(frozen=True)
class DvhCurve:
    """Cumulative dose-volume histogram: volume_pct[i] is the percent of the
    structure receiving at least dose_edges_gy[i]."""

    structure: str
    dose_edges_gy: np.ndarray
    volume_pct: np.ndarray
    voxel_volume_cc: float


@dataclass(frozen=True)
class DoseMetrics:
    structure: str
    dmax_gy: float
    dmean_gy: float
    vx_pct: dict[float, float] = field(default_factory=dict)


@dataclass(frozen=True)
class DoseCoverage:
    """Fraction of mask-grid voxels outside the dose grid's physical extent
    (those voxels are set to 0 Gy)."""

    outside_fraction: float
    n_outside: int


def align_dose(dose: VoxelGrid, mask: VoxelGrid) -> tuple[VoxelGrid, DoseCoverage]:
    """Trilinearly resample the dose onto the mask's geometry."""
    if dose.kind != KIND_GY:
        raise ValueError(f"expected a Gy grid, got {dose.kind!r}")
    if dose.same_geometry(mask):
        return dose, DoseCoverage(0.0, 0)
    aligned, frac = resample_to_geometry(dose, mask, mode="trilinear", outside="zero")
    n_outside = int(round(frac * aligned.values.size))
    if n_outside == aligned.values.size:
        raise ValueError("dose and mask grids have no physical overlap")
    return aligned, DoseCoverage(frac, n_outside)


def _mask_doses(dose: VoxelGrid, mask: VoxelGrid) -> np.ndarray:
    require_same_geometry(dose, mask, "dose and mask")
    selected = dose.values[mask.values != 0]
    if selected.size == 0:
        raise EmptyStructureError("structure mask is empty")
    return selected


def dvh(dose: VoxelGrid, mask: VoxelGrid, bin_gy: float = 0.1, structure: str = "") -> DvhCurve:
    """Cumulative DVH evaluated at edges 0, bin, ..., ceil(DMax/bin)*bin + bin,
    so the curve starts at 100% and ends at 0% strictly above DMax."""
    if bin_gy <= 0:
        raise ValueError(f"bin width must be positive, got {bin_gy}")
    doses = _mask_doses(dose, mask)
    dmax = float(doses.max())
    n_edges = int(np.ceil(dmax / bin_gy - _EDGE_EPS)) + 2 if dmax > 0 else 2
    edges = np.arange(n_edges) * bin_gy
    pct = np.array(
        [100.0 * np.count_nonzero(doses >= e - _EDGE_EPS) / doses.size for e in edges]
    )
    return DvhCurve(
        structure=structure,
        dose_edges_gy=edges,
        volume_pct=pct,
        voxel_volume_cc=mask.voxel_volume_cc,
    )


def dose_metrics(dose: VoxelGrid, mask: VoxelGrid, thresholds_gy=(), structure: str = "") -> DoseMetrics:
    """DMax (single-voxel max), DMean (arithmetic mean), and V(t) (percent of
    mask voxels with dose >= t) for each requested threshold."""
    doses = _mask_doses(dose, mask)
    vx = {
        float(t): 100.0 * float(np.count_nonzero(doses >= float(t))) / doses.size
        for t in thresholds_gy
    }
    return DoseMetrics(
        structure=structure,
        dmax_gy=float(doses.max()),
        dmean_gy=float(doses.mean()),
        vx_pct=vx,
    )


def designated_metric(
    metrics: DoseMetrics, structure: str, vx_threshold_gy: float = DEFAULT_VX_THRESHOLD_GY
) -> float:
    """The structure's designated comparison metric (DMax / V(t) / DMean)."""
    kind = DOSE_METRIC_BY_STRUCTURE[structure]
    if kind == "dmax":
        return metrics.dmax_gy
    if kind == "dmean":
        return metrics.dmean_gy
    return metrics.vx_pct[float(vx_threshold_gy)]


@dataclass(frozen=True)
class PairedDoseColumn:
    """Per-structure paired designated metric for manual vs predicted masks."""

    structure: str
    metric: str
    case_ids: list[str]
    manual: list[float]
    predicted: list[float]
    excluded_case_ids: list[str]


def paired_dose_table(
    cases,
    vx_threshold_gy: float = DEFAULT_VX_THRESHOLD_GY,
) -> list[PairedDoseColumn]:
    """Assemble per-structure paired metric lists from (case_id, dose,
    labels_manual, labels_pred) tuples. The dose is aligned to the manual
    mask geometry; cases where a structure is empty in either delineation
    are excluded from that structure's pairs and reported.
    """
    from .structures import dose_metric_label

    per_structure: dict[str, PairedDoseColumn] = {
        name: PairedDoseColumn(
            structure=name,
            metric=dose_metric_label(name, vx_threshold_gy),
            case_ids=[],
            manual=[],
            predicted=[],
            excluded_case_ids=[],
        )
        for name in SUBSTRUCTURES
    }
    thresholds = (vx_threshold_gy,)
    for case_id, dose, labels_manual, labels_pred in cases:
        require_same_geometry(labels_manual, labels_pred, "manual and predicted masks")
        aligned, _ = align_dose(dose, labels_manual)
        for name in SUBSTRUCTURES:
            label = LABEL_IDS[name]
            col = per_structure[name]
            m_mask = labels_manual.values == label
            p_mask = labels_pred.values == label
            if not m_mask.any() or not p_mask.any():
                col.excluded_case_ids.append(case_id)
                continue
            m = dose_metrics(aligned, labels_manual.with_values(m_mask.astype(np.uint8)), thresholds, name)
            p = dose_metrics(aligned, labels_pred.with_values(p_mask.astype(np.uint8)), thresholds, name)
            col.case_ids.append(case_id)
            col.manual.append(designated_metric(m, name, vx_threshold_gy))
            col.predicted.append(designated_metric(p, name, vx_threshold_gy))
    return [per_structure[name] for name in SUBSTRUCTURES]
