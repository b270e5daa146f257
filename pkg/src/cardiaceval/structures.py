"""Cardiac substructure vocabulary and per-structure reporting conventions."""

from __future__ import annotations

BACKGROUND = 0

# Label ids 1..8, fixed order: great vessels first, then heart chambers.
SUBSTRUCTURES = ("AA", "PA", "SVC", "IVC", "RA", "RV", "LA", "LV")

LABEL_IDS = {name: idx + 1 for idx, name in enumerate(SUBSTRUCTURES)}
NAMES_BY_ID = {idx: name for name, idx in LABEL_IDS.items()}

GREAT_VESSELS = ("AA", "PA", "SVC", "IVC")
HEART_CHAMBERS = ("RA", "RV", "LA", "LV")

NUM_CLASSES = len(SUBSTRUCTURES) + 1  # background + 8

FULL_NAMES = {
    "AA": "Aorta",
    "PA": "Pulmonary artery",
    "SVC": "Superior vena cava",
    "IVC": "Inferior vena cava",
    "RA": "Right atrium",
    "RV": "Right ventricle",
    "LA": "Left atrium",
    "LV": "Left ventricle",
}

# Designated dose metric per structure for the dosimetric comparison table:
# single-voxel maximum for the large vessels, V(threshold) for the pulmonary
# artery, mean dose for the chambers.
DOSE_METRIC_BY_STRUCTURE = {
    "AA": "dmax",
    "PA": "vx",
    "SVC": "dmax",
    "IVC": "dmax",
    "RA": "dmean",
    "RV": "dmean",
    "LA": "dmean",
    "LV": "dmean",
}

DEFAULT_VX_THRESHOLD_GY = 40.0


def dose_metric_label(structure: str, threshold_gy: float = DEFAULT_VX_THRESHOLD_GY) -> str:
    """Human-readable name of the designated dose metric for a structure."""
    kind = DOSE_METRIC_BY_STRUCTURE[structure]
    if kind == "dmax":
        return "DMax"
    if kind == "dmean":
        return "DMean"
    return f"V{threshold_gy:g}"
