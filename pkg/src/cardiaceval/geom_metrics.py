"""Surface extraction, exact anisotropic Euclidean distance transform, Dice
similarity, and 95th-percentile Hausdorff distance.

Conventions (shared with the brute-force oracles in the test suite):
surfaces use 6-connectivity with the image border counting as background;
the Hausdorff percentile is nearest-rank (ceil(0.95 n)-th smallest) and the
reported HD95 is the max of the two directed percentiles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .structures import LABEL_IDS, SUBSTRUCTURES
from .volume import VoxelGrid, require_same_geometry

STATUS_COMPUTED = "computed"
STATUS_REFERENCE_EMPTY = "reference_empty"
STATUS_PREDICTION_EMPTY = "prediction_empty"
STATUS_BOTH_EMPTY = "both_empty"


@dataclass(frozen=True)
class StructureScore:
    """Per-structure segmentation agreement; metric fields are present only
    when both masks are non-empty (absent structures are reported, never
    scored as 0)."""

    structure: str
    status: str
    dsc: float | None = None
    hd95_mm: float | None = None


def extract_surface(mask: VoxelGrid) -> np.ndarray:
    """Indices (n, 3) of foreground voxels with a 6-neighbor that is
    background or outside the volume."""
    fg = np.ascontiguousarray(mask.values) != 0
    if not fg.any():
        return np.empty((0, 3), dtype=np.int64)
    padded = np.pad(fg, 1, mode="constant", constant_values=False)
    interior = (
        padded[:-2, 1:-1, 1:-1]
        & padded[2:, 1:-1, 1:-1]
        & padded[1:-1, :-2, 1:-1]
        & padded[1:-1, 2:, 1:-1]
        & padded[1:-1, 1:-1, :-2]
        & padded[1:-1, 1:-1, 2:]
    )
    return np.argwhere(fg & ~interior)


@numba.njit(cache=True)
def _edt_pass_lines(f, h):  # pragma: no cover - exercised via edt()
    """One separable pass of the lower-envelope (parabola) transform.

    f is (lines, n) squared distances in mm^2, h the sample step in mm;
    each row is replaced by min_q' (h*(q - q'))^2 + f[q']. Infinite entries
    mark positions with no seed contribution yet.
    """
    n_lines, n = f.shape
    v = np.empty(n, np.int64)
    z = np.empty(n + 1, np.float64)
    out = np.empty(n, np.float64)
    for li in range(n_lines):
        k = -1
        for q in range(n):
            fq = f[li, q]
            if fq == np.inf:
                continue
            if k < 0:
                k = 0
                v[0] = q
                z[0] = -np.inf
                z[1] = np.inf
                continue
            while True:
                vk = v[k]
                s = ((fq + (q * h) ** 2) - (f[li, vk] + (vk * h) ** 2)) / (2.0 * h * (q - vk))
                if s <= z[k]:
                    k -= 1
                else:
                    break
            k += 1
            v[k] = q
            z[k] = s
            z[k + 1] = np.inf
        if k < 0:
            for q in range(n):
                out[q] = np.inf
        else:
            j = 0
            for q in range(n):
                x = q * h
                while z[j + 1] < x:
                    j += 1
                d = h * (q - v[j])
                out[q] = d * d + f[li, v[j]]
        for q in range(n):
            f[li, q] = out[q]


def edt(seeds: np.ndarray, dims, spacing) -> np.ndarray:
    """Exact Euclidean distance (mm) from every voxel center to the nearest
    seed voxel center, under anisotropic spacing.

    seeds is an (n, 3) index array. Separable passes run in x, y, z order
    over squared distances. Returns a float64 array of shape dims.
    """
    seeds = np.asarray(seeds, dtype=np.int64)
    if seeds.size == 0:
        raise ValueError("edt requires a non-empty seed set")
    if seeds.ndim != 2 or seeds.shape[1] != 3:
        raise ValueError(f"seeds must be (n, 3), got {seeds.shape}")
    dims = tuple(int(d) for d in dims)
    if np.any(seeds < 0) or np.any(seeds >= np.asarray(dims)):
        raise ValueError("seed index out of bounds")

    sq = np.full(dims, np.inf, dtype=np.float64)
    sq[seeds[:, 0], seeds[:, 1], seeds[:, 2]] = 0.0
    for axis in (0, 1, 2):
        moved = np.moveaxis(sq, axis, 2)
        lines = np.ascontiguousarray(moved.reshape(-1, dims[axis]))
        _edt_pass_lines(lines, float(spacing[axis]))
        sq = np.moveaxis(lines.reshape(moved.shape), 2, axis)
    return np.sqrt(sq)


def dsc(pred: VoxelGrid, ref: VoxelGrid) -> tuple[float | None, str]:
    """Dice coefficient 2|A∩B| / (|A|+|B|) with empty-mask statuses.

    Returns (value, status): both empty -> (None, both_empty); exactly one
    empty -> (0.0, prediction_empty/reference_empty); else (dice, computed).
    """
    require_same_geometry(pred, ref, "dsc operands")
    a = pred.values != 0
    b = ref.values != 0
    na = int(a.sum())
    nb = int(b.sum())
    if na == 0 and nb == 0:
        return None, STATUS_BOTH_EMPTY
    if na == 0:
        return 0.0, STATUS_PREDICTION_EMPTY
    if nb == 0:
        return 0.0, STATUS_REFERENCE_EMPTY
    inter = int((a & b).sum())
    return 2.0 * inter / (na + nb), STATUS_COMPUTED


def percentile_nearest_rank(values: np.ndarray, q: float = 0.95) -> float:
    """ceil(q*n)-th smallest of n values (no interpolation)."""
    values = np.sort(np.asarray(values, dtype=np.float64).ravel())
    n = values.size
    if n == 0:
        raise ValueError("percentile of empty set")
    rank = int(np.ceil(q * n))
    return float(values[max(rank, 1) - 1])


def hd95(pred: VoxelGrid, ref: VoxelGrid) -> tuple[float | None, str]:
    """95th-percentile symmetric Hausdorff distance (mm) between mask
    surfaces: max of the two directed nearest-rank percentiles."""
    require_same_geometry(pred, ref, "hd95 operands")
    a = pred.values != 0
    b = ref.values != 0
    na = int(a.sum())
    nb = int(b.sum())
    if na == 0 and nb == 0:
        return None, STATUS_BOTH_EMPTY
    if na == 0:
        return None, STATUS_PREDICTION_EMPTY
    if nb == 0:
        return None, STATUS_REFERENCE_EMPTY

    surf_a = extract_surface(pred)
    surf_b = extract_surface(ref)
    dist_to_b = edt(surf_b, pred.dims, pred.spacing)
    dist_to_a = edt(surf_a, pred.dims, pred.spacing)
    d_ab = dist_to_b[surf_a[:, 0], surf_a[:, 1], surf_a[:, 2]]
    d_ba = dist_to_a[surf_b[:, 0], surf_b[:, 1], surf_b[:, 2]]
    value = max(percentile_nearest_rank(d_ab), percentile_nearest_rank(d_ba))
    return value, STATUS_COMPUTED


def score_structures(pred: VoxelGrid, ref: VoxelGrid) -> list[StructureScore]:
    """One StructureScore per vocabulary structure, in fixed order."""
    require_same_geometry(pred, ref, "label masks")
    scores = []
    for name in SUBSTRUCTURES:
        label = LABEL_IDS[name]
        p = pred.with_values((pred.values == label).astype(np.uint8))
        r = ref.with_values((ref.values == label).astype(np.uint8))
        dice, status = dsc(p, r)
        if status != STATUS_COMPUTED:
            scores.append(StructureScore(structure=name, status=status))
            continue
        h, _ = hd95(p, r)
        scores.append(StructureScore(structure=name, status=status, dsc=dice, hd95_mm=h))
    return scores
