"""Volumetric data model: grids with physical geometry, resampling, HU
normalization, orientation canonicalization, and NIfTI file I/O.

Geometry convention: voxel (i, j, k) sits at physical position
``origin + orientation @ (spacing * (i, j, k))`` in mm. Orientations are
restricted to signed permutation matrices (axis-aligned volumes); oblique
volumes are rejected at load time rather than silently resampled.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import nifti
from .structures import SUBSTRUCTURES

KIND_HU = "HU"
KIND_GY = "Gy"
KIND_PROBABILITY = "probability"
KIND_LABEL = "label"
VALUE_KINDS = (KIND_HU, KIND_GY, KIND_PROBABILITY, KIND_LABEL)

# Intensity window used for normalization, in HU.
HU_WINDOW = (-200.0, 300.0)

MAX_LABEL = len(SUBSTRUCTURES)  # 8; 0 is background


class GeometryError(ValueError):
    """Two grids that must share geometry do not."""


class ObliqueVolumeError(ValueError):
    """Volume orientation is not a signed permutation (oblique volume unsupported)."""


def _as_triple(value, name: str) -> tuple[float, float, float]:
    t = tuple(float(v) for v in value)
    if len(t) != 3:
        raise ValueError(f"{name} must have 3 components, got {len(t)}")
    return t


def _snap_signed_permutation(mat: np.ndarray, tol: float = 1e-3) -> np.ndarray:
    """Snap a 3x3 direction matrix to an exact signed permutation, or raise."""
    mat = np.asarray(mat, dtype=np.float64)
    if mat.shape != (3, 3):
        raise ValueError(f"orientation must be 3x3, got {mat.shape}")
    snapped = np.zeros((3, 3), dtype=np.int8)
    for col in range(3):
        w = int(np.argmax(np.abs(mat[:, col])))
        s = 1 if mat[w, col] > 0 else -1
        snapped[w, col] = s
    if np.max(np.abs(mat - snapped)) > tol:
        raise ObliqueVolumeError("oblique volume unsupported: orientation is not a signed permutation")
    if np.any(np.abs(snapped).sum(axis=0) != 1) or np.any(np.abs(snapped).sum(axis=1) != 1):
        raise ObliqueVolumeError("oblique volume unsupported: orientation is not a signed permutation")
    return snapped


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """A 3D scalar field with physical geometry.

    values has shape (nx, ny, nz); serialized order is x-fastest. Label
    grids hold uint8 values in 0..8, everything else float64. Instances
    are immutable and safe to share across threads.
    """

    values: np.ndarray
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    orientation: np.ndarray = field(default_factory=lambda: np.eye(3, dtype=np.int8))
    kind: str = KIND_HU

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 3:
            raise ValueError(f"values must be 3D, got {values.ndim}D")
        if min(values.shape) < 1:
            raise ValueError(f"dims must be positive, got {values.shape}")
        if self.kind not in VALUE_KINDS:
            raise ValueError(f"unknown value kind {self.kind!r}")
        if self.kind == KIND_LABEL:
            values = values.astype(np.uint8, copy=False)
            if values.size and int(values.max()) > MAX_LABEL:
                raise ValueError(f"label value {int(values.max())} outside vocabulary 0..{MAX_LABEL}")
        else:
            values = values.astype(np.float64, copy=False)
        values = np.ascontiguousarray(values)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "spacing", _as_triple(self.spacing, "spacing"))
        if min(self.spacing) <= 0:
            raise ValueError(f"spacing must be strictly positive, got {self.spacing}")
        object.__setattr__(self, "origin", _as_triple(self.origin, "origin"))
        object.__setattr__(self, "orientation", _snap_signed_permutation(self.orientation))
        self.orientation.setflags(write=False)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.values.shape

    @property
    def affine(self) -> np.ndarray:
        """4x4 voxel-index -> mm transform."""
        a = np.eye(4)
        a[:3, :3] = self.orientation.astype(np.float64) * np.asarray(self.spacing)[np.newaxis, :]
        a[:3, 3] = self.origin
        return a

    @property
    def voxel_volume_cc(self) -> float:
        sx, sy, sz = self.spacing
        return sx * sy * sz / 1000.0

    def axis_world_map(self) -> list[tuple[int, int]]:
        """Per grid axis: (world axis index, sign)."""
        out = []
        for col in range(3):
            w = int(np.argmax(np.abs(self.orientation[:, col])))
            out.append((w, int(self.orientation[w, col])))
        return out

    def index_to_world(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.float64)
        return np.asarray(self.origin) + self.orientation.astype(np.float64) @ (
            np.asarray(self.spacing) * idx
        )

    def same_geometry(self, other: "VoxelGrid", tol: float = 1e-6) -> bool:
        return (
            self.dims == other.dims
            and np.array_equal(self.orientation, other.orientation)
            and max(abs(a - b) for a, b in zip(self.spacing, other.spacing)) <= tol
            and max(abs(a - b) for a, b in zip(self.origin, other.origin)) <= tol
        )

    def with_values(self, values: np.ndarray, kind: str | None = None) -> "VoxelGrid":
        return replace(self, values=values, kind=self.kind if kind is None else kind)


def require_same_geometry(a: VoxelGrid, b: VoxelGrid, what: str = "grids") -> None:
    if not a.same_geometry(b):
        raise GeometryError(f"{what} do not share geometry: {a.dims}@{a.spacing} vs {b.dims}@{b.spacing}")


def labels_present(labels: VoxelGrid) -> list[int]:
    """Sorted structure ids (excluding background) present in a label grid."""
    present = np.unique(labels.values)
    return [int(v) for v in present if v != 0]


def structure_mask(labels: VoxelGrid, label_id: int) -> VoxelGrid:
    """Binary mask (uint8 0/1, label kind) for one structure id."""
    if labels.kind != KIND_LABEL:
        raise ValueError(f"expected a label grid, got kind {labels.kind!r}")
    return labels.with_values((labels.values == label_id).astype(np.uint8))


# ---------------------------------------------------------------------------
# file I/O
# ---------------------------------------------------------------------------


def load_nifti(path: os.PathLike | str, kind: str = KIND_HU) -> VoxelGrid:
    """Load a 3D NIfTI-1 volume into a VoxelGrid.

    The sform affine is preferred when valid; slope/intercept scaling is
    applied; values become float64 (uint8 for kind="label", which also
    validates the structure vocabulary). Oblique affines are rejected.
    """
    values, affine = nifti.read_volume(path)
    lin = affine[:3, :3]
    spacing = np.sqrt((lin**2).sum(axis=0))
    if np.any(spacing <= 0):
        raise nifti.NiftiError(f"non-positive spacing {tuple(spacing)} in {path}")
    orientation = _snap_signed_permutation(lin / spacing[np.newaxis, :])
    if kind == KIND_LABEL:
        rounded = np.rint(values)
        if np.max(np.abs(values - rounded)) > 1e-6:
            raise ValueError(f"non-integral values in label volume {path}")
        values = rounded.astype(np.uint8)
    return VoxelGrid(
        values=values,
        spacing=tuple(spacing),
        origin=tuple(affine[:3, 3]),
        orientation=orientation,
        kind=kind,
    )


def save_nifti(grid: VoxelGrid, path: os.PathLike | str) -> None:
    """Write a VoxelGrid as NIfTI-1: uint8 payload for labels, float32 else."""
    payload = "uint8" if grid.kind == KIND_LABEL else "float32"
    nifti.write_volume(grid.values, grid.affine, path, payload=payload)


# ---------------------------------------------------------------------------
# intensity normalization
# ---------------------------------------------------------------------------


def normalize_hu(grid: VoxelGrid) -> VoxelGrid:
    """Map HU linearly from the fixed window to [0, 1], clamping outside."""
    if grid.kind != KIND_HU:
        raise ValueError(f"normalize_hu expects an HU grid, got {grid.kind!r}")
    lo, hi = HU_WINDOW
    scaled = np.clip((grid.values - lo) / (hi - lo), 0.0, 1.0)
    return grid.with_values(scaled, kind=KIND_PROBABILITY)


# ---------------------------------------------------------------------------
# resampling
# ---------------------------------------------------------------------------


def _gather(
    values: np.ndarray,
    coords: list[np.ndarray],
    out_axis_of_src: list[int],
    mode: str,
    outside: str,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Sample `values` at separable per-source-axis coordinates.

    coords[a] gives, for source axis a, the fractional source index as a
    function of output axis out_axis_of_src[a]. Returns the sampled array
    in output-axis order plus an outside mask when outside="zero".
    """
    dims = values.shape
    outside_mask = None
    if outside == "zero":
        flags = []
        for a in range(3):
            t = coords[a]
            flags.append((t < -0.5) | (t > dims[a] - 0.5))
        sh = [1, 1, 1]
        outside_mask = np.zeros((len(coords[0]), len(coords[1]), len(coords[2])), dtype=bool)
        for a in range(3):
            sh_a = sh.copy()
            sh_a[a] = -1
            outside_mask |= flags[a].reshape(sh_a)

    if mode == "nearest":
        idx = [np.clip(np.rint(coords[a]).astype(np.int64), 0, dims[a] - 1) for a in range(3)]
        out = values[np.ix_(idx[0], idx[1], idx[2])]
    elif mode == "trilinear":
        lo, wt = [], []
        for a in range(3):
            t = coords[a]
            i0 = np.floor(t)
            w = t - i0
            i0 = np.clip(i0.astype(np.int64), 0, dims[a] - 1)
            i1 = np.clip(i0 + 1, 0, dims[a] - 1)
            lo.append((i0, i1))
            wt.append(w)
        out = None
        vals = values.astype(np.float64, copy=False)
        for cx in (0, 1):
            for cy in (0, 1):
                for cz in (0, 1):
                    corner = vals[np.ix_(lo[0][cx], lo[1][cy], lo[2][cz])]
                    wx = (wt[0] if cx else 1.0 - wt[0])[:, None, None]
                    wy = (wt[1] if cy else 1.0 - wt[1])[None, :, None]
                    wz = (wt[2] if cz else 1.0 - wt[2])[None, None, :]
                    term = corner * wx * wy * wz
                    out = term if out is None else out + term
    else:
        raise ValueError(f"unknown mode {mode!r}")

    # out currently has axes in source-axis order; each source axis a carries
    # the output axis out_axis_of_src[a]. Transpose into output-axis order.
    perm = [out_axis_of_src.index(j) for j in range(3)]
    out = np.transpose(out, axes=perm)
    if outside_mask is not None:
        outside_mask = np.transpose(outside_mask, axes=perm)
        out = np.where(outside_mask, 0.0 if mode == "trilinear" else 0, out)
    return out, outside_mask


def _check_mode(grid: VoxelGrid, mode: str) -> None:
    if mode not in ("trilinear", "nearest"):
        raise ValueError(f"unknown mode {mode!r}")
    if grid.kind == KIND_LABEL and mode != "nearest":
        raise ValueError("label grids must be resampled with mode='nearest'")


def resample(grid: VoxelGrid, target_spacing, mode: str = "trilinear") -> VoxelGrid:
    """Resample to a new spacing on the same axes, preserving the physical
    volume center. Out-of-bounds samples clamp to the edge voxel.
    """
    _check_mode(grid, mode)
    target = _as_triple(target_spacing, "target_spacing")
    if min(target) <= 0:
        raise ValueError(f"target spacing must be positive, got {target}")

    dims = grid.dims
    out_dims, coords, t0 = [], [], []
    for a in range(3):
        ratio = target[a] / grid.spacing[a]
        n_out = max(1, int(np.floor(dims[a] * grid.spacing[a] / target[a] + 0.5)))
        start = (dims[a] - 1) / 2.0 - (n_out - 1) / 2.0 * ratio
        coords.append(start + np.arange(n_out) * ratio)
        out_dims.append(n_out)
        t0.append(start)
    origin = np.asarray(grid.origin) + grid.orientation.astype(np.float64) @ (
        np.asarray(grid.spacing) * np.asarray(t0)
    )
    sampled, _ = _gather(grid.values, coords, [0, 1, 2], mode, outside="clamp")
    if grid.kind == KIND_LABEL:
        sampled = sampled.astype(np.uint8)
    return VoxelGrid(
        values=sampled,
        spacing=target,
        origin=tuple(origin),
        orientation=grid.orientation,
        kind=grid.kind,
    )


def _cross_grid_coords(src: VoxelGrid, ref: VoxelGrid) -> tuple[list[np.ndarray], list[int]]:
    """Fractional src-index coordinates of ref voxel centers, separably.

    Requires both grids axis-aligned (signed permutations), which makes each
    source axis an affine function of exactly one ref axis.
    """
    src_map = src.axis_world_map()
    ref_by_world = {w: (j, s) for j, (w, s) in enumerate(ref.axis_world_map())}
    coords: list[np.ndarray] = [None, None, None]  # type: ignore[list-item]
    out_axis_of_src = [0, 0, 0]
    for a, (w, s_src) in enumerate(src_map):
        j, s_ref = ref_by_world[w]
        alpha = (ref.origin[w] - src.origin[w]) * s_src / src.spacing[a]
        beta = s_ref * s_src * ref.spacing[j] / src.spacing[a]
        coords[a] = alpha + beta * np.arange(ref.dims[j])
        out_axis_of_src[a] = j
    return coords, out_axis_of_src


def resample_to_geometry(
    src: VoxelGrid,
    ref: VoxelGrid,
    mode: str = "trilinear",
    outside: str = "clamp",
) -> tuple[VoxelGrid, float]:
    """Sample src at ref's voxel centers, returning a grid on ref's geometry.

    outside="clamp" extends edge values; outside="zero" writes 0 outside the
    source extent. Returns (grid, outside_fraction).
    """
    _check_mode(src, mode)
    if outside not in ("clamp", "zero"):
        raise ValueError(f"unknown outside policy {outside!r}")
    coords, out_axis_of_src = _cross_grid_coords(src, ref)
    sampled, outside_mask = _gather(src.values, coords, out_axis_of_src, mode, outside)
    if src.kind == KIND_LABEL:
        sampled = sampled.astype(np.uint8)
    frac = float(outside_mask.mean()) if outside_mask is not None else 0.0
    grid = VoxelGrid(
        values=sampled,
        spacing=ref.spacing,
        origin=ref.origin,
        orientation=ref.orientation,
        kind=src.kind,
    )
    return grid, frac


# ---------------------------------------------------------------------------
# orientation
# ---------------------------------------------------------------------------


def canonicalize_orientation(grid: VoxelGrid) -> VoxelGrid:
    """Permute/flip axes so orientation becomes identity, preserving every
    voxel's physical position. Pure index shuffling; values are untouched.
    """
    if np.array_equal(grid.orientation, np.eye(3, dtype=np.int8)):
        return grid
    axis_of_world = [0, 0, 0]
    sign_of_world = [1, 1, 1]
    for a, (w, s) in enumerate(grid.axis_world_map()):
        axis_of_world[w] = a
        sign_of_world[w] = s
    values = np.transpose(grid.values, axes=axis_of_world)
    idx0 = [0, 0, 0]
    for w in range(3):
        if sign_of_world[w] < 0:
            values = np.flip(values, axis=w)
            idx0[axis_of_world[w]] = grid.dims[axis_of_world[w]] - 1
    origin = grid.index_to_world(idx0)
    spacing = tuple(grid.spacing[axis_of_world[w]] for w in range(3))
    return VoxelGrid(
        values=values.copy(),
        spacing=spacing,
        origin=tuple(origin),
        orientation=np.eye(3, dtype=np.int8),
        kind=grid.kind,
    )
