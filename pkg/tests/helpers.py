"""Independent brute-force oracles shared by the module and acceptance
tests. These deliberately avoid the library's own algorithms: distances are
pairwise scans, p-values come from full enumeration, and ranks are computed
by a separate sort-based routine.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def oracle_ranks(values) -> np.ndarray:
    """Average ranks by explicit group scan over the sorted values."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="mergesort")
    ranks = np.zeros(values.size)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + 1 + j + 1) / 2.0
        for t in range(i, j + 1):
            ranks[order[t]] = avg
        i = j + 1
    return ranks


def brute_force_edt(seeds: np.ndarray, dims, spacing) -> np.ndarray:
    """Nearest-seed Euclidean distance by scanning every (voxel, seed) pair."""
    dims = tuple(dims)
    spacing = np.asarray(spacing, dtype=np.float64)
    ii, jj, kk = np.meshgrid(*(np.arange(d) for d in dims), indexing="ij")
    pts = np.stack([ii, jj, kk], axis=-1).reshape(-1, 3) * spacing
    seed_pts = np.asarray(seeds, dtype=np.float64) * spacing
    out = np.full(pts.shape[0], np.inf)
    for chunk in range(0, seed_pts.shape[0], 256):
        block = seed_pts[chunk : chunk + 256]
        d2 = ((pts[:, None, :] - block[None, :, :]) ** 2).sum(axis=-1).min(axis=1)
        out = np.minimum(out, d2)
    return np.sqrt(out).reshape(dims)


def brute_force_surface(mask: np.ndarray) -> np.ndarray:
    """6-connectivity surface voxels by explicit neighbor checks."""
    out = []
    nx, ny, nz = mask.shape
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                if not mask[i, j, k]:
                    continue
                boundary = False
                for di, dj, dk in ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)):
                    a, b, c = i + di, j + dj, k + dk
                    if not (0 <= a < nx and 0 <= b < ny and 0 <= c < nz) or not mask[a, b, c]:
                        boundary = True
                        break
                if boundary:
                    out.append((i, j, k))
    return np.asarray(out, dtype=np.int64).reshape(-1, 3)


def nearest_rank_p95(values: np.ndarray) -> float:
    ordered = np.sort(np.asarray(values, dtype=np.float64))
    rank = max(1, math.ceil(0.95 * ordered.size))
    return float(ordered[rank - 1])


def brute_force_hd95(mask_a: np.ndarray, mask_b: np.ndarray, spacing) -> float:
    """HD95 from O(S^2) pairwise surface distances."""
    spacing = np.asarray(spacing, dtype=np.float64)
    surf_a = brute_force_surface(mask_a) * spacing
    surf_b = brute_force_surface(mask_b) * spacing
    d = np.sqrt(((surf_a[:, None, :] - surf_b[None, :, :]) ** 2).sum(axis=-1))
    d_ab = d.min(axis=1)
    d_ba = d.min(axis=0)
    return max(nearest_rank_p95(d_ab), nearest_rank_p95(d_ba))


def enumerate_signed_rank_p(diffs) -> float:
    """Two-sided p from all 2^n sign assignments over the observed ranks."""
    d = np.asarray(diffs, dtype=np.float64)
    d = d[d != 0.0]
    n = d.size
    ranks2 = np.rint(2.0 * oracle_ranks(np.abs(d))).astype(np.int64)
    w_obs = int(ranks2[d > 0].sum())
    signs = (np.arange(2**n)[:, None] >> np.arange(n)[None, :]) & 1
    sums = signs @ ranks2
    lower = int((sums <= w_obs).sum())
    upper = int((sums >= w_obs).sum())
    return min(1.0, 2.0 * min(lower, upper) / 2**n)


def enumerate_rank_sum_p(group_a, group_b) -> float:
    """Two-sided p from all C(n, n_a) assignments of the observed ranks."""
    a = np.asarray(group_a, dtype=np.float64)
    b = np.asarray(group_b, dtype=np.float64)
    na, n = a.size, a.size + b.size
    ranks2 = np.rint(2.0 * oracle_ranks(np.concatenate([a, b]))).astype(np.int64)
    r_obs = int(ranks2[:na].sum())
    lower = upper = total = 0
    for combo in itertools.combinations(range(n), na):
        s = int(ranks2[list(combo)].sum())
        total += 1
        if s <= r_obs:
            lower += 1
        if s >= r_obs:
            upper += 1
    return min(1.0, 2.0 * min(lower, upper) / total)


def random_blob_mask(rng: np.random.Generator, dims) -> np.ndarray:
    """Non-empty random mask: union of 1-3 random boxes and balls."""
    dims = tuple(dims)
    mask = np.zeros(dims, dtype=bool)
    ii, jj, kk = np.meshgrid(*(np.arange(d) for d in dims), indexing="ij")
    for _ in range(int(rng.integers(1, 4))):
        if rng.random() < 0.5:
            lo = [int(rng.integers(0, d)) for d in dims]
            hi = [int(rng.integers(l, d)) + 1 for l, d in zip(lo, dims)]
            mask[lo[0] : hi[0], lo[1] : hi[1], lo[2] : hi[2]] = True
        else:
            center = [rng.uniform(0, d - 1) for d in dims]
            radius = rng.uniform(1.0, max(2.0, min(dims) / 2.0))
            mask |= (ii - center[0]) ** 2 + (jj - center[1]) ** 2 + (kk - center[2]) ** 2 <= radius**2
    if not mask.any():
        mask[tuple(int(rng.integers(0, d)) for d in dims)] = True
    return mask
