"""Model-agnostic 3D sliding-window inference: window planning with 50%
overlap, fusion of per-window class scores, argmax labeling, and a bit-exact
subprocess predictor protocol.

Predictor wire protocol (all little-endian float32):
  input file   raw nx*ny*nz values, x-fastest order
  sidecar      JSON {"dims": [nx,ny,nz], "spacing": [sx,sy,sz],
                     "value_scale": "unit_interval"}
  output file  raw C*nx*ny*nz values, class-major (class varies slowest,
               x fastest within a class)
Command templates substitute {input}, {sidecar}, {output}, {classes}.
"""

from __future__ import annotations

import json
import shlex
import subprocess
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import product
from pathlib import Path
from typing import Callable

import numpy as np

from .structures import NUM_CLASSES
from .volume import KIND_LABEL, KIND_PROBABILITY, VoxelGrid

DEFAULT_PATCH = (128, 128, 128)
GAUSSIAN_SIGMA_FRACTION = 1.0 / 8.0

# Per-voxel class scores within this distance of the probability simplex are
# accepted as-is; up to ten times further they are renormalized; beyond that
# the predictor output is rejected.
SIMPLEX_ACCEPT = 1e-4
SIMPLEX_REPAIR = 1e-2

# predictor(window_values float32 (px,py,pz), spacing mm) -> (C,px,py,pz)
PredictorFn = Callable[[np.ndarray, tuple[float, float, float]], np.ndarray]


class PredictorError(RuntimeError):
    """The predictor violated the wire protocol or failed."""


@dataclass(frozen=True)
class WindowPlan:
    patch: tuple[int, int, int]
    stride: tuple[int, int, int]
    starts: list[tuple[int, int, int]]
    padding: tuple[tuple[int, int], tuple[int, int], tuple[int, int]]
    padded_dims: tuple[int, int, int]


@dataclass(frozen=True)
class ProbabilityMap:
    """Per-voxel class scores on the source volume's geometry."""

    scores: np.ndarray  # (C, nx, ny, nz)
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float]
    orientation: np.ndarray

    @property
    def classes(self) -> int:
        return self.scores.shape[0]


def _axis_starts(dim: int, patch: int, stride: int) -> list[int]:
    if dim <= patch:
        return [0]
    starts = list(range(0, dim - patch + 1, stride))
    if starts[-1] != dim - patch:
        starts.append(dim - patch)
    return starts


def plan_windows(dims, patch=DEFAULT_PATCH, overlap_fraction: float = 0.5) -> WindowPlan:
    """Tile a volume with fixed-size windows.

    stride = floor(patch * (1 - overlap)); the final start per axis is
    clamped so the last window ends exactly at the volume edge. Axes
    smaller than the patch are recorded for reflect padding.
    """
    dims = tuple(int(d) for d in dims)
    patch = tuple(int(p) for p in patch)
    if min(patch) <= 0:
        raise ValueError(f"patch must be positive, got {patch}")
    if not 0.0 <= overlap_fraction < 1.0:
        raise ValueError(f"overlap fraction must be in [0, 1), got {overlap_fraction}")
    stride = tuple(max(1, int(np.floor(p * (1.0 - overlap_fraction)))) for p in patch)

    padding = []
    padded = []
    for a in range(3):
        if dims[a] < patch[a]:
            missing = patch[a] - dims[a]
            lo = missing // 2
            padding.append((lo, missing - lo))
            padded.append(patch[a])
        else:
            padding.append((0, 0))
            padded.append(dims[a])

    per_axis = [_axis_starts(padded[a], patch[a], stride[a]) for a in range(3)]
    starts = [tuple(s) for s in product(*per_axis)]
    return WindowPlan(
        patch=patch,
        stride=stride,
        starts=starts,
        padding=tuple(padding),
        padded_dims=tuple(padded),
    )


def _gaussian_window_weight(patch: tuple[int, int, int]) -> np.ndarray:
    ws = []
    for p in patch:
        sigma = p * GAUSSIAN_SIGMA_FRACTION
        x = np.arange(p, dtype=np.float64)
        c = (p - 1) / 2.0
        ws.append(np.exp(-0.5 * ((x - c) / sigma) ** 2))
    return ws[0][:, None, None] * ws[1][None, :, None] * ws[2][None, None, :]


def _validate_window_scores(scores: np.ndarray, context: str) -> np.ndarray:
    if not np.all(np.isfinite(scores)):
        raise PredictorError(f"non-finite predictor scores ({context})")
    sums = scores.sum(axis=0)
    deviation = max(
        float(np.abs(sums - 1.0).max()),
        max(0.0, -float(scores.min())),
    )
    if deviation >= SIMPLEX_REPAIR:
        raise PredictorError(
            f"predictor scores deviate from the probability simplex by {deviation:.3g} ({context})"
        )
    if deviation > SIMPLEX_ACCEPT:
        scores = np.clip(scores, 0.0, None)
        scores = scores / scores.sum(axis=0, keepdims=True)
    return scores


def run_sliding_window(
    volume: VoxelGrid,
    predictor: PredictorFn,
    plan: WindowPlan | None = None,
    fusion: str = "uniform",
    threads: int = 1,
) -> ProbabilityMap:
    """Predict every planned window and fuse the class scores.

    Window evaluation may run in a thread pool, but accumulation always
    happens in canonical plan order so the result is bit-identical
    regardless of thread count. Padding is reflect and cropped afterwards.
    """
    if volume.kind != KIND_PROBABILITY:
        raise ValueError("sliding-window input must be a normalized (unit-interval) volume")
    if fusion not in ("uniform", "gaussian"):
        raise ValueError(f"unknown fusion {fusion!r}")
    if plan is None:
        plan = plan_windows(volume.dims)

    values = volume.values.astype(np.float32)
    if any(lo or hi for lo, hi in plan.padding):
        values = np.pad(values, plan.padding, mode="reflect")
    if values.shape != plan.padded_dims:
        raise ValueError(f"plan padded dims {plan.padded_dims} do not match volume {values.shape}")

    px, py, pz = plan.patch
    weight = (
        _gaussian_window_weight(plan.patch)
        if fusion == "gaussian"
        else np.ones(plan.patch, dtype=np.float64)
    )

    def _predict(start):
        sx, sy, sz = start
        window = np.ascontiguousarray(values[sx : sx + px, sy : sy + py, sz : sz + pz])
        scores = np.asarray(predictor(window, volume.spacing), dtype=np.float64)
        if scores.shape != (scores.shape[0], px, py, pz) or scores.shape[0] < 2:
            raise PredictorError(f"predictor returned shape {scores.shape} for window at {start}")
        return _validate_window_scores(scores, f"window at {start}")

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_predict, plan.starts))
    else:
        results = [_predict(s) for s in plan.starts]

    classes = results[0].shape[0]
    acc = np.zeros((classes,) + plan.padded_dims, dtype=np.float64)
    wacc = np.zeros(plan.padded_dims, dtype=np.float64)
    for start, scores in zip(plan.starts, results):
        if scores.shape[0] != classes:
            raise PredictorError("predictor changed class count between windows")
        sx, sy, sz = start
        acc[:, sx : sx + px, sy : sy + py, sz : sz + pz] += scores * weight[np.newaxis]
        wacc[sx : sx + px, sy : sy + py, sz : sz + pz] += weight

    fused = acc / wacc[np.newaxis]
    (lx, _), (ly, _), (lz, _) = plan.padding
    nx, ny, nz = volume.dims
    fused = fused[:, lx : lx + nx, ly : ly + ny, lz : lz + nz]
    return ProbabilityMap(
        scores=fused,
        spacing=volume.spacing,
        origin=volume.origin,
        orientation=volume.orientation,
    )


def argmax_labels(probs: ProbabilityMap) -> VoxelGrid:
    """Per-voxel argmax over classes; ties break toward the lowest class
    index, so background wins ties against structures."""
    labels = np.argmax(probs.scores, axis=0).astype(np.uint8)
    return VoxelGrid(
        values=labels,
        spacing=probs.spacing,
        origin=probs.origin,
        orientation=probs.orientation,
        kind=KIND_LABEL,
    )


def window_to_wire(window: np.ndarray) -> bytes:
    """Serialize a window to the raw little-endian x-fastest float32 layout."""
    return np.asarray(window, dtype="<f4").ravel(order="F").tobytes()


def scores_from_wire(blob: bytes, classes: int, dims: tuple[int, int, int]) -> np.ndarray:
    """Parse class-major raw float32 scores into a (C, nx, ny, nz) array."""
    nvox = int(np.prod(dims))
    expected = classes * nvox * 4
    if len(blob) != expected:
        raise PredictorError(f"predictor output has {len(blob)} bytes, expected {expected}")
    flat = np.frombuffer(blob, dtype="<f4").astype(np.float64)
    per_class = flat.reshape(classes, nvox)
    return per_class.reshape((classes,) + tuple(dims[::-1])).transpose(0, 3, 2, 1)


def subprocess_predictor(
    command: str,
    classes: int = NUM_CLASSES,
    timeout_s: float = 300.0,
) -> PredictorFn:
    """Wrap a command-line template as a predictor handle.

    Each invocation writes the window and sidecar to a fresh temporary
    directory, substitutes {input}/{sidecar}/{output}/{classes} into the
    template, runs it, and validates the output. Safe to call from multiple
    workers: one subprocess and one temp dir per invocation.
    """

    def predict(window: np.ndarray, spacing) -> np.ndarray:
        dims = tuple(int(d) for d in window.shape)
        with tempfile.TemporaryDirectory(prefix="cardiaceval-pred-") as tmp:
            tmp_path = Path(tmp)
            input_path = tmp_path / "window.raw"
            sidecar_path = tmp_path / "window.json"
            output_path = tmp_path / "scores.raw"
            input_path.write_bytes(window_to_wire(window))
            sidecar_path.write_text(
                json.dumps(
                    {
                        "dims": list(dims),
                        "spacing": [float(s) for s in spacing],
                        "value_scale": "unit_interval",
                    }
                )
            )
            try:
                cmdline = command.format(
                    input=str(input_path),
                    sidecar=str(sidecar_path),
                    output=str(output_path),
                    classes=classes,
                )
            except (KeyError, IndexError) as exc:
                raise PredictorError(f"bad predictor command template: {exc}") from exc
            try:
                proc = subprocess.run(
                    shlex.split(cmdline),
                    capture_output=True,
                    timeout=timeout_s,
                )
            except FileNotFoundError as exc:
                raise PredictorError(f"predictor command not found: {exc}") from exc
            except subprocess.TimeoutExpired as exc:
                raise PredictorError(f"predictor timed out after {timeout_s}s") from exc
            if proc.returncode != 0:
                tail = proc.stderr.decode(errors="replace").strip()[-500:]
                raise PredictorError(f"predictor exited with status {proc.returncode}: {tail}")
            if not output_path.exists():
                raise PredictorError("predictor produced no output file")
            return scores_from_wire(output_path.read_bytes(), classes, dims)

    return predict
