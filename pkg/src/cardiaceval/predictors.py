"""Built-in test predictors, usable in-process or through the subprocess
wire protocol via ``python -m cardiaceval.predictors``.

Modes:
  uniform     every class scores 1/C
  background  one-hot background everywhere
  oracle      decode the phantom's constant per-structure intensities back
              to one-hot class scores (exact on noise-free phantoms)
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .inference import window_to_wire
from .phantom import intensity_class_table
from .structures import NUM_CLASSES
from .volume import HU_WINDOW


def uniform_predictor(classes: int = NUM_CLASSES):
    """Every class scores 1/C at every voxel."""

    def predict(window, spacing):
        return np.full((classes,) + window.shape, 1.0 / classes, dtype=np.float32)

    return predict


def constant_class_predictor(class_idx: int, classes: int = NUM_CLASSES):
    """One-hot scores for a fixed class at every voxel."""

    def predict(window, spacing):
        scores = np.zeros((classes,) + window.shape, dtype=np.float32)
        scores[class_idx] = 1.0
        return scores

    return predict


def _normalized_table() -> tuple[np.ndarray, np.ndarray]:
    """Phantom intensity table mapped into the normalized unit interval."""
    lo, hi = HU_WINDOW
    pairs = intensity_class_table()
    values = np.array([(hu - lo) / (hi - lo) for hu, _ in pairs])
    classes = np.array([cls for _, cls in pairs], dtype=np.int64)
    order = np.argsort(values)
    return values[order], classes[order]


def oracle_predictor(classes: int = NUM_CLASSES):
    """Decode normalized phantom intensities to one-hot class scores by
    nearest table value. Exact for noise-free phantoms because the table
    entries are well separated relative to float32 wire precision."""
    values, class_ids = _normalized_table()
    midpoints = (values[1:] + values[:-1]) / 2.0

    def predict(window, spacing):
        idx = np.digitize(np.asarray(window, dtype=np.float64), midpoints)
        labels = class_ids[idx]
        scores = np.zeros((classes,) + window.shape, dtype=np.float32)
        for c in range(classes):
            scores[c][labels == c] = 1.0
        return scores

    return predict


BUILTIN_PREDICTORS = {
    "uniform": uniform_predictor,
    "background": lambda classes: constant_class_predictor(0, classes),
    "oracle": oracle_predictor,
}


def wire_command(mode: str) -> str:
    """Command template running a built-in predictor via this interpreter."""
    if mode not in BUILTIN_PREDICTORS:
        raise ValueError(f"unknown predictor mode {mode!r}")
    return (
        f"{sys.executable} -m cardiaceval.predictors {mode} "
        "--input {input} --sidecar {sidecar} --output {output} --classes {classes}"
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="cardiaceval.predictors",
        description="Run a built-in predictor over one wire-protocol window.",
    )
    parser.add_argument("mode", choices=sorted(BUILTIN_PREDICTORS))
    parser.add_argument("--input", required=True)
    parser.add_argument("--sidecar", required=True)
    parser.add_argument("--output", required=True)
    parser.add_argument("--classes", type=int, default=NUM_CLASSES)
    args = parser.parse_args(argv)

    sidecar = json.loads(Path(args.sidecar).read_text())
    dims = tuple(int(d) for d in sidecar["dims"])
    spacing = tuple(float(s) for s in sidecar["spacing"])
    raw = np.fromfile(args.input, dtype="<f4")
    if raw.size != int(np.prod(dims)):
        print(f"input has {raw.size} values, expected {np.prod(dims)}", file=sys.stderr)
        return 2
    window = raw.reshape(dims, order="F")

    predict = BUILTIN_PREDICTORS[args.mode](args.classes)
    scores = np.asarray(predict(window, spacing), dtype="<f4")
    blob = b"".join(window_to_wire(scores[c]) for c in range(scores.shape[0]))
    Path(args.output).write_bytes(blob)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
