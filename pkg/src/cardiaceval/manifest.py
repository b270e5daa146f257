"""Cohort manifest model, stratified/balanced splitting, and k-fold
partitioning.

The manifest is a CSV with a fixed header; unknown extra columns are
preserved but ignored. Relative paths are resolved against the manifest's
directory. Splitting is a pure function of the manifest's content, the
parameters, and the seed: permuting rows does not change the selected sets.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MANIFEST_COLUMNS = [
    "case_id",
    "image_path",
    "mask_manual_path",
    "mask_pred_path",
    "dose_path",
    "contrast",
    "position",
    "age",
    "sex",
    "bmi",
]

CONTRASTS = ("CECT", "NCCT")
POSITIONS = ("supine", "prone")
SEXES = ("M", "F")


class ManifestError(ValueError):
    """Malformed manifest content."""


class InsufficientStratumError(ValueError):
    """A stratum holds fewer cases than requested."""


@dataclass
class CaseRecord:
    case_id: str
    image_path: Path
    mask_manual_path: Path
    mask_pred_path: Path | None
    dose_path: Path | None
    contrast: str
    position: str
    age: float
    sex: str
    bmi: float
    extra: dict[str, str] = field(default_factory=dict)


@dataclass
class CohortManifest:
    records: list[CaseRecord]
    extra_columns: list[str] = field(default_factory=list)
    path: Path | None = None

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    def by_id(self, case_id: str) -> CaseRecord:
        for rec in self.records:
            if rec.case_id == case_id:
                return rec
        raise KeyError(case_id)


@dataclass(frozen=True)
class SplitAssignment:
    train: list[str]
    holdout: list[str]
    seed: int
    folds: list[list[str]] | None = None


def _parse_enum(value: str, allowed, column: str, row: int) -> str:
    if value not in allowed:
        raise ManifestError(
            f"row {row}: invalid {column} value {value!r} (expected one of {', '.join(allowed)})"
        )
    return value


def _parse_positive_float(value: str, column: str, row: int) -> float:
    try:
        parsed = float(value)
    except ValueError as exc:
        raise ManifestError(f"row {row}: {column} is not a number: {value!r}") from exc
    if not parsed > 0:
        raise ManifestError(f"row {row}: {column} must be > 0, got {parsed}")
    return parsed


def load_manifest(path) -> CohortManifest:
    """Load and validate a manifest CSV.

    Referenced files are not checked for existence here; commands that read
    them report per-case failures.
    """
    path = Path(path)
    base = path.parent
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestError(f"{path}: empty manifest") from None
        if header[: len(MANIFEST_COLUMNS)] != MANIFEST_COLUMNS:
            raise ManifestError(
                f"{path}: header must start with {','.join(MANIFEST_COLUMNS)}; got {','.join(header)}"
            )
        extra_columns = header[len(MANIFEST_COLUMNS) :]
        if len(set(header)) != len(header):
            raise ManifestError(f"{path}: duplicate columns in header")

        records = []
        seen: set[str] = set()
        for row_num, row in enumerate(reader, start=2):
            if not row or all(not cell for cell in row):
                continue
            if len(row) != len(header):
                raise ManifestError(f"row {row_num}: expected {len(header)} cells, got {len(row)}")
            cells = dict(zip(header, row))
            case_id = cells["case_id"]
            if not case_id:
                raise ManifestError(f"row {row_num}: empty case_id")
            if case_id in seen:
                raise ManifestError(f"duplicate case_id {case_id!r}")
            seen.add(case_id)

            def _path(column: str, required: bool):
                raw = cells[column]
                if not raw:
                    if required:
                        raise ManifestError(f"row {row_num}: {column} is required")
                    return None
                p = Path(raw)
                return p if p.is_absolute() else (base / p).resolve()

            records.append(
                CaseRecord(
                    case_id=case_id,
                    image_path=_path("image_path", required=True),
                    mask_manual_path=_path("mask_manual_path", required=True),
                    mask_pred_path=_path("mask_pred_path", required=False),
                    dose_path=_path("dose_path", required=False),
                    contrast=_parse_enum(cells["contrast"], CONTRASTS, "contrast", row_num),
                    position=_parse_enum(cells["position"], POSITIONS, "position", row_num),
                    age=_parse_positive_float(cells["age"], "age", row_num),
                    sex=_parse_enum(cells["sex"], SEXES, "sex", row_num),
                    bmi=_parse_positive_float(cells["bmi"], "bmi", row_num),
                    extra={c: cells[c] for c in extra_columns},
                )
            )
    return CohortManifest(records=records, extra_columns=extra_columns, path=path)


def save_manifest(manifest: CohortManifest, path) -> None:
    """Write a manifest; paths under the target directory become relative."""
    path = Path(path)
    base = path.parent.resolve()

    def _fmt(p: Path | None) -> str:
        if p is None:
            return ""
        p = Path(p)
        try:
            return str(p.resolve().relative_to(base))
        except ValueError:
            return str(p)

    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_COLUMNS + manifest.extra_columns)
        for rec in manifest.records:
            writer.writerow(
                [
                    rec.case_id,
                    _fmt(rec.image_path),
                    _fmt(rec.mask_manual_path),
                    _fmt(rec.mask_pred_path),
                    _fmt(rec.dose_path),
                    rec.contrast,
                    rec.position,
                    f"{rec.age:g}",
                    rec.sex,
                    f"{rec.bmi:g}",
                ]
                + [rec.extra.get(c, "") for c in manifest.extra_columns]
            )


def stratified_split(manifest: CohortManifest, per_stratum: dict[str, int], seed: int) -> SplitAssignment:
    """Sample the requested number of cases per contrast stratum, without
    replacement, into the training set; everything else is holdout.

    Selection operates on sorted case ids, so the result is invariant to
    manifest row order.
    """
    ids_by_stratum: dict[str, list[str]] = {}
    for rec in manifest.records:
        ids_by_stratum.setdefault(rec.contrast, []).append(rec.case_id)

    train: list[str] = []
    for idx, stratum in enumerate(sorted(per_stratum)):
        want = int(per_stratum[stratum])
        if want < 0:
            raise ValueError(f"requested count for {stratum} must be >= 0")
        have = sorted(ids_by_stratum.get(stratum, []))
        if len(have) < want:
            raise InsufficientStratumError(
                f"stratum {stratum}: requested {want} but only {len(have)} available "
                f"(short by {want - len(have)})"
            )
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(idx,)))
        picked = rng.permutation(len(have))[:want]
        train.extend(have[i] for i in sorted(picked))
    train = sorted(train)
    train_set = set(train)
    holdout = sorted(rec.case_id for rec in manifest.records if rec.case_id not in train_set)
    return SplitAssignment(train=train, holdout=holdout, seed=seed)


def kfold(train_ids, k: int, seed: int) -> list[list[str]]:
    """Deterministic shuffle then k contiguous chunks with sizes differing
    by at most one (earlier folds take the remainder)."""
    ids = sorted(train_ids)
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if k > len(ids):
        raise ValueError(f"k={k} exceeds the {len(ids)} available cases")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0xF01D,)))
    shuffled = [ids[i] for i in rng.permutation(len(ids))]
    base = len(ids) // k
    remainder = len(ids) % k
    folds = []
    at = 0
    for f in range(k):
        size = base + (1 if f < remainder else 0)
        folds.append(sorted(shuffled[at : at + size]))
        at += size
    return folds
