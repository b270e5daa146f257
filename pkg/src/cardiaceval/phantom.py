"""Deterministic synthetic cohort generator: CT-like volumes with eight
ellipsoidal substructures, CECT/NCCT and supine/prone variants, matching
label masks, and analytic Gaussian dose fields.

Every intensity is a documented constant so that predictors can decode the
structure class from voxel values alone (the basis of the oracle predictor
used by the end-to-end tests). Structure HU values, with and without the
CECT vessel offset, are pairwise at least 15 HU apart and stay inside the
normalization window.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .structures import GREAT_VESSELS, LABEL_IDS, SUBSTRUCTURES
from .volume import KIND_GY, KIND_HU, KIND_LABEL, VoxelGrid, save_nifti

BACKGROUND_HU = -30.0
CONTRAST_OFFSET_HU = 150.0  # added to the four vessel structures on CECT

# (center mm, radii mm, base HU) in the reference 96 x 96 x 192 mm box.
BASE_ELLIPSOIDS: dict[str, tuple[tuple[float, float, float], tuple[float, float, float], float]] = {
    "AA": ((32.0, 32.0, 64.0), (10.0, 10.0, 15.0), 105.0),
    "PA": ((64.0, 32.0, 64.0), (10.0, 10.0, 15.0), 120.0),
    "SVC": ((32.0, 64.0, 64.0), (10.0, 10.0, 15.0), 135.0),
    "IVC": ((64.0, 64.0, 64.0), (10.0, 10.0, 15.0), 150.0),
    "RA": ((32.0, 32.0, 128.0), (10.0, 10.0, 15.0), 25.0),
    "RV": ((64.0, 32.0, 128.0), (10.0, 10.0, 15.0), 45.0),
    "LA": ((32.0, 64.0, 128.0), (10.0, 10.0, 15.0), 65.0),
    "LV": ((64.0, 64.0, 128.0), (10.0, 10.0, 15.0), 85.0),
}

# (center mm, sigma mm, peak Gy): one broad beam near the volume center.
DEFAULT_BEAMS = (((48.0, 48.0, 96.0), (30.0, 30.0, 60.0), 60.0),)

MIN_STRUCTURE_VOXELS = 32

DIMS_JITTER_VOX = 8
CENTER_JITTER_MM = 5.0


class PhantomGeometryError(ValueError):
    """Ellipsoids overlap or a structure fell below the minimum voxel count."""


def structure_hu(name: str, contrast: str) -> float:
    """Constant HU of a structure for a given acquisition contrast."""
    hu = BASE_ELLIPSOIDS[name][2]
    if contrast == "CECT" and name in GREAT_VESSELS:
        hu += CONTRAST_OFFSET_HU
    return hu


def intensity_class_table(contrast: str | None = None) -> list[tuple[float, int]]:
    """(HU value, class id) pairs a decoder may observe, background included.

    With contrast=None the table covers both CECT and NCCT variants, which
    keeps nearest-value decoding exact for noise-free phantoms of either
    contrast.
    """
    table = [(BACKGROUND_HU, 0)]
    contrasts = ("NCCT", "CECT") if contrast is None else (contrast,)
    for name in SUBSTRUCTURES:
        for c in contrasts:
            table.append((structure_hu(name, c), LABEL_IDS[name]))
    return sorted(set(table))


@dataclass(frozen=True)
class PhantomSpec:
    seed: int
    dims: tuple[int, int, int] = (96, 96, 64)
    spacing: tuple[float, float, float] = (1.0, 1.0, 3.0)
    contrast: str = "NCCT"
    position: str = "supine"
    ellipsoids: dict[str, tuple] = field(default_factory=lambda: dict(BASE_ELLIPSOIDS))
    noise_sigma_hu: float = 0.0
    beams: tuple = DEFAULT_BEAMS

    def __post_init__(self):
        if self.contrast not in ("CECT", "NCCT"):
            raise ValueError(f"contrast must be CECT or NCCT, got {self.contrast!r}")
        if self.position not in ("supine", "prone"):
            raise ValueError(f"position must be supine or prone, got {self.position!r}")
        if self.noise_sigma_hu < 0:
            raise ValueError("noise sigma must be non-negative")


@dataclass(frozen=True)
class PhantomCase:
    image: VoxelGrid
    labels: VoxelGrid
    dose: VoxelGrid
    age_years: float
    sex: str
    bmi: float


def _voxel_center_coords(dims, spacing):
    return [np.arange(dims[a], dtype=np.float64) * spacing[a] for a in range(3)]


def generate_case(spec: PhantomSpec) -> PhantomCase:
    """Generate one case; identical specs yield bit-identical volumes."""
    nx, ny, nz = spec.dims
    xs, ys, zs = _voxel_center_coords(spec.dims, spec.spacing)
    x = xs[:, None, None]
    y = ys[None, :, None]
    z = zs[None, None, :]

    labels = np.zeros(spec.dims, dtype=np.uint8)
    image = np.full(spec.dims, BACKGROUND_HU, dtype=np.float64)
    for name in SUBSTRUCTURES:
        (cx, cy, cz), (rx, ry, rz), _ = spec.ellipsoids[name]
        member = ((x - cx) / rx) ** 2 + ((y - cy) / ry) ** 2 + ((z - cz) / rz) ** 2 <= 1.0
        count = int(member.sum())
        if count < MIN_STRUCTURE_VOXELS:
            raise PhantomGeometryError(
                f"structure {name} has {count} voxels (< {MIN_STRUCTURE_VOXELS})"
            )
        if np.any(labels[member] != 0):
            raise PhantomGeometryError(f"structure {name} overlaps a previous ellipsoid")
        labels[member] = LABEL_IDS[name]
        image[member] = structure_hu(name, spec.contrast)

    noise_seed, record_seed = np.random.SeedSequence(spec.seed).spawn(2)
    if spec.noise_sigma_hu > 0:
        rng = np.random.default_rng(noise_seed)
        image = image + rng.normal(0.0, spec.noise_sigma_hu, size=spec.dims)

    dose = np.zeros(spec.dims, dtype=np.float64)
    for (bx, by, bz), (sx, sy, sz), peak in spec.beams:
        dose += peak * np.exp(
            -0.5 * (((x - bx) / sx) ** 2 + ((y - by) / sy) ** 2 + ((z - bz) / sz) ** 2)
        )

    orientation = np.eye(3, dtype=np.int8)
    origin = (0.0, 0.0, 0.0)
    if spec.position == "prone":
        # Flip voxel order along the anterior-posterior axis and update the
        # metadata so every voxel keeps its physical position.
        image = image[:, ::-1, :].copy()
        labels = labels[:, ::-1, :].copy()
        dose = dose[:, ::-1, :].copy()
        orientation = np.diag([1, -1, 1]).astype(np.int8)
        origin = (0.0, (ny - 1) * spec.spacing[1], 0.0)

    rng_rec = np.random.default_rng(record_seed)
    age = float(rng_rec.integers(40, 86))
    sex = "F" if rng_rec.random() < 0.5 else "M"
    bmi = float(np.round(rng_rec.uniform(18.0, 40.0), 1))

    make = lambda vals, kind: VoxelGrid(
        values=vals, spacing=spec.spacing, origin=origin, orientation=orientation, kind=kind
    )
    return PhantomCase(
        image=make(image, KIND_HU),
        labels=make(labels, KIND_LABEL),
        dose=make(dose, KIND_GY),
        age_years=age,
        sex=sex,
        bmi=bmi,
    )


def _jittered_spec(base: PhantomSpec, case_seed: np.random.SeedSequence) -> PhantomSpec:
    rng = np.random.default_rng(case_seed)
    dims = tuple(
        int(d + rng.integers(-DIMS_JITTER_VOX, DIMS_JITTER_VOX + 1)) for d in base.dims
    )
    ellipsoids = {}
    for name, (center, radii, hu) in base.ellipsoids.items():
        shift = rng.uniform(-CENTER_JITTER_MM, CENTER_JITTER_MM, size=3)
        ellipsoids[name] = (tuple(np.asarray(center) + shift), radii, hu)
    beams = []
    for center, sigma, peak in base.beams:
        shift = rng.uniform(-CENTER_JITTER_MM, CENTER_JITTER_MM, size=3)
        beams.append((tuple(np.asarray(center) + shift), sigma, peak))
    case_scalar_seed = int(rng.integers(0, 2**31 - 1))
    return replace(base, seed=case_scalar_seed, dims=dims, ellipsoids=ellipsoids, beams=tuple(beams))


def generate_cohort(
    n_cect: int,
    n_ncct: int,
    n_prone: int,
    seed: int,
    out_dir,
    noise_sigma_hu: float = 0.0,
    dims: tuple[int, int, int] = (96, 96, 64),
    spacing: tuple[float, float, float] = (1.0, 1.0, 3.0),
):
    """Write a cohort of NIfTI triplets plus a manifest CSV.

    Case geometry is jittered deterministically from the seed (dims by up to
    +/-8 voxels, ellipsoid and beam centers by up to +/-5 mm). CECT cases
    come first; prone is assigned to the trailing NCCT cases, mirroring a
    cohort where position variation occurs only in non-contrast scans.
    Returns the manifest path.
    """
    from .manifest import MANIFEST_COLUMNS  # local import to avoid a cycle

    if min(n_cect, n_ncct, n_prone) < 0:
        raise ValueError("cohort counts must be non-negative")
    if n_prone > n_ncct:
        raise ValueError(f"n_prone ({n_prone}) cannot exceed n_ncct ({n_ncct})")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    total = n_cect + n_ncct
    root = np.random.SeedSequence(seed)
    case_seeds = root.spawn(total)
    rows = []
    for i in range(total):
        contrast = "CECT" if i < n_cect else "NCCT"
        prone = i >= total - n_prone
        case_id = f"case_{i + 1:04d}"
        base = PhantomSpec(
            seed=0,
            dims=dims,
            spacing=spacing,
            contrast=contrast,
            position="prone" if prone else "supine",
            noise_sigma_hu=noise_sigma_hu,
        )
        spec = _jittered_spec(base, case_seeds[i])
        case = generate_case(spec)
        image_name = f"{case_id}_image.nii.gz"
        labels_name = f"{case_id}_labels.nii.gz"
        dose_name = f"{case_id}_dose.nii.gz"
        save_nifti(case.image, out_dir / image_name)
        save_nifti(case.labels, out_dir / labels_name)
        save_nifti(case.dose, out_dir / dose_name)
        rows.append(
            {
                "case_id": case_id,
                "image_path": image_name,
                "mask_manual_path": labels_name,
                "mask_pred_path": "",
                "dose_path": dose_name,
                "contrast": contrast,
                "position": spec.position,
                "age": f"{case.age_years:g}",
                "sex": case.sex,
                "bmi": f"{case.bmi:g}",
            }
        )

    manifest_path = out_dir / "manifest.csv"
    with open(manifest_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=MANIFEST_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    return manifest_path
