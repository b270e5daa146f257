"""Minimal NIfTI-1 single-file reader/writer (.nii and .nii.gz).

Only what the toolkit needs: 3D scalar volumes, little- or big-endian,
sform/qform affines, slope/intercept scaling. Data is stored x-fastest
(Fortran order), matching the format.
"""

from __future__ import annotations

import gzip
import os
from pathlib import Path

import numpy as np


class NiftiError(ValueError):
    """Malformed or unsupported NIfTI-1 content."""


HEADER_DTD = [
    ("sizeof_hdr", "i4"),
    ("data_type", "S10"),
    ("db_name", "S18"),
    ("extents", "i4"),
    ("session_error", "i2"),
    ("regular", "S1"),
    ("dim_info", "u1"),
    ("dim", "i2", (8,)),
    ("intent_p1", "f4"),
    ("intent_p2", "f4"),
    ("intent_p3", "f4"),
    ("intent_code", "i2"),
    ("datatype", "i2"),
    ("bitpix", "i2"),
    ("slice_start", "i2"),
    ("pixdim", "f4", (8,)),
    ("vox_offset", "f4"),
    ("scl_slope", "f4"),
    ("scl_inter", "f4"),
    ("slice_end", "i2"),
    ("slice_code", "u1"),
    ("xyzt_units", "u1"),
    ("cal_max", "f4"),
    ("cal_min", "f4"),
    ("slice_duration", "f4"),
    ("toffset", "f4"),
    ("glmax", "i4"),
    ("glmin", "i4"),
    ("descrip", "S80"),
    ("aux_file", "S24"),
    ("qform_code", "i2"),
    ("sform_code", "i2"),
    ("quatern_b", "f4"),
    ("quatern_c", "f4"),
    ("quatern_d", "f4"),
    ("qoffset_x", "f4"),
    ("qoffset_y", "f4"),
    ("qoffset_z", "f4"),
    ("srow_x", "f4", (4,)),
    ("srow_y", "f4", (4,)),
    ("srow_z", "f4", (4,)),
    ("intent_name", "S16"),
    ("magic", "S4"),
]

HEADER_SIZE = 348

# datatype code -> numpy dtype (unscaled payload types we accept)
DTYPE_BY_CODE = {
    2: np.uint8,
    4: np.int16,
    16: np.float32,
    64: np.float64,
}
CODE_BY_KIND = {"uint8": 2, "float32": 16}
BITPIX_BY_CODE = {2: 8, 4: 16, 16: 32, 64: 64}


def _read_bytes(path: Path) -> bytes:
    if path.name.endswith(".gz"):
        with gzip.open(path, "rb") as fh:
            return fh.read()
    with open(path, "rb") as fh:
        return fh.read()


def _parse_header(buf: bytes) -> tuple[np.void, str]:
    if len(buf) < HEADER_SIZE:
        raise NiftiError("file shorter than a NIfTI-1 header")
    for order in ("<", ">"):
        dt = np.dtype(HEADER_DTD).newbyteorder(order)
        hdr = np.frombuffer(buf[:HEADER_SIZE], dtype=dt)[0]
        if int(hdr["sizeof_hdr"]) == HEADER_SIZE:
            return hdr, order
    raise NiftiError("not a NIfTI-1 file (sizeof_hdr != 348 in either byte order)")


def _quaternion_matrix(hdr: np.void) -> np.ndarray:
    b = float(hdr["quatern_b"])
    c = float(hdr["quatern_c"])
    d = float(hdr["quatern_d"])
    w2 = 1.0 - (b * b + c * c + d * d)
    a = np.sqrt(w2) if w2 > 0 else 0.0
    return np.array(
        [
            [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
            [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
            [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - b * b - c * c],
        ]
    )


def _affine_from_header(hdr: np.void) -> np.ndarray:
    affine = np.eye(4)
    if int(hdr["sform_code"]) > 0:
        rows = np.vstack([hdr["srow_x"], hdr["srow_y"], hdr["srow_z"]]).astype(np.float64)
        if np.all(np.isfinite(rows)):
            affine[:3, :] = rows
            return affine
    if int(hdr["qform_code"]) > 0:
        rot = _quaternion_matrix(hdr)
        vox = np.asarray(hdr["pixdim"][1:4], dtype=np.float64)
        qfac = float(hdr["pixdim"][0])
        if qfac == 0.0:
            qfac = 1.0
        vox = vox * np.array([1.0, 1.0, qfac])
        affine[:3, :3] = rot * vox[np.newaxis, :]
        affine[:3, 3] = [hdr["qoffset_x"], hdr["qoffset_y"], hdr["qoffset_z"]]
        return affine
    affine[:3, :3] = np.diag(np.asarray(hdr["pixdim"][1:4], dtype=np.float64))
    return affine


def read_volume(path: os.PathLike | str) -> tuple[np.ndarray, np.ndarray]:
    """Read a 3D NIfTI-1 volume.

    Returns (values, affine): values is float64 with shape (nx, ny, nz) and
    slope/intercept applied; affine is the 4x4 voxel-index -> mm transform
    (sform preferred over qform when both are set).
    """
    path = Path(path)
    buf = _read_bytes(path)
    hdr, order = _parse_header(buf)

    magic = bytes(hdr["magic"])
    if magic not in (b"n+1\x00", b"n+1"):
        if magic.startswith(b"ni1"):
            raise NiftiError("two-file (.hdr/.img) NIfTI is not supported")
        raise NiftiError(f"malformed NIfTI magic {magic!r}")

    dim = np.asarray(hdr["dim"], dtype=np.int64)
    ndim = int(dim[0])
    if ndim < 1 or ndim > 7:
        raise NiftiError(f"invalid dim[0]={ndim}")
    extents = dim[1 : 1 + ndim]
    if np.any(extents < 1):
        raise NiftiError("non-positive axis extent")
    if ndim > 3 and np.any(extents[3:] > 1):
        raise NiftiError("only 3D volumes are supported (trailing axes must have extent 1)")
    dims = tuple(int(v) for v in extents[:3]) + (1,) * max(0, 3 - ndim)

    code = int(hdr["datatype"])
    if code not in DTYPE_BY_CODE:
        raise NiftiError(f"unsupported datatype code {code}")
    payload_dtype = np.dtype(DTYPE_BY_CODE[code]).newbyteorder(order)

    offset = int(hdr["vox_offset"])
    if offset < HEADER_SIZE:
        raise NiftiError(f"invalid vox_offset {offset}")
    nvox = int(np.prod(dims))
    nbytes = nvox * payload_dtype.itemsize
    if len(buf) < offset + nbytes:
        raise NiftiError("file truncated: payload shorter than dim implies")
    raw = np.frombuffer(buf, dtype=payload_dtype, count=nvox, offset=offset)
    values = raw.reshape(dims, order="F").astype(np.float64)

    slope = float(hdr["scl_slope"])
    inter = float(hdr["scl_inter"])
    if np.isfinite(slope) and slope != 0.0:
        values = values * slope + (inter if np.isfinite(inter) else 0.0)

    return values, _affine_from_header(hdr)


def write_volume(
    values: np.ndarray,
    affine: np.ndarray,
    path: os.PathLike | str,
    payload: str = "float32",
) -> None:
    """Write a 3D volume as single-file NIfTI-1 (gzipped when path ends .gz).

    payload is "float32" or "uint8"; the sform carries the affine. Gzip
    streams are written with mtime=0 so identical volumes produce identical
    bytes.
    """
    if values.ndim != 3:
        raise NiftiError(f"expected 3D values, got {values.ndim}D")
    if payload not in CODE_BY_KIND:
        raise NiftiError(f"unsupported payload {payload!r}")
    code = CODE_BY_KIND[payload]
    data = np.asarray(values, dtype=DTYPE_BY_CODE[code])

    hdr = np.zeros((), dtype=np.dtype(HEADER_DTD).newbyteorder("<"))
    hdr["sizeof_hdr"] = HEADER_SIZE
    hdr["regular"] = b"r"
    dim = np.ones(8, dtype=np.int16)
    dim[0] = 3
    dim[1:4] = values.shape
    hdr["dim"] = dim
    hdr["datatype"] = code
    hdr["bitpix"] = BITPIX_BY_CODE[code]
    spacing = np.sqrt((np.asarray(affine[:3, :3], dtype=np.float64) ** 2).sum(axis=0))
    pixdim = np.zeros(8, dtype=np.float32)
    pixdim[0] = 1.0
    pixdim[1:4] = spacing
    hdr["pixdim"] = pixdim
    hdr["vox_offset"] = 352.0
    hdr["scl_slope"] = 1.0
    hdr["scl_inter"] = 0.0
    hdr["xyzt_units"] = 2  # mm
    hdr["descrip"] = b"cardiaceval"
    hdr["sform_code"] = 1
    hdr["qform_code"] = 0
    hdr["srow_x"] = np.asarray(affine[0, :], dtype=np.float32)
    hdr["srow_y"] = np.asarray(affine[1, :], dtype=np.float32)
    hdr["srow_z"] = np.asarray(affine[2, :], dtype=np.float32)
    hdr["magic"] = b"n+1"

    blob = hdr.tobytes() + b"\x00" * 4 + data.ravel(order="F").tobytes()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.name.endswith(".gz"):
        with open(path, "wb") as fh:
            with gzip.GzipFile(fileobj=fh, mode="wb", mtime=0) as gz:
                gz.write(blob)
    else:
        with open(path, "wb") as fh:
            fh.write(blob)
