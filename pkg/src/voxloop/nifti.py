"""Minimal NIfTI-1 single-file (.nii / .nii.gz) reader and writer.

Covers the subset this package produces and consumes: 3D grids of uint8,
int16, or float32, little- or big-endian, with per-axis spacing in pixdim
and an optional free-text descrip. Data are stored x-fastest (Fortran
order), which is exactly how the arrays here are laid out in memory.

Scaling (scl_slope / scl_inter) is applied on read when slope is nonzero;
files are always written unscaled with slope 1.
"""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

from .errors import VolumeFormatError

HEADER_SIZE = 348
VOX_OFFSET = 352  # header + 4-byte extension flag
MAGIC = b"n+1\x00"

# datatype codes from the standard
_DTYPES = {2: np.uint8, 4: np.int16, 16: np.float32}
_CODES = {np.dtype(np.uint8): 2, np.dtype(np.int16): 4, np.dtype(np.float32): 16}


def _open_bytes(path: Path) -> bytes:
    raw = path.read_bytes()
    if path.name.lower().endswith(".gz"):
        try:
            raw = gzip.decompress(raw)
        except (OSError, EOFError) as e:
            raise VolumeFormatError(f"{path.name}: bad gzip stream: {e}") from e
    return raw


def read(path) -> tuple[np.ndarray, tuple[float, float, float], str]:
    """Parse one file; returns (array indexed [x,y,z], spacing mm, descrip).

    The array keeps the file's datatype (after scl scaling it becomes
    float32). Malformed headers, short payloads, and non-finite values
    raise VolumeFormatError.
    """
    path = Path(path)
    blob = _open_bytes(path)
    if len(blob) < VOX_OFFSET:
        raise VolumeFormatError(f"{path.name}: file shorter than a NIfTI-1 header")

    sizeof_hdr = struct.unpack_from("<i", blob, 0)[0]
    if sizeof_hdr == HEADER_SIZE:
        end = "<"
    elif struct.unpack_from(">i", blob, 0)[0] == HEADER_SIZE:
        end = ">"
    else:
        raise VolumeFormatError(f"{path.name}: not a NIfTI-1 file (sizeof_hdr != 348)")
    if blob[344:348] != MAGIC:
        raise VolumeFormatError(f"{path.name}: bad magic {blob[344:348]!r}, expected {MAGIC!r}")

    dim = struct.unpack_from(end + "8h", blob, 40)
    ndim = dim[0]
    if ndim != 3:
        raise VolumeFormatError(f"{path.name}: expected a 3D image, header says dim[0]={ndim}")
    shape = tuple(int(d) for d in dim[1:4])
    if min(shape) < 1:
        raise VolumeFormatError(f"{path.name}: non-positive dimension in {shape}")

    datatype, bitpix = struct.unpack_from(end + "hh", blob, 70)
    if datatype not in _DTYPES:
        raise VolumeFormatError(f"{path.name}: unsupported datatype code {datatype}")
    dtype = np.dtype(_DTYPES[datatype]).newbyteorder(end)
    if bitpix != dtype.itemsize * 8:
        raise VolumeFormatError(f"{path.name}: bitpix {bitpix} disagrees with datatype {datatype}")

    pixdim = struct.unpack_from(end + "8f", blob, 76)
    spacing = tuple(float(p) for p in pixdim[1:4])
    if not all(np.isfinite(s) and s > 0 for s in spacing):
        raise VolumeFormatError(f"{path.name}: non-positive voxel spacing {spacing}")

    vox_offset = int(struct.unpack_from(end + "f", blob, 108)[0])
    if vox_offset < VOX_OFFSET:
        vox_offset = VOX_OFFSET
    scl_slope, scl_inter = struct.unpack_from(end + "ff", blob, 112)
    descrip = blob[148:228].split(b"\x00", 1)[0].decode("utf-8", errors="replace")

    count = int(np.prod(shape))
    expected = count * dtype.itemsize
    payload = blob[vox_offset:vox_offset + expected]
    if len(payload) != expected:
        raise VolumeFormatError(
            f"{path.name}: payload holds {len(payload)} bytes but header declares {expected}"
        )
    arr = np.frombuffer(payload, dtype=dtype).reshape(shape, order="F")
    if scl_slope not in (0.0, 1.0) or scl_inter != 0.0:
        if scl_slope == 0.0:
            scl_slope = 1.0
        arr = arr.astype(np.float32) * np.float32(scl_slope) + np.float32(scl_inter)
    if not np.isfinite(np.asarray(arr, dtype=np.float32)).all():
        raise VolumeFormatError(f"{path.name}: volume contains NaN or Inf values")
    return np.ascontiguousarray(arr), spacing, descrip


def write(path, arr: np.ndarray, spacing: tuple[float, float, float], descrip: str = "") -> Path:
    """Write a 3D array as .nii (or .nii.gz when the name ends with .gz)."""
    path = Path(path)
    arr = np.asarray(arr)
    if arr.ndim != 3:
        raise VolumeFormatError(f"can only write 3D images, got ndim={arr.ndim}")
    native = arr.dtype.newbyteorder("=")
    if np.dtype(native) not in _CODES:
        raise VolumeFormatError(f"unsupported dtype for writing: {arr.dtype}")
    dtype = np.dtype(native).newbyteorder("<")
    datatype = _CODES[np.dtype(native)]

    hdr = bytearray(HEADER_SIZE)
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    struct.pack_into("<8h", hdr, 40, 3, arr.shape[0], arr.shape[1], arr.shape[2], 1, 1, 1, 1)
    struct.pack_into("<hh", hdr, 70, datatype, dtype.itemsize * 8)
    struct.pack_into("<8f", hdr, 76, 1.0, spacing[0], spacing[1], spacing[2], 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<f", hdr, 108, float(VOX_OFFSET))
    struct.pack_into("<ff", hdr, 112, 1.0, 0.0)  # scl_slope, scl_inter
    desc = descrip.encode("utf-8")[:79]
    hdr[148:148 + len(desc)] = desc
    hdr[344:348] = MAGIC

    blob = bytes(hdr) + b"\x00\x00\x00\x00" + np.asfortranarray(arr.astype(dtype)).tobytes(order="F")
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.name.lower().endswith(".gz"):
        # mtime=0 keeps byte-identical output for identical input
        path.write_bytes(gzip.compress(blob, mtime=0))
    else:
        path.write_bytes(blob)
    return path
