"""Volumetric image and mask containers with physical metadata.

Conventions used throughout the package:

* ``Volume.intensities`` is a float32 array of shape ``(nx, ny, nz)``
  indexed ``[x, y, z]`` (x fastest on disk, matching NIfTI).
* 2D slices are row-major images: ``values[row, col]`` where, for the
  default axial slicing axis, ``row`` runs along y and ``col`` along x.
  A point prompt at pixel ``(x, y)`` therefore addresses ``values[y, x]``.
* Binary masks are uint8 arrays holding only 0 and 1.

All containers validate on construction and volumes are immutable after
that, so instances can be shared freely between sessions and threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import VolumeFormatError

ANATOMICAL_AXES = ("sagittal", "coronal", "axial")
DEFAULT_AXIS_ORDER = ANATOMICAL_AXES


@dataclass(frozen=True)
class Volume:
    """3D scalar intensity grid with per-axis voxel spacing in mm.

    ``axis_order`` names the anatomical plane obtained by fixing each index
    axis; the axis named "axial" is the superior-inferior axis used as the
    default slicing direction.
    """

    intensities: np.ndarray
    spacing: tuple[float, float, float]
    axis_order: tuple[str, str, str] = DEFAULT_AXIS_ORDER
    source_id: str = ""
    value_range: tuple[float, float] = field(init=False)

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.intensities, dtype=np.float32))
        if arr.ndim != 3:
            raise VolumeFormatError(f"expected a 3D intensity grid, got ndim={arr.ndim}")
        if min(arr.shape) < 1:
            raise VolumeFormatError(f"all dims must be >= 1, got {arr.shape}")
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or not all(np.isfinite(s) and s > 0 for s in spacing):
            raise VolumeFormatError(f"spacing must be three positive finite mm values, got {self.spacing}")
        order = tuple(self.axis_order)
        if sorted(order) != sorted(ANATOMICAL_AXES):
            raise VolumeFormatError(
                f"axis_order must name {ANATOMICAL_AXES} exactly once each, got {order}"
            )
        if not np.isfinite(arr).all():
            raise VolumeFormatError("volume contains NaN or Inf intensities")
        arr.flags.writeable = False
        object.__setattr__(self, "intensities", arr)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "axis_order", order)
        object.__setattr__(self, "value_range", (float(arr.min()), float(arr.max())))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.intensities.shape

    @property
    def slice_axis(self) -> int:
        """Index axis running superior to inferior (the axial stack)."""
        return self.axis_order.index("axial")

    def extent(self, axis: int | None = None) -> int:
        return self.dims[self.slice_axis if axis is None else axis]


@dataclass
class SliceImage:
    """One 2D plane of a volume, plus its display window."""

    values: np.ndarray  # float32, shape (height, width)
    slice_index: int
    window: tuple[float, float]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise ValueError("slice values must be 2D")
        lo, hi = self.window
        if not lo < hi:
            raise ValueError(f"window lo must be < hi, got ({lo}, {hi})")
        self.window = (float(lo), float(hi))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def _plane_axes(axis: int) -> tuple[int, int]:
    """Remaining (col_axis, row_axis) after fixing `axis`."""
    rest = [a for a in (0, 1, 2) if a != axis]
    return rest[0], rest[1]


def extract_plane(arr: np.ndarray, axis: int, k: int) -> np.ndarray:
    """Copy plane `k` along `axis` as a (height, width) image."""
    plane = np.take(arr, k, axis=axis)
    # np.take drops `axis`; remaining axes stay in index order (col, row).
    return np.ascontiguousarray(plane.T)


def insert_plane(arr: np.ndarray, axis: int, k: int, values: np.ndarray) -> None:
    """Write a (height, width) image back as plane `k` along `axis`."""
    idx = [slice(None)] * 3
    idx[axis] = k
    arr[tuple(idx)] = np.asarray(values).T


def slice_at(
    volume: Volume,
    k: int,
    axis: int | None = None,
    window: tuple[float, float] | None = None,
) -> SliceImage:
    """Extract the k-th plane along the slicing axis as an independent copy.

    Raises IndexError for an out-of-range index. The default display window
    is the volume's global intensity range (widened for constant volumes).
    """
    axis = volume.slice_axis if axis is None else axis
    n = volume.dims[axis]
    if not 0 <= k < n:
        raise IndexError(f"slice index {k} out of range [0, {n}) along axis {axis}")
    if window is None:
        lo, hi = volume.value_range
        if not lo < hi:
            hi = lo + 1.0
        window = (lo, hi)
    return SliceImage(values=extract_plane(volume.intensities, axis, k), slice_index=k, window=window)


def window_normalize(image, lo: float, hi: float) -> np.ndarray:
    """Map intensities to uint8 via clamp((v-lo)/(hi-lo), 0, 1) * 255.

    Rounding is half-up so the window midpoint lands on 128.
    """
    if not lo < hi:
        raise ValueError(f"window lo must be < hi, got ({lo}, {hi})")
    values = image.values if isinstance(image, SliceImage) else np.asarray(image, dtype=np.float32)
    t = np.clip((values.astype(np.float64) - lo) / (hi - lo), 0.0, 1.0)
    return np.floor(t * 255.0 + 0.5).astype(np.uint8)


@dataclass
class MaskVolume:
    """Binary per-voxel labels aligned to a Volume, plus the target's name."""

    bits: np.ndarray  # uint8 {0,1}, shape (nx, ny, nz)
    target_name: str = ""

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.bits))
        if arr.ndim != 3:
            raise VolumeFormatError(f"mask must be 3D, got ndim={arr.ndim}")
        if arr.dtype != np.uint8:
            if not np.isin(arr, (0, 1)).all():
                raise VolumeFormatError("mask voxels must be 0 or 1")
            arr = arr.astype(np.uint8)
        elif arr.max(initial=0) > 1:
            raise VolumeFormatError("mask voxels must be 0 or 1")
        self.bits = arr

    @classmethod
    def zeros(cls, dims: tuple[int, int, int], target_name: str = "") -> "MaskVolume":
        return cls(bits=np.zeros(dims, dtype=np.uint8), target_name=target_name)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.bits.shape

    @property
    def voxel_count(self) -> int:
        return int(self.bits.sum())

    def get_plane(self, k: int, axis: int = 2) -> np.ndarray:
        return extract_plane(self.bits, axis, k)

    def set_plane(self, k: int, values: np.ndarray, axis: int = 2) -> None:
        insert_plane(self.bits, axis, k, np.asarray(values, dtype=np.uint8))

    def copy(self) -> "MaskVolume":
        return MaskVolume(bits=self.bits.copy(), target_name=self.target_name)


# ---------------------------------------------------------------------------
# Persistence: NIfTI-1 (.nii / .nii.gz) or a JSON sidecar + raw payload.
# ---------------------------------------------------------------------------

_SIDECAR_FORMAT = "voxloop-raw/1"
_SIDECAR_DTYPES = {"uint8": np.uint8, "int16": np.int16, "float32": np.float32}


def _is_nifti(path: Path) -> bool:
    name = path.name.lower()
    return name.endswith(".nii") or name.endswith(".nii.gz")


def _sidecar_paths(path: Path) -> tuple[Path, Path]:
    if path.suffix.lower() != ".json":
        raise VolumeFormatError(f"unsupported file format: {path.name} (expected .nii, .nii.gz, or .json)")
    return path, path.with_suffix(".raw")


def _load_any(path) -> tuple[np.ndarray, tuple, tuple, str, str]:
    """Return (array [x,y,z], spacing, axis_order, source_id, descrip)."""
    path = Path(path)
    if not path.exists():
        raise VolumeFormatError(f"file not found: {path}")
    if _is_nifti(path):
        from . import nifti

        arr, spacing, descrip = nifti.read(path)
        return arr, spacing, DEFAULT_AXIS_ORDER, path.name, descrip
    json_path, raw_path = _sidecar_paths(path)
    import json

    try:
        meta = json.loads(json_path.read_text())
    except json.JSONDecodeError as e:
        raise VolumeFormatError(f"unreadable sidecar {json_path.name}: {e}") from e
    if meta.get("format") != _SIDECAR_FORMAT:
        raise VolumeFormatError(f"{json_path.name}: unknown sidecar format {meta.get('format')!r}")
    dims = tuple(int(d) for d in meta["dims"])
    dtype_name = meta.get("dtype", "float32")
    if dtype_name not in _SIDECAR_DTYPES:
        raise VolumeFormatError(f"{json_path.name}: unsupported dtype {dtype_name!r}")
    dtype = np.dtype(_SIDECAR_DTYPES[dtype_name]).newbyteorder("<")
    if not raw_path.exists():
        raise VolumeFormatError(f"missing raw payload: {raw_path}")
    payload = raw_path.read_bytes()
    expected = int(np.prod(dims)) * dtype.itemsize
    if len(payload) != expected:
        raise VolumeFormatError(
            f"{raw_path.name}: payload holds {len(payload)} bytes but header declares {expected}"
        )
    arr = np.frombuffer(payload, dtype=dtype).reshape(dims, order="F")
    spacing = tuple(float(s) for s in meta["spacing"])
    axis_order = tuple(meta.get("axis_order", DEFAULT_AXIS_ORDER))
    return arr, spacing, axis_order, meta.get("source_id", path.name), meta.get("target_name", "")


def load_volume(path) -> Volume:
    """Load a Volume from .nii/.nii.gz or a .json sidecar next to a .raw payload.

    Spacing and dims reflect the file headers exactly; non-finite intensities
    and non-positive spacings are rejected.
    """
    arr, spacing, axis_order, source_id, _ = _load_any(path)
    return Volume(
        intensities=arr.astype(np.float32),
        spacing=spacing,
        axis_order=axis_order,
        source_id=source_id,
    )


def save_volume(volume: Volume, path) -> Path:
    """Write a Volume as float32 to the format implied by the extension."""
    path = Path(path)
    if _is_nifti(path):
        from . import nifti

        nifti.write(path, volume.intensities, volume.spacing, descrip=volume.source_id)
        return path
    _save_sidecar(path, volume.intensities, volume.spacing, volume.axis_order, "float32",
                  source_id=volume.source_id)
    return path


def load_mask(path) -> MaskVolume:
    """Load a binary MaskVolume; voxels must be exactly 0 or 1."""
    arr, _spacing, _axis_order, _source, descrip = _load_any(path)
    if not np.isin(arr, (0, 1)).all():
        raise VolumeFormatError(f"{Path(path).name}: mask payload contains values other than 0/1")
    return MaskVolume(bits=np.ascontiguousarray(arr.astype(np.uint8)), target_name=descrip)


def save_mask(mask: MaskVolume, path, spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)) -> Path:
    """Write a MaskVolume as uint8; the target name rides in the header."""
    path = Path(path)
    if _is_nifti(path):
        from . import nifti

        nifti.write(path, mask.bits, spacing, descrip=mask.target_name)
        return path
    _save_sidecar(path, mask.bits, spacing, DEFAULT_AXIS_ORDER, "uint8",
                  target_name=mask.target_name)
    return path


def mask_roundtrip(mask: MaskVolume, path, spacing=(1.0, 1.0, 1.0)) -> MaskVolume:
    """Save a mask, reload it, and verify the copy is bit-identical."""
    save_mask(mask, path, spacing)
    reloaded = load_mask(path)
    if reloaded.dims != mask.dims or not np.array_equal(reloaded.bits, mask.bits):
        raise VolumeFormatError(f"mask round-trip through {path} did not preserve payload bits")
    if reloaded.target_name != mask.target_name:
        raise VolumeFormatError(f"mask round-trip through {path} lost the target name")
    return reloaded


def _save_sidecar(path: Path, arr: np.ndarray, spacing, axis_order, dtype_name: str, **extra) -> None:
    import json

    json_path, raw_path = _sidecar_paths(path)
    meta = {
        "format": _SIDECAR_FORMAT,
        "dims": [int(d) for d in arr.shape],
        "spacing": [float(s) for s in spacing],
        "axis_order": list(axis_order),
        "dtype": dtype_name,
    }
    meta.update({k: v for k, v in extra.items() if v})
    json_path.parent.mkdir(parents=True, exist_ok=True)
    json_path.write_text(json.dumps(meta, indent=2) + "\n")
    dtype = np.dtype(_SIDECAR_DTYPES[dtype_name]).newbyteorder("<")
    raw_path.write_bytes(np.asfortranarray(arr.astype(dtype)).tobytes(order="F"))
