"""Synthetic test volumes with analytically known ground truth.

Each generator computes its expectations (lesion span, break slice, seed
prompt location) from the construction parameters alone, never by running
the segmentation engine, so tests can hold the engine to predictions made
independently of it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .volume import MaskVolume, Volume


def ellipsoid_mask(
    dims: tuple[int, int, int],
    center: tuple[float, float, float],
    semi_axes: tuple[float, float, float],
) -> np.ndarray:
    """uint8 grid marking voxels whose center lies inside the ellipsoid."""
    x, y, z = np.meshgrid(
        np.arange(dims[0], dtype=np.float64),
        np.arange(dims[1], dtype=np.float64),
        np.arange(dims[2], dtype=np.float64),
        indexing="ij",
    )
    q = (
        ((x - center[0]) / semi_axes[0]) ** 2
        + ((y - center[1]) / semi_axes[1]) ** 2
        + ((z - center[2]) / semi_axes[2]) ** 2
    )
    return (q <= 1.0).astype(np.uint8)


def ellipsoid_phantom(
    dims: tuple[int, int, int] = (32, 32, 16),
    semi_axes: tuple[float, float, float] = (10.0, 10.0, 5.0),
    spacing: tuple[float, float, float] = (0.5, 0.5, 1.0),
    inside: float = 600.0,
    outside: float = 0.0,
) -> tuple[Volume, MaskVolume]:
    """Digital ellipsoid centered in the grid; returns intensities + mask."""
    center = tuple((d - 1) / 2.0 for d in dims)
    bits = ellipsoid_mask(dims, center, semi_axes)
    intensities = np.where(bits > 0, np.float32(inside), np.float32(outside))
    vol = Volume(intensities=intensities, spacing=spacing, source_id="phantom-ellipsoid")
    return vol, MaskVolume(bits=bits, target_name="phantom ellipsoid")


def head_phantom(
    dims: tuple[int, int, int] = (24, 24, 24),
    radius: float = 8.0,
    inside: float = 600.0,
) -> Volume:
    """Bright ball on zero background; thresholding at 500 isolates it."""
    vol, _ = ellipsoid_phantom(dims=dims, semi_axes=(radius, radius, radius),
                               spacing=(1.0, 1.0, 1.0), inside=inside)
    return Volume(intensities=vol.intensities, spacing=vol.spacing, source_id="phantom-head")


@dataclass
class LesionPlan:
    """A block lesion along the axial axis, plus what to expect from it.

    All expectation fields are derived arithmetically from the layout:
    `seed_prompt_xy` is the interior pixel nearest the block centroid
    (row-major tie-break), and `break_slice` / `break_direction` predict
    where guarded propagation must halt when a noise slab is present.
    """

    volume: Volume
    truth: MaskVolume
    seed_index: int
    lesion_span: tuple[int, int]  # inclusive slice range
    lesion_value: float
    block_xy: tuple[int, int]  # top-left (x, y) of the block
    block_size: int
    seed_prompt_xy: tuple[int, int]
    slab_span: tuple[int, int] | None = None
    break_direction: str | None = None  # "superior" (decreasing k) | "inferior"
    break_slice: int | None = None
    patch_area: int = 0
    halt_reasons: dict = field(default_factory=dict)


def _block_prompt_xy(x0: int, y0: int, size: int) -> tuple[int, int]:
    # Centroid of a size x size block sits at offset (size-1)/2; the interior
    # pixel nearest it with row-major tie-break is at offset floor((size-1)/2)
    # for size >= 3 (interior spans offsets 1..size-2).
    off = (size - 1) // 2
    return (x0 + off, y0 + off)


def lesion_phantom(
    dims: tuple[int, int, int] = (24, 24, 20),
    span: tuple[int, int] = (5, 14),
    block_xy: tuple[int, int] = (8, 8),
    block_size: int = 8,
    lesion_value: float = 300.0,
) -> LesionPlan:
    """Uniform bright block on slices span[0]..span[1], zero elsewhere."""
    nx, ny, nz = dims
    x0, y0 = block_xy
    if not (0 < span[0] <= span[1] < nz - 1):
        raise ValueError("lesion span must stay clear of the volume boundary")
    if not (x0 + block_size <= nx and y0 + block_size <= ny):
        raise ValueError("block does not fit the grid")
    arr = np.zeros(dims, dtype=np.float32)
    bits = np.zeros(dims, dtype=np.uint8)
    for k in range(span[0], span[1] + 1):
        arr[x0:x0 + block_size, y0:y0 + block_size, k] = lesion_value
        bits[x0:x0 + block_size, y0:y0 + block_size, k] = 1
    vol = Volume(intensities=arr, spacing=(1.0, 1.0, 1.0), source_id="phantom-lesion")
    seed = (span[0] + span[1]) // 2
    return LesionPlan(
        volume=vol,
        truth=MaskVolume(bits=bits, target_name="lesion"),
        seed_index=seed,
        lesion_span=span,
        lesion_value=lesion_value,
        block_xy=block_xy,
        block_size=block_size,
        seed_prompt_xy=_block_prompt_xy(x0, y0, block_size),
        halt_reasons={"superior": "empty_mask", "inferior": "empty_mask"},
    )


def noise_slab_phantom(rng: np.random.Generator, dims: tuple[int, int, int] = (24, 24, 26)) -> LesionPlan:
    """Lesion block plus an adjacent slab of decoy content on one side.

    Each slab slice holds a small in-range patch centered on the pixel that
    seed-prompt derivation will choose from the block mask, plus inert
    out-of-range speckles. The patch is far smaller than the block, so the
    first slab step's inter-slice IoU is patch_area / block_area < 0.3:
    guarded propagation must break exactly there, while unguarded
    propagation keeps accepting patches through the whole slab.
    """
    nx, ny, nz = dims
    block_size = int(rng.integers(6, 10))
    x0 = int(rng.integers(3, nx - block_size - 2))
    y0 = int(rng.integers(3, ny - block_size - 2))
    lesion_value = float(rng.integers(270, 331))
    slab_len = int(rng.integers(3, 6))
    span_len = int(rng.integers(4, 8))

    toward_superior = bool(rng.integers(0, 2))  # slab on the decreasing-k side
    if toward_superior:
        lo = 2 + slab_len
        hi = lo + span_len - 1
        slab = (lo - slab_len, lo - 1)
        break_slice = lo - 1
        direction = "superior"
    else:
        lo = 2
        hi = lo + span_len - 1
        slab = (hi + 1, hi + slab_len)
        break_slice = hi + 1
        direction = "inferior"
    if hi >= nz - 2 or slab[1] >= nz - 1 or slab[0] <= 0:
        raise ValueError("slab layout exceeds the grid")

    plan = lesion_phantom(dims=dims, span=(lo, hi), block_xy=(x0, y0),
                          block_size=block_size, lesion_value=lesion_value)
    arr = plan.volume.intensities.copy()

    px, py = plan.seed_prompt_xy
    patch = int(rng.integers(2, 4))  # 2x2 or 3x3, both well under 0.3 IoU
    for k in range(slab[0], slab[1] + 1):
        arr[px:px + patch, py:py + patch, k] = lesion_value
        for _ in range(int(rng.integers(4, 9))):  # bright but out-of-range
            sx = int(rng.integers(0, nx))
            sy = int(rng.integers(0, ny))
            if abs(sx - px) > patch + 1 or abs(sy - py) > patch + 1:
                arr[sx, sy, k] = 600.0

    patch_area = patch * patch
    assert patch_area / (block_size * block_size) < 0.3

    plan.volume = Volume(intensities=arr, spacing=(1.0, 1.0, 1.0), source_id="phantom-noise-slab")
    plan.slab_span = slab
    plan.break_direction = direction
    plan.break_slice = break_slice
    plan.patch_area = patch_area
    plan.halt_reasons = {
        direction: "iou_break",
        ("inferior" if direction == "superior" else "superior"): "empty_mask",
    }
    return plan


def demo_volume(dims: tuple[int, int, int] = (32, 32, 32)) -> tuple[Volume, MaskVolume]:
    """Head ball (600) containing an off-center lesion ball (300).

    The lesion range (250, 350) and head threshold 500 keep the two
    structures separable by intensity alone.
    """
    center = tuple((d - 1) / 2.0 for d in dims)
    head = ellipsoid_mask(dims, center, (12.0, 12.0, 12.0))
    lesion_center = (center[0] + 4, center[1] - 3, center[2] + 2)
    lesion = ellipsoid_mask(dims, lesion_center, (4.0, 4.0, 4.0))
    arr = np.zeros(dims, dtype=np.float32)
    arr[head > 0] = 600.0
    arr[lesion > 0] = 300.0
    vol = Volume(intensities=arr, spacing=(1.0, 1.0, 1.0), source_id="phantom-demo")
    return vol, MaskVolume(bits=lesion, target_name="brain tumor")
