"""Bidirectional slice-wise mask propagation with an IoU break guard.

A confirmed seed mask is walked outward one slice at a time, superior pass
first. Each step derives point prompts from the previous slice's mask,
asks the backend for the next mask, and accepts it only while the
inter-slice IoU stays at or above the break threshold; a collapse in IoU
halts that direction and the offending mask is discarded as untrusted.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

from .errors import BackendError
from .segmenter import (
    EIGHT_CONNECTED,
    PointPrompt,
    SegmentationBackend,
    refine_with_prompts,
)
from .profiles import TargetProfile
from .volume import MaskVolume, Volume, slice_at

DIRECTION_STEPS = {"superior": -1, "inferior": +1}  # along the axial index


@dataclass(frozen=True)
class PropagationConfig:
    iou_break_threshold: float = 0.3
    break_enabled: bool = True
    max_steps_per_direction: int | None = None  # None: volume extent, no cap
    directions: str = "both"  # "superior" | "inferior" | "both"

    def __post_init__(self):
        if not 0.0 <= self.iou_break_threshold <= 1.0:
            raise ValueError(f"iou_break_threshold must be in [0,1], got {self.iou_break_threshold}")
        if self.max_steps_per_direction is not None and self.max_steps_per_direction < 1:
            raise ValueError("max_steps_per_direction must be >= 1")
        if self.directions not in ("superior", "inferior", "both"):
            raise ValueError(f"unknown directions {self.directions!r}")

    def direction_list(self) -> tuple[str, ...]:
        if self.directions == "both":
            return ("superior", "inferior")  # superior pass always first
        return (self.directions,)


@dataclass(frozen=True)
class SliceRecord:
    slice_index: int
    direction: str
    iou_vs_previous: float
    mask_area: int
    accepted: bool
    emitted_at: int | None  # emission ordinal, None for discarded steps

    def to_dict(self) -> dict:
        return {
            "slice_index": self.slice_index,
            "direction": self.direction,
            "iou_vs_previous": self.iou_vs_previous,
            "mask_area": self.mask_area,
            "accepted": self.accepted,
            "emitted_at": self.emitted_at,
        }


@dataclass
class PropagationReport:
    seed_slice_index: int
    records: list[SliceRecord] = field(default_factory=list)
    halt_reasons: dict[str, str] = field(default_factory=dict)
    error: str | None = None

    @property
    def accepted_records(self) -> list[SliceRecord]:
        return [r for r in self.records if r.accepted]

    def to_dict(self) -> dict:
        return {
            "seed_slice_index": self.seed_slice_index,
            "records": [r.to_dict() for r in self.records],
            "halt_reasons": dict(self.halt_reasons),
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PropagationReport":
        return cls(
            seed_slice_index=int(data["seed_slice_index"]),
            records=[SliceRecord(**r) for r in data.get("records", [])],
            halt_reasons=dict(data.get("halt_reasons", {})),
            error=data.get("error"),
        )


def inter_slice_iou(a: np.ndarray, b: np.ndarray) -> float:
    """|a AND b| / |a OR b|; two empty masks give 0.0 (never 0/0)."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    a = a != 0
    b = b != 0
    union = int(np.logical_or(a, b).sum())
    if union == 0:
        return 0.0
    return int(np.logical_and(a, b).sum()) / union


def derive_seed_prompts(prev_mask: np.ndarray, slice_index: int) -> list[PointPrompt]:
    """One positive prompt per component of the previous slice's mask.

    The prompt sits at the interior (fully eroded) pixel nearest the
    component's centroid so the next region-grow starts well inside the
    structure; components too thin to survive erosion fall back to their
    nearest member pixel. Ties go to the first pixel in row-major order.
    """
    prev_mask = np.asarray(prev_mask) != 0
    if not prev_mask.any():
        raise ValueError("cannot derive prompts from an empty mask")
    labels, count = ndimage.label(prev_mask, structure=EIGHT_CONNECTED)
    eroded = ndimage.binary_erosion(prev_mask, structure=EIGHT_CONNECTED, border_value=0)
    prompts = []
    for lab in range(1, count + 1):
        component = labels == lab
        pool = component & eroded
        if not pool.any():
            pool = component
        rows, cols = np.nonzero(component)
        cr = rows.mean()
        cc = cols.mean()
        prows, pcols = np.nonzero(pool)  # np.nonzero scans row-major
        d2 = (prows - cr) ** 2 + (pcols - cc) ** 2
        best = int(np.argmin(d2))  # argmin keeps the first (row-major) minimum
        prompts.append(
            PointPrompt(
                slice_index=slice_index,
                x=int(pcols[best]),
                y=int(prows[best]),
                polarity="positive",
                sequence=lab - 1,
            )
        )
    return prompts


EmitFn = Callable[[SliceRecord, np.ndarray], None]


def propagate_bidirectional(
    volume: Volume,
    seed_index: int,
    seed_mask: np.ndarray,
    backend: SegmentationBackend,
    profile: TargetProfile,
    config: PropagationConfig = PropagationConfig(),
    emit: EmitFn | None = None,
) -> tuple[MaskVolume, PropagationReport]:
    """Walk the seed mask through the volume in both directions.

    Every accepted mask is written into the returned MaskVolume and handed
    to `emit` immediately, in production order; `emit` may block, which
    back-pressures the engine. The report logs every step taken, including
    the discarded sub-threshold one, and names each direction's halt
    reason: iou_break, empty_mask, volume_boundary, step_limit, or
    backend_error.
    """
    axis = volume.slice_axis
    extent = volume.dims[axis]
    if not 0 <= seed_index < extent:
        raise ValueError(f"seed slice {seed_index} out of range [0, {extent})")
    seed_mask = np.asarray(seed_mask) != 0
    plane_shape = slice_at(volume, seed_index, axis=axis).values.shape
    if seed_mask.shape != plane_shape:
        raise ValueError(f"seed mask shape {seed_mask.shape} does not match slices {plane_shape}")
    if not seed_mask.any():
        raise ValueError("seed mask is empty")

    masks = MaskVolume.zeros(volume.dims, target_name=profile.name)
    masks.set_plane(seed_index, seed_mask.astype(np.uint8), axis=axis)
    report = PropagationReport(seed_slice_index=seed_index)
    max_steps = config.max_steps_per_direction or extent
    ordinal = 1
    empty = np.zeros(plane_shape, dtype=np.uint8)

    for direction in config.direction_list():
        step = DIRECTION_STEPS[direction]
        prev = seed_mask.astype(np.uint8)
        k = seed_index + step
        taken = 0
        while True:
            if not 0 <= k < extent:
                report.halt_reasons[direction] = "volume_boundary"
                break
            if taken >= max_steps:
                report.halt_reasons[direction] = "step_limit"
                break
            prompts = derive_seed_prompts(prev, k)
            try:
                next_mask = refine_with_prompts(
                    slice_at(volume, k, axis=axis), empty, prompts, backend, profile
                )
            except BackendError as e:
                report.halt_reasons[direction] = "backend_error"
                report.error = str(e)
                break
            area = int(next_mask.sum())
            if area == 0:
                # the empty check runs before the IoU test by design
                report.records.append(
                    SliceRecord(k, direction, 0.0, 0, accepted=False, emitted_at=None)
                )
                report.halt_reasons[direction] = "empty_mask"
                break
            iou = inter_slice_iou(next_mask, prev)
            if config.break_enabled and iou < config.iou_break_threshold:
                report.records.append(
                    SliceRecord(k, direction, iou, area, accepted=False, emitted_at=None)
                )
                report.halt_reasons[direction] = "iou_break"
                break
            record = SliceRecord(k, direction, iou, area, accepted=True, emitted_at=ordinal)
            ordinal += 1
            masks.set_plane(k, next_mask, axis=axis)
            report.records.append(record)
            if emit is not None:
                emit(record, next_mask)
            prev = next_mask
            k += step
            taken += 1

    return masks, report
