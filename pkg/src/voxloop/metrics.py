"""Evaluation formulas: Dice overlap, direction smoothing, composite
interaction scores, workload-item scaling, and prompt efficiency."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def _bits(mask) -> np.ndarray:
    bits = getattr(mask, "bits", mask)
    return np.asarray(bits) != 0


def dice(a, b) -> float:
    """2|A AND B| / (|A| + |B|), computed in integers until the final
    division; two empty masks agree perfectly and score 1.0."""
    a = _bits(a)
    b = _bits(b)
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    na = int(a.sum())
    nb = int(b.sum())
    if na + nb == 0:
        return 1.0
    inter = int(np.logical_and(a, b).sum())
    return 2 * inter / (na + nb)


@dataclass
class SmoothingState:
    """Exponential smoothing of a unit direction stream.

    previous_direction always stays unit-norm; alpha is the weight on the
    newest sample.
    """

    previous_direction: np.ndarray
    alpha: float = 0.2

    def __post_init__(self):
        self.previous_direction = np.asarray(self.previous_direction, dtype=np.float64)
        if self.previous_direction.shape != (3,):
            raise ValueError("previous_direction must be a 3-vector")
        norm = float(np.linalg.norm(self.previous_direction))
        if abs(norm - 1.0) > 1e-5:
            raise ValueError(f"previous_direction must be unit-norm, |v| = {norm}")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")


def smooth_direction(state: SmoothingState, current, renormalize: bool = True) -> np.ndarray:
    """Blend the previous direction with the (normalized) current sample:
    (1 - alpha) * previous + alpha * current.

    The blend of two unit vectors is sub-unit, so the result is
    renormalized by default; pass renormalize=False to get the raw blend
    for strict single-step replication. The state always advances along
    the normalized blend.
    """
    current = np.asarray(current, dtype=np.float64)
    norm = float(np.linalg.norm(current))
    if norm == 0.0:
        raise ValueError("current direction has zero length")
    current = current / norm
    blend = (1.0 - state.alpha) * state.previous_direction + state.alpha * current
    unit = blend / np.linalg.norm(blend)
    state.previous_direction = unit
    return unit if renormalize else blend


@dataclass(frozen=True)
class TrialRecord:
    trial_id: str
    paradigm: str
    accuracy: float  # Dice as a percentage
    tlx_total: float
    completion_time: float  # seconds
    confirmed_points: int = 0
    clear_events: int = 0

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 100.0:
            raise ValueError(f"accuracy must be in [0, 100], got {self.accuracy}")
        if not 0.0 <= self.tlx_total <= 100.0:
            raise ValueError(f"tlx_total must be in [0, 100], got {self.tlx_total}")
        if not self.completion_time > 0:
            raise ValueError(f"completion_time must be > 0, got {self.completion_time}")
        if self.confirmed_points < 0 or self.clear_events < 0:
            raise ValueError("prompt counts must be >= 0")


def _zscores(values: list[float]) -> list[float]:
    n = len(values)
    mean = sum(values) / n
    var = sum((v - mean) ** 2 for v in values) / (n - 1)  # sample std, n-1
    if var == 0.0:
        return [0.0] * n  # zero spread: the term carries no information
    sd = math.sqrt(var)
    return [(v - mean) / sd for v in values]


@dataclass(frozen=True)
class CompositeResult:
    composites: dict[str, float]  # trial_id -> composite
    paradigm_summary: dict[str, dict[str, float]]  # paradigm -> mean/std/n


def composite_scores(trials: list[TrialRecord]) -> CompositeResult:
    """Per-trial composite = z_accuracy - z_tlx - z_time, with z-scores
    pooled across all trials (sample standard deviation)."""
    if len(trials) < 2:
        raise ValueError("composite scores need at least 2 trials")
    za = _zscores([t.accuracy for t in trials])
    zt = _zscores([t.tlx_total for t in trials])
    zc = _zscores([t.completion_time for t in trials])
    composites = {
        t.trial_id: a - b - c for t, a, b, c in zip(trials, za, zt, zc)
    }
    summary: dict[str, dict[str, float]] = {}
    by_paradigm: dict[str, list[float]] = {}
    for t in trials:
        by_paradigm.setdefault(t.paradigm, []).append(composites[t.trial_id])
    for paradigm, values in by_paradigm.items():
        n = len(values)
        mean = sum(values) / n
        if n > 1:
            sd = math.sqrt(sum((v - mean) ** 2 for v in values) / (n - 1))
        else:
            sd = 0.0
        summary[paradigm] = {"mean": mean, "std": sd, "n": n}
    return CompositeResult(composites=composites, paradigm_summary=summary)


def tlx_scale(raw_item: float) -> float:
    """Map one 1..21 questionnaire item onto 0..100."""
    if not 1.0 <= raw_item <= 21.0:
        raise ValueError(f"raw item must be in [1, 21], got {raw_item}")
    return (raw_item - 1.0) / 20.0 * 100.0


def tlx_overall(raw_items) -> float:
    """Unweighted mean of the six scaled questionnaire items."""
    items = [tlx_scale(v) for v in raw_items]
    if len(items) != 6:
        raise ValueError(f"expected 6 items, got {len(items)}")
    return sum(items) / 6.0


def points_per_clear(confirmed: int, clears: int) -> float:
    """Confirmed prompts per clear event; a zero-clear run divides by 1."""
    if confirmed < 0 or clears < 0:
        raise ValueError("counts must be >= 0")
    return confirmed / max(clears, 1)
