"""Command parsing, text-seeded masking, and point-prompt refinement.

The backend interface is the slot a learned segmentation model would
occupy. The built-in backend is a deterministic stand-in: thresholding
plus connected components for seeding, tolerance-bounded region growing
for positive prompts, whole-component deletion for negative prompts.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import ndimage

from .errors import BackendError, CommandParseError, PromptError
from .profiles import ProfileSet, TargetProfile
from .volume import SliceImage

STOP_PHRASES = ("show me", "highlight", "segment", "the")

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class PointPrompt:
    """One user-placed pixel: positive adds region, negative removes it.

    `sequence` is the session-wide placement counter; prompts always apply
    in sequence order.
    """

    slice_index: int
    x: int
    y: int
    polarity: str  # "positive" | "negative"
    sequence: int

    def __post_init__(self):
        if self.polarity not in ("positive", "negative"):
            raise PromptError(f"polarity must be positive or negative, got {self.polarity!r}")


@dataclass(frozen=True)
class CommandIntent:
    target: str
    raw_text: str
    verb: str = "segment"


def _strip_stop_phrases(text: str) -> str:
    out = text.lower()
    for phrase in STOP_PHRASES:
        out = re.sub(rf"\b{re.escape(phrase)}\b", " ", out)
    return " ".join(out.split())


def parse_command(text: str, profiles: ProfileSet) -> CommandIntent:
    """Match a free-text command to exactly one configured profile.

    Matching is case-insensitive substring search after stop-phrase
    stripping; zero matches and multiple distinct matches are both errors.
    """
    if not text or not text.strip():
        raise CommandParseError("empty command", reason="no_match")
    cleaned = _strip_stop_phrases(text)
    matched = []
    for profile in profiles:
        phrases = [p for p in (_strip_stop_phrases(ph) for ph in profile.phrases) if p]
        if any(ph in cleaned for ph in phrases):
            matched.append(profile)
    if not matched:
        raise CommandParseError(
            f"no configured target matches {text!r}", reason="no_match"
        )
    if len(matched) > 1:
        names = ", ".join(p.name for p in matched)
        raise CommandParseError(
            f"command {text!r} is ambiguous between: {names}", reason="ambiguous"
        )
    return CommandIntent(target=matched[0].name, raw_text=text)


class SegmentationBackend:
    """Contract every backend implements.

    Both entry points take and return plain 2D arrays; masks are uint8
    {0,1} with the same shape as the slice. Backends declare whether their
    outputs are deterministic for identical inputs.
    """

    capabilities: frozenset = frozenset({"text_seed", "prompt_refine"})
    identity: str = "abstract"
    deterministic: bool = False

    def seed(self, image: SliceImage, profile: TargetProfile) -> np.ndarray:
        raise NotImplementedError

    def refine(
        self,
        image: SliceImage,
        current: np.ndarray,
        prompts: Sequence[PointPrompt],
        profile: TargetProfile,
    ) -> np.ndarray:
        raise NotImplementedError


class BuiltinSegmenter(SegmentationBackend):
    """Deterministic threshold/region-growing backend.

    Seeding thresholds the slice to the profile's intensity range and keeps
    the largest 8-connected component with area >= min_area (area ties go
    to the component whose first row-major pixel comes first). Positive
    prompts grow 8-connected regions admitting pixels that are BOTH inside
    the intensity range and within grow_tolerance of the seed pixel's
    value; a positive prompt on an out-of-range pixel contributes nothing.
    The range gate keeps growth from flooding background when a derived
    prompt lands on empty anatomy, which the propagation halt rules rely
    on. Negative prompts delete the whole mask component under them.
    """

    identity = "builtin-region-grower/1"
    deterministic = True

    def seed(self, image: SliceImage, profile: TargetProfile) -> np.ndarray:
        lo, hi = profile.intensity_range
        in_range = (image.values >= lo) & (image.values <= hi)
        mask = np.zeros(image.values.shape, dtype=np.uint8)
        if not in_range.any():
            return mask
        labels, count = ndimage.label(in_range, structure=EIGHT_CONNECTED)
        areas = np.bincount(labels.ravel(), minlength=count + 1)
        flat = labels.ravel()
        first_pixel = np.full(count + 1, flat.size, dtype=np.int64)
        values, first_idx = np.unique(flat, return_index=True)
        first_pixel[values] = first_idx
        best = 0
        for lab in range(1, count + 1):
            if areas[lab] < profile.min_area:
                continue
            if best == 0 or areas[lab] > areas[best] or (
                areas[lab] == areas[best] and first_pixel[lab] < first_pixel[best]
            ):
                best = lab
        if best:
            mask[labels == best] = 1
        return mask

    def refine(
        self,
        image: SliceImage,
        current: np.ndarray,
        prompts: Sequence[PointPrompt],
        profile: TargetProfile,
    ) -> np.ndarray:
        lo, hi = profile.intensity_range
        tol = profile.grow_tolerance
        mask = (np.asarray(current) != 0).astype(np.uint8)
        for prompt in sorted(prompts, key=lambda p: p.sequence):
            if prompt.polarity == "positive":
                seed_val = float(image.values[prompt.y, prompt.x])
                if not lo <= seed_val <= hi:
                    continue
                admissible = (
                    (image.values >= lo)
                    & (image.values <= hi)
                    & (np.abs(image.values - seed_val) <= tol)
                )
                labels, _ = ndimage.label(admissible, structure=EIGHT_CONNECTED)
                mask[labels == labels[prompt.y, prompt.x]] = 1
            else:
                if not mask[prompt.y, prompt.x]:
                    continue
                labels, _ = ndimage.label(mask, structure=EIGHT_CONNECTED)
                mask[labels == labels[prompt.y, prompt.x]] = 0
        return mask


class HttpBackend(SegmentationBackend):
    """External backend over HTTP: one POST per call, JSON bodies sharing
    the protocol's pixel and RLE mask payload shapes."""

    identity = "external-http"
    deterministic = False

    def __init__(self, endpoint: str, timeout: float = 30.0, client=None):
        self.endpoint = endpoint
        self.timeout = timeout
        self._client = client  # injectable for tests; defaults to module-level httpx

    def _call(self, kind: str, payload: dict) -> np.ndarray:
        import httpx

        from . import protocol

        try:
            reply = (self._client or httpx).post(
                self.endpoint,
                json={"kind": kind, "payload": payload},
                timeout=self.timeout,
            )
            reply.raise_for_status()
            body = reply.json()
        except httpx.HTTPError as e:
            raise BackendError(f"backend {self.endpoint} failed: {e}") from e
        except ValueError as e:
            raise BackendError(f"backend {self.endpoint} sent unparseable JSON: {e}") from e
        try:
            return protocol.decode_mask(body["payload"]["mask"])
        except (KeyError, TypeError) as e:
            raise BackendError(f"backend reply missing mask payload: {e}") from e
        except Exception as e:
            raise BackendError(f"backend reply malformed: {e}") from e

    def seed(self, image: SliceImage, profile: TargetProfile) -> np.ndarray:
        from . import protocol
        from .volume import window_normalize

        payload = {
            "image": protocol.encode_pixels(window_normalize(image, *image.window)),
            "slice_index": image.slice_index,
            "target": profile.name,
        }
        return self._call("seed", payload)

    def refine(
        self,
        image: SliceImage,
        current: np.ndarray,
        prompts: Sequence[PointPrompt],
        profile: TargetProfile,
    ) -> np.ndarray:
        from . import protocol
        from .volume import window_normalize

        payload = {
            "image": protocol.encode_pixels(window_normalize(image, *image.window)),
            "slice_index": image.slice_index,
            "target": profile.name,
            "mask": protocol.encode_mask(current),
            "prompts": [
                {"x": p.x, "y": p.y, "polarity": p.polarity, "sequence": p.sequence}
                for p in prompts
            ],
        }
        return self._call("refine", payload)


def _validate_backend_mask(mask: np.ndarray, image: SliceImage, backend: SegmentationBackend) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.shape != image.values.shape:
        raise BackendError(
            f"backend {backend.identity} returned a {mask.shape} mask "
            f"for a {image.values.shape} slice"
        )
    return (mask != 0).astype(np.uint8)


def seed_segment(image: SliceImage, profile: TargetProfile, backend: SegmentationBackend) -> np.ndarray:
    """Produce the initial mask for a confirmed command on one slice."""
    return _validate_backend_mask(backend.seed(image, profile), image, backend)


def refine_with_prompts(
    image: SliceImage,
    current: np.ndarray,
    prompts: Sequence[PointPrompt],
    backend: SegmentationBackend,
    profile: TargetProfile,
) -> np.ndarray:
    """Apply point prompts to the current slice mask, in sequence order."""
    if not prompts:
        raise PromptError("no prompts to apply")
    h, w = image.values.shape
    for p in prompts:
        if p.slice_index != image.slice_index:
            raise PromptError(
                f"prompt bound to slice {p.slice_index}, refining slice {image.slice_index}"
            )
        if not (0 <= p.x < w and 0 <= p.y < h):
            raise PromptError(f"prompt ({p.x}, {p.y}) outside {w}x{h} slice")
    current = np.asarray(current)
    if current.shape != (h, w):
        raise PromptError(f"current mask shape {current.shape} does not match slice {h}x{w}")
    return _validate_backend_mask(backend.refine(image, current, prompts, profile), image, backend)
