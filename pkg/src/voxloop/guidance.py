"""Guidance text generation over contrastive reference pairs.

The template provider is fully deterministic. An external HTTP provider
can be configured for richer text; when it fails or times out, the bundle
silently falls back to the template so a session never stalls on guidance.
"""

from __future__ import annotations

from dataclasses import dataclass

from .retrieval import ReferenceRecord

GENERAL_MODE = "general"
QUERY_MODE = "query_specific"


@dataclass(frozen=True)
class GuidanceBundle:
    mode: str
    text: str
    positive_ref: str  # record ids resolvable in the active index
    negative_ref: str
    provider: str  # "template" | "external"

    def to_payload(self) -> dict:
        return {
            "mode": self.mode,
            "text": self.text,
            "positive_ref": self.positive_ref,
            "negative_ref": self.negative_ref,
            "provider": self.provider,
        }


class GuidanceProvider:
    identity = "abstract"

    def generate(
        self,
        mode: str,
        target: str,
        slice_index: int,
        positive: ReferenceRecord,
        negative: ReferenceRecord,
    ) -> str:
        raise NotImplementedError


class TemplateGuidance(GuidanceProvider):
    """Fixed-schema text; identical inputs produce byte-identical output."""

    identity = "template"

    def generate(self, mode, target, slice_index, positive, negative):
        refs = f"References: {positive.record_id} (with), {negative.record_id} (without)."
        if mode == QUERY_MODE:
            return (
                f"On slice {slice_index}, the {target} is the region present in the "
                f"first reference and absent in the second; compare the current view "
                f"against both highlighted areas. {refs}"
            )
        return (
            f"In slices like this, {target} typically appears as the region present "
            f"in the first reference and absent in the second; compare the "
            f"highlighted areas. {refs}"
        )


class ExternalGuidance(GuidanceProvider):
    """Delegates text generation to an HTTP endpoint.

    The request carries the mode, target, slice index, and both reference
    descriptors; the reply must be JSON with a "text" field. Any transport
    or format failure raises, and the caller falls back to the template.
    """

    identity = "external"

    def __init__(self, endpoint: str, timeout: float = 10.0, client=None):
        self.endpoint = endpoint
        self.timeout = timeout
        self._client = client

    def generate(self, mode, target, slice_index, positive, negative):
        import httpx

        reply = (self._client or httpx).post(
            self.endpoint,
            json={
                "mode": mode,
                "target": target,
                "slice_index": slice_index,
                "positive": {"record_id": positive.record_id, "thumbnail_ref": positive.thumbnail_ref},
                "negative": {"record_id": negative.record_id, "thumbnail_ref": negative.thumbnail_ref},
            },
            timeout=self.timeout,
        )
        reply.raise_for_status()
        text = reply.json().get("text")
        if not isinstance(text, str) or not text:
            raise ValueError("guidance endpoint returned no text")
        return text


def generate_guidance(
    mode: str,
    target: str,
    slice_index: int,
    positive: ReferenceRecord,
    negative: ReferenceRecord,
    provider: GuidanceProvider | None = None,
) -> GuidanceBundle:
    """Build a guidance bundle, falling back to the template provider when
    the configured one fails."""
    if mode not in (GENERAL_MODE, QUERY_MODE):
        raise ValueError(f"unknown guidance mode {mode!r}")
    template = TemplateGuidance()
    provider = provider or template
    try:
        text = provider.generate(mode, target, slice_index, positive, negative)
        tag = provider.identity
    except Exception:
        text = template.generate(mode, target, slice_index, positive, negative)
        tag = template.identity
    return GuidanceBundle(
        mode=mode,
        text=text,
        positive_ref=positive.record_id,
        negative_ref=negative.record_id,
        provider=tag,
    )
