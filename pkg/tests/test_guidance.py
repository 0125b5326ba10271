import httpx
import numpy as np
import pytest

from voxloop.guidance import (
    ExternalGuidance,
    TemplateGuidance,
    generate_guidance,
)
from voxloop.retrieval import ReferenceRecord


def record(rid: str, has_pathology: bool) -> ReferenceRecord:
    vec = np.zeros(288, dtype=np.float32)
    vec[0] = 1.0
    return ReferenceRecord(
        record_id=rid,
        patient_id="p1",
        slice_index=7,
        has_pathology=has_pathology,
        vector=vec,
        thumbnail_ref=f"thumbs/{rid}.png",
    )


POS = record("case-0007", True)
NEG = record("case-0031", False)


def test_general_template_names_target_and_both_refs():
    bundle = generate_guidance("general", "brain tumor", 12, POS, NEG)
    assert bundle.provider == "template"
    assert bundle.text.startswith(
        "In slices like this, brain tumor typically appears as the region "
        "present in the first reference and absent in the second; compare "
        "the highlighted areas."
    )
    assert "case-0007" in bundle.text
    assert "case-0031" in bundle.text
    assert bundle.positive_ref == "case-0007"
    assert bundle.negative_ref == "case-0031"


def test_query_specific_names_slice_and_target():
    bundle = generate_guidance("query_specific", "lesion", 12, POS, NEG)
    assert "slice 12" in bundle.text
    assert "lesion" in bundle.text
    assert "case-0007" in bundle.text and "case-0031" in bundle.text


def test_template_is_byte_identical_across_calls():
    a = generate_guidance("general", "lesion", 3, POS, NEG)
    b = generate_guidance("general", "lesion", 3, POS, NEG)
    assert a.text == b.text
    assert a == b


def test_unknown_mode_rejected():
    with pytest.raises(ValueError, match="mode"):
        generate_guidance("chatty", "lesion", 3, POS, NEG)


def test_external_provider_used_when_healthy():
    seen = {}

    def handler(request: httpx.Request) -> httpx.Response:
        seen["body"] = request.read()
        return httpx.Response(200, json={"text": "look at the bright blob"})

    provider = ExternalGuidance(
        "http://guide.test/generate",
        client=httpx.Client(transport=httpx.MockTransport(handler)),
    )
    bundle = generate_guidance("general", "lesion", 5, POS, NEG, provider)
    assert bundle.provider == "external"
    assert bundle.text == "look at the bright blob"
    assert b"case-0007" in seen["body"]
    assert b"general" in seen["body"]


def test_external_failure_falls_back_to_template():
    def handler(request: httpx.Request) -> httpx.Response:
        return httpx.Response(500)

    provider = ExternalGuidance(
        "http://guide.test/generate",
        client=httpx.Client(transport=httpx.MockTransport(handler)),
    )
    bundle = generate_guidance("general", "lesion", 5, POS, NEG, provider)
    assert bundle.provider == "template"
    assert "In slices like this" in bundle.text


def test_external_empty_text_falls_back():
    def handler(request: httpx.Request) -> httpx.Response:
        return httpx.Response(200, json={"text": ""})

    provider = ExternalGuidance(
        "http://guide.test/generate",
        client=httpx.Client(transport=httpx.MockTransport(handler)),
    )
    bundle = generate_guidance("query_specific", "lesion", 5, POS, NEG, provider)
    assert bundle.provider == "template"
    assert "slice 5" in bundle.text


def test_direct_template_generate_matches_bundle_text():
    text = TemplateGuidance().generate("general", "lesion", 9, POS, NEG)
    bundle = generate_guidance("general", "lesion", 9, POS, NEG)
    assert bundle.text == text
