"""Wire format shared by the session service, its clients, and external
segmentation backends.

Every frame is one JSON object: {"kind", "session_id", "seq", "payload"}.
Each request receives exactly one terminal reply whose kind echoes the
request kind (propagate terminates with propagation_done); server pushes
(propagation_update) carry the seq of the request that triggered them.

Slice pixels travel as base64-encoded 8-bit grayscale plus dims. Masks
travel run-length encoded over row-major pixel order: alternating run
lengths starting with a zero-run (possibly of length 0), summing to
height x width.
"""

from __future__ import annotations

import base64
import json

import numpy as np

from .errors import ProtocolError

REQUEST_KINDS = (
    "open_session",
    "navigate",
    "submit_command",
    "confirm_command",
    "add_prompt",
    "clear_prompts",
    "refine",
    "propagate",
    "reseed",
    "complete",
    "request_mesh",
    "guidance",
    "log_trial",
)
PUSH_KINDS = ("propagation_update", "propagation_done")
ALL_KINDS = REQUEST_KINDS + PUSH_KINDS + ("error",)

# Mutating kinds are the ones event replay must re-apply to reproduce the
# final mask volume; guidance and log_trial never touch session masks.
MUTATING_KINDS = (
    "open_session",
    "navigate",
    "submit_command",
    "confirm_command",
    "add_prompt",
    "clear_prompts",
    "refine",
    "propagate",
    "reseed",
    "complete",
)


def make_frame(kind: str, session_id: str, seq: int, payload: dict | None = None) -> str:
    return json.dumps(
        {"kind": kind, "session_id": session_id, "seq": int(seq), "payload": payload or {}}
    )


def recover_envelope(text: str) -> tuple[int, str]:
    """Best-effort (seq, session_id) from a frame that failed validation.

    Error replies should target the offending request whenever the envelope
    is still readable; (-1, "") only when it is not.
    """
    try:
        msg = json.loads(text)
    except json.JSONDecodeError:
        return -1, ""
    if not isinstance(msg, dict):
        return -1, ""
    seq = msg.get("seq")
    session_id = msg.get("session_id")
    return (
        seq if isinstance(seq, int) else -1,
        session_id if isinstance(session_id, str) else "",
    )


def parse_frame(text: str) -> dict:
    """Decode one frame; malformed JSON or a bad envelope raises ProtocolError."""
    try:
        msg = json.loads(text)
    except json.JSONDecodeError as e:
        raise ProtocolError(f"frame is not valid JSON: {e}") from e
    if not isinstance(msg, dict):
        raise ProtocolError("frame must be a JSON object")
    kind = msg.get("kind")
    if kind not in ALL_KINDS:
        raise ProtocolError(f"unknown message kind {kind!r}")
    if not isinstance(msg.get("seq"), int):
        raise ProtocolError("seq must be an integer")
    msg.setdefault("session_id", "")
    payload = msg.setdefault("payload", {})
    if not isinstance(payload, dict):
        raise ProtocolError("payload must be a JSON object")
    return msg


def encode_pixels(image: np.ndarray) -> dict:
    """8-bit grayscale image -> {"width", "height", "pixels" (base64)}."""
    image = np.ascontiguousarray(image, dtype=np.uint8)
    if image.ndim != 2:
        raise ProtocolError("pixel payload must be a 2D image")
    return {
        "width": int(image.shape[1]),
        "height": int(image.shape[0]),
        "pixels": base64.b64encode(image.tobytes()).decode("ascii"),
    }


def decode_pixels(payload: dict) -> np.ndarray:
    try:
        w = int(payload["width"])
        h = int(payload["height"])
        raw = base64.b64decode(payload["pixels"], validate=True)
    except (KeyError, TypeError, ValueError) as e:
        raise ProtocolError(f"bad pixel payload: {e}") from e
    if len(raw) != w * h:
        raise ProtocolError(f"pixel payload holds {len(raw)} bytes for a {w}x{h} image")
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w)


def encode_mask(mask: np.ndarray) -> dict:
    """Binary 2D mask -> {"width", "height", "rle"} (runs start with zeros)."""
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ProtocolError("mask payload must be a 2D image")
    flat = (mask.ravel() != 0).astype(np.int8)
    if flat.size == 0:
        raise ProtocolError("mask payload must be nonempty")
    edges = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate(([0], edges, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0] == 1:  # encoding starts with a zero-run by convention
        runs = [0] + runs
    return {"width": int(mask.shape[1]), "height": int(mask.shape[0]), "rle": runs}


def decode_mask(payload: dict) -> np.ndarray:
    try:
        w = int(payload["width"])
        h = int(payload["height"])
        runs = [int(r) for r in payload["rle"]]
    except (KeyError, TypeError, ValueError) as e:
        raise ProtocolError(f"bad mask payload: {e}") from e
    if any(r < 0 for r in runs):
        raise ProtocolError("mask run lengths must be non-negative")
    if sum(runs) != w * h:
        raise ProtocolError(f"mask runs sum to {sum(runs)}, expected {w * h}")
    flat = np.zeros(w * h, dtype=np.uint8)
    pos = 0
    bit = 0
    for run in runs:
        if bit:
            flat[pos:pos + run] = 1
        pos += run
        bit ^= 1
    return flat.reshape(h, w)
