"""Interactive segmentation session: state machine, event log, persistence.

A session walks a fixed state graph:

    Contextualize -> Explore <-> CommandPending -> Seeded -> Propagating
                        ^                            |           |
                        |        (empty seed)        v           v
                        +----------------------- [reply]       Review -> Completed

Review allows prompting/refining on any slice, reseeding back to Seeded,
or completing. Illegal messages raise StateViolation and must leave the
session untouched; every handler validates before mutating.

All mutating operations append to an ordered event log. Replaying that log
against a fresh session with the same deterministic collaborators (builtin
segmenter, template guidance) reproduces the final mask volume bit for bit.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import guidance as guidance_mod
from . import meshing, protocol, retrieval
from .errors import PromptError, RetrievalError, StateViolation, VoxloopError
from .metrics import TrialRecord
from .profiles import ProfileSet, TargetProfile
from .propagation import PropagationConfig, PropagationReport, propagate_bidirectional
from .segmenter import (
    CommandIntent,
    PointPrompt,
    SegmentationBackend,
    parse_command,
    refine_with_prompts,
    seed_segment,
)
from .volume import MaskVolume, Volume, mask_roundtrip, slice_at, window_normalize

CONTEXTUALIZE = "Contextualize"
EXPLORE = "Explore"
COMMAND_PENDING = "CommandPending"
SEEDED = "Seeded"
PROPAGATING = "Propagating"
REVIEW = "Review"
COMPLETED = "Completed"

STATES = (CONTEXTUALIZE, EXPLORE, COMMAND_PENDING, SEEDED, PROPAGATING, REVIEW, COMPLETED)

# Which states accept which request kinds. Kinds absent here (guidance,
# log_trial) are allowed in any settled state.
ALLOWED_STATES = {
    "navigate": (EXPLORE, REVIEW),
    "submit_command": (EXPLORE, COMMAND_PENDING),
    "confirm_command": (COMMAND_PENDING,),
    "add_prompt": (SEEDED, REVIEW),
    "clear_prompts": (SEEDED, REVIEW),
    "refine": (SEEDED, REVIEW),
    "propagate": (SEEDED,),
    "reseed": (REVIEW,),
    "complete": (REVIEW,),
    "request_mesh": (COMPLETED,),
}

MASK_FILE = "masks.nii.gz"
EVENTS_FILE = "events.jsonl"
REPORT_FILE = "report.json"
VOLUME_LINK_FILE = "volume.link"
LESION_OBJ = "lesion.obj"
CONTEXT_OBJ = "context.obj"
TRIALS_FILE = "trials.csv"

TRIALS_COLUMNS = ("trial_id", "paradigm", "accuracy", "tlx_total", "time", "confirmed", "clears")


@dataclass(frozen=True)
class SessionConfig:
    propagation: PropagationConfig = field(default_factory=PropagationConfig)
    window: tuple[float, float] | None = None
    default_context_threshold: float = 500.0

    def to_dict(self) -> dict:
        return {
            "window": list(self.window) if self.window else None,
            "default_context_threshold": self.default_context_threshold,
            "propagation": {
                "iou_break_threshold": self.propagation.iou_break_threshold,
                "break_enabled": self.propagation.break_enabled,
                "max_steps_per_direction": self.propagation.max_steps_per_direction,
                "directions": self.propagation.directions,
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SessionConfig":
        prop = data.get("propagation", {})
        window = data.get("window")
        return cls(
            propagation=PropagationConfig(
                iou_break_threshold=prop.get("iou_break_threshold", 0.3),
                break_enabled=prop.get("break_enabled", True),
                max_steps_per_direction=prop.get("max_steps_per_direction"),
                directions=prop.get("directions", "both"),
            ),
            window=tuple(window) if window else None,
            default_context_threshold=data.get("default_context_threshold", 500.0),
        )


class Session:
    """One user's segmentation workflow over one volume.

    Not thread-safe; the service serializes mutating requests per session.
    ``data_dir=None`` disables persistence entirely (used for replays).
    """

    def __init__(
        self,
        session_id: str,
        volume: Volume,
        volume_ref: str,
        profiles: ProfileSet,
        backend: SegmentationBackend,
        config: SessionConfig | None = None,
        index: retrieval.ReferenceIndex | None = None,
        embed_provider: retrieval.EmbeddingProvider | None = None,
        guidance_provider: guidance_mod.GuidanceProvider | None = None,
        data_dir: str | Path | None = None,
    ):
        self.session_id = session_id
        self.volume = volume
        self.volume_ref = volume_ref
        self.profiles = profiles
        self.backend = backend
        self.config = config or SessionConfig()
        self.index = index
        self.embed_provider = embed_provider or retrieval.HistogramEmbedding()
        self.guidance_provider = guidance_provider or guidance_mod.TemplateGuidance()

        self.state = CONTEXTUALIZE
        self.extent = volume.extent()
        self.active_slice = self.extent // 2
        self.masks = MaskVolume.zeros(volume.dims)
        self.intent: CommandIntent | None = None
        self.prompts: list[PointPrompt] = []
        self.next_sequence = 0
        self.confirmed_points = 0
        self.clear_events = 0
        self.report: PropagationReport | None = None
        self.last_guidance: guidance_mod.GuidanceBundle | None = None
        self.guidance_disabled = index is None
        self.event_log: list[dict] = []

        self.session_dir: Path | None = None
        if data_dir is not None:
            self.session_dir = Path(data_dir) / session_id
            self.session_dir.mkdir(parents=True, exist_ok=True)

    # -- plumbing ----------------------------------------------------------

    def _window(self) -> tuple[float, float]:
        if self.config.window is not None:
            return self.config.window
        lo, hi = self.volume.value_range
        if lo == hi:
            lo, hi = lo - 0.5, hi + 0.5
        return (float(lo), float(hi))

    def _record_event(self, kind: str, payload: dict) -> None:
        event = {"kind": kind, "payload": payload, "t": time.time()}
        self.event_log.append(event)
        if self.session_dir is not None:
            with open(self.session_dir / EVENTS_FILE, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(event) + "\n")

    def _require_state(self, kind: str) -> None:
        allowed = ALLOWED_STATES.get(kind)
        if allowed is None:
            if self.state == PROPAGATING:
                raise StateViolation(kind, self.state, [s for s in STATES if s != PROPAGATING])
            return
        if self.state not in allowed:
            raise StateViolation(kind, self.state, allowed)

    def _profile(self) -> TargetProfile:
        if self.intent is None:
            raise VoxloopError("no confirmed target for this session")
        return self.profiles[self.intent.target]

    def _slice_payload(self, with_references: bool = True) -> dict:
        lo, hi = self._window()
        image = slice_at(self.volume, self.active_slice, window=(lo, hi))
        plane = self.masks.get_plane(self.active_slice, axis=self.volume.slice_axis)
        payload = {
            "slice_index": self.active_slice,
            "extent": self.extent,
            "window": [lo, hi],
            "image": protocol.encode_pixels(window_normalize(image, lo, hi)),
            "mask": protocol.encode_mask(plane) if plane.any() else None,
        }
        if with_references:
            payload["references"] = self._reference_payload(image)
        return payload

    def _reference_payload(self, image) -> dict | None:
        if self.index is None:
            return None
        try:
            query = retrieval.embed_slice(image, self.embed_provider)
            positive, negative = retrieval.contrastive_retrieve(self.index, query)
        except RetrievalError:
            return None
        return {
            "positive": _record_ref(positive),
            "negative": _record_ref(negative),
        }

    def _guidance_bundle(self, mode: str, target: str) -> guidance_mod.GuidanceBundle | None:
        if self.index is None:
            return None
        lo, hi = self._window()
        image = slice_at(self.volume, self.active_slice, window=(lo, hi))
        try:
            query = retrieval.embed_slice(image, self.embed_provider)
            positive, negative = retrieval.contrastive_retrieve(self.index, query)
        except RetrievalError:
            return None
        bundle = guidance_mod.generate_guidance(
            mode, target, self.active_slice, positive, negative, self.guidance_provider
        )
        self.last_guidance = bundle
        return bundle

    def _status(self) -> dict:
        return {
            "session_id": self.session_id,
            "state": self.state,
            "active_slice": self.active_slice,
            "target": self.intent.target if self.intent else None,
            "pending_prompts": len(self.prompts),
            "confirmed_points": self.confirmed_points,
            "clear_events": self.clear_events,
        }

    # -- request handlers --------------------------------------------------

    def open(self) -> dict:
        if self.state != CONTEXTUALIZE:
            raise StateViolation("open_session", self.state, (CONTEXTUALIZE,))
        self._record_event(
            "open_session",
            {"volume_ref": self.volume_ref, "config": self.config.to_dict()},
        )
        # General orientation guidance on the middle slice; the session is
        # fully usable without an index, just with guidance disabled.
        bundle = self._guidance_bundle(guidance_mod.GENERAL_MODE, "the target structure")
        self.state = EXPLORE
        payload = {
            **self._status(),
            "dims": list(self.volume.dims),
            "spacing": list(self.volume.spacing),
            "guidance_disabled": self.guidance_disabled,
            "guidance": bundle.to_payload() if bundle else None,
            "slice": self._slice_payload(),
        }
        if self.guidance_disabled:
            payload["warning"] = "no reference index configured; guidance is disabled"
        return payload

    def navigate(self, slice_index: int) -> dict:
        self._require_state("navigate")
        if not 0 <= slice_index < self.extent:
            raise VoxloopError(
                f"slice {slice_index} outside volume of {self.extent} slices"
            )
        self._record_event("navigate", {"slice_index": slice_index})
        self.active_slice = slice_index
        return {**self._status(), "slice": self._slice_payload()}

    def submit_command(self, text: str) -> dict:
        self._require_state("submit_command")
        # Parse before mutating: an unmatched command must leave both the
        # state and any previously pending intent exactly as they were.
        intent = parse_command(text, self.profiles)
        self._record_event("submit_command", {"text": text})
        replaced = self.intent.raw_text if self.state == COMMAND_PENDING and self.intent else None
        self.intent = intent
        self.state = COMMAND_PENDING
        return {
            **self._status(),
            "parsed_target": intent.target,
            "replaced_command": replaced,
        }

    def confirm_command(self) -> dict:
        self._require_state("confirm_command")
        profile = self._profile()
        lo, hi = self._window()
        image = slice_at(self.volume, self.active_slice, window=(lo, hi))
        seed = seed_segment(image, profile, self.backend)
        self._record_event("confirm_command", {})
        if not seed.any():
            self.state = EXPLORE
            return {
                **self._status(),
                "seeded": False,
                "reply": f"target not found on this slice; try another slice for {profile.name}",
            }
        self.masks.set_plane(self.active_slice, seed, axis=self.volume.slice_axis)
        self.masks = MaskVolume(self.masks.bits, target_name=profile.name)
        self.state = SEEDED
        bundle = self._guidance_bundle(guidance_mod.QUERY_MODE, profile.name)
        return {
            **self._status(),
            "seeded": True,
            "guidance": bundle.to_payload() if bundle else None,
            "slice": self._slice_payload(),
        }

    def add_prompt(self, x: int, y: int, polarity: str) -> dict:
        self._require_state("add_prompt")
        plane = self.masks.get_plane(self.active_slice, axis=self.volume.slice_axis)
        height, width = plane.shape
        if not (0 <= x < width and 0 <= y < height):
            raise PromptError(f"prompt ({x}, {y}) outside {width}x{height} slice")
        if polarity not in ("positive", "negative"):
            raise PromptError(f"polarity must be positive or negative, got {polarity!r}")
        self._record_event("add_prompt", {"x": x, "y": y, "polarity": polarity})
        prompt = PointPrompt(
            slice_index=self.active_slice,
            x=x,
            y=y,
            polarity=polarity,
            sequence=self.next_sequence,
        )
        self.next_sequence += 1
        self.prompts.append(prompt)
        return {**self._status(), "accepted": {"x": x, "y": y, "polarity": polarity, "sequence": prompt.sequence}}

    def clear_prompts(self) -> dict:
        self._require_state("clear_prompts")
        self._record_event("clear_prompts", {})
        dropped = len(self.prompts)
        self.prompts = []
        self.clear_events += 1
        # The mask is deliberately untouched: clearing discards pending
        # points only, never applied refinements.
        return {**self._status(), "dropped": dropped}

    def refine(self) -> dict:
        self._require_state("refine")
        if not self.prompts:
            raise PromptError("no pending prompts to apply")
        profile = self._profile()
        lo, hi = self._window()
        image = slice_at(self.volume, self.active_slice, window=(lo, hi))
        current = self.masks.get_plane(self.active_slice, axis=self.volume.slice_axis)
        stale = [p for p in self.prompts if p.slice_index != self.active_slice]
        if stale:
            raise PromptError(
                f"{len(stale)} pending prompts target slice {stale[0].slice_index}, "
                f"not the active slice {self.active_slice}"
            )
        refined = refine_with_prompts(image, current, self.prompts, self.backend, profile)
        self._record_event("refine", {})
        self.masks.set_plane(self.active_slice, refined, axis=self.volume.slice_axis)
        self.confirmed_points += len(self.prompts)
        self.prompts = []
        return {**self._status(), "slice": self._slice_payload(with_references=False)}

    def propagate(self, emit=None) -> dict:
        """Run bidirectional propagation from the active slice.

        ``emit(payload)`` is called once per accepted slice, in emission
        order. The returned payload is the terminal summary; on backend
        failure it carries the partial results plus the error reason.
        """
        self._require_state("propagate")
        profile = self._profile()
        seed = self.masks.get_plane(self.active_slice, axis=self.volume.slice_axis)
        if not seed.any():
            raise VoxloopError("cannot propagate from an empty seed mask")
        self.state = PROPAGATING

        def forward(record, mask):
            if emit is not None:
                emit(
                    {
                        "slice_index": record.slice_index,
                        "direction": record.direction,
                        "ordinal": record.emitted_at,
                        "iou_vs_previous": record.iou_vs_previous,
                        "mask_area": record.mask_area,
                        "mask": protocol.encode_mask(mask),
                    }
                )

        try:
            masks, report = propagate_bidirectional(
                self.volume,
                self.active_slice,
                seed,
                self.backend,
                profile,
                config=self.config.propagation,
                emit=forward,
            )
        except Exception:
            # Engine-level validation failures (not backend errors, which the
            # engine absorbs into the report) leave the session in Seeded.
            self.state = SEEDED
            raise
        self._record_event("propagate", {})
        # Each propagation replaces the whole mask volume: earlier rounds
        # are superseded, never merged.
        self.masks = masks
        self.report = report
        self.state = REVIEW
        payload = {
            **self._status(),
            "seed_slice_index": report.seed_slice_index,
            "halt_reasons": report.halt_reasons,
            "records": [r.to_dict() for r in report.records],
            "accepted_slices": [r.slice_index for r in report.accepted_records],
            "total_voxels": self.masks.voxel_count,
        }
        if report.error:
            payload["error"] = report.error
        return payload

    def reseed(self) -> dict:
        self._require_state("reseed")
        plane = self.masks.get_plane(self.active_slice, axis=self.volume.slice_axis)
        if not plane.any():
            raise VoxloopError(
                f"slice {self.active_slice} has no mask to reseed from"
            )
        self._record_event("reseed", {})
        self.state = SEEDED
        return {**self._status(), "seed_slice_index": self.active_slice}

    def complete(self, confirm: bool = False) -> dict:
        self._require_state("complete")
        if not confirm:
            # Two-phase finish: the first request only challenges.
            return {
                **self._status(),
                "challenge": "completing will finalize the session and write all "
                "artifacts; re-send with confirm=true to proceed",
                "confirmed": False,
            }
        files = {}
        if self.session_dir is not None:
            mask_path = self.session_dir / MASK_FILE
            mask_roundtrip(self.masks, mask_path, spacing=self.volume.spacing)
            files["mask"] = MASK_FILE
            (self.session_dir / VOLUME_LINK_FILE).write_text(self.volume_ref + "\n", encoding="utf-8")
            files["volume_link"] = VOLUME_LINK_FILE
            report_doc = {
                "session_id": self.session_id,
                "target": self.intent.target if self.intent else None,
                "total_voxels": self.masks.voxel_count,
                "confirmed_points": self.confirmed_points,
                "clear_events": self.clear_events,
                "propagation": self.report.to_dict() if self.report else None,
            }
            (self.session_dir / REPORT_FILE).write_text(
                json.dumps(report_doc, indent=2) + "\n", encoding="utf-8"
            )
            files["report"] = REPORT_FILE
            files["events"] = EVENTS_FILE
        self._record_event("complete", {"confirm": True})
        self.state = COMPLETED
        return {**self._status(), "confirmed": True, "files": files}

    def request_mesh(self, context_threshold: float | None = None) -> dict:
        self._require_state("request_mesh")
        threshold = (
            self.config.default_context_threshold
            if context_threshold is None
            else float(context_threshold)
        )
        lesion = meshing.scale_mesh(meshing.mask_to_mesh(self.masks), self.volume.spacing)
        context = meshing.context_surface(self.volume, threshold)
        files = {}
        volumes = {"lesion_mm3": meshing.signed_volume(lesion)}
        if self.session_dir is not None:
            meshing.write_obj(lesion, self.session_dir / LESION_OBJ)
            files["lesion"] = LESION_OBJ
            if not context.is_empty:
                meshing.write_obj(context, self.session_dir / CONTEXT_OBJ)
                files["context"] = CONTEXT_OBJ
        if not context.is_empty:
            volumes["context_mm3"] = meshing.signed_volume(context)
        return {
            **self._status(),
            "context_threshold": threshold,
            "files": files,
            "volumes": volumes,
            "lesion_watertight": bool(
                not lesion.is_empty and meshing.is_watertight(lesion)
            ),
        }

    def guidance(self, mode: str = guidance_mod.GENERAL_MODE) -> dict:
        self._require_state("guidance")
        if self.guidance_disabled:
            raise RetrievalError("guidance is disabled: no reference index configured")
        target = self.intent.target if self.intent else "the target structure"
        bundle = self._guidance_bundle(mode, target)
        if bundle is None:
            raise RetrievalError("no contrastive references available for this slice")
        return {**self._status(), "guidance": bundle.to_payload()}

    def log_trial(self, payload: dict, data_dir: str | Path | None = None) -> dict:
        self._require_state("log_trial")
        record = TrialRecord(
            trial_id=str(payload["trial_id"]),
            paradigm=str(payload["paradigm"]),
            accuracy=float(payload["accuracy"]),
            tlx_total=float(payload["tlx_total"]),
            completion_time=float(payload["time"]),
            confirmed_points=int(payload.get("confirmed", self.confirmed_points)),
            clear_events=int(payload.get("clears", self.clear_events)),
        )
        target = Path(data_dir) if data_dir is not None else (
            self.session_dir.parent if self.session_dir is not None else None
        )
        if target is not None:
            path = target / TRIALS_FILE
            fresh = not path.exists()
            with open(path, "a", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh)
                if fresh:
                    writer.writerow(TRIALS_COLUMNS)
                writer.writerow(
                    [
                        record.trial_id,
                        record.paradigm,
                        record.accuracy,
                        record.tlx_total,
                        record.completion_time,
                        record.confirmed_points,
                        record.clear_events,
                    ]
                )
        return {**self._status(), "logged": record.trial_id}

    # -- dispatch ----------------------------------------------------------

    def handle(self, kind: str, payload: dict, emit=None) -> dict:
        """Apply one protocol request; used by both the service and replay."""
        if kind == "open_session":
            return self.open()
        if kind == "navigate":
            return self.navigate(int(payload["slice_index"]))
        if kind == "submit_command":
            return self.submit_command(str(payload["text"]))
        if kind == "confirm_command":
            return self.confirm_command()
        if kind == "add_prompt":
            return self.add_prompt(
                int(payload["x"]), int(payload["y"]), str(payload["polarity"])
            )
        if kind == "clear_prompts":
            return self.clear_prompts()
        if kind == "refine":
            return self.refine()
        if kind == "propagate":
            return self.propagate(emit=emit)
        if kind == "reseed":
            return self.reseed()
        if kind == "complete":
            return self.complete(bool(payload.get("confirm", False)))
        if kind == "request_mesh":
            return self.request_mesh(payload.get("context_threshold"))
        if kind == "guidance":
            return self.guidance(str(payload.get("mode", guidance_mod.GENERAL_MODE)))
        if kind == "log_trial":
            return self.log_trial(payload)
        raise VoxloopError(f"unhandled request kind {kind!r}")


def _record_ref(record: retrieval.ReferenceRecord) -> dict:
    return {
        "record_id": record.record_id,
        "slice_index": record.slice_index,
        "has_pathology": record.has_pathology,
        "thumbnail_ref": record.thumbnail_ref,
    }


def read_events(path: str | Path) -> list[dict]:
    events = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                events.append(json.loads(line))
    return events


def replay_events(
    events: list[dict],
    volume: Volume,
    profiles: ProfileSet,
    backend: SegmentationBackend,
    index: retrieval.ReferenceIndex | None = None,
) -> Session:
    """Rebuild a session by applying a recorded event log to a fresh machine.

    The caller supplies the same volume and profiles the original session
    used; config comes from the open_session event. Persistence is off, so
    replays never touch disk.
    """
    if not events or events[0]["kind"] != "open_session":
        raise VoxloopError("event log must start with open_session")
    config = SessionConfig.from_dict(events[0]["payload"].get("config", {}))
    session = Session(
        session_id="replay",
        volume=volume,
        volume_ref=events[0]["payload"].get("volume_ref", ""),
        profiles=profiles,
        backend=backend,
        config=config,
        index=index,
        data_dir=None,
    )
    for event in events:
        kind = event["kind"]
        if kind not in protocol.MUTATING_KINDS:
            continue
        session.handle(kind, event.get("payload", {}))
    return session
