"""WebSocket + HTTP service over the session machinery.

One binary hosts two logical services behind config flags: the interactive
session endpoint (WebSocket at /ws) and the mesh-export endpoint
(POST /mesh). Either can be switched off independently.

Concurrency: each session owns an asyncio.Lock, so its requests apply
strictly in arrival order, while distinct sessions proceed in parallel.
Propagation runs in a worker thread with every accepted-slice update
bridged back onto the event loop, keeping the loop free for other
sessions mid-stream.
"""

from __future__ import annotations

import asyncio
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import FileResponse, JSONResponse
from pydantic import BaseModel

from . import guidance as guidance_mod
from . import meshing, protocol, retrieval
from .errors import VoxloopError
from .profiles import ProfileSet
from .segmenter import BuiltinSegmenter, HttpBackend, SegmentationBackend
from .session import (
    CONTEXT_OBJ,
    EVENTS_FILE,
    LESION_OBJ,
    MASK_FILE,
    REPORT_FILE,
    VOLUME_LINK_FILE,
    Session,
    SessionConfig,
)
from .volume import load_mask, load_volume

SERVABLE_FILES = (MASK_FILE, EVENTS_FILE, REPORT_FILE, VOLUME_LINK_FILE, LESION_OBJ, CONTEXT_OBJ)


@dataclass
class ServiceConfig:
    profiles: ProfileSet
    data_dir: Path
    volumes_dir: Path | None = None
    index: retrieval.ReferenceIndex | None = None
    assets_dir: Path | None = None  # thumbnail paths resolve against this
    backend_endpoint: str | None = None
    guidance_endpoint: str | None = None
    guidance_timeout: float = 10.0
    session_defaults: SessionConfig = field(default_factory=SessionConfig)
    static_dir: Path | None = None
    enable_sessions: bool = True
    enable_mesh: bool = True

    def make_backend(self) -> SegmentationBackend:
        if self.backend_endpoint:
            return HttpBackend(self.backend_endpoint)
        return BuiltinSegmenter()

    def make_guidance_provider(self) -> guidance_mod.GuidanceProvider:
        if self.guidance_endpoint:
            return guidance_mod.ExternalGuidance(
                self.guidance_endpoint, timeout=self.guidance_timeout
            )
        return guidance_mod.TemplateGuidance()


class MeshRequest(BaseModel):
    mask_path: str
    volume_path: str | None = None
    context_threshold: float | None = None
    out_dir: str | None = None


class MeshReply(BaseModel):
    files: dict[str, str]
    volumes: dict[str, float]
    lesion_watertight: bool


class _Entry:
    def __init__(self, session: Session):
        self.session = session
        self.lock = asyncio.Lock()


def _merge_session_config(defaults: SessionConfig, override: dict | None) -> SessionConfig:
    base = defaults.to_dict()
    for key, value in (override or {}).items():
        base[key] = value
    return SessionConfig.from_dict(base)


def create_app(config: ServiceConfig) -> FastAPI:
    app = FastAPI(title="voxloop")
    sessions: dict[str, _Entry] = {}
    app.state.config = config
    app.state.sessions = sessions
    config.data_dir.mkdir(parents=True, exist_ok=True)

    def resolve_volume(ref: str) -> Path:
        path = Path(ref)
        if not path.is_absolute() and config.volumes_dir is not None:
            path = config.volumes_dir / path
        return path

    @app.get("/health")
    def health():
        return {
            "status": "ok",
            "sessions": len(sessions),
            "features": {
                "sessions": config.enable_sessions,
                "mesh": config.enable_mesh,
                "guidance": config.index is not None,
            },
        }

    if config.enable_mesh:

        @app.post("/mesh", response_model=MeshReply)
        def mesh(request: MeshRequest):
            try:
                mask = load_mask(request.mask_path)
            except (VoxloopError, OSError) as exc:
                return JSONResponse(status_code=400, content={"code": "volume_format", "message": str(exc)})
            spacing = (1.0, 1.0, 1.0)
            volume = None
            if request.volume_path:
                try:
                    volume = load_volume(resolve_volume(request.volume_path))
                except (VoxloopError, OSError) as exc:
                    return JSONResponse(
                        status_code=400, content={"code": "volume_format", "message": str(exc)}
                    )
                spacing = volume.spacing
            out_dir = Path(request.out_dir) if request.out_dir else Path(request.mask_path).parent
            out_dir.mkdir(parents=True, exist_ok=True)
            lesion = meshing.scale_mesh(meshing.mask_to_mesh(mask), spacing)
            meshing.write_obj(lesion, out_dir / LESION_OBJ)
            files = {"lesion": str(out_dir / LESION_OBJ)}
            volumes = {"lesion_mm3": meshing.signed_volume(lesion)}
            if volume is not None and request.context_threshold is not None:
                context = meshing.context_surface(volume, request.context_threshold)
                if not context.is_empty:
                    meshing.write_obj(context, out_dir / CONTEXT_OBJ)
                    files["context"] = str(out_dir / CONTEXT_OBJ)
                    volumes["context_mm3"] = meshing.signed_volume(context)
            return MeshReply(
                files=files,
                volumes=volumes,
                lesion_watertight=bool(not lesion.is_empty and meshing.is_watertight(lesion)),
            )

    @app.get("/files/{session_id}/{name}")
    def session_file(session_id: str, name: str):
        if name not in SERVABLE_FILES:
            return JSONResponse(status_code=404, content={"code": "not_found", "message": name})
        path = config.data_dir / session_id / name
        if ".." in session_id or not path.is_file():
            return JSONResponse(status_code=404, content={"code": "not_found", "message": name})
        return FileResponse(path)

    @app.get("/refs/{record_id}/thumbnail")
    def thumbnail(record_id: str):
        if config.index is None:
            return JSONResponse(status_code=404, content={"code": "not_found", "message": "no index"})
        try:
            record = config.index.record_by_id(record_id)
        except VoxloopError:
            return JSONResponse(status_code=404, content={"code": "not_found", "message": record_id})
        base = config.assets_dir or config.data_dir
        path = base / record.thumbnail_ref if record.thumbnail_ref else None
        if path is None or ".." in record.thumbnail_ref or not path.is_file():
            return JSONResponse(
                status_code=404, content={"code": "not_found", "message": "no thumbnail"}
            )
        return FileResponse(path, media_type="image/png")

    if config.static_dir is not None and config.static_dir.is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/app", StaticFiles(directory=config.static_dir, html=True), name="app")

    if not config.enable_sessions:
        return app

    async def send_frame(ws: WebSocket, kind: str, session_id: str, seq: int, payload: dict):
        await ws.send_text(protocol.make_frame(kind, session_id, seq, payload))

    async def send_error(ws: WebSocket, session_id: str, seq: int, code: str, message: str, request_kind: str = ""):
        await send_frame(
            ws,
            "error",
            session_id,
            seq,
            {"code": code, "message": message, "request_kind": request_kind},
        )

    async def handle_open(ws: WebSocket, frame: dict):
        payload = frame["payload"]
        requested = frame["session_id"] or payload.get("session_id") or ""
        if requested and requested in sessions:
            # Reattach: a client reconnecting to a live session gets its
            # current state, not a fresh one.
            entry = sessions[requested]
            async with entry.lock:
                session = entry.session
                reply = {
                    "session_id": session.session_id,
                    "state": session.state,
                    "active_slice": session.active_slice,
                    "target": session.intent.target if session.intent else None,
                    "pending_prompts": len(session.prompts),
                    "confirmed_points": session.confirmed_points,
                    "clear_events": session.clear_events,
                    "reattached": True,
                }
            await send_frame(ws, "open_session", session.session_id, frame["seq"], reply)
            return
        volume_ref = payload.get("volume_ref")
        if not volume_ref:
            await send_error(ws, requested, frame["seq"], "bad_frame", "open_session needs a volume_ref", "open_session")
            return
        try:
            volume = await asyncio.to_thread(load_volume, resolve_volume(volume_ref))
        except (VoxloopError, OSError) as exc:
            await send_error(ws, requested, frame["seq"], "volume_format", str(exc), "open_session")
            return
        session_id = requested or uuid.uuid4().hex[:12]
        if session_id in sessions:
            await send_error(ws, session_id, frame["seq"], "state_violation", f"session {session_id!r} is already open", "open_session")
            return
        session = Session(
            session_id=session_id,
            volume=volume,
            volume_ref=volume_ref,
            profiles=config.profiles,
            backend=config.make_backend(),
            config=_merge_session_config(config.session_defaults, payload.get("config")),
            index=config.index,
            guidance_provider=config.make_guidance_provider(),
            data_dir=config.data_dir,
        )
        entry = _Entry(session)
        async with entry.lock:
            sessions[session_id] = entry
            try:
                reply = await asyncio.to_thread(session.open)
            except Exception as exc:
                sessions.pop(session_id, None)
                await send_error(ws, session_id, frame["seq"], "error", str(exc), "open_session")
                return
        await send_frame(ws, "open_session", session_id, frame["seq"], reply)

    async def handle_request(ws: WebSocket, frame: dict):
        kind, seq = frame["kind"], frame["seq"]
        if kind == "open_session":
            await handle_open(ws, frame)
            return
        entry = sessions.get(frame["session_id"])
        if entry is None:
            await send_error(ws, frame["session_id"], seq, "bad_frame", f"unknown session {frame['session_id']!r}", kind)
            return
        session = entry.session
        async with entry.lock:
            try:
                if kind == "propagate":
                    loop = asyncio.get_running_loop()

                    def emit(update: dict):
                        # Called from the worker thread; block it until the
                        # frame is on the wire so updates stay ordered and
                        # bounded.
                        asyncio.run_coroutine_threadsafe(
                            send_frame(ws, "propagation_update", session.session_id, seq, update),
                            loop,
                        ).result()

                    reply = await loop.run_in_executor(None, lambda: session.propagate(emit=emit))
                    await send_frame(ws, "propagation_done", session.session_id, seq, reply)
                else:
                    reply = await asyncio.to_thread(session.handle, kind, frame["payload"])
                    await send_frame(ws, kind, session.session_id, seq, reply)
            except VoxloopError as exc:
                await send_error(ws, session.session_id, seq, exc.code, str(exc), kind)
            except (KeyError, TypeError, ValueError) as exc:
                await send_error(ws, session.session_id, seq, "bad_frame", f"{kind}: {exc}", kind)
            except Exception as exc:
                # Socket teardown mid-stream lands here; the error frame is
                # best effort since the peer may be gone.
                try:
                    await send_error(ws, session.session_id, seq, "error", str(exc), kind)
                except Exception:
                    pass

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        tasks: set[asyncio.Task] = set()
        try:
            while True:
                text = await ws.receive_text()
                try:
                    frame = protocol.parse_frame(text)
                except VoxloopError as exc:
                    # Slot the error to the request's own seq when the
                    # envelope is readable, else the client cannot match it
                    # and its request would dangle forever.
                    seq, session_id = protocol.recover_envelope(text)
                    await send_error(ws, session_id, seq, exc.code, str(exc))
                    continue
                # One task per request: a long propagation on one session
                # must not stall frames for the others on this socket.
                task = asyncio.create_task(handle_request(ws, frame))
                tasks.add(task)
                task.add_done_callback(tasks.discard)
        except WebSocketDisconnect:
            pass
        finally:
            for task in tasks:
                task.cancel()

    return app
