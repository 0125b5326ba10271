"""Headless protocol client for scripted sessions.

The default transport hosts the service in-process, so scripts run without
a live server; the network transport dials one instead. A script is an
ordered list of requests; the client threads the session id through and
hands streamed propagation updates to a callback.
"""

from __future__ import annotations

import json
from contextlib import ExitStack
from pathlib import Path

from . import protocol
from .errors import VoxloopError


class ClientError(VoxloopError):
    code = "client_error"


class InProcessTransport:
    """Drives a FastAPI app directly; no sockets, no server process."""

    def __init__(self, app):
        from starlette.testclient import TestClient

        self._stack = ExitStack()
        client = self._stack.enter_context(TestClient(app))
        self._ws = self._stack.enter_context(client.websocket_connect("/ws"))

    def send(self, text: str) -> None:
        self._ws.send_text(text)

    def recv(self) -> str:
        return self._ws.receive_text()

    def close(self) -> None:
        self._stack.close()


class NetworkTransport:
    """Connects to a running server over a real WebSocket."""

    def __init__(self, url: str):
        # Imported lazily: only network mode needs the websockets package.
        from websockets.sync.client import connect

        self._ws = connect(url)

    def send(self, text: str) -> None:
        self._ws.send(text)

    def recv(self) -> str:
        message = self._ws.recv()
        return message if isinstance(message, str) else message.decode()

    def close(self) -> None:
        self._ws.close()


class ScriptedClient:
    def __init__(self, transport):
        self.transport = transport
        self.session_id = ""
        self._seq = 0
        self.last_updates: list[dict] = []

    def close(self) -> None:
        self.transport.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def request(self, kind: str, payload: dict | None = None, on_update=None) -> dict:
        """Send one request and block until its terminal reply.

        Streamed propagation_update frames for this seq are collected in
        ``last_updates`` (and forwarded to ``on_update``); the terminal is
        the matching ok reply, propagation_done, or an error frame.
        """
        self._seq += 1
        seq = self._seq
        self.last_updates = []
        self.transport.send(protocol.make_frame(kind, self.session_id, seq, payload or {}))
        while True:
            frame = protocol.parse_frame(self.transport.recv())
            if frame["seq"] != seq:
                continue  # stale push from an earlier request
            if frame["kind"] == "propagation_update":
                self.last_updates.append(frame["payload"])
                if on_update is not None:
                    on_update(frame["payload"])
                continue
            if kind == "open_session" and frame["kind"] == "open_session":
                self.session_id = frame["session_id"]
            return frame


def load_script(path: str | Path) -> list[dict]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    commands = doc["commands"] if isinstance(doc, dict) else doc
    if not isinstance(commands, list):
        raise ClientError("script must be a list of commands or {'commands': [...]}")
    for cmd in commands:
        if not isinstance(cmd, dict) or "kind" not in cmd:
            raise ClientError(f"each command needs a 'kind': {cmd!r}")
    return commands


def run_script(client: ScriptedClient, commands: list[dict], on_update=None) -> list[dict]:
    """Execute commands in order, returning every terminal frame.

    Error frames are returned, not raised: scripts are allowed to probe
    rejections (and the two-phase complete challenge is a normal reply).
    """
    replies = []
    for command in commands:
        reply = client.request(command["kind"], command.get("payload"), on_update=on_update)
        replies.append(reply)
    return replies
