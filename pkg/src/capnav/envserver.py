"""Newline-delimited JSON over TCP: reset/step/render episodes remotely.

Requests:  {"id": int, "op": "hello"|"list_scenes"|"reset"|"step"|"close", "params": {...}}
Responses: {"id": ..., "ok": true, "payload": {...}}
           {"id": ..., "ok": false, "error": {"code": "...", "message": "..."}}

One session per connection; `hello` with protocol version "1" must come
first. Observations carry a base64 PNG; pose and visible-instance lists are
only included when the server runs with privileged mode on (the task gives
agents just the RGB image otherwise).
"""

from __future__ import annotations

import base64
import json
import socket
import socketserver
import threading
from dataclasses import dataclass, field

import numpy as np

from capnav.core import CameraIntrinsics, DEFAULT_CAMERA, GridIndex
from capnav.dataset import DatasetDir
from capnav.gridworld import (
    BadActionError,
    EpisodeDoneError,
    EpisodeState,
    build_navspace,
    make_episode,
    step,
    vec10_to_action,
)
from capnav.renderer import category_grid_bytes, frame_to_png, render, visible_instances
from capnav.scenegen import Scene

PROTOCOL_VERSION = "1"

E_VERSION = "E_VERSION"
E_NO_SCENE = "E_NO_SCENE"
E_NO_EPISODE = "E_NO_EPISODE"
E_DONE = "E_DONE"
E_BAD_ACTION = "E_BAD_ACTION"
E_PARSE = "E_PARSE"


class ProtocolError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


@dataclass
class EnvService:
    """Scene store + episode semantics, shared by all sessions (read-only)."""

    scenes: dict[str, Scene]
    cam: CameraIntrinsics = DEFAULT_CAMERA
    max_steps: int = 12
    privileged: bool = False
    seed: int = 0

    def __post_init__(self):
        self._rng = np.random.default_rng(self.seed)
        self._rng_lock = threading.Lock()
        self._nav_cache: dict[str, object] = {}

    @classmethod
    def from_dataset(cls, dataset_dir: str, **kwargs) -> "EnvService":
        ds = DatasetDir(dataset_dir)
        scenes = {scene_id: ds.scene(scene_id) for scene_id in ds.scene_ids()}
        return cls(scenes=scenes, **kwargs)

    def navspace(self, scene_id: str):
        if scene_id not in self._nav_cache:
            self._nav_cache[scene_id] = build_navspace(self.scenes[scene_id])
        return self._nav_cache[scene_id]

    def random_start(self, scene_id: str) -> GridIndex:
        free = self.navspace(scene_id).navigable_points()
        with self._rng_lock:
            row = free[int(self._rng.integers(0, len(free)))]
        return GridIndex(*(int(v) for v in row))


@dataclass
class Session:
    """Per-connection state; never shared across connections."""

    service: EnvService
    hello_done: bool = False
    episode: EpisodeState | None = None
    scene_id: str | None = None
    want_category_grid: bool = False


def _observation(service: EnvService, session: Session) -> dict:
    state = session.episode
    frame = render(state.scene, state.pose, service.cam)
    payload = {
        "image_png": base64.b64encode(frame_to_png(frame)).decode("ascii"),
        "width": frame.width,
        "height": frame.height,
        "step_count": state.step_count,
        "done": state.done,
    }
    if session.want_category_grid:
        payload["category_grid"] = base64.b64encode(category_grid_bytes(frame)).decode("ascii")
        payload["category_names"] = list(frame.category_names)
    if service.privileged:
        p = state.pose
        payload["privileged"] = {
            "pose": [p.position.x, p.position.y, p.position.z, p.heading, p.elevation],
            "visible_instances": visible_instances(frame),
        }
    return payload


def handle(service: EnvService, session: Session, request) -> tuple[dict, bool]:
    """One request -> (response, close_connection). Session state mutates here."""
    rid = None
    try:
        if not isinstance(request, dict):
            raise ProtocolError(E_PARSE, "request must be a JSON object")
        rid = request.get("id")
        if not isinstance(rid, int):
            rid = None
            raise ProtocolError(E_PARSE, "request id must be an integer")
        op = request.get("op")
        params = request.get("params", {})
        if params is None:
            params = {}
        if not isinstance(params, dict):
            raise ProtocolError(E_PARSE, "params must be an object")

        if op == "hello":
            version = params.get("version")
            if version != PROTOCOL_VERSION:
                raise ProtocolError(E_VERSION, f"unsupported protocol version {version!r}")
            session.hello_done = True
            return {"id": rid, "ok": True, "payload": {"version": PROTOCOL_VERSION}}, False
        if not session.hello_done:
            raise ProtocolError(E_VERSION, "hello must precede other requests")

        if op == "list_scenes":
            return {"id": rid, "ok": True,
                    "payload": {"scenes": sorted(service.scenes)}}, False

        if op == "reset":
            scene_id = params.get("scene_id")
            if scene_id not in service.scenes:
                raise ProtocolError(E_NO_SCENE, f"unknown scene {scene_id!r}")
            start = params.get("start", "random")
            if start == "random" or start is None:
                grid = service.random_start(scene_id)
            else:
                try:
                    grid = GridIndex(*(int(v) for v in start))
                except (TypeError, ValueError) as exc:
                    raise ProtocolError(E_PARSE, f"bad start: {exc}")
            session.episode = make_episode(service.scenes[scene_id], grid, service.max_steps)
            session.scene_id = scene_id
            session.want_category_grid = bool(params.get("category_grid", False))
            return {"id": rid, "ok": True, "payload": _observation(service, session)}, False

        if op == "step":
            if session.episode is None:
                raise ProtocolError(E_NO_EPISODE, "no episode open; reset first")
            if session.episode.done:
                raise ProtocolError(E_DONE, "episode is done")
            vec = params.get("action")
            try:
                action = vec10_to_action(vec)
            except (BadActionError, TypeError) as exc:
                raise ProtocolError(E_BAD_ACTION, str(exc))
            try:
                step(session.episode, action)
            except EpisodeDoneError as exc:
                raise ProtocolError(E_DONE, str(exc))
            return {"id": rid, "ok": True, "payload": _observation(service, session)}, False

        if op == "close":
            return {"id": rid, "ok": True, "payload": {}}, True

        raise ProtocolError(E_PARSE, f"unknown op {op!r}")
    except ProtocolError as exc:
        return {"id": rid, "ok": False,
                "error": {"code": exc.code, "message": str(exc)}}, False


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        service = self.server.service  # type: ignore[attr-defined]
        session = Session(service)
        while True:
            line = self.rfile.readline()
            if not line:
                break
            line = line.strip()
            if not line:
                continue
            try:
                request = json.loads(line.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                response, close = {"id": None, "ok": False,
                                   "error": {"code": E_PARSE, "message": f"bad JSON: {exc}"}}, False
            else:
                response, close = handle(service, session, request)
            self.wfile.write(json.dumps(response, sort_keys=True).encode("utf-8") + b"\n")
            self.wfile.flush()
            if close:
                break


class EnvServer(socketserver.ThreadingTCPServer):
    """One thread per connection; scenes shared read-only across sessions."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address: tuple[str, int], service: EnvService):
        super().__init__(address, _Handler)
        self.service = service

    @property
    def port(self) -> int:
        return self.socket.getsockname()[1]


def serve(address: tuple[str, int], service: EnvService):
    """Blocking serve loop (CLI entry)."""
    with EnvServer(address, service) as server:
        print(f"listening on {server.server_address[0]}:{server.port}", flush=True)
        server.serve_forever()


def connect_client(host: str, port: int, timeout: float = 10.0) -> socket.socket:
    """Plain TCP client socket for tests/tools."""
    return socket.create_connection((host, port), timeout=timeout)
