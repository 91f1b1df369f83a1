"""Thin client for the capnav environment server.

Speaks the server's NDJSON/TCP protocol (version "1"): hello, list_scenes,
reset, step, close. Observations come back with the PNG already decoded to
an (H, W, 3) uint8 numpy array. One client per connection; instances are
not thread-safe.
"""

from __future__ import annotations

import base64
import json
import socket
from dataclasses import dataclass, field

import numpy as np

from capnav_client.png import decode_rgb

PROTOCOL_VERSION = "1"


class EnvError(Exception):
    """Server-reported error; `code` carries the wire error code."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


class VersionError(EnvError):
    pass


class UnknownSceneError(EnvError):
    pass


class NoEpisodeError(EnvError):
    pass


class EpisodeDoneError(EnvError):
    pass


class BadActionError(EnvError):
    pass


_ERROR_TYPES = {
    "E_VERSION": VersionError,
    "E_NO_SCENE": UnknownSceneError,
    "E_NO_EPISODE": NoEpisodeError,
    "E_DONE": EpisodeDoneError,
    "E_BAD_ACTION": BadActionError,
}


def _raise_for(error: dict):
    code = error.get("code", "E_UNKNOWN")
    raise _ERROR_TYPES.get(code, EnvError)(code, error.get("message", ""))


@dataclass
class Observation:
    image: np.ndarray  # (H, W, 3) uint8
    step_count: int
    done: bool
    category_grid: np.ndarray | None = None  # (H, W) int32, -1 background
    pose: list[float] | None = None  # privileged servers only
    visible_instances: list[int] | None = None


@dataclass
class EnvClient:
    """Connected session; create via connect()."""

    _sock: socket.socket
    _fh: object
    _next_id: int = 1
    episode_open: bool = field(default=False)
    _hello_done: bool = field(default=False)

    def handshake(self):
        """Negotiate the protocol version; valid exactly once per connection."""
        if self._hello_done:
            raise RuntimeError("already connected")
        self._rpc("hello", {"version": PROTOCOL_VERSION})
        self._hello_done = True

    def _rpc(self, op: str, params: dict | None = None) -> dict:
        rid = self._next_id
        self._next_id += 1
        request = {"id": rid, "op": op}
        if params is not None:
            request["params"] = params
        self._fh.write(json.dumps(request).encode("utf-8") + b"\n")
        self._fh.flush()
        line = self._fh.readline()
        if not line:
            raise ConnectionError("server closed the connection")
        response = json.loads(line)
        if response.get("id") not in (rid, None):
            raise EnvError("E_PROTOCOL", f"response id {response.get('id')} for request {rid}")
        if not response.get("ok"):
            _raise_for(response.get("error", {}))
        return response["payload"]

    def list_scenes(self) -> list[str]:
        return list(self._rpc("list_scenes")["scenes"])

    def reset(self, scene_id: str, start=None, category_grid: bool = False) -> Observation:
        """Open an episode; `start` is a lattice index triple or None for random."""
        params = {"scene_id": scene_id, "category_grid": category_grid}
        if start is not None:
            params["start"] = list(start)
        obs = self._observation(self._rpc("reset", params))
        self.episode_open = True
        return obs

    def step(self, action_vec10) -> Observation:
        """Advance one step with a 10-number action vector.

        A finished episode stays open so the server's E_DONE surfaces as
        EpisodeDoneError; stepping before any reset raises NoEpisodeError.
        """
        if not self.episode_open:
            raise NoEpisodeError("E_NO_EPISODE", "no episode open; call reset first")
        return self._observation(self._rpc("step", {"action": [float(v) for v in action_vec10]}))

    def close(self):
        try:
            self._rpc("close")
        finally:
            self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        try:
            self.close()
        except Exception:
            pass

    def _observation(self, payload: dict) -> Observation:
        image = decode_rgb(base64.b64decode(payload["image_png"]))
        grid = None
        if "category_grid" in payload:
            raw = np.frombuffer(base64.b64decode(payload["category_grid"]), dtype="<u2")
            grid = raw.reshape(payload["height"], payload["width"]).astype(np.int32)
            grid[grid == 0xFFFF] = -1
        privileged = payload.get("privileged", {})
        return Observation(
            image=image,
            step_count=payload["step_count"],
            done=payload["done"],
            category_grid=grid,
            pose=privileged.get("pose"),
            visible_instances=privileged.get("visible_instances"),
        )


def connect(addr, timeout: float = 30.0) -> EnvClient:
    """Connect to `addr` ("host:port" or (host, port)) and negotiate the protocol."""
    if isinstance(addr, str):
        host, _, port = addr.rpartition(":")
        addr = (host or "127.0.0.1", int(port))
    sock = socket.create_connection(addr, timeout=timeout)
    client = EnvClient(_sock=sock, _fh=sock.makefile("rwb"))
    client.handshake()
    return client
