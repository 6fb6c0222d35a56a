"""The environment server.

Wire protocol: newline-delimited JSON over TCP, UTF-8, one object per line.

Requests:
    {"cmd": "spec"}
    {"cmd": "reset", "seed": 7}
    {"cmd": "step", "action": [17 floats]}
    {"cmd": "set_mask", "remove": ["velocity", ...]}
    {"cmd": "set_mass", "body": "torso", "scale": 0.5}
    {"cmd": "close"}

Replies are {"ok": true, ...payload} or {"ok": false, "error": "..."}. A
malformed request gets an error reply and the session continues; an
environment exception gets an error reply carrying the message text. One
client is served at a time; a client disconnect resets the session state
(mask cleared, body masses restored to the defaults captured at load).
"""

from __future__ import annotations

import json
import socket
import threading

import numpy as np

from .envs import load_adapter
from .projection import MASKABLE, Projection, SegmentMapError, load_segment_map


class BridgeSession:
    """Per-connection state plus the request dispatcher."""

    def __init__(self, adapter, projection: Projection):
        self.adapter = adapter
        self.projection = projection
        self.removed: set[str] = set()
        self.adapter.restore_default_masses()

    def handle(self, request: dict) -> dict:
        cmd = request.get("cmd")
        if cmd == "spec":
            return self._spec()
        if cmd == "reset":
            return self._reset(request)
        if cmd == "step":
            return self._step(request)
        if cmd == "set_mask":
            return self._set_mask(request)
        if cmd == "set_mass":
            return self._set_mass(request)
        if cmd == "close":
            return {"ok": True}
        return {"ok": False, "error": f"unknown command {cmd!r}"}

    def _spec(self) -> dict:
        return {
            "ok": True,
            "obs_dim": self.projection.projected_dim(self.removed),
            "act_dim": self.adapter.act_dim,
            "segments": self.projection.lengths(),
            "env_id": self.adapter.env_id,
            "bodies": self.adapter.group_names(),
            "action_low": [float(x) for x in self.adapter.action_low],
            "action_high": [float(x) for x in self.adapter.action_high],
        }

    def _reset(self, request: dict) -> dict:
        seed = request.get("seed")
        raw = self.adapter.reset(seed=None if seed is None else int(seed))
        obs = self.projection.project(np.asarray(raw), self.removed)
        return {"ok": True, "obs": obs.tolist()}

    def _step(self, request: dict) -> dict:
        action = request.get("action")
        if not isinstance(action, list) or len(action) != self.adapter.act_dim:
            return {
                "ok": False,
                "error": f"action must be a list of {self.adapter.act_dim} floats",
            }
        raw, reward, terminated, truncated = self.adapter.step(np.asarray(action))
        obs = self.projection.project(np.asarray(raw), self.removed)
        return {
            "ok": True,
            "obs": obs.tolist(),
            "reward": reward,
            "terminated": terminated,
            "truncated": truncated,
        }

    def _set_mask(self, request: dict) -> dict:
        remove = request.get("remove", [])
        if not isinstance(remove, list):
            return {"ok": False, "error": "'remove' must be a list of attribute names"}
        bad = [a for a in remove if a not in MASKABLE]
        if bad:
            return {
                "ok": False,
                "error": f"cannot remove {bad}; removable attributes: {list(MASKABLE)}",
            }
        self.removed = set(remove)
        return {"ok": True}

    def _set_mass(self, request: dict) -> dict:
        body = request.get("body")
        scale = request.get("scale")
        if body not in self.adapter.group_names():
            return {
                "ok": False,
                "error": f"unknown body {body!r}; valid bodies: "
                f"{self.adapter.group_names()}",
            }
        if not isinstance(scale, (int, float)) or scale <= 0:
            return {"ok": False, "error": "scale must be a positive number"}
        self.adapter.set_group_mass(body, float(scale))
        return {"ok": True}


class BridgeServer:
    """Accept loop serving one client at a time."""

    def __init__(self, host: str, port: int, env_id: str, segment_map):
        doc = load_segment_map(segment_map)
        self.projection = Projection(doc)
        self.adapter = load_adapter(env_id, doc.get("body_groups", {}))
        # startup validation: the map must fit the env's raw observation
        probe = self.adapter.reset(seed=0)
        if probe.shape != (self.adapter.raw_dim,):
            raise SegmentMapError(
                f"adapter reports raw_dim {self.adapter.raw_dim} but reset "
                f"returned {probe.shape}"
            )
        self.projection.validate_against(self.adapter.raw_dim)
        self._listener = socket.create_server((host, port))
        self.host, self.port = self._listener.getsockname()[:2]
        self._stop = threading.Event()

    def stop(self) -> None:
        self._stop.set()
        # unblock accept()
        try:
            socket.create_connection((self.host, self.port), timeout=1).close()
        except OSError:
            pass

    def serve_forever(self) -> None:
        try:
            while not self._stop.is_set():
                conn, _ = self._listener.accept()
                if self._stop.is_set():
                    conn.close()
                    break
                self._serve_client(conn)
        finally:
            self._listener.close()
            self.adapter.close()

    def _serve_client(self, conn: socket.socket) -> None:
        session = BridgeSession(self.adapter, self.projection)
        try:
            with conn, conn.makefile("rwb") as fh:
                while True:
                    line = fh.readline()
                    if not line:
                        break
                    try:
                        request = json.loads(line.decode("utf-8"))
                        if not isinstance(request, dict):
                            raise ValueError("request must be a JSON object")
                    except (UnicodeDecodeError, ValueError) as exc:
                        reply = {"ok": False, "error": f"malformed request: {exc}"}
                        fh.write(json.dumps(reply).encode("utf-8") + b"\n")
                        fh.flush()
                        continue
                    try:
                        reply = session.handle(request)
                    except Exception as exc:  # noqa: BLE001 - report, keep serving
                        reply = {"ok": False, "error": f"{type(exc).__name__}: {exc}"}
                    fh.write(json.dumps(reply).encode("utf-8") + b"\n")
                    fh.flush()
                    if request.get("cmd") == "close":
                        break
        except OSError:
            pass
        finally:
            # client gone: clear session state for the next one
            self.adapter.restore_default_masses()


def serve(host: str, port: int, env_id: str, segment_map) -> None:
    """Run the server until interrupted (blocking)."""
    server = BridgeServer(host, port, env_id, segment_map)
    print(f"serving {env_id} on {server.host}:{server.port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.stop()
