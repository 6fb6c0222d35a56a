"""Client for remote environments served over the newline-delimited JSON
protocol.

One request object per line, UTF-8, over a plain TCP stream:

    {"cmd": "spec"}
    {"cmd": "reset", "seed": 7}
    {"cmd": "step", "action": [0.0, ...]}
    {"cmd": "set_mask", "remove": ["velocity"]}
    {"cmd": "set_mass", "body": "torso", "scale": 0.5}
    {"cmd": "close"}

Replies are ``{"ok": true, ...payload}`` or ``{"ok": false, "error": "..."}``.
Masking happens server-side; the wire only carries retained dimensions. At
connect time the client cross-checks the server's reported observation width
against the local masked-dimension arithmetic and refuses to proceed on
mismatch.
"""

from __future__ import annotations

import json
import socket
from importlib import resources
from pathlib import Path

import numpy as np

from .envs import ATTRIBUTES, ObsMask, ObservationAttributeSpec, StepResult, masked_dim
from .errors import (
    ConfigurationError,
    RemoteCommandError,
    RemoteConnectionError,
    RemoteProtocolError,
    SpecMismatchError,
)

DEFAULT_TIMEOUT = 60.0


def default_segment_map_path() -> Path:
    """The humanoid segment map shipped with the package."""
    return Path(str(resources.files("windowrl").joinpath("data/humanoid_v4_segments.json")))


def load_segment_map(source: str | Path | dict) -> dict:
    """Load and validate a segment-map document.

    The document lists, per attribute, the raw observation index ranges the
    server retains plus the expected segment length. The client only needs
    the lengths; the ranges are validated for internal consistency so a
    malformed file is caught on either side.
    """
    if isinstance(source, dict):
        doc = source
    else:
        with open(source, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    if "attributes" not in doc or not isinstance(doc["attributes"], list):
        raise ConfigurationError("segment map must contain an 'attributes' list")
    lengths = {}
    for entry in doc["attributes"]:
        name = entry.get("name")
        if name not in ATTRIBUTES:
            raise ConfigurationError(f"segment map has unknown attribute {name!r}")
        ranges = entry.get("ranges", [])
        span = 0
        for lo, hi in ranges:
            if not (0 <= lo < hi):
                raise ConfigurationError(f"bad range [{lo}, {hi}) for {name}")
            span += hi - lo
        if span != entry.get("length"):
            raise ConfigurationError(
                f"{name}: ranges cover {span} indices but length says {entry.get('length')}"
            )
        lengths[name] = span
    doc["_lengths"] = lengths
    return doc


def _parse_endpoint(endpoint: str | tuple[str, int]) -> tuple[str, int]:
    if isinstance(endpoint, tuple):
        return endpoint[0], int(endpoint[1])
    host, _, port = endpoint.rpartition(":")
    if not host or not port.isdigit():
        raise ConfigurationError(f"endpoint must be host:port, got {endpoint!r}")
    return host, int(port)


class RemoteEnv:
    """Handle to a served environment; mirrors the built-in env interface."""

    def __init__(self, sock: socket.socket, mask: ObsMask):
        self._sock = sock
        self._file = sock.makefile("rwb")
        self.mask = mask
        self.obs_dim = 0
        self.action_dim = 0
        self.spec: ObservationAttributeSpec | None = None
        self.full_spec: ObservationAttributeSpec | None = None
        self.body_names: tuple[str, ...] = ()
        self.env_id: str | None = None
        self._action_low: np.ndarray | None = None
        self._action_high: np.ndarray | None = None

    # -- wire plumbing ------------------------------------------------------

    def _request(self, payload: dict) -> dict:
        try:
            self._file.write(json.dumps(payload).encode("utf-8") + b"\n")
            self._file.flush()
            line = self._file.readline()
        except OSError as exc:
            raise RemoteConnectionError(f"connection lost: {exc}") from exc
        if not line:
            raise RemoteProtocolError("server closed the connection mid-request")
        try:
            reply = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise RemoteProtocolError(f"reply is not valid JSON: {exc}") from exc
        if not isinstance(reply, dict) or "ok" not in reply:
            raise RemoteProtocolError(f"reply missing 'ok' field: {reply!r}")
        if not reply["ok"]:
            raise RemoteCommandError(str(reply.get("error", "unspecified server error")))
        return reply

    def _refresh_spec(self, expected_lengths: dict | None = None) -> None:
        reply = self._request({"cmd": "spec"})
        for key in ("obs_dim", "act_dim", "segments"):
            if key not in reply:
                raise RemoteProtocolError(f"spec reply missing {key!r}: {reply!r}")
        segments = reply["segments"]
        if not isinstance(segments, dict):
            raise RemoteProtocolError("spec 'segments' must be an object")
        ordered = tuple(
            (attr, int(segments[attr])) for attr in ATTRIBUTES if attr in segments
        )
        full = ObservationAttributeSpec(ordered)
        if expected_lengths is not None:
            for attr, want in expected_lengths.items():
                if full.length_of(attr) != want:
                    raise SpecMismatchError(
                        f"server reports {attr}={full.length_of(attr)}, "
                        f"segment map expects {want}"
                    )
        want_dim = masked_dim(full, self.mask)
        if int(reply["obs_dim"]) != want_dim:
            raise SpecMismatchError(
                f"server obs_dim {reply['obs_dim']} != masked_dim {want_dim} "
                f"for mask {sorted(self.mask.removed)}"
            )
        self.full_spec = full
        self.spec = ObservationAttributeSpec(
            tuple((a, n) for a, n in full.segments if a not in self.mask.removed)
        )
        self.obs_dim = int(reply["obs_dim"])
        self.action_dim = int(reply["act_dim"])
        self.env_id = reply.get("env_id")
        self.body_names = tuple(reply.get("bodies", ()))
        if "action_low" in reply and "action_high" in reply:
            self._action_low = np.asarray(reply["action_low"], dtype=np.float64)
            self._action_high = np.asarray(reply["action_high"], dtype=np.float64)

    # -- env interface ------------------------------------------------------

    @property
    def action_low(self) -> np.ndarray:
        if self._action_low is None:
            return np.full(self.action_dim, -1.0)
        return self._action_low

    @property
    def action_high(self) -> np.ndarray:
        if self._action_high is None:
            return np.full(self.action_dim, 1.0)
        return self._action_high

    def reset(self, seed: int | None = None) -> np.ndarray:
        payload: dict = {"cmd": "reset"}
        if seed is not None:
            payload["seed"] = int(seed)
        reply = self._request(payload)
        if "obs" not in reply:
            raise RemoteProtocolError("reset reply missing 'obs'")
        obs = np.asarray(reply["obs"], dtype=np.float64)
        if obs.shape != (self.obs_dim,):
            raise SpecMismatchError(
                f"reset returned width {obs.shape}, spec says {self.obs_dim}"
            )
        return obs

    def step(self, action) -> StepResult:
        action = np.asarray(action, dtype=np.float64).reshape(-1)
        reply = self._request({"cmd": "step", "action": [float(a) for a in action]})
        for key in ("obs", "reward", "terminated", "truncated"):
            if key not in reply:
                raise RemoteProtocolError(f"step reply missing {key!r}")
        obs = np.asarray(reply["obs"], dtype=np.float64)
        if obs.shape != (self.obs_dim,):
            raise SpecMismatchError(
                f"step returned width {obs.shape}, spec says {self.obs_dim}"
            )
        return StepResult(
            observation=obs,
            reward=float(reply["reward"]),
            terminated=bool(reply["terminated"]),
            truncated=bool(reply["truncated"]),
        )

    def set_mass(self, body: str, scale: float) -> None:
        self._request({"cmd": "set_mass", "body": str(body), "scale": float(scale)})

    def set_mask(self, mask: ObsMask) -> None:
        self._request({"cmd": "set_mask", "remove": sorted(mask.removed)})
        self.mask = mask
        self._refresh_spec()

    def close(self) -> None:
        try:
            self._request({"cmd": "close"})
        except (RemoteConnectionError, RemoteProtocolError, RemoteCommandError):
            pass
        finally:
            try:
                self._file.close()
            finally:
                self._sock.close()

    def __enter__(self) -> "RemoteEnv":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def remote_env_connect(
    endpoint: str | tuple[str, int],
    env_id: str | None = None,
    segment_map: str | Path | dict | None = None,
    mask: ObsMask = ObsMask(),
    timeout: float = DEFAULT_TIMEOUT,
) -> RemoteEnv:
    """Connect to an environment server and validate its observation spec.

    ``segment_map`` (path or loaded document) supplies the expected attribute
    lengths; the server's reported segments must match them exactly, and the
    reported obs_dim must equal the local masked-dimension arithmetic for
    ``mask``. ``env_id``, when given, must match the id the server reports.
    """
    host, port = _parse_endpoint(endpoint)
    try:
        sock = socket.create_connection((host, port), timeout=timeout)
    except OSError as exc:
        raise RemoteConnectionError(f"cannot connect to {host}:{port}: {exc}") from exc
    env = RemoteEnv(sock, mask)
    expected = None
    if segment_map is not None:
        expected = load_segment_map(segment_map)["_lengths"]
    try:
        if mask.removed:
            env._request({"cmd": "set_mask", "remove": sorted(mask.removed)})
        env._refresh_spec(expected_lengths=expected)
        if env_id is not None and env.env_id is not None and env.env_id != env_id:
            raise SpecMismatchError(
                f"server serves {env.env_id!r}, expected {env_id!r}"
            )
    except Exception:
        sock.close()
        raise
    return env
