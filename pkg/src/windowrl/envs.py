"""Environments with attribute-tagged observations and masking.

Observations are flat vectors whose indices are partitioned into four
semantic attributes: position, velocity, mass_inertia and force. Partial
observability is created purely on the observation side — an
:class:`ObsMask` removes whole attribute segments while the environment keeps
simulating full dynamics. Position can never be removed.

Two desk-scale environments are built in. Both expose all four attributes so
every masking configuration is meaningful, and both have a single named body
whose mass can be rescaled for domain-randomization runs:

* ``pendulum`` — torque-limited swing-up; removing the velocity segment makes
  it the canonical "history recovers the latent state" test.
* ``pointmass`` — a 1-D force-controlled particle; the simplest testbed for
  the mass-randomization protocol.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ContractViolationError

ATTRIBUTES = ("position", "velocity", "mass_inertia", "force")
MASKABLE = ("velocity", "mass_inertia", "force")

_ATTR_SHORTHAND = {
    "v": "velocity",
    "m": "mass_inertia",
    "f": "force",
    "velocity": "velocity",
    "mass_inertia": "mass_inertia",
    "mass": "mass_inertia",
    "force": "force",
}


@dataclass(frozen=True)
class ObservationAttributeSpec:
    """Ordered (attribute, length) segments covering a flat observation."""

    segments: tuple[tuple[str, int], ...]

    def __post_init__(self):
        segs = tuple((str(a), int(n)) for a, n in self.segments)
        object.__setattr__(self, "segments", segs)
        for attr, length in segs:
            if attr not in ATTRIBUTES:
                raise ContractViolationError(f"unknown attribute {attr!r}")
            if length < 1:
                raise ContractViolationError(f"segment {attr} has length {length}")

    @property
    def total_dim(self) -> int:
        return sum(n for _, n in self.segments)

    def ranges(self) -> list[tuple[str, int, int]]:
        """(attribute, start, stop) index ranges, in order."""
        out, start = [], 0
        for attr, length in self.segments:
            out.append((attr, start, start + length))
            start += length
        return out

    def length_of(self, attribute: str) -> int:
        return sum(n for a, n in self.segments if a == attribute)

    @staticmethod
    def humanoid() -> "ObservationAttributeSpec":
        """The 348-dimensional humanoid decomposition: 22/101/130/95."""
        return ObservationAttributeSpec(
            (("position", 22), ("velocity", 101), ("mass_inertia", 130), ("force", 95))
        )


@dataclass(frozen=True)
class ObsMask:
    """Set of attributes removed from the observation. Position always stays."""

    removed: frozenset[str] = frozenset()

    def __post_init__(self):
        removed = frozenset(self.removed)
        object.__setattr__(self, "removed", removed)
        if "position" in removed:
            raise ContractViolationError("position can never be removed")
        for attr in removed:
            if attr not in MASKABLE:
                raise ContractViolationError(f"cannot mask unknown attribute {attr!r}")

    @staticmethod
    def parse(text: str) -> "ObsMask":
        """Parse "v,m,f"-style shorthand (or full names, or empty string)."""
        text = text.strip()
        if not text or text == "none":
            return ObsMask()
        names = set()
        for tok in text.split(","):
            tok = tok.strip().lower()
            if tok not in _ATTR_SHORTHAND:
                raise ConfigurationError(
                    f"unknown mask token {tok!r}; use v, m, f or full attribute names"
                )
            names.add(_ATTR_SHORTHAND[tok])
        return ObsMask(frozenset(names))

    def label(self) -> str:
        order = {"velocity": "v", "mass_inertia": "m", "force": "f"}
        return ",".join(order[a] for a in ("velocity", "mass_inertia", "force") if a in self.removed) or "none"


def masked_dim(spec: ObservationAttributeSpec, mask: ObsMask) -> int:
    """Observation width after removing the masked attribute segments."""
    return sum(n for attr, n in spec.segments if attr not in mask.removed)


def apply_mask(
    observation: np.ndarray, spec: ObservationAttributeSpec, mask: ObsMask
) -> np.ndarray:
    """Drop masked segments, keeping retained components in original order."""
    observation = np.asarray(observation)
    if observation.shape != (spec.total_dim,):
        raise ContractViolationError(
            f"observation width {observation.shape} != spec total {spec.total_dim}"
        )
    if not mask.removed:
        return observation.copy()
    parts = [
        observation[start:stop]
        for attr, start, stop in spec.ranges()
        if attr not in mask.removed
    ]
    return np.concatenate(parts)


def masked_spec(
    spec: ObservationAttributeSpec, mask: ObsMask
) -> ObservationAttributeSpec:
    """The attribute spec of the masked observation."""
    return ObservationAttributeSpec(
        tuple((a, n) for a, n in spec.segments if a not in mask.removed)
    )


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    terminated: bool
    truncated: bool


@dataclass(frozen=True)
class RandomizationSchedule:
    """Mass-randomization cadence: every ``period`` steps, each target body's
    mass is set to default_mass * Uniform(scale_low, scale_high)."""

    period: int = 10_000
    scale_low: float = 0.5
    scale_high: float = 1.0
    targets: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.period < 1:
            raise ContractViolationError("period must be a positive step count")
        if not 0 < self.scale_low <= self.scale_high:
            raise ContractViolationError("need 0 < scale_low <= scale_high")
        if self.targets is not None:
            object.__setattr__(self, "targets", tuple(self.targets))


def randomize_masses(
    env, schedule: RandomizationSchedule, rng: np.random.Generator, global_step: int
) -> list[tuple[str, float]]:
    """Apply the schedule at ``global_step``; returns fired (body, scale) events.

    Fires only when ``global_step`` is a positive multiple of the period.
    Scales are drawn independently per target body and always multiply the
    body's *default* mass.
    """
    if global_step <= 0 or global_step % schedule.period != 0:
        return []
    targets = schedule.targets if schedule.targets is not None else env.body_names
    events = []
    for body in targets:
        if body not in env.body_names:
            raise ConfigurationError(
                f"unknown body {body!r}; valid bodies: {list(env.body_names)}"
            )
        scale = float(rng.uniform(schedule.scale_low, schedule.scale_high))
        env.set_mass(body, scale)
        events.append((body, scale))
    return events


def _wrap_angle(theta: float) -> float:
    """Map an angle to (-pi, pi]."""
    return np.pi - (np.pi - theta) % (2.0 * np.pi)


def _validate_action(action, width: int) -> np.ndarray:
    arr = np.asarray(action, dtype=np.float64).reshape(-1)
    if arr.shape != (width,):
        raise ContractViolationError(f"action must have width {width}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ContractViolationError("action contains non-finite values")
    return arr


class PendulumEnv:
    """Torque-limited pendulum swing-up with the four-attribute observation.

    State is (theta, theta_dot) with theta = 0 upright. Dynamics use
    semi-implicit Euler: theta_ddot = (3g / 2l) sin(theta) + 3 / (m l^2) u,
    velocity updated first, then position with the new velocity. The reward
    is -(wrap(theta)^2 + 0.1 theta_dot^2 + 0.001 u^2) evaluated at the state
    in which the torque was applied. Episodes never terminate; they truncate
    after ``episode_length`` steps.

    Observation: [cos theta, sin theta | theta_dot | m, l | last torque].
    """

    GRAVITY = 10.0
    DT = 0.05
    MAX_TORQUE = 2.0
    MAX_SPEED = 8.0
    EPISODE_LENGTH = 200

    spec = ObservationAttributeSpec(
        (("position", 2), ("velocity", 1), ("mass_inertia", 2), ("force", 1))
    )
    body_names = ("pendulum",)
    action_dim = 1

    def __init__(self, mass: float = 1.0, length: float = 1.0):
        self.default_mass = float(mass)
        self.mass = float(mass)
        self.length = float(length)
        self.theta = 0.0
        self.theta_dot = 0.0
        self.last_torque = 0.0
        self.step_count = 0
        self._rng = np.random.default_rng(0)

    @property
    def action_low(self) -> np.ndarray:
        return np.array([-self.MAX_TORQUE])

    @property
    def action_high(self) -> np.ndarray:
        return np.array([self.MAX_TORQUE])

    def set_mass(self, body: str, scale: float) -> None:
        if body not in self.body_names:
            raise ConfigurationError(
                f"unknown body {body!r}; valid bodies: {list(self.body_names)}"
            )
        if scale <= 0:
            raise ConfigurationError("mass scale must be positive")
        self.mass = self.default_mass * float(scale)

    def _observe(self) -> np.ndarray:
        return np.array(
            [
                np.cos(self.theta),
                np.sin(self.theta),
                self.theta_dot,
                self.mass,
                self.length,
                self.last_torque,
            ]
        )

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        self.theta = float(self._rng.uniform(-np.pi, np.pi))
        self.theta_dot = float(self._rng.uniform(-1.0, 1.0))
        self.last_torque = 0.0
        self.step_count = 0
        return self._observe()

    def step(self, action) -> StepResult:
        if self.step_count >= self.EPISODE_LENGTH:
            raise ContractViolationError("episode already truncated; reset first")
        u = float(np.clip(_validate_action(action, 1)[0], -self.MAX_TORQUE, self.MAX_TORQUE))
        m, l = self.mass, self.length
        reward = -(
            _wrap_angle(self.theta) ** 2
            + 0.1 * self.theta_dot**2
            + 0.001 * u**2
        )
        accel = (3.0 * self.GRAVITY / (2.0 * l)) * np.sin(self.theta) + (
            3.0 / (m * l**2)
        ) * u
        self.theta_dot = float(
            np.clip(self.theta_dot + accel * self.DT, -self.MAX_SPEED, self.MAX_SPEED)
        )
        self.theta = self.theta + self.theta_dot * self.DT
        self.last_torque = u
        self.step_count += 1
        return StepResult(
            observation=self._observe(),
            reward=float(reward),
            terminated=False,
            truncated=self.step_count >= self.EPISODE_LENGTH,
        )


class PointMassEnv:
    """Force-controlled particle on a line, regulated toward the origin.

    Dynamics (semi-implicit): v <- v + (u/m) dt, then x <- x + v dt. Reward
    is -(x^2 + 0.1 v^2 + 0.001 u^2) at the pre-step state. Episodes truncate
    after ``episode_length`` steps and never terminate.

    Observation: [x | v | m | last force].
    """

    DT = 0.05
    MAX_FORCE = 1.0
    EPISODE_LENGTH = 200

    spec = ObservationAttributeSpec(
        (("position", 1), ("velocity", 1), ("mass_inertia", 1), ("force", 1))
    )
    body_names = ("pointmass",)
    action_dim = 1

    def __init__(self, mass: float = 1.0):
        self.default_mass = float(mass)
        self.mass = float(mass)
        self.x = 0.0
        self.v = 0.0
        self.last_force = 0.0
        self.step_count = 0
        self._rng = np.random.default_rng(0)

    @property
    def action_low(self) -> np.ndarray:
        return np.array([-self.MAX_FORCE])

    @property
    def action_high(self) -> np.ndarray:
        return np.array([self.MAX_FORCE])

    def set_mass(self, body: str, scale: float) -> None:
        if body not in self.body_names:
            raise ConfigurationError(
                f"unknown body {body!r}; valid bodies: {list(self.body_names)}"
            )
        if scale <= 0:
            raise ConfigurationError("mass scale must be positive")
        self.mass = self.default_mass * float(scale)

    def _observe(self) -> np.ndarray:
        return np.array([self.x, self.v, self.mass, self.last_force])

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        self.x = float(self._rng.uniform(-1.0, 1.0))
        self.v = 0.0
        self.last_force = 0.0
        self.step_count = 0
        return self._observe()

    def step(self, action) -> StepResult:
        if self.step_count >= self.EPISODE_LENGTH:
            raise ContractViolationError("episode already truncated; reset first")
        u = float(np.clip(_validate_action(action, 1)[0], -self.MAX_FORCE, self.MAX_FORCE))
        reward = -(self.x**2 + 0.1 * self.v**2 + 0.001 * u**2)
        self.v = self.v + (u / self.mass) * self.DT
        self.x = self.x + self.v * self.DT
        self.last_force = u
        self.step_count += 1
        return StepResult(
            observation=self._observe(),
            reward=float(reward),
            terminated=False,
            truncated=self.step_count >= self.EPISODE_LENGTH,
        )


class MaskedEnv:
    """Observation-masking wrapper: full dynamics, partial observations."""

    def __init__(self, env, mask: ObsMask = ObsMask()):
        self.env = env
        self.mask = mask
        self.full_spec: ObservationAttributeSpec = env.spec
        self.spec = masked_spec(env.spec, mask)

    @property
    def obs_dim(self) -> int:
        return self.spec.total_dim

    @property
    def action_dim(self) -> int:
        return self.env.action_dim

    @property
    def action_low(self) -> np.ndarray:
        return self.env.action_low

    @property
    def action_high(self) -> np.ndarray:
        return self.env.action_high

    @property
    def body_names(self) -> tuple[str, ...]:
        return self.env.body_names

    def set_mass(self, body: str, scale: float) -> None:
        self.env.set_mass(body, scale)

    def reset(self, seed: int | None = None) -> np.ndarray:
        return apply_mask(self.env.reset(seed=seed), self.full_spec, self.mask)

    def step(self, action) -> StepResult:
        result = self.env.step(action)
        return StepResult(
            observation=apply_mask(result.observation, self.full_spec, self.mask),
            reward=result.reward,
            terminated=result.terminated,
            truncated=result.truncated,
        )

    def close(self) -> None:
        close = getattr(self.env, "close", None)
        if close is not None:
            close()


BUILTIN_ENVS = {
    "pendulum": PendulumEnv,
    "pointmass": PointMassEnv,
}


def make_env(env_id: str, mask: ObsMask = ObsMask()) -> MaskedEnv:
    """Construct a built-in environment wrapped with the given mask."""
    if env_id not in BUILTIN_ENVS:
        raise ConfigurationError(
            f"unknown env {env_id!r}; built-ins: {sorted(BUILTIN_ENVS)}"
        )
    return MaskedEnv(BUILTIN_ENVS[env_id](), mask)
