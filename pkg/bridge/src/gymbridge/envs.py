"""Environment adapters the server can host.

Every adapter exposes the same small surface: ``reset(seed) -> raw_obs``,
``step(action) -> (raw_obs, reward, terminated, truncated)``, action bounds,
and per-body mass control where masses always scale the defaults captured at
load time. Mass-control identifiers are the body *groups* from the segment
map (paired groups rescale both sides with one call).
"""

from __future__ import annotations

import numpy as np

from .synthetic import SyntheticHumanoid


class EnvLoadError(RuntimeError):
    pass


class SyntheticAdapter:
    def __init__(self, body_groups: dict[str, list[str]]):
        self.env = SyntheticHumanoid()
        self.env_id = self.env.env_id
        self.groups = dict(body_groups)
        unknown = {
            b for bodies in self.groups.values() for b in bodies
        } - set(self.env.body_names)
        if unknown:
            raise EnvLoadError(f"body groups reference unknown bodies: {sorted(unknown)}")

    @property
    def raw_dim(self) -> int:
        return self.env.raw_dim

    @property
    def act_dim(self) -> int:
        return self.env.act_dim

    @property
    def action_low(self) -> np.ndarray:
        return self.env.action_low

    @property
    def action_high(self) -> np.ndarray:
        return self.env.action_high

    def group_names(self) -> list[str]:
        return list(self.groups)

    def reset(self, seed=None) -> np.ndarray:
        return self.env.reset(seed=seed)

    def step(self, action):
        return self.env.step(action)

    def set_group_mass(self, group: str, scale: float) -> None:
        for body in self.groups[group]:
            self.env.set_body_mass(body, scale)

    def restore_default_masses(self) -> None:
        self.env.restore_default_masses()

    def close(self) -> None:
        self.env.close()


class GymnasiumAdapter:
    """Hosts any registered gymnasium environment; mass control needs mujoco."""

    def __init__(self, env_id: str, body_groups: dict[str, list[str]]):
        try:
            import gymnasium
        except ImportError as exc:
            raise EnvLoadError(
                f"gymnasium is not installed; cannot load {env_id!r}"
            ) from exc
        self.env = gymnasium.make(env_id)
        self.env_id = env_id
        self.groups = dict(body_groups)
        self._model = getattr(self.env.unwrapped, "model", None)
        self._default_masses: dict[str, float] = {}
        if self._model is not None:
            for bodies in self.groups.values():
                for body in bodies:
                    self._default_masses[body] = float(
                        self._model.body(body).mass[0]
                    )

    @property
    def raw_dim(self) -> int:
        return int(np.prod(self.env.observation_space.shape))

    @property
    def act_dim(self) -> int:
        return int(np.prod(self.env.action_space.shape))

    @property
    def action_low(self) -> np.ndarray:
        return np.asarray(self.env.action_space.low, dtype=np.float64)

    @property
    def action_high(self) -> np.ndarray:
        return np.asarray(self.env.action_space.high, dtype=np.float64)

    def group_names(self) -> list[str]:
        return list(self.groups)

    def reset(self, seed=None) -> np.ndarray:
        obs, _ = self.env.reset(seed=seed)
        return np.asarray(obs, dtype=np.float64)

    def step(self, action):
        obs, reward, terminated, truncated, _ = self.env.step(
            np.asarray(action, dtype=np.float64)
        )
        return np.asarray(obs, dtype=np.float64), float(reward), bool(terminated), bool(truncated)

    def set_group_mass(self, group: str, scale: float) -> None:
        if self._model is None:
            raise EnvLoadError(f"{self.env_id} does not expose body masses")
        for body in self.groups[group]:
            self._model.body(body).mass[0] = self._default_masses[body] * float(scale)

    def restore_default_masses(self) -> None:
        if self._model is None:
            return
        for body, mass in self._default_masses.items():
            self._model.body(body).mass[0] = mass

    def close(self) -> None:
        self.env.close()


def load_adapter(env_id: str, body_groups: dict[str, list[str]]):
    if env_id in ("SyntheticHumanoid-v0", "synthetic"):
        return SyntheticAdapter(body_groups)
    return GymnasiumAdapter(env_id, body_groups)
