"""Synthetic environment reproducing the humanoid's raw observation layout.

This is not a physics simulation. It exists so the bridge protocol, the
segment projection and the per-body mass controls can be exercised end to
end on machines without gymnasium/mujoco: the raw observation has the exact
376-dim block structure of the public humanoid (qpos[2:] 22, qvel 23, cinert
14x10, cvel 14x6, qfrc_actuator 23, cfrc_ext 14x6, world-body rows zero),
thirteen named bodies with default masses, and deterministic seeded dynamics
so recorded action sequences replay to identical observation streams.

Body masses appear verbatim in the cinert block (first entry of each body's
row), which makes mass changes observable over the wire.
"""

from __future__ import annotations

import numpy as np

BODY_NAMES = (
    "torso",
    "lwaist",
    "pelvis",
    "right_thigh",
    "right_shin",
    "right_foot",
    "left_thigh",
    "left_shin",
    "left_foot",
    "right_upper_arm",
    "right_lower_arm",
    "left_upper_arm",
    "left_lower_arm",
)

DEFAULT_MASSES = {
    "torso": 8.32,
    "lwaist": 2.03,
    "pelvis": 6.06,
    "right_thigh": 4.53,
    "right_shin": 2.64,
    "right_foot": 1.77,
    "left_thigh": 4.53,
    "left_shin": 2.64,
    "left_foot": 1.77,
    "right_upper_arm": 1.66,
    "right_lower_arm": 1.23,
    "left_upper_arm": 1.66,
    "left_lower_arm": 1.23,
}

N_QPOS = 24  # raw qpos; the first two entries are excluded from observations
N_QVEL = 23
N_ACT = 17
N_BODIES_WITH_WORLD = 14
RAW_DIM = 22 + 23 + 140 + 84 + 23 + 84  # 376
EPISODE_LENGTH = 1000

# fixed mixing tensors shared by every instance: dynamics must be a pure
# function of (seed, action sequence)
_gen = np.random.default_rng(20240531)
_ACT_MIX = 0.3 * _gen.standard_normal((N_QVEL, N_ACT))
_VEL_DECAY = 0.9
_CINERT_PATTERN = 0.5 + _gen.random((len(BODY_NAMES), 10))
_CVEL_MIX = 0.1 * _gen.standard_normal((len(BODY_NAMES), 6, N_QVEL))
_CFRC_MIX = 0.05 * _gen.standard_normal((len(BODY_NAMES), 6, N_QVEL))
_GEAR = 0.5 + _gen.random(N_ACT)


class SyntheticHumanoid:
    """Drop-in adapter with the humanoid's observation geometry."""

    env_id = "SyntheticHumanoid-v0"
    body_names = BODY_NAMES
    act_dim = N_ACT
    raw_dim = RAW_DIM

    def __init__(self):
        self.default_masses = dict(DEFAULT_MASSES)
        self.masses = dict(DEFAULT_MASSES)
        self.qpos = np.zeros(N_QPOS)
        self.qvel = np.zeros(N_QVEL)
        self.last_action = np.zeros(N_ACT)
        self.step_count = 0
        self._rng = np.random.default_rng(0)

    @property
    def action_low(self) -> np.ndarray:
        return np.full(N_ACT, -0.4)

    @property
    def action_high(self) -> np.ndarray:
        return np.full(N_ACT, 0.4)

    def set_body_mass(self, body: str, scale: float) -> None:
        if body not in self.masses:
            raise KeyError(body)
        self.masses[body] = self.default_masses[body] * float(scale)

    def restore_default_masses(self) -> None:
        self.masses = dict(self.default_masses)

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        self.qpos = 0.05 * self._rng.standard_normal(N_QPOS)
        self.qpos[2] += 1.4  # nominal standing height
        self.qvel = 0.05 * self._rng.standard_normal(N_QVEL)
        self.last_action = np.zeros(N_ACT)
        self.step_count = 0
        return self._observe()

    def step(self, action) -> tuple[np.ndarray, float, bool, bool]:
        action = np.clip(np.asarray(action, dtype=np.float64), -0.4, 0.4)
        if action.shape != (N_ACT,):
            raise ValueError(f"action must have width {N_ACT}, got {action.shape}")
        self.qvel = _VEL_DECAY * self.qvel + np.tanh(_ACT_MIX @ action)
        self.qpos[1:] += 0.05 * self.qvel
        self.last_action = action
        self.step_count += 1
        reward = float(5.0 + self.qvel[0] - 0.1 * float(action @ action))
        return (
            self._observe(),
            reward,
            False,
            self.step_count >= EPISODE_LENGTH,
        )

    def _observe(self) -> np.ndarray:
        mass_vec = np.array([self.masses[b] for b in BODY_NAMES])
        cinert = np.zeros((N_BODIES_WITH_WORLD, 10))
        cinert[1:] = mass_vec[:, None] * _CINERT_PATTERN
        cvel = np.zeros((N_BODIES_WITH_WORLD, 6))
        cvel[1:] = _CVEL_MIX @ self.qvel
        qfrc = np.zeros(N_QVEL)
        qfrc[6:] = _GEAR * self.last_action
        cfrc = np.zeros((N_BODIES_WITH_WORLD, 6))
        cfrc[1:] = _CFRC_MIX @ self.qvel
        return np.concatenate(
            [
                self.qpos[2:],
                self.qvel,
                cinert.ravel(),
                cvel.ravel(),
                qfrc,
                cfrc.ravel(),
            ]
        )

    def close(self) -> None:
        pass
