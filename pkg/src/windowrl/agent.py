"""TD3 over history windows.

The agent never sees a raw observation directly: the actor and both critics
each own an independent history encoder, and every network input is an H-step
window. The replay buffer stores flat transitions and assembles windows on
demand at sampling time, so memory stays O(1) in H; window assembly never
crosses an episode boundary and pads short histories by repeating the
episode's first observation.

Update rule (one invocation of :func:`update_step` = one gradient step):
twin critics regress on a shared clipped double-Q target with smoothed target
actions; the actor and all three target networks update only every
``policy_delay`` steps.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .encoder import (
    EncoderConfig,
    EncoderParams,
    HistoryWindow,
    context_width,
    encode_backward_batch,
    encode_batch,
    encode_window,
    init_encoder,
)
from .errors import ContractViolationError
from .nn import (
    AdamState,
    MlpParams,
    MlpSpec,
    _backward_from_cache,
    _forward_cached,
    mlp_forward,
    mlp_init,
)


@dataclass
class Td3Config:
    """TD3 hyperparameters, defaults following the original configuration.

    The harness scales warmup down to 1000 for the built-in desk envs
    (see :func:`windowrl.harness.default_td3_for_env`).
    """

    discount: float = 0.99
    tau: float = 0.005
    policy_noise: float = 0.2
    noise_clip: float = 0.5
    policy_delay: int = 2
    exploration_noise: float = 0.1
    batch_size: int = 256
    warmup_steps: int = 10_000
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    buffer_capacity: int = 1_000_000
    head_hidden_widths: tuple[int, ...] = (256, 256)
    action_low: np.ndarray | None = None
    action_high: np.ndarray | None = None

    def __post_init__(self):
        if not 0.0 < self.discount < 1.0:
            raise ContractViolationError("discount must be in (0, 1)")
        if not 0.0 <= self.tau <= 1.0:
            raise ContractViolationError("tau must be in [0, 1]")
        if self.policy_delay < 1 or self.batch_size < 1 or self.buffer_capacity < 1:
            raise ContractViolationError("policy_delay/batch_size/capacity must be >= 1")
        if self.warmup_steps < 0:
            raise ContractViolationError("warmup_steps must be >= 0")
        self.head_hidden_widths = tuple(self.head_hidden_widths)
        if self.action_low is not None:
            self.action_low = np.asarray(self.action_low, dtype=np.float64)
        if self.action_high is not None:
            self.action_high = np.asarray(self.action_high, dtype=np.float64)

    def with_bounds(self, low, high) -> "Td3Config":
        return replace(self, action_low=np.asarray(low), action_high=np.asarray(high))

    @property
    def action_center(self) -> np.ndarray:
        return (self.action_high + self.action_low) / 2.0

    @property
    def action_scale(self) -> np.ndarray:
        return (self.action_high - self.action_low) / 2.0


@dataclass
class Transition:
    observation: np.ndarray
    action: np.ndarray
    reward: float
    next_observation: np.ndarray
    terminated: bool
    truncated: bool
    episode_id: int
    step_index: int


class ReplayBuffer:
    """Ring buffer of flat transitions with episode bookkeeping.

    Episode ids strictly increase over the life of a run, so an overwritten
    slot can never be mistaken for the predecessor of a surviving one: window
    assembly checks both episode id and step index when walking backwards and
    treats the first failure as the episode start (the eviction point).
    """

    def __init__(self, capacity: int, obs_dim: int, act_dim: int):
        if capacity < 1:
            raise ContractViolationError("capacity must be >= 1")
        self.capacity = capacity
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.size = 0
        self._ptr = 0
        self.obs = np.zeros((capacity, obs_dim), dtype=np.float32)
        self.next_obs = np.zeros((capacity, obs_dim), dtype=np.float32)
        self.actions = np.zeros((capacity, act_dim), dtype=np.float32)
        self.rewards = np.zeros(capacity, dtype=np.float32)
        self.terminated = np.zeros(capacity, dtype=bool)
        self.truncated = np.zeros(capacity, dtype=bool)
        self.episode_id = np.full(capacity, -1, dtype=np.int64)
        self.step_index = np.full(capacity, -1, dtype=np.int64)

    def __len__(self) -> int:
        return self.size

    def push(self, transition: Transition) -> None:
        obs = np.asarray(transition.observation, dtype=np.float32)
        nxt = np.asarray(transition.next_observation, dtype=np.float32)
        act = np.asarray(transition.action, dtype=np.float32).reshape(-1)
        if transition.episode_id < 0 or transition.step_index < 0:
            raise ContractViolationError("episode_id and step_index must be >= 0")
        if obs.shape != (self.obs_dim,) or nxt.shape != (self.obs_dim,):
            raise ContractViolationError(
                f"observation width {obs.shape}/{nxt.shape} != buffer width {self.obs_dim}"
            )
        if act.shape != (self.act_dim,):
            raise ContractViolationError(
                f"action width {act.shape} != buffer width {self.act_dim}"
            )
        i = self._ptr
        self.obs[i] = obs
        self.next_obs[i] = nxt
        self.actions[i] = act
        self.rewards[i] = transition.reward
        self.terminated[i] = transition.terminated
        self.truncated[i] = transition.truncated
        self.episode_id[i] = transition.episode_id
        self.step_index[i] = transition.step_index
        self._ptr = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def window_slots(self, indices: np.ndarray, h: int) -> tuple[np.ndarray, np.ndarray]:
        """For each stored index, the H slot indices of its window (oldest
        first) and the number of real (non-padding) rows.

        Candidate slot for offset k is (index - k) mod capacity; it belongs to
        the window only while episode id matches and step indices stay
        contiguous. Validity is monotone walking back, so padding slots simply
        repeat the earliest valid slot.
        """
        indices = np.asarray(indices, dtype=np.int64)
        offsets = np.arange(h - 1, -1, -1, dtype=np.int64)  # oldest row first
        cand = (indices[:, None] - offsets[None, :]) % self.capacity
        ep_ok = self.episode_id[cand] == self.episode_id[indices][:, None]
        step_ok = self.step_index[cand] == self.step_index[indices][:, None] - offsets[None, :]
        valid = ep_ok & step_ok
        first_valid = np.argmax(valid, axis=1)  # first True per row; col h-1 always valid
        cols = np.maximum(np.arange(h)[None, :], first_valid[:, None])
        slots = np.take_along_axis(cand, cols, axis=1)
        return slots, (h - first_valid).astype(np.int64)

    def assemble_window(self, index: int, h: int) -> tuple[HistoryWindow, HistoryWindow]:
        """The window ending at ``index`` and the shifted next-step window."""
        if not 0 <= index < self.size:
            raise ContractViolationError(f"index {index} outside buffer of size {self.size}")
        slots, valid = self.window_slots(np.array([index]), h)
        rows = self.obs[slots[0]]
        window = HistoryWindow(rows.copy(), valid_count=int(valid[0]))
        next_rows = np.vstack([rows[1:], self.next_obs[index][None, :]])
        next_window = HistoryWindow(next_rows, valid_count=int(min(valid[0] + 1, h)))
        return window, next_window

    def sample(self, rng: np.random.Generator, batch_size: int, h: int) -> dict:
        """Uniform batch with on-demand window assembly."""
        if self.size < 1:
            raise ContractViolationError("cannot sample from an empty buffer")
        idx = rng.integers(0, self.size, size=batch_size)
        slots, _ = self.window_slots(idx, h)
        windows = self.obs[slots]
        next_windows = np.concatenate(
            [windows[:, 1:, :], self.next_obs[idx][:, None, :]], axis=1
        )
        return {
            "indices": idx,
            "windows": windows,
            "actions": self.actions[idx],
            "rewards": self.rewards[idx],
            "next_windows": next_windows,
            "terminated": self.terminated[idx],
        }


# --------------------------------------------------------------------------
# networks


@dataclass
class NetParams:
    """An encoder plus its MLP head; the unit the optimizer updates."""

    encoder: EncoderParams
    head_spec: MlpSpec
    head: MlpParams

    def arrays(self) -> list[np.ndarray]:
        return self.encoder.arrays() + self.head.arrays()

    def replace_arrays(self, arrays: Sequence[np.ndarray]) -> "NetParams":
        k = len(self.encoder.arrays())
        return NetParams(
            encoder=self.encoder.replace_arrays(arrays[:k]),
            head_spec=self.head_spec,
            head=MlpParams.from_arrays(arrays[k:]),
        )

    def copy(self) -> "NetParams":
        return self.replace_arrays([a.copy() for a in self.arrays()])

    def astype(self, dtype) -> "NetParams":
        return NetParams(
            encoder=self.encoder.astype(dtype),
            head_spec=self.head_spec,
            head=self.head.astype(dtype),
        )


@dataclass
class UpdateDiagnostics:
    updated: bool
    reason: str = ""
    critic_loss: float = float("nan")
    actor_loss: float | None = None
    actor_updated: bool = False


@dataclass
class Td3Bundle:
    """Actor, twin critics, their targets, optimizer state, update counter."""

    config: Td3Config
    encoder_config: EncoderConfig
    obs_dim: int
    act_dim: int
    actor: NetParams
    critic1: NetParams
    critic2: NetParams
    target_actor: NetParams
    target_critic1: NetParams
    target_critic2: NetParams
    adam_actor: AdamState
    adam_critic1: AdamState
    adam_critic2: AdamState
    update_count: int = 0

    @property
    def window_length(self) -> int:
        return self.encoder_config.window_length


def init_bundle(
    obs_dim: int,
    act_dim: int,
    encoder_config: EncoderConfig,
    config: Td3Config,
    seed: int,
    dtype=np.float32,
) -> Td3Bundle:
    """Seed-deterministic bundle; targets start as exact copies."""
    if config.action_low is None or config.action_high is None:
        raise ContractViolationError("config needs action bounds before init_bundle")
    child = np.random.SeedSequence(seed).generate_state(6)

    def make_net(s0: int, s1: int, head_in_extra: int, head_out: int, out_act: str) -> NetParams:
        enc = init_encoder(encoder_config, obs_dim, int(s0), dtype=dtype)
        c = context_width(encoder_config, enc)
        head_spec = MlpSpec(
            (c + head_in_extra,) + config.head_hidden_widths + (head_out,),
            output_activation=out_act,
        )
        return NetParams(encoder=enc, head_spec=head_spec, head=mlp_init(head_spec, int(s1), dtype=dtype))

    actor = make_net(child[0], child[1], 0, act_dim, "tanh")
    critic1 = make_net(child[2], child[3], act_dim, 1, "identity")
    critic2 = make_net(child[4], child[5], act_dim, 1, "identity")
    return Td3Bundle(
        config=config,
        encoder_config=encoder_config,
        obs_dim=obs_dim,
        act_dim=act_dim,
        actor=actor,
        critic1=critic1,
        critic2=critic2,
        target_actor=actor.copy(),
        target_critic1=critic1.copy(),
        target_critic2=critic2.copy(),
        adam_actor=AdamState.for_arrays(actor.arrays(), learning_rate=config.actor_lr),
        adam_critic1=AdamState.for_arrays(critic1.arrays(), learning_rate=config.critic_lr),
        adam_critic2=AdamState.for_arrays(critic2.arrays(), learning_rate=config.critic_lr),
    )


def _actor_batch(
    net: NetParams, enc_cfg: EncoderConfig, windows: np.ndarray
) -> tuple[np.ndarray, tuple]:
    """Raw (tanh) actor outputs for a window batch, with backward caches."""
    ctx, enc_cache = encode_batch(net.encoder, enc_cfg, windows)
    raw, head_cache = _forward_cached(net.head, net.head_spec, ctx)
    return raw, (enc_cache, head_cache)


def _actor_backward(
    net: NetParams,
    enc_cfg: EncoderConfig,
    caches: tuple,
    d_raw: np.ndarray,
) -> list[np.ndarray]:
    enc_cache, head_cache = caches
    head_grads, dctx = _backward_from_cache(net.head, net.head_spec, head_cache, d_raw)
    enc_grads, _ = encode_backward_batch(net.encoder, enc_cfg, enc_cache, dctx)
    return enc_grads + head_grads.arrays()


def _critic_batch(
    net: NetParams, enc_cfg: EncoderConfig, windows: np.ndarray, actions: np.ndarray
) -> tuple[np.ndarray, tuple]:
    """Q-values (B,) for (window, action) pairs, with backward caches."""
    ctx, enc_cache = encode_batch(net.encoder, enc_cfg, windows)
    joined = np.concatenate([ctx, actions.astype(ctx.dtype, copy=False)], axis=1)
    q, head_cache = _forward_cached(net.head, net.head_spec, joined)
    return q[:, 0], (enc_cache, head_cache, ctx.shape[1])


def _critic_backward(
    net: NetParams,
    enc_cfg: EncoderConfig,
    caches: tuple,
    dq: np.ndarray,
) -> tuple[list[np.ndarray], np.ndarray]:
    """Returns (parameter gradients, gradient w.r.t. the action input)."""
    enc_cache, head_cache, c = caches
    head_grads, djoined = _backward_from_cache(
        net.head, net.head_spec, head_cache, dq[:, None]
    )
    dctx, dact = djoined[:, :c], djoined[:, c:]
    enc_grads, _ = encode_backward_batch(net.encoder, enc_cfg, enc_cache, dctx)
    return enc_grads + head_grads.arrays(), dact


def _scale_actions(config: Td3Config, raw: np.ndarray) -> np.ndarray:
    center = config.action_center.astype(raw.dtype)
    scale = config.action_scale.astype(raw.dtype)
    return center + scale * raw


def select_action(
    bundle: Td3Bundle,
    window: HistoryWindow,
    explore: bool,
    rng: np.random.Generator,
) -> np.ndarray:
    """Deterministic policy action, plus scaled Gaussian noise when exploring.

    Exploration noise has standard deviation exploration_noise * action_scale
    per component; the result is always clamped to the action bounds.
    """
    cfg = bundle.config
    ctx = encode_window(bundle.actor.encoder, bundle.encoder_config, window)
    raw = mlp_forward(bundle.actor.head, bundle.actor.head_spec, ctx)
    action = _scale_actions(cfg, raw).astype(np.float64)
    if explore:
        noise = rng.normal(0.0, 1.0, size=action.shape) * (
            cfg.exploration_noise * cfg.action_scale
        )
        action = action + noise
    return np.clip(action, cfg.action_low, cfg.action_high)


def _target_batch(
    bundle: Td3Bundle,
    config: Td3Config,
    next_windows: np.ndarray,
    rewards: np.ndarray,
    terminated: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Clipped double-Q targets with target-policy smoothing.

    Smoothing noise is Normal(0, policy_noise) in raw action units, clamped
    to +-noise_clip, added to the target actor's action and re-clamped to the
    action bounds. Termination zeroes the bootstrap; truncation does not.
    """
    raw_t, _ = _actor_batch(bundle.target_actor, bundle.encoder_config, next_windows)
    actions_t = _scale_actions(config, raw_t).astype(np.float64)
    noise = np.clip(
        rng.normal(0.0, 1.0, size=actions_t.shape) * config.policy_noise,
        -config.noise_clip,
        config.noise_clip,
    )
    smoothed = np.clip(actions_t + noise, config.action_low, config.action_high)
    smoothed = smoothed.astype(raw_t.dtype)
    q1, _ = _critic_batch(bundle.target_critic1, bundle.encoder_config, next_windows, smoothed)
    q2, _ = _critic_batch(bundle.target_critic2, bundle.encoder_config, next_windows, smoothed)
    bootstrap = np.minimum(q1, q2)
    not_done = 1.0 - terminated.astype(bootstrap.dtype)
    return (
        rewards.astype(bootstrap.dtype)
        + config.discount * not_done * bootstrap
    )


def compute_critic_target(
    bundle: Td3Bundle,
    config: Td3Config,
    next_window: HistoryWindow,
    reward: float,
    terminated: bool,
    rng: np.random.Generator,
) -> float:
    """Scalar regression target for one transition."""
    y = _target_batch(
        bundle,
        config,
        next_window.observations[None, :, :],
        np.array([reward]),
        np.array([terminated]),
        rng,
    )
    return float(y[0])


def critic_loss_and_grads(
    net: NetParams,
    enc_cfg: EncoderConfig,
    windows: np.ndarray,
    actions: np.ndarray,
    targets: np.ndarray,
) -> tuple[float, list[np.ndarray]]:
    """Mean-squared TD error for one critic and its exact gradients."""
    q, caches = _critic_batch(net, enc_cfg, windows, actions)
    err = q - targets.astype(q.dtype)
    loss = float(np.mean(err * err))
    dq = (2.0 / err.shape[0]) * err
    grads, _ = _critic_backward(net, enc_cfg, caches, dq)
    return loss, grads


def actor_loss_and_grads(
    actor: NetParams,
    critic: NetParams,
    enc_cfg: EncoderConfig,
    config: Td3Config,
    windows: np.ndarray,
) -> tuple[float, list[np.ndarray]]:
    """Deterministic policy-gradient loss -mean Q(window, actor(window)).

    Gradients flow through the critic's action input only; the critic's own
    parameters stay fixed.
    """
    raw, actor_caches = _actor_batch(actor, enc_cfg, windows)
    actions = _scale_actions(config, raw)
    q, critic_caches = _critic_batch(critic, enc_cfg, windows, actions)
    loss = float(-np.mean(q))
    b = q.shape[0]
    dq = np.full(b, -1.0 / b, dtype=q.dtype)
    _, dact = _critic_backward(critic, enc_cfg, critic_caches, dq)
    d_raw = dact * config.action_scale.astype(dact.dtype)
    grads = _actor_backward(actor, enc_cfg, actor_caches, d_raw)
    return loss, grads


def _flatten(arrays: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate([np.ravel(a) for a in arrays])


def _split_like(flat: np.ndarray, arrays: Sequence[np.ndarray]) -> list[np.ndarray]:
    out, offset = [], 0
    for a in arrays:
        out.append(flat[offset : offset + a.size].reshape(a.shape))
        offset += a.size
    return out


def _adam_step_flat(
    arrays: list[np.ndarray], grads: list[np.ndarray], state: AdamState
) -> tuple[list[np.ndarray], AdamState]:
    """Hot-loop Adam over one fused buffer; element-wise identical to
    :func:`windowrl.nn.adam_step` (asserted in the tests)."""
    p = _flatten(arrays)
    g = _flatten(grads)
    m = _flatten(state.m)
    v = _flatten(state.v)
    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    m = b1 * m + (1.0 - b1) * g
    v = b2 * v + (1.0 - b2) * (g * g)
    m_hat = m / (1.0 - b1**t)
    v_hat = v / (1.0 - b2**t)
    p = p - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    new_state = AdamState(
        m=_split_like(m, arrays),
        v=_split_like(v, arrays),
        step_count=t,
        learning_rate=state.learning_rate,
        beta1=b1,
        beta2=b2,
        epsilon=state.epsilon,
    )
    return _split_like(p, arrays), new_state


def _polyak_flat(
    target: list[np.ndarray], source: list[np.ndarray], tau: float
) -> list[np.ndarray]:
    t = _flatten(target)
    s = _flatten(source)
    mixed = tau * s + (1.0 - tau) * t
    return _split_like(mixed, target)


def update_step(
    bundle: Td3Bundle,
    buffer: ReplayBuffer,
    config: Td3Config,
    rng: np.random.Generator,
) -> UpdateDiagnostics:
    """One TD3 gradient step; mutates the bundle in place.

    Both critics take an Adam step every call. On every ``policy_delay``-th
    call the actor takes its step and all three targets move by polyak
    averaging. With fewer than batch_size stored transitions this is an
    explicit no-op.
    """
    if buffer.size < config.batch_size:
        return UpdateDiagnostics(updated=False, reason="insufficient_buffer")
    batch = buffer.sample(rng, config.batch_size, bundle.window_length)
    y = _target_batch(
        bundle, config, batch["next_windows"], batch["rewards"], batch["terminated"], rng
    )

    losses = []
    for name in ("critic1", "critic2"):
        net: NetParams = getattr(bundle, name)
        adam: AdamState = getattr(bundle, "adam_" + name)
        loss, grads = critic_loss_and_grads(
            net, bundle.encoder_config, batch["windows"], batch["actions"], y
        )
        new_arrays, new_adam = _adam_step_flat(net.arrays(), grads, adam)
        setattr(bundle, name, net.replace_arrays(new_arrays))
        setattr(bundle, "adam_" + name, new_adam)
        losses.append(loss)

    bundle.update_count += 1
    diag = UpdateDiagnostics(updated=True, critic_loss=float(np.mean(losses)))

    if bundle.update_count % config.policy_delay == 0:
        actor_loss, grads = actor_loss_and_grads(
            bundle.actor, bundle.critic1, bundle.encoder_config, config, batch["windows"]
        )
        new_arrays, new_adam = _adam_step_flat(bundle.actor.arrays(), grads, bundle.adam_actor)
        bundle.actor = bundle.actor.replace_arrays(new_arrays)
        bundle.adam_actor = new_adam
        diag.actor_loss = actor_loss
        diag.actor_updated = True
        for online, target in (
            ("actor", "target_actor"),
            ("critic1", "target_critic1"),
            ("critic2", "target_critic2"),
        ):
            src: NetParams = getattr(bundle, online)
            tgt: NetParams = getattr(bundle, target)
            mixed = _polyak_flat(tgt.arrays(), src.arrays(), config.tau)
            setattr(bundle, target, tgt.replace_arrays(mixed))
    return diag
