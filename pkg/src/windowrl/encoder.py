"""History-window encoders.

The main encoder turns a fixed-length window of the H most recent
observations into a context vector by applying one shared embedding MLP to
every step independently (an order-free computation), concatenating the
per-step embeddings oldest-to-newest, and mapping the concatenation through a
combiner MLP. Because the embedding never looks at neighbouring steps, all H
embeddings can be computed in parallel; temporal position is carried purely
by the slot each embedding occupies in the concatenation.

A minimal gated-recurrent (GRU) encoder is included as the sequential
baseline, and ``variant="none"`` passes the current observation through
untouched for memoryless runs.

All encoders come with exact reverse-mode gradients, verified against the
finite-difference oracle in :mod:`windowrl.nn`.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import ContractViolationError
from .nn import (
    MlpParams,
    MlpSpec,
    _backward_from_cache,
    _forward_cached,
    mlp_forward,
    mlp_init,
)

VARIANTS = ("parallel", "recurrent", "none")


@dataclass(frozen=True)
class EncoderConfig:
    """Shape of the history encoder.

    window_length: H, how many past observations each window holds.
    per_step_embed_width: d, output width of the shared per-step embedding.
    combiner_hidden_widths: hidden widths of the combiner MLP.
    context_width: c, width of the produced context vector.
    variant: "parallel", "recurrent" (GRU baseline) or "none" (raw
        observation; forces H = 1 and context_width = observation width).
    """

    window_length: int = 5
    per_step_embed_width: int = 64
    combiner_hidden_widths: tuple[int, ...] = (128,)
    context_width: int = 128
    variant: str = "parallel"

    def __post_init__(self):
        object.__setattr__(
            self, "combiner_hidden_widths", tuple(self.combiner_hidden_widths)
        )
        if self.variant not in VARIANTS:
            raise ContractViolationError(f"variant must be one of {VARIANTS}")
        if self.window_length < 1:
            raise ContractViolationError("window_length must be >= 1")
        if self.variant == "none" and self.window_length != 1:
            raise ContractViolationError('variant "none" forces window_length = 1')
        if self.per_step_embed_width < 1 or self.context_width < 1:
            raise ContractViolationError("widths must be >= 1")


@dataclass
class HistoryWindow:
    """H observations, oldest row first, with padding metadata.

    The trailing ``valid_count`` rows are real observations from the current
    episode; every earlier row repeats the episode's first observation (the
    padding rule used before H real steps exist).
    """

    observations: np.ndarray  # (H, n)
    valid_count: int

    def __post_init__(self):
        obs = np.asarray(self.observations)
        if obs.ndim != 2:
            raise ContractViolationError("window observations must be (H, n)")
        h = obs.shape[0]
        if not 1 <= self.valid_count <= h:
            raise ContractViolationError(
                f"valid_count {self.valid_count} outside [1, {h}]"
            )
        if not np.all(np.isfinite(obs)):
            raise ContractViolationError("window contains non-finite values")
        pad = h - self.valid_count
        if pad > 0 and not np.array_equal(obs[:pad], np.tile(obs[pad], (pad, 1))):
            raise ContractViolationError(
                "padding rows must repeat the first valid observation"
            )
        self.observations = obs

    @property
    def length(self) -> int:
        return self.observations.shape[0]

    @property
    def obs_width(self) -> int:
        return self.observations.shape[1]

    @staticmethod
    def start(first_obs: np.ndarray, h: int) -> "HistoryWindow":
        """Window at the first step of an episode: H copies of the first obs."""
        first_obs = np.asarray(first_obs)
        return HistoryWindow(np.tile(first_obs, (h, 1)), valid_count=1)

    def advance(self, obs: np.ndarray) -> "HistoryWindow":
        """Shift the window one step, appending the new observation."""
        rows = np.vstack([self.observations[1:], np.asarray(obs)[None, :]])
        return HistoryWindow(rows, valid_count=min(self.valid_count + 1, self.length))


# --------------------------------------------------------------------------
# parameter containers


@dataclass
class ParallelEncoderParams:
    """Shared per-step embedding MLP plus the combiner MLP."""

    embed_spec: MlpSpec
    embed: MlpParams
    combiner_spec: MlpSpec
    combiner: MlpParams

    def arrays(self) -> list[np.ndarray]:
        return self.embed.arrays() + self.combiner.arrays()

    def replace_arrays(self, arrays: Sequence[np.ndarray]) -> "ParallelEncoderParams":
        k = 2 * self.embed_spec.n_layers
        return replace(
            self,
            embed=MlpParams.from_arrays(arrays[:k]),
            combiner=MlpParams.from_arrays(arrays[k:]),
        )

    def astype(self, dtype) -> "ParallelEncoderParams":
        return replace(self, embed=self.embed.astype(dtype), combiner=self.combiner.astype(dtype))


_GRU_FIELDS = (
    "w_update", "u_update", "b_update",
    "w_reset", "u_reset", "b_reset",
    "w_cand", "u_cand", "b_cand",
)


@dataclass
class GruParams:
    """Single-layer gated recurrent unit.

    Gate equations, processed oldest-to-newest from a zero initial hidden
    state (h is the context after the final step):

        z = sigmoid(w_update x + u_update h + b_update)
        r = sigmoid(w_reset  x + u_reset  h + b_reset)
        cand = tanh(w_cand x + u_cand (r * h) + b_cand)
        h' = (1 - z) * cand + z * h
    """

    w_update: np.ndarray
    u_update: np.ndarray
    b_update: np.ndarray
    w_reset: np.ndarray
    u_reset: np.ndarray
    b_reset: np.ndarray
    w_cand: np.ndarray
    u_cand: np.ndarray
    b_cand: np.ndarray

    def arrays(self) -> list[np.ndarray]:
        return [getattr(self, f) for f in _GRU_FIELDS]

    def replace_arrays(self, arrays: Sequence[np.ndarray]) -> "GruParams":
        return GruParams(*[np.asarray(a) for a in arrays])

    def astype(self, dtype) -> "GruParams":
        return GruParams(*[a.astype(dtype) for a in self.arrays()])

    @property
    def hidden_width(self) -> int:
        return self.w_update.shape[0]

    @property
    def input_width(self) -> int:
        return self.w_update.shape[1]


@dataclass
class RawEncoderParams:
    """No parameters: the context is the current observation."""

    obs_width: int

    def arrays(self) -> list[np.ndarray]:
        return []

    def replace_arrays(self, arrays: Sequence[np.ndarray]) -> "RawEncoderParams":
        if len(arrays) != 0:
            raise ContractViolationError("raw encoder has no parameter arrays")
        return self

    def astype(self, dtype) -> "RawEncoderParams":
        return self


EncoderParams = ParallelEncoderParams | GruParams | RawEncoderParams


def init_encoder(
    config: EncoderConfig, obs_width: int, seed: int, dtype=np.float32
) -> EncoderParams:
    """Seed-deterministic encoder parameters for the given observation width."""
    if config.variant == "none":
        if config.context_width != obs_width:
            raise ContractViolationError(
                'variant "none" requires context_width == observation width '
                f"({config.context_width} != {obs_width})"
            )
        return RawEncoderParams(obs_width=obs_width)
    if config.variant == "parallel":
        d = config.per_step_embed_width
        embed_spec = MlpSpec((obs_width, d, d))
        combiner_spec = MlpSpec(
            (config.window_length * d,)
            + config.combiner_hidden_widths
            + (config.context_width,)
        )
        return ParallelEncoderParams(
            embed_spec=embed_spec,
            embed=mlp_init(embed_spec, seed, dtype=dtype),
            combiner_spec=combiner_spec,
            combiner=mlp_init(combiner_spec, seed + 1, dtype=dtype),
        )
    # recurrent
    c = config.context_width
    rng = np.random.default_rng(seed)
    def mat(rows, cols):
        bound = np.sqrt(6.0 / (rows + cols))
        return rng.uniform(-bound, bound, size=(rows, cols)).astype(dtype)
    arrays = []
    for _ in range(3):  # update, reset, candidate
        arrays.append(mat(c, obs_width))
        arrays.append(mat(c, c))
        arrays.append(np.zeros(c, dtype=dtype))
    return GruParams(*arrays)


def context_width(config: EncoderConfig, params: EncoderParams) -> int:
    if isinstance(params, RawEncoderParams):
        return params.obs_width
    return config.context_width


# --------------------------------------------------------------------------
# forward passes


def _check_window_shape(config: EncoderConfig, params: EncoderParams, obs: np.ndarray):
    if obs.shape[-2] != config.window_length:
        raise ContractViolationError(
            f"window has {obs.shape[-2]} rows, config wants {config.window_length}"
        )
    if isinstance(params, ParallelEncoderParams):
        want = params.embed_spec.input_width
    elif isinstance(params, GruParams):
        want = params.input_width
    else:
        want = params.obs_width
    if obs.shape[-1] != want:
        raise ContractViolationError(
            f"observation width {obs.shape[-1]} != encoder input width {want}"
        )


def encode_window(
    params: EncoderParams, config: EncoderConfig, window: HistoryWindow
) -> np.ndarray:
    """Context vector for one window.

    For the parallel variant each row is embedded by its own independent
    forward pass (the loop order is irrelevant to the result — see the
    order-invariance test), then the combiner consumes the concatenation.
    """
    _check_window_shape(config, params, window.observations)
    obs = window.observations
    if isinstance(params, RawEncoderParams):
        return obs[-1].copy()
    if isinstance(params, GruParams):
        return recurrent_encode(params, window)
    embeds = [mlp_forward(params.embed, params.embed_spec, row) for row in obs]
    concat = np.concatenate(embeds)
    return mlp_forward(params.combiner, params.combiner_spec, concat)


def encode_batch(
    params: EncoderParams, config: EncoderConfig, windows: np.ndarray
) -> tuple[np.ndarray, object]:
    """Batched windows (B, H, n) -> contexts (B, c) plus a backward cache."""
    windows = np.asarray(windows)
    _check_window_shape(config, params, windows)
    b, h, n = windows.shape
    if isinstance(params, RawEncoderParams):
        return windows[:, -1, :].copy(), None
    if isinstance(params, GruParams):
        return _gru_forward(params, windows)
    flat = windows.reshape(b * h, n).astype(params.embed.dtype, copy=False)
    emb, embed_cache = _forward_cached(params.embed, params.embed_spec, flat)
    concat = emb.reshape(b, h * emb.shape[-1])
    ctx, comb_cache = _forward_cached(params.combiner, params.combiner_spec, concat)
    return ctx, (embed_cache, comb_cache, (b, h, n))


def encode_backward_batch(
    params: EncoderParams,
    config: EncoderConfig,
    cache: object,
    upstream: np.ndarray,
) -> tuple[list[np.ndarray], np.ndarray]:
    """Gradients for a batch produced by :func:`encode_batch`.

    Returns (per-array parameter gradients aligned with ``params.arrays()``,
    window gradients (B, H, n)). The shared embedding's gradient is the sum
    of its per-step, per-sample contributions.
    """
    if isinstance(params, RawEncoderParams):
        b, c = upstream.shape
        dwin = np.zeros((b, 1, c), dtype=upstream.dtype)
        dwin[:, -1, :] = upstream
        return [], dwin
    if isinstance(params, GruParams):
        return _gru_backward(params, cache, upstream)
    embed_cache, comb_cache, (b, h, n) = cache
    comb_grads, dconcat = _backward_from_cache(
        params.combiner, params.combiner_spec, comb_cache, upstream
    )
    d = params.embed_spec.output_width
    demb = dconcat.reshape(b * h, d)
    embed_grads, dflat = _backward_from_cache(
        params.embed, params.embed_spec, embed_cache, demb
    )
    return embed_grads.arrays() + comb_grads.arrays(), dflat.reshape(b, h, n)


def encode_backward(
    params: EncoderParams,
    config: EncoderConfig,
    window: HistoryWindow,
    upstream: np.ndarray,
) -> tuple[list[np.ndarray], np.ndarray]:
    """Exact reverse-mode gradients for one window.

    Returns (parameter gradient arrays aligned with ``params.arrays()``,
    gradient with respect to the window rows, shape (H, n)).
    """
    _check_window_shape(config, params, window.observations)
    upstream = np.asarray(upstream)
    want_c = context_width(config, params)
    if upstream.shape != (want_c,):
        raise ContractViolationError(
            f"upstream shape {upstream.shape} != ({want_c},)"
        )
    _, cache = encode_batch(params, config, window.observations[None, :, :])
    grads, dwin = encode_backward_batch(params, config, cache, upstream[None, :])
    return grads, dwin[0]


# --------------------------------------------------------------------------
# recurrent baseline


def _gru_forward(params: GruParams, windows: np.ndarray) -> tuple[np.ndarray, object]:
    b, h, _ = windows.shape
    c = params.hidden_width
    dtype = params.w_update.dtype
    windows = windows.astype(dtype, copy=False)
    hid = np.zeros((b, c), dtype=dtype)
    steps = []
    for t in range(h):
        x = windows[:, t, :]
        z = _sigmoid(x @ params.w_update.T + hid @ params.u_update.T + params.b_update)
        r = _sigmoid(x @ params.w_reset.T + hid @ params.u_reset.T + params.b_reset)
        rh = r * hid
        cand = np.tanh(x @ params.w_cand.T + rh @ params.u_cand.T + params.b_cand)
        new_h = (1.0 - z) * cand + z * hid
        steps.append((x, hid, z, r, rh, cand))
        hid = new_h
    return hid, steps


def _gru_backward(
    params: GruParams, steps: list, upstream: np.ndarray
) -> tuple[list[np.ndarray], np.ndarray]:
    grads = [np.zeros_like(a) for a in params.arrays()]
    (d_wz, d_uz, d_bz, d_wr, d_ur, d_br, d_wc, d_uc, d_bc) = grads
    b = upstream.shape[0]
    h = len(steps)
    n = params.input_width
    dwin = np.zeros((b, h, n), dtype=params.w_update.dtype)
    dh = upstream.astype(params.w_update.dtype, copy=True)
    for t in range(h - 1, -1, -1):
        x, h_prev, z, r, rh, cand = steps[t]
        dz = dh * (h_prev - cand) * z * (1.0 - z)
        dcand = dh * (1.0 - z) * (1.0 - cand * cand)
        drh = dcand @ params.u_cand
        dr = drh * h_prev * r * (1.0 - r)

        d_wz += dz.T @ x
        d_uz += dz.T @ h_prev
        d_bz += dz.sum(axis=0)
        d_wr += dr.T @ x
        d_ur += dr.T @ h_prev
        d_br += dr.sum(axis=0)
        d_wc += dcand.T @ x
        d_uc += dcand.T @ rh
        d_bc += dcand.sum(axis=0)

        dwin[:, t, :] = dz @ params.w_update + dr @ params.w_reset + dcand @ params.w_cand
        dh = (
            dh * z
            + dz @ params.u_update
            + dr @ params.u_reset
            + drh * r
        )
    return grads, dwin


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def recurrent_encode(params: GruParams, window: HistoryWindow) -> np.ndarray:
    """GRU context for one window, processed oldest-to-newest.

    Padding rows are processed like real rows; the context is the final
    hidden state.
    """
    ctx, _ = _gru_forward(params, window.observations[None, :, :])
    return ctx[0]
