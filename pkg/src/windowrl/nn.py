"""Dense feed-forward networks with exact analytic gradients.

Everything here is plain numpy: small fixed MLP architectures, reverse-mode
gradients written out by hand, an Adam optimizer, polyak averaging for target
networks, and a central finite-difference oracle used by the test suite to
verify the analytic gradients. There is no autodiff graph; the architectures
are exactly the ones the agent needs.

Training numerics run in single precision; the gradient-check suite casts
parameters to float64 and runs the identical code path in double precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ContractViolationError

HIDDEN_ACTIVATIONS = ("relu", "tanh")
OUTPUT_ACTIVATIONS = ("identity", "tanh")


@dataclass(frozen=True)
class MlpSpec:
    """Architecture of a dense network: layer widths plus activations.

    ``layer_widths`` lists every layer width, input first and output last,
    so a spec with k entries has k-1 weight matrices.
    """

    layer_widths: tuple[int, ...]
    hidden_activation: str = "relu"
    output_activation: str = "identity"

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 2:
            raise ContractViolationError(
                f"MlpSpec needs at least input and output widths, got {widths}"
            )
        if any(w < 1 for w in widths):
            raise ContractViolationError(f"all layer widths must be >= 1, got {widths}")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ContractViolationError(
                f"hidden_activation must be one of {HIDDEN_ACTIVATIONS}"
            )
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ContractViolationError(
                f"output_activation must be one of {OUTPUT_ACTIVATIONS}"
            )

    @property
    def input_width(self) -> int:
        return self.layer_widths[0]

    @property
    def output_width(self) -> int:
        return self.layer_widths[-1]

    @property
    def n_layers(self) -> int:
        return len(self.layer_widths) - 1


@dataclass
class MlpParams:
    """Weights (out x in) and biases (out,) for each layer of an MlpSpec."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def arrays(self) -> list[np.ndarray]:
        """Flat [W0, b0, W1, b1, ...] view used by the optimizer and oracle."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    @staticmethod
    def from_arrays(arrays: Sequence[np.ndarray]) -> "MlpParams":
        if len(arrays) % 2 != 0:
            raise ContractViolationError("expected alternating weight/bias arrays")
        return MlpParams(
            weights=[np.asarray(a) for a in arrays[0::2]],
            biases=[np.asarray(a) for a in arrays[1::2]],
        )

    def copy(self) -> "MlpParams":
        return MlpParams(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )

    def astype(self, dtype) -> "MlpParams":
        return MlpParams(
            weights=[w.astype(dtype) for w in self.weights],
            biases=[b.astype(dtype) for b in self.biases],
        )

    @property
    def dtype(self):
        return self.weights[0].dtype


def mlp_init(spec: MlpSpec, seed: int, dtype=np.float32) -> MlpParams:
    """Seed-deterministic initialization.

    Weights are uniform in +-sqrt(6 / (fan_in + fan_out)), biases are zero.
    The same (spec, seed) always produces bit-identical parameters.
    """
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(spec.layer_widths[:-1], spec.layer_widths[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in)).astype(dtype)
        weights.append(w)
        biases.append(np.zeros(fan_out, dtype=dtype))
    return MlpParams(weights=weights, biases=biases)


def _check_params(params: MlpParams, spec: MlpSpec) -> None:
    if len(params.weights) != spec.n_layers or len(params.biases) != spec.n_layers:
        raise ContractViolationError(
            f"params have {len(params.weights)} layers, spec has {spec.n_layers}"
        )
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        want = (spec.layer_widths[i + 1], spec.layer_widths[i])
        if w.shape != want or b.shape != (want[0],):
            raise ContractViolationError(
                f"layer {i}: weight {w.shape} / bias {b.shape}, expected {want}"
            )


def _apply_hidden(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0)
    return np.tanh(z)


def _forward_cached(
    params: MlpParams, spec: MlpSpec, x: np.ndarray
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Forward pass keeping per-layer inputs and preactivations for backward.

    ``x`` may be a single vector (n,) or a batch (B, n). The cache holds
    [input, z0, a0, z1, a1, ..., z_last] where a_i are post-activation hidden
    outputs; it is consumed by ``_backward_from_cache``.
    """
    cache = [x]
    h = x
    n = spec.n_layers
    for i in range(n):
        z = h @ params.weights[i].T + params.biases[i]
        cache.append(z)
        if i < n - 1:
            h = _apply_hidden(z, spec.hidden_activation)
            cache.append(h)
        else:
            if spec.output_activation == "tanh":
                h = np.tanh(z)
            else:
                h = z
    return h, cache


def mlp_forward(params: MlpParams, spec: MlpSpec, x: np.ndarray) -> np.ndarray:
    """Affine + activation composition. Accepts (n,) or (B, n) input."""
    _check_params(params, spec)
    x = np.asarray(x, dtype=params.dtype)
    if x.shape[-1] != spec.input_width:
        raise ContractViolationError(
            f"input width {x.shape[-1]} != spec input width {spec.input_width}"
        )
    y, _ = _forward_cached(params, spec, x)
    return y


def _backward_from_cache(
    params: MlpParams,
    spec: MlpSpec,
    cache: list[np.ndarray],
    upstream: np.ndarray,
) -> tuple[MlpParams, np.ndarray]:
    """Reverse-mode gradients given a forward cache.

    Returns gradients with the same structure as the parameters plus the
    gradient with respect to the network input. Batched inputs sum parameter
    gradients over the batch.
    """
    n = spec.n_layers
    z_last = cache[1 + 2 * (n - 1)]
    if spec.output_activation == "tanh":
        t = np.tanh(z_last)
        delta = upstream * (1.0 - t * t)
    else:
        delta = upstream

    grad_w: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    grad_b: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    batched = cache[0].ndim == 2
    for i in range(n - 1, -1, -1):
        layer_in = cache[0] if i == 0 else cache[2 * i]
        if batched:
            grad_w[i] = delta.T @ layer_in
            grad_b[i] = delta.sum(axis=0)
        else:
            grad_w[i] = np.outer(delta, layer_in)
            grad_b[i] = delta.copy()
        din = delta @ params.weights[i]
        if i > 0:
            z_prev = cache[2 * i - 1]
            if spec.hidden_activation == "relu":
                din = din * (z_prev > 0)
            else:
                t = np.tanh(z_prev)
                din = din * (1.0 - t * t)
        delta = din
    return MlpParams(weights=grad_w, biases=grad_b), delta


def mlp_backward(
    params: MlpParams, spec: MlpSpec, x: np.ndarray, upstream: np.ndarray
) -> tuple[MlpParams, np.ndarray]:
    """Exact gradients of the forward map contracted with ``upstream``.

    Returns (parameter gradients, input gradient). ``upstream`` must have the
    output width; for batched input it must be (B, out).
    """
    _check_params(params, spec)
    x = np.asarray(x, dtype=params.dtype)
    upstream = np.asarray(upstream, dtype=params.dtype)
    if x.shape[-1] != spec.input_width:
        raise ContractViolationError(
            f"input width {x.shape[-1]} != spec input width {spec.input_width}"
        )
    if upstream.shape != x.shape[:-1] + (spec.output_width,):
        raise ContractViolationError(
            f"upstream shape {upstream.shape} incompatible with input {x.shape} "
            f"and output width {spec.output_width}"
        )
    _, cache = _forward_cached(params, spec, x)
    return _backward_from_cache(params, spec, cache, upstream)


def finite_diff_gradients(
    function: Callable[[list[np.ndarray]], float],
    arrays: Sequence[np.ndarray],
    epsilon: float,
) -> list[np.ndarray]:
    """Central-difference gradient oracle: (f(p+eps) - f(p-eps)) / (2 eps).

    ``function`` maps a list of arrays to a scalar. Perturbations happen one
    element at a time, so this is O(#params) function evaluations each way —
    strictly a verification tool. The perturbed copies keep the arrays' dtype.
    """
    if epsilon <= 0:
        raise ContractViolationError("epsilon must be positive")
    base = [np.array(a, copy=True) for a in arrays]
    grads = []
    for k, arr in enumerate(base):
        g = np.zeros_like(arr, dtype=np.float64)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + epsilon
            f_plus = function(base)
            flat[j] = orig - epsilon
            f_minus = function(base)
            flat[j] = orig
            gflat[j] = (float(f_plus) - float(f_minus)) / (2.0 * epsilon)
        grads.append(g.astype(arr.dtype))
    return grads


@dataclass
class AdamState:
    """First/second moment accumulators over a flat list of parameter arrays."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    step_count: int = 0
    learning_rate: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @staticmethod
    def for_arrays(arrays: Sequence[np.ndarray], learning_rate: float = 3e-4) -> "AdamState":
        return AdamState(
            m=[np.zeros_like(a) for a in arrays],
            v=[np.zeros_like(a) for a in arrays],
            learning_rate=learning_rate,
        )


def adam_step(
    params: MlpParams | Sequence[np.ndarray],
    gradients: MlpParams | Sequence[np.ndarray],
    state: AdamState,
) -> tuple[MlpParams | list[np.ndarray], AdamState]:
    """One Adam update with bias correction. Returns new params and state.

    Accepts either MlpParams or a flat sequence of arrays; the return value
    mirrors the input structure. Zero gradients leave parameters unchanged
    (the moments still decay / update and the step count still increments).
    """
    structured = isinstance(params, MlpParams)
    p_arrays = params.arrays() if structured else list(params)
    g_arrays = gradients.arrays() if isinstance(gradients, MlpParams) else list(gradients)
    if len(p_arrays) != len(g_arrays) or len(p_arrays) != len(state.m):
        raise ContractViolationError("params / gradients / state lengths differ")
    for p, g in zip(p_arrays, g_arrays):
        if p.shape != g.shape:
            raise ContractViolationError(f"gradient shape {g.shape} != param {p.shape}")

    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(p_arrays, g_arrays, state.m, state.v):
        g = g.astype(p.dtype, copy=False)
        m2 = b1 * m + (1.0 - b1) * g
        v2 = b2 * v + (1.0 - b2) * (g * g)
        m_hat = m2 / corr1
        v_hat = v2 / corr2
        new_p.append(p - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon))
        new_m.append(m2)
        new_v.append(v2)
    new_state = AdamState(
        m=new_m,
        v=new_v,
        step_count=t,
        learning_rate=state.learning_rate,
        beta1=b1,
        beta2=b2,
        epsilon=state.epsilon,
    )
    if structured:
        return MlpParams.from_arrays(new_p), new_state
    return new_p, new_state


def polyak_update(
    target: MlpParams | Sequence[np.ndarray],
    source: MlpParams | Sequence[np.ndarray],
    tau: float,
) -> MlpParams | list[np.ndarray]:
    """target <- tau * source + (1 - tau) * target, element-wise."""
    if not 0.0 <= tau <= 1.0:
        raise ContractViolationError(f"tau must be in [0, 1], got {tau}")
    structured = isinstance(target, MlpParams)
    t_arrays = target.arrays() if structured else list(target)
    s_arrays = source.arrays() if isinstance(source, MlpParams) else list(source)
    if len(t_arrays) != len(s_arrays):
        raise ContractViolationError("target / source array counts differ")
    out = []
    for t, s in zip(t_arrays, s_arrays):
        if t.shape != s.shape:
            raise ContractViolationError(f"shape mismatch {t.shape} vs {s.shape}")
        out.append(tau * s + (1.0 - tau) * t)
    if structured:
        return MlpParams.from_arrays(out)
    return out
