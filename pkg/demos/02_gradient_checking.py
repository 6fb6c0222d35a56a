"""Analytic gradients vs the central finite-difference oracle.

Every network in the package (dense MLPs, the parallel window encoder, the
recurrent baseline) ships with hand-written reverse-mode gradients. This
demo rebuilds the verification the test suite runs: perturb every parameter
by +-eps, difference the outputs, and compare against the analytic result.
"""

import numpy as np

from windowrl import (
    EncoderConfig,
    HistoryWindow,
    MlpSpec,
    encode_backward,
    encode_window,
    finite_diff_gradients,
    init_encoder,
    mlp_backward,
    mlp_forward,
    mlp_init,
)
from windowrl.nn import MlpParams


def relative_error(analytic, numeric):
    a = np.concatenate([np.ravel(x) for x in analytic])
    n = np.concatenate([np.ravel(x) for x in numeric])
    return np.linalg.norm(a - n) / max(np.linalg.norm(a), np.linalg.norm(n))


rng = np.random.default_rng(0)

print("=== dense MLP, 3 layers, double precision ===")
spec = MlpSpec((4, 16, 8, 2), output_activation="tanh")
params = mlp_init(spec, seed=1, dtype=np.float64)
x = rng.standard_normal(4)
upstream = rng.standard_normal(2)

analytic, _ = mlp_backward(params, spec, x, upstream)
numeric = finite_diff_gradients(
    lambda arrays: float(mlp_forward(MlpParams.from_arrays(arrays), spec, x) @ upstream),
    params.arrays(),
    epsilon=1e-5,
)
print(f"  relative error: {relative_error(analytic.arrays(), numeric):.2e}")

print("\n=== parallel window encoder, H = 4 ===")
config = EncoderConfig(window_length=4, per_step_embed_width=8,
                       combiner_hidden_widths=(16,), context_width=6)
enc = init_encoder(config, obs_width=5, seed=2, dtype=np.float64)
window = HistoryWindow(rng.standard_normal((4, 5)), valid_count=4)
upstream = rng.standard_normal(6)

analytic, window_grad = encode_backward(enc, config, window, upstream)
numeric = finite_diff_gradients(
    lambda arrays: float(encode_window(enc.replace_arrays(arrays), config, window) @ upstream),
    enc.arrays(),
    epsilon=1e-5,
)
print(f"  parameter gradient relative error: {relative_error(analytic, numeric):.2e}")

numeric_win = finite_diff_gradients(
    lambda arrays: float(
        encode_window(enc, config, HistoryWindow(arrays[0], valid_count=4)) @ upstream
    ),
    [window.observations],
    epsilon=1e-5,
)
print(f"  window gradient relative error:    "
      f"{relative_error([window_grad], numeric_win):.2e}")

print("\nboth paths agree to ~1e-10; the full suite repeats this over "
      "hundreds of random instances and both precisions.")
