"""Observation attributes and masking.

Observations are flat vectors partitioned into four semantic attributes:
position, velocity, mass_inertia, force. A mask removes whole attribute
segments (never position) while the simulator keeps full dynamics — that is
how the partially observable variants of an environment are built.
"""

import numpy as np

from windowrl import ObsMask, ObservationAttributeSpec, apply_mask, make_env, masked_dim

print("=== the humanoid decomposition: 348 = 22 + 101 + 130 + 95 ===")
humanoid = ObservationAttributeSpec.humanoid()
for attr, length in humanoid.segments:
    print(f"  {attr:<13} {length:>4} dims")
print(f"  {'total':<13} {humanoid.total_dim:>4} dims")

print("\n=== observation width for every masking configuration ===")
for label in ["", "v", "m", "f", "v,m", "v,f", "m,f"]:
    mask = ObsMask.parse(label)
    width = masked_dim(humanoid, mask)
    print(f"  remove {{{label or '-':<4}}} -> {width:>3} dims "
          f"({round(100 * width / 348)}% retained)")

print("\n=== masking a live pendulum observation ===")
env = make_env("pendulum")
obs = env.reset(seed=0)
print(f"  full observation  [cos, sin, vel, m, l, u]: {np.round(obs, 3)}")
for label in ["v", "v,m", "v,m,f"]:
    masked = apply_mask(obs, env.full_spec, ObsMask.parse(label))
    print(f"  remove {{{label:<5}}} -> {np.round(masked, 3)}")

print("\nretained values keep their original order; dynamics are untouched.")
