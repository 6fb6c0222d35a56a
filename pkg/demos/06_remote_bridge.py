"""Talking to an environment server over the wire protocol.

The bridge (the separate `gymbridge` package) serves any registered
environment over newline-delimited JSON on TCP, applying the attribute
segment projection server-side. This demo starts one in-process on the
bundled synthetic humanoid-layout environment, then drives it through the
client: spec queries under different masks, a seeded rollout, and per-body
mass control. Point the endpoint at a `gymbridge serve --env Humanoid-v4`
process to run the same code against the real benchmark.
"""

import threading

import numpy as np

from windowrl import ObsMask, remote_env_connect
from windowrl.remote import default_segment_map_path

try:
    from gymbridge.projection import default_segment_map_path as bridge_map
    from gymbridge.server import BridgeServer
except ImportError:
    raise SystemExit("install the bridge package first: pip install -e bridge/")

server = BridgeServer("127.0.0.1", 0, "SyntheticHumanoid-v0", bridge_map())
threading.Thread(target=server.serve_forever, daemon=True).start()
endpoint = f"127.0.0.1:{server.port}"
print(f"bridge serving SyntheticHumanoid-v0 on {endpoint}\n")

print("=== spec under each mask (validated against local arithmetic) ===")
for label in ["", "v", "m", "f", "v,m", "v,f", "m,f"]:
    env = remote_env_connect(
        endpoint, segment_map=str(default_segment_map_path()), mask=ObsMask.parse(label)
    )
    print(f"  remove {{{label or '-':<4}}} -> obs_dim {env.obs_dim:>3}, "
          f"act_dim {env.action_dim}")
    env.close()

print("\n=== seeded rollout round-trip ===")
env = remote_env_connect(endpoint, segment_map=str(default_segment_map_path()))
actions = np.random.default_rng(0).uniform(-0.4, 0.4, size=(5, env.action_dim))
first = [env.reset(seed=7)] + [env.step(a).observation for a in actions]
second = [env.reset(seed=7)] + [env.step(a).observation for a in actions]
identical = all(np.array_equal(a, b) for a, b in zip(first, second))
print(f"  5-step replay with seed 7 identical twice: {identical}")

print("\n=== per-body mass control (scales always apply to defaults) ===")
print(f"  bodies: {list(env.body_names)}")
base = env.reset(seed=1)
env.set_mass("torso", 0.5)
halved = env.reset(seed=1)
changed = int(np.sum(base != halved))
env.set_mass("torso", 1.0)
restored = env.reset(seed=1)
print(f"  torso at 0.5x: {changed} observation dims changed (its inertia block)")
print(f"  torso back at 1.0x restores defaults exactly: "
      f"{bool(np.array_equal(base, restored))}")
env.close()
server.stop()
