"""How history windows are assembled from flat replay storage.

The buffer stores one flat transition per step. Windows are built on demand
at sampling time: walk back up to H-1 steps within the same episode, and pad
anything older than the episode start by repeating its first observation.
The window never leaks observations across an episode boundary.
"""

import numpy as np

from windowrl import ReplayBuffer, Transition

H = 4
buf = ReplayBuffer(capacity=32, obs_dim=2, act_dim=1)

# two episodes; each observation encodes (episode, step) so leaks would be obvious
for episode, length in ((0, 3), (1, 6)):
    for step in range(length):
        obs = np.array([float(episode), float(step)])
        buf.push(
            Transition(
                observation=obs,
                action=np.zeros(1),
                reward=0.0,
                next_observation=obs + np.array([0.0, 0.5]),
                terminated=False,
                truncated=step == length - 1,
                episode_id=episode,
                step_index=step,
            )
        )

print(f"buffer holds {buf.size} transitions from 2 episodes; H = {H}\n")
print(f"{'index':>5} {'(ep,step)':>10} {'window rows (ep,step)':<38} padding")
for index in range(buf.size):
    window, nxt = buf.assemble_window(index, H)
    rows = " ".join(f"({int(r[0])},{int(r[1])})" for r in window.observations)
    pad = H - window.valid_count
    ep, st = int(buf.episode_id[index]), int(buf.step_index[index])
    print(f"{index:>5} {f'({ep},{st})':>10} {rows:<38} {pad} rows")

print("\nepisode 1 step 0 shows the padding rule: three copies of its first")
print("observation precede it, and nothing from episode 0 appears.")

window, nxt = buf.assemble_window(3, H)  # episode 1, step 0
print(f"\nwindow at (1,0):      {[tuple(float(v) for v in r) for r in window.observations]}")
print(f"its next-step window: {[tuple(float(v) for v in r) for r in nxt.observations]}")
print("(the next window shifts by one and ends at the successor observation)")
