"""Follow the belief of a two-action game for a few rounds.

The adversary plays the uniform mix over subsets.  After each signal the
belief is a mixture of shifted copies of the previous one; the script prints
its support, its mean and the forecaster's next mix.

    python3 demos/belief_walkthrough.py
"""

import numpy as np

from banditscape import measure_core as mc
from banditscape.game_engine import play_episode, replay_beliefs
from banditscape.strategies import build

K, T = 2, 6

forecaster = build({"kind": "pde_forecaster"})
adversary = build({"kind": "balanced_uniform_adversary"})
trace = play_episode(K, T, mc.point_mass(0, K), forecaster, adversary, seed=3)
beliefs = replay_beliefs(mc.point_mass(0, K), trace.adversary_mixes, trace.signals)

np.set_printoptions(precision=4, suppress=True)
for n, (y, m) in enumerate(zip(trace.signals, beliefs[1:])):
    print(f"round {n}: action {trace.actions[n] + 1}, signal {y}, state {trace.states[n + 1]}")
    print(f"  belief: {m.size} atoms, mean {mc.mean(m)}")
    if n + 1 < T:
        print(f"  next forecaster mix {forecaster(n + 1, m, T, K)}")
print(f"realized regret max_i X_T^i = {trace.regret:g}")
