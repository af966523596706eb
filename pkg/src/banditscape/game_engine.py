"""Game dynamics, signals and exact Bayesian belief updates.

Conventions
-----------
Actions are 0-based integers ``0..K-1``.  A subset ``j`` of actions is a
bitmask: action ``i`` belongs to ``j`` iff ``j >> i & 1``.  An adversary mix is
therefore a vector of length ``2**K`` indexed by bitmask, and a forecaster mix
a vector of length ``K``.  Beliefs are :class:`DiscreteMeasure` objects whose
real shifts by ``e_j`` must be lattice shifts (scale ``1/q`` for integer q).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from . import measure_core as mc
from .measure_core import DiscreteMeasure

SIMPLEX_TOL = 1e-9

Strategy = Callable[[int, DiscreteMeasure, int, int], np.ndarray]


class Signal(NamedTuple):
    """Outcome indicator: ``+i`` if action ``index`` was rewarded, else ``-i``."""

    index: int
    positive: bool

    def to_int(self) -> int:
        """Signed 1-based code, e.g. ``+1`` / ``-2``."""
        return (self.index + 1) if self.positive else -(self.index + 1)

    @classmethod
    def from_int(cls, code: int) -> "Signal":
        if code == 0:
            raise ValueError("signal code 0 is invalid")
        return cls(abs(code) - 1, code > 0)

    def __str__(self) -> str:
        return f"{'+' if self.positive else '-'}{self.index + 1}"


def all_signals(k: int) -> list[Signal]:
    return [Signal(i, s) for i in range(k) for s in (True, False)]


def subset_vector(j: int, k: int) -> np.ndarray:
    """Indicator vector e_j of the bitmask ``j``."""
    return np.array([(j >> i) & 1 for i in range(k)], dtype=np.int64)


def subset_matrix(k: int) -> np.ndarray:
    """Row ``j`` is e_j, shape (2**K, K)."""
    return (np.arange(2**k)[:, None] >> np.arange(k)[None, :]) & 1


def subset_from_actions(actions, k: int) -> int:
    j = 0
    for i in actions:
        if not 0 <= i < k:
            raise ValueError(f"action {i} out of range for K={k}")
        j |= 1 << i
    return j


def check_action_mix(b, k: int) -> np.ndarray:
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (k,):
        raise ValueError(f"action mix has shape {b.shape}, expected ({k},)")
    if np.any(b < -SIMPLEX_TOL) or abs(b.sum() - 1.0) > SIMPLEX_TOL or not np.all(np.isfinite(b)):
        raise ValueError(f"action mix is not in the simplex: {b}")
    return np.clip(b, 0.0, None)


def check_subset_mix(a, k: int) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.shape != (2**k,):
        raise ValueError(f"subset mix has shape {a.shape}, expected ({2**k},)")
    if np.any(a < -SIMPLEX_TOL) or abs(a.sum() - 1.0) > SIMPLEX_TOL or not np.all(np.isfinite(a)):
        raise ValueError(f"subset mix is not in the simplex: {a}")
    return np.clip(a, 0.0, None)


def step_state(x, action: int, subset: int) -> np.ndarray:
    """One round of the state: ``x + e_J - 1{I in J} e``."""
    x = np.asarray(x, dtype=np.int64)
    k = x.shape[0]
    dx = subset_vector(subset, k)
    if (subset >> action) & 1:
        dx = dx - 1
    return x + dx


def signal(action: int, subset: int) -> Signal:
    return Signal(action, bool((subset >> action) & 1))


def hat_a_vector(a) -> tuple[np.ndarray, np.ndarray]:
    """Return (a_hat(+i))_i and (a_hat(-i))_i for a subset mix ``a``."""
    a = np.asarray(a, dtype=np.float64)
    k = int(round(math.log2(a.shape[0])))
    members = subset_matrix(k).astype(bool)
    plus = a @ members
    return plus, a.sum() - plus


def hat_a(a, y: Signal) -> float:
    """Probability that the rewarded set contains (y=+i) or excludes (y=-i) action i."""
    a = np.asarray(a, dtype=np.float64)
    k = int(round(math.log2(a.shape[0])))
    if not 0 <= y.index < k:
        raise ValueError(f"signal {y} out of range for K={k}")
    total = 0.0
    for j in range(a.shape[0]):
        if bool((j >> y.index) & 1) == y.positive:
            total += a[j]
    return total


def is_balanced(a, tol: float = 1e-12) -> bool:
    """True if a_hat(i) does not depend on i."""
    plus, _ = hat_a_vector(a)
    return float(plus.max() - plus.min()) <= tol


def update_shift(y: Signal, j: int, k: int) -> np.ndarray:
    """Real shift of the state when subset ``j`` is compatible with signal ``y``.

    ``-e_{j^c}`` when y=+i (i in j), ``e_j`` when y=-i (i not in j).
    """
    ej = subset_vector(j, k)
    return ej - 1 if y.positive else ej


def update_kernel(a, y: Signal) -> list[tuple[float, np.ndarray]]:
    """Conditional law of the state increment given the signal, as (prob, shift) pairs."""
    a = np.asarray(a, dtype=np.float64)
    k = int(round(math.log2(a.shape[0])))
    norm = hat_a(a, y)
    if norm <= 0:
        return []
    return [
        (a[j] / norm, update_shift(y, j, k))
        for j in range(a.shape[0])
        if a[j] > 0 and bool((j >> y.index) & 1) == y.positive
    ]


def belief_update(m: DiscreteMeasure, a, y: Signal) -> DiscreteMeasure:
    """Bayesian update of the belief after observing ``y`` under adversary mix ``a``.

    A mixture of translated copies of ``m``; when a_hat(y) = 0 the conventional
    value delta_0 is returned.
    """
    kernel = update_kernel(a, y)
    if not kernel:
        return mc.point_mass(0, m.k, m.scale)
    q = mc.unit_shift_factor(m)
    atoms = np.concatenate([m.atoms + q * s for _, s in kernel])
    weights = np.concatenate([p * m.weights for p, _ in kernel])
    return mc.from_atoms(atoms, weights, m.scale)


def bayes_oracle(m: DiscreteMeasure, a, b, y: Signal) -> DiscreteMeasure:
    """Brute-force conditioning of the joint law of (X, J, I) on Y = y.

    Enumerates P(X=x, J=j, I=i) = m(x) a(j) b(i), keeps outcomes whose signal is
    ``y`` and returns the normalized law of X + dX.
    """
    k = m.k
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    q = mc.unit_shift_factor(m)
    joint: dict[tuple[int, ...], float] = {}
    evidence = 0.0
    for z, w in zip(m.atoms, m.weights):
        for j in range(2**k):
            if a[j] == 0:
                continue
            for i in range(k):
                if b[i] == 0 or signal(i, j) != y:
                    continue
                p = w * a[j] * b[i]
                x_next = z + q * (step_state(np.zeros(k, dtype=np.int64), i, j))
                key = tuple(int(v) for v in x_next)
                joint[key] = joint.get(key, 0.0) + p
                evidence += p
    if evidence <= 0:
        raise ValueError(f"signal {y} has zero probability under the given strategies")
    keys = list(joint)
    return mc.from_atoms(np.array(keys, dtype=np.int64), [joint[z] / evidence for z in keys], m.scale)


def one_step_law(m: DiscreteMeasure, a, b) -> DiscreteMeasure:
    """Unconditional law of X + dX by enumeration over (x, j, i)."""
    k = m.k
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    q = mc.unit_shift_factor(m)
    atoms, weights = [], []
    for j in range(2**k):
        for i in range(k):
            p = a[j] * b[i]
            if p == 0:
                continue
            dx = step_state(np.zeros(k, dtype=np.int64), i, j)
            atoms.append(m.atoms + q * dx)
            weights.append(p * m.weights)
    return mc.from_atoms(np.concatenate(atoms), np.concatenate(weights), m.scale)


def signal_probabilities(a, b) -> dict[Signal, float]:
    """P(Y=+i) = b(i) a_hat(i), P(Y=-i) = b(i) a_hat(-i)."""
    plus, minus = hat_a_vector(a)
    b = np.asarray(b, dtype=np.float64)
    out = {}
    for i in range(b.shape[0]):
        out[Signal(i, True)] = float(b[i] * plus[i])
        out[Signal(i, False)] = float(b[i] * minus[i])
    return out


@dataclass
class EpisodeTrace:
    """Realized path of one game."""

    k: int
    horizon: int
    states: list[np.ndarray]
    signals: list[Signal]
    actions: list[int]
    subsets: list[int]
    forecaster_mixes: list[np.ndarray]
    adversary_mixes: list[np.ndarray]
    beliefs: list[DiscreteMeasure]
    seed: int | None = None
    extra: dict = field(default_factory=dict)

    @property
    def regret(self) -> float:
        return float(np.max(self.states[-1]))

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "T": self.horizon,
            "seed": self.seed,
            "states": [[int(v) for v in x] for x in self.states],
            "signals": [y.to_int() for y in self.signals],
            "actions": [int(i) for i in self.actions],
            "subsets": [int(j) for j in self.subsets],
            "forecaster": [[float(v) for v in b] for b in self.forecaster_mixes],
            "adversary": [[float(v) for v in a] for a in self.adversary_mixes],
            "beliefs": [mc.to_json(m) for m in self.beliefs],
            "regret": self.regret,
        }

    def to_json_line(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))


def episode_streams(seed) -> tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    """Deterministic (initial-state, forecaster, adversary) generators for one episode."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    init, forecaster, adversary = ss.spawn(3)
    return (np.random.default_rng(init), np.random.default_rng(forecaster), np.random.default_rng(adversary))


def play_episode(
    k: int,
    horizon: int,
    m0: DiscreteMeasure,
    forecaster: Strategy,
    adversary: Strategy,
    seed=0,
    keep_beliefs: bool = True,
) -> EpisodeTrace:
    """Play one game of ``horizon`` rounds.

    Strategies are called as ``strategy(n, belief, horizon, k)`` and must return
    a mix over actions (forecaster) or over subsets (adversary).
    """
    if m0.k != k:
        raise ValueError(f"initial belief has dimension {m0.k}, expected {k}")
    rng_init, rng_i, rng_j = episode_streams(seed)
    x_real = m0.points[rng_init.choice(m0.size, p=m0.weights)]
    x = np.rint(x_real).astype(np.int64)
    if np.any(np.abs(x_real - x) > 1e-9):
        raise ValueError("initial belief must be supported on integer points")
    belief = m0
    trace = EpisodeTrace(k, horizon, [x], [], [], [], [], [], [m0], seed=seed if isinstance(seed, int) else None)
    for n in range(horizon):
        b = check_action_mix(forecaster(n, belief, horizon, k), k)
        a = check_subset_mix(adversary(n, belief, horizon, k), k)
        i = int(rng_i.choice(k, p=b / b.sum()))
        j = int(rng_j.choice(2**k, p=a / a.sum()))
        y = signal(i, j)
        x = step_state(x, i, j)
        belief = belief_update(belief, a, y)
        trace.states.append(x)
        trace.signals.append(y)
        trace.actions.append(i)
        trace.subsets.append(j)
        trace.forecaster_mixes.append(b)
        trace.adversary_mixes.append(a)
        if keep_beliefs:
            trace.beliefs.append(belief)
    if not keep_beliefs:
        trace.beliefs.append(belief)
    return trace


def replay_beliefs(m0: DiscreteMeasure, adversary_mixes, signals) -> list[DiscreteMeasure]:
    """Recompute the belief path offline from (m0, a_0..a_{n-1}, y_0..y_{n-1})."""
    beliefs = [m0]
    for a, y in zip(adversary_mixes, signals):
        beliefs.append(belief_update(beliefs[-1], a, y))
    return beliefs


def estimate_regret(
    k: int,
    horizon: int,
    m0: DiscreteMeasure,
    forecaster: Strategy,
    adversary: Strategy,
    n_episodes: int,
    seed: int = 0,
) -> tuple[float, float]:
    """Monte-Carlo mean of max_i X_T^i and its standard error."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be at least 1")
    children = np.random.SeedSequence(seed).spawn(n_episodes)
    regrets = np.array(
        [
            play_episode(k, horizon, m0, forecaster, adversary, seed=ss, keep_beliefs=False).regret
            for ss in children
        ]
    )
    return summarize(regrets)


def summarize(samples: np.ndarray) -> tuple[float, float]:
    samples = np.asarray(samples, dtype=np.float64)
    mean = float(samples.mean())
    if samples.shape[0] < 2:
        return mean, 0.0
    return mean, float(samples.std(ddof=1) / math.sqrt(samples.shape[0]))
