"""Vectorized Monte-Carlo over many episodes for the common strategy pairs.

The generic engine carries the full belief measure, whose support grows with
every round under a mixed adversary.  When the game starts from a lattice
point mass and the adversary is either the balanced uniform mix or plays pure
subsets, every belief stays in a small closed family:

    X ~ o + (B_1, ..., B_K),   B_k ~ Bin(N_k, 1/2) independent,

with integer offsets ``o`` and counts ``N``.  A pure subset j only shifts
``o``.  Under the uniform mix, signal +i moves o_k -> o_k - 1 and
N_k -> N_k + 1 for every k != i, and signal -i moves N_k -> N_k + 1 for
k != i.  All episodes then advance together as arrays.

Supported forecasters: ``pde_forecaster`` (K = 2 for mixed beliefs, any K for
point-mass beliefs), ``mw_forecaster`` and ``uniform_forecaster``.  Supported
adversaries: ``balanced_uniform_adversary``, ``vertex_adversary`` and
``grid_best_response_adversary`` with one-step look-ahead.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.signal import fftconvolve
from scipy.special import ndtr
from scipy.stats import binom

from . import measure_core as mc
from .game_engine import subset_matrix
from .measure_core import DiscreteMeasure
from .potentials import heat_grad, heat_grad_two, heat_phi, heat_phi_two
from .strategies import StrategySpec, default_mw_rate

__all__ = ["supports", "simulate_regrets", "family_measure"]


def supports(k: int, m0: DiscreteMeasure, forecaster: StrategySpec, adversary: StrategySpec) -> tuple[bool, str]:
    """Whether the vectorized path covers this configuration, with the reason if not."""
    if m0.size != 1:
        return False, "initial belief is not a point mass"
    if not np.allclose(m0.points, np.rint(m0.points)):
        return False, "initial belief is off the integer lattice"
    if forecaster.kind not in ("pde_forecaster", "mw_forecaster", "uniform_forecaster"):
        return False, f"forecaster {forecaster.kind} not vectorized"
    if adversary.kind == "balanced_uniform_adversary":
        if forecaster.kind == "pde_forecaster" and k != 2 and not forecaster.params.get("at_mean", False):
            return False, "integrated gradient on binomial beliefs is only vectorized for K = 2"
        return True, ""
    if adversary.kind == "vertex_adversary":
        return True, ""
    if adversary.kind == "grid_best_response_adversary":
        if int(adversary.params.get("depth", 1)) != 1:
            return False, "only one-step look-ahead is vectorized"
        target = StrategySpec.from_json(adversary.params.get("forecaster", {"kind": "pde_forecaster"}))
        if target.to_json() != forecaster.to_json():
            return False, "best response is computed against a different forecaster"
        return True, ""
    return False, f"adversary {adversary.kind} not vectorized"


def family_measure(offset, counts, scale: float = 1.0) -> DiscreteMeasure:
    """Expand one (offset, counts) belief into an explicit measure (for checks)."""
    offset = np.asarray(offset, dtype=np.int64)
    counts = np.asarray(counts, dtype=np.int64)
    m = mc.point_mass(offset, scale=1.0)
    for k, n in enumerate(counts):
        if n == 0:
            continue
        e = np.zeros(len(offset), dtype=np.int64)
        e[k] = 1
        pmf = binom.pmf(np.arange(n + 1), n, 0.5)
        m = mc.mix([(p, mc.pushforward_shift(m, c * e)) for c, p in enumerate(pmf)])
    return mc.from_atoms(m.atoms, m.weights, scale)


def _binomial_smoothed_grad(c: np.ndarray, n_total: int, width: float) -> np.ndarray:
    """g(c) = sum_k P(Bin(n_total, 1/2) = k) Phi((c + k) / width) for integer c."""
    lo, hi = int(c.min()), int(c.max())
    u = np.arange(lo, hi + n_total + 1, dtype=np.float64)
    cdf = ndtr(u / width)
    if n_total == 0:
        table = cdf
    else:
        pmf = binom.pmf(np.arange(n_total + 1), n_total, 0.5)
        table = fftconvolve(cdf, pmf[::-1], mode="valid")
    return np.clip(table[c - lo], 0.0, 1.0)


class _Batch:
    def __init__(self, k, horizon, x0, n_episodes, forecaster: StrategySpec, adversary: StrategySpec):
        self.k = k
        self.horizon = horizon
        self.root = math.sqrt(horizon)
        self.x = np.tile(x0, (n_episodes, 1))
        self.offset = self.x.copy()
        self.counts = np.zeros((n_episodes, k), dtype=np.int64)
        self.forecaster = forecaster
        self.adversary = adversary
        self.e = subset_matrix(k).astype(np.int64)

    # forecaster mixes, shape (n_episodes, K)
    def mixes(self, n: int, offset=None) -> np.ndarray:
        offset = self.offset if offset is None else offset
        kind, p = self.forecaster.kind, self.forecaster.params
        if kind == "uniform_forecaster":
            return np.full(offset.shape, 1.0 / self.k)
        if kind == "mw_forecaster":
            eta = p.get("eta")
            eta = default_mw_rate(self.k, self.horizon) if eta is None else float(eta)
            g = eta * (offset + 0.5 * self.counts)
            w = np.exp(g - g.max(axis=1, keepdims=True))
            return w / w.sum(axis=1, keepdims=True)
        sigma = float(p.get("sigma", 1.0))
        t = n / self.horizon
        if p.get("at_mean", False) or not self.counts.any():
            mean = (offset + 0.5 * self.counts) / self.root
            return heat_grad_two(t, mean, sigma) if self.k == 2 else heat_grad(t, mean, sigma)
        # X1 - X2 = c + Bin(N1 + N2), using -Bin(N2) = Bin(N2) - N2 in law
        n_total = self.counts.sum(axis=1)
        if np.any(n_total != n_total[0]):
            raise RuntimeError("binomial counts diverged across episodes")
        c = offset[:, 0] - offset[:, 1] - self.counts[:, 1]
        width = self.root * sigma * math.sqrt(2.0 * (1.0 - t))
        g1 = _binomial_smoothed_grad(c, int(n_total[0]), width)
        return np.stack([g1, 1.0 - g1], axis=1)

    # adversary pure subsets, shape (n_episodes,), or None for the uniform mix
    def subsets(self, n: int, b: np.ndarray, rng) -> np.ndarray | None:
        kind, p = self.adversary.kind, self.adversary.params
        if kind == "balanced_uniform_adversary":
            return None
        if kind == "vertex_adversary":
            return np.full(self.x.shape[0], int(p["subset"]))
        sigma = float(p.get("sigma", 1.0))
        t_next = (n + 1) / self.horizon
        phi = (lambda pts: heat_phi_two(t_next, pts, sigma)) if self.k == 2 else (lambda pts: heat_phi(t_next, pts, sigma))
        pts = self.offset / self.root
        payoff = np.zeros((self.x.shape[0], 2**self.k))
        for j in range(2**self.k):
            for i in range(self.k):
                dx = (self.e[j] - self.e[j, i]) / self.root
                payoff[:, j] += b[:, i] * phi(pts + dx)
        top = payoff.max(axis=1, keepdims=True)
        return np.argmax(payoff >= top - 1e-12 * (1.0 + np.abs(top)), axis=1)

    def step(self, n: int, rng: np.random.Generator):
        b = self.mixes(n)
        u_action, u_subset = rng.random(self.x.shape[0]), rng.random((self.x.shape[0], self.k))
        cum = np.cumsum(b, axis=1)
        actions = np.minimum((u_action[:, None] >= cum[:, :-1]).sum(axis=1), self.k - 1)
        pure = self.subsets(n, b, rng)
        rows = np.arange(self.x.shape[0])
        if pure is None:
            ej = (u_subset < 0.5).astype(np.int64)
        else:
            ej = self.e[pure]
        hit = ej[rows, actions]
        self.x += ej - hit[:, None]
        if pure is None:
            others = np.ones_like(ej)
            others[rows, actions] = 0
            self.offset -= others * hit[:, None]
            self.counts += others
        else:
            self.offset += ej - hit[:, None]


def simulate_regrets(
    k: int,
    horizon: int,
    m0: DiscreteMeasure,
    forecaster: StrategySpec,
    adversary: StrategySpec,
    n_episodes: int,
    seed: int = 0,
) -> np.ndarray:
    """Per-episode regrets max_i X_T^i for ``n_episodes`` games played in lockstep.

    Deterministic in ``seed``.  Raises ValueError for unsupported configurations.
    """
    ok, why = supports(k, m0, forecaster, adversary)
    if not ok:
        raise ValueError(f"vectorized simulation unavailable: {why}")
    x0 = np.rint(m0.points[0]).astype(np.int64)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    batch = _Batch(k, horizon, x0, n_episodes, forecaster, adversary)
    for n in range(horizon):
        batch.step(n, rng)
    return batch.x.max(axis=1).astype(np.float64)
