"""Playable forecaster and adversary strategies.

Every strategy is a callable ``strategy(n, belief, T, K) -> mix``; forecasters
return a length-K action mix, adversaries a length-2**K subset mix.
:class:`StrategySpec` is the serializable description used by configs and
:func:`build` turns it into such a callable.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import measure_core as mc
from .game_engine import (
    Signal,
    all_signals,
    hat_a,
    hat_a_vector,
    is_balanced,
    subset_matrix,
    update_kernel,
)
from .measure_core import DiscreteMeasure
from .potentials import heat_grad, heat_phi
from .exact_dp import simplex_grid

__all__ = [
    "StrategySpec",
    "build",
    "v_vector",
    "drift_vector",
    "is_balanced",
    "pde_forecaster",
    "mw_forecaster",
    "uniform_forecaster",
    "balanced_uniform_adversary",
    "vertex_adversary",
    "grid_best_response_adversary",
    "FORECASTER_KINDS",
    "ADVERSARY_KINDS",
]

FORECASTER_KINDS = ("pde_forecaster", "mw_forecaster", "uniform_forecaster")
ADVERSARY_KINDS = ("balanced_uniform_adversary", "vertex_adversary", "grid_best_response_adversary")


def v_vector(a, y: Signal) -> np.ndarray:
    """Conditional mean drift magnitude given the signal.

    V_{a,i} = sum_{j ∋ i} a(j)/a_hat(i) e_{j^c} and V_{a,-i} = sum_{j ∌ i} a(j)/a_hat(-i) e_j.
    The state mean moves by -V_{a,i} on +i and by +V_{a,-i} on -i, see :func:`drift_vector`.
    """
    kernel = update_kernel(a, y)
    if not kernel:
        raise ValueError(f"a_hat({y}) = 0: drift vector undefined")
    return np.abs(sum(p * s for p, s in kernel))


def drift_vector(a, y: Signal) -> np.ndarray:
    """Signed conditional mean increment of the state, -V_{a,i} or +V_{a,-i}."""
    v = v_vector(a, y)
    return -v if y.positive else v


def uniform_forecaster(n: int, belief: DiscreteMeasure, horizon: int, k: int) -> np.ndarray:
    return np.full(k, 1.0 / k)


def pde_forecaster(
    n: int,
    belief: DiscreteMeasure,
    horizon: int,
    sigma: float = 1.0,
    *,
    at_mean: bool = False,
) -> np.ndarray:
    """Forecaster playing the gradient of the heat potential on the rescaled belief.

    The belief is rescaled to m~ = belief^{*1/sqrt(T)} and the mix is
    int grad phi(n/T, x) dm~(x).  With ``at_mean=True`` the gradient is taken
    at the mean of m~ instead.
    """
    if not 0 <= n < horizon:
        raise ValueError(f"round {n} outside [0, {horizon})")
    t = n / horizon
    pts = belief.points / math.sqrt(horizon)
    if at_mean:
        return heat_grad(t, belief.weights @ pts, sigma)
    b = belief.weights @ heat_grad(t, pts, sigma)
    return b / b.sum()


def default_mw_rate(k: int, horizon: int) -> float:
    return math.sqrt(8.0 * math.log(k) / horizon)


def mw_forecaster(n: int, belief: DiscreteMeasure, horizon: int, eta: float | None = None) -> np.ndarray:
    """Exponential weights on the belief-mean regret vector, b(i) ∝ exp(eta E_m[X^i])."""
    k = belief.k
    if eta is None:
        eta = default_mw_rate(k, horizon)
    if not eta > 0:
        raise ValueError("eta must be positive")
    g = eta * mc.mean(belief)
    w = np.exp(g - g.max())
    return w / w.sum()


def balanced_uniform_adversary(k: int) -> np.ndarray:
    return np.full(2**k, 2.0**-k)


def vertex_adversary(j: int, k: int) -> np.ndarray:
    if not 0 <= j < 2**k:
        raise ValueError(f"subset {j} out of range for K={k}")
    a = np.zeros(2**k)
    a[j] = 1.0
    return a


def subset_grid(k: int, resolution: int) -> np.ndarray:
    """Grid on the subset simplex with the 2**K vertices listed first."""
    pts = simplex_grid(2**k, resolution).points
    is_vertex = pts.max(axis=1) == 1.0
    return np.concatenate([np.eye(2**k), pts[~is_vertex]])


def _first_near_max(values: np.ndarray) -> int:
    top = values.max()
    return int(np.flatnonzero(values >= top - 1e-12 * (1.0 + abs(top)))[0])


def lookahead_vertex_payoffs(
    n: int,
    belief: DiscreteMeasure,
    horizon: int,
    b: np.ndarray,
    sigma: float = 1.0,
) -> np.ndarray:
    """Expected potential after one round for each pure subset j against mix ``b``.

    Entry j is sum_i b(i) Phi(t_{n+1}, m~ shifted by the realized increment).
    """
    k = belief.k
    t_next = (n + 1) / horizon
    root = math.sqrt(horizon)
    pts = belief.points / root
    e = subset_matrix(k)
    out = np.zeros(2**k)
    for j in range(2**k):
        for i in range(k):
            if b[i] == 0:
                continue
            dx = e[j] - e[j, i]
            out[j] += b[i] * (belief.weights @ heat_phi(t_next, pts + dx / root, sigma))
    return out


def _lookahead_value(n, belief, horizon, forecaster, a, depth, grid, sigma):
    k = belief.k
    b = np.asarray(forecaster(n, belief, horizon, k), dtype=np.float64)
    plus, minus = hat_a_vector(a)
    total = 0.0
    for y in all_signals(k):
        p = b[y.index] * (plus[y.index] if y.positive else minus[y.index])
        if p == 0:
            continue
        kernel = update_kernel(a, y)
        q = mc.unit_shift_factor(belief)
        nxt = mc.from_atoms(
            np.concatenate([belief.atoms + q * s for _, s in kernel]),
            np.concatenate([w * belief.weights for w, _ in kernel]),
            belief.scale,
        )
        if depth == 1 or n + 1 >= horizon:
            pts = nxt.points / math.sqrt(horizon)
            val = float(nxt.weights @ heat_phi((n + 1) / horizon, pts, sigma))
        else:
            val = max(
                _lookahead_value(n + 1, nxt, horizon, forecaster, a2, depth - 1, grid, sigma) for a2 in grid
            )
        total += p * val
    return total


def grid_best_response_adversary(
    n: int,
    belief: DiscreteMeasure,
    horizon: int,
    forecaster: Callable,
    resolution: int = 4,
    depth: int = 1,
    sigma: float = 1.0,
) -> np.ndarray:
    """Grid search over subset mixes maximizing the h-step expected potential.

    The look-ahead proxy is Phi(t_{n+h}, m~_{n+h}) = int phi dm~ with the
    forecaster's own mixes.  For one step the objective is affine in the mix
    (the a_hat normalizations cancel), so the grid values are exact linear
    combinations of the vertex payoffs.  Ties go to the first grid point,
    and vertices come first.
    """
    if depth not in (1, 2):
        raise ValueError("look-ahead depth must be 1 or 2")
    k = belief.k
    grid = subset_grid(k, resolution)
    if depth == 1 or n + 1 >= horizon:
        b = np.asarray(forecaster(n, belief, horizon, k), dtype=np.float64)
        values = grid @ lookahead_vertex_payoffs(n, belief, horizon, b, sigma)
    else:
        values = np.array(
            [_lookahead_value(n, belief, horizon, forecaster, a, depth, grid, sigma) for a in grid]
        )
    return grid[_first_near_max(values)].copy()


@dataclass
class StrategySpec:
    """Serializable strategy description.

    Parameters per kind: ``sigma`` and ``at_mean`` (pde_forecaster), ``eta``
    (mw_forecaster; default sqrt(8 log K / T)), ``subset`` (vertex_adversary,
    bitmask), ``resolution``, ``depth``, ``sigma`` and ``forecaster``
    (grid_best_response_adversary; the forecaster it responds to).
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in FORECASTER_KINDS + ADVERSARY_KINDS:
            raise ValueError(
                f"unknown strategy kind {self.kind!r}; valid kinds: {', '.join(FORECASTER_KINDS + ADVERSARY_KINDS)}"
            )

    @property
    def is_forecaster(self) -> bool:
        return self.kind in FORECASTER_KINDS

    @property
    def ident(self) -> str:
        """Short identifier used in output tables."""
        if not self.params:
            return self.kind
        parts = []
        for key in sorted(self.params):
            val = self.params[key]
            if isinstance(val, dict):
                val = StrategySpec.from_json(val).ident
            parts.append(f"{key}={val}")
        return f"{self.kind}[{','.join(parts)}]"

    def to_json(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params)}

    @classmethod
    def from_json(cls, obj) -> "StrategySpec":
        if isinstance(obj, str):
            obj = json.loads(obj)
        return cls(obj["kind"], dict(obj.get("params", {})))


def build(spec: StrategySpec | dict) -> Callable:
    """Return the strategy callable ``(n, belief, T, K) -> mix`` for a spec."""
    if not isinstance(spec, StrategySpec):
        spec = StrategySpec.from_json(spec)
    p = spec.params
    if spec.kind == "uniform_forecaster":
        return uniform_forecaster
    if spec.kind == "pde_forecaster":
        sigma = float(p.get("sigma", 1.0))
        at_mean = bool(p.get("at_mean", False))
        return lambda n, m, T, K: pde_forecaster(n, m, T, sigma, at_mean=at_mean)
    if spec.kind == "mw_forecaster":
        eta = p.get("eta")
        return lambda n, m, T, K: mw_forecaster(n, m, T, None if eta is None else float(eta))
    if spec.kind == "balanced_uniform_adversary":
        return lambda n, m, T, K: balanced_uniform_adversary(K)
    if spec.kind == "vertex_adversary":
        j = int(p["subset"])
        return lambda n, m, T, K: vertex_adversary(j, K)
    if spec.kind == "grid_best_response_adversary":
        target = build(p.get("forecaster", {"kind": "pde_forecaster"}))
        resolution = int(p.get("resolution", 4))
        depth = int(p.get("depth", 1))
        sigma = float(p.get("sigma", 1.0))
        return lambda n, m, T, K: grid_best_response_adversary(n, m, T, target, resolution, depth, sigma)
    raise AssertionError(spec.kind)
