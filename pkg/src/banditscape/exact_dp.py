"""Backward induction for the minimax value on beliefs, at desk scale.

The value satisfies

    v(n, m) = inf_b sup_a  sum_i b(i) [a_hat(i) v(n+1, l(m,a,i)) + a_hat(-i) v(n+1, l(m,a,-i))]

with v(T, m) = int max_i x^i dm.  For fixed a the objective is linear in b,
so it is summarized by the branch vector W(a) in R^K; the inner sup is then a
max of linear functions of b (convex in b) and both the sup and the inf are
searched on simplex grids with a shrink-toward-incumbent refinement.

When the continuation is the terminal value it is linear in the measure, and
a_hat(y) v(l(m,a,y)) = sum_j a(j) 1{j compatible with y} v(m shifted), so the
last stage is evaluated exactly from the 2**K vertex shifts.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import measure_core as mc
from .game_engine import Signal, all_signals, belief_update, hat_a_vector, subset_matrix
from .measure_core import DiscreteMeasure

REFINE_FACTOR = 4
REFINE_ROUNDS = 2
DEFAULT_GRID_B = 100
DEFAULT_GRID_A = {2: 20, 3: 8}
DEFAULT_MAX_NODES = 200_000


class DPBudgetExceeded(RuntimeError):
    """Raised when the solver would evaluate more nodes than allowed."""

    def __init__(self, nodes: int, cap: int, per_round: dict[int, int]):
        self.nodes = nodes
        self.cap = cap
        self.per_round = dict(per_round)
        super().__init__(
            f"node budget exceeded: {nodes} nodes > cap {cap}; nodes per round so far: {self.per_round}"
        )


@dataclass(frozen=True)
class SimplexGrid:
    """Points k / r of the (dim-1)-simplex with integer k summing to r."""

    dim: int
    resolution: int
    counts: np.ndarray

    @property
    def points(self) -> np.ndarray:
        return self.counts / self.resolution

    @property
    def spacing(self) -> float:
        return 1.0 / self.resolution

    def __len__(self) -> int:
        return self.counts.shape[0]


@functools.lru_cache(maxsize=32)
def simplex_grid(dim: int, resolution: int) -> SimplexGrid:
    """All compositions of ``resolution`` into ``dim`` nonnegative parts."""
    if dim < 1 or resolution < 1:
        raise ValueError("dim and resolution must be positive")
    rows = []
    # stars and bars: bar positions among resolution + dim - 1 slots
    for bars in itertools.combinations(range(resolution + dim - 1), dim - 1):
        prev = -1
        row = []
        for pos in bars:
            row.append(pos - prev - 1)
            prev = pos
        row.append(resolution + dim - 1 - prev - 1)
        rows.append(row)
    counts = np.array(rows, dtype=np.int64).reshape(-1, dim)
    counts.setflags(write=False)
    return SimplexGrid(dim, resolution, counts)


def shrink_toward(points: np.ndarray, center: np.ndarray, factor: float) -> np.ndarray:
    """Contract a point set toward ``center``; stays inside the simplex by convexity."""
    return center + (points - center) / factor


def terminal_value(m: DiscreteMeasure) -> float:
    """int max_i x^i dm."""
    return mc.integrate(m, mc.max_coordinate)


terminal_value.linear = True  # type: ignore[attr-defined]


def _is_linear(continuation) -> bool:
    return bool(getattr(continuation, "linear", False))


def stage_objective(n: int, m: DiscreteMeasure, b, a, continuation: Callable[[DiscreteMeasure], float]) -> float:
    """Expected round-(n+1) value: sum over signals of P(y) v(n+1, l(m, a, y)).

    Signals with b(i) a_hat(+-i) = 0 contribute nothing and are not evaluated.
    """
    b = np.asarray(b, dtype=np.float64)
    plus, minus = hat_a_vector(a)
    total = 0.0
    for y in all_signals(m.k):
        p = b[y.index] * (plus[y.index] if y.positive else minus[y.index])
        if p > 0:
            total += p * continuation(belief_update(m, a, y))
    return total


def vertex_continuations(m: DiscreteMeasure, continuation) -> np.ndarray:
    """C[j, i] = v(m shifted by the increment of (action i, subset j))."""
    k = m.k
    e = subset_matrix(k)
    out = np.empty((2**k, k))
    for j in range(2**k):
        for i in range(k):
            out[j, i] = continuation(mc.shift_real(m, e[j] - e[j, i]))
    return out


def branch_matrix(m: DiscreteMeasure, a_points: np.ndarray, continuation, prune_eps: float | None = None) -> np.ndarray:
    """W[r, i] = a_hat(i) v(l(m,a_r,i)) + a_hat(-i) v(l(m,a_r,-i)).

    Zero-probability branches are skipped, never evaluated at the delta_0
    convention.
    """
    a_points = np.atleast_2d(a_points)
    if _is_linear(continuation):
        return a_points @ vertex_continuations(m, continuation)
    k = m.k
    out = np.zeros((a_points.shape[0], k))
    for r, a in enumerate(a_points):
        plus, minus = hat_a_vector(a)
        for y in all_signals(k):
            weight = plus[y.index] if y.positive else minus[y.index]
            if weight <= 0:
                continue
            child = belief_update(m, a, y)
            if prune_eps:
                child, _ = mc.prune(child, prune_eps)
            out[r, y.index] += weight * continuation(child)
    return out


@dataclass
class StepResult:
    b: np.ndarray
    a: np.ndarray
    value: float
    gap: float
    spacing_b: float
    spacing_a: float
    grid_value: float = math.nan


def best_response_a(
    n: int,
    m: DiscreteMeasure,
    b,
    grid_a: SimplexGrid,
    continuation,
    refine: bool = True,
    prune_eps: float | None = None,
    branches: np.ndarray | None = None,
) -> tuple[np.ndarray, float]:
    """Maximize the stage objective over subset mixes for a fixed forecaster mix.

    Grid argmax, then ``REFINE_ROUNDS`` passes on the grid shrunk toward the
    incumbent by successive powers of ``REFINE_FACTOR``.
    """
    b = np.asarray(b, dtype=np.float64)
    pts = grid_a.points
    W = branch_matrix(m, pts, continuation, prune_eps) if branches is None else branches
    vals = W @ b
    r = int(np.argmax(vals))
    best_a, best_v = pts[r], float(vals[r])
    if refine:
        factor = 1.0
        for _ in range(REFINE_ROUNDS):
            factor *= REFINE_FACTOR
            cand = shrink_toward(pts, best_a, factor)
            cv = branch_matrix(m, cand, continuation, prune_eps) @ b
            r = int(np.argmax(cv))
            if cv[r] > best_v:
                best_a, best_v = cand[r], float(cv[r])
    return best_a.copy(), best_v


def minimax_step(
    n: int,
    m: DiscreteMeasure,
    grid_b: SimplexGrid,
    grid_a: SimplexGrid,
    continuation,
    refine: bool = True,
    prune_eps: float | None = None,
) -> StepResult:
    """inf over b of sup over a of the stage objective, on grids with refinement.

    The reported ``gap`` adds the value movement caused by refining b and by
    refining a; it is zero when the grids already contain the optimum.
    """
    W = branch_matrix(m, grid_a.points, continuation, prune_eps)
    bpts = grid_b.points
    inner = (bpts @ W.T).max(axis=1)
    r = int(np.argmin(inner))
    b_star, b_val = bpts[r], float(inner[r])
    grid_value = b_val
    if refine:
        factor = 1.0
        for _ in range(REFINE_ROUNDS):
            factor *= REFINE_FACTOR
            cand = shrink_toward(bpts, b_star, factor)
            ci = (cand @ W.T).max(axis=1)
            r = int(np.argmin(ci))
            if ci[r] < b_val:
                b_star, b_val = cand[r], float(ci[r])
    a_star, value = best_response_a(n, m, b_star, grid_a, continuation, refine, prune_eps, branches=W)
    gap = (grid_value - b_val) + (value - b_val)
    final = REFINE_FACTOR**REFINE_ROUNDS if refine else 1
    return StepResult(
        b=b_star.copy(),
        a=a_star,
        value=value,
        gap=gap,
        spacing_b=grid_b.spacing / final,
        spacing_a=grid_a.spacing / final,
        grid_value=grid_value,
    )


def maximin_value(m: DiscreteMeasure, grid_b: SimplexGrid, grid_a: SimplexGrid, continuation) -> float:
    """sup over grid_a of inf over grid_b of the stage objective (weak-duality side)."""
    W = branch_matrix(m, grid_a.points, continuation)
    return float((grid_b.points @ W.T).min(axis=0).max())


def canonical_key(n: int, m: DiscreteMeasure) -> tuple:
    """Cache key: round, scale and atoms with weights rounded to 12 decimals."""
    return (n, round(m.scale, 15), m.atoms.shape, m.atoms.tobytes(), np.round(m.weights, 12).tobytes())


@dataclass
class DPResult:
    value: float
    gap: float
    b0: np.ndarray
    a0: np.ndarray
    nodes: int
    spacing_b: float
    spacing_a: float

    def to_json(self) -> dict:
        return {
            "value": self.value,
            "gap": self.gap,
            "b0": [float(v) for v in self.b0],
            "a0": [float(v) for v in self.a0],
            "nodes": self.nodes,
            "spacing_b": self.spacing_b,
            "spacing_a": self.spacing_a,
        }


@dataclass
class DPPSolver:
    """Memoized recursion over (round, belief) nodes."""

    k: int
    horizon: int
    grid_b_resolution: int = DEFAULT_GRID_B
    grid_a_resolution: int | None = None
    refine: bool = True
    prune_eps: float = mc.DEFAULT_PRUNE_EPS
    max_nodes: int = DEFAULT_MAX_NODES
    use_cache: bool = True
    cache: dict = field(default_factory=dict, repr=False)
    nodes: int = 0
    nodes_per_round: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.grid_a_resolution is None:
            self.grid_a_resolution = DEFAULT_GRID_A.get(self.k, 4)
        self.grid_b = simplex_grid(self.k, self.grid_b_resolution)
        self.grid_a = simplex_grid(2**self.k, self.grid_a_resolution)

    def continuation(self, n: int):
        """Value function at round n as a callable on beliefs."""
        if n >= self.horizon:
            return terminal_value
        return lambda m: self.value(n, m)[0]

    def _tracking(self, n_next: int):
        if n_next >= self.horizon:
            return terminal_value
        gaps = []

        def cont(m):
            v, g = self.value(n_next, m)
            gaps.append(g)
            return v

        cont.gaps = gaps  # type: ignore[attr-defined]
        return cont

    def value(self, n: int, m: DiscreteMeasure) -> tuple[float, float]:
        """(value, accumulated gap) of the game started at round n from belief m."""
        if n >= self.horizon:
            return terminal_value(m), 0.0
        key = canonical_key(n, m) if self.use_cache else None
        if key is not None and key in self.cache:
            return self.cache[key]
        self.nodes += 1
        self.nodes_per_round[n] = self.nodes_per_round.get(n, 0) + 1
        if self.nodes > self.max_nodes:
            raise DPBudgetExceeded(self.nodes, self.max_nodes, self.nodes_per_round)
        cont = self._tracking(n + 1)
        res = minimax_step(n, m, self.grid_b, self.grid_a, cont, self.refine, self.prune_eps)
        child_gap = max(getattr(cont, "gaps", [0.0]) or [0.0])
        out = (res.value, res.gap + child_gap)
        if key is not None:
            self.cache[key] = out
        return out

    def solve(self, m0: DiscreteMeasure) -> DPResult:
        cont = self._tracking(1)
        self.nodes += 1
        self.nodes_per_round[0] = self.nodes_per_round.get(0, 0) + 1
        res = minimax_step(0, m0, self.grid_b, self.grid_a, cont, self.refine, self.prune_eps)
        child_gap = max(getattr(cont, "gaps", [0.0]) or [0.0])
        return DPResult(
            value=res.value,
            gap=res.gap + child_gap,
            b0=res.b,
            a0=res.a,
            nodes=self.nodes,
            spacing_b=res.spacing_b,
            spacing_a=res.spacing_a,
        )


def solve_dpp(
    k: int,
    horizon: int,
    m0: DiscreteMeasure | None = None,
    grid_b: int = DEFAULT_GRID_B,
    grid_a: int | None = None,
    *,
    refine: bool = True,
    max_nodes: int = DEFAULT_MAX_NODES,
    use_cache: bool = True,
) -> DPResult:
    """Minimax value v_T(0, m0) with the first-round optimal mixes.

    Desk-scale only: K in {2, 3} and T <= 4.
    """
    if k not in (2, 3):
        raise ValueError("exact DP supports K in {2, 3}")
    if not 1 <= horizon <= 4:
        raise ValueError("exact DP supports 1 <= T <= 4")
    if m0 is None:
        m0 = mc.point_mass(0, k)
    if m0.k != k:
        raise ValueError("initial belief dimension does not match K")
    solver = DPPSolver(k, horizon, grid_b, grid_a, refine=refine, max_nodes=max_nodes, use_cache=use_cache)
    return solver.solve(m0)
