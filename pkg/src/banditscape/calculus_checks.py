"""Numerical checks of the expansions of functionals of the rescaled belief.

For a signal ``y`` the rescaled belief moves to the update measure

    A(a, m, y, T) = mixture over j of m shifted by s_j / sqrt(T),

with the same shifts and weights as the Bayes update.  For smooth
functionals u of the measure we compare finite-T increments against the
first-order (drift) and second-order (diffusion) predictions built from the
flat derivatives of u.  Three families of test functionals with closed-form
derivatives are supported: ``linear`` (int w.x dm), ``quadratic_x``
(int x'Mx dm) and ``squared_mean`` ((int g.x dm)^2).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate as spi

from . import measure_core as mc
from .formatting import dumps, fmt
from .game_engine import Signal, belief_update, hat_a, update_kernel
from .measure_core import DiscreteMeasure
from .potentials import heat_phi
from .strategies import drift_vector

__all__ = [
    "FunctionalSpec",
    "ExpansionReport",
    "a_measure",
    "evaluate",
    "flat_derivatives",
    "first_order_check",
    "second_order_check",
    "fit_slope",
    "error_budget",
    "error_budget_quad",
    "total_error_budget",
    "measured_gradient",
]

FUNCTIONAL_KINDS = ("linear", "quadratic_x", "squared_mean")
EXACT_TOL = 1e-12
SLOPE_WINDOW = (-0.6, -0.4)


@dataclass
class FunctionalSpec:
    """Test functional with closed-form flat derivatives.

    Parameters
    ----------
    kind : {"linear", "quadratic_x", "squared_mean"}
    w : array_like, optional
        Weight vector of the linear functional.
    M : array_like, optional
        Matrix of the quadratic functional; symmetrized on input.
    g : array_like, optional
        Direction of the squared mean.
    """

    kind: str
    w: np.ndarray | None = None
    M: np.ndarray | None = None
    g: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in FUNCTIONAL_KINDS:
            raise ValueError(f"unknown functional {self.kind!r}; valid: {', '.join(FUNCTIONAL_KINDS)}")
        need = {"linear": "w", "quadratic_x": "M", "squared_mean": "g"}[self.kind]
        if getattr(self, need) is None:
            raise ValueError(f"{self.kind} functional needs parameter {need!r}")
        if self.w is not None:
            self.w = np.asarray(self.w, dtype=np.float64)
        if self.g is not None:
            self.g = np.asarray(self.g, dtype=np.float64)
        if self.M is not None:
            M = np.asarray(self.M, dtype=np.float64)
            if M.ndim != 2 or M.shape[0] != M.shape[1]:
                raise ValueError("M must be a square matrix")
            self.M = 0.5 * (M + M.T)

    @property
    def k(self) -> int:
        p = {"linear": self.w, "quadratic_x": self.M, "squared_mean": self.g}[self.kind]
        return p.shape[0]

    def to_json(self) -> dict:
        out = {"kind": self.kind}
        for name in ("w", "M", "g"):
            val = getattr(self, name)
            if val is not None:
                out[name] = val.tolist()
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "FunctionalSpec":
        return cls(obj["kind"], obj.get("w"), obj.get("M"), obj.get("g"))


def evaluate(spec: FunctionalSpec, m: DiscreteMeasure) -> float:
    """u(m) for the test functional."""
    if m.k != spec.k:
        raise ValueError(f"functional has dimension {spec.k}, measure {m.k}")
    pts = m.points
    if spec.kind == "linear":
        return float(m.weights @ (pts @ spec.w))
    if spec.kind == "quadratic_x":
        return float(m.weights @ np.einsum("ni,ij,nj->n", pts, spec.M, pts))
    return float(spec.g @ (m.weights @ pts)) ** 2


@dataclass
class FlatDerivatives:
    """Flat derivatives averaged against the measure itself.

    ``dm`` is int D_m u(m, x) m(dx), ``dxdm`` is int D_x D_m u(m, x) m(dx)
    and ``dmm`` is the double integral of D^2_mm u(m, x, y).
    """

    first_variation: np.ndarray
    dm: np.ndarray
    dxdm: np.ndarray
    dmm: np.ndarray


def flat_derivatives(spec: FunctionalSpec, m: DiscreteMeasure) -> FlatDerivatives:
    """Closed-form derivatives of the test functional at ``m``.

    ``first_variation`` holds delta u / delta m evaluated at each atom.
    """
    pts = m.points
    k = spec.k
    if spec.kind == "linear":
        fv = pts @ spec.w
        return FlatDerivatives(fv, spec.w.copy(), np.zeros((k, k)), np.zeros((k, k)))
    if spec.kind == "quadratic_x":
        fv = np.einsum("ni,ij,nj->n", pts, spec.M, pts)
        dm = m.weights @ (2.0 * pts @ spec.M)
        return FlatDerivatives(fv, dm, 2.0 * spec.M, np.zeros((k, k)))
    mu = float(spec.g @ (m.weights @ pts))
    fv = 2.0 * mu * (pts @ spec.g)
    return FlatDerivatives(fv, 2.0 * mu * spec.g, np.zeros((k, k)), 2.0 * np.outer(spec.g, spec.g))


def a_measure(a, m: DiscreteMeasure, y: Signal, horizon: int) -> DiscreteMeasure:
    """Update measure of the rescaled belief: shifts of size 1/sqrt(T).

    ``m`` must lie on the lattice of spacing 1/sqrt(T) (for instance any
    measure of spacing 1/2 when T is a power of 4, or a point mass).
    """
    if horizon < 1:
        raise ValueError("T must be at least 1")
    if hat_a(a, y) == 0:
        raise ValueError(f"a_hat({y}) = 0: update measure undefined")
    h = 1.0 / math.sqrt(horizon)
    fine = mc.relattice(m, h)
    unit = mc.from_atoms(fine.atoms, fine.weights, 1.0)
    moved = belief_update(unit, a, y)
    return mc.DiscreteMeasure(moved.atoms, moved.weights, h)


def fit_slope(ts: Sequence[float], errors: Sequence[float], tol: float = EXACT_TOL) -> float:
    """Least-squares slope of log|error| against log T.

    Points with |error| <= tol are exact to rounding and are dropped; with
    fewer than two points left the slope is nan.
    """
    ts = np.asarray(ts, dtype=np.float64)
    err = np.abs(np.asarray(errors, dtype=np.float64))
    keep = err > tol
    if keep.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(ts[keep]), np.log(err[keep]), 1)[0])


@dataclass
class ExpansionReport:
    """Finite-T measurements of one expansion order against its limit."""

    order: int
    spec: FunctionalSpec
    signal: Signal
    ts: list[int] = field(default_factory=list)
    measured: list[float] = field(default_factory=list)
    predicted: list[float] = field(default_factory=list)
    roundoff: list[float] = field(default_factory=list)

    def __post_init__(self):
        if any(t2 <= t1 for t1, t2 in zip(self.ts, self.ts[1:])):
            raise ValueError("T values must be strictly increasing")

    @property
    def errors(self) -> np.ndarray:
        return np.abs(np.asarray(self.measured) - np.asarray(self.predicted))

    @property
    def max_error(self) -> float:
        return float(self.errors.max())

    @property
    def tolerances(self) -> np.ndarray:
        """Per-T threshold below which an error is rounding noise."""
        noise = np.asarray(self.roundoff if self.roundoff else [0.0] * len(self.ts))
        return np.maximum(EXACT_TOL, noise)

    @property
    def exact(self) -> bool:
        return bool(np.all(self.errors <= self.tolerances))

    @property
    def slope(self) -> float:
        keep = self.errors > self.tolerances
        return fit_slope(np.asarray(self.ts)[keep], self.errors[keep], tol=0.0)

    @property
    def passed(self) -> bool:
        """Exact at every T, or converging at rate 1/sqrt(T)."""
        return self.exact or SLOPE_WINDOW[0] <= self.slope <= SLOPE_WINDOW[1]

    def rows(self) -> list[tuple[int, float, float, float]]:
        return list(zip(self.ts, self.measured, self.predicted, self.errors.tolist()))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["T", "measured", "predicted", "error"])
        for t, meas, pred, err in self.rows():
            writer.writerow([t, fmt(meas), fmt(pred), fmt(err)])
        return buf.getvalue()

    def summary(self) -> dict:
        slope = self.slope
        return {
            "order": self.order,
            "functional": self.spec.to_json(),
            "signal": str(self.signal),
            "max_error": self.max_error,
            "exact": self.exact,
            "slope": slope,
            "passed": self.passed,
        }

    def to_json(self) -> str:
        return dumps(self.summary())


def _check_ts(ts) -> list[int]:
    ts = [int(t) for t in ts]
    if not ts or min(ts) < 1:
        raise ValueError("T list must hold positive integers")
    return ts


def _noise(factor: float, *values: float) -> float:
    # a difference of O(|u|) numbers carries about 64 ulps of error after amplification
    return factor * 64.0 * np.finfo(float).eps * max(1.0, *(abs(v) for v in values))


def first_order_check(spec: FunctionalSpec, a, m: DiscreteMeasure, y: Signal, ts) -> ExpansionReport:
    """Compare sqrt(T) (u(A) - u(m)) with the drift term v . int D_m u dm.

    v is -V_{a,i} for a positive signal and +V_{a,-i} for a negative one.
    """
    ts = _check_ts(ts)
    v = drift_vector(a, y)
    predicted = float(v @ flat_derivatives(spec, m).dm)
    report = ExpansionReport(1, spec, y, ts)
    for t in ts:
        root = math.sqrt(t)
        base = evaluate(spec, mc.relattice(m, 1.0 / root))
        moved = evaluate(spec, a_measure(a, m, y, t))
        report.measured.append(root * (moved - base))
        report.predicted.append(predicted)
        report.roundoff.append(_noise(root, base, moved))
    return report


def second_order_limit(spec: FunctionalSpec, a, m: DiscreteMeasure, y: Signal) -> float:
    """Diffusion term of the expansion.

    1/2 sum_j p_j s_j' Dx Dm u s_j + 1/2 sum_{j,k} p_j p_k s_j' D2mm u s_k,
    with p_j = a(j)/a_hat(y) and s_j the update shifts.
    """
    d = flat_derivatives(spec, m)
    kernel = update_kernel(a, y)
    if not kernel:
        raise ValueError(f"a_hat({y}) = 0: update measure undefined")
    p = np.array([w for w, _ in kernel])
    s = np.array([v for _, v in kernel], dtype=np.float64)
    local = 0.5 * float(p @ np.einsum("ni,ij,nj->n", s, d.dxdm, s))
    mean_shift = p @ s
    return local + 0.5 * float(mean_shift @ d.dmm @ mean_shift)


def second_order_check(spec: FunctionalSpec, a, m: DiscreteMeasure, y: Signal, ts) -> ExpansionReport:
    """Compare T (u(A) - u(m) - drift / sqrt(T)) with :func:`second_order_limit`."""
    ts = _check_ts(ts)
    drift = float(drift_vector(a, y) @ flat_derivatives(spec, m).dm)
    predicted = second_order_limit(spec, a, m, y)
    report = ExpansionReport(2, spec, y, ts)
    for t in ts:
        root = math.sqrt(t)
        base = evaluate(spec, mc.relattice(m, 1.0 / root))
        moved = evaluate(spec, a_measure(a, m, y, t))
        report.measured.append(t * (moved - base - drift / root))
        report.predicted.append(predicted)
        report.roundoff.append(_noise(t, base, moved, drift))
    return report


def _check_round(horizon: int, n: int, c: float):
    if horizon < 1 or not 0 <= n < horizon:
        raise ValueError(f"need 0 <= n < T, got n={n}, T={horizon}")
    if not c > 0:
        raise ValueError("C must be positive")


def _log_term(x: float) -> float:
    """x + (1 - x) log(1 - x) without cancellation for small x."""
    if x == 1.0:
        return 1.0
    if x > 0.1:
        return x + (1.0 - x) * math.log1p(-x)
    # series sum_{k>=2} x^k / (k (k - 1))
    total, term = 0.0, x
    for k in range(2, 40):
        term *= x
        total += term / (k * (k - 1))
    return total


def error_budget(horizon: int, n: int, c: float = 1.0) -> float:
    """Per-round remainder bound of the forecaster's telescoping argument.

    With h = 1/T and r = 1 - n/T the three pieces are

        I1 = int_0^h (h - s) (r - s)^{-3/2} ds = 2 h^2 / (sqrt(r) (sqrt(r) + sqrt(r - h))^2)
        I2 = int_0^h (h - s) / (r - s) ds      = r (x + (1 - x) log(1 - x)),  x = h / r
        I3 = 1 / (T^{3/2} r)

    and the bound is C (I1 + sqrt(T) I2 + I3).  All three stay finite at the
    last round n = T - 1, where r = h.
    """
    _check_round(horizon, n, c)
    h = 1.0 / horizon
    r = (horizon - n) / horizon
    i1 = 2.0 * h * h / (math.sqrt(r) * (math.sqrt(r) + math.sqrt(max(r - h, 0.0))) ** 2)
    i2 = r * _log_term(h / r)
    i3 = 1.0 / (horizon**1.5 * r)
    return c * (i1 + math.sqrt(horizon) * i2 + i3)


def error_budget_quad(horizon: int, n: int, c: float = 1.0) -> float:
    """Same quantity with the two integrals done by adaptive quadrature."""
    _check_round(horizon, n, c)
    h = 1.0 / horizon
    r = (horizon - n) / horizon
    opts = dict(epsabs=0.0, epsrel=1e-13, limit=200)
    if n == horizon - 1:
        # integrand of I1 reduces to (h - s)^{-1/2}; integrate against the algebraic weight
        i1 = spi.quad(lambda s: 1.0, 0.0, h, weight="alg", wvar=(0.0, -0.5), **opts)[0]
    else:
        i1 = spi.quad(lambda s: (h - s) / (r - s) ** 1.5, 0.0, h, **opts)[0]
    i2 = spi.quad(lambda s: (h - s) / (r - s) if r > s else 1.0, 0.0, h, **opts)[0]
    i3 = 1.0 / (horizon**1.5 * r)
    return c * (i1 + math.sqrt(horizon) * i2 + i3)


def total_error_budget(horizon: int, c: float = 1.0) -> float:
    """sum_{n=0}^{T-1} of :func:`error_budget`."""
    return math.fsum(error_budget(horizon, n, c) for n in range(horizon))


def measured_gradient(t: float, m: DiscreteMeasure, sigma: float = 1.0, step: float = 1e-5) -> np.ndarray:
    """Central differences of Phi(t, m) = int phi(t, x) m(dx) along translations.

    Component i is d/d eps Phi(t, m shifted by eps e_i), an estimate of
    int D_m Phi(t, m, x) m(dx) that never calls the analytic gradient.
    """
    pts = m.points
    out = np.empty(m.k)
    for i in range(m.k):
        e = np.zeros(m.k)
        e[i] = step
        up = m.weights @ heat_phi(t, pts + e, sigma)
        down = m.weights @ heat_phi(t, pts - e, sigma)
        out[i] = (up - down) / (2.0 * step)
    return out
