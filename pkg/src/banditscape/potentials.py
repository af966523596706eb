"""Heat-equation potentials built from the expected maximum of Gaussians.

The potential is

    phi(t, x) = E[max_i (x_i + s Z_i)],   s = sigma * sqrt(1 - t),

with Z standard normal in R^K.  It solves d_t phi + (sigma^2 / 2) Lap phi = 0
with terminal value max_i x_i.  Rather than integrating the kinked max over a
K-dimensional tensor grid, every quantity is written as a one-dimensional
Gaussian integral of a smooth integrand, conditioning on which coordinate
attains the max:

    phi    = sum_i  E_z[(x_i + s z) prod_{k != i} Phi(z + c_ik)]
    grad_i =        E_z[prod_{k != i} Phi(z + c_ik)]
    H_ik   = -(1/s) E_z[n(z + c_ik) prod_{l != i,k} Phi(z + c_il)],   i != k

where c_ik = (x_i - x_k) / s, Phi/n are the standard normal cdf/pdf.  These
integrands are smooth, so Gauss-Hermite quadrature converges quickly; the
default node count grows with K (64 nodes up to K = 5, 96 up to K = 10) to
keep errors near 1e-14.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri
from scipy.stats import qmc

from .game_engine import is_balanced, subset_vector

DEFAULT_QMC_POINTS = 2**16
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class HeatPotential:
    """phi(t, x) = E max(x + sigma sqrt(1-t) Z) with its derivatives."""

    k: int
    sigma: float = 1.0
    nodes: int | None = None

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("K must be at least 2")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    def phi(self, t, x):
        return heat_phi(t, x, self.sigma, nodes=self.nodes)

    def grad(self, t, x):
        return heat_grad(t, x, self.sigma, nodes=self.nodes)

    def hessian(self, t, x):
        return heat_hessian(t, x, self.sigma, nodes=self.nodes)

    def dt(self, t, x):
        return heat_dt(t, x, self.sigma, nodes=self.nodes)


@functools.lru_cache(maxsize=16)
def gauss_hermite(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for E[f(Z)], Z ~ N(0, 1)."""
    z, w = np.polynomial.hermite_e.hermegauss(n)
    w = w / math.sqrt(2.0 * math.pi)
    z.setflags(write=False)
    w.setflags(write=False)
    return z, w


def default_nodes(k: int) -> int:
    if k <= 5:
        return 64
    return 96 if k <= 10 else 128


def _rule(nodes: int | None, k: int) -> tuple[np.ndarray, np.ndarray]:
    return gauss_hermite(default_nodes(k) if nodes is None else int(nodes))


def _check_t(t: float, allow_one: bool = True) -> float:
    t = float(t)
    if not (0.0 <= t <= 1.0):
        raise ValueError(f"t must lie in [0, 1], got {t}")
    if not allow_one and t == 1.0:
        raise ValueError("derivative is undefined at t = 1")
    return t


def _spread(t: float, sigma: float) -> float:
    return sigma * math.sqrt(1.0 - t)


def _prod_cdf(x: np.ndarray, s: float, z: np.ndarray):
    """Per-coordinate pieces shared by phi, grad and dt.

    Returns ``cdf`` of shape (..., K, K, n) holding Phi(z + c_ik) with ones on
    the diagonal, and its product over k, shape (..., K, n).
    """
    c = (x[..., :, None] - x[..., None, :]) / s
    cdf = ndtr(c[..., None] + z)
    k = x.shape[-1]
    cdf[..., np.arange(k), np.arange(k), :] = 1.0
    return cdf, cdf.prod(axis=-2)


def heat_phi(t, x, sigma: float = 1.0, k: int | None = None, *, nodes: int | None = None, method: str = "quad", qmc_points: int = DEFAULT_QMC_POINTS, seed: int = 0):
    """phi(t, x) for a single point (K,) or a batch (..., K).

    ``method="qmc"`` uses a scrambled Sobol estimate of the K-dimensional
    expectation instead, an independent route kept for cross-checks.
    """
    t = _check_t(t)
    x = np.asarray(x, dtype=np.float64)
    if k is not None and x.shape[-1] != k:
        raise ValueError(f"point has {x.shape[-1]} coordinates, expected {k}")
    if t == 1.0:
        return x.max(axis=-1)
    s = _spread(t, sigma)
    # centering makes phi(t, x + lam 1) = phi(t, x) + lam hold to rounding
    center = x.mean(axis=-1)
    xc = x - center[..., None]
    if method == "qmc":
        return center + _phi_qmc(xc, s, qmc_points, seed)
    if method != "quad":
        raise ValueError(f"unknown method {method!r}")
    z, w = _rule(nodes, x.shape[-1])
    _, prod = _prod_cdf(xc, s, z)
    vals = (xc[..., :, None] + s * z) * prod
    return center + (vals @ w).sum(axis=-1)


def _phi_qmc(x: np.ndarray, s: float, n_points: int, seed: int) -> np.ndarray:
    k = x.shape[-1]
    sampler = qmc.Sobol(d=k, scramble=True, seed=seed)
    u = sampler.random(n_points)
    zs = ndtri(u)
    flat = x.reshape(-1, k)
    out = np.array([np.max(row + s * zs, axis=1).mean() for row in flat])
    return out.reshape(x.shape[:-1])


def heat_grad(t, x, sigma: float = 1.0, k: int | None = None, *, nodes: int | None = None) -> np.ndarray:
    """Gradient of phi: component i is P(i attains max of x + s Z).

    At t = 1 the gradient of max is returned where it exists; a tied max raises.
    """
    t = _check_t(t)
    x = np.asarray(x, dtype=np.float64)
    if k is not None and x.shape[-1] != k:
        raise ValueError(f"point has {x.shape[-1]} coordinates, expected {k}")
    if t == 1.0:
        return _terminal_argmax(x)
    z, w = _rule(nodes, x.shape[-1])
    _, prod = _prod_cdf(x, _spread(t, sigma), z)
    return prod @ w


def _terminal_argmax(x: np.ndarray) -> np.ndarray:
    top = x.max(axis=-1, keepdims=True)
    hits = x == top
    if np.any(hits.sum(axis=-1) > 1):
        raise ValueError("gradient of max is undefined at a tied maximum (t = 1)")
    return hits.astype(np.float64)


def heat_hessian(t, x, sigma: float = 1.0, k: int | None = None, *, nodes: int | None = None) -> np.ndarray:
    """Hessian of phi in x, shape (..., K, K); symmetric with zero row sums."""
    t = _check_t(t)
    x = np.asarray(x, dtype=np.float64)
    kk = x.shape[-1]
    if k is not None and kk != k:
        raise ValueError(f"point has {kk} coordinates, expected {k}")
    if t == 1.0:
        _terminal_argmax(x)
        return np.zeros(x.shape + (kk,))
    s = _spread(t, sigma)
    z, w = _rule(nodes, x.shape[-1])
    c = (x[..., :, None] - x[..., None, :]) / s
    arg = c[..., None] + z
    cdf = ndtr(arg)
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * arg * arg)
    idx = np.arange(kk)
    cdf[..., idx, idx, :] = 1.0
    off = np.zeros(x.shape + (kk,))
    for col in range(kk):
        # replace the factor Phi(z + c_i,col) by n(z + c_i,col) in each row's product
        factors = cdf.copy()
        factors[..., :, col, :] = pdf[..., :, col, :]
        off[..., :, col] = -(factors.prod(axis=-2) @ w) / s
    off[..., idx, idx] = 0.0
    off = 0.5 * (off + np.swapaxes(off, -1, -2))
    hess = off.copy()
    hess[..., idx, idx] = -off.sum(axis=-1)
    return hess


def heat_dt(t, x, sigma: float = 1.0, k: int | None = None, *, nodes: int | None = None):
    """Time derivative of phi, from d phi / d s = E[Z_{argmax}] and ds/dt.

    Computed independently of the Hessian so the heat equation itself can be
    checked.
    """
    t = _check_t(t, allow_one=False)
    x = np.asarray(x, dtype=np.float64)
    if k is not None and x.shape[-1] != k:
        raise ValueError(f"point has {x.shape[-1]} coordinates, expected {k}")
    s = _spread(t, sigma)
    z, w = _rule(nodes, x.shape[-1])
    _, prod = _prod_cdf(x, s, z)
    dphi_ds = ((z * prod) @ w).sum(axis=-1)
    return dphi_ds * (-sigma / (2.0 * math.sqrt(1.0 - t)))


def heat_grad_two(t: float, x, sigma: float = 1.0) -> np.ndarray:
    """Closed form for K = 2: grad_1 = Phi((x1 - x2) / (sigma sqrt(2(1-t))))."""
    t = _check_t(t, allow_one=False)
    x = np.asarray(x, dtype=np.float64)
    d = (x[..., 0] - x[..., 1]) / (sigma * math.sqrt(2.0 * (1.0 - t)))
    g1 = ndtr(d)
    return np.stack([g1, 1.0 - g1], axis=-1)


def heat_phi_two(t: float, x, sigma: float = 1.0) -> np.ndarray:
    """Closed form for K = 2: phi = x2 + d Phi(d / r) + r n(d / r), d = x1 - x2, r = sigma sqrt(2(1-t))."""
    t = _check_t(t)
    x = np.asarray(x, dtype=np.float64)
    if t == 1.0:
        return x.max(axis=-1)
    r = sigma * math.sqrt(2.0 * (1.0 - t))
    d = x[..., 0] - x[..., 1]
    u = d / r
    return x[..., 1] + d * ndtr(u) + r * _INV_SQRT_2PI * np.exp(-0.5 * u * u)


def heat_hessian_two(t: float, x, sigma: float = 1.0) -> np.ndarray:
    """Closed form for K = 2: H11 = n(d) / (sigma sqrt(2(1-t))), H12 = -H11."""
    t = _check_t(t, allow_one=False)
    x = np.asarray(x, dtype=np.float64)
    r = sigma * math.sqrt(2.0 * (1.0 - t))
    d = (x[..., 0] - x[..., 1]) / r
    h = _INV_SQRT_2PI * np.exp(-0.5 * d * d) / r
    return np.stack([np.stack([h, -h], -1), np.stack([-h, h], -1)], -2)


def expected_max_two(sigma: float = 1.0) -> float:
    """E max(sigma Z1, sigma Z2) = sigma / sqrt(pi)."""
    return sigma / math.sqrt(math.pi)


def direction_matrix(i: int, a) -> np.ndarray:
    """sum_j a(j) (1{i in j} e_{j^c} e_{j^c}^T + 1{i not in j} e_j e_j^T)."""
    a = np.asarray(a, dtype=np.float64)
    k = int(round(math.log2(a.shape[0])))
    if not 0 <= i < k:
        raise ValueError(f"action {i} out of range for K={k}")
    out = np.zeros((k, k))
    for j in range(a.shape[0]):
        if a[j] == 0:
            continue
        v = _vertex_direction(i, j, k)
        out += a[j] * np.outer(v, v)
    return out


def _vertex_direction(i: int, j: int, k: int) -> np.ndarray:
    ej = subset_vector(j, k)
    return (1 - ej) if (j >> i) & 1 else ej


def _vertex_directions(k: int) -> np.ndarray:
    """All direction vectors over (i, vertex j), shape (K * 2**K, K)."""
    return np.array([_vertex_direction(i, j, k) for i in range(k) for j in range(2**k)], dtype=np.float64)


def supersolution_residual(t, x, sigma: float = 1.0, k: int | None = None, *, nodes: int | None = None):
    """d_t phi + 1/2 sup_{i, a} Tr(D^2 phi M(i, a)).

    The trace is linear in a, so the sup over the subset simplex is a max over
    its vertices; each vertex gives the quadratic form v^T H v with v = e_{j^c}
    or e_j.
    """
    x = np.asarray(x, dtype=np.float64)
    kk = x.shape[-1]
    hess = heat_hessian(t, x, sigma, k, nodes=nodes)
    dirs = _vertex_directions(kk)
    quad = np.einsum("pa,...ab,pb->...p", dirs, hess, dirs)
    return heat_dt(t, x, sigma, nodes=nodes) + 0.5 * quad.max(axis=-1)


def subsolution_residual(t, x, a, sigma: float = 0.5, k: int | None = None, *, nodes: int | None = None):
    """d_t phi + 1/2 inf_i Tr(D^2 phi M(i, a)) for a balanced adversary mix ``a``."""
    if not is_balanced(a):
        raise ValueError("subsolution residual requires a balanced adversary mix")
    x = np.asarray(x, dtype=np.float64)
    kk = x.shape[-1]
    hess = heat_hessian(t, x, sigma, k, nodes=nodes)
    mats = np.stack([direction_matrix(i, a) for i in range(kk)])
    traces = np.einsum("...ab,iba->...i", hess, mats)
    return heat_dt(t, x, sigma, nodes=nodes) + 0.5 * traces.min(axis=-1)


def third_derivative(t: float, x, sigma: float = 1.0, *, nodes: int | None = None, rel_step: float = 1e-3) -> np.ndarray:
    """d^3 phi / dx^3 as a (K, K, K) tensor by central differences of the Hessian."""
    x = np.asarray(x, dtype=np.float64)
    kk = x.shape[-1]
    h = rel_step * _spread(t, sigma)
    out = np.empty((kk, kk, kk))
    for l in range(kk):
        e = np.zeros(kk)
        e[l] = h
        out[:, :, l] = (heat_hessian(t, x + e, sigma, nodes=nodes) - heat_hessian(t, x - e, sigma, nodes=nodes)) / (2 * h)
    return out


def _time_difference(f, t: float, h: float):
    """Central difference in t, or the second-order forward formula when t - h < 0."""
    if t - h >= 0.0:
        return (f(t + h) - f(t - h)) / (2 * h)
    return (-3.0 * f(t) + 4.0 * f(t + h) - f(t + 2 * h)) / (2 * h)


def time_space_derivative(t: float, x, sigma: float = 1.0, *, nodes: int | None = None, rel_step: float = 1e-3) -> np.ndarray:
    """d^2 phi / dt dx by differences of the gradient in t."""
    h = rel_step * (1.0 - t)
    return _time_difference(lambda u: heat_grad(u, x, sigma, nodes=nodes), t, h)


def second_time_derivative(t: float, x, sigma: float = 1.0, *, nodes: int | None = None, rel_step: float = 1e-3) -> float:
    """d^2 phi / dt^2 by differences of d_t phi."""
    h = rel_step * (1.0 - t)
    return float(_time_difference(lambda u: heat_dt(u, x, sigma, nodes=nodes), t, h))


@dataclass
class GrowthProbe:
    t_grid: np.ndarray
    tt: np.ndarray  # sup |d_tt phi| (1-t)^{3/2}
    xxx: np.ndarray  # sup |d_xxx phi| (1-t)
    tx: np.ndarray  # sup |d_tx phi| (1-t)
    slopes: dict[str, float]
    constant: float

    @property
    def bounded(self) -> bool:
        return all(abs(v) < 0.1 for v in self.slopes.values()) and bool(np.isfinite(self.constant))


def derivative_growth_probe(sigma: float, k: int, t_grid, x_samples) -> GrowthProbe:
    """Fit the constant in the derivative growth bounds of the potential.

    The derivative sups are attained on the diffusion scale, so the unit-scale
    ``x_samples`` (shape (n, K)) are placed at x = sigma sqrt(1-t) u for each t.
    Each scaled quantity should be flat in t; the log-log slope against (1-t)
    is reported per quantity.
    """
    t_grid = np.asarray(t_grid, dtype=np.float64)
    if np.any(t_grid < 0) or np.any(t_grid >= 1):
        raise ValueError("t grid must lie in [0, 1)")
    u = np.asarray(x_samples, dtype=np.float64).reshape(-1, k)
    tt, xxx, tx = [], [], []
    for t in t_grid:
        s = _spread(t, sigma)
        pts = s * u
        tt.append(max(abs(second_time_derivative(t, p, sigma)) for p in pts) * (1 - t) ** 1.5)
        xxx.append(max(np.abs(third_derivative(t, p, sigma)).max() for p in pts) * (1 - t))
        tx.append(max(np.abs(time_space_derivative(t, p, sigma)).max() for p in pts) * (1 - t))
    tt, xxx, tx = map(np.array, (tt, xxx, tx))
    log_r = np.log(1 - t_grid)
    slopes = {}
    for name, vals in (("tt", tt), ("xxx", xxx), ("tx", tx)):
        slopes[name] = float(np.polyfit(log_r, np.log(vals), 1)[0]) if len(t_grid) > 1 else 0.0
    constant = float(max(tt.max(), xxx.max() + tx.max()))
    return GrowthProbe(t_grid, tt, xxx, tx, slopes, constant)
