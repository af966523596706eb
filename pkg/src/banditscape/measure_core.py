"""Finitely supported probability measures on a scaled integer lattice.

A measure is stored as integer lattice keys ``z`` with weights and one global
``scale`` so that the supported real points are ``scale * z``.  Game shifts are
integer vectors, which keeps beliefs exactly on the lattice and makes atom
merging a matter of comparing integers instead of floats.

All functions are pure: they return new measures and never mutate inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

NORMALIZATION_TOL = 1e-12
DEFAULT_PRUNE_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Probability measure ``sum_k w_k delta_{scale * z_k}`` on R^K.

    Attributes
    ----------
    atoms : numpy.ndarray
        Integer array of shape (n, K), unique rows in lexicographic order.
    weights : numpy.ndarray
        Positive weights of shape (n,) summing to one.
    scale : float
        Positive lattice spacing.
    """

    atoms: np.ndarray
    weights: np.ndarray
    scale: float = 1.0

    @property
    def k(self) -> int:
        return self.atoms.shape[1]

    @property
    def size(self) -> int:
        return self.atoms.shape[0]

    @property
    def points(self) -> np.ndarray:
        """Real coordinates of the atoms, shape (n, K)."""
        return self.scale * self.atoms

    def __repr__(self) -> str:
        if self.size <= 6:
            body = ", ".join(
                f"{tuple(int(v) for v in z)}: {w:.6g}" for z, w in zip(self.atoms, self.weights)
            )
        else:
            body = f"{self.size} atoms"
        return f"DiscreteMeasure(k={self.k}, scale={self.scale:g}, {{{body}}})"

    def as_dict(self) -> dict[tuple[int, ...], float]:
        return {tuple(int(v) for v in z): float(w) for z, w in zip(self.atoms, self.weights)}


def _lattice_keys(x) -> np.ndarray:
    raw = np.asarray(x)
    if raw.dtype.kind == "f":
        if not np.all(np.isfinite(raw)) or np.any(raw != np.rint(raw)):
            raise ValueError("lattice keys must be integers")
    return raw.astype(np.int64)


def from_atoms(atoms, weights, scale: float = 1.0, *, normalize: bool = True) -> DiscreteMeasure:
    """Build a measure from possibly repeated lattice keys.

    Duplicate keys are merged, zero weights dropped and the result renormalized.
    Non-integer keys raise ValueError.
    """
    atoms = _lattice_keys(atoms)
    weights = np.asarray(weights, dtype=np.float64).ravel()
    if atoms.ndim != 2:
        raise ValueError(f"atoms must be a 2-d array, got shape {atoms.shape}")
    if atoms.shape[1] < 2:
        raise ValueError("dimension K must be at least 2")
    if atoms.shape[0] != weights.shape[0]:
        raise ValueError("atoms and weights have different lengths")
    if not (scale > 0 and math.isfinite(scale)):
        raise ValueError(f"scale must be positive and finite, got {scale}")
    if np.any(weights < 0) or not np.all(np.isfinite(weights)):
        raise ValueError("weights must be finite and nonnegative")

    keep = weights > 0
    atoms, weights = atoms[keep], weights[keep]
    if atoms.shape[0] == 0:
        raise ValueError("measure has no mass")

    uniq, inverse = np.unique(atoms, axis=0, return_inverse=True)
    merged = np.bincount(inverse.ravel(), weights=weights, minlength=uniq.shape[0])
    if normalize:
        merged = merged / merged.sum()
    uniq.setflags(write=False)
    merged.setflags(write=False)
    return DiscreteMeasure(uniq, merged, float(scale))


def point_mass(x: Sequence[int] | int = 0, k: int | None = None, scale: float = 1.0) -> DiscreteMeasure:
    """Dirac mass at lattice point ``x`` (an integer vector, or 0 for the origin)."""
    if np.isscalar(x):
        if k is None:
            raise ValueError("k is required when x is a scalar")
        z = np.full(k, int(x), dtype=np.int64)
    else:
        z = _lattice_keys(x)
        if k is not None and z.shape != (k,):
            raise ValueError(f"point has shape {z.shape}, expected ({k},)")
    return from_atoms(z[None, :], [1.0], scale)


def pushforward_shift(m: DiscreteMeasure, v) -> DiscreteMeasure:
    """Translate every atom by the lattice vector ``v`` (real shift ``m.scale * v``)."""
    v = np.asarray(v, dtype=np.int64)
    if v.shape != (m.k,):
        raise ValueError(f"shift has shape {v.shape}, expected ({m.k},)")
    atoms = m.atoms + v
    atoms.setflags(write=False)
    # translation preserves lexicographic order and uniqueness
    return DiscreteMeasure(atoms, m.weights, m.scale)


def scale(m: DiscreteMeasure, lam: float) -> DiscreteMeasure:
    """Dilation ``m^{*lam}``: integrals satisfy int f dm^{*lam} = int f(lam x) dm."""
    if not lam > 0:
        raise ValueError(f"dilation factor must be positive, got {lam}")
    return DiscreteMeasure(m.atoms, m.weights, m.scale * float(lam))


def same_scale(s1: float, s2: float) -> bool:
    return math.isclose(s1, s2, rel_tol=1e-12, abs_tol=0.0)


def mix(components: Iterable[tuple[float, DiscreteMeasure]]) -> DiscreteMeasure:
    """Weighted mixture of measures sharing dimension and scale."""
    components = [(float(w), m) for w, m in components]
    if not components:
        raise ValueError("mix needs at least one component")
    if any(w < 0 for w, _ in components):
        raise ValueError("mixture weights must be nonnegative")
    total = sum(w for w, _ in components)
    if not total > 0:
        raise ValueError("mixture weights sum to zero")
    ref = components[0][1]
    for _, m in components:
        if m.k != ref.k:
            raise ValueError("cannot mix measures of different dimension")
        if not same_scale(m.scale, ref.scale):
            raise ValueError(
                f"cannot mix measures with scales {ref.scale!r} and {m.scale!r}; rescale first"
            )
    atoms = np.concatenate([m.atoms for w, m in components if w > 0])
    weights = np.concatenate([(w / total) * m.weights for w, m in components if w > 0])
    return from_atoms(atoms, weights, ref.scale)


def mean(m: DiscreteMeasure) -> np.ndarray:
    return m.scale * (m.weights @ m.atoms)


def integrate(m: DiscreteMeasure, f: Callable[[np.ndarray], np.ndarray]) -> float:
    """Exact integral of ``f`` against ``m``.

    ``f`` is vectorized: it receives the (n, K) array of real atom coordinates
    and returns n values.
    """
    values = np.asarray(f(m.points), dtype=np.float64)
    if values.shape != (m.size,):
        raise ValueError(f"integrand returned shape {values.shape}, expected ({m.size},)")
    return float(m.weights @ values)


def max_coordinate(points: np.ndarray) -> np.ndarray:
    """Vectorized ``x -> max_i x^i``."""
    return points.max(axis=-1)


def prune(m: DiscreteMeasure, eps: float = DEFAULT_PRUNE_EPS) -> tuple[DiscreteMeasure, float]:
    """Drop atoms lighter than ``eps`` and renormalize.

    Returns the pruned measure and the total mass removed.
    """
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    keep = m.weights >= eps
    removed = float(m.weights[~keep].sum())
    if not keep.any():
        raise ValueError(f"pruning at eps={eps} removes all mass")
    if keep.all():
        return m, 0.0
    return from_atoms(m.atoms[keep], m.weights[keep], m.scale), removed


def diameter(m: DiscreteMeasure) -> float:
    """Largest Euclidean distance between support points."""
    pts = m.points
    if m.size == 1:
        return 0.0
    diffs = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt((diffs**2).sum(-1)).max())


def relattice(m: DiscreteMeasure, new_scale: float, tol: float = 1e-9) -> DiscreteMeasure:
    """Re-express ``m`` on the lattice of spacing ``new_scale``.

    Raises ValueError if some atom does not lie on the finer lattice.
    """
    if same_scale(m.scale, new_scale):
        return m
    ratio = m.scale / new_scale
    z = m.atoms * ratio
    zi = np.rint(z)
    if np.any(np.abs(z - zi) > tol * np.maximum(1.0, np.abs(z))):
        raise ValueError(f"atoms of scale {m.scale!r} are not on the lattice of scale {new_scale!r}")
    return from_atoms(zi.astype(np.int64), m.weights, new_scale)


def unit_shift_factor(m: DiscreteMeasure) -> int:
    """Lattice steps per unit of real length; raises if 1/scale is not an integer."""
    q = 1.0 / m.scale
    qi = round(q)
    if qi < 1 or abs(q - qi) > 1e-9 * qi:
        raise ValueError(
            f"unit real shifts are not lattice shifts at scale {m.scale!r}; relattice first"
        )
    return int(qi)


def shift_real(m: DiscreteMeasure, v) -> DiscreteMeasure:
    """Translate by an integer vector ``v`` in real coordinates."""
    return pushforward_shift(m, unit_shift_factor(m) * np.asarray(v, dtype=np.int64))


def allclose(m1: DiscreteMeasure, m2: DiscreteMeasure, atol: float = 1e-12) -> bool:
    """Atomwise comparison on the union of supports."""
    if m1.k != m2.k or not same_scale(m1.scale, m2.scale):
        return False
    d1, d2 = m1.as_dict(), m2.as_dict()
    return all(abs(d1.get(z, 0.0) - d2.get(z, 0.0)) <= atol for z in d1.keys() | d2.keys())


def max_weight_diff(m1: DiscreteMeasure, m2: DiscreteMeasure) -> float:
    d1, d2 = m1.as_dict(), m2.as_dict()
    return max(abs(d1.get(z, 0.0) - d2.get(z, 0.0)) for z in d1.keys() | d2.keys())


def to_json(m: DiscreteMeasure) -> dict:
    """Serializable form ``{"k", "scale", "atoms": [[z1..zK, w], ...]}`` in lexicographic order."""
    return {
        "k": m.k,
        "scale": m.scale,
        "atoms": [[int(v) for v in z] + [float(w)] for z, w in zip(m.atoms, m.weights)],
    }


def from_json(obj: dict) -> DiscreteMeasure:
    k = int(obj["k"])
    rows = obj["atoms"]
    if any(len(r) != k + 1 for r in rows):
        raise ValueError("each atom row must hold K coordinates and a weight")
    atoms = np.array([r[:k] for r in rows], dtype=np.int64).reshape(-1, k)
    weights = np.array([r[k] for r in rows], dtype=np.float64)
    return from_atoms(atoms, weights, float(obj["scale"]))


def random_measure(rng: np.random.Generator, k: int, size: int, radius: int = 5, scale: float = 1.0):
    """Random measure with at most ``size`` atoms in the box [-radius, radius]^K."""
    atoms = rng.integers(-radius, radius + 1, size=(size, k))
    weights = rng.random(size) + 1e-3
    return from_atoms(atoms, weights, scale)
