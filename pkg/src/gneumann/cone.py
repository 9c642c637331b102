"""The cone K of non-negative non-decreasing profiles and the constraint set Sigma.

Both projections are in the weighted norm sum_i w_i v_i^2 with the grid's
lumped ball weights.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.optimize import isotonic_regression

from .grid import RadialGrid, RadialProfile

__all__ = [
    "ConeSpec",
    "ProjectionError",
    "is_in_k",
    "project_k",
    "project_monotone",
    "project_sigma",
    "qp_projection",
    "random_k_profile",
]


class ProjectionError(RuntimeError):
    def __init__(self, msg: str, last=None):
        super().__init__(msg)
        self.last = last


@dataclass(frozen=True)
class ConeSpec:
    weights: np.ndarray
    tol: float = 1e-10

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or not np.all(w > 0):
            raise ValueError("cone weights must be a vector of positive reals")
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_grid(cls, grid: RadialGrid, tol: float = 1e-10) -> ConeSpec:
        return cls(grid.weights, tol)


def _check(values, spec: ConeSpec) -> np.ndarray:
    x = np.asarray(values, dtype=float)
    if x.shape != spec.weights.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {spec.weights.shape}")
    return x


def project_monotone(values, spec: ConeSpec) -> np.ndarray:
    """Weighted isotonic (non-decreasing) regression by pool-adjacent-violators."""
    x = _check(values, spec)
    return isotonic_regression(x, weights=spec.weights, increasing=True).x


def project_k(values, spec: ConeSpec) -> np.ndarray:
    # Clipping after pooling is exact: v >= 0 for a non-decreasing v is the
    # single bound v_0 >= 0, which only ever lifts the leading blocks to 0.
    return np.maximum(project_monotone(values, spec), 0.0)


def is_in_k(u, spec: ConeSpec) -> bool:
    v = u.interior if isinstance(u, RadialProfile) else np.asarray(u, dtype=float)
    return bool(v.min() >= -spec.tol and np.all(np.diff(v) >= -spec.tol))


def _wmean(x, w):
    return float(w @ x) / float(w.sum())


def project_sigma(values, spec: ConeSpec, max_cycles: int = 10_000, tol: float = 1e-10) -> np.ndarray:
    """Dykstra iteration between the monotone cone and the zero-mean hyperplane,
    followed by scaling to unit weighted norm."""
    x = _check(values, spec)
    w = spec.weights
    cur = x.copy()
    p_inc = np.zeros_like(x)
    q_inc = np.zeros_like(x)
    for cycle in range(max_cycles):
        y = project_monotone(cur + p_inc, spec)
        p_inc = cur + p_inc - y
        z = y + q_inc
        nxt = z - _wmean(z, w)
        q_inc = y + q_inc - nxt
        change = float(np.max(np.abs(nxt - cur)))
        cur = nxt
        if change < tol and cycle > 0:
            break
    else:
        raise ProjectionError("Dykstra iteration did not settle", last=cur)
    norm = float(np.sqrt(w @ cur**2))
    scale = float(np.sqrt(w @ x**2)) or 1.0
    if norm <= 1e-12 * scale:
        raise ProjectionError("projection onto Sigma is degenerate (constant or decreasing input)")
    return cur / norm


def qp_projection(values, weights, nonneg: bool = False, zero_mean: bool = False) -> np.ndarray:
    """Brute-force weighted projection onto {v non-decreasing} with optional extras.

    Enumerates every active set and keeps the KKT point; only for small n.
    """
    x = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    n = len(x)
    if n > 10:
        raise ValueError("brute-force QP is limited to n <= 10")
    rows = []
    for i in range(n - 1):
        a = np.zeros(n)
        a[i], a[i + 1] = -1.0, 1.0
        rows.append(a)
    if nonneg:
        a = np.zeros(n)
        a[0] = 1.0
        rows.append(a)
    A = np.array(rows).reshape(-1, n)
    eq = [w.copy()] if zero_mean else []
    W = np.diag(w)
    best, best_cost = None, np.inf
    for k in range(len(A) + 1):
        for S in combinations(range(len(A)), k):
            C = np.array([A[i] for i in S] + eq).reshape(-1, n)
            m = len(C)
            K = np.block([[W, -C.T], [C, np.zeros((m, m))]])
            rhs = np.concatenate([W @ x, np.zeros(m)])
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                continue
            v, lam = sol[:n], sol[n : n + k]
            if np.all(A @ v >= -1e-12) and np.all(lam >= -1e-12):
                cost = float(w @ (v - x) ** 2)
                if cost < best_cost:
                    best, best_cost = v, cost
    return best


def random_k_profile(n: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """Random non-negative non-decreasing vector: flat stretches, ramps and jumps."""
    inc = rng.exponential(1.0, n) * (rng.random(n) < rng.uniform(0.2, 1.0))
    inc[0] = rng.exponential(0.5)
    v = np.cumsum(inc)
    top = v[-1] if v[-1] > 0 else 1.0
    return scale * rng.uniform(0.2, 2.0) * v / top
