"""Energy functional, norms on V and the discrete weak residual.

    I(u) = rho(u) + 1/2 int_B u^2 - 1/p int_B |u|^p

All ball integrals use the lumped nodal weights of the grid, so constants are
exact discrete solutions.  The nonlocal term is the pair quadrature of
:mod:`gneumann.quadrature`.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .grid import ConfigError, RadialGrid, RadialProfile, neumann_residual, sphere_area
from .quadrature import (
    PreconditionError,
    luxemburg,
    luxemburg_from_delta,
    modular,
    modular_gradient,
    modular_hessian,
)
from .young import YoungFamily

__all__ = [
    "EnergyReport",
    "ResidualReport",
    "energy",
    "energy_gradient",
    "k_energy",
    "radial_sup_bound",
    "radial_sup_constant",
    "v_norm",
    "weak_residual",
]


@dataclass(frozen=True)
class EnergyReport:
    modular_part: float
    l2_part: float
    lp_part: float
    total: float
    in_k: bool
    tail_bound: float

    @property
    def i_k(self) -> float:
        return self.total if self.in_k else math.inf

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ResidualReport:
    per_test: np.ndarray
    max_abs: float
    l2: float
    neumann_max: float

    def to_dict(self) -> dict:
        return {
            "per_test": [float(x) for x in self.per_test],
            "max_abs": self.max_abs,
            "l2": self.l2,
            "neumann_max": self.neumann_max,
        }


def _check_p(p: float) -> None:
    if not p > 2:
        raise ConfigError(f"the exponent p must exceed 2, got {p}")


def _in_k(v: np.ndarray, tol: float = 1e-10) -> bool:
    return bool(v.min() >= -tol and np.all(np.diff(v) >= -tol))


def energy(u: RadialProfile, fam: YoungFamily, grid: RadialGrid, p: float) -> EnergyReport:
    _check_p(p)
    mv = modular(u, fam, grid)
    w, v = grid.weights, u.interior
    l2 = 0.5 * float(w @ v**2)
    lp = float(w @ np.abs(v) ** p) / p
    return EnergyReport(mv.value, l2, lp, mv.value + l2 - lp, _in_k(v), mv.tail_bound)


def k_energy(u: RadialProfile, fam: YoungFamily, grid: RadialGrid, p: float) -> float:
    return energy(u, fam, grid, p).i_k


def energy_gradient(U: np.ndarray, fam: YoungFamily, grid: RadialGrid, p: float) -> np.ndarray:
    """Partial derivatives of the discrete I in every nodal value (exterior included)."""
    g = modular_gradient(U, fam, grid)
    v = U[: grid.n_int]
    g[: grid.n_int] += grid.weights * (v - np.abs(v) ** (p - 2) * v)
    return g


def energy_hessian(U: np.ndarray, fam: YoungFamily, grid: RadialGrid, p: float) -> np.ndarray:
    H = modular_hessian(U, fam, grid)
    v = U[: grid.n_int]
    idx = np.arange(grid.n_int)
    H[idx, idx] += grid.weights * (1.0 - (p - 1) * np.abs(v) ** (p - 2))
    return H


def _lp_norm(v: np.ndarray, grid: RadialGrid, p: float) -> float:
    return float(grid.weights @ np.abs(v) ** p) ** (1.0 / p)


def v_norm(u: RadialProfile, fam: YoungFamily, grid: RadialGrid, p: float) -> float:
    v = u.interior
    return (
        _lp_norm(v, grid, 2.0)
        + luxemburg(u, fam, grid).value
        + _lp_norm(v, grid, p)
    )


_HAT_NORMS: dict = {}


def hat_norms(fam: YoungFamily, grid: RadialGrid, p: float) -> np.ndarray:
    """V-norms of the interior hats, extended by zero outside the ball (cached)."""
    key = (id(grid), grid.params().__repr__(), fam.label(), float(p))
    if key in _HAT_NORMS:
        return _HAT_NORMS[key]
    D = grid.pairs.diff.tocsc()
    w = grid.weights
    out = np.empty(grid.n_int)
    for i in range(grid.n_int):
        col = D[:, i].toarray().ravel()
        lux = luxemburg_from_delta(col, fam, grid).value
        out[i] = math.sqrt(w[i]) + lux + w[i] ** (1.0 / p)
    _HAT_NORMS[key] = out
    return out


def weak_residual(
    u: RadialProfile, fam: YoungFamily, grid: RadialGrid, p: float
) -> ResidualReport:
    """Nodal residuals of the weak form, each divided by the V-norm of its hat test.

    The Neumann condition is not part of these tests; its largest exterior
    residual is reported alongside in ``neumann_max``.
    """
    _check_p(p)
    if not u.closed:
        raise PreconditionError("weak residual needs a closed profile")
    g = energy_gradient(u.values, fam, grid, p)[: grid.n_int]
    res = g / hat_norms(fam, grid, p)
    neu = neumann_residual(u, fam, grid)
    return ResidualReport(
        res,
        float(np.max(np.abs(res))),
        float(np.linalg.norm(res)),
        float(np.max(np.abs(neu))) if len(neu) else 0.0,
    )


def radial_sup_constant(N: int) -> float:
    return math.sqrt(N * 2**N / sphere_area(N - 1))


def radial_sup_bound(u: RadialProfile, grid: RadialGrid) -> tuple[float, float]:
    """(max interior value, C * ||u||_L2) for a profile in K.

    The comparison is returned, not asserted: a non-decreasing profile that
    rises steeply next to r = 1 can exceed the bound, since the averaging
    argument behind C only controls values on r <= 1/2.
    """
    v = u.interior
    if not _in_k(v):
        raise PreconditionError("radial sup bound needs a non-negative non-decreasing profile")
    return float(v.max()), radial_sup_constant(grid.N) * _lp_norm(v, grid, 2.0)
