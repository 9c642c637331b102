"""Radial grids on R^N, radial profiles and the nonlocal Neumann closure."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from ._pairs import PairTable, build_pair_table

__all__ = [
    "ConfigError",
    "RadialGrid",
    "RadialProfile",
    "ball_integral",
    "ball_volume",
    "build_grid",
    "neumann_closure",
    "neumann_residual",
    "sphere_area",
]


class ConfigError(ValueError):
    """A configuration parameter is outside its admissible range."""


def ball_volume(N: int) -> float:
    """omega_N = |B_1| in R^N."""
    return math.pi ** (N / 2) / math.gamma(N / 2 + 1)


def sphere_area(k: int) -> float:
    """gamma_k = surface measure of the unit sphere S^k (gamma_0 = 2)."""
    return 2 * math.pi ** ((k + 1) / 2) / math.gamma((k + 1) / 2)


@dataclass(frozen=True)
class RadialGrid:
    N: int
    s: float
    M: int
    E: int
    R_out: float
    K_ang: int
    r: np.ndarray = field(repr=False)  # interior nodes, r[0] = 0, r[-1] = 1
    rho: np.ndarray = field(repr=False)  # exterior nodes in (1, R_out]
    ext_weights: np.ndarray = field(repr=False)  # d(rho) weights of the exterior rule

    @property
    def omega(self) -> float:
        return ball_volume(self.N)

    @property
    def n_int(self) -> int:
        return self.M + 1

    @property
    def n_nodes(self) -> int:
        return self.M + 1 + self.E

    @property
    def nodes(self) -> np.ndarray:
        return np.concatenate([self.r, self.rho])

    @cached_property
    def weights(self) -> np.ndarray:
        """Interior nodal weights gamma_{N-1} int hat_i(r) r^(N-1) dr (sum = omega_N)."""
        N, r = self.N, self.r
        w = np.zeros_like(r)
        for a in range(self.M):
            lo, hi = r[a], r[a + 1]
            # exact moments of the two hats on [lo, hi] against r^(N-1)
            m0 = (hi**N - lo**N) / N
            m1 = (hi ** (N + 1) - lo ** (N + 1)) / (N + 1)
            h = hi - lo
            w[a] += (hi * m0 - m1) / h
            w[a + 1] += (m1 - lo * m0) / h
        return sphere_area(self.N - 1) * w

    @cached_property
    def pairs(self) -> PairTable:
        return build_pair_table(
            self.r,
            self.rho,
            self.ext_weights,
            self.N,
            self.s,
            self.K_ang,
            sphere_area(self.N - 1),
            sphere_area(self.N - 2),
        )

    def params(self) -> dict:
        return {
            "N": self.N,
            "s": self.s,
            "M": self.M,
            "E": self.E,
            "R_out": self.R_out,
            "K_ang": self.K_ang,
        }

    def refined(self) -> RadialGrid:
        """Grid with M, E and K_ang doubled."""
        return build_grid(self.N, self.s, 2 * self.M, 2 * self.E, self.R_out, 2 * self.K_ang)


def build_grid(
    N: int = 2,
    s: float = 0.5,
    M: int = 32,
    E: int = 24,
    R_out: float = 16.0,
    K_ang: int = 32,
) -> RadialGrid:
    """Uniform interior nodes and exterior nodes with geometrically growing gaps.

    The exterior nodes are rho_j = 1 + d_j with d_1 = h/8 (h the interior
    spacing) and d_E = R_out - 1; they double as the nodes of a trapezoid
    rule in log(rho - 1).
    """
    if int(N) != N or N < 2:
        raise ConfigError(f"dimension N must be an integer >= 2, got {N}")
    if not (0 < s < 1):
        raise ConfigError(f"order s must lie in (0, 1), got {s}")
    if M < 8:
        raise ConfigError(f"need M >= 8 interior cells, got {M}")
    if E < 4:
        raise ConfigError(f"need E >= 4 exterior nodes, got {E}")
    if not (R_out > 1):
        raise ConfigError(f"need R_out > 1, got {R_out}")
    if K_ang < 16:
        raise ConfigError(f"need K_ang >= 16 angular nodes, got {K_ang}")
    N, M, E, K_ang = int(N), int(M), int(E), int(K_ang)
    r = np.linspace(0.0, 1.0, M + 1)
    d1 = min(1.0 / (8 * M), (R_out - 1) / 2)
    tau = np.linspace(np.log(d1), np.log(R_out - 1), E)
    d = np.exp(tau)
    dtau = tau[1] - tau[0]
    ext_w = dtau * d
    ext_w[0] *= 0.5
    ext_w[-1] *= 0.5
    ext_w[0] += d[0]  # the sliver (1, 1 + d_1)
    return RadialGrid(N, float(s), M, E, float(R_out), K_ang, r, 1.0 + d, ext_w)


@dataclass
class RadialProfile:
    """Nodal values of a radial function; piecewise linear in r.

    ``exterior`` is ``None`` until the profile has been closed.
    """

    interior: np.ndarray
    exterior: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.interior = np.asarray(self.interior, dtype=float)
        if self.exterior is not None:
            self.exterior = np.asarray(self.exterior, dtype=float)
        if not np.all(np.isfinite(self.interior)) or (
            self.exterior is not None and not np.all(np.isfinite(self.exterior))
        ):
            raise ValueError("profile values must be finite")

    @property
    def closed(self) -> bool:
        return self.exterior is not None

    @property
    def values(self) -> np.ndarray:
        if self.exterior is None:
            raise ValueError("profile has no exterior values; apply neumann_closure first")
        return np.concatenate([self.interior, self.exterior])

    @classmethod
    def from_function(cls, fn, grid: RadialGrid, exterior=None) -> RadialProfile:
        ext = None if exterior is None else np.asarray(exterior(grid.rho), dtype=float)
        return cls(np.asarray(fn(grid.r), dtype=float) * np.ones(grid.n_int), ext)

    @classmethod
    def constant(cls, c: float, grid: RadialGrid) -> RadialProfile:
        return cls(np.full(grid.n_int, float(c)), np.full(grid.E, float(c)))

    def __call__(self, radius, grid: RadialGrid) -> np.ndarray:
        """Evaluate the piecewise-linear interpolant (constant beyond the last node)."""
        vals = self.values if self.closed else self.interior
        nodes = grid.nodes if self.closed else grid.r
        return np.interp(radius, nodes, vals)

    def copy(self) -> RadialProfile:
        return RadialProfile(
            self.interior.copy(), None if self.exterior is None else self.exterior.copy()
        )

    def to_csv(self, path: str | Path, grid: RadialGrid) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["radius", "value", "region"])
            for x, v in zip(grid.r, self.interior):
                out.writerow([repr(float(x)), repr(float(v)), "interior"])
            if self.exterior is not None:
                for x, v in zip(grid.rho, self.exterior):
                    out.writerow([repr(float(x)), repr(float(v)), "exterior"])

    @classmethod
    def from_csv(cls, path: str | Path) -> RadialProfile:
        interior, exterior = [], []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                (interior if row["region"] == "interior" else exterior).append(float(row["value"]))
        return cls(np.array(interior), np.array(exterior) if exterior else None)


def ball_integral(u: RadialProfile, f, grid: RadialGrid) -> float:
    """Nodal quadrature of int_{B_1} f(u(x)) dx."""
    return float(grid.weights @ f(u.interior))


def neumann_functional(u: RadialProfile, fam, grid: RadialGrid, c=None) -> np.ndarray:
    """Discrete N_g u at every exterior node (trial values ``c`` default to u's own)."""
    pt = grid.pairs
    u_r = pt.cross_interp @ u.interior
    c = u.exterior if c is None else np.asarray(c, dtype=float)
    off = pt.n_cross_offset
    delta = np.repeat(c, pt.cross_stop - pt.cross_start) - u_r
    rows = slice(off, pt.n_pairs)
    contrib = pt.weight[rows] * pt.derivs(fam, delta, rows)
    return np.add.reduceat(contrib, pt.cross_start - off) if len(contrib) else np.zeros(0)


def neumann_closure(
    u: RadialProfile, fam, grid: RadialGrid, tol: float = 1e-12, max_iter: int = 200
) -> RadialProfile:
    """Exterior values solving N_g u = 0 at every exterior node, by bisection.

    The functional is non-decreasing in the trial value, so the root lies in
    [min u, max u] over the interior.  All exterior nodes are bisected together.
    """
    lo = np.full(grid.E, float(u.interior.min()))
    hi = np.full(grid.E, float(u.interior.max()))
    probe = RadialProfile(u.interior)
    for _ in range(max_iter):
        if np.all(hi - lo <= tol):
            break
        mid = 0.5 * (lo + hi)
        F = neumann_functional(probe, fam, grid, mid)
        hi = np.where(F > 0, mid, hi)
        lo = np.where(F < 0, mid, lo)
        flat = F == 0
        lo = np.where(flat, mid, lo)
        hi = np.where(flat, mid, hi)
    return RadialProfile(u.interior.copy(), 0.5 * (lo + hi))


def neumann_residual(u: RadialProfile, fam, grid: RadialGrid) -> np.ndarray:
    """Exterior Neumann residual normalised by the functional's slope at the root.

    Dividing N_g u by its derivative in the trial value turns the residual
    into the distance (in value units) from each exterior value to its root.
    """
    pt = grid.pairs
    off = pt.n_cross_offset
    F = neumann_functional(u, fam, grid)
    u_r = pt.cross_interp @ u.interior
    delta = np.repeat(u.exterior, pt.cross_stop - pt.cross_start) - u_r
    rows = slice(off, pt.n_pairs)
    slope = np.add.reduceat(pt.weight[rows] * pt.hessians(fam, delta, rows), pt.cross_start - off)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(slope > 0, F / slope, 0.0)
    return out
