"""Nonconstancy diagnostics: Lambda over Sigma, the threshold test, the h family
and the c < I_K(1) certificate."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .cone import ConeSpec, ProjectionError, project_sigma, random_k_profile
from .energy import energy
from .grid import RadialGrid, RadialProfile, ball_volume, neumann_closure
from .quadrature import (
    PreconditionError,
    exponent_bounds_quiet,
    modular,
    modular_from_delta,
    modular_gradient,
    modular_hessian,
    tail_bound,
)
from .young import YoungFamily

__all__ = [
    "HTable",
    "LambdaEstimate",
    "estimate_lambda",
    "h_family",
    "nonconstancy_certificate",
    "solver_threads",
    "threshold_check",
]


def solver_threads() -> int:
    try:
        n = int(os.environ.get("SOLVER_THREADS", "0"))
    except ValueError:
        n = 0
    return max(1, n or (os.cpu_count() or 1))


@dataclass
class LambdaEstimate:
    value: float
    certificate: RadialProfile
    grid_tag: dict
    start_values: list[float]
    error_bar: float
    exterior_gradient_max: float
    eigen_value: float | None
    converged: bool
    exterior_mode: str = "neumann-closed; equals the free-exterior minimum on this grid"
    sigma_metric: str = "lumped weighted L2"

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "grid": self.grid_tag,
            "start_values": self.start_values,
            "error_bar": self.error_bar,
            "exterior_gradient_max": self.exterior_gradient_max,
            "eigen_value": self.eigen_value,
            "converged": self.converged,
            "exterior_mode": self.exterior_mode,
            "sigma_metric": self.sigma_metric,
        }


class _Objective:
    """v -> 2 rho(v with closed exterior), with its reduced gradient."""

    def __init__(self, fam: YoungFamily, grid: RadialGrid):
        self.fam, self.grid, self.n = fam, grid, grid.n_int
        self.quadratic = fam.kind == "power" and fam.params[0] == 2.0
        if self.quadratic:
            H = modular_hessian(np.zeros(grid.n_nodes), fam, grid)
            n = self.n
            hee = np.diag(H[n:, n:])
            self.ext_map = -(H[n:, :n] / hee[:, None])
            self.S = H[:n, :n] + H[:n, n:] @ self.ext_map

    def close(self, v):
        if self.quadratic:
            return np.concatenate([v, self.ext_map @ v])
        return neumann_closure(RadialProfile(v), self.fam, self.grid).values

    def __call__(self, v):
        if self.quadratic:
            Sv = self.S @ v
            return float(v @ Sv), 2.0 * Sv
        U = self.close(v)
        val = 2.0 * modular_from_delta(self.grid.pairs.diff @ U, self.fam, self.grid)
        return val, 2.0 * modular_gradient(U, self.fam, self.grid)[: self.n]


def _spg(obj: _Objective, v0, spec: ConeSpec, max_iter: int, tol: float):
    """Spectral projected gradient on Sigma with a non-monotone Armijo test."""
    w = spec.weights
    v = project_sigma(v0, spec)
    f, g = obj(v)
    hist = [f]
    alpha = 1.0 / max(float(np.max(np.abs(g / w))), 1e-12)
    converged = False
    for _ in range(max_iter):
        ref = max(hist[-10:])
        for _ in range(60):
            try:
                v_new = project_sigma(v - alpha * g / w, spec)
            except ProjectionError:
                alpha *= 0.5
                continue
            f_new, g_new = obj(v_new)
            if f_new <= ref - 1e-4 * float(g @ (v - v_new)) or f_new <= f - 1e-15 * abs(f):
                break
            alpha *= 0.5
        else:
            break
        s = v_new - v
        step = math.sqrt(float(w @ s**2))
        y = (g_new - g) / w
        sy = float(w @ (s * y))
        v, f, g = v_new, f_new, g_new
        hist.append(f)
        if step < tol:
            converged = True
            break
        alpha = float(w @ s**2) / sy if sy > 0 else 10 * alpha
        alpha = min(max(alpha, 1e-12), 1e6)
    return v, f, converged


def estimate_lambda(
    fam: YoungFamily,
    grid: RadialGrid,
    starts: int = 5,
    seed: int = 0,
    max_iter: int = 2000,
    tol: float = 1e-10,
) -> LambdaEstimate:
    """Minimise twice the modular over Sigma from several random monotone starts."""
    obj = _Objective(fam, grid)
    spec = ConeSpec(grid.weights)
    seqs = np.random.SeedSequence(seed).spawn(starts)

    def run(ss):
        rng = np.random.default_rng(ss)
        v0 = random_k_profile(grid.n_int, rng)
        return _spg(obj, v0, spec, max_iter, tol)

    with ThreadPoolExecutor(max_workers=min(starts, solver_threads())) as ex:
        results = list(ex.map(run, seqs))
    vals = [float(r[1]) for r in results]
    best = int(np.argmin(vals))
    v, val, conv = results[best]
    if not any(r[2] for r in results):
        from .solver import NumericalError

        raise NumericalError("no Lambda start converged", {"start_values": vals})
    U = obj.close(v)
    prof = RadialProfile(U[: grid.n_int], U[grid.n_int :])
    ext_grad = modular_gradient(U, fam, grid)[grid.n_int :]
    eig = None
    if obj.quadratic:
        ev = linalg.eigh(obj.S, np.diag(grid.weights), eigvals_only=True)
        eig = float(ev[1])
    return LambdaEstimate(
        float(val),
        prof,
        grid.params(),
        vals,
        2.0 * tail_bound(U, fam, grid),
        float(np.max(np.abs(ext_grad))) if len(ext_grad) else 0.0,
        eig,
        bool(conv),
    )


def threshold_check(p: float, q_plus: float, lam: float) -> bool:
    """(p/2)^((q+ - 2)/(p - 2)) * Lambda < p - 2."""
    if not (p > 2 and q_plus >= 2 and lam >= 0):
        raise ValueError("threshold check needs p > 2, q+ >= 2 and Lambda >= 0")
    return (p / 2) ** ((q_plus - 2) / (p - 2)) * lam < p - 2


@dataclass
class HTable:
    taus: np.ndarray
    values: np.ndarray
    h0: float
    h1: float
    h2: float
    h2_closed: float | None
    scale: float
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "tau": [float(x) for x in self.taus],
            "h": [float(x) for x in self.values],
            "h0": self.h0,
            "h1": self.h1,
            "h2": self.h2,
            "h2_closed": self.h2_closed,
            "scale": self.scale,
            **self.extra,
        }


def h_family(
    v: RadialProfile,
    fam: YoungFamily,
    grid: RadialGrid,
    p: float,
    r: float,
    taus=None,
    dtau: float = 1e-3,
) -> HTable:
    """Tabulate h(tau) for the path family t -> r (1 + tau v) t.

        h(tau) = (2 r^q+ |tau|^q- rho(v) + r^2 int (1 + tau v)^2)^p
                 - omega^(p-2) (r^p int |1 + tau v|^p)^2

    |tau|^q- extends the modular term to negative tau so that central
    differences can be taken at 0.  h'(0) is the central difference at dtau;
    h''(0) is the central second difference at dtau and dtau/2 combined by
    Richardson extrapolation with error order min(q- - 2, 2).
    """
    if not r > 1:
        raise PreconditionError("h family needs r > 1")
    vi = v.interior
    sup = float(np.max(np.abs(vi)))
    taus = np.array([-2, -1, -0.5, 0, 0.5, 1, 2]) * dtau if taus is None else np.asarray(taus, float)
    if np.any(np.abs(taus) * sup >= 1):
        raise PreconditionError("every |tau| must stay below 1 / sup|v|")
    b = exponent_bounds_quiet(fam)
    vc = v if v.closed else neumann_closure(v, fam, grid)
    rho_v = modular(vc, fam, grid).value
    w = grid.weights
    omega = float(w.sum())

    def h(tau):
        a = 2 * r**b.q_plus * abs(tau) ** b.q_minus * rho_v + r**2 * float(w @ (1 + tau * vi) ** 2)
        c = r**p * float(w @ np.abs(1 + tau * vi) ** p)
        return a**p - omega ** (p - 2) * c**2

    vals = np.array([h(t) for t in taus])
    h0 = h(0.0)
    h1 = (h(dtau) - h(-dtau)) / (2 * dtau)

    def d2(dt):
        return (h(dt) - 2 * h0 + h(-dt)) / dt**2

    k = min(b.q_minus - 2.0, 2.0)
    if k > 0:
        h2 = (2**k * d2(dtau / 2) - d2(dtau)) / (2**k - 1)
    else:
        h2 = d2(dtau / 2)
    closed = None
    if b.q_minus > 2:
        iv, iv2 = float(w @ vi), float(w @ vi**2)
        closed = 2 * p * (p - 2) * r ** (2 * p) * omega ** (p - 2) * (iv**2 - omega * iv2)
    scale = (r**2 * omega) ** p
    return HTable(taus, vals, float(h0), float(h1), float(h2), closed, float(scale),
                  {"rho_v": rho_v, "r": r, "dtau": dtau})


def nonconstancy_certificate(
    result,
    cfg,
    margin_tol: float = 1e-3,
    dist_tol: float = 0.1,
    lam: LambdaEstimate | None = None,
) -> dict:
    """Compare the mountain-pass level with I_K(1) and measure the distance to 0 and 1."""
    grid = cfg.grid
    u = result.profile
    w = grid.weights
    ik1 = (0.5 - 1.0 / cfg.p) * ball_volume(grid.N)
    c = float(result.c)
    e_check = energy(u, cfg.fam, grid, cfg.p).total
    d0 = math.sqrt(float(w @ u.interior**2))
    d1 = math.sqrt(float(w @ (u.interior - 1.0) ** 2))
    b = exponent_bounds_quiet(cfg.fam)
    rep = {
        "c": c,
        "energy_of_profile": e_check,
        "I_K(1)": ik1,
        "gap": ik1 - c,
        "gap_sign_consistent": bool(np.sign(ik1 - c) == np.sign(ik1 - e_check)),
        "dist_0": d0,
        "dist_1": d1,
        "margin_tol": margin_tol,
        "dist_tol": dist_tol,
        "lambda": None,
        "threshold": None,
    }
    if b.q_minus == 2:
        if lam is None:
            lam = estimate_lambda(cfg.fam, grid, seed=cfg.seed)
        rep["lambda"] = lam.value
        rep["threshold"] = threshold_check(cfg.p, b.q_plus, lam.value)
    rep["affirmative"] = bool(c < ik1 - margin_tol and min(d0, d1) > dist_tol)
    rep["strictly_below"] = bool(c < ik1 and min(d0, d1) > 0)
    return rep
