"""Mountain-pass search on K, the auxiliary convex problem and its fixed-point iteration."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import linalg, optimize

from .cone import ConeSpec, is_in_k, project_k
from .energy import energy, energy_gradient, energy_hessian, hat_norms, weak_residual
from .grid import (
    ConfigError,
    RadialGrid,
    RadialProfile,
    ball_volume,
    build_grid,
    neumann_closure,
)
from .quadrature import exponent_bounds_quiet, modular_from_delta, modular_hessian
from .young import YoungFamily

__all__ = [
    "MountainPassResult",
    "NumericalError",
    "SolverConfig",
    "constant_diagnostics",
    "FixedPointResult",
    "fixed_point",
    "mountain_pass",
    "solve_auxiliary",
]

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    """An iteration failed to converge or left its admissible set."""

    def __init__(self, msg: str, diagnostics: dict | None = None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}


@dataclass
class SolverConfig:
    p: float
    fam: YoungFamily
    N: int = 2
    s: float = 0.5
    M: int = 64
    E: int = 32
    R_out: float = 16.0
    K_ang: int = 32
    path_nodes: int = 32
    max_deform_steps: int = 400
    max_fixed_point_iters: int = 50
    step_size0: float = 0.1
    tol_residual: float = 1e-3
    tol_fixed_point: float = 1e-6
    seed: int = 0
    _grid: RadialGrid | None = field(default=None, repr=False, compare=False)

    def validate(self) -> None:
        if not self.p > 2:
            raise ConfigError(f"p must exceed 2, got {self.p}")
        b = exponent_bounds_quiet(self.fam)
        if b.q_minus < 2:
            raise ConfigError(f"need q- >= 2, got {b.q_minus:g}")
        if not b.q_plus < self.p:
            raise ConfigError(f"need q+ < p, got q+ = {b.q_plus:g}, p = {self.p:g}")
        if self.path_nodes < 16:
            raise ConfigError("path_nodes must be at least 16")
        if self.max_deform_steps < 1 or self.max_fixed_point_iters < 1:
            raise ConfigError("iteration limits must be positive")
        if not (self.step_size0 > 0 and self.tol_residual > 0 and self.tol_fixed_point > 0):
            raise ConfigError("step size and tolerances must be positive")

    @property
    def grid(self) -> RadialGrid:
        if self._grid is None:
            self._grid = build_grid(self.N, self.s, self.M, self.E, self.R_out, self.K_ang)
        return self._grid

    def refined(self) -> SolverConfig:
        d = self.to_dict()
        d.update(M=2 * self.M, E=2 * self.E, K_ang=2 * self.K_ang)
        return SolverConfig.from_dict(d)

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if not k.startswith("_")}
        d["fam"] = self.fam.label()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> SolverConfig:
        from .young import parse_family

        d = dict(d)
        fam = d.pop("fam", None) or d.pop("family", None)
        if fam is None:
            raise ConfigError("config needs a family")
        if isinstance(fam, str):
            fam = parse_family(fam)
        known = {f for f in cls.__dataclass_fields__ if not f.startswith("_")}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(fam=fam, **d)


class _Problem:
    """The discrete energy as a function of interior values only (exterior closed)."""

    def __init__(self, fam: YoungFamily, grid: RadialGrid, p: float):
        self.fam, self.grid, self.p = fam, grid, p
        self.n = grid.n_int
        self.w = grid.weights
        self.spec = ConeSpec(self.w, 1e-9)
        self.homogeneous = fam.kind == "power"

    def close(self, v: np.ndarray) -> np.ndarray:
        return neumann_closure(RadialProfile(v), self.fam, self.grid).values

    def profile(self, v: np.ndarray) -> RadialProfile:
        U = self.close(v)
        return RadialProfile(U[: self.n], U[self.n :])

    def energy_U(self, U: np.ndarray) -> float:
        v = U[: self.n]
        mod = modular_from_delta(self.grid.pairs.diff @ U, self.fam, self.grid)
        return mod + 0.5 * float(self.w @ v**2) - float(self.w @ np.abs(v) ** self.p) / self.p

    def grad_U(self, U: np.ndarray) -> np.ndarray:
        # envelope: the closure minimises the modular in the exterior values
        return energy_gradient(U, self.fam, self.grid, self.p)[: self.n]

    def _schur(self, H: np.ndarray) -> np.ndarray:
        n = self.n
        hee = np.diag(H[n:, n:]).copy()
        hee[hee <= 0] = np.inf
        Hve = H[:n, n:]
        return H[:n, :n] - Hve @ (Hve.T / hee[:, None])

    def psi_hessian(self, U: np.ndarray) -> np.ndarray:
        H = modular_hessian(U, self.fam, self.grid)
        S = self._schur(H)
        S[np.diag_indices(self.n)] += self.w
        return S

    def hessian(self, U: np.ndarray) -> np.ndarray:
        return self._schur(energy_hessian(U, self.fam, self.grid, self.p))

    def residual(self, g: np.ndarray) -> float:
        return float(np.max(np.abs(g / hat_norms(self.fam, self.grid, self.p))))

    # -- rays ------------------------------------------------------------
    def ray(self, w: np.ndarray):
        """Return a function t -> I(t w) with the closure handled efficiently."""
        if self.homogeneous:
            Uw = self.close(w)
            return lambda t: self.energy_U(t * Uw), lambda t: t * Uw
        cache: dict = {}

        def U_of(t):
            if t not in cache:
                cache[t] = self.close(t * w)
            return cache[t]

        return lambda t: self.energy_U(U_of(t)), U_of

    def ray_max(self, w: np.ndarray, J: int, e: float):
        """Maximise I along t -> t w; returns (t*, I*, U*, path t values, path energies)."""
        f, U_of = self.ray(w)
        T = e / max(float(np.max(np.abs(w))), 1e-300)
        while f(T) > 0:
            T *= 2.0
            if T > 1e12:
                raise NumericalError("energy along the ray never becomes non-positive")
        ts = np.linspace(0.0, T, J + 1)
        Es = np.array([f(t) for t in ts])
        j = int(np.argmax(Es))  # lowest index on ties
        lo, hi = ts[max(j - 1, 0)], ts[min(j + 1, J)]
        res = optimize.minimize_scalar(
            lambda t: -f(t), bounds=(lo, hi), method="bounded", options={"xatol": 1e-12 * T}
        )
        t_star, I_star = (res.x, -res.fun) if -res.fun >= Es[j] else (ts[j], Es[j])
        return t_star, I_star, U_of(t_star), ts, Es


@dataclass
class MountainPassResult:
    profile: RadialProfile
    c: float
    ps_history: list[float]
    path_energies: list[float]
    ceiling_history: list[float]
    descent_level: float
    polished_level: float
    fixed_point_converged: bool
    fixed_point_displacement: float
    e: float
    I_e: float
    steps: int
    notes: list[str]

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("profile")
        return d


def mpg_endpoint(p: float) -> float:
    return (p / 2) ** (1 / (p - 2)) + 0.1


def mountain_pass(cfg: SolverConfig) -> MountainPassResult:
    """Search for the mountain-pass critical point of I restricted to K.

    Paths are rays t -> t w from 0 through a direction w in K, extended until
    the energy is non-positive.  The direction is improved by preconditioned
    projected descent on F(w) = max_t I(t w), which is the max of I along the
    current path; the preconditioner is the Hessian of the convex part.  The
    best ray's maximiser is then polished by Newton's method on the reduced
    gradient and finally handed to the fixed-point iteration.
    """
    cfg.validate()
    grid = cfg.grid
    P = _Problem(cfg.fam, grid, cfg.p)
    e = mpg_endpoint(cfg.p)
    notes: list[str] = []
    J = cfg.path_nodes

    # a slightly non-constant start: constant directions never leave the constants
    w = e * (0.5 + 0.5 * grid.r)
    t, c, U, ts, Es = P.ray_max(w, J, e)
    I_e = P.energy_U(np.full(grid.n_nodes, e))
    ceiling = [float(c)]
    ps = []
    u = t * w
    steps = 0
    stall = 0
    for steps in range(1, cfg.max_deform_steps + 1):
        g = P.grad_U(U)
        ps.append(P.residual(g))
        # K-projected gradient at the path maximum, in the weighted norm
        pg = u - project_k(u - g / P.w, P.spec)
        if ps[-1] < cfg.tol_residual * 1e-2 or math.sqrt(float(P.w @ pg**2)) < 1e-3 * cfg.tol_residual:
            break
        if float(np.max(u)) < 1e-8:
            raise NumericalError("path collapsed onto 0; mountain-pass ring not detected")
        S = P.psi_hessian(U)
        d = linalg.solve(S, g, assume_a="pos")
        accepted = False
        for direction, alpha0 in ((d, 1.0), (g / P.w, cfg.step_size0)):
            alpha = alpha0
            for _ in range(30):
                w_new = project_k(u - alpha * direction, P.spec)
                if np.max(w_new) > 0:
                    t_n, c_n, U_n, ts_n, Es_n = P.ray_max(w_new, J, e)
                    drop = float(g @ (u - w_new))
                    if c_n <= c - 1e-4 * max(drop, 0.0) and c_n < c:
                        accepted = True
                        break
                alpha *= 0.5
            if accepted:
                break
        if not accepted:
            notes.append(f"descent stalled after {steps} steps")
            break
        rel = (c - c_n) / max(abs(c), 1e-300)
        t, c, U, ts, Es = t_n, c_n, U_n, ts_n, Es_n
        u = U[: grid.n_int].copy()
        ceiling.append(float(c))
        stall = stall + 1 if rel < 1e-13 else 0
        if stall >= 5:
            notes.append("path ceiling stationary")
            break
    descent_level = float(c)

    # Newton polish on the reduced gradient
    U_pol, polished = _newton_polish(P, U, tol=1e-11)
    c_pol = P.energy_U(U_pol)
    if polished and is_in_k(U_pol[: grid.n_int], P.spec) and abs(c_pol - c) <= 1e-3 * max(1, abs(c)):
        U = U_pol
        c = c_pol
    else:
        notes.append("Newton polish rejected; keeping descent point")
    prof = RadialProfile(U[: grid.n_int], U[grid.n_int :])
    ps.append(P.residual(P.grad_U(U)))

    fp = fixed_point(prof, cfg, _problem=P)
    if fp.converged:
        level_fp = P.energy_U(fp.profile.values)
    else:
        level_fp = float(c)
        notes.append(f"fixed point did not converge ({fp.escape or 'iteration limit'})")
    return MountainPassResult(
        prof,
        float(c),
        [float(x) for x in ps],
        [float(x) for x in Es],
        ceiling,
        descent_level,
        float(level_fp),
        fp.converged,
        float(fp.displacement),
        e,
        float(I_e),
        steps,
        notes,
    )


def _newton_polish(P: _Problem, U: np.ndarray, tol: float, max_iter: int = 30):
    v = U[: P.n].copy()
    g = P.grad_U(U)
    for _ in range(max_iter):
        gn = float(np.max(np.abs(g / P.w)))
        if gn < tol:
            return U, True
        H = P.hessian(U)
        try:
            d = linalg.solve(H, -g)
        except linalg.LinAlgError:
            return U, False
        lam = 1.0
        for _ in range(20):
            v_n = v + lam * d
            U_n = P.close(v_n)
            g_n = P.grad_U(U_n)
            if float(np.max(np.abs(g_n / P.w))) < gn:
                break
            lam *= 0.5
        else:
            return U, False
        v, U, g = v_n, U_n, g_n
    return U, float(np.max(np.abs(g / P.w))) < tol


def solve_auxiliary(
    u_bar: RadialProfile, cfg: SolverConfig, _problem: _Problem | None = None
) -> RadialProfile:
    """Minimise J(v) = rho(v) + 1/2 int v^2 - int |u|^(p-2) u v over interior values.

    Search directions are preconditioned by the Hessian of the convex part;
    steps follow Armijo backtracking (factor 1/2, sufficient decrease 1e-4).
    """
    P = _problem or _Problem(cfg.fam, cfg.grid, cfg.p)
    ub = u_bar.interior
    if not is_in_k(ub, P.spec):
        raise ValueError("solve_auxiliary needs u_bar in K")
    f = np.abs(ub) ** (cfg.p - 2) * ub
    wf = P.w * f

    def J(U):
        v = U[: P.n]
        mod = modular_from_delta(P.grid.pairs.diff @ U, P.fam, P.grid)
        return mod + 0.5 * float(P.w @ v**2) - float(wf @ v)

    def grad(U):
        from .quadrature import modular_gradient

        return modular_gradient(U, P.fam, P.grid)[: P.n] + P.w * U[: P.n] - wf

    v = ub.copy()
    U = P.close(v)
    Jv, g = J(U), grad(U)
    for _ in range(200):
        if math.sqrt(float(g @ (g / P.w))) < cfg.tol_fixed_point:
            break
        d = -linalg.solve(P.psi_hessian(U), g, assume_a="pos")
        slope = float(g @ d)
        lam = 1.0
        for _ in range(60):
            v_n = v + lam * d
            U_n = P.close(v_n)
            J_n = J(U_n)
            if J_n <= Jv + 1e-4 * lam * slope:
                break
            lam *= 0.5
        else:
            if J_n <= Jv + 1e-13 * max(1.0, abs(Jv)):
                break  # at roundoff level
            raise NumericalError(
                "line search stagnated in the auxiliary problem",
                {"J": Jv, "grad_norm": float(np.linalg.norm(g))},
            )
        v, U, Jv, g = v_n, U_n, J_n, grad(U_n)
    viol = max(0.0, -float(v.min()), -float(np.diff(v).min(initial=0.0)))
    if viol > P.spec.tol:
        log.info("auxiliary solution left K by %.3e; projecting", viol)
        v = project_k(v, P.spec)
        U = P.close(v)
    return RadialProfile(U[: P.n], U[P.n :])


@dataclass
class FixedPointResult:
    profile: RadialProfile
    iterates: list[RadialProfile]
    converged: bool
    displacement: float
    escape: str | None = None

    def __iter__(self):
        return iter((self.profile, self.iterates, self.converged))


def fixed_point(
    u0: RadialProfile, cfg: SolverConfig, _problem: _Problem | None = None
) -> FixedPointResult:
    """Iterate u <- solve_auxiliary(u) until the weighted-L2 step is below tol_fixed_point.

    Non-convergence is reported, not raised.  ``escape`` names the direction
    when the iterates leave every bounded set: "unbounded" when the norm grew
    tenfold, "collapse" when it shrank a hundredfold.
    """
    P = _problem or _Problem(cfg.fam, cfg.grid, cfg.p)
    u = u0 if u0.closed else P.profile(u0.interior)
    iterates = [u]
    disp = math.inf
    size0 = math.sqrt(float(P.w @ u.interior**2))
    escape = None
    for _ in range(cfg.max_fixed_point_iters):
        try:
            nxt = solve_auxiliary(u, cfg, _problem=P)
        except (NumericalError, linalg.LinAlgError) as exc:
            escape = f"auxiliary solve failed: {exc}"
            break
        disp = math.sqrt(float(P.w @ (nxt.interior - u.interior) ** 2))
        iterates.append(nxt)
        u = nxt
        if disp < cfg.tol_fixed_point:
            return FixedPointResult(u, iterates, True, disp)
        size = math.sqrt(float(P.w @ u.interior**2))
        if size > 10 * max(size0, 1e-300):
            escape = "unbounded"
        elif size < 1e-2 * size0:
            escape = "collapse"
        if escape:
            log.info("fixed point escaped (%s, norm %.3e)", escape, size)
            break
    return FixedPointResult(u, iterates, False, disp, escape)


def constant_diagnostics(cfg: SolverConfig) -> dict:
    if not cfg.p > 2:
        raise ConfigError(f"p must exceed 2, got {cfg.p}")
    grid = cfg.grid
    out = {}
    for c in (0.0, 1.0, 2.0):
        u = RadialProfile.constant(c, grid)
        out[f"u={c:g}"] = {
            "residual_max_abs": weak_residual(u, cfg.fam, grid, cfg.p).max_abs,
            "energy": energy(u, cfg.fam, grid, cfg.p).total,
        }
    out["I_K(1)"] = (0.5 - 1.0 / cfg.p) * ball_volume(grid.N)
    return out
