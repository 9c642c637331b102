"""Young functions G(t) = int_0^t g and the inequalities they are expected to satisfy.

Four kinds of family are supported:

``power``        G(t) = t^r
``powerlog``     G(t) = t^r log(1 + t)
``doublepower``  G(t) = t^r1 + t^r2
``tabulated``    g sampled on a grid, interpolated piecewise linearly

Every family exposes ``G``, ``g`` and ``dg`` (the derivative of ``g``) as
vectorised callables on nonnegative arrays.  Sums of pure powers additionally
expose ``power_terms`` so that the quadrature can separate the angular kernel.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "ConditionError",
    "ExponentBounds",
    "YoungFamily",
    "doublepower",
    "exponent_bounds",
    "parse_family",
    "power",
    "powerlog",
    "tabulated",
    "verify_young_axioms",
    "xi_minus",
    "xi_plus",
]

SCAN_LO, SCAN_HI, SCAN_POINTS = 1e-6, 1e6, 10_000


class ConditionError(ValueError):
    """The growth condition ``1 < q- <= t g(t)/G(t) <= q+ < inf`` fails."""


@dataclass(frozen=True)
class ExponentBounds:
    q_minus: float
    q_plus: float

    def __post_init__(self) -> None:
        if not (1.0 < self.q_minus <= self.q_plus < math.inf):
            raise ConditionError(
                f"need 1 < q- <= q+ < inf, got ({self.q_minus}, {self.q_plus})"
            )

    def as_tuple(self) -> tuple[float, float]:
        return (self.q_minus, self.q_plus)


@dataclass(frozen=True)
class YoungFamily:
    """A Young function together with its derivative.

    Use the constructors :func:`power`, :func:`powerlog`, :func:`doublepower`
    and :func:`tabulated` rather than instantiating directly.
    """

    kind: str
    params: tuple[float, ...] = ()
    t_nodes: np.ndarray | None = field(default=None, repr=False, compare=False)
    g_nodes: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.kind not in ("power", "powerlog", "doublepower", "tabulated"):
            raise ValueError(f"unknown Young family kind {self.kind!r}")
        if any(not (p > 0) for p in self.params):
            raise ValueError(f"family parameters must be positive: {self.params}")
        if self.kind == "power" and (len(self.params) != 1 or self.params[0] <= 1):
            raise ValueError("power family needs one exponent r > 1")
        if self.kind == "powerlog" and (len(self.params) != 1 or self.params[0] < 1):
            raise ValueError("powerlog family needs one exponent r >= 1")
        if self.kind == "doublepower":
            if len(self.params) != 2 or not (1 < self.params[0] < self.params[1]):
                raise ValueError("doublepower family needs exponents 1 < r1 < r2")
        if self.kind == "tabulated":
            if self.t_nodes is None or self.g_nodes is None:
                raise ValueError("tabulated family needs t and g samples")

    # -- evaluation -------------------------------------------------------

    def G(self, t):
        t = _check_nonneg(t)
        if self.kind == "power":
            return t ** self.params[0]
        if self.kind == "powerlog":
            return t ** self.params[0] * np.log1p(t)
        if self.kind == "doublepower":
            r1, r2 = self.params
            return t**r1 + t**r2
        return self._tab_G(t)

    def g(self, t):
        t = _check_nonneg(t)
        if self.kind == "power":
            r = self.params[0]
            return r * t ** (r - 1)
        if self.kind == "powerlog":
            r = self.params[0]
            return r * t ** (r - 1) * np.log1p(t) + t**r / (1 + t)
        if self.kind == "doublepower":
            r1, r2 = self.params
            return r1 * t ** (r1 - 1) + r2 * t ** (r2 - 1)
        return self._tab_g(t)

    def dg(self, t):
        """Derivative of ``g`` (right derivative at kinks of tabulated data)."""
        t = _check_nonneg(t)
        if self.kind == "power":
            r = self.params[0]
            return _pow_deriv(t, r)
        if self.kind == "powerlog":
            r = self.params[0]
            with np.errstate(divide="ignore", invalid="ignore"):
                out = (
                    r * (r - 1) * t ** (r - 2) * np.log1p(t)
                    + 2 * r * t ** (r - 1) / (1 + t)
                    - t**r / (1 + t) ** 2
                )
            return np.where(t == 0, 0.0 if r > 1 else 1.0, out)
        if self.kind == "doublepower":
            r1, r2 = self.params
            return _pow_deriv(t, r1) + _pow_deriv(t, r2)
        return self._tab_dg(t)

    @property
    def power_terms(self) -> tuple[tuple[float, float], ...] | None:
        """``((coef, exponent), ...)`` when G is a finite sum of powers."""
        if self.kind == "power":
            return ((1.0, self.params[0]),)
        if self.kind == "doublepower":
            return ((1.0, self.params[0]), (1.0, self.params[1]))
        return None

    def label(self) -> str:
        if self.kind == "tabulated":
            return f"tabulated[{len(self.t_nodes)}]"
        return f"{self.kind}:" + ",".join(f"{p:g}" for p in self.params)

    # -- tabulated internals ---------------------------------------------

    def _tab_arrays(self):
        t = np.concatenate([[0.0], self.t_nodes]) if self.t_nodes[0] > 0 else self.t_nodes
        gv = np.concatenate([[0.0], self.g_nodes]) if self.t_nodes[0] > 0 else self.g_nodes
        slopes = np.diff(gv) / np.diff(t)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (gv[1:] + gv[:-1]) * np.diff(t))])
        return t, gv, slopes, cum

    def _tab_locate(self, t):
        tk, gv, slopes, cum = self._tab_arrays()
        idx = np.clip(np.searchsorted(tk, t, side="right") - 1, 0, len(tk) - 2)
        return tk, gv, slopes, cum, idx

    def _tab_g(self, t):
        tk, gv, slopes, _, idx = self._tab_locate(t)
        return gv[idx] + slopes[idx] * (t - tk[idx])

    def _tab_G(self, t):
        tk, gv, slopes, cum, idx = self._tab_locate(t)
        dt = t - tk[idx]
        return cum[idx] + gv[idx] * dt + 0.5 * slopes[idx] * dt * dt

    def _tab_dg(self, t):
        _, _, slopes, _, idx = self._tab_locate(t)
        return slopes[idx]


def _check_nonneg(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(np.isnan(t)):
        raise ValueError("Young functions are evaluated on t >= 0 only")
    return t


def _pow_deriv(t, r):
    # r(r-1) t^(r-2), with the t = 0 limit taken for r >= 2
    if r == 2:
        return np.full_like(t, 2.0)
    with np.errstate(divide="ignore"):
        return r * (r - 1) * t ** (r - 2)


def power(r: float) -> YoungFamily:
    return YoungFamily("power", (float(r),))


def powerlog(r: float) -> YoungFamily:
    return YoungFamily("powerlog", (float(r),))


def doublepower(r1: float, r2: float) -> YoungFamily:
    return YoungFamily("doublepower", (float(r1), float(r2)))


def tabulated(t, g) -> YoungFamily:
    """Family from samples of g; g is interpolated linearly, extrapolated with the last slope.

    The samples must have strictly increasing positive ``t`` and positive
    non-decreasing ``g``; ``g(0) = 0`` is implied.
    """
    t = np.asarray(t, dtype=float)
    g = np.asarray(g, dtype=float)
    if t.ndim != 1 or t.shape != g.shape or len(t) < 2:
        raise ValueError("need matching 1-d arrays with at least two samples")
    if np.any(np.diff(t) <= 0) or t[0] < 0:
        raise ValueError("t samples must be nonnegative and strictly increasing")
    if t[0] == 0 and g[0] != 0:
        raise ValueError("g(0) must vanish")
    if np.any(g[t > 0] <= 0) or np.any(np.diff(g) < 0):
        raise ValueError("g must be positive for t > 0 and non-decreasing")
    if g[-1] == g[-2]:
        raise ValueError("last slope of g is zero, so g does not grow to infinity")
    return YoungFamily("tabulated", (), t_nodes=t, g_nodes=g)


def load_tabulated_csv(path: str | Path) -> YoungFamily:
    """Read a two-column CSV ``t, g(t)`` with a header row."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 3:
        raise ValueError(f"{path}: need a header row and at least two samples")
    try:
        data = np.array([[float(x) for x in row[:2]] for row in rows[1:] if row])
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric sample ({exc})") from None
    return tabulated(data[:, 0], data[:, 1])


def parse_family(text: str) -> YoungFamily:
    """Parse ``kind:params``, e.g. ``power:3``, ``doublepower:2,3``, ``tabulated:g.csv``."""
    kind, _, rest = text.partition(":")
    kind = kind.strip().lower()
    if kind == "tabulated":
        return load_tabulated_csv(rest)
    try:
        params = [float(x) for x in rest.split(",")] if rest else []
    except ValueError:
        raise ValueError(f"malformed family string {text!r}") from None
    makers = {"power": power, "powerlog": powerlog, "doublepower": doublepower}
    if kind not in makers:
        raise ValueError(f"unknown family kind in {text!r}")
    try:
        return makers[kind](*params)
    except TypeError:
        raise ValueError(f"wrong number of parameters in {text!r}") from None


def exponent_bounds(fam: YoungFamily) -> ExponentBounds:
    """Infimum and supremum of t g(t) / G(t) over t > 0.

    Analytic for the built-in families; a log-grid scan on [1e-6, 1e6] for
    tabulated data (and a warning that the bounds are scan based).
    """
    if fam.kind == "power":
        r = fam.params[0]
        return ExponentBounds(r, r)
    if fam.kind == "doublepower":
        return ExponentBounds(*fam.params)
    if fam.kind == "powerlog":
        # ratio = r + t / ((1+t) log(1+t)), decreasing from r+1 to r
        r = fam.params[0]
        return ExponentBounds(r, r + 1)
    t = np.geomspace(SCAN_LO, SCAN_HI, SCAN_POINTS)
    ratio = scan_ratio(fam, t)
    if not np.all(np.isfinite(ratio)) or np.any(ratio <= 1):
        raise ConditionError("t g(t)/G(t) is unbounded or <= 1 on the scan grid")
    warnings.warn("exponent bounds of tabulated data are scan based", stacklevel=2)
    return ExponentBounds(float(ratio.min()), float(ratio.max()))


def scan_ratio(fam: YoungFamily, t: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        return t * fam.g(t) / fam.G(t)


def xi_minus(a, b: ExponentBounds):
    a = np.asarray(a, dtype=float)
    return np.minimum(a**b.q_minus, a**b.q_plus)


def xi_plus(a, b: ExponentBounds):
    a = np.asarray(a, dtype=float)
    return np.maximum(a**b.q_minus, a**b.q_plus)


@dataclass
class AxiomCheck:
    name: str
    passed: bool
    worst_margin: float


@dataclass
class AxiomReport:
    family: str
    samples: int
    seed: int
    checks: list[AxiomCheck]
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "samples": self.samples,
            "seed": self.seed,
            "passed": self.passed,
            "checks": [
                {"name": c.name, "passed": c.passed, "worst_margin": c.worst_margin}
                for c in self.checks
            ],
            "notes": list(self.notes),
        }


def verify_young_axioms(
    fam: YoungFamily, samples: int = 10_000, seed: int = 0, tol: float = 1e-10
) -> AxiomReport:
    """Sample (a, b) log-uniformly on [1e-4, 1e4]^2 and check the Young inequalities.

    Margins are relative: ``(larger side - smaller side) / larger side`` so a
    negative margin is a violation.  Failures are reported, never raised.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    a, b = 10.0 ** rng.uniform(-4, 4, size=(2, samples))
    notes: list[str] = []
    checks: list[AxiomCheck] = []

    def record(name, big, small):
        with np.errstate(divide="ignore", invalid="ignore"):
            margin = np.where(big > 0, (big - small) / big, np.where(small > 0, -1.0, 0.0))
        worst = float(np.min(margin))
        checks.append(AxiomCheck(name, bool(worst >= -tol), worst))

    try:
        bounds = exponent_bounds(fam) if fam.kind != "tabulated" else _quiet_bounds(fam)
    except ConditionError as exc:
        notes.append(f"growth condition: {exc}")
        checks.append(AxiomCheck("growth_condition", False, -math.inf))
        bounds = None

    G = fam.G
    record("convexity_split", 0.5 * (G(a) + G(b)), G(np.abs(a + b) / 2) + G(np.abs(a - b) / 2))
    if bounds is not None:
        Gab, Gb = G(a * b), G(b)
        record("xi_lower", Gab, xi_minus(a, bounds) * Gb)
        record("xi_upper", xi_plus(a, bounds) * Gb, Gab)
        record("quasi_triangle", 2**bounds.q_plus * (G(a) + G(b)), G(a + b))
        record("doubling", 2**bounds.q_plus * G(a), G(2 * a))
    record("sqrt_convexity", 0.5 * (G(np.sqrt(a)) + G(np.sqrt(b))), G(np.sqrt(0.5 * (a + b))))
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    record("lipschitz", fam.g(hi) * (hi - lo), G(hi) - G(lo))

    if fam.kind == "tabulated":
        tk, gv, slopes, _ = fam._tab_arrays()
        med = np.median(slopes[slopes > 0]) if np.any(slopes > 0) else 0.0
        if med > 0 and slopes.max() > 1e3 * med:
            notes.append(
                "tabulated g has a near-jump (slope > 1e3 x median); "
                "interpolation smooths it"
            )
    return AxiomReport(fam.label(), samples, seed, checks, notes)


def _quiet_bounds(fam):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return exponent_bounds(fam)
