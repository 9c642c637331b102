import math

import numpy as np
import pytest

from gneumann import young
from gneumann.cone import random_k_profile
from gneumann.grid import RadialProfile, build_grid, neumann_closure
from gneumann.quadrature import (
    PreconditionError,
    exponent_bounds_quiet,
    luxemburg,
    modular,
    modular_gradient,
    modular_pairing,
    monte_carlo_oracle,
)
from gneumann.young import xi_minus, xi_plus

from conftest import FAMILIES


def closed(v, fam, grid):
    return neumann_closure(RadialProfile(v), fam, grid)


def test_constant_has_zero_modular(grid16):
    for fam in FAMILIES.values():
        u = RadialProfile.constant(2.5, grid16)
        mv = modular(u, fam, grid16)
        assert mv.value < 1e-20 and mv.tail_bound == 0


def test_unclosed_profile_rejected(grid16):
    with pytest.raises(PreconditionError):
        modular(RadialProfile(np.ones(17)), young.power(2), grid16)


def test_translation_invariance(grid16, rng):
    fam = young.powerlog(2)
    u = closed(random_k_profile(17, rng), fam, grid16)
    v = RadialProfile(u.interior + 5, u.exterior + 5)
    assert modular(v, fam, grid16).value == pytest.approx(modular(u, fam, grid16).value, rel=1e-12)


@pytest.mark.parametrize("q", [2.0, 2.5, 3.0])
def test_power_scaling(grid16, rng, q):
    fam = young.power(q)
    u = closed(random_k_profile(17, rng), fam, grid16)
    lam = 1.7
    v = RadialProfile(lam * u.interior, lam * u.exterior)
    assert modular(v, fam, grid16).value == pytest.approx(
        lam**q * modular(u, fam, grid16).value, rel=1e-8
    )


def test_midpoint_convexity(grid16, rng):
    for fam in FAMILIES.values():
        for _ in range(5):
            a = RadialProfile(rng.normal(size=17), rng.normal(size=8))
            b = RadialProfile(rng.normal(size=17), rng.normal(size=8))
            mid = RadialProfile((a.interior + b.interior) / 2, (a.exterior + b.exterior) / 2)
            half = RadialProfile((a.interior - b.interior) / 2, (a.exterior - b.exterior) / 2)
            m = lambda x: modular(x, fam, grid16).value
            assert m(mid) <= (m(a) + m(b)) / 2 - m(half) + 1e-10 * (m(a) + m(b))


def test_pairing_lower_bound(grid16, rng):
    for fam in FAMILIES.values():
        qm = exponent_bounds_quiet(fam).q_minus
        for _ in range(5):
            u = closed(random_k_profile(17, rng), fam, grid16)
            assert modular_pairing(u, u, fam, grid16) >= qm * modular(u, fam, grid16).value * (1 - 1e-12)


def test_pairing_constant_u(grid16, rng):
    u = RadialProfile.constant(1.0, grid16)
    phi = RadialProfile(rng.normal(size=17), rng.normal(size=8))
    assert modular_pairing(u, phi, young.power(3), grid16) == 0


def test_pairing_is_gradient(grid16, rng):
    fam = young.doublepower(2, 3)
    u = closed(random_k_profile(17, rng), fam, grid16)
    phi = RadialProfile(rng.normal(size=17), rng.normal(size=8))
    g = modular_gradient(u.values, fam, grid16)
    assert g @ phi.values == pytest.approx(modular_pairing(u, phi, fam, grid16), rel=1e-12)


def test_pairing_interior_test_function(grid16, rng):
    fam = young.power(2)
    u = closed(random_k_profile(17, rng), fam, grid16)
    phi_int = rng.normal(size=17)
    a = modular_pairing(u, RadialProfile(phi_int), fam, grid16)
    b = modular_pairing(u, RadialProfile(phi_int, np.zeros(8)), fam, grid16)
    assert a == b


def test_luxemburg_homogeneity(grid16, rng):
    fam = young.power(2)
    u = closed(random_k_profile(17, rng), fam, grid16)
    rho = modular(u, fam, grid16).value
    s = 2.0 / math.sqrt(rho)  # scale so that rho(s u) = 4
    v = RadialProfile(s * u.interior, s * u.exterior)
    assert modular(v, fam, grid16).value == pytest.approx(4.0, rel=1e-12)
    assert luxemburg(v, fam, grid16).value == pytest.approx(2.0, rel=1e-9)


def test_luxemburg_zero(grid16):
    assert luxemburg(RadialProfile.constant(3.0, grid16), young.power(3), grid16).value == 0


@pytest.mark.parametrize("name", list(FAMILIES))
def test_luxemburg_bracket(name, grid16, rng):
    fam = FAMILIES[name]
    b = exponent_bounds_quiet(fam)
    for _ in range(5):
        u = closed(random_k_profile(17, rng) * rng.uniform(0.1, 10), fam, grid16)
        lv = luxemburg(u, fam, grid16)
        lo, hi = lv.bracket
        assert lo * (1 - 1e-12) <= lv.value <= hi * (1 + 1e-12)
        rho = modular(u, fam, grid16).value
        assert xi_minus(lv.value, b) <= rho * (1 + 1e-8)
        assert rho <= xi_plus(lv.value, b) * (1 + 1e-8)
        w = RadialProfile(u.interior / lv.value, u.exterior / lv.value)
        assert modular(w, fam, grid16).value == pytest.approx(1.0, abs=1e-8)


def test_tail_bound_decreases_with_radius(rng):
    fam = young.power(2)
    v = random_k_profile(17, rng)
    tails = []
    for R in (4.0, 16.0, 64.0):
        g = build_grid(2, 0.5, 16, 16, R, 32)
        tails.append(modular(closed(v, fam, g), fam, g).tail_bound)
    assert tails[0] > tails[1] > tails[2] > 0


def test_monte_carlo_constant_and_errors(grid16):
    fam = young.power(2)
    assert monte_carlo_oracle(RadialProfile.constant(1.0, grid16), fam, grid16, 1000) == (0.0, 0.0)
    with pytest.raises(ValueError):
        monte_carlo_oracle(RadialProfile.constant(1.0, grid16), fam, grid16, 999)


def test_monte_carlo_linear_profile(grid16):
    fam = young.power(2)
    u = neumann_closure(RadialProfile.from_function(lambda r: r, grid16), fam, grid16)
    est, se = monte_carlo_oracle(u, fam, grid16, 200_000, seed=5)
    assert abs(modular(u, fam, grid16).value - est) <= 3 * se


def test_monte_carlo_standard_error_scaling(grid16):
    fam = young.power(2)
    u = neumann_closure(RadialProfile.from_function(lambda r: r, grid16), fam, grid16)
    _, se1 = monte_carlo_oracle(u, fam, grid16, 50_000, seed=1)
    _, se2 = monte_carlo_oracle(u, fam, grid16, 100_000, seed=2)
    assert se1 / se2 == pytest.approx(math.sqrt(2), rel=0.15)


def test_monte_carlo_deterministic(grid16):
    fam = young.power(2)
    u = neumann_closure(RadialProfile.from_function(np.sqrt, grid16), fam, grid16)
    assert monte_carlo_oracle(u, fam, grid16, 5000, seed=9) == monte_carlo_oracle(u, fam, grid16, 5000, seed=9)


def test_grid_refinement_converges():
    fam = young.power(2)
    vals = []
    for M in (16, 32, 64):
        g = build_grid(2, 0.5, M, M // 2 + 8, 4.0, 32)
        u = neumann_closure(RadialProfile.from_function(lambda r: np.cos(np.pi * r), g), fam, g)
        vals.append(modular(u, fam, g).value)
    d1, d2 = abs(vals[1] - vals[0]), abs(vals[2] - vals[1])
    assert d2 < d1 and d2 / vals[2] < 5e-3
