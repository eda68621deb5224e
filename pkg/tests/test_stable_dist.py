import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from supou.stable_dist import (PiGamma, StableParams, TailWeights, sample_pareto_jump,
                               sample_pi, sample_stable, sigma_rho_from_tails,
                               stable_cumulant)

# Levy-Khintchine integrals of the power Levy densities gamma*p*x^(-1-gamma) (x > 0) and
# gamma*q*|x|^(-1-gamma) (x < 0), evaluated with mpmath at 30 digits (compensated for
# gamma > 1).  Keys: (gamma, p, q, zeta).
LK_ORACLE = {
    (1.5, 1.0, 0.0, 1.0): -2.50662827384315 - 2.506628274631j,
    (1.5, 0.75, 0.25, 1.0): -2.50662827384315 - 1.2533141373155j,
    (0.5, 1.0, 0.0, 1.0): -1.2533141373155 + 1.2533141373155j,
    (0.5, 0.25, 0.75, 2.0): -1.77245385090552 - 0.886226925452758j,
}


def test_cauchy_cumulant_at_two():
    assert stable_cumulant(StableParams(1.0, 1.0, 0.0), 2.0) == pytest.approx(-2.0 + 0j)


@pytest.mark.parametrize("params", [StableParams(1.5, 2.0, 0.5, 3.0), StableParams(1.0),
                                    StableParams(0.4, 1.0, -1.0, -2.0)])
def test_cumulant_vanishes_at_origin(params):
    assert stable_cumulant(params, 0.0) == 0j


def test_cumulant_skewed_example():
    # ratio of the LK oracle entries with rho = 0.5 and sigma^gamma scaled to 1
    lk = LK_ORACLE[(1.5, 0.75, 0.25, 1.0)]
    expected = lk / -lk.real
    got = stable_cumulant(StableParams(1.5, 1.0, 0.5), 1.0)
    assert got == pytest.approx(expected, rel=1e-9)
    assert got == pytest.approx(-1.0 - 0.5j, rel=1e-12)


@pytest.mark.parametrize("key", sorted(LK_ORACLE))
def test_cumulant_from_tails_matches_levy_khintchine(key):
    gamma, p, q, zeta = key
    params = sigma_rho_from_tails(gamma, TailWeights(p, q))
    assert stable_cumulant(params, zeta) == pytest.approx(LK_ORACLE[key], rel=1e-9)


def test_sigma_rho_examples():
    sym = sigma_rho_from_tails(0.5, TailWeights(1.0, 1.0))
    assert sym.rho == 0.0
    one_sided = sigma_rho_from_tails(0.5, TailWeights(1.0, 0.0))
    assert one_sided.sigma == pytest.approx(
        (special.gamma(1.5) / 0.5 * math.cos(math.pi / 4)) ** 2, rel=1e-12)
    assert one_sided.sigma == pytest.approx(1.5707963, rel=1e-6)
    assert sigma_rho_from_tails(1.5, TailWeights(1.0, 0.0)).rho == 1.0


def test_sigma_rho_gamma_one_requires_symmetry():
    assert sigma_rho_from_tails(1.0, TailWeights(1.0, 1.0)).sigma == pytest.approx(math.pi)
    with pytest.raises(ValueError):
        sigma_rho_from_tails(1.0, TailWeights(1.0, 0.5))


@settings(max_examples=200, deadline=None)
@given(gamma=st.floats(0.05, 1.95).filter(lambda g: abs(g - 1) > 1e-3),
       p=st.floats(0.0, 5.0), q=st.floats(0.0, 5.0), zeta=st.floats(-50, 50))
def test_cumulant_real_part_nonpositive_and_tail_scaling(gamma, p, q, zeta):
    if p + q < 1e-6:
        return
    base = sigma_rho_from_tails(gamma, TailWeights(p, q))
    assert stable_cumulant(base, zeta).real <= 0.0
    doubled = sigma_rho_from_tails(gamma, TailWeights(2 * p, 2 * q))
    assert doubled.sigma**gamma == pytest.approx(2 * base.sigma**gamma, rel=1e-12)
    assert doubled.rho == pytest.approx(base.rho, abs=1e-12)


def test_params_validation():
    for bad in (dict(gamma_idx=2.0), dict(gamma_idx=1.0, rho=0.3), dict(gamma_idx=1.5, sigma=0),
                dict(gamma_idx=1.5, rho=1.5)):
        with pytest.raises(ValueError):
            StableParams(**bad)


def test_symmetric_sample_mean_and_cosine(rng):
    x = sample_stable(StableParams(1.5, 1.0, 0.0), rng, 10**6)
    assert abs(x.mean()) <= 3 * x.std() / 1e3
    c = np.cos(x)
    assert abs(c.mean() - math.exp(-1.0)) <= 3 * c.std() / 1e3


def test_totally_skewed_positive(rng):
    x = sample_stable(StableParams(0.5, 1.0, 1.0), rng, 10**5)
    assert np.all(x > 0)


def test_pi_sampler_means(rng):
    for pi, mean in ((PiGamma(1.0, 1.0), 1.0), (PiGamma(0.5, 2.0), 0.25)):
        x = sample_pi(pi, rng, 10**6)
        assert abs(x.mean() - mean) <= 3 * x.std() / 1e3


def test_pi_small_ball_behaviour(rng):
    pi = PiGamma(0.5, 2.0)
    x = sample_pi(pi, rng, 10**6)
    for level in (1e-3, 1e-2):
        p = float(pi.cdf(level))
        assert p == pytest.approx(special.gammainc(0.5, 2 * level))
        # regular variation at 0 with index 0.5
        assert p / level**0.5 == pytest.approx(2**0.5 / special.gamma(1.5), rel=0.02)
        emp = np.mean(x < level)
        assert abs(emp - p) <= 3 * math.sqrt(p * (1 - p) / x.size)


def test_pi_moments_against_quadrature():
    pi = PiGamma(0.5, 1.0)
    expect = integrate.quad(lambda s: s**-0.2 * s**-0.5 * math.exp(-s) / special.gamma(0.5),
                            0, np.inf)[0]
    assert pi.moment(-0.2) == pytest.approx(expect, rel=1e-8)
    assert pi.moment(-0.2) == pytest.approx(special.gamma(0.3) / special.gamma(0.5), rel=1e-12)
    assert math.isinf(pi.moment(-0.5))


def test_pareto_support_and_survival(rng):
    x = sample_pareto_jump(1.5, 1.0, 0.0, rng, 10**6)
    assert np.all(x >= 1.0)
    p = 2**-1.5
    assert abs(np.mean(np.abs(x) > 2) - p) <= 3 * math.sqrt(p * (1 - p) / x.size)


def test_pareto_symmetric_signs(rng):
    x = sample_pareto_jump(0.8, 1.0, 1.0, rng, 10**5)
    assert np.median(np.sign(x)) in (-1.0, 0.0, 1.0)
    frac = np.mean(x > 0)
    assert abs(frac - 0.5) <= 3 * 0.5 / math.sqrt(x.size)


@settings(max_examples=30, deadline=None)
@given(gamma=st.floats(0.3, 1.9), wp=st.floats(0.1, 3), wm=st.floats(0.0, 3),
       level=st.floats(1.0, 20.0))
def test_pareto_survival_closed_form(gamma, wp, wm, level):
    rng = np.random.default_rng(11)
    x = sample_pareto_jump(gamma, wp, wm, rng, 20000)
    p = wp / (wp + wm) * level**-gamma
    emp = np.mean(x > level)
    assert abs(emp - p) <= 4.5 * math.sqrt(max(p * (1 - p), 1e-4) / x.size)


def test_pareto_draws_are_prefix_stable():
    a = sample_pareto_jump(1.2, 1.0, 2.0, np.random.default_rng(3), 50)
    b = sample_pareto_jump(1.2, 1.0, 2.0, np.random.default_rng(3), 20)
    np.testing.assert_array_equal(a[:20], b)


def test_pareto_requires_mass(rng):
    with pytest.raises(ValueError):
        sample_pareto_jump(1.5, 0.0, 0.0, rng, 3)
