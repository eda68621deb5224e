import io
import math

import numpy as np
import pytest
from scipy import integrate

from conftest import quad
from supou.model import ModelError
from supou.sim import (AtomBatch, JumpAtom, PathStreams, SimOptions, TimeGrid,
                       gen_big_jump_field, gen_small_jump_field, integrate_atoms,
                       kernel_antiderivative, ou_joint_step, simulate_ensemble,
                       simulate_ou_mixture, simulate_path, simulate_x1_star, simulate_x2_star,
                       simulate_x3_star, write_path_dump)


def test_kernel_examples():
    assert kernel_antiderivative(JumpAtom(1.0, 0.0, 1.0), math.log(2)) == pytest.approx(0.5)
    assert kernel_antiderivative(JumpAtom(1.0, 0.0, 1.0), 200.0) == pytest.approx(1.0)
    assert kernel_antiderivative(JumpAtom(0.5, 3.0, 7.0), 6.0) == 0.0
    assert kernel_antiderivative(JumpAtom(1.0, 0.0, 2.0), math.log(2)) == pytest.approx(1.0)


def test_kernel_small_rate_is_stable():
    # xi t -> 0: the past branch tends to e^s t
    val = kernel_antiderivative(JumpAtom(1e-14, -1.0, 1.0), 10.0)
    assert val == pytest.approx(math.exp(-1.0) * 10.0, rel=1e-12)


def kernel_quadrature(xi, s, z, t):
    born = max(s / xi, 0.0)
    if born >= t:
        return 0.0
    f = lambda u: math.exp(-xi * u + s)
    return z * integrate.quad(f, born, t, epsabs=0, epsrel=1e-13, limit=200)[0]


def test_kernel_matches_quadrature_on_random_atoms():
    rng = np.random.default_rng(4)
    for _ in range(100):
        xi = float(np.exp(rng.uniform(-6, 3)))
        s = float(rng.uniform(-5, 5))
        z = float(rng.normal())
        t = float(np.exp(rng.uniform(-3, 5)))
        got = kernel_antiderivative(JumpAtom(xi, s, z), t)
        ref = kernel_quadrature(xi, s, z, t)
        assert got == pytest.approx(ref, rel=1e-10, abs=1e-300)


def test_integrate_atoms_matches_scalar_kernel():
    rng = np.random.default_rng(8)
    atoms = AtomBatch(rng.gamma(0.5, 1.0, 500), rng.uniform(-10, 10, 500), rng.normal(size=500))
    t = np.array([0.1, 1.0, 17.0])
    expect = [sum(kernel_antiderivative(a, tt) for a in atoms) for tt in t]
    np.testing.assert_allclose(integrate_atoms(atoms, t), expect, rtol=1e-12, atol=1e-12)
    np.testing.assert_array_equal(integrate_atoms(AtomBatch.empty(), t), np.zeros(3))


def test_big_jump_count_matches_poisson_mean():
    q = quad(1.5, 1.0 + 0.5, None, w=(1.0, 1.0), rate=1.5)  # E xi = 1
    counts = np.array([len(gen_big_jump_field(q, 100.0, 50.0, PathStreams(1, j)))
                       for j in range(400)])
    assert abs(counts.mean() - 300.0) <= 3 * math.sqrt(300.0 / len(counts))


def test_big_jump_support_and_truncation():
    q = quad(1.5, 0.7, None, w=(1.0, 0.0))
    atoms = gen_big_jump_field(q, 10.0, 5.0, PathStreams(2, 0))
    assert np.all(atoms.size >= 1.0) and np.all(atoms.pos > -5.0)
    assert np.all(atoms.pos < atoms.rate * 10.0)
    none_past = gen_big_jump_field(q, 10.0, 0.0, PathStreams(2, 0))
    assert np.all(none_past.pos >= 0.0)


def test_burn_in_extension_appends_atoms():
    q = quad(1.5, 0.7, 0.3)
    a = gen_big_jump_field(q, 10.0, 20.0, PathStreams(3, 5))
    b = gen_big_jump_field(q, 10.0, 40.0, PathStreams(3, 5))
    pa, pb = a.pos[a.pos < 0], b.pos[b.pos < 0]
    np.testing.assert_array_equal(pb[:len(pa)], pa)
    assert np.all(pb[len(pa):] <= -20.0)


def test_burn_in_doubling_leaves_mean_abs_unchanged():
    q = quad(1.5, 0.7, None)
    grid = TimeGrid(1.0, 2.0, 5)
    ends = {}
    for burn in (20.0, 40.0):
        ends[burn] = np.array([simulate_x1_star(q, grid, PathStreams(9, j), burn)[-1]
                               for j in range(400)])
    a, b = np.abs(ends[20.0]), np.abs(ends[40.0])
    assert abs(a.mean() - b.mean()) < a.std() / math.sqrt(len(a))


def test_symmetric_big_jumps_have_zero_mean_growth():
    q = quad(1.5, 0.7, None)
    grid = TimeGrid(0.5, 2.0, 4)
    x = np.array([simulate_x1_star(q, grid, PathStreams(21, j), 20.0) for j in range(10_000)])
    ratio = x / grid.values
    # heavy tails (gamma = 1.5): the check is the stated 3-SE rule
    assert np.all(np.abs(ratio.mean(0)) <= 3 * ratio.std(0) / math.sqrt(len(x)))


def test_centered_asymmetric_model_has_zero_mean():
    q = quad(1.8, 1.5, None, w=(1.0, 0.2))
    grid = TimeGrid(0.5, 2.0, 4)
    x = np.array([simulate_x1_star(q, grid, PathStreams(22, j), 20.0) for j in range(10_000)])
    ratio = x / grid.values
    assert np.all(np.abs(ratio.mean(0)) <= 3 * ratio.std(0) / math.sqrt(len(x)))


def test_positive_jumps_give_nondecreasing_paths():
    q = quad(0.8, 0.6, None, w=(1.0, 0.0))
    grid = TimeGrid(0.1, 1.7, 12)
    for j in range(20):
        x = simulate_x1_star(q, grid, PathStreams(5, j), 30.0)
        assert np.all(np.diff(x) >= 0.0)


def test_small_jump_intensity():
    q = quad(None, 0.7, 0.5, c=(0.5, 0.5))
    rate = 10**1.5 - 1
    counts = np.array([len(gen_small_jump_field(q, 1e-12, 10.0, 1e-3, PathStreams(6, j)))
                       for j in range(200)])
    assert abs(counts.mean() - 10.0 * rate) <= 3 * math.sqrt(10.0 * rate / len(counts))
    sizes = gen_small_jump_field(q, 1e-12, 10.0, 1e-3, PathStreams(6, 0)).size
    assert np.all((np.abs(sizes) > 1e-3) & (np.abs(sizes) <= 1.0))


def test_lower_cutoff_appends_small_atoms():
    q = quad(None, 0.7, 0.5)
    a = gen_small_jump_field(q, 50.0, 10.0, 1e-2, PathStreams(7, 1))
    b = gen_small_jump_field(q, 50.0, 10.0, 5e-3, PathStreams(7, 1))
    # each region's atoms for the larger cutoff are a prefix of the finer run
    assert set(map(tuple, np.c_[a.rate, a.pos, a.size])) <= set(
        map(tuple, np.c_[b.rate, b.pos, b.size]))
    assert len(b) > len(a)


def test_finite_small_jump_measure_and_empty_measure():
    q = quad(None, 0.7, 0.0, c=(1.0, 1.0))
    whole = gen_small_jump_field(q, 5.0, 5.0, 1.0, PathStreams(8, 0))
    assert len(whole) > 0
    empty = quad(None, 0.7, None, b=1.0)
    assert len(gen_small_jump_field(empty, 5.0, 5.0, 1.0, PathStreams(8, 0))) == 0


def test_eps_cutoff_bounds():
    q = quad(None, 0.7, 0.5)
    with pytest.raises(ValueError):
        simulate_x2_star(q, TimeGrid(), 1.5, PathStreams(0, 0))
    with pytest.raises(ValueError):
        SimOptions(eps_cutoff=0.0)


def test_halving_cutoff_keeps_second_moments():
    q = quad(None, 0.7, 0.5)
    grid = TimeGrid(1.0, 2.0, 4)
    n = 1500
    res = {}
    for eps in (2e-3, 1e-3):
        res[eps] = np.array([simulate_x2_star(q, grid, eps, PathStreams(10, j), 10.0, 16)
                             for j in range(n)]) ** 2
    diff = np.abs(res[2e-3].mean(0) - res[1e-3].mean(0))
    se = res[1e-3].std(0) / math.sqrt(n)
    assert np.all(diff < se)


def test_asymmetric_small_jumps_are_compensated():
    q = quad(None, 1.5, 0.5, c=(0.9, 0.1))
    grid = TimeGrid(1.0, 2.0, 4)
    x = np.array([simulate_x2_star(q, grid, 1e-2, PathStreams(11, j), 10.0, 8)
                  for j in range(3000)])
    assert np.all(np.abs(x.mean(0)) <= 3 * x.std(0) / math.sqrt(len(x)))


def test_small_jump_second_moment_matches_quadrature():
    # E X2*(t)^2 = int x^2 mu2(dx) * int pi(dxi) int g_t(xi, s)^2 ds
    lam, t = 1.0, 1.0
    q = quad(None, 0.5, 0.5, rate=lam)
    from scipy.stats import gamma as gamma_law

    def phi(x):
        return np.where(x < 1e-3, x**3 / 3 - x**4 / 4 + 7 * x**5 / 60,
                        x + 2 * np.expm1(-x) - 0.5 * np.expm1(-2 * x))

    f = lambda xi: ((np.expm1(-xi * t) / xi) ** 2 / 2 + phi(xi * t) / xi**2) * gamma_law.pdf(
        xi, 0.5, scale=1 / lam)
    ref = sum(integrate.quad(f, a, b, limit=500)[0] for a, b in ((0, 1), (1, np.inf))) / 3.0
    grid = TimeGrid(0.25, 2.0, 4)
    n = 20000
    x = np.array([simulate_x2_star(q, grid, 1e-3, PathStreams(12, j), 30.0, 8)[2]
                  for j in range(n)])
    assert abs((x**2).mean() - ref) <= 3 * (x**2).std() / math.sqrt(n)


def test_ou_step_series_and_direct_branches_agree():
    v, z1, z2 = 0.7, 0.3, -1.1
    lo = ou_joint_step(0.4, 1.0, 0.999999e-3, v, z1, z2)
    hi = ou_joint_step(0.4, 1.0, 1.000001e-3, v, z1, z2)
    np.testing.assert_allclose(lo, hi, rtol=1e-5)


def test_ou_autocorrelation_and_integral_variance():
    n = 100_000
    gen = np.random.default_rng(13)
    h = math.log(2)
    vals, ints = simulate_ou_mixture(np.ones(n), 0.5, [1.0, 1.0 + h], gen)
    u0, u1 = vals[:, 0], vals[:, 1]
    rho = np.corrcoef(u0, u1)[0, 1]
    assert abs(rho - 0.5) <= 3 * (1 - 0.25) / math.sqrt(n)
    var_int = ints[:, 0].var()
    ref = 2 * 0.5 * (1.0 - (1 - math.exp(-1.0)))
    assert ref == pytest.approx(0.36788, abs=1e-5)
    se = math.sqrt(((ints[:, 0] ** 2 - var_int) ** 2).mean() / n)
    assert abs(var_int - ref) <= 3 * se
    assert abs(u0.var() - 0.5) <= 3 * 0.5 * math.sqrt(2 / n)


def test_gaussian_component_stationary_variance():
    q = quad(None, 0.4, None, b=1.4)
    grid = TimeGrid(0.5, 3.0, 5)
    vals = np.array([simulate_x3_star(q, grid, 16, PathStreams(14, j), with_values=True)[1]
                     for j in range(4000)])
    var = vals.var(0)
    se = np.sqrt(((vals**2 - var) ** 2).mean(0) / len(vals))
    assert np.all(np.abs(var - 0.7) <= 3 * se)


def test_gaussian_component_requires_b():
    with pytest.raises(ModelError, match="component absent"):
        simulate_x3_star(quad(1.5, 0.7, 0.3), TimeGrid(), 8, PathStreams(0, 0))


def test_ensemble_determinism_and_splitting():
    q = quad(1.8, 0.4, 0.3, b=0.5)
    grid = TimeGrid(1.0, 2.0, 5)
    opts = SimOptions(n_ou=8)
    one = [p.xstar for p in simulate_ensemble(q, grid, 6, opts, 99)]
    again = [p.xstar for p in simulate_ensemble(q, grid, 6, opts, 99)]
    parts = ([p.xstar for p in simulate_ensemble(q, grid, 6, opts, 99, 0, 2)]
             + [p.xstar for p in simulate_ensemble(q, grid, 6, opts, 99, 2, 6)])
    for a, b, c in zip(one, again, parts):
        assert a.tobytes() == b.tobytes() == c.tobytes()
    assert list(simulate_ensemble(q, grid, 0, opts, 99)) == []
    other = [p.xstar for p in simulate_ensemble(q, grid, 6, opts, 100)]
    assert not np.array_equal(one[0], other[0])


def test_components_sum_and_dump():
    q = quad(1.8, 0.4, 0.3, b=0.5)
    grid = TimeGrid(1.0, 2.0, 4)
    ps = simulate_path(q, grid, SimOptions(n_ou=4, keep_components=True), 3, 7, 20.0)
    total = ps.components["x1"] + ps.components["x2"] + ps.components["x3"]
    np.testing.assert_array_equal(ps.xstar, total)
    assert ps.seed_coords == (3, 7) and np.all(np.isfinite(ps.xstar))
    fh = io.StringIO()
    write_path_dump([ps], fh)
    lines = fh.getvalue().splitlines()
    assert lines[0] == "path_index\tt\txstar\tx1\tx2\tx3"
    assert len(lines) == 1 + grid.count
    assert float(lines[1].split("\t")[2]) == ps.xstar[0]


def test_time_grid_validation():
    assert TimeGrid(1.0, 2.0, 4).values.tolist() == [1.0, 2.0, 4.0, 8.0]
    for bad in ((0.0, 2.0, 5), (1.0, 1.0, 5), (1.0, 2.0, 3)):
        with pytest.raises(ValueError):
            TimeGrid(*bad)
