import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlsground.fiber import fiber_profile, project_to_manifold
from nlsground.functionals import (
    State,
    SystemParams,
    clean,
    coercivity_ratio,
    cross_term,
    energy,
    energy_gradient,
    inner,
    mass,
    pair_beta,
    pohozaev,
    reduced_energy,
    terms,
)
from nlsground.radial_grid import build_grid, integrate, kinetic
from nlsground.scalar_ground import mass_for_lambda

import states

PI32 = 5.5683279968317078
HALF_PI32 = 1.9687012432153025  # (pi/2)^(3/2) = int exp(-2 r^2) dx


@pytest.fixture(scope="module")
def grid():
    return build_grid(2048, 16.0)


def random_state(grid, k, rng, params=None):
    if params is None:
        params = params2() if k == 2 else SystemParams(np.full(k, 3.0), np.ones(k), np.full(k, 4.0),
                                                         np.full(k, 2.0), np.zeros((k, k)))
    return states.random_state(grid, params, rng)


def params2(beta=0.7, p=(4.0, 4.5), r=(2.0, 2.3)):
    a = [mass_for_lambda(3.0, 1.0, p[0]), mass_for_lambda(2.0, 1.5, p[1])]
    return SystemParams(a, [1.0, 1.5], list(p), list(r), beta)


def test_params_validation():
    with pytest.raises(ValueError, match="10/3 < p < 6"):
        SystemParams([1.0], [1.0], [3.0], [2.0])
    with pytest.raises(ValueError, match="10/3 < p < 6"):
        SystemParams([1.0], [1.0], [6.0], [2.0])
    with pytest.raises(ValueError, match="r_1 \\+ r_2"):
        SystemParams([1, 1], [1, 1], [4, 4], [1.5, 1.5], 1.0)
    with pytest.raises(ValueError, match="nonnegative"):
        SystemParams([1, 1], [1, 1], [4, 4], [2, 2], -0.1)
    with pytest.raises(ValueError, match="symmetric"):
        SystemParams([1, 1], [1, 1], [4, 4], [2, 2], [[0, 1], [0.5, 0]])
    with pytest.raises(ValueError):
        SystemParams([1, -1], [1, 1], [4, 4], [2, 2])
    with pytest.raises(ValueError, match="scalar beta"):
        SystemParams([1, 1, 1], [1], [4], [2], 0.3)
    # r_1 + r_2 outside the window is fine when that pair is uncoupled
    SystemParams([1, 1], [1, 1], [4, 4], [1.5, 1.5], 0.0)


def test_pair_beta_symmetric():
    b = pair_beta(3, {(0, 1): 0.5, (1, 2): 2.0})
    assert np.array_equal(b, b.T) and b[0, 2] == 0.0 and b[2, 1] == 2.0


def test_zero_state(grid):
    p = params2()
    z = State(grid, np.zeros((2, grid.n_points)))
    assert energy(p, z) == 0.0
    assert pohozaev(p, z) == 0.0
    assert mass(z, 0) == 0.0
    assert np.all(energy_gradient(p, z).values == 0.0)


def test_gaussian_mass_and_cross(grid):
    g = np.exp(-grid.nodes**2 / 2)
    s = clean(grid, np.stack([g, g]))
    p = SystemParams([1, 1], [1, 1], [4, 4], [2.0, 2.0], 1.0)
    assert mass(s, 0) == pytest.approx(PI32, rel=1e-9)
    assert cross_term(p, s, 0, 1) == pytest.approx(HALF_PI32, rel=1e-9)


def test_cross_term_zero_and_swap(grid):
    rng = np.random.default_rng(0)
    s = random_state(grid, 2, rng)
    p = params2()
    zero = clean(grid, np.stack([s.values[0], np.zeros(grid.n_points)]))
    assert cross_term(p, zero, 0, 1) == 0.0
    swapped = SystemParams(p.a[::-1], p.mu[::-1], p.p[::-1], p.r[::-1], p.beta[0, 1])
    s2 = State(grid, s.values[::-1])
    assert cross_term(swapped, s2, 0, 1) == pytest.approx(cross_term(p, s, 0, 1), rel=1e-14)
    with pytest.raises(IndexError):
        cross_term(p, s, 1, 0)


def test_decoupled_energy_is_sum_of_scalar_functionals(grid):
    rng = np.random.default_rng(1)
    s = random_state(grid, 2, rng)
    p = params2(beta=0.0)
    scalar = 0.0
    for j in range(2):
        u = s.values[j]
        scalar += 0.5 * kinetic(grid, u) - p.mu[j] / p.p[j] * integrate(grid, np.abs(u) ** p.p[j])
    assert energy(p, s) == pytest.approx(scalar, rel=1e-12)


def test_energy_linear_in_beta(grid):
    rng = np.random.default_rng(2)
    s = random_state(grid, 2, rng)
    p1, p2 = params2(beta=0.4), params2(beta=0.8)
    drop = energy(p1, s) - energy(p2, s)
    assert drop == pytest.approx(0.4 * cross_term(p1, s, 0, 1), rel=1e-10)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), k=st.integers(1, 3))
def test_reduced_energy_identity(grid, seed, k):
    rng = np.random.default_rng(seed)
    p, s = states.random_case(grid, k, rng)
    e, j, red = energy(p, s), pohozaev(p, s), reduced_energy(p, s)
    assert e - 0.5 * j == pytest.approx(red, rel=1e-12, abs=1e-12 * abs(e))
    assert red > 0


def test_reduced_energy_on_manifold(grid):
    rng = np.random.default_rng(4)
    p = params2()
    _, s = project_to_manifold(p, random_state(grid, 2, rng))
    t = terms(p, s)
    assert reduced_energy(p, s) == pytest.approx(energy(p, s), abs=1e-8 * t.kinetic.sum())


def test_pohozaev_matches_fiber_derivative(grid):
    rng = np.random.default_rng(5)
    p = params2()
    s = random_state(grid, 2, rng)
    fib = fiber_profile(p, s)
    assert float(fib.derivative(1.0)) == pytest.approx(pohozaev(p, s), rel=1e-6)


def test_energy_decreases_in_each_coupling(grid):
    rng = np.random.default_rng(6)
    s = random_state(grid, 3, rng)
    base = pair_beta(3, {(0, 1): 0.2, (0, 2): 0.3, (1, 2): 0.4})
    p = SystemParams(np.ones(3), np.ones(3), np.full(3, 4.0), np.full(3, 2.0), base)
    e0 = energy(p, s)
    for i, j in p.pairs():
        b = base.copy()
        b[i, j] = b[j, i] = b[i, j] + 0.5
        assert energy(p.with_beta(b), s) < e0


def _fd_check(p, s, v, eps=1e-5):
    plus = State(s.grid, s.values + eps * v)
    minus = State(s.grid, s.values - eps * v)
    fd = (energy(p, plus) - energy(p, minus)) / (2 * eps)
    an = inner(s.grid, energy_gradient(p, s).values, v)
    return fd, an


def test_gradient_finite_difference(grid):
    rng = np.random.default_rng(7)
    p = params2()
    for _ in range(5):
        s = random_state(grid, 2, rng)
        v = random_state(grid, 2, rng).values
        v[:, 0] = 0.0
        fd, an = _fd_check(p, s, v)
        vnorm = np.sqrt(inner(grid, v, v))
        assert abs(fd - an) <= 1e-5 * vnorm


def test_gradient_second_order_in_eps(grid):
    rng = np.random.default_rng(8)
    p = params2()
    s = random_state(grid, 2, rng)
    v = random_state(grid, 2, rng).values
    v[:, 0] = 0.0
    an = inner(grid, energy_gradient(p, s).values, v)
    e1 = abs(_fd_check(p, s, v, 1e-2)[0] - an)
    e2 = abs(_fd_check(p, s, v, 5e-3)[0] - an)
    assert e1 / e2 == pytest.approx(4.0, rel=0.1)


def test_gradient_decouples_at_zero_beta(grid):
    rng = np.random.default_rng(9)
    s = random_state(grid, 2, rng)
    p = params2(beta=0.0)
    g2 = energy_gradient(p, s).values
    for j in range(2):
        sub = p.subsystem([j])
        g1 = energy_gradient(sub, State(grid, s.values[j:j + 1])).values
        assert np.allclose(g1[0], g2[j], rtol=1e-14, atol=1e-14)


def test_coercivity_ratio_positive_on_manifold(grid):
    rng = np.random.default_rng(10)
    p = params2()
    samples = [project_to_manifold(p, random_state(grid, 2, rng))[1] for _ in range(8)]
    assert coercivity_ratio(p, samples) > 0


def test_state_shape_checks(grid):
    with pytest.raises(ValueError):
        State(grid, np.ones((2, 10)))
    s = random_state(grid, 1, np.random.default_rng(0))
    with pytest.raises(ValueError, match="components"):
        energy(params2(), s)
    with pytest.raises(IndexError):
        mass(s, 3)
