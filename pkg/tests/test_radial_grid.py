import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from nlsground.radial_grid import (
    Field,
    build_grid,
    integrate,
    kinetic,
    kinetic_density,
    make_field,
    neg_laplacian,
    rescale,
    rescale_values,
    solve_shifted,
)

# closed forms, evaluated symbolically and frozen
PI32 = 5.5683279968317078  # int exp(-r^2) dx = pi^(3/2)
TWO_PI32 = 15.749609945722420  # int exp(-r^2/2) dx = (2 pi)^(3/2)
GAUSS_KINETIC = 8.3524919952475618  # |grad exp(-r^2/2)|_2^2 = 3 pi^(3/2) / 2


def gaussian(grid, s=1.0):
    return make_field(grid, np.exp(-(grid.nodes / s) ** 2 / 2))


def test_nodes_and_weights(default_grid):
    g = default_grid
    assert g.nodes[0] == 0.0 and g.nodes[-1] == g.r_max
    assert np.all(np.diff(g.nodes) > 0)
    assert np.all(g.weights >= 0)
    assert g.weights[0] == 0.0


@pytest.mark.parametrize("n", [2, 15, 0])
def test_too_few_points(n):
    with pytest.raises(ValueError):
        build_grid(n, 10.0)


@pytest.mark.parametrize("r_max", [0.0, -1.0, np.inf, np.nan])
def test_bad_radius(r_max):
    with pytest.raises(ValueError):
        build_grid(64, r_max)


def test_ball_volume_second_order():
    errs = []
    for n in (201, 401, 801):
        g = build_grid(n, 2.0)
        ind = (g.nodes <= 1.0).astype(float)
        errs.append(abs(integrate(g, ind) - 4 * np.pi / 3))
    # indicator is discontinuous, so only O(h) is guaranteed; check it shrinks
    assert errs[2] < errs[0]
    assert errs[2] < 2e-2


def test_ball_of_radius_R():
    g = build_grid(4001, 3.0)
    assert integrate(g, np.ones(g.n_points)) == pytest.approx(4 / 3 * np.pi * 27, rel=1e-6)


def test_gaussian_integrals(default_grid):
    g = default_grid
    assert integrate(g, np.exp(-g.nodes**2)) == pytest.approx(PI32, rel=1e-6)
    assert integrate(g, np.exp(-g.nodes**2 / 2)) == pytest.approx(TWO_PI32, rel=1e-6)


def test_integrate_zero_and_linear(default_grid):
    g = default_grid
    f = np.exp(-g.nodes)
    h = np.cos(g.nodes) * np.exp(-g.nodes**2)
    assert integrate(g, np.zeros(g.n_points)) == 0.0
    assert integrate(g, f + h) == pytest.approx(integrate(g, f) + integrate(g, h), rel=1e-14)


def test_integrate_length_mismatch(default_grid):
    with pytest.raises(ValueError):
        integrate(default_grid, np.ones(10))


def test_field_requires_dirichlet(default_grid):
    with pytest.raises(ValueError):
        Field(default_grid, np.ones(default_grid.n_points))
    with pytest.raises(ValueError):
        Field(default_grid, np.full(default_grid.n_points, np.nan))


def test_gaussian_kinetic(default_grid):
    assert kinetic(default_grid, gaussian(default_grid).values) == pytest.approx(
        GAUSS_KINETIC, rel=1e-9)


def test_kinetic_fourth_order():
    errs = [abs(kinetic(g, gaussian(g).values) - GAUSS_KINETIC)
            for g in (build_grid(161, 16.0), build_grid(321, 16.0))]
    assert errs[0] / errs[1] > 12.0


def test_kinetic_density_constant_interior(default_grid):
    u = np.ones(default_grid.n_points)
    u[-1] = 0.0
    dens = kinetic_density(Field(default_grid, u))
    assert np.all(dens[:-2] == 0.0)


def test_kinetic_density_second_order():
    errs = []
    for n in (401, 801, 1601):
        g = build_grid(n, 16.0)
        errs.append(abs(integrate(g, kinetic_density(gaussian(g))) - GAUSS_KINETIC))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.9)


def test_neg_laplacian_is_gradient_of_kinetic():
    g = build_grid(512, 12.0)
    rng = np.random.default_rng(3)
    u = np.exp(-g.nodes**2 / 3) * (1 + 0.2 * np.sin(g.nodes))
    u[-1] = 0.0
    v = rng.normal(size=g.n_points) * np.exp(-g.nodes**2 / 8)
    v[[0, -1]] = 0.0
    eps = 1e-6
    fd = (kinetic(g, u + eps * v) - kinetic(g, u - eps * v)) / (2 * eps)
    an = 2.0 * integrate(g, neg_laplacian(g, u) * v)
    assert fd == pytest.approx(an, rel=1e-7)


def test_neg_laplacian_of_gaussian(default_grid):
    g = default_grid
    r = g.nodes
    exact = (3 - r**2) * np.exp(-(r**2) / 2)
    out = neg_laplacian(g, gaussian(g).values)
    inner = slice(1, g.n_points // 2)
    assert np.max(np.abs(out[inner] - exact[inner])) < 1e-6


def test_solve_shifted_inverts_second_order_operator():
    g = build_grid(1025, 12.0)
    r = g.nodes
    exact = np.exp(-(r**2) / 2)
    rhs = (3 - r**2) * exact + 2.0 * exact
    sol = solve_shifted(g, rhs, 2.0)
    assert np.max(np.abs(sol[1:-1] - exact[1:-1])) < 1e-3
    both = solve_shifted(g, np.stack([rhs, rhs]), np.array([2.0, 2.0]))
    assert np.allclose(both[0], sol) and np.allclose(both[1], sol)


def test_rescale_identity(default_grid):
    u = gaussian(default_grid)
    assert np.max(np.abs(rescale(u, 1.0).values - u.values)) <= 1e-12


@pytest.mark.parametrize("t", [0.5, 0.8, 1.7, 2.0])
def test_rescale_mass_and_kinetic(default_grid, t):
    u = gaussian(default_grid, 1.3)
    v = rescale(u, t)
    assert v.mass == pytest.approx(u.mass, rel=1e-6)
    assert kinetic(default_grid, v.values) == pytest.approx(
        t**2 * kinetic(default_grid, u.values), rel=1e-4)


def test_rescale_rejects_bad_factor(default_grid):
    with pytest.raises(ValueError):
        rescale_values(default_grid, gaussian(default_grid).values, 0.0)


@settings(max_examples=40, deadline=None)
@given(t=st.floats(0.25, 4.0), s=st.floats(0.6, 1.6))
def test_rescale_mass_property(default_grid, t, s):
    # the dilated field (width s/t) must still fit in the box
    assume(s / t <= 2.5)
    u = gaussian(default_grid, s)
    assert abs(rescale(u, t).mass - u.mass) <= 1e-5 * u.mass


def test_rescale_mass_loss_is_truncation(default_grid):
    # width 6 leaks past r = 20; the same spacing on a box twice as large keeps it
    lost = [abs(rescale(gaussian(g, 1.5), 0.25).mass - gaussian(g, 1.5).mass)
            / gaussian(g, 1.5).mass for g in (default_grid, build_grid(8191, 40.0))]
    assert lost[0] > 1e-5 and lost[1] <= 1e-10


@settings(max_examples=30, deadline=None)
@given(s=st.floats(0.5, 2.0), t=st.floats(0.5, 2.0))
def test_rescale_composition(default_grid, s, t):
    u = gaussian(default_grid)
    two = rescale(rescale(u, s), t)
    one = rescale(u, s * t)
    diff = Field(default_grid, two.values - one.values).mass
    assert diff <= 1e-6 * u.mass


def test_truncation_radius_insensitive():
    # doubling r_max at fixed h must not move the integrals
    g1 = build_grid(2049, 20.0)
    g2 = build_grid(4097, 40.0)
    m1 = integrate(g1, np.exp(-g1.nodes**2))
    m2 = integrate(g2, np.exp(-g2.nodes**2))
    k1 = kinetic(g1, gaussian(g1).values)
    k2 = kinetic(g2, gaussian(g2).values)
    assert m1 == pytest.approx(m2, rel=1e-12)
    assert k1 == pytest.approx(k2, rel=1e-10)
