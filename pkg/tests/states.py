"""Random smooth test states and parameters shared by the test modules."""

import numpy as np

from nlsground.fiber import fiber_profile
from nlsground.functionals import SystemParams, clean, pair_beta
from nlsground.scalar_ground import mass_for_lambda


def _even_mixture(r, centers, widths, amps):
    u = np.zeros_like(r)
    for c, w, a in zip(centers, widths, amps):
        u += a * (np.exp(-((r - c) ** 2) / (2 * w**2)) + np.exp(-((r + c) ** 2) / (2 * w**2)))
    return u


def random_params(k, rng, beta_max=2.0, r_sum=(3.6, 5.8), lam=(1.0, 4.0)):
    """Admissible parameters with random exponents and couplings.

    Masses are those of scalar solitons with frequency in ``lam``, so every
    component lives on a length scale of order one.
    """
    p = rng.uniform(3.8, 5.8, k)
    mu = rng.uniform(0.5, 2.0, k)
    a = np.array([mass_for_lambda(rng.uniform(*lam), m, q) for m, q in zip(mu, p)])
    q = rng.uniform(*r_sum)
    r = np.full(k, q / 2.0)
    b = np.zeros((k, k))
    if k > 1:
        b = pair_beta(k, {(i, j): rng.uniform(0.0, beta_max)
                          for i in range(k) for j in range(i + 1, k)})
    return SystemParams(a, mu, p, r, b)


def random_state(grid, params, rng, t_target=(0.5, 2.0), min_width=25.0):
    """A random even Gaussian mixture per component, with mass ``a_j^2``.

    The mixture is dilated analytically (no interpolation) so that its fiber
    maximum sits at a random t in ``t_target``; projecting it therefore needs
    only a moderate grid rescale.
    """
    r = grid.nodes

    def build(shapes, s):
        rows = np.array([s**1.5 * _even_mixture(s * r, c, w, a) for c, w, a in shapes])
        rows *= (params.a / np.sqrt(rows**2 @ grid.weights))[:, None]
        return clean(grid, rows)

    for _ in range(100):
        shapes = []
        for _ in range(params.k):
            n = int(rng.integers(1, 3))
            shapes.append((rng.uniform(0.0, 1.0, n), rng.uniform(0.4, 1.0, n),
                           rng.uniform(0.5, 1.5, n)))
        t0 = fiber_profile(params, build(shapes, 1.0)).argmax()
        s = t0 / rng.uniform(*t_target)
        # both the state (scale s) and its projection (scale t0) must fit
        reach = max(np.max(c + 6.0 * w) for c, w, _ in shapes) / min(s, t0)
        resolved = min(np.min(w) for _, w, _ in shapes) / max(s, t0) > min_width * grid.h
        if reach < 0.75 * grid.r_max and resolved:
            return build(shapes, s)
    raise RuntimeError("no random state fits the grid for these parameters")


def random_case(grid, k, rng, t_target=(0.5, 2.0), **kwargs):
    """Random parameters and a random state that fits ``grid``."""
    for _ in range(50):
        params = random_params(k, rng, **kwargs)
        try:
            return params, random_state(grid, params, rng, t_target)
        except RuntimeError:
            continue
    raise RuntimeError("could not draw a random case for this grid")
