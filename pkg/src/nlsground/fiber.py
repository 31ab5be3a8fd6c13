"""Dilation fibers ``t -> E(t * u)`` and projection onto the manifold J = 0.

Under ``u -> t^{3/2} u(t x)`` the kinetic integrals scale like t^2, a self
term ``|u_j|_{p_j}^{p_j}`` like ``t^{3(p_j-2)/2}`` and a coupling integral like
``t^{3(r_i+r_j-2)/2}``.  All exponents exceed 2 in the mass-supercritical
regime, so the fiber rises from 0 and then falls to -inf with exactly one
critical point, and ``t Psi'(t) = J(t * u)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .functionals import State, SystemParams, Terms, scale_free_residual, terms
from .radial_grid import rescale_values

T_MIN = 1e-6
T_MAX = 1e6
POLISH_STEPS = 12


class FiberError(RuntimeError):
    """The fiber maximizer could not be located."""


@dataclass(frozen=True)
class FiberPolynomial:
    """``Psi(t) = kinetic_coeff t^2 + sum coeff t^exponent`` (coeffs <= 0)."""

    kinetic_coeff: float
    terms: tuple

    def value(self, t):
        t = np.asarray(t, dtype=float)
        out = self.kinetic_coeff * t**2
        for e, c in self.terms:
            out = out + c * t**e
        return out

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        out = 2.0 * self.kinetic_coeff * t
        for e, c in self.terms:
            out = out + e * c * t ** (e - 1.0)
        return out

    def pohozaev(self, t):
        """``J(t * u) = t Psi'(t)``."""
        return np.asarray(t) * self.derivative(t)

    def _slope_over_t(self, t: float) -> float:
        out = 2.0 * self.kinetic_coeff
        for e, c in self.terms:
            out += e * c * t ** (e - 2.0)
        return out

    def argmax(self) -> float:
        """The unique t0 > 0 with ``Psi'(t0) = 0``."""
        if self.kinetic_coeff <= 0.0 or not any(c < 0.0 for _, c in self.terms):
            raise FiberError("fiber has no interior maximum (zero or linear state)")
        f = self._slope_over_t
        lo = hi = 1.0
        if f(1.0) > 0.0:
            while f(hi) > 0.0:
                lo, hi = hi, hi * 2.0
                if hi > T_MAX:
                    raise FiberError("fiber maximizer beyond t = 1e6")
        else:
            while f(lo) <= 0.0:
                lo, hi = lo / 2.0, lo
                if lo < T_MIN:
                    raise FiberError("fiber maximizer below t = 1e-6")
        if f(hi) == 0.0:
            return hi
        s = brentq(lambda s: f(np.exp(s)), np.log(lo), np.log(hi), xtol=1e-15, rtol=1e-15,
                   maxiter=200)
        return float(np.exp(s))


def polynomial_from_terms(params: SystemParams, t: Terms) -> FiberPolynomial:
    p, r = params.p, params.r
    pieces = []
    for j in range(params.k):
        pieces.append((1.5 * (p[j] - 2.0), -params.mu[j] / p[j] * t.power[j]))
    for i, j in params.pairs():
        if params.beta[i, j] != 0.0:
            pieces.append((1.5 * (r[i] + r[j] - 2.0), -params.beta[i, j] * t.cross[i, j]))
    return FiberPolynomial(0.5 * float(t.kinetic.sum()), tuple(pieces))


def fiber_profile(params: SystemParams, state: State) -> FiberPolynomial:
    """Exact fiber of ``state`` built from its integrals at t = 1."""
    if state.is_zero():
        raise ValueError("the zero state has no fiber")
    return polynomial_from_terms(params, terms(params, state))


def _restore_masses(grid, values, target):
    m = values**2 @ grid.weights
    scale = np.ones_like(m)
    nz = (m > 0) & (target > 0)
    scale[nz] = np.sqrt(target[nz] / m[nz])
    return values * scale[:, None]


def project_to_manifold(params: SystemParams, state: State, tol: float = 1e-10):
    """Dilate ``state`` onto ``J = 0``.

    The dilation factor comes from the fiber polynomial.  The grid rescale
    then introduces interpolation error of its own, so the step is repeated
    on the resampled state (each correction factor is within round-off of
    1 after two or three passes), restoring the component masses after
    every resample.

    Returns
    -------
    t0 : float
        Total dilation factor applied.
    projected : State
    """
    if state.is_zero():
        raise ValueError("the zero state has no fiber")
    grid = state.grid
    target = state.masses.copy()
    t_total = 1.0
    values = state.values
    current = state
    for _ in range(POLISH_STEPS):
        tm = terms(params, current)
        if scale_free_residual(params, tm) <= tol:
            return t_total, current
        t0 = polynomial_from_terms(params, tm).argmax()
        if not T_MIN <= t_total * t0 <= T_MAX:
            raise FiberError(f"dilation factor {t_total * t0:g} outside [1e-6, 1e6]")
        if t0 != 1.0:
            values = _restore_masses(grid, rescale_values(grid, values, t0), target)
        t_total *= t0
        current = State(grid, values)
    tm = terms(params, current)
    if scale_free_residual(params, tm) > max(tol, 1e-8):
        raise FiberError("grid projection did not reach J = 0")
    return t_total, current
