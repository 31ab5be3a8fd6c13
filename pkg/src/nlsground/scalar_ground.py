"""Positive radial solution of ``-Laplace w + lambda w = mu w^(p-1)`` with mass a^2.

The unit soliton Q solves ``Q'' + 2Q'/r - Q + Q^(p-1) = 0`` and is found by
shooting on Q(0).  Every other solution is a rescaling,
``w(x) = (lambda/mu)^(1/(p-2)) Q(sqrt(lambda) x)``, and lambda is fixed by
the mass constraint.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numba
import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .functionals import LOWER_EXP, UPPER_EXP
from .radial_grid import FOUR_PI, Field, RadialGrid, build_grid, make_field

ODE_STEP = 1e-3
ODE_RMAX = 40.0
BISECTIONS = 60
TAIL_REL_DEV = 1e-6


class ShootingError(RuntimeError):
    pass


@numba.njit(cache=True)
def _rhs(r, q, dq, p):
    nl = np.abs(q) ** (p - 2.0) * q
    if r == 0.0:
        return dq, (q - nl) / 3.0
    return dq, q - nl - 2.0 * dq / r


@numba.njit(cache=True)
def _shoot(q0, p, h, n, record):
    """RK4 from r = 0.  Returns (verdict, last index, Q, Q').

    verdict +1: Q crossed zero (Q(0) too large); -1: Q' turned positive
    (too small); 0: neither happened before the end.
    """
    qs = np.zeros(n)
    dqs = np.zeros(n)
    q = q0
    dq = 0.0
    qs[0] = q
    for i in range(n - 1):
        r = i * h
        k1q, k1d = _rhs(r, q, dq, p)
        k2q, k2d = _rhs(r + 0.5 * h, q + 0.5 * h * k1q, dq + 0.5 * h * k1d, p)
        k3q, k3d = _rhs(r + 0.5 * h, q + 0.5 * h * k2q, dq + 0.5 * h * k2d, p)
        k4q, k4d = _rhs(r + h, q + h * k3q, dq + h * k3d, p)
        q = q + h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q)
        dq = dq + h / 6.0 * (k1d + 2.0 * k2d + 2.0 * k3d + k4d)
        if record:
            qs[i + 1] = q
            dqs[i + 1] = dq
        if q < 0.0:
            return 1, i + 1, qs, dqs
        if dq > 0.0:
            return -1, i + 1, qs, dqs
    return 0, n - 1, qs, dqs


@dataclass(frozen=True, eq=False)
class UnitSoliton:
    """Q on a fine ODE mesh with its integrals over R^3."""

    p: float
    q0: float
    r: np.ndarray
    q: np.ndarray
    dq: np.ndarray
    r_cut: float
    mass: float
    kinetic: float
    power: float

    @property
    def pohozaev_residual(self) -> float:
        """``|K - 3(p-2)/(2p) P| / K``; zero for an exact solution."""
        return abs(self.kinetic - 1.5 * (self.p - 2.0) / self.p * self.power) / self.kinetic

    def __call__(self, s):
        """Evaluate Q at radii s (exponential tail beyond the trusted range)."""
        s = np.abs(np.asarray(s, dtype=float))
        out = np.empty_like(s)
        inside = s <= self.r_cut
        out[inside] = _spline(self)(s[inside])
        qc = self.q[-1]
        so = s[~inside]
        out[~inside] = qc * self.r_cut / so * np.exp(-(so - self.r_cut))
        return out

    def field(self, grid: RadialGrid) -> Field:
        return make_field(grid, self(grid.nodes))


@lru_cache(maxsize=64)
def _spline(sol: UnitSoliton) -> CubicSpline:
    return CubicSpline(sol.r, sol.q, bc_type=((1, 0.0), "not-a-knot"))


def _check_p(p):
    if not LOWER_EXP < p < UPPER_EXP:
        raise ValueError(f"p = {p} violates 10/3 < p < 6")


@lru_cache(maxsize=32)
def solve_unit_soliton(p: float) -> UnitSoliton:
    """Ground state of ``-Laplace Q + Q = Q^(p-1)`` by shooting on Q(0).

    The RK4 step starts at 1e-3 and is halved (at most three times) while the
    Pohozaev identity fails by more than 1e-9; only strongly peaked
    solitons near p = 6 need that.

    Raises
    ------
    ShootingError
        If no overshoot/undershoot bracket for Q(0) is found.
    """
    p = float(p)
    _check_p(p)
    h = ODE_STEP
    sol = _shoot_soliton(p, h)
    for _ in range(3):
        if sol.pohozaev_residual <= 1e-9:
            break
        h /= 2.0
        sol = _shoot_soliton(p, h)
    return sol


def _shoot_soliton(p: float, h: float) -> UnitSoliton:
    n = int(round(ODE_RMAX / h)) + 1
    lo = 1.0 + 1e-6
    if _shoot(lo, p, h, n, False)[0] != -1:
        raise ShootingError(f"no undershoot near Q(0) = 1 for p = {p}")
    hi = 2.0
    while _shoot(hi, p, h, n, False)[0] != 1:
        lo, hi = hi, 2.0 * hi
        if hi > 1e4:
            raise ShootingError(f"no overshoot bracket for p = {p}")
    for _ in range(BISECTIONS):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        verdict = _shoot(mid, p, h, n, False)[0]
        if verdict == 1:
            hi = mid
        elif verdict == -1:
            lo = mid
        else:
            break
    _, i_lo, q_lo, dq_lo = _shoot(lo, p, h, n, True)
    _, i_hi, q_hi, _ = _shoot(hi, p, h, n, True)
    m = min(i_lo, i_hi)
    dev = np.abs(q_lo[:m] - q_hi[:m]) > TAIL_REL_DEV * np.abs(q_lo[:m])
    cut = int(np.argmax(dev)) if dev.any() else m
    cut = min(cut, m) - 1
    r = np.arange(cut + 1) * h
    q = q_lo[: cut + 1].copy()
    dq = dq_lo[: cut + 1].copy()
    r_cut = float(r[-1])

    # fine-mesh integrals plus the analytic-tail contribution (tiny)
    w = FOUR_PI * r**2
    mass = np.trapezoid(w * q**2, r)
    kin = np.trapezoid(w * dq**2, r)
    powr = np.trapezoid(w * q**p, r)
    tail_r = r_cut + np.arange(1, 20001) * h
    tail_q = q[-1] * r_cut / tail_r * np.exp(-(tail_r - r_cut))
    tail_dq = -tail_q * (1.0 + 1.0 / tail_r)
    tw = FOUR_PI * tail_r**2
    mass += np.trapezoid(np.r_[w[-1] * q[-1] ** 2, tw * tail_q**2], np.r_[r_cut, tail_r])
    kin += np.trapezoid(np.r_[w[-1] * dq[-1] ** 2, tw * tail_dq**2], np.r_[r_cut, tail_r])
    powr += np.trapezoid(np.r_[w[-1] * q[-1] ** p, tw * tail_q**p], np.r_[r_cut, tail_r])
    return UnitSoliton(p, 0.5 * (lo + hi), r, q, dq, r_cut, float(mass), float(kin), float(powr))


@dataclass(frozen=True, eq=False)
class ScalarLevel:
    """The normalized scalar ground state and its energy level."""

    a: float
    mu: float
    p: float
    lam: float
    amplitude: float
    profile: Field
    level: float
    kinetic: float
    power: float
    mass: float

    @property
    def pohozaev_residual(self) -> float:
        return abs(self.kinetic - 1.5 * (self.p - 2.0) * self.mu / self.p * self.power) / self.kinetic

    @property
    def mass_residual(self) -> float:
        return abs(self.mass - self.a**2) / self.a**2


def rescaled_integrals(sol: UnitSoliton, lam: float, mu: float):
    """(mass, kinetic, power) of ``(lam/mu)^(1/(p-2)) Q(sqrt(lam) x)``."""
    p = sol.p
    amp = (lam / mu) ** (1.0 / (p - 2.0))
    vol = lam**-1.5
    return amp**2 * vol * sol.mass, amp**2 * lam * vol * sol.kinetic, amp**p * vol * sol.power


def scalar_level(a: float, mu: float, p: float, grid: RadialGrid | None = None) -> ScalarLevel:
    """Solve the scalar problem with mass a^2 and return ``l(a, mu, p)``.

    lambda is found by bracketed root finding on log(lambda) in [-20, 20];
    the mass is strictly decreasing in lambda for p > 10/3.
    """
    a, mu, p = float(a), float(mu), float(p)
    if a <= 0 or mu <= 0:
        raise ValueError("a and mu must be positive")
    sol = solve_unit_soliton(p)

    def log_mass_gap(s):
        return np.log(rescaled_integrals(sol, np.exp(s), mu)[0]) - 2.0 * np.log(a)

    lo, hi = -20.0, 20.0
    if log_mass_gap(lo) * log_mass_gap(hi) > 0:
        raise ValueError(f"lambda for a = {a}, mu = {mu}, p = {p} outside [e^-20, e^20]")
    lam = float(np.exp(brentq(log_mass_gap, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=200)))
    m, kin, powr = rescaled_integrals(sol, lam, mu)
    level = 0.5 * kin - mu / p * powr
    amp = (lam / mu) ** (1.0 / (p - 2.0))
    grid = grid if grid is not None else build_grid()
    profile = make_field(grid, amp * sol(np.sqrt(lam) * grid.nodes))
    return ScalarLevel(a, mu, p, lam, amp, profile, float(level), float(kin), float(powr), float(m))


def mass_for_lambda(lam: float, mu: float, p: float) -> float:
    """Inverse map: the a with ``lambda(a, mu, p) = lam``."""
    return float(np.sqrt(rescaled_integrals(solve_unit_soliton(p), lam, mu)[0]))
