"""Energy, Pohozaev-Nehari functional and their pieces for k radial components.

Coupling is summed once per unordered pair i < j:

    E(u) = 1/2 sum_j |grad u_j|^2 - sum_j mu_j/p_j |u_j|^p_j
           - sum_{i<j} beta_ij int |u_i|^r_i |u_j|^r_j

which is the normalization whose Euler-Lagrange equations carry the
``beta_ij r_j |u_i|^r_i |u_j|^(r_j-2) u_j`` coupling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .radial_grid import Field, RadialGrid, fill_origin, integrate, kinetic, neg_laplacian

LOWER_EXP = 10.0 / 3.0
UPPER_EXP = 6.0


@dataclass(frozen=True, eq=False)
class SystemParams:
    """Parameters of a k-component system.

    ``beta`` is a symmetric k x k array with zero diagonal; a scalar is
    accepted for k = 2.
    """

    a: np.ndarray
    mu: np.ndarray
    p: np.ndarray
    r: np.ndarray
    beta: np.ndarray = field(default=None)

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, dtype=float))
        k = a.size
        mu = self._vec(self.mu, k, "mu")
        p = self._vec(self.p, k, "p")
        r = self._vec(self.r, k, "r")
        beta = self.beta
        if beta is None:
            beta = np.zeros((k, k))
        beta = np.asarray(beta, dtype=float)
        if beta.ndim == 0:
            if k != 2:
                raise ValueError("scalar beta is only meaningful for k = 2")
            beta = np.array([[0.0, float(beta)], [float(beta), 0.0]])
        for name, arr in (("a", a), ("mu", mu), ("p", p), ("r", r), ("beta", beta)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        self.validate()

    @staticmethod
    def _vec(x, k, name):
        arr = np.atleast_1d(np.asarray(x, dtype=float)).copy()
        if arr.size == 1 and k > 1:
            arr = np.full(k, arr[0])
        if arr.shape != (k,):
            raise ValueError(f"{name} must have {k} entries")
        return arr

    @property
    def k(self) -> int:
        return self.a.size

    def validate(self) -> None:
        k = self.k
        if np.any(~np.isfinite(self.a)) or np.any(self.a <= 0):
            raise ValueError("masses a_j must be positive")
        if np.any(~np.isfinite(self.mu)) or np.any(self.mu <= 0):
            raise ValueError("self-interaction strengths mu_j must be positive")
        for j, pj in enumerate(self.p):
            if not LOWER_EXP < pj < UPPER_EXP:
                raise ValueError(f"p_{j + 1} = {pj} violates 10/3 < p < 6")
        if np.any(self.r <= 1):
            raise ValueError("coupling exponents r_j must exceed 1")
        b = self.beta
        if b.shape != (k, k):
            raise ValueError(f"beta must be {k}x{k}")
        if not np.all(np.isfinite(b)):
            raise ValueError("beta must be finite")
        if not np.allclose(b, b.T, rtol=0, atol=0):
            raise ValueError("beta must be symmetric")
        if np.any(np.diag(b) != 0):
            raise ValueError("beta must have zero diagonal")
        if np.any(b < 0):
            raise ValueError("beta_ij must be nonnegative")
        for i, j in self.pairs():
            q = self.r[i] + self.r[j]
            if b[i, j] > 0 and not LOWER_EXP < q < UPPER_EXP:
                raise ValueError(
                    f"r_{i + 1} + r_{j + 1} = {q} violates 10/3 < r_i + r_j < 6"
                )

    def pairs(self):
        k = self.k
        return [(i, j) for i in range(k) for j in range(i + 1, k)]

    def with_beta(self, beta) -> SystemParams:
        return SystemParams(self.a, self.mu, self.p, self.r, beta)

    def subsystem(self, idx) -> SystemParams:
        idx = list(idx)
        return SystemParams(
            self.a[idx], self.mu[idx], self.p[idx], self.r[idx], self.beta[np.ix_(idx, idx)]
        )

    def to_dict(self) -> dict:
        return {
            "a": self.a.tolist(),
            "mu": self.mu.tolist(),
            "p": self.p.tolist(),
            "r": self.r.tolist(),
            "beta": self.beta.tolist(),
        }


def pair_beta(k: int, values: dict) -> np.ndarray:
    """Symmetric coupling matrix from ``{(i, j): beta_ij}`` (0-based)."""
    b = np.zeros((k, k))
    for (i, j), val in values.items():
        b[i, j] = b[j, i] = val
    return b


@dataclass(frozen=True, eq=False)
class State:
    """k radial components on one grid, stored as a (k, n) array."""

    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if values.shape[1] != self.grid.n_points:
            raise ValueError("state rows must match the grid length")
        if not np.all(np.isfinite(values)):
            raise ValueError("state contains non-finite values")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_fields(cls, fields) -> State:
        grid = fields[0].grid
        if any(not f.grid.same_as(grid) for f in fields):
            raise ValueError("all fields must share one grid")
        return cls(grid, np.stack([f.values for f in fields]))

    @property
    def k(self) -> int:
        return self.values.shape[0]

    @cached_property
    def masses(self) -> np.ndarray:
        return integrate(self.grid, self.values**2)

    def field(self, j: int) -> Field:
        return Field(self.grid, self.values[j])

    def is_zero(self) -> bool:
        return not np.any(self.values[:, 1:])


def clean(grid: RadialGrid, values: np.ndarray) -> State:
    """Apply the boundary conventions (u(R) = 0, even at r = 0) and wrap."""
    values = np.array(values, dtype=float)
    values[:, -1] = 0.0
    fill_origin(values)
    return State(grid, values)


class Terms(NamedTuple):
    """Per-component integrals entering E and J.

    kinetic[j] = |grad u_j|_2^2, power[j] = |u_j|_{p_j}^{p_j},
    cross[i, j] = int |u_i|^r_i |u_j|^r_j (symmetric, zero diagonal).
    """

    kinetic: np.ndarray
    power: np.ndarray
    cross: np.ndarray


def _check(params: SystemParams, state: State) -> None:
    if state.k != params.k:
        raise ValueError(f"state has {state.k} components, parameters have {params.k}")


def terms(params: SystemParams, state: State) -> Terms:
    _check(params, state)
    grid = state.grid
    u = np.abs(state.values)
    kin = np.atleast_1d(kinetic(grid, state.values))
    powr = integrate(grid, u ** params.p[:, None])
    k = params.k
    cross = np.zeros((k, k))
    if k > 1:
        ur = u ** params.r[:, None]
        for i, j in params.pairs():
            cross[i, j] = cross[j, i] = integrate(grid, ur[i] * ur[j])
    t = Terms(kin, np.atleast_1d(powr), cross)
    if not (np.all(np.isfinite(t.kinetic)) and np.all(np.isfinite(t.power))
            and np.all(np.isfinite(t.cross))):
        raise FloatingPointError("non-finite functional value")
    return t


def _pair_sum(params: SystemParams, cross: np.ndarray, coeff) -> float:
    total = 0.0
    for i, j in params.pairs():
        total += coeff(i, j) * params.beta[i, j] * cross[i, j]
    return total


def energy_from_terms(params: SystemParams, t: Terms) -> float:
    return float(
        0.5 * t.kinetic.sum()
        - np.sum(params.mu / params.p * t.power)
        - _pair_sum(params, t.cross, lambda i, j: 1.0)
    )


def pohozaev_from_terms(params: SystemParams, t: Terms) -> float:
    p, r = params.p, params.r
    return float(
        t.kinetic.sum()
        - np.sum(3.0 * params.mu * (p - 2.0) / (2.0 * p) * t.power)
        - _pair_sum(params, t.cross, lambda i, j: 1.5 * (r[i] + r[j] - 2.0))
    )


def reduced_from_terms(params: SystemParams, t: Terms) -> float:
    p, r = params.p, params.r
    return float(
        np.sum((3.0 * (p - 2.0) - 4.0) / (4.0 * p) * params.mu * t.power)
        + _pair_sum(params, t.cross, lambda i, j: (3.0 * (r[i] + r[j] - 2.0) - 4.0) / 4.0)
    )


def mass(state: State, j: int) -> float:
    """``int u_j^2 dx``."""
    if not 0 <= j < state.k:
        raise IndexError(f"component {j} out of range for k = {state.k}")
    return float(state.masses[j])


def energy(params: SystemParams, state: State) -> float:
    return energy_from_terms(params, terms(params, state))


def pohozaev(params: SystemParams, state: State) -> float:
    """The Pohozaev-Nehari functional J; its zero set is the manifold M."""
    return pohozaev_from_terms(params, terms(params, state))


def reduced_energy(params: SystemParams, state: State) -> float:
    """``E - J/2``, written without the kinetic term."""
    return reduced_from_terms(params, terms(params, state))


def cross_term(params: SystemParams, state: State, i: int, j: int) -> float:
    """``int |u_i|^r_i |u_j|^r_j dx`` for i < j."""
    _check(params, state)
    if not (0 <= i < j < params.k):
        raise IndexError(f"need 0 <= i < j < {params.k}, got ({i}, {j})")
    u = np.abs(state.values)
    return float(integrate(state.grid, u[i] ** params.r[i] * u[j] ** params.r[j]))


def scale_free_residual(params: SystemParams, t: Terms) -> float:
    """``|J| / sum |grad u_j|^2``, the manifold-membership measure."""
    return abs(pohozaev_from_terms(params, t)) / max(t.kinetic.sum(), 1e-300)


def coercivity_ratio(params: SystemParams, states) -> float:
    """Fitted constant for ``E >= C0 * sum |grad u_j|^2`` over the given states.

    Meant for states on the manifold J = 0, where E equals the reduced energy
    and the ratio is positive; returns the minimum of E / (kinetic sum).
    """
    ratios = []
    for st in states:
        t = terms(params, st)
        ratios.append(energy_from_terms(params, t) / max(t.kinetic.sum(), 1e-300))
    if not ratios:
        raise ValueError("need at least one state")
    return float(min(ratios))


def _odd_power(u: np.ndarray, q: float) -> np.ndarray:
    """``|u|^(q-2) u``, taken as 0 at u = 0 (q > 1)."""
    return np.sign(u) * np.abs(u) ** (q - 1.0)


def nonlinear_force(params: SystemParams, values: np.ndarray) -> np.ndarray:
    """Right-hand side of the stationary system without the multiplier term."""
    u = np.atleast_2d(values)
    out = params.mu[:, None] * _odd_power(u, params.p[:, None])
    if params.k > 1:
        au = np.abs(u)
        ur = au ** params.r[:, None]
        for i, j in params.pairs():
            b = params.beta[i, j]
            if b == 0.0:
                continue
            out[j] += b * params.r[j] * ur[i] * _odd_power(u[j], params.r[j])
            out[i] += b * params.r[i] * ur[j] * _odd_power(u[i], params.r[i])
    return out


def energy_gradient(params: SystemParams, state: State) -> State:
    """L2 gradient of E (with respect to the quadrature inner product)."""
    _check(params, state)
    g = neg_laplacian(state.grid, state.values) - nonlinear_force(params, state.values)
    g[:, -1] = 0.0
    g[:, 0] = 0.0
    if not np.all(np.isfinite(g)):
        raise FloatingPointError("non-finite gradient")
    return State(state.grid, g)


def inner(grid: RadialGrid, f: np.ndarray, g: np.ndarray) -> float:
    """Quadrature inner product summed over components."""
    return float(np.sum(integrate(grid, np.atleast_2d(f) * np.atleast_2d(g))))
