"""Coupling sweeps: the curve gamma(beta), its threshold, and the k = 3 region map.

A k = 2 curve is traced with a warm-start chain.  Each point descends from
the previous point's coupled state, and the two single-component minimizers
(whose energy does not depend on beta) are computed once and always kept as
candidates.  Every ``cold_every`` points a full multi-start solve
cross-checks the chain.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .fiber import FiberError
from .functionals import SystemParams, pair_beta
from .minimizer import (
    GroundStateResult,
    SolveConfig,
    best_of,
    descend,
    failed_result,
    initialize,
    semitrivial_start,
    solve_ground_state,
)
from .radial_grid import RadialGrid, build_grid
from .scalar_ground import scalar_level

PLATEAU_RTOL = 1e-6
DEPARTURE_RTOL = 3e-3
MONOTONE_SLACK = 1e-6
WARM_COLD_RTOL = 1e-5
DERIVATIVE_RTOL = 0.05
DECAY_FACTOR = 0.2


class CurveWarning(UserWarning):
    """A computed curve violates one of its expected structural properties."""


class PlateauNotExited(RuntimeError):
    """The beta grid ends before gamma leaves its plateau."""


def log_beta_grid(beta_min: float, beta_max: float, n: int = 64) -> np.ndarray:
    """``0`` followed by ``n - 1`` log-spaced couplings in [beta_min, beta_max]."""
    if not 0 < beta_min < beta_max or n < 2:
        raise ValueError("need 0 < beta_min < beta_max and n >= 2")
    return np.concatenate([[0.0], np.geomspace(beta_min, beta_max, n - 1)])


@dataclass(frozen=True, eq=False)
class GammaCurve:
    params: SystemParams
    betas: np.ndarray
    gammas: np.ndarray
    cross_terms: np.ndarray
    multipliers: np.ndarray
    semitrivial: np.ndarray
    converged: np.ndarray
    pohozaev_residuals: np.ndarray
    stationarity_residuals: np.ndarray
    mass_residuals: np.ndarray
    levels: np.ndarray
    plateau: float
    # (min, max) cross term over near-minimizers: proxies for d_1 and its hat version
    cross_range: np.ndarray
    cold_checks: list = field(default_factory=list)
    baselines: list = field(default_factory=list, repr=False)
    results: list = field(default_factory=list, repr=False)
    coupled: list = field(default_factory=list, repr=False)
    grid: RadialGrid = None
    config: SolveConfig = None

    def rows(self):
        for n, b in enumerate(self.betas):
            yield {
                "beta": float(b),
                "gamma": float(self.gammas[n]),
                "cross_term": float(self.cross_terms[n]),
                "lambda1": float(self.multipliers[n, 0]),
                "lambda2": float(self.multipliers[n, 1]),
                "semitrivial1": bool(self.semitrivial[n, 0]),
                "semitrivial2": bool(self.semitrivial[n, 1]),
                "converged": bool(self.converged[n]),
                "pohozaev_residual": float(self.pohozaev_residuals[n]),
                "stationarity_residual": float(self.stationarity_residuals[n]),
            }


def _semitrivial_results(params, config, grid):
    base = params.with_beta(np.zeros((params.k, params.k)))
    return [descend(base, semitrivial_start(base, [j], grid), config, f"semitrivial:{j}")
            for j in range(params.k)]


def _fully_active(result: GroundStateResult) -> bool:
    return not result.semitrivial_flags.any()


class _Chain:
    """Warm-start bookkeeping shared by the curve, its refinement and the scans."""

    def __init__(self, params, config, grid, seed_variant="soliton_products"):
        self.params = params
        self.config = config
        self.grid = grid
        self.variant = seed_variant
        self.state = None

    def coupled(self, params) -> GroundStateResult:
        """Descend from the last coupled state, or reseed if the chain has drained.

        A start whose fiber cannot be located yields a flagged ``failed_result``.
        """
        res = None
        if self.state is not None:
            try:
                res = descend(params, self.state, self.config, "warm")
            except FiberError:
                res = None
        if res is None:
            try:
                start = initialize(params, self.config.seed, self.variant, self.grid)
                res = descend(params, start, self.config, "seed")
            except FiberError:
                res = failed_result(params, self.grid, "seed")
        self.state = res.state if _fully_active(res) else None
        return res


def _point(params, chain, semis, cold, config, grid):
    coupled = chain.coupled(params)
    cands = [coupled, *semis]
    check = None
    if cold:
        full = solve_ground_state(params, config, grid)
        check = (float(params.beta[0, 1]), min(c.energy for c in cands), full.energy)
        cands = [*cands, full, *full.near_minimizers]
        if _fully_active(full) and full.energy < coupled.energy:
            chain.state = full.state
    return best_of(cands), coupled, check


def gamma_curve(params: SystemParams, betas, config: SolveConfig = SolveConfig(),
                grid: RadialGrid | None = None, cold_every: int = 10) -> GammaCurve:
    """Solve the k = 2 ground-state level at each coupling in ``betas``.

    ``params`` supplies a, mu, p, r; its beta is ignored.  The curve's
    structural properties (nonincreasing, bounded by the single-component
    levels, positive) are checked and reported as :class:`CurveWarning`,
    never corrected.
    """
    if params.k != 2:
        raise ValueError("gamma_curve is for two-component systems")
    betas = np.asarray(betas, dtype=float)
    if betas.ndim != 1 or betas.size < 1 or betas[0] != 0.0 or np.any(np.diff(betas) <= 0):
        raise ValueError("beta grid must be strictly increasing and start at 0")
    grid = grid if grid is not None else build_grid()
    semis = _semitrivial_results(params, config, grid)
    plateau = min(s.energy for s in semis)
    levels = np.array([scalar_level(params.a[j], params.mu[j], params.p[j]).level
                       for j in range(2)])
    chain = _Chain(params, config, grid)
    results, coupled, checks = [], [], []
    for n, b in enumerate(betas):
        pb = params.with_beta(b)
        cold = cold_every > 0 and n % cold_every == 0
        best, cpl, check = _point(pb, chain, semis, cold, config, grid)
        results.append(best)
        coupled.append(cpl)
        if check is not None:
            checks.append(check)
    curve = _assemble(params, betas, results, coupled, checks, levels, plateau, grid, config,
                      semis)
    _check_curve(curve)
    return curve


def _assemble(params, betas, results, coupled, checks, levels, plateau, grid, config, semis):
    n = len(results)
    cross = np.array([r.cross_terms[0, 1] for r in results])
    rng = np.empty((n, 2))
    for i, r in enumerate(results):
        cs = [r.cross_terms[0, 1]] + [m.cross_terms[0, 1] for m in r.near_minimizers]
        rng[i] = min(cs), max(cs)
    a2 = params.a**2
    return GammaCurve(
        params=params.with_beta(0.0),
        betas=np.asarray(betas, dtype=float),
        gammas=np.array([r.energy for r in results]),
        cross_terms=cross,
        multipliers=np.array([r.multipliers for r in results]),
        semitrivial=np.array([r.semitrivial_flags for r in results]),
        converged=np.array([r.converged for r in results]),
        pohozaev_residuals=np.array([r.pohozaev_residual for r in results]),
        stationarity_residuals=np.array([np.nanmax(r.component_residuals) for r in results]),
        mass_residuals=np.array([np.abs(r.state.masses - a2) / a2 for r in results]),
        levels=levels,
        plateau=plateau,
        cross_range=rng,
        cold_checks=checks,
        baselines=semis,
        results=results,
        coupled=coupled,
        grid=grid,
        config=config,
    )


def _check_curve(curve: GammaCurve) -> None:
    g = curve.gammas
    if np.any(np.diff(g) > MONOTONE_SLACK):
        warnings.warn("gamma curve increases somewhere", CurveWarning, stacklevel=3)
    if np.any(g > curve.plateau + MONOTONE_SLACK):
        warnings.warn("gamma exceeds the single-component level", CurveWarning, stacklevel=3)
    if np.any(g <= 0):
        warnings.warn("nonpositive gamma", CurveWarning, stacklevel=3)
    for beta, warm, cold in curve.cold_checks:
        if abs(warm - cold) > WARM_COLD_RTOL * abs(cold):
            warnings.warn(f"warm and cold starts disagree at beta = {beta:g}", CurveWarning,
                          stacklevel=3)


# threshold -------------------------------------------------------------------

@dataclass(frozen=True)
class ThresholdBracket:
    """``lower``: last coupling seen on the plateau; ``upper``: first seen departed.

    On the plateau gamma equals the single-component level to ``PLATEAU_RTOL``;
    departed means gamma is below it by more than ``DEPARTURE_RTOL``.
    """

    lower: float
    upper: float
    evaluations: int = 0

    @property
    def estimate(self) -> float:
        return self.upper


def _on_plateau(gamma, plateau):
    return gamma >= plateau * (1.0 - PLATEAU_RTOL)


def _departed(gamma, plateau):
    return gamma < plateau * (1.0 - DEPARTURE_RTOL)


def _grid_bracket(g, P):
    """Indices (last plateau point, first departed point) along a sampled curve."""
    if _departed(g[0], P):
        return 0, 0
    dep = np.flatnonzero(_departed(g, P))
    if dep.size == 0:
        raise PlateauNotExited("gamma never drops 0.3% below the plateau on this grid")
    hi_i = int(dep[0])
    plat = np.flatnonzero(_on_plateau(g[:hi_i], P))
    return (int(plat[-1]) if plat.size else 0), hi_i


def detect_beta_tilde(curve: GammaCurve, refine: bool = True, rtol: float = 1e-3,
                      max_evaluations: int = 40) -> ThresholdBracket:
    """Bracket the coupling where gamma leaves the single-component level.

    The bracket ends are bisected separately (the plateau end on
    "gamma equals the level", the departure end on "gamma is 0.3% below it")
    until each is resolved to ``rtol`` relative.  Returns (0, 0) if the curve
    starts below the departure threshold.

    Raises
    ------
    PlateauNotExited
        If no point of the curve is departed.
    """
    P = curve.plateau
    b = curve.betas
    lo_i, hi_i = _grid_bracket(curve.gammas, P)
    if hi_i == 0:
        return ThresholdBracket(0.0, 0.0)
    if not refine:
        return ThresholdBracket(float(b[lo_i]), float(b[hi_i]))

    semis = curve.baselines
    seed_state = next((c.state for c in curve.coupled[hi_i:] if _fully_active(c)), None)
    count = 0

    def gamma_at(beta):
        nonlocal count
        count += 1
        pb = curve.params.with_beta(beta)
        cands = list(semis)
        if seed_state is not None:
            cands.append(descend(pb, seed_state, curve.config, "refine"))
        cands.append(descend(pb, initialize(pb, curve.config.seed, "soliton_products", curve.grid),
                             curve.config, "refine-seed"))
        return best_of(cands).energy

    # first plateau end, then departure end; each keeps its own bracket
    lo, hi = float(b[lo_i]), float(b[hi_i])
    a_lo, a_hi = lo, hi
    while a_hi - a_lo > rtol * a_hi and count < max_evaluations // 2:
        mid = 0.5 * (a_lo + a_hi)
        if _on_plateau(gamma_at(mid), P):
            a_lo = mid
        else:
            a_hi = mid
    d_lo, d_hi = a_lo, hi
    while d_hi - d_lo > rtol * d_hi and count < max_evaluations:
        mid = 0.5 * (d_lo + d_hi)
        if _departed(gamma_at(mid), P):
            d_hi = mid
        else:
            d_lo = mid
    return ThresholdBracket(a_lo, d_hi, count)


# derivative and multipliers ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class DerivativeReport:
    betas: np.ndarray
    slopes: np.ndarray
    minus_cross: np.ndarray
    mismatch: np.ndarray
    cross_min: np.ndarray
    cross_max: np.ndarray
    suspicious: np.ndarray
    tolerance: float

    @property
    def max_mismatch(self) -> float:
        ok = ~self.suspicious
        return float(np.max(self.mismatch[ok])) if ok.any() else float("nan")

    @property
    def passed(self) -> bool:
        return bool(self.betas.size) and not self.suspicious.any()


def nonuniform_slope(x, y) -> np.ndarray:
    """Second-order three-point derivative at the interior nodes of a nonuniform grid."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    h1 = x[1:-1] - x[:-2]
    h2 = x[2:] - x[1:-1]
    return (h1**2 * y[2:] - h2**2 * y[:-2] + (h2**2 - h1**2) * y[1:-1]) / (h1 * h2 * (h1 + h2))


def derivative_check(curve: GammaCurve, beta_tilde: ThresholdBracket | None = None,
                     tol: float = DERIVATIVE_RTOL) -> DerivativeReport:
    """Compare the finite-difference slope of gamma with minus the cross term.

    Only interior points whose whole stencil lies past the threshold bracket
    are used.  Points above ``tol`` are flagged as candidate kinks, not
    treated as errors.
    """
    if beta_tilde is None:
        beta_tilde = detect_beta_tilde(curve, refine=False)
    b = curve.betas
    slope = nonuniform_slope(b, curve.gammas)
    idx = np.arange(1, b.size - 1)
    keep = b[idx - 1] > beta_tilde.upper
    idx = idx[keep]
    slope = slope[keep]
    mc = -curve.cross_terms[idx]
    mismatch = np.abs(slope - mc) / np.abs(mc)
    return DerivativeReport(
        betas=b[idx], slopes=slope, minus_cross=mc, mismatch=mismatch,
        cross_min=curve.cross_range[idx, 0], cross_max=curve.cross_range[idx, 1],
        suspicious=mismatch > tol, tolerance=tol,
    )


@dataclass(frozen=True, eq=False)
class MultiplierReport:
    betas: np.ndarray
    multipliers: np.ndarray
    all_positive: bool
    decay_ratio: np.ndarray
    decays: bool
    max_jump: float


def multiplier_trace(curve: GammaCurve, beta_tilde: ThresholdBracket | None = None,
                     factor: float = DECAY_FACTOR) -> MultiplierReport:
    """Positivity and decay of the multipliers past the threshold bracket."""
    if beta_tilde is None:
        beta_tilde = detect_beta_tilde(curve, refine=False)
    sel = curve.betas > beta_tilde.upper
    lam = curve.multipliers[sel]
    if lam.shape[0] == 0:
        return MultiplierReport(curve.betas[sel], lam, False, np.full(2, np.nan), False, np.nan)
    ratio = lam[-1] / lam[0]
    jumps = np.abs(np.diff(lam, axis=0))
    return MultiplierReport(
        betas=curve.betas[sel],
        multipliers=lam,
        all_positive=bool(np.all(lam > 0)),
        decay_ratio=ratio,
        decays=bool(np.all(ratio <= factor)),
        max_jump=float(np.max(jumps)) if jumps.size else 0.0,
    )


# k = 3 -----------------------------------------------------------------------

PAIRS = ((0, 1), (0, 2), (1, 2))


@dataclass(frozen=True, eq=False)
class OmegaMap:
    """gamma_123 on a box of couplings, with the pairwise levels it is compared to.

    ``gamma[i, j, l]`` is at ``(axes[0][i], axes[1][j], axes[2][l])`` =
    (beta_12, beta_13, beta_23).  ``pair_levels[m]`` is gamma_ij along its own
    axis for the m-th pair in (12, 13, 23) order.
    """

    params: SystemParams
    axes: tuple
    gamma: np.ndarray
    coupled_energy: np.ndarray
    fully_active: np.ndarray
    converged: np.ndarray
    pair_levels: tuple
    pair_curves: tuple
    levels: np.ndarray
    member: np.ndarray

    def pairwise_min(self) -> np.ndarray:
        g12, g13, g23 = self.pair_levels
        return np.minimum(np.minimum(g12[:, None, None], g13[None, :, None]), g23[None, None, :])

    def beta_bar_23(self) -> ThresholdBracket:
        """Grid bracket where gamma_123(0, 0, beta_23) leaves the level of component 1."""
        lo, hi = _grid_bracket(self.gamma[0, 0, :], self.gamma[0, 0, 0])
        ax = self.axes[2]
        return ThresholdBracket(float(ax[lo]), float(ax[hi]))

    def rows(self):
        pm = self.pairwise_min()
        g12, g13, g23 = self.pair_levels
        for i, b12 in enumerate(self.axes[0]):
            for j, b13 in enumerate(self.axes[1]):
                for l, b23 in enumerate(self.axes[2]):
                    yield {
                        "beta12": float(b12), "beta13": float(b13), "beta23": float(b23),
                        "gamma123": float(self.gamma[i, j, l]),
                        "gamma12": float(g12[i]), "gamma13": float(g13[j]),
                        "gamma23": float(g23[l]),
                        "pairwise_min": float(pm[i, j, l]),
                        "in_omega": bool(self.member[i, j, l]),
                        "fully_active": bool(self.fully_active[i, j, l]),
                        "converged": bool(self.converged[i, j, l]),
                    }


def _check_ordering(params: SystemParams):
    levels = np.array([scalar_level(params.a[j], params.mu[j], params.p[j]).level
                       for j in range(3)])
    if levels[0] > levels[1:].min():
        raise ValueError("component 1 must carry the smallest single-component level "
                         f"(levels {levels.tolist()})")
    return levels


def omega_scan(params: SystemParams, axes, config: SolveConfig = SolveConfig(),
               grid: RadialGrid | None = None, executor=None,
               margin: float = PLATEAU_RTOL) -> OmegaMap:
    """Map gamma_123 over the box ``axes = (beta_12 values, beta_13 values, beta_23 values)``.

    Each pairwise level gamma_ij is computed once per value on its own axis
    by the k = 2 curve pipeline.  Three-component descents run as warm-start
    chains along the beta_23 axis, one chain per (beta_12, beta_13) pair; a
    point's level is the smaller of its coupled descent and the pairwise
    levels (each a semitrivial candidate of the three-component problem).
    A point is in Omega when gamma_123 is below every gamma_ij by more than
    ``margin`` relative.
    """
    if params.k != 3:
        raise ValueError("omega_scan is for three-component systems")
    levels = _check_ordering(params)
    axes = tuple(np.asarray(ax, dtype=float) for ax in axes)
    for ax in axes:
        if ax.ndim != 1 or ax.size < 1 or ax[0] != 0.0 or np.any(np.diff(ax) <= 0):
            raise ValueError("each coupling axis must be strictly increasing and start at 0")
    grid = grid if grid is not None else build_grid()
    curves = tuple(
        gamma_curve(params.subsystem(pair), ax, config, grid, cold_every=0)
        for pair, ax in zip(PAIRS, axes)
    )
    pair_levels = tuple(c.gammas for c in curves)
    n0, n1, n2 = (ax.size for ax in axes)

    def run_chain(ij):
        i, j = ij
        chain = _Chain(params, config, grid)
        out = []
        for l in range(n2):
            b = pair_beta(3, {(0, 1): axes[0][i], (0, 2): axes[1][j], (1, 2): axes[2][l]})
            out.append(chain.coupled(params.with_beta(b)))
        return out

    chains = [(i, j) for i in range(n0) for j in range(n1)]
    done = executor.map(run_chain, chains) if executor is not None else map(run_chain, chains)
    coupled = np.empty((n0, n1, n2))
    active = np.zeros((n0, n1, n2), dtype=bool)
    conv = np.zeros((n0, n1, n2), dtype=bool)
    for (i, j), res in zip(chains, done):
        for l, r in enumerate(res):
            coupled[i, j, l] = r.energy
            active[i, j, l] = _fully_active(r)
            conv[i, j, l] = r.converged
    g12, g13, g23 = pair_levels
    pmin = np.minimum(np.minimum(g12[:, None, None], g13[None, :, None]), g23[None, None, :])
    gamma = np.minimum(coupled, pmin)
    member = active & conv & (coupled < pmin * (1.0 - margin))
    pair_conv = [c.converged for c in curves]
    conv = np.where(coupled <= pmin, conv,
                    pair_conv[0][:, None, None] & pair_conv[1][None, :, None]
                    & pair_conv[2][None, None, :])
    return OmegaMap(params.with_beta(np.zeros((3, 3))), axes, gamma, coupled, active, conv,
                    pair_levels, curves, levels, member)
