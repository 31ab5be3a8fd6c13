"""Normalized ground states: minimize E over the mass balls intersected with J = 0.

Each iteration takes a preconditioned gradient step on E, pulls every
component back inside its mass ball ``|u_j|_2 <= a_j``, and dilates the
result onto ``J = 0``.  The energy after the dilation is
``max_t E(t * u)``, whose gradient on the manifold equals the gradient of
E, so backtracking on it gives a monotone descent.

A component whose mass falls below ``1e-6 a_j^2`` is frozen at zero.
This is how semitrivial minimizers (one or more components vanishing)
are reached: minimizing over mass balls instead of spheres lets mass leave
a component whose multiplier is negative.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .fiber import FiberError, project_to_manifold
from .functionals import (
    State,
    SystemParams,
    Terms,
    clean,
    energy_from_terms,
    energy_gradient,
    nonlinear_force,
    scale_free_residual,
    terms,
)
from .radial_grid import RadialGrid, build_grid, neg_laplacian, rescale_values, solve_shifted
from .scalar_ground import scalar_level

VARIANTS = ("coupled_gaussians", "soliton_products", "perturbed_scalar")
SEMITRIVIAL_FRACTION = 1e-6
MAX_HALVINGS = 40
STEP_GROWTH = 1.25
STEP_MAX = 4.0
DRAIN_TRIAL_FRACTION = 0.25
# dilation range for the weak components of a perturbed_scalar start
SPREAD_DILATION = (0.06, 0.1)
SPHERE_RTOL = 1e-12
HARD_STALL_WINDOWS = 5


class NotStationaryWarning(UserWarning):
    """Multipliers were requested for a state far from a critical point."""


@dataclass(frozen=True)
class SolveConfig:
    step: float = 0.5
    tol_energy: float = 1e-10
    tol_grad: float = 1e-4
    max_iters: int = 4000
    restarts: int = 3
    seed: int = 0
    stall_window: int = 10
    variants: tuple = VARIANTS

    def __post_init__(self):
        if self.step <= 0 or self.tol_energy <= 0 or self.tol_grad <= 0:
            raise ValueError("step and tolerances must be positive")
        if self.max_iters < 1 or self.restarts < 1:
            raise ValueError("max_iters and restarts must be >= 1")
        unknown = set(self.variants) - set(VARIANTS)
        if unknown:
            raise ValueError(f"unknown initialization variants {sorted(unknown)}")


@dataclass(frozen=True, eq=False)
class Diagnostics:
    """Stationarity residuals of a candidate ground state."""

    multipliers: np.ndarray
    component_residuals: np.ndarray
    mass_residuals: np.ndarray
    pohozaev_residual: float
    stationary: bool


@dataclass(frozen=True, eq=False)
class GroundStateResult:
    state: State
    energy: float
    pohozaev_residual: float
    multipliers: np.ndarray
    semitrivial_flags: np.ndarray
    iterations: int
    converged: bool
    component_residuals: np.ndarray = None
    trace: np.ndarray = None
    cross_terms: np.ndarray = None
    # minimizers from other restarts within 1e-6 of the best energy (proxy for K_beta)
    near_minimizers: list = field(default_factory=list)
    label: str = ""


def _semitrivial(params: SystemParams, masses: np.ndarray) -> np.ndarray:
    return masses < SEMITRIVIAL_FRACTION * params.a**2


def lagrange_multipliers(params: SystemParams, state: State, t: Terms | None = None,
                         warn: bool = True) -> np.ndarray:
    """Multipliers from testing the stationary equations against u_j.

    ``lambda_j |u_j|_2^2 = mu_j |u_j|_p^p + sum_i beta_ij r_j int |u_i|^r_i |u_j|^r_j
    - |grad u_j|^2``, where ``|u_j|_2^2 = a_j^2`` on the spheres.  Components
    that vanish have no multiplier (NaN).
    """
    t = terms(params, state) if t is None else t
    lam = params.mu * t.power - t.kinetic
    for i, j in params.pairs():
        lam[i] += params.beta[i, j] * params.r[i] * t.cross[i, j]
        lam[j] += params.beta[i, j] * params.r[j] * t.cross[i, j]
    flat = _semitrivial(params, state.masses)
    lam = lam / np.where(flat, 1.0, state.masses)
    lam[flat] = np.nan
    if warn:
        res = _component_residuals(params, state, lam)
        if np.nanmax(res, initial=0.0) > 1e-2:
            warnings.warn("state is not near-stationary; multipliers are not meaningful",
                          NotStationaryWarning, stacklevel=2)
    return lam


def _component_residuals(params, state, lam):
    """Scale-free weighted-L2 norm of each stationary-equation residual."""
    grid = state.grid
    u = state.values
    lap = neg_laplacian(grid, u)
    force = nonlinear_force(params, u)
    lam0 = np.nan_to_num(lam)
    res = lap + lam0[:, None] * u - force
    res[:, [0, -1]] = 0.0
    norm = lambda f: np.sqrt(np.maximum(f**2 @ grid.weights, 0.0))
    scale = norm(lap) + np.abs(lam0) * norm(u) + norm(force)
    out = np.full(params.k, np.nan)
    ok = scale > 0
    out[ok] = norm(res)[ok] / scale[ok]
    out[np.isnan(lam)] = np.nan
    return out


def residuals(params: SystemParams, result: GroundStateResult | State) -> Diagnostics:
    """Residuals of ``-Laplace u_j + lambda_j u_j = (nonlinearity)_j`` per component."""
    state = result.state if isinstance(result, GroundStateResult) else result
    t = terms(params, state)
    lam = lagrange_multipliers(params, state, t, warn=False)
    comp = _component_residuals(params, state, lam)
    active = ~np.isnan(lam)
    mres = np.abs(state.masses - params.a**2) / params.a**2
    pr = scale_free_residual(params, t)
    stationary = bool(np.all(comp[active] <= 1e-4) and pr <= 1e-6)
    return Diagnostics(lam, comp, mres, pr, stationary)


# initialization ------------------------------------------------------------

def _normalize(grid, values, target):
    m = values**2 @ grid.weights
    return values * np.sqrt(target / m)[:, None]


def _smooth_noise(rng, grid, scale=0.1):
    r = grid.nodes / grid.r_max
    modes = np.arange(1, 6)
    coeffs = rng.normal(size=modes.size) / modes
    return 1.0 + scale * np.sum(coeffs[:, None] * np.cos(np.pi * modes[:, None] * r), axis=0)


def _fit_dilation(grid, values, share=0.9):
    """Smallest dilation keeping all but 1e-12 of the mass inside ``share * r_max``."""
    cum = np.cumsum(values**2 * grid.weights)
    r_hold = grid.nodes[np.searchsorted(cum, (1.0 - 1e-12) * cum[-1])]
    return r_hold / (share * grid.r_max)


def initialize(params: SystemParams, seed: int, variant: str,
               grid: RadialGrid | None = None) -> State:
    """A nonzero starting state with masses exactly a_j^2."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    grid = grid if grid is not None else build_grid()
    rng = np.random.default_rng([int(seed), VARIANTS.index(variant)])
    r = grid.nodes
    k = params.k
    target = params.a**2
    if variant == "coupled_gaussians":
        widths = rng.uniform(0.5, 2.0, size=k)
        vals = np.exp(-(r[None, :] ** 2) / (2.0 * widths[:, None] ** 2))
        vals *= np.stack([_smooth_noise(rng, grid, 0.05) for _ in range(k)])
    elif variant == "soliton_products":
        vals = np.empty((k, grid.n_points))
        for j in range(k):
            w = scalar_level(params.a[j], params.mu[j], params.p[j], grid).profile.values
            t = np.exp(rng.uniform(np.log(0.8), np.log(1.25)))
            vals[j] = rescale_values(grid, w, t) * _smooth_noise(rng, grid)
    else:
        levels = [scalar_level(params.a[j], params.mu[j], params.p[j], grid) for j in range(k)]
        jmin = int(np.argmin([lv.level for lv in levels]))
        vals = np.empty((k, grid.n_points))
        for j in range(k):
            prof = levels[j].profile.values
            # spread as drawn, but never past the box
            t = max(rng.uniform(*SPREAD_DILATION), _fit_dilation(grid, prof))
            vals[j] = rescale_values(grid, prof, t) * _smooth_noise(rng, grid)
        vals[jmin] = levels[jmin].profile.values * _smooth_noise(rng, grid, 0.02)
    vals = np.abs(vals)
    vals[:, -1] = 0.0
    return clean(grid, _normalize(grid, vals, target))


# descent -------------------------------------------------------------------

@dataclass
class _Point:
    values: np.ndarray
    terms: Terms
    energy: float
    frozen: np.ndarray


def _admit(params, grid, values, frozen):
    """Pull masses into the balls, freeze vanishing components, project onto J = 0."""
    values = np.array(values)
    values[:, -1] = 0.0
    values[frozen] = 0.0
    m = values**2 @ grid.weights
    target = params.a**2
    over = m > target
    values[over] *= np.sqrt(target[over] / m[over])[:, None]
    frozen = frozen | (m < SEMITRIVIAL_FRACTION * target)
    values[frozen] = 0.0
    if frozen.all():
        return None
    state = clean(grid, values)
    _, proj = project_to_manifold(params, state)
    t = terms(params, proj)
    return _Point(proj.values, t, energy_from_terms(params, t), frozen)


def _search_direction(params, grid, pt, g, shift):
    """Preconditioned gradient, made tangent to the sphere where the ball binds.

    A component whose energy would drop by gaining mass (``<g_j, u_j> < 0``)
    is pressed against its sphere; its direction is projected, in the
    preconditioner's metric, onto the tangent space ``<u_j, d_j> = 0``.
    A component that would rather lose mass, or one strictly inside its
    ball, keeps the radial part, so its mass can change.
    """
    u = pt.values
    d = solve_shifted(grid, g, shift)
    pu = solve_shifted(grid, u, shift)
    w = grid.weights
    gu = (g * u) @ w
    on_sphere = u**2 @ w >= (1.0 - SPHERE_RTOL) * params.a**2
    for j in range(params.k):
        if pt.frozen[j]:
            d[j] = 0.0
        elif gu[j] < 0.0 and on_sphere[j]:
            d[j] -= (u[j] @ (w * d[j])) / (u[j] @ (w * pu[j])) * pu[j]
    return d


def _drain_trial(params, grid, pt, g):
    """Zero out a nearly empty component that is still losing mass, if that lowers E.

    Draining slows down as the mass goes to zero, so without this shortcut a
    semitrivial minimizer is approached only geometrically.
    """
    m = pt.values**2 @ grid.weights
    gu = (g * pt.values) @ grid.weights
    drain = ~pt.frozen & (gu > 0.0) & (m < DRAIN_TRIAL_FRACTION * params.a**2)
    if not drain.any() or (pt.frozen | drain).all():
        return None
    try:
        cand = _admit(params, grid, pt.values, pt.frozen | drain)
    except FiberError:
        return None
    return cand if cand is not None and cand.energy <= pt.energy else None


def descend(params: SystemParams, state: State, config: SolveConfig = SolveConfig(),
            label: str = "") -> GroundStateResult:
    """Run the projected descent from ``state`` until the energy stalls."""
    grid = state.grid
    frozen = _semitrivial(params, state.masses)
    pt = _admit(params, grid, state.values, frozen)
    if pt is None:
        raise ValueError("starting state is zero")
    tau = config.step
    trace = [pt.energy]
    converged = False
    it = 0
    for it in range(1, config.max_iters + 1):
        st = State(grid, pt.values)
        g = energy_gradient(params, st).values
        m = pt.values**2 @ grid.weights
        shift = np.maximum(pt.terms.kinetic / np.maximum(m, 1e-300), 1e-6)
        d = _search_direction(params, grid, pt, g, shift)
        accepted = _drain_trial(params, grid, pt, g)
        if accepted is not None:
            pt = accepted
            trace.append(pt.energy)
            continue
        for _ in range(MAX_HALVINGS):
            try:
                cand = _admit(params, grid, pt.values - tau * d, pt.frozen)
            except FiberError:
                cand = None
            if cand is not None and cand.energy <= pt.energy:
                accepted = cand
                break
            tau *= 0.5
        if accepted is None:
            converged = _stationary(params, grid, pt, config)
            break
        pt = accepted
        tau = min(tau * STEP_GROWTH, STEP_MAX)
        trace.append(pt.energy)
        w = config.stall_window
        if len(trace) > w and trace[-w - 1] - pt.energy <= config.tol_energy * abs(pt.energy):
            if _stationary(params, grid, pt, config):
                converged = True
                break
            # flat but not stationary for several windows: give up
            hw = HARD_STALL_WINDOWS * w
            if len(trace) > hw and trace[-hw - 1] - pt.energy <= config.tol_energy * abs(pt.energy):
                break
    return _result(params, grid, pt, it, converged, np.array(trace), label)


def _stationary(params, grid, pt, config):
    state = State(grid, pt.values)
    lam = lagrange_multipliers(params, state, pt.terms, warn=False)
    comp = _component_residuals(params, state, lam)
    active = ~np.isnan(lam)
    return bool(np.all(comp[active] <= config.tol_grad))


def _result(params, grid, pt, iterations, converged, trace, label):
    vals = np.abs(pt.values)
    state = State(grid, vals)
    t = terms(params, state)
    lam = lagrange_multipliers(params, state, t, warn=False)
    comp = _component_residuals(params, state, lam)
    flags = _semitrivial(params, state.masses)
    pr = scale_free_residual(params, t)
    mres = np.abs(state.masses - params.a**2) / params.a**2
    ok = (pr <= 1e-6 and np.all(mres[~flags] <= 1e-6))
    return GroundStateResult(
        state=state,
        energy=energy_from_terms(params, t),
        pohozaev_residual=pr,
        multipliers=lam,
        semitrivial_flags=flags,
        iterations=iterations,
        converged=bool(converged and ok),
        component_residuals=comp,
        trace=trace,
        cross_terms=t.cross.copy(),
        label=label,
    )


def failed_result(params: SystemParams, grid: RadialGrid, label: str = "") -> GroundStateResult:
    """Placeholder for a point whose descent could not start; energy is +inf."""
    k = params.k
    return GroundStateResult(
        state=State(grid, np.zeros((k, grid.n_points))),
        energy=float("inf"),
        pohozaev_residual=float("nan"),
        multipliers=np.full(k, np.nan),
        semitrivial_flags=np.ones(k, dtype=bool),
        iterations=0,
        converged=False,
        component_residuals=np.full(k, np.nan),
        trace=np.array([]),
        cross_terms=np.zeros((k, k)),
        label=f"failed:{label}",
    )


def semitrivial_start(params: SystemParams, active, grid: RadialGrid) -> State:
    """Scalar ground-state profiles in the ``active`` components, zero elsewhere."""
    vals = np.zeros((params.k, grid.n_points))
    for j in active:
        vals[j] = scalar_level(params.a[j], params.mu[j], params.p[j], grid).profile.values
    return State(grid, vals)


def _starts(params, config, grid, extra):
    starts = []
    for variant in config.variants:
        for s in range(config.restarts):
            starts.append((f"{variant}:{config.seed + s}",
                           lambda v=variant, s=s: initialize(params, config.seed + s, v, grid)))
    if params.k > 1:
        for j in range(params.k):
            starts.append((f"semitrivial:{j}", lambda j=j: semitrivial_start(params, [j], grid)))
    for n, st in enumerate(extra or ()):
        starts.append((f"given:{n}", lambda st=st: st))
    return starts


def best_of(results, rel_gap: float = 1e-6) -> GroundStateResult:
    """Energy-minimum reduction; ties within ``rel_gap`` are kept as near-minimizers.

    Converged candidates are preferred over unconverged ones at equal energy.
    """
    if not results:
        raise ValueError("no candidates")
    order = sorted(results, key=lambda r: (r.energy, not r.converged))
    best = order[0]
    near = [r for r in order[1:] if r.energy - best.energy <= rel_gap * abs(best.energy)]
    return replace(best, near_minimizers=near)


def solve_ground_state(params: SystemParams, config: SolveConfig = SolveConfig(),
                       grid: RadialGrid | None = None, starts=None,
                       cold: bool = True, executor=None) -> GroundStateResult:
    """Multi-start minimization of E over the mass balls intersected with J = 0.

    Cold starts are ``config.restarts`` seeds of every initialization variant
    plus, for k > 1, each single-component scalar profile.  ``starts``
    (e.g. a warm start from a neighboring coupling) are descended as well.
    ``executor`` (anything with ``map``) runs the descents concurrently;
    the reduction does not depend on completion order.
    """
    grid = grid if grid is not None else build_grid()
    if starts is not None:
        starts = [State(grid, s.values) if not s.grid.same_as(grid) else s for s in starts]
    jobs = _starts(params, config, grid, starts) if cold else [
        (f"given:{n}", lambda st=st: st) for n, st in enumerate(starts or ())]
    if not jobs:
        raise ValueError("nothing to solve: no cold starts and no given starts")

    def run(job):
        label, make = job
        try:
            return descend(params, make(), config, label)
        except FiberError:
            return failed_result(params, grid, label)

    results = list(executor.map(run, jobs)) if executor is not None else [run(j) for j in jobs]
    return best_of(results)
