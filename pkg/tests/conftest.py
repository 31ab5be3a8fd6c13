import time
import warnings

import numpy as np
import pytest

from nlsground.functionals import SystemParams
from nlsground.minimizer import SolveConfig, descend
from nlsground.radial_grid import build_grid
from nlsground.scalar_ground import mass_for_lambda
from nlsground.sweep import (
    CurveWarning,
    detect_beta_tilde,
    gamma_curve,
    log_beta_grid,
    omega_scan,
)

# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])


# Symmetric k = 2 reference family: each component alone has lambda = 20.
REF_A = mass_for_lambda(20.0, 1.0, 4.0)
REF_PARAMS = SystemParams([REF_A, REF_A], [1.0, 1.0], [4.0, 4.0], [2.5, 2.5])
REF_GRID = (4096, 40.0)
REF_BETAS = (1e-3, 3.5, 64)


class Reference:
    """Reference curve, its threshold bracket and the solve at 100x the bracket."""

    def __init__(self):
        self.params = REF_PARAMS
        self.grid = build_grid(*REF_GRID)
        self.config = SolveConfig()
        start = time.perf_counter()
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", CurveWarning)
            self.curve = gamma_curve(self.params, log_beta_grid(*REF_BETAS), self.config,
                                     self.grid)
        self.elapsed = time.perf_counter() - start
        self.curve_warnings = [w for w in caught if issubclass(w.category, CurveWarning)]
        self.bracket = detect_beta_tilde(self.curve)
        self.beta_max = 100.0 * self.bracket.upper
        near = int(np.argmin(np.abs(self.curve.betas - self.beta_max)))
        pb = self.params.with_beta(self.beta_max)
        self.at_max = descend(pb, self.curve.coupled[near].state, self.config, "beta_max")


# k = 3 family: component 1 carries the smallest level and r_3 < 2.
K3_PARAMS = SystemParams([mass_for_lambda(16.0, 1.0, 4.0)] + [REF_A] * 2, [1.0] * 3, [4.0] * 3,
                         [2.5, 2.5, 1.8])
K3_GRID = (2048, 30.0)
K3_AXIS = (1e-2, 5.0, 16)


class OmegaReference:
    """The 16^3 coupling scan of the k = 3 family."""

    def __init__(self):
        self.params = K3_PARAMS
        self.grid = build_grid(*K3_GRID)
        self.config = SolveConfig()
        ax = log_beta_grid(*K3_AXIS)
        start = time.perf_counter()
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", CurveWarning)
            self.scan = omega_scan(self.params, (ax, ax, ax), self.config, self.grid)
        self.elapsed = time.perf_counter() - start
        self.curve_warnings = [w for w in caught if issubclass(w.category, CurveWarning)]


@pytest.fixture(scope="session")
def omega_reference():
    return OmegaReference()


@pytest.fixture(scope="session")
def reference():
    return Reference()


@pytest.fixture(scope="session")
def default_grid():
    return build_grid()
