import time

import numpy as np
import pytest

from hodowave.continuation import continue_branch
from hodowave.dispersion import dispersion_curve
from hodowave.pipeline import RunConfig, run_pipeline
from hodowave.stream_core import constant_vorticity, solve_uniform_stream, stream_for_R

# the regime used throughout: irrotational, R slightly above R_c = 3/2
R_DEFAULT = 1.575


def irrotational_s_plus(R):
    """Smallest positive root of s^3 - 2 R s + 2 = 0 (subcritical slope)."""
    roots = np.roots([1.0, 0.0, -2.0 * R, 2.0])
    real = sorted(r.real for r in roots if abs(r.imag) < 1e-12 and r.real > 0)
    return real[0]


@pytest.fixture(scope="session")
def irrotational_stream():
    return stream_for_R(constant_vorticity(0.0), 2.0)


@pytest.fixture(scope="session")
def default_stream():
    return stream_for_R(constant_vorticity(0.0), R_DEFAULT)


@pytest.fixture(scope="session")
def default_dc(default_stream):
    return dispersion_curve(default_stream)


@pytest.fixture(scope="session")
def small_branch(default_stream, default_dc):
    """Coarse 17x9 branch past the first bifurcation (cheap, for unit tests)."""
    return continue_branch(default_stream, default_dc, 17, 9, 30, step=0.001)


@pytest.fixture(scope="session")
def default_run(tmp_path_factory):
    """The full default pipeline, run once per session."""
    out = tmp_path_factory.mktemp("default_run")
    state = {}
    start = time.perf_counter()
    rep = run_pipeline(RunConfig(), out, state=state)
    state["elapsed"] = time.perf_counter() - start
    state["out"] = out
    return rep, state


@pytest.fixture(scope="session")
def default_branch(default_run):
    return default_run[1]["branch"]


@pytest.fixture(scope="session")
def flat_stream_unit_slope():
    return solve_uniform_stream(constant_vorticity(0.0), 1.0)
