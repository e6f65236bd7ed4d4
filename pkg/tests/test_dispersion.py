import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize

from hodowave.dispersion import (dispersion_curve, find_tau_star, froude_check, shoot_gamma_prime,
                                 sigma, solve_gamma)
from hodowave.errors import SupercriticalStream
from hodowave.stream_core import affine_vorticity, constant_vorticity, sine_vorticity, solve_uniform_stream


def irrotational_tau_star(s):
    """Root of s^2 tau coth(tau / s) = 1 (closed-form dispersion for omega = 0)."""
    f = lambda t: s * s * t / math.tanh(t / s) - 1.0
    return optimize.brentq(f, 1e-8, 50.0, xtol=1e-15, rtol=1e-15)


def test_gamma_closed_form_unit_depth(flat_stream_unit_slope):
    gamma, gp = solve_gamma(flat_stream_unit_slope, 1.0)
    assert abs(gp - 1.0 / math.tanh(1.0)) < 1e-9
    y = np.linspace(0, 1, 11)
    assert np.max(np.abs(gamma(y) - np.sinh(y) / math.sinh(1.0))) < 1e-6


def test_gamma_at_zero_tau():
    stream = solve_uniform_stream(constant_vorticity(0.0), 0.7)
    gamma, gp = solve_gamma(stream, 0.0)
    assert abs(gp - 1.0 / stream.d) < 1e-10
    assert gamma(0.0) == pytest.approx(0.0, abs=1e-14)
    assert gamma(stream.d) == pytest.approx(1.0, abs=1e-14)


def test_gamma_shooting_oracle_rotational():
    stream = solve_uniform_stream(affine_vorticity(0.0, 1.0), 2.0)
    for tau in (0.5, 2.0, 5.0):
        _, gp = solve_gamma(stream, tau)
        assert abs(gp - shoot_gamma_prime(stream, tau)) < 1e-8


def test_gamma_accuracy_shallow_and_deep():
    # the extrapolated slope reaches round-off already at n=200 for tau d ~ 1;
    # deep water (tau d ~ 19) relies on the resolution floor 100 tau d
    stream = solve_uniform_stream(constant_vorticity(0.0), 1.0)
    tau = 1.5
    exact = tau / math.tanh(tau)
    e1 = abs(solve_gamma(stream, tau, n=200)[1] - exact)
    assert e1 < 1e-9
    deep = solve_uniform_stream(constant_vorticity(0.0), 0.375)
    tau = 7.1
    exact = tau / math.tanh(tau * deep.d)
    assert abs(solve_gamma(deep, tau)[1] - exact) < 1e-9


def test_sigma_at_zero():
    for s in (0.539, 0.8, 1.3):
        stream = solve_uniform_stream(constant_vorticity(0.0), s)
        assert abs(sigma(stream, 0.0) - (s * s - 1.0 / s)) < 1e-9
    assert abs(sigma(solve_uniform_stream(constant_vorticity(0.0), 0.539), 0.0) + 1.5645) < 1e-3


def test_sigma_critical_stream(flat_stream_unit_slope):
    assert abs(sigma(flat_stream_unit_slope, 0.0)) < 1e-9


def test_tau_star_irrotational_R2(irrotational_stream):
    tau = find_tau_star(irrotational_stream)
    assert abs(tau - irrotational_tau_star(irrotational_stream.s)) < 1e-8
    assert abs(tau - 3.4405) < 1e-3
    assert abs(sigma(irrotational_stream, tau)) < 1e-10


def test_supercritical_guard(flat_stream_unit_slope):
    with pytest.raises(SupercriticalStream):
        find_tau_star(flat_stream_unit_slope)
    with pytest.raises(SupercriticalStream):
        find_tau_star(solve_uniform_stream(constant_vorticity(0.0), 1.6751))


def test_froude_check_values(flat_stream_unit_slope):
    for s in (0.539, 1.675):
        out = froude_check(solve_uniform_stream(constant_vorticity(0.0), s))
        assert abs(out["froude_sq_inv"] - s ** -3) < 1e-10
        assert out["subcritical"] == (s < 1)
    assert abs(froude_check(flat_stream_unit_slope)["froude_sq_inv"] - 1.0) < 1e-12


def test_dispersion_curve_fields(default_stream, default_dc):
    assert default_dc.Lambda0 == pytest.approx(2 * math.pi / default_dc.tau_star)
    assert default_dc.kappa == pytest.approx(default_stream.s)
    assert default_dc.sigma0 < 0


def test_sigma_monotone_and_even(default_dc):
    taus = np.linspace(0.05, 2 * default_dc.tau_star, 25)
    vals = np.array([default_dc.sigma(t) for t in taus])
    assert np.all(np.diff(vals) > 0)
    for t in (0.3, 1.1, 2.5):
        assert abs(default_dc.sigma(t) - default_dc.sigma(-t)) < 1e-12


def test_rotational_dispersion_root():
    stream = solve_uniform_stream(sine_vorticity(0.5), 0.9)
    dc = dispersion_curve(stream)
    assert abs(dc.sigma(dc.tau_star)) < 1e-10
    # gamma positive for tau beyond tau_* (sampled)
    g = dc.gamma(1.5 * dc.tau_star)
    assert np.all(g(np.linspace(0.01, stream.d, 50)) > 0)


@settings(max_examples=15, deadline=None)
@given(s=st.floats(0.35, 0.95))
def test_property_irrotational_tau_star(s):
    stream = solve_uniform_stream(constant_vorticity(0.0), s)
    assert abs(find_tau_star(stream) - irrotational_tau_star(s)) < 1e-8


@settings(max_examples=10, deadline=None)
@given(s=st.floats(0.4, 0.95), tau=st.floats(0.01, 6.0))
def test_property_sigma_closed_form(s, tau):
    stream = solve_uniform_stream(constant_vorticity(0.0), s)
    exact = s * tau / math.tanh(tau / s) - 1.0 / s
    assert abs(sigma(stream, tau) - exact) < 1e-8 * max(1.0, abs(exact))
