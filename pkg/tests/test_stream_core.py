import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import irrotational_s_plus
from hodowave.errors import NoWavesForR, NonSmoothVorticity, SubcriticalSlope
from hodowave.stream_core import (affine_vorticity, bernoulli_function, constant_vorticity,
                                  critical_data, primitive, read_vorticity_csv, sine_vorticity,
                                  solve_uniform_stream, spline_vorticity, stream_for_R,
                                  stream_table, vorticity_from_spec)


def test_primitive_zero_vorticity():
    vm = primitive(lambda p: 0.0)
    assert vm.Omega(0.0) == 0.0
    assert abs(vm.Omega(0.7)) < 1e-14


def test_primitive_unit_vorticity():
    vm = primitive(lambda p: 1.0)
    for p in (0.1, 0.5, 1.0):
        assert abs(vm.Omega(p) - p) < 1e-12


def test_primitive_sine():
    vm = primitive(lambda p: math.sin(math.pi * p))
    assert abs(vm.Omega(1.0) - 2.0 / math.pi) < 1e-12
    assert abs(sine_vorticity(1.0).Omega(1.0) - 2.0 / math.pi) < 1e-15


def test_primitive_rejects_kink():
    with pytest.raises(NonSmoothVorticity):
        primitive(lambda p: abs(p - 0.5))


def test_irrotational_stream_closed_form():
    s = 0.539
    stream = solve_uniform_stream(constant_vorticity(0.0), s)
    assert abs(stream.d - 1.0 / s) < 1e-12
    assert abs(stream.R - (0.5 * s * s + 1.0 / s)) < 1e-12
    assert abs(stream.R - 2.0005) < 1e-3


def test_critical_stream_unit_slope(flat_stream_unit_slope):
    assert abs(flat_stream_unit_slope.d - 1.0) < 1e-13
    assert abs(flat_stream_unit_slope.R - 1.5) < 1e-13


def test_affine_vorticity_depth():
    # omega = p, s = 2: d = int_0^1 dt / sqrt(4 - t^2) = pi / 6
    stream = solve_uniform_stream(affine_vorticity(0.0, 1.0), 2.0)
    assert abs(stream.d - math.pi / 6.0) < 1e-12


def test_subcritical_slope_guard():
    vm = constant_vorticity(2.0)  # s0 = 2
    with pytest.raises(SubcriticalSlope):
        solve_uniform_stream(vm, 1.5)


def test_critical_data_irrotational():
    cd = critical_data(constant_vorticity(0.0), 2.0)
    assert abs(cd.s_c - 1.0) < 1e-9
    assert abs(cd.R_c - 1.5) < 1e-12
    assert abs(cd.s_plus - 0.5392) < 1e-4
    assert abs(cd.s_minus - 1.6751) < 1e-4
    # oracle: roots of s^3 - 4 s + 2 = 0
    roots = sorted(r.real for r in np.roots([1, 0, -4, 2]) if r.real > 0)
    assert abs(cd.s_plus - roots[0]) < 1e-12
    assert abs(cd.s_minus - roots[1]) < 1e-12


def test_no_waves_below_critical_R():
    with pytest.raises(NoWavesForR) as info:
        critical_data(constant_vorticity(0.0), 1.4)
    assert info.value.exit_code == 2


def test_stream_invariants(default_stream):
    st_ = default_stream
    assert abs(st_.bernoulli_residual()) < 1e-12
    y, U = stream_table(st_, 401)
    assert U[0] == pytest.approx(0.0, abs=1e-14)
    assert U[-1] == pytest.approx(1.0, abs=1e-12)
    assert np.all(np.diff(U) > 0)
    p = np.linspace(0.0, 1.0, 33)
    assert np.max(np.abs(st_.U(st_.H(p)) - p)) < 1e-12


def test_H_ode_residual_second_order():
    # H_pp = H_p^3 omega(p); check with centered differences at two resolutions
    stream = solve_uniform_stream(sine_vorticity(0.8), 1.5)
    errs = []
    for n in (40, 80):
        p = np.linspace(0.0, 1.0, n + 1)
        h = 1.0 / n
        H = stream.H(p)
        Hpp = (H[2:] - 2 * H[1:-1] + H[:-2]) / h ** 2
        errs.append(np.max(np.abs(Hpp - stream.Hp(p[1:-1]) ** 3 * stream.vm.omega(p[1:-1]))))
    assert errs[1] < errs[0] / 3.5


def test_spline_table_roundtrip(tmp_path):
    p = np.linspace(0, 1, 11)
    w = 0.3 * np.cos(2 * p)
    path = tmp_path / "omega.csv"
    path.write_text("p,omega\n" + "".join(f"{a},{b}\n" for a, b in zip(p, w)))
    vm = read_vorticity_csv(path)
    assert abs(vm.omega(0.5) - 0.3 * math.cos(1.0)) < 1e-4
    assert vm.Omega(0.0) == 0.0
    vm2 = vorticity_from_spec(vm.spec())
    assert vm2.Omega(0.8) == pytest.approx(vm.Omega(0.8), abs=1e-15)


def test_spec_round_trip_builtin():
    for vm in (constant_vorticity(0.4), affine_vorticity(0.1, -0.2), sine_vorticity(0.5),
               spline_vorticity([0, 0.5, 1], [0.0, 0.1, 0.0])):
        vm2 = vorticity_from_spec(vm.spec())
        assert vm2.Omega(0.37) == pytest.approx(vm.Omega(0.37), abs=1e-15)


@settings(max_examples=25, deadline=None)
@given(s=st.floats(0.3, 3.0))
def test_property_irrotational_depth(s):
    stream = solve_uniform_stream(constant_vorticity(0.0), s)
    assert abs(stream.d - 1.0 / s) < 1e-11
    assert abs(bernoulli_function(stream.vm, s) - stream.R) < 1e-12


@settings(max_examples=20, deadline=None)
@given(R=st.floats(1.51, 4.0))
def test_property_root_ordering(R):
    cd = critical_data(constant_vorticity(0.0), R)
    assert cd.s_plus < cd.s_c < cd.s_minus
    assert abs(cd.s_plus - irrotational_s_plus(R)) < 1e-10
    vm = constant_vorticity(0.0)
    assert abs(bernoulli_function(vm, cd.s_plus) - R) < 1e-11
    assert abs(bernoulli_function(vm, cd.s_minus) - R) < 1e-11


@settings(max_examples=15, deadline=None)
@given(a=st.floats(-1.0, 1.0), b=st.floats(-1.0, 1.0), R=st.floats(1.2, 3.0))
def test_property_rotational_roots(a, b, R):
    vm = affine_vorticity(a, b)
    try:
        cd = critical_data(vm, R)
    except NoWavesForR as exc:
        assert R <= exc.R_c
        return
    assert cd.s_c < cd.s_minus
    assert abs(bernoulli_function(vm, cd.s_minus) - R) < 1e-9
    if cd.s_plus is not None:
        assert vm.s0 < cd.s_plus < cd.s_c
        assert abs(bernoulli_function(vm, cd.s_plus) - R) < 1e-9


def test_stream_for_R_uses_subcritical_root(default_stream):
    assert default_stream.s < 1.0
    assert abs(default_stream.s - irrotational_s_plus(1.575)) < 1e-12
