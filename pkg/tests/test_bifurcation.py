import numpy as np
import pytest

from hodowave.bifurcation import (PointCache, TauRootReport, asymptotic_classify, branch_switch,
                                  detect_t0, morse_counts, solve_tM, tau_roots)
from hodowave.continuation import continue_branch
from hodowave.errors import FitAmbiguous, KernelCheckFailed, NotReached, OutOfRange
from hodowave.spectra import count_nonpositive, family_spectrum


@pytest.fixture(scope="module")
def small_t0(small_branch):
    cache = PointCache(small_branch)
    return detect_t0(small_branch, cache), cache


def test_not_reached_on_short_branch(default_stream, default_dc):
    short = continue_branch(default_stream, default_dc, 17, 9, 8, step=0.001)
    with pytest.raises(NotReached):
        detect_t0(short)


def test_detect_t0(small_t0, small_branch):
    st, cache = small_t0
    lo, hi = st.bracket
    assert lo < st.t0 < hi
    assert abs(cache.mu(st.t0)[1]) < 1e-9
    assert st.kernel_dim == 1 and st.mu1_slope < 0
    assert st.mu0_at_t0 < 0 and st.gap > 10 * st.band
    assert st.nodal["count"] == 2 and st.nodal["surface_endpoint"]
    assert st.pattern_ok
    assert st.t0 < small_branch.t[-1]


def test_morse_counts_M1(small_t0):
    st, cache = small_t0
    hf = cache.hf(st.t0 + 2e-3)
    mc = morse_counts(hf, 1)
    ev = family_spectrum(hf, "half_even", 7).eigenvalues
    assert (mc["direct"]["n0"], mc["direct"]["n"]) == count_nonpositive(ev, mc["band"])
    # mu_1 is inside the coarse zero band just after t0
    assert mc["direct"]["n0_no_band"] == 2
    assert mc["pairing"]["n"] == mc["direct"]["n"]


def test_morse_counts_before_t0(small_branch):
    # near the flat state the even M-period modes cos(n tau_* x / M) with
    # n < M are the negative ones, so n0 = M
    hf = small_branch.points[3].hf
    for M in (1, 2, 3, 4):
        mc = morse_counts(hf, M, band=1e-6)
        assert mc["direct"]["n0"] == M


def test_solve_tM_out_of_range(small_branch, small_t0):
    st, _ = small_t0
    # window before t0: mu-hat_2 stays positive at every tau_*/M
    ts = [t for t in small_branch.t if 0.0 < t < st.t0 - 1e-3][-4:]
    rep = TauRootReport(curves=[], raw=[(t, []) for t in ts], roots_before_t0=0,
                        tau_star=small_branch.grid.tau_star)
    with pytest.raises(OutOfRange):
        solve_tM(small_branch, rep, 3, 1e-4)


def test_tau_roots_window(small_branch, small_t0):
    st, cache = small_t0
    rep = tau_roots(small_branch, (st.t0 + 1e-6, small_branch.t[-1]), n_t=4, n_tau=8, cache=cache)
    assert rep.roots_before_t0 == 0
    assert rep.tau_star == pytest.approx(small_branch.grid.tau_star)
    assert len(rep.raw) == 4


def test_switch_epsilon_zero_returns_stokes(small_branch):
    hf = small_branch.points[25].hf
    out = branch_switch(hf, 2, epsilon=0.0)
    assert out.residual < 1e-10
    assert out.deviation == 0.0
    assert len(out.crest_heights) == 2
    assert out.crest_heights[0] == pytest.approx(out.crest_heights[1], abs=1e-12)


def test_switch_refused_without_kernel(small_branch):
    hf = small_branch.points[5].hf
    with pytest.raises(KernelCheckFailed):
        branch_switch(hf, 2, epsilon=1e-2, band=1e-6)


def test_asymptotic_option_i():
    tau = np.geomspace(1e-3, 1e-2, 6)
    out = asymptotic_classify(tau, -2.0 * tau ** 3, 0.5 * tau ** 3)
    assert out["option"] == "i" and out["exponents"]["n"] == 2
    assert out["mu1"]["coefficient"] == pytest.approx(-2.0, rel=1e-8)


def test_asymptotic_option_ii():
    tau = np.geomspace(1e-3, 1e-2, 6)
    out = asymptotic_classify(tau, -tau ** 2, 3.0 * tau ** 4)
    assert out["option"] == "ii"
    assert out["exponents"] == {"n": 1, "m": 2}


def test_asymptotic_ambiguous():
    tau = np.geomspace(1e-3, 1e-2, 6)
    with pytest.raises(FitAmbiguous):
        asymptotic_classify(tau, -tau ** 1.5, tau ** 1.5)
    with pytest.raises(FitAmbiguous):
        asymptotic_classify(tau, tau ** 2, tau ** 2)
    with pytest.raises(FitAmbiguous):
        asymptotic_classify(tau, np.sin(1e3 * tau), tau)


def test_asymptotic_noise_tolerance():
    rng = np.random.default_rng(0)
    tau = np.geomspace(1e-3, 1e-2, 8)
    noise = 1.0 + 1e-3 * rng.standard_normal(tau.size)
    out = asymptotic_classify(tau, -tau * noise, tau * noise[::-1])
    assert out["option"] == "i" and out["exponents"]["n"] == 0
