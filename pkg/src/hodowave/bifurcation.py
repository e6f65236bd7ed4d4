"""Stokes and subharmonic bifurcation points along a computed branch.

t0 is the first zero of mu_1(t) (half-period even spectrum).  Subharmonic
points t_M are zeros of mu-hat_2(t, tau_*/M); they are located from the
tau-roots of mu-hat_2(t, .) threaded across t and refined by re-solving
the branch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import optimize

from .continuation import Branch, BranchPoint, resolve_at
from .errors import (CurveBroken, FellBackToStokes, FitAmbiguous, KernelCheckFailed,
                     KernelNotSimple, NewtonDiverged, NotReached, OutOfRange)
from .hodograph_core import HeightField, assemble, extend, free_nodes, mass_matrix, residual_norm
from .spectra import (assemble_forms, count_nonpositive, family_spectrum, forms_on, nodal_domains,
                      solve_family, zero_band)


class PointCache:
    """Re-solved branch points and their spectra, keyed by t."""

    def __init__(self, branch: Branch):
        self.branch = branch
        self._pts = {p.t: p for p in branch.points}
        self._ft = {}
        self._mu = {}

    def point(self, t: float) -> BranchPoint:
        if t not in self._pts:
            self._pts[t] = resolve_at(self.branch, t)
        return self._pts[t]

    def hf(self, t: float) -> HeightField:
        return self.point(t).hf

    def full_forms(self, t: float):
        if t not in self._ft:
            self._ft[t] = assemble_forms(self.hf(t), "full_periodic")
        return self._ft[t]

    def mu(self, t: float, count: int = 4) -> np.ndarray:
        if t not in self._mu or len(self._mu[t]) < count:
            self._mu[t] = family_spectrum(self.hf(t), "half_even", count).eigenvalues
        return self._mu[t]

    def mu_hat(self, t: float, tau: float, count: int = 4) -> np.ndarray:
        return solve_family(self.full_forms(t), "bloch", count, tau).eigenvalues


# ----------------------------------------------------------------------------
# first Stokes bifurcation


@dataclass(frozen=True)
class StokesBifurcation:
    t0: float
    bracket: tuple
    mu1_slope: float
    kernel_dim: int
    mu0_at_t0: float
    mu1_at_t0: float
    gap: float
    band: float
    nodal: dict
    pattern_ok: bool


def detect_t0(branch: Branch, cache: PointCache | None = None, xtol: float = 1e-12) -> StokesBifurcation:
    """First sign change of mu_1 along the branch, refined by re-solves."""
    cache = cache or PointCache(branch)
    ts = branch.t
    mu1 = np.array([cache.mu(t)[1] for t in ts])
    k = next((i for i in range(1, len(ts)) if mu1[i - 1] > 0.0 >= mu1[i]), None)
    if k is None:
        raise NotReached(f"mu_1 does not change sign on t in [0, {ts[-1]:.4g}]", stage="bifurcation")
    lo, hi = float(ts[k - 1]), float(ts[k])
    f = lambda t: float(cache.mu(t)[1])
    t0 = optimize.brentq(f, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps)
    spec = family_spectrum(cache.hf(t0), "half_even", 5)
    mu = spec.eigenvalues
    band = zero_band(cache.hf(t0), mu)
    kernel_dim = int(np.sum(np.abs(mu) <= band))
    gap = float(min(abs(mu[2] - mu[1]), abs(mu[1] - mu[0])))
    if kernel_dim != 1 or gap <= 10.0 * band:
        raise KernelNotSimple(f"kernel dimension {kernel_dim}, gap {gap:.3e}, band {band:.3e}",
                              stage="bifurcation")
    dt = 1e-6
    slope = (f(t0 + dt) - f(t0 - dt)) / (2 * dt)
    nodal = nodal_domains(spec.eigenvectors[1])
    # pattern: mu_1 > 0 on stored samples before t0, < 0 on the following ones
    before = mu1[ts < t0]
    after = mu1[(ts > t0)][:3]
    pattern = bool(np.all(before[1:] > 0.0) and np.all(after < 0.0))
    return StokesBifurcation(t0=t0, bracket=(lo, hi), mu1_slope=float(slope), kernel_dim=kernel_dim,
                             mu0_at_t0=float(mu[0]), mu1_at_t0=float(mu[1]), gap=gap, band=band,
                             nodal=nodal, pattern_ok=pattern)


# ----------------------------------------------------------------------------
# tau-roots of mu-hat_2


@dataclass
class TauRootCurve:
    j: int
    samples: list                 # (t, tau-hat) pairs
    slope_sign: int               # sign of d tau-hat / dt over the samples
    crossing_sign: int            # +1: mu-hat_2 goes - to + as tau increases
    crossing_order: int = 1

    @property
    def t(self) -> np.ndarray:
        return np.array([s[0] for s in self.samples])

    @property
    def tau(self) -> np.ndarray:
        return np.array([s[1] for s in self.samples])


@dataclass
class TauRootReport:
    curves: list
    raw: list                     # (t, [roots]) for every sampled t
    roots_before_t0: int
    tau_star: float
    min_tau_hat_negative: list = field(default_factory=list)  # (t, min over tau of mu-hat_2)


def roots_at(cache: PointCache, t: float, tau_star: float, n_tau: int = 24,
             xtol: float = 1e-9) -> tuple[list, float]:
    """Sign changes of mu-hat_2(t, .) on [tau_*/(2 n_tau), tau_*/2]."""
    taus = np.linspace(0.5 / n_tau, 0.5, n_tau) * tau_star
    vals = np.array([cache.mu_hat(t, x)[2] for x in taus])
    roots = []
    for i in range(len(taus) - 1):
        if vals[i] == 0.0 or vals[i] * vals[i + 1] < 0.0:
            r = optimize.brentq(lambda x: cache.mu_hat(t, x)[2], taus[i], taus[i + 1],
                                xtol=xtol * tau_star)
            sgn = 1 if vals[i + 1] > vals[i] else -1
            roots.append((float(r), sgn))
    return roots, float(np.min(vals))


def tau_roots(branch: Branch, t_window: tuple, n_t: int = 16, n_tau: int = 24,
              t0: float | None = None, cache: PointCache | None = None) -> TauRootReport:
    """Roots of mu-hat_2(t, .) on (0, tau_*/2] for t sampled in the window,
    threaded into curves by nearest-neighbour matching in tau."""
    cache = cache or PointCache(branch)
    tau_star = cache.full_forms(branch.points[0].t).grid.tau_star
    lo, hi = t_window
    ts = np.linspace(lo, hi, n_t)
    raw, mins = [], []
    before = 0
    if t0 is not None:
        for t in branch.t[(branch.t < t0) & (branch.t > 0.0)][-3:]:
            r, _ = roots_at(cache, float(t), tau_star, n_tau)
            before += len(r)
    for t in ts:
        r, m = roots_at(cache, float(t), tau_star, n_tau)
        raw.append((float(t), r))
        mins.append((float(t), m))
    curves: list[TauRootCurve] = []
    for t, rs in raw:
        rs_sorted = sorted(rs)
        used = set()
        for c in curves:
            last_tau = c.samples[-1][1]
            cands = [(abs(x - last_tau), i) for i, (x, s) in enumerate(rs_sorted)
                     if i not in used and s == c.crossing_sign]
            if cands:
                _, i = min(cands)
                if abs(rs_sorted[i][0] - last_tau) > 0.25 * tau_star:
                    raise CurveBroken(f"jump at t={t:.6g}", stage="bifurcation", raw=raw)
                used.add(i)
                c.samples.append((t, rs_sorted[i][0]))
        for i, (x, s) in enumerate(rs_sorted):
            if i not in used:
                curves.append(TauRootCurve(j=len(curves) + 1, samples=[(t, x)], slope_sign=0,
                                           crossing_sign=s))
    for c in curves:
        if len(c.samples) > 1:
            d = np.diff(c.tau)
            c.slope_sign = int(np.sign(np.sum(np.sign(d)))) if np.all(np.sign(d) == np.sign(d[0])) else 0
        c.crossing_order = _crossing_order(cache, c.samples[-1][0], c.samples[-1][1], tau_star)
    return TauRootReport(curves=curves, raw=raw, roots_before_t0=before, tau_star=tau_star,
                         min_tau_hat_negative=mins)


def _crossing_order(cache: PointCache, t: float, tau: float, tau_star: float) -> int:
    """1 when mu-hat_2 changes sign across the root, otherwise 2."""
    d = 1e-4 * tau_star
    a = cache.mu_hat(t, tau - d)[2]
    b = cache.mu_hat(t, tau + d)[2]
    return 1 if a * b < 0.0 else 2


# ----------------------------------------------------------------------------
# subharmonic points


@dataclass(frozen=True)
class SubharmonicPoint:
    M: int
    t_M: float
    n_star: int
    morse_before: int
    morse_after: int
    crossing_number: int
    kernel_eigenvalue: float
    kernel_trivial_off: bool
    delta: float
    band: float


def solve_tM(branch: Branch, report: TauRootReport, M: int, delta: float,
             cache: PointCache | None = None, count: int | None = None) -> SubharmonicPoint:
    """t_M with tau-hat_{n*}(t_M) = tau_*/M, validated on the M-period problem.

    The bracket comes from the threaded curve n* (largest index with a
    negative-side crossing) when tau_*/M lies in its range; otherwise the
    sampled window is scanned for a sign change of mu-hat_2(t, tau_*/M),
    which is the same condition.  The root is refined on re-solved points.
    """
    cache = cache or PointCache(branch)
    tau_star = report.tau_star
    target = tau_star / M
    g = lambda s: float(cache.mu_hat(s, target)[2])
    bracket, n_star = None, 0
    threaded = [c for c in report.curves if len(c.samples) > 1]
    if threaded:
        n_star = max(range(len(threaded)), key=lambda i: (threaded[i].crossing_sign < 0, i))
        curve = threaded[n_star]
        t, tau = curve.t, curve.tau
        k = next((i for i in range(len(t) - 1) if (tau[i] - target) * (tau[i + 1] - target) <= 0.0), None)
        if k is not None:
            bracket, n_star = (t[k], t[k + 1]), curve.j
    if bracket is None:
        ts = [t for t, _ in report.raw]
        vals = [g(t) for t in ts]
        k = next((i for i in range(len(ts) - 1) if vals[i] > 0.0 >= vals[i + 1]), None)
        if k is None:
            raise OutOfRange(f"mu-hat_2(t, tau_*/{M}) keeps its sign on the window", stage="bifurcation")
        bracket = (ts[k], ts[k + 1])
    t_M = optimize.brentq(g, bracket[0], bracket[1], xtol=1e-12, rtol=4 * np.finfo(float).eps)
    curve_j = n_star
    count = count or (M + 6)
    hf = cache.hf(t_M)
    band = zero_band(hf)
    ev = family_spectrum(hf, "subharmonic", count, M=M).eigenvalues
    kern = float(ev[np.argmin(np.abs(ev))])
    if abs(kern) > band:
        raise KernelCheckFailed(f"no M-period eigenvalue in the zero band at t_M (closest {kern:.3e})",
                                stage="bifurcation")
    ev_lo = family_spectrum(cache.hf(t_M - delta), "subharmonic", count, M=M).eigenvalues
    ev_hi = family_spectrum(cache.hf(t_M + delta), "subharmonic", count, M=M).eigenvalues
    off = bool(np.min(np.abs(ev_lo)) > band and np.min(np.abs(ev_hi)) > band)
    n_lo = int(np.sum(ev_lo < 0.0))
    n_hi = int(np.sum(ev_hi < 0.0))
    return SubharmonicPoint(M=M, t_M=float(t_M), n_star=curve_j, morse_before=n_lo, morse_after=n_hi,
                            crossing_number=n_hi - n_lo, kernel_eigenvalue=kern,
                            kernel_trivial_off=off, delta=delta, band=band)


# ----------------------------------------------------------------------------
# Morse counts


def morse_counts(hf: HeightField, M: int, band: float | None = None) -> dict:
    """Counts of nonpositive even M-period eigenvalues.

    ``pairing`` follows the rule of counting k, m in [0, M/2] with
    mu-hat_0(k tau_*/M) <= 0 and mu-hat_1(m tau_*/M) <= 0 (each sample once);
    ``direct`` counts the eigenvalues of the M-period problem.
    """
    band = zero_band(hf) if band is None else band
    ft = assemble_forms(hf, "full_periodic")
    tau_star = ft.grid.tau_star
    ks = range(0, M // 2 + 1)
    mh = np.array([solve_family(ft, "bloch", 3, k * tau_star / M).eigenvalues for k in ks])
    n_pair = int(np.sum(mh[:, 0] <= band) + np.sum(mh[:, 1] <= band))
    zeros_pair = int(np.sum(np.abs(mh[:, 0]) <= band) + np.sum(np.abs(mh[:, 1]) <= band))
    ev = family_spectrum(hf, "subharmonic", M + 6, M=M).eigenvalues
    n0_d, n_d = count_nonpositive(ev, band)
    return {"M": M, "band": band,
            "pairing": {"n0": n_pair - zeros_pair, "n": n_pair},
            "direct": {"n0": n0_d, "n": n_d, "n0_no_band": int(np.sum(ev < 0.0))},
            "expected": {"n0": M if M % 2 else None, "n": M + 1 if M % 2 else M + 2},
            "eigenvalues": ev.tolist()}


# ----------------------------------------------------------------------------
# switching to the M-period branch


@dataclass(frozen=True)
class SwitchResult:
    hf: HeightField
    residual: float
    deviation: float
    amplitude: float
    crest_heights: list
    epsilon: float


def _kernel_vector(hf_M: HeightField, band: float) -> np.ndarray:
    spec = solve_family(forms_on(hf_M), "subharmonic", 12)
    k = int(np.argmin(np.abs(spec.eigenvalues)))
    if abs(spec.eigenvalues[k]) > band:
        raise KernelCheckFailed(f"no kernel on the M-period grid (closest {spec.eigenvalues[k]:.3e})",
                                stage="bifurcation")
    return spec.eigenvectors[k]


def branch_switch(hf: HeightField, M: int, epsilon: float = 1e-2, band: float | None = None,
                  max_iter: int = 30) -> SwitchResult:
    """Solve on the M-period grid near hf + epsilon * (kernel mode).

    Unknowns are the free heights and lam; the extra equation fixes the
    projection of h - h_Stokes on the kernel mode to epsilon.  Without a
    kernel on the M-period grid the switch is refused.
    """
    base = extend(hf, "subharmonic", copies=M)
    g = base.grid
    band = zero_band(hf) if band is None else band
    if epsilon == 0.0:
        return SwitchResult(base, residual_norm(base), 0.0, base.amplitude, _crests(base, M), 0.0)
    phi = _kernel_vector(base, band)
    free = free_nodes(g)
    ph = phi.ravel()[free]
    ML = mass_matrix(g, np.zeros((g.nq, g.np)), weight="unit")[free][:, free]
    mphi = ML @ ph
    ph = ph / math.sqrt(ph @ mphi)
    mphi = ML @ ph
    h0 = base.h.ravel()[free].copy()
    x = h0 + epsilon * ph
    lam = hf.lam
    full = np.zeros(g.nq * g.np)
    hist = []
    for it in range(max_iter):
        full[free] = x
        asm = assemble(g, full.reshape(g.nq, g.np), lam, hf.R, hf.vm, lam_derivative=True)
        r = np.concatenate([asm.grad[free], [(x - h0) @ mphi - epsilon]])
        hf_try = HeightField(grid=g, h=full.reshape(g.nq, g.np).copy(), lam=lam, R=hf.R, vm=hf.vm,
                             t_label=hf.t_label)
        res = residual_norm(hf_try)
        hist.append(res)
        if res < 1e-10 and abs(r[-1]) < 1e-12:
            break
        J = sp.bmat([[asm.hess[free][:, free], asm.grad_lam[free][:, None]],
                     [mphi[None, :], None]]).tocsc()
        dx = spla.spsolve(J, -r)
        x = x + dx[:-1]
        lam = lam + dx[-1]
        if not np.all(np.isfinite(x)):
            raise NewtonDiverged("branch switch corrector diverged", stage="bifurcation")
    else:
        raise NewtonDiverged(f"branch switch corrector stalled at {hist[-1]:.2e}", stage="bifurcation")
    out = hf_try
    dev = _translate_deviation(out, M)
    amp = float(np.max(out.h[:, -1]) - np.min(out.h[:, -1])) / 2
    if dev <= 1e-3 * amp:
        raise FellBackToStokes(f"deviation {dev:.2e} vs amplitude {amp:.2e}", stage="bifurcation")
    return SwitchResult(out, hist[-1], dev, amp, _crests(out, M), epsilon)


def _translate_deviation(hf: HeightField, M: int) -> float:
    """max |h(q + L) - h(q)| over the M-period half grid (L = Stokes period)."""
    n = (hf.grid.nq - 1) // M  # columns per half Stokes period
    s = hf.h[:, -1]
    if M < 2:
        return 0.0
    return float(np.max(np.abs(s[2 * n:] - s[:-2 * n]))) if len(s) > 2 * n else float(
        np.max(np.abs(s[::-1][: len(s) - n] - s[n:])))


def _crests(hf: HeightField, M: int) -> list:
    n = (hf.grid.nq - 1) // M
    return [float(hf.h[2 * k * n, -1]) for k in range(M // 2 + 1) if 2 * k * n < hf.grid.nq]


# ----------------------------------------------------------------------------
# small-tau behaviour at t0


def asymptotic_classify(tau, mu1_hat, mu2_hat, tol: float = 0.2) -> dict:
    """Power-law fit of mu-hat_1 and mu-hat_2 on a decade of small tau.

    Option (i): a shared odd exponent n+1 with opposite signs.
    Option (ii): even exponents 2n (mu-hat_1 < 0) and 2m (mu-hat_2 > 0).
    FitAmbiguous when an exponent is not within ``tol`` of an integer, or
    the pattern matches neither option.
    """
    tau = np.asarray(tau, dtype=float)
    out = {}
    fits = []
    for name, y in (("mu1", np.asarray(mu1_hat, float)), ("mu2", np.asarray(mu2_hat, float))):
        sgn = np.sign(np.median(y))
        if np.any(np.sign(y) != sgn) or sgn == 0:
            raise FitAmbiguous(f"{name} changes sign on the fitted range")
        A = np.vstack([np.log(tau), np.ones_like(tau)]).T
        coef, *_ = np.linalg.lstsq(A, np.log(np.abs(y)), rcond=None)
        pred = sgn * np.exp(A @ coef)
        resid = float(np.max(np.abs(pred - y) / np.abs(y)))
        e = float(coef[0])
        fits.append((e, int(sgn)))
        out[name] = {"exponent": e, "sign": int(sgn), "coefficient": float(sgn * math.exp(coef[1])),
                     "residual": resid, "confidence": abs(e - round(e))}
    (e1, s1), (e2, s2) = fits
    r1, r2 = round(e1), round(e2)
    if abs(e1 - r1) > tol or abs(e2 - r2) > tol:
        raise FitAmbiguous(f"exponents {e1:.3f}, {e2:.3f} are not near integers")
    if r1 == r2 and r1 % 2 == 1 and s1 == -s2:
        out.update(option="i", exponents={"n": r1 - 1})
    elif r1 != r2 and r1 % 2 == 0 and r2 % 2 == 0 and s1 < 0 < s2:
        out.update(option="ii", exponents={"n": r1 // 2, "m": r2 // 2})
    else:
        raise FitAmbiguous(f"exponents ({e1:.3f}, {s1:+d}), ({e2:.3f}, {s2:+d}) fit neither option")
    return out
