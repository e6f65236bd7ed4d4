"""Uniform streams: vorticity models, the depth/Bernoulli functions and
their critical data.

A uniform stream is a shear flow U(y) on 0 < y < d with U(0)=0, U(d)=1
solving U'' + omega(U) = 0 and the Bernoulli condition U'(d)^2/2 + d = R.
Everything is parameterized by the bottom slope s = U'(0).
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import integrate, interpolate, optimize

from .errors import NoWavesForR, NonSmoothVorticity, SubcriticalSlope, ValidationError

Func = Callable[[np.ndarray], np.ndarray]

# Gauss-Legendre nodes used for all fixed quadratures on [0, 1]
_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W

# margin above s0 under which the stream is treated as degenerate
S_MARGIN = 1e-8


@dataclass(frozen=True)
class VorticityModel:
    """Vorticity omega(p), its derivative and its primitive Omega(0)=0."""

    omega: Func
    omega_prime: Func
    Omega: Func
    kind: str = "custom"
    params: dict = field(default_factory=dict)

    def spec(self) -> dict:
        """JSON-able description (only for the built-in families)."""
        return {"kind": self.kind, **self.params}

    def max_Omega(self) -> float:
        p = np.linspace(0.0, 1.0, 2001)
        vals = np.asarray(self.Omega(p), dtype=float)
        k = int(np.argmax(vals))
        best = float(vals[k])
        if 0 < k < len(p) - 1:
            res = optimize.minimize_scalar(
                lambda x: -float(self.Omega(np.array([x]))[0]),
                bounds=(p[k - 1], p[k + 1]), method="bounded",
                options={"xatol": 1e-12})
            best = max(best, -float(res.fun))
        return max(best, 0.0)

    @property
    def s0(self) -> float:
        # s^2 - 2 Omega > 0 on [0, 1] is what the depth integral needs
        return math.sqrt(2.0 * self.max_Omega())

    @property
    def is_zero(self) -> bool:
        return self.kind == "constant" and self.params.get("value", 0.0) == 0.0


def _vec(f: Callable[[float], float]) -> Func:
    def g(p):
        p_arr = np.asarray(p, dtype=float)
        out = np.vectorize(lambda x: float(f(x)), otypes=[float])(p_arr)
        return out if p_arr.ndim else float(out)
    return g


def _check_smooth(omega: Func, omega_prime: Func | None) -> None:
    p = np.linspace(0.0, 1.0, 401)
    try:
        w = np.asarray(omega(p), dtype=float) * np.ones_like(p)
        if omega_prime is not None:
            wp = np.asarray(omega_prime(p), dtype=float) * np.ones_like(p)
        else:
            wp = np.gradient(w, p)
    except Exception as exc:  # user callables can fail in arbitrary ways
        raise NonSmoothVorticity(f"derivative evaluation failed: {exc}") from exc
    if not (np.all(np.isfinite(w)) and np.all(np.isfinite(wp))):
        raise NonSmoothVorticity("omega or omega' is not finite on [0, 1]")
    if omega_prime is None:
        # a kink shows up as an O(1) jump of the difference quotient that
        # does not shrink under refinement
        fine = np.linspace(0.0, 1.0, 1601)
        wf = np.asarray(omega(fine), dtype=float) * np.ones_like(fine)
        jc = np.max(np.abs(np.diff(np.diff(w) / np.diff(p))))
        jf = np.max(np.abs(np.diff(np.diff(wf) / np.diff(fine))))
        scale = max(1.0, np.max(np.abs(wp)))
        if jf > 1e-6 * scale and jf > 0.6 * jc:
            raise NonSmoothVorticity("omega' appears discontinuous on [0, 1]")


def primitive(omega: Callable, omega_prime: Callable | None = None) -> VorticityModel:
    """Build a VorticityModel for a user function by adaptive quadrature."""
    w = _vec(omega)
    _check_smooth(w, omega_prime and _vec(omega_prime))

    def Om(x: float) -> float:
        if x == 0.0:
            return 0.0
        val, _ = integrate.quad(lambda t: float(omega(t)), 0.0, x,
                                epsabs=1e-13, epsrel=1e-13, limit=200)
        return val

    if omega_prime is None:
        def wp(x: float) -> float:
            h = 1e-5
            a, b = max(0.0, x - h), min(1.0, x + h)
            return (float(omega(b)) - float(omega(a))) / (b - a)
    else:
        wp = omega_prime
    return VorticityModel(w, _vec(wp), _vec(Om), kind="custom")


def constant_vorticity(value: float = 0.0) -> VorticityModel:
    c = float(value)
    return VorticityModel(
        omega=lambda p: c * np.ones_like(np.asarray(p, dtype=float)),
        omega_prime=lambda p: np.zeros_like(np.asarray(p, dtype=float)),
        Omega=lambda p: c * np.asarray(p, dtype=float),
        kind="constant", params={"value": c})


def affine_vorticity(a: float, b: float) -> VorticityModel:
    """omega(p) = a + b p."""
    a, b = float(a), float(b)
    return VorticityModel(
        omega=lambda p: a + b * np.asarray(p, dtype=float),
        omega_prime=lambda p: b * np.ones_like(np.asarray(p, dtype=float)),
        Omega=lambda p: a * np.asarray(p, dtype=float) + 0.5 * b * np.asarray(p, dtype=float) ** 2,
        kind="affine", params={"a": a, "b": b})


def sine_vorticity(A: float) -> VorticityModel:
    """omega(p) = A sin(pi p)."""
    A = float(A)
    return VorticityModel(
        omega=lambda p: A * np.sin(np.pi * np.asarray(p, dtype=float)),
        omega_prime=lambda p: A * np.pi * np.cos(np.pi * np.asarray(p, dtype=float)),
        Omega=lambda p: A * (1.0 - np.cos(np.pi * np.asarray(p, dtype=float))) / np.pi,
        kind="sine", params={"A": A})


def spline_vorticity(p_nodes, omega_nodes, source: str | None = None) -> VorticityModel:
    """Cubic spline through tabulated (p, omega); Omega is its exact antiderivative."""
    p_nodes = np.asarray(p_nodes, dtype=float)
    omega_nodes = np.asarray(omega_nodes, dtype=float)
    if p_nodes[0] > 0.0 or p_nodes[-1] < 1.0 or np.any(np.diff(p_nodes) <= 0):
        raise NonSmoothVorticity("spline table must be increasing and cover [0, 1]")
    cs = interpolate.CubicSpline(p_nodes, omega_nodes, bc_type="not-a-knot")
    anti = cs.antiderivative()
    off = float(anti(0.0))
    params = {"p": p_nodes.tolist(), "omega": omega_nodes.tolist()}
    if source:
        params["source"] = source
    return VorticityModel(
        omega=lambda p: cs(np.asarray(p, dtype=float)),
        omega_prime=lambda p: cs(np.asarray(p, dtype=float), 1),
        Omega=lambda p: anti(np.asarray(p, dtype=float)) - off,
        kind="spline", params=params)


def read_vorticity_csv(path: str | Path) -> VorticityModel:
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append((float(row["p"]), float(row["omega"])))
    rows.sort()
    p, w = zip(*rows)
    return spline_vorticity(p, w, source=str(path))


def vorticity_from_spec(spec: dict) -> VorticityModel:
    try:
        return _vorticity_from_spec(spec)
    except KeyError as exc:
        raise ValidationError(f"vorticity spec {spec!r} lacks {exc}", stage="stream") from exc


def _vorticity_from_spec(spec: dict) -> VorticityModel:
    kind = spec.get("kind", "constant")
    if kind == "constant":
        return constant_vorticity(spec.get("value", 0.0))
    if kind == "affine":
        return affine_vorticity(spec["a"], spec["b"])
    if kind == "sine":
        return sine_vorticity(spec["A"])
    if kind == "spline":
        if "p" in spec:
            return spline_vorticity(spec["p"], spec["omega"], spec.get("source"))
        return read_vorticity_csv(spec["path"])
    raise ValidationError(f"unknown vorticity kind {kind!r}", stage="stream")


@dataclass(frozen=True)
class UniformStream:
    """Uniform stream with bottom slope s, depth d and Bernoulli constant R."""

    vm: VorticityModel
    s: float
    d: float
    R: float
    p_tab: np.ndarray = field(repr=False)
    H_tab: np.ndarray = field(repr=False)

    def Hp(self, p):
        p = np.asarray(p, dtype=float)
        return 1.0 / np.sqrt(self.s ** 2 - 2.0 * self.vm.Omega(p))

    def H(self, p):
        """Inverse stream function y = H(p) = int_0^p Hp."""
        p = np.asarray(p, dtype=float)
        k = np.clip(np.searchsorted(self.p_tab, p, side="right") - 1, 0, len(self.p_tab) - 2)
        a = self.p_tab[k]
        # integrate from the nearest table node with a fixed Gauss rule
        x = a[..., None] + (p - a)[..., None] * _GL_X
        return self.H_tab[k] + (p - a) * np.sum(self.Hp(x) * _GL_W, axis=-1)

    def U(self, y):
        """Velocity profile U(y), obtained by inverting H with Newton steps."""
        y = np.asarray(y, dtype=float)
        u = np.interp(y, self.H_tab, self.p_tab)
        for _ in range(8):
            u = np.clip(u - (self.H(u) - y) / self.Hp(u), 0.0, 1.0)
        return u

    def U_prime(self, y):
        return 1.0 / self.Hp(self.U(y))

    @property
    def kappa(self) -> float:
        """Surface shear U'(d)."""
        return float(1.0 / self.Hp(1.0))

    def bernoulli_residual(self) -> float:
        return 0.5 / float(self.Hp(1.0)) ** 2 + float(self.H(1.0)) - self.R


def depth(vm: VorticityModel, s: float) -> float:
    with warnings.catch_warnings():
        # near s0 the integrand is nearly singular and quad complains about
        # roundoff; the value is still accurate enough for bracketing
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(
            lambda t: 1.0 / math.sqrt(max(s * s - 2.0 * float(vm.Omega(t)), 1e-300)),
            0.0, 1.0, epsabs=1e-13, epsrel=1e-13, limit=200)
    return val


def bernoulli_function(vm: VorticityModel, s: float) -> float:
    """The function R(s) = s^2/2 + d(s) - Omega(1)."""
    return 0.5 * s * s + depth(vm, s) - float(vm.Omega(1.0))


def solve_uniform_stream(vm: VorticityModel, s: float, n_tab: int = 512) -> UniformStream:
    s0 = vm.s0
    if not s > s0 + S_MARGIN:
        raise SubcriticalSlope(f"s={s} must exceed s0=sqrt(2 max Omega)={s0} (margin {S_MARGIN})")
    p_tab = np.linspace(0.0, 1.0, n_tab + 1)
    a, b = p_tab[:-1], p_tab[1:]
    x = a[:, None] + (b - a)[:, None] * _GL_X
    inc = (b - a) * np.sum(_GL_W / np.sqrt(s * s - 2.0 * vm.Omega(x)), axis=1)
    H_tab = np.concatenate([[0.0], np.cumsum(inc)])
    d = depth(vm, s)
    H_tab[-1] = d
    R = 0.5 * s * s + d - float(vm.Omega(1.0))
    return UniformStream(vm=vm, s=float(s), d=float(d), R=float(R), p_tab=p_tab, H_tab=H_tab)


@dataclass(frozen=True)
class CriticalData:
    s_c: float
    R_c: float
    s_plus: float | None = None
    s_minus: float | None = None


def _dR(vm: VorticityModel, s: float) -> float:
    val, _ = integrate.quad(lambda t: (s * s - 2.0 * float(vm.Omega(t))) ** -1.5, 0.0, 1.0,
                            epsabs=1e-13, epsrel=1e-13, limit=200)
    return s * (1.0 - val)


def _d2R(vm: VorticityModel, s: float) -> float:
    i3, _ = integrate.quad(lambda t: (s * s - 2.0 * float(vm.Omega(t))) ** -1.5, 0.0, 1.0,
                           epsabs=1e-13, epsrel=1e-13)
    i5, _ = integrate.quad(lambda t: (s * s - 2.0 * float(vm.Omega(t))) ** -2.5, 0.0, 1.0,
                           epsabs=1e-13, epsrel=1e-13)
    return 1.0 - i3 + 3.0 * s * s * i5


def critical_data(vm: VorticityModel, R: float) -> CriticalData:
    """Minimum R_c of R(s) and the two roots s_plus < s_c < s_minus of R(s)=R."""
    lo = max(vm.s0 + S_MARGIN, 1e-6)
    hi = max(2.0 * lo, 1.0)
    while _dR(vm, hi) <= 0.0:
        hi *= 2.0
    # golden section on the bracket, then Newton on R'(s)=0
    res = optimize.minimize_scalar(lambda s: bernoulli_function(vm, s), bounds=(lo, hi),
                                   method="bounded", options={"xatol": 1e-10})
    s_c = float(res.x)
    for _ in range(20):
        step = _dR(vm, s_c) / _d2R(vm, s_c)
        s_c = min(max(s_c - step, lo), hi)
        if abs(step) < 1e-14 * max(1.0, s_c):
            break
    R_c = bernoulli_function(vm, s_c)
    if not R > R_c:
        raise NoWavesForR(f"R={R} does not exceed R_c={R_c:.12g}", R_c=R_c, s_c=s_c)

    def f(s):
        return bernoulli_function(vm, s) - R

    s_plus = None
    if f(lo) > 0.0:
        s_plus = optimize.brentq(f, lo, s_c, xtol=1e-14, rtol=1e-15)
    top = max(2.0 * s_c, 1.0)
    while f(top) < 0.0:
        top *= 2.0
    s_minus = optimize.brentq(f, s_c, top, xtol=1e-14, rtol=1e-15)
    return CriticalData(s_c=s_c, R_c=R_c, s_plus=s_plus, s_minus=s_minus)


def stream_for_R(vm: VorticityModel, R: float) -> UniformStream:
    """The subcritical stream (s = s_plus) carrying Bernoulli constant R."""
    cd = critical_data(vm, R)
    if cd.s_plus is None:
        raise NoWavesForR(f"no subcritical root of R(s)={R} above s0", R_c=cd.R_c, s_c=cd.s_c)
    return solve_uniform_stream(vm, cd.s_plus)


def stream_table(stream: UniformStream, n: int = 201) -> tuple[np.ndarray, np.ndarray]:
    y = np.linspace(0.0, stream.d, n)
    return y, stream.U(y)
