"""Dispersion relation of the uniform stream.

gamma(y; tau) solves gamma'' + omega'(U) gamma - tau^2 gamma = 0 with
gamma(0)=0, gamma(d)=1, and

    sigma(tau) = kappa gamma'(d; tau) - 1/kappa + omega(1),   kappa = U'(d).

Small-amplitude waves bifurcate at the positive root tau_* of sigma.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, linalg, optimize

from .errors import SingularBVP, SupercriticalStream
from .stream_core import UniformStream

SIGMA0_MARGIN = 1e-10


def _fd_gamma(stream: UniformStream, tau: float, n: int) -> tuple[np.ndarray, np.ndarray, float]:
    """Second-order FD solve on n intervals; returns (y, gamma, gamma'(d))."""
    d = stream.d
    y = np.linspace(0.0, d, n + 1)
    h = d / n
    c = stream.vm.omega_prime(stream.U(y)) - tau * tau
    c = np.broadcast_to(c, y.shape)
    # unknowns gamma_1 .. gamma_{n-1}; gamma_0 = 0, gamma_n = 1
    diag = -2.0 + h * h * c[1:-1]
    off = np.ones(n - 2)
    rhs = np.zeros(n - 1)
    rhs[-1] = -1.0
    ab = np.zeros((3, n - 1))
    ab[0, 1:] = off
    ab[1] = diag
    ab[2, :-1] = off
    # pivots of the symmetric tridiagonal matrix flag near-singular systems
    ev = linalg.eigvalsh_tridiagonal(diag, off, select="i", select_range=(0, 0))
    scale = np.max(np.abs(diag)) + 2.0
    if abs(ev[0]) < 1e-12 * scale:
        raise SingularBVP(f"tau^2={tau * tau:g} is close to a Dirichlet eigenvalue")
    g_in = linalg.solve_banded((1, 1), ab, rhs)
    g = np.concatenate([[0.0], g_in, [1.0]])
    # ghost value from the scheme at y=d keeps the slope estimate symmetric
    ghost = 2.0 * g[-1] - g[-2] - h * h * c[-1] * g[-1]
    gp = (ghost - g[-2]) / (2.0 * h)
    return y, g, gp


def solve_gamma(stream: UniformStream, tau: float, n: int = 400) -> tuple[Callable, float]:
    """gamma(.; tau) and gamma'(d; tau) with one Richardson extrapolation.

    n is raised to 100 tau d when larger, so that the boundary layer of
    width 1/tau is resolved in deep water.
    """
    if n < 200:
        raise ValueError("n must be at least 200")
    n = max(n, int(math.ceil(100.0 * abs(tau) * stream.d)))
    y1, g1, gp1 = _fd_gamma(stream, tau, n)
    y2, g2, gp2 = _fd_gamma(stream, tau, 2 * n)
    g_rich = (4.0 * g2[::2] - g1) / 3.0
    gp = (4.0 * gp2 - gp1) / 3.0

    def gamma(y):
        return np.interp(np.asarray(y, dtype=float), y1, g_rich)

    return gamma, float(gp)


def shoot_gamma_prime(stream: UniformStream, tau: float) -> float:
    """Independent shooting estimate of gamma'(d; tau) (test oracle)."""
    vm = stream.vm

    def rhs(y, z):
        return [z[1], (tau * tau - vm.omega_prime(stream.U(y))) * z[0]]

    sol = integrate.solve_ivp(rhs, (0.0, stream.d), [0.0, 1.0], method="DOP853",
                              rtol=1e-13, atol=1e-14)
    v, vp = sol.y[0, -1], sol.y[1, -1]
    return float(vp / v)


def sigma(stream: UniformStream, tau: float, n: int = 400, check: bool = True) -> float:
    """sigma(tau), evaluated in both algebraically equivalent forms."""
    kappa = stream.kappa
    _, gp = solve_gamma(stream, tau, n)
    w1 = float(stream.vm.omega(1.0))
    s1 = kappa * gp - 1.0 / kappa + w1
    if check:
        # second form kappa gamma' - kappa rho0 with U''(d) from H: U''=-H_pp/H_p^3
        hp1 = float(stream.Hp(1.0))

        def one_sided(eps):
            return (3.0 * hp1 - 4.0 * float(stream.Hp(1.0 - eps))
                    + float(stream.Hp(1.0 - 2 * eps))) / (2 * eps)

        hpp = (4.0 * one_sided(1e-4) - one_sided(2e-4)) / 3.0
        upp = -hpp / hp1 ** 3
        rho0 = (1.0 + kappa * upp) / kappa ** 2
        s2 = kappa * gp - kappa * rho0
        if abs(s1 - s2) > 1e-9 * max(1.0, abs(s1)):
            raise AssertionError(f"sigma forms disagree: {s1} vs {s2}")
    return float(s1)


def rho0(stream: UniformStream) -> float:
    kappa = stream.kappa
    return 1.0 / kappa ** 2 - float(stream.vm.omega(1.0)) / kappa


@dataclass(frozen=True)
class DispersionCurve:
    stream: UniformStream
    tau_star: float
    kappa: float
    rho0: float
    sigma0: float

    @property
    def Lambda0(self) -> float:
        return 2.0 * np.pi / self.tau_star

    def sigma(self, tau: float) -> float:
        return sigma(self.stream, tau, check=False)

    def gamma(self, tau: float) -> Callable:
        return solve_gamma(self.stream, tau)[0]

    def table(self, taus) -> np.ndarray:
        return np.array([[t, self.sigma(t)] for t in taus])


def find_tau_star(stream: UniformStream, n: int = 400) -> float:
    """Unique positive root of sigma: bracketing, then secant-Newton polish."""
    s0 = sigma(stream, 0.0, n)
    if s0 >= -SIGMA0_MARGIN:
        raise SupercriticalStream(f"sigma(0)={s0:.3e} is not negative")
    f = lambda t: sigma(stream, t, n, check=False)
    hi = 1.0
    while f(hi) <= 0.0:
        hi *= 2.0
    lo = hi / 2.0 if hi > 1.0 else 0.0
    tau = optimize.brentq(f, lo, hi, xtol=1e-13, rtol=1e-15)
    for _ in range(3):
        ft = f(tau)
        if abs(ft) < 1e-14:
            break
        dt = 1e-6 * max(tau, 1.0)
        tau -= ft * 2 * dt / (f(tau + dt) - f(tau - dt))
    return float(tau)


def dispersion_curve(stream: UniformStream) -> DispersionCurve:
    tau = find_tau_star(stream)
    return DispersionCurve(stream=stream, tau_star=tau, kappa=stream.kappa,
                           rho0=rho0(stream), sigma0=sigma(stream, 0.0))


def froude_check(stream: UniformStream) -> dict:
    """1/F^2 = int_0^d dy / U'(y)^2 = int_0^1 H_p^3 dp."""
    val, _ = integrate.quad(lambda p: float(stream.Hp(p)) ** 3, 0.0, 1.0,
                            epsabs=1e-13, epsrel=1e-13, limit=200)
    sub = val > 1.0
    s0 = sigma(stream, 0.0, check=False)
    if abs(val - 1.0) > 1e-8 and (s0 < 0.0) != sub:
        raise AssertionError("Froude criterion and sign of sigma(0) disagree")
    return {"froude_sq_inv": float(val), "subcritical": bool(sub)}
