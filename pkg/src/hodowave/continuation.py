"""Pseudo-arclength continuation of the Stokes branch.

Unknowns are the free nodal heights (p > 0) on the half-period grid and
the scaling lam; R is fixed.  The branch parameter t is the arclength in
the norm ||dh||^2 = (2/L) int int dh^2 dq dp plus dlam^2, divided by the
flat-state period Lambda0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import optimize

from .dispersion import DispersionCurve, solve_gamma
from .errors import DegenerateHp, IoFailure, KernelNotFound, StepFailure
from .hodograph_core import (Grid, HeightField, assemble, free_nodes, load_heightfield,
                             mass_matrix, residual_norm, save_heightfield, uniform_height)
from .stream_core import UniformStream, VorticityModel

NEWTON_TOL = 1e-10
MAX_HALVINGS = 6


def _lowest_pairs(K: sp.spmatrix, M: sp.spmatrix, count: int):
    from scipy import linalg
    w, v = linalg.eigh(K.toarray(), M.toarray(), subset_by_index=[0, count - 1])
    return w, v


def flat_operators(stream: UniformStream, grid: Grid, lam: float):
    hf = uniform_height(stream, grid, lam)
    asm = assemble(grid, hf.h, lam, stream.R, stream.vm)
    free = free_nodes(grid)
    K = asm.hess[free][:, free]
    M = mass_matrix(grid, hf.h)[free][:, free]
    return hf, K, M, free


def calibrate_lambda(stream: UniformStream, Lambda0: float, nq: int, np_: int) -> float:
    """Discrete flat-state bifurcation value of lam for grid period Lambda0.

    mu_1(lam) of the flat half-period problem is increasing through zero
    near lam=1; its root differs from 1 by the discretization error.
    """
    grid = Grid(nq, np_, Lambda0)

    def mu1(lam):
        _, K, M, _ = flat_operators(stream, grid, lam)
        return _lowest_pairs(K, M, 2)[0][1]

    lo, hi = 0.9, 1.1
    while mu1(lo) > 0.0:
        lo *= 0.9
    while mu1(hi) < 0.0:
        hi *= 1.1
    return optimize.brentq(mu1, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def branch_grid(stream: UniformStream, dc: DispersionCurve, nq: int, np_: int) -> tuple[Grid, float]:
    lam_c = calibrate_lambda(stream, dc.Lambda0, nq, np_)
    return Grid(nq, np_, dc.Lambda0 / lam_c), lam_c


@dataclass(frozen=True)
class KernelMode:
    vector: np.ndarray = field(repr=False)  # nq x np array, zero at p=0
    eigenvalue: float
    correlation: float
    tau: float
    grid: Grid


def kernel_correlation(stream: UniformStream, grid: Grid, vec: np.ndarray, tau_q: float,
                       tau: float) -> float:
    """Cosine similarity with the image of cos(tau X) gamma(Y; tau) in (q, p).

    A stream-function perturbation phi maps to the height perturbation
    -phi H_p; the cosine uses the grid wavenumber tau_q.
    """
    gamma, _ = solve_gamma(stream, tau)
    P = grid.p
    ref = np.outer(np.cos(tau_q * grid.q), gamma(stream.H(P)) * stream.Hp(P))
    a, b = ref[:, 1:].ravel(), vec[:, 1:].ravel()
    return float(abs(a @ b) / (np.linalg.norm(a) * np.linalg.norm(b)))


def initial_tangent(stream: UniformStream, tau_star: float, grid: Grid, tau: float | None = None,
                    band: float = 1e-8, count: int = 6) -> KernelMode:
    """Kernel of the flat-state Frechet derivative for the mode cos(tau q).

    The mode is identified by the projection of the surface trace onto
    cos(tau q); KernelNotFound is raised when its eigenvalue is outside
    the zero band.  Trace normalized to unit amplitude, crest at q=0.
    """
    tau = tau_star if tau is None else tau
    period = 2.0 * math.pi / tau
    g = Grid(grid.nq, grid.np, period * grid.L * tau_star / (2.0 * math.pi))
    hf, K, M, free = flat_operators(stream, g, 1.0)
    w, v = _lowest_pairs(K, M, min(count, K.shape[0]))
    tau_q = 2.0 * math.pi / g.L
    basis = np.cos(tau_q * g.q)
    scores = []
    for k in range(len(w)):
        vec = np.zeros(g.nq * g.np)
        vec[free] = v[:, k]
        tr = vec.reshape(g.nq, g.np)[:, -1]
        scores.append(abs(tr @ basis) / (np.linalg.norm(tr) * np.linalg.norm(basis) + 1e-300))
    # modes sharing the trace cos(tau q) differ in p; take the one nearest zero
    cand = [k for k in range(len(w)) if scores[k] > 0.9 * max(scores)]
    best = min(cand, key=lambda k: abs(w[k]))
    if abs(w[best]) > band:
        raise KernelNotFound(f"eigenvalue of the cos mode is {w[best]:.3e} (band {band:.1e})",
                             stage="continuation")
    vec = np.zeros(g.nq * g.np)
    vec[free] = v[:, best]
    vec = vec.reshape(g.nq, g.np)
    amp = 0.5 * (vec[0, -1] - vec[-1, -1])
    vec = vec / amp
    return KernelMode(vector=vec, eigenvalue=float(w[best]),
                      correlation=kernel_correlation(stream, g, vec, tau_q, tau), tau=tau_q, grid=g)


@dataclass(frozen=True)
class BranchPoint:
    hf: HeightField
    amplitude: float
    arclength: float
    newton_residual: float
    tangent_h: np.ndarray = field(repr=False)
    tangent_lam: float
    newton_history: tuple = ()

    @property
    def t(self) -> float:
        return self.hf.t_label


@dataclass
class Branch:
    points: list
    stream: UniformStream
    tau_star: float
    Lambda0: float
    lam_c: float
    step: float

    @property
    def grid(self) -> Grid:
        return self.points[0].hf.grid

    @property
    def t(self) -> np.ndarray:
        return np.array([p.t for p in self.points])

    @property
    def lam(self) -> np.ndarray:
        return np.array([p.hf.lam for p in self.points])

    @property
    def amplitude(self) -> np.ndarray:
        return np.array([p.amplitude for p in self.points])

    def nearest_below(self, t: float) -> BranchPoint:
        ts = self.t
        k = int(np.searchsorted(ts, t, side="right")) - 1
        return self.points[max(k, 0)]


class _Corrector:
    """Newton corrector and tangent for the bordered system."""

    def __init__(self, grid: Grid, R: float, vm: VorticityModel):
        self.grid, self.R, self.vm = grid, R, vm
        self.free = free_nodes(grid)
        ML = mass_matrix(grid, np.zeros((grid.nq, grid.np)), weight="unit")
        self.ML = (ML[self.free][:, self.free] / (0.5 * grid.L)).tocsr()
        area = np.zeros(grid.nq * grid.np)
        from .hodograph_core import node_areas
        area[:] = node_areas(grid).ravel()
        area[grid.np - 1::grid.np] = grid.q_weights()  # surface rows scaled by q-weights
        self.scale = area[self.free]

    def full(self, x: np.ndarray) -> np.ndarray:
        h = np.zeros(self.grid.nq * self.grid.np)
        h[self.free] = x
        return h.reshape(self.grid.nq, self.grid.np)

    def norm2(self, dh: np.ndarray, dl: float) -> float:
        return float(dh @ (self.ML @ dh) + dl * dl)

    def parts(self, x, lam):
        asm = assemble(self.grid, self.full(x), lam, self.R, self.vm, lam_derivative=True)
        f = self.free
        return asm.grad[f], asm.hess[f][:, f], asm.grad_lam[f]

    def jacobian(self, K, gl, th, tl):
        return sp.bmat([[K, gl[:, None]], [(self.ML @ th)[None, :], np.array([[tl]])]]).tocsc()

    def correct(self, x0, l0, th, tl, ds, max_iter=25):
        x = x0 + ds * th
        lam = l0 + ds * tl
        hist = []
        mlt = self.ML @ th
        for it in range(max_iter):
            g, K, gl = self.parts(x, lam)
            r_arc = (x - x0) @ mlt + (lam - l0) * tl - ds
            rn = float(max(np.max(np.abs(g / self.scale)), abs(r_arc)))
            hist.append(rn)
            if not np.isfinite(rn) or (it >= 4 and rn > hist[0]):
                raise StepFailure(f"corrector diverged ({rn:.2e})")
            if rn < NEWTON_TOL:
                return x, lam, hist
            dx = spla.spsolve(self.jacobian(K, gl, th, tl), -np.concatenate([g, [r_arc]]))
            x = x + dx[:-1]
            lam = lam + dx[-1]
        raise StepFailure(f"corrector stalled at {hist[-1]:.2e}")

    def tangent(self, x, lam, th, tl):
        _, K, gl = self.parts(x, lam)
        rhs = np.zeros(len(x) + 1)
        rhs[-1] = 1.0
        tt = spla.spsolve(self.jacobian(K, gl, th, tl), rhs)
        n = math.sqrt(self.norm2(tt[:-1], tt[-1]))
        return tt[:-1] / n, float(tt[-1] / n)


def _point(hf: HeightField, arc: float, res: float, th, tl, hist) -> BranchPoint:
    return BranchPoint(hf=hf, amplitude=hf.amplitude, arclength=arc, newton_residual=res,
                       tangent_h=np.asarray(th), tangent_lam=float(tl), newton_history=tuple(hist))


def continue_branch(stream: UniformStream, dc: DispersionCurve, nq: int, np_: int,
                    n_steps: int, step: float | None = None, t_max: float | None = None,
                    stop=None, log=None) -> Branch:
    """Trace the branch from the uniform stream with pseudo-arclength steps.

    ``step`` is in t units (arclength / Lambda0); default 1/200.  ``stop``
    is an optional predicate on the newest HeightField ending the run.
    """
    step = 1.0 / 200.0 if step is None else step
    grid, lam_c = branch_grid(stream, dc, nq, np_)
    mode = initial_tangent(stream, dc.tau_star, grid)
    cor = _Corrector(grid, stream.R, stream.vm)
    hf0 = uniform_height(stream, grid, 1.0)
    x = hf0.h.ravel()[cor.free].copy()
    lam = 1.0
    th = mode.vector.ravel()[cor.free]
    th = th / math.sqrt(cor.norm2(th, 0.0))
    tl = 0.0
    pts = [_point(hf0, 0.0, residual_norm(hf0), th, tl, [residual_norm(hf0)])]
    arc = 0.0
    L0 = dc.Lambda0
    for k in range(n_steps):
        ds = step * L0
        for attempt in range(MAX_HALVINGS + 1):
            try:
                xn, ln, hist = cor.correct(x, lam, th, tl, ds)
                break
            except (StepFailure, DegenerateHp) as exc:
                if attempt == MAX_HALVINGS:
                    raise StepFailure(f"step {k}: {exc}", stage="continuation") from exc
                ds *= 0.5
        arc += math.sqrt(cor.norm2(xn - x, ln - lam))
        thn, tln = cor.tangent(xn, ln, th, tl)
        if float(thn @ (cor.ML @ th)) + tln * tl < 0.0:
            thn, tln = -thn, -tln
        x, lam, th, tl = xn, ln, thn, tln
        hf = HeightField(grid=grid, h=cor.full(x), lam=lam, R=stream.R, vm=stream.vm, t_label=arc / L0)
        pts.append(_point(hf, arc, hist[-1], th, tl, hist))
        if log is not None:
            log(f"step {k + 1}: t={arc / L0:.5f} amp={hf.amplitude:.5f} lam={lam:.8f} it={len(hist) - 1}")
        if t_max is not None and arc / L0 >= t_max:
            break
        if stop is not None and stop(hf):
            break
    return Branch(points=pts, stream=stream, tau_star=dc.tau_star, Lambda0=L0, lam_c=lam_c, step=step)


def resolve_at(branch: Branch, t: float) -> BranchPoint:
    """Re-solve the branch at parameter t from the nearest stored point below."""
    base = branch.nearest_below(t)
    hf = base.hf
    if abs(t - base.t) < 1e-15:
        return base
    cor = _Corrector(hf.grid, hf.R, hf.vm)
    x0 = hf.h.ravel()[cor.free]
    ds = (t - base.t) * branch.Lambda0
    x, lam, hist = cor.correct(x0, hf.lam, base.tangent_h, base.tangent_lam, ds)
    # distance along the chord approximates arclength to O(ds^3)
    arc = base.arclength + math.sqrt(cor.norm2(x - x0, lam - hf.lam))
    th, tl = cor.tangent(x, lam, base.tangent_h, base.tangent_lam)
    if float(th @ (cor.ML @ base.tangent_h)) + tl * base.tangent_lam < 0.0:
        th, tl = -th, -tl
    new = HeightField(grid=hf.grid, h=cor.full(x), lam=lam, R=hf.R, vm=hf.vm, t_label=t)
    return _point(new, arc, hist[-1], th, tl, hist)


def point_monitors(hf: HeightField, Lambda0: float) -> dict:
    g = hf.grid
    s = hf.h[:, -1]
    slope = float(np.max(np.abs(np.diff(s))) / g.dq * hf.lam)
    hp0 = (-3 * hf.h[:, 0] + 4 * hf.h[:, 1] - hf.h[:, 2]) / (2 * g.dp)
    Lt = Lambda0 / hf.lam
    return {"t": hf.t_label, "max_slope": slope, "min_R_minus_Xi": float(np.min(hf.R - s)),
            "min_bottom_velocity": float(np.min(1.0 / hp0)), "Lambda_t": float(Lt),
            "Lambda_lower_bound_ok": bool(Lt >= 0.5 * Lambda0)}


def branch_monitors(branch: Branch) -> list[dict]:
    return [point_monitors(p.hf, branch.Lambda0) for p in branch.points]


# ----------------------------------------------------------------------------
# persistence


def save_branch(branch: Branch, directory: str | Path) -> Path:
    d = Path(directory)
    try:
        d.mkdir(parents=True, exist_ok=True)
        entries = []
        for k, p in enumerate(branch.points):
            stem = d / f"point_{k:04d}"
            save_heightfield(p.hf, stem, extra={"arclength_hex": float(p.arclength).hex(),
                                                "newton_residual": p.newton_residual,
                                                "tangent_lam_hex": float(p.tangent_lam).hex()})
            np.save(d / f"tangent_{k:04d}.npy", np.asarray(p.tangent_h, dtype="<f8"))
            entries.append({"file": stem.name, "t_label": p.t, "amplitude": p.amplitude,
                            "lambda": p.hf.lam, **point_monitors(p.hf, branch.Lambda0)})
        st = branch.stream
        manifest = {"tau_star_hex": float(branch.tau_star).hex(), "Lambda0_hex": float(branch.Lambda0).hex(),
                    "lam_c_hex": float(branch.lam_c).hex(), "step": branch.step,
                    "stream": {"s_hex": float(st.s).hex(), "R_hex": float(st.R).hex(),
                               "vorticity": st.vm.spec()},
                    "points": entries}
        (d / "manifest.json").write_text(json.dumps(manifest, indent=1))
    except OSError as exc:
        raise IoFailure(str(exc), stage="continuation") from exc
    return d / "manifest.json"


def load_branch(directory: str | Path) -> Branch:
    from .stream_core import solve_uniform_stream, vorticity_from_spec
    d = Path(directory)
    try:
        man = json.loads((d / "manifest.json").read_text())
    except (OSError, ValueError) as exc:
        raise IoFailure(str(exc), stage="continuation") from exc
    vm = vorticity_from_spec(man["stream"]["vorticity"])
    stream = solve_uniform_stream(vm, float.fromhex(man["stream"]["s_hex"]))
    pts = []
    for k, e in enumerate(man["points"]):
        hf = load_heightfield(d / (e["file"] + ".json"), vm=vm)
        hdr = json.loads((d / (e["file"] + ".json")).read_text())["extra"]
        th = np.load(d / f"tangent_{k:04d}.npy")
        pts.append(BranchPoint(hf=hf, amplitude=hf.amplitude, arclength=float.fromhex(hdr["arclength_hex"]),
                               newton_residual=hdr["newton_residual"], tangent_h=th,
                               tangent_lam=float.fromhex(hdr["tangent_lam_hex"])))
    return Branch(points=pts, stream=stream, tau_star=float.fromhex(man["tau_star_hex"]),
                  Lambda0=float.fromhex(man["Lambda0_hex"]), lam_c=float.fromhex(man["lam_c_hex"]),
                  step=man["step"])
