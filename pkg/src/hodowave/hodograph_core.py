"""Partial-hodograph discretization.

The height function h(q, p) lives on a uniform (q, p) grid and is
approximated by bilinear finite elements.  The nonlinear problem is the
Euler-Lagrange system of the potential

    f(h; lam) = int int [ (1 + lam^2 h_q^2) / (2 h_p)
                          - (h - R) h_p - (Omega(p) - Omega(1)) h_p ] dq dp,

whose interior equation is the hodograph form of the vorticity equation
and whose natural boundary condition at p=1 is Bernoulli's law.  The
discrete residual is the exact gradient of the discrete potential, and
the Frechet derivative is its exact (symmetric) Hessian.

Node layout: node (i, j) has q-index i and p-index j, flat index i*np + j.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import interpolate

from .errors import DegenerateHp, IoFailure, NewtonDiverged, SolverSingular
from .stream_core import UniformStream, VorticityModel, vorticity_from_spec

HP_MIN = 1e-6
SYMMETRIES = ("half_even", "full_periodic", "full_phase", "subharmonic")

_G = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])


class Mesh:
    """Connectivity, Gauss data and a fixed CSR pattern for an nq x np grid."""

    def __init__(self, nq: int, np_: int, dq: float, dp: float):
        self.nq, self.np, self.dq, self.dp = nq, np_, dq, dp
        self.n = nq * np_
        i, j = np.meshgrid(np.arange(nq - 1), np.arange(np_ - 1), indexing="ij")
        i, j = i.ravel(), j.ravel()
        base = i * np_ + j
        self.conn = np.stack([base, base + np_, base + 1, base + np_ + 1], axis=1)
        self.elem_p = j * dp
        self.ne = len(base)
        self.gauss = []
        for xi in _G:
            for eta in _G:
                N = np.array([(1 - xi) * (1 - eta), xi * (1 - eta), (1 - xi) * eta, xi * eta])
                Nq = np.array([-(1 - eta), 1 - eta, -eta, eta]) / dq
                Np = np.array([-(1 - xi), -xi, 1 - xi, xi]) / dp
                self.gauss.append((0.25 * dq * dp, N, Nq, Np, eta))
        # outer products reused by every assembly
        self.outer = [
            dict(qq=np.outer(Nq, Nq), pp=np.outer(Np, Np), qp=np.outer(Nq, Np) + np.outer(Np, Nq),
                 nn=np.outer(N, N), np_=np.outer(N, Np) + np.outer(Np, N),
                 qa=np.outer(Nq, N) - np.outer(N, Nq), pa=np.outer(Np, N) - np.outer(N, Np))
            for (_, N, Nq, Np, _) in self.gauss
        ]
        rows = np.repeat(self.conn, 4, axis=1).ravel()
        cols = np.tile(self.conn, (1, 4)).ravel()
        pattern = sp.coo_matrix((np.arange(len(rows), dtype=float) + 1.0, (rows, cols)),
                                shape=(self.n, self.n)).tocsr()
        pattern.sum_duplicates()
        self.indptr, self.indices = pattern.indptr, pattern.indices
        # map each element entry to its slot in the CSR data array
        order = np.lexsort((cols, rows))
        slot = np.empty(len(rows), dtype=np.int64)
        r_sorted, c_sorted = rows[order], cols[order]
        key = r_sorted * self.n + c_sorted
        uniq, inv = np.unique(key, return_inverse=True)
        slot[order] = inv
        self.slot = slot
        self.nnz = len(uniq)
        self._gp_cache: dict = {}

    def csr(self, elem: np.ndarray, dtype=float) -> sp.csr_matrix:
        data = np.bincount(self.slot, weights=elem.real.ravel(), minlength=self.nnz).astype(dtype)
        if np.iscomplexobj(elem):
            data = data + 1j * np.bincount(self.slot, weights=elem.imag.ravel(), minlength=self.nnz)
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=(self.n, self.n))

    def vector(self, elem_vec: np.ndarray) -> np.ndarray:
        return np.bincount(self.conn.ravel(), weights=elem_vec.ravel(), minlength=self.n)

    def omega_terms(self, vm: VorticityModel) -> list[np.ndarray]:
        """Omega(p) - Omega(1) at every Gauss point (cached per model)."""
        key = id(vm)
        if key not in self._gp_cache:
            o1 = float(vm.Omega(1.0))
            vals = []
            for (_, _, _, _, eta) in self.gauss:
                p = self.elem_p + eta * self.dp
                vals.append(np.asarray(vm.Omega(p), dtype=float) * np.ones_like(p) - o1)
            self._gp_cache[key] = (vm, vals)
        return self._gp_cache[key][1]


@lru_cache(maxsize=64)
def get_mesh(nq: int, np_: int, dq: float, dp: float) -> Mesh:
    return Mesh(nq, np_, dq, dp)


@dataclass(frozen=True)
class Grid:
    """Uniform (q, p) grid.

    half_even covers [0, L/2]; full_periodic and full_phase cover
    [-L/2, L/2]; subharmonic covers [0, M L/2] with M = copies.
    """

    nq: int
    np: int
    L: float
    symmetry: str = "half_even"
    tau: float = 0.0
    copies: int = 1

    def __post_init__(self):
        if self.nq < 8 or self.np < 8:
            raise ValueError("grid needs nq, np >= 8")
        if self.symmetry not in SYMMETRIES:
            raise ValueError(f"unknown symmetry {self.symmetry}")

    @property
    def q0(self) -> float:
        return -0.5 * self.L if self.symmetry in ("full_periodic", "full_phase") else 0.0

    @property
    def length(self) -> float:
        if self.symmetry == "half_even":
            return 0.5 * self.L
        if self.symmetry == "subharmonic":
            return 0.5 * self.L * self.copies
        return self.L

    @property
    def dq(self) -> float:
        return self.length / (self.nq - 1)

    @property
    def dp(self) -> float:
        return 1.0 / (self.np - 1)

    @property
    def q(self) -> np.ndarray:
        return self.q0 + self.dq * np.arange(self.nq)

    @property
    def p(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.np)

    @property
    def tau_star(self) -> float:
        return 2.0 * np.pi / self.L

    @property
    def mesh(self) -> Mesh:
        return get_mesh(self.nq, self.np, self.dq, self.dp)

    def q_weights(self) -> np.ndarray:
        w = np.full(self.nq, self.dq)
        w[0] = w[-1] = 0.5 * self.dq
        return w


@dataclass(frozen=True)
class HeightField:
    """A discrete height function h[i, j] with scaling lam and Bernoulli R."""

    grid: Grid
    h: np.ndarray = field(repr=False)
    lam: float
    R: float
    vm: VorticityModel = field(repr=False)
    t_label: float = 0.0

    @property
    def surface(self) -> np.ndarray:
        return self.h[:, -1]

    @property
    def amplitude(self) -> float:
        return 0.5 * float(self.h[0, -1] - self.h[-1, -1])

    def with_h(self, h: np.ndarray, lam: float | None = None, t_label: float | None = None) -> "HeightField":
        return replace(self, h=h, lam=self.lam if lam is None else lam,
                       t_label=self.t_label if t_label is None else t_label)

    def min_hp(self) -> float:
        return float(np.min(np.diff(self.h, axis=1)) / self.grid.dp)


def uniform_height(stream: UniformStream, grid: Grid, lam: float = 1.0) -> HeightField:
    H = stream.H(grid.p)
    h = np.tile(H, (grid.nq, 1))
    h[:, 0] = 0.0
    return HeightField(grid=grid, h=h, lam=lam, R=stream.R, vm=stream.vm)


# ----------------------------------------------------------------------------
# assembly


@dataclass
class Assembly:
    energy: float
    grad: np.ndarray
    hess: sp.csr_matrix | None
    grad_lam: np.ndarray | None


def _check_hp(hp: np.ndarray) -> None:
    m = float(np.min(hp))
    if not np.isfinite(m) or m <= HP_MIN:
        raise DegenerateHp(f"min h_p = {m:.3e} at a quadrature point")


def assemble(grid: Grid, h: np.ndarray, lam: float, R: float, vm: VorticityModel,
             hessian: bool = True, lam_derivative: bool = False) -> Assembly:
    """Potential, gradient, Hessian and d(gradient)/d(lam) on the grid."""
    mesh = grid.mesh
    hv_nodes = np.asarray(h, dtype=float).ravel()
    he = hv_nodes[mesh.conn]
    om = mesh.omega_terms(vm)
    E = 0.0
    ge = np.zeros((mesh.ne, 4))
    gl = np.zeros((mesh.ne, 4)) if lam_derivative else None
    ke = np.zeros((mesh.ne, 4, 4)) if hessian else None
    l2 = lam * lam
    for k, (w, N, Nq, Np, _) in enumerate(mesh.gauss):
        hv, hq, hp = he @ N, he @ Nq, he @ Np
        _check_hp(hp)
        a = 1.0 + l2 * hq * hq
        E += w * float(np.sum(a / (2.0 * hp) - (hv - R) * hp - om[k] * hp))
        e_h = -hp
        e_q = l2 * hq / hp
        e_p = -a / (2.0 * hp * hp) - (hv - R) - om[k]
        ge += w * (e_h[:, None] * N + e_q[:, None] * Nq + e_p[:, None] * Np)
        if lam_derivative:
            gl += w * ((2.0 * lam * hq / hp)[:, None] * Nq + (-lam * hq * hq / hp ** 2)[:, None] * Np)
        if hessian:
            o = mesh.outer[k]
            ke += w * (
                (l2 / hp)[:, None, None] * o["qq"]
                + (-l2 * hq / hp ** 2)[:, None, None] * o["qp"]
                + (a / hp ** 3)[:, None, None] * o["pp"]
                - o["np_"][None]
            )
    grad = mesh.vector(ge)
    return Assembly(E, grad, mesh.csr(ke) if hessian else None,
                    mesh.vector(gl) if lam_derivative else None)


def potential(hf: HeightField) -> float:
    return assemble(hf.grid, hf.h, hf.lam, hf.R, hf.vm, hessian=False).energy


def mass_matrix(grid: Grid, h: np.ndarray, weight: str = "inv_hp") -> sp.csr_matrix:
    """Consistent mass with weight 1/h_p (the physical L2 product) or 1."""
    mesh = grid.mesh
    he = np.asarray(h, dtype=float).ravel()[mesh.conn]
    me = np.zeros((mesh.ne, 4, 4))
    for k, (w, N, Nq, Np, _) in enumerate(mesh.gauss):
        if weight == "inv_hp":
            hp = he @ Np
            _check_hp(hp)
            coef = 1.0 / hp
        else:
            coef = np.ones(mesh.ne)
        me += w * coef[:, None, None] * mesh.outer[k]["nn"][None]
    return mesh.csr(me)


def first_order_forms(grid: Grid, h: np.ndarray, lam: float) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Forms b and c of the gauge-shifted Hessian a + i k b + k^2 c.

    Replacing F_q by F_q + i k F in the second variation gives
    b(F, G) = int [ e_qq (F G_q - F_q G) + e_qp (F G_p - F_p G) ] (antisymmetric)
    c(F, G) = int e_qq F G,     with e_qq = lam^2/h_p, e_qp = -lam^2 h_q/h_p^2.
    """
    mesh = grid.mesh
    he = np.asarray(h, dtype=float).ravel()[mesh.conn]
    be = np.zeros((mesh.ne, 4, 4))
    ce = np.zeros((mesh.ne, 4, 4))
    l2 = lam * lam
    for k, (w, N, Nq, Np, _) in enumerate(mesh.gauss):
        hq, hp = he @ Nq, he @ Np
        _check_hp(hp)
        o = mesh.outer[k]
        eqq = l2 / hp
        eqp = -l2 * hq / hp ** 2
        # entry (r, c) is b(phi_c, phi_r): test function on the row
        be += w * (eqq[:, None, None] * o["qa"][None] + eqp[:, None, None] * o["pa"][None])
        ce += w * eqq[:, None, None] * o["nn"][None]
    return mesh.csr(be), mesh.csr(ce)


# ----------------------------------------------------------------------------
# residual and Frechet derivative


def node_areas(grid: Grid) -> np.ndarray:
    wp = np.full(grid.np, grid.dp)
    wp[0] = wp[-1] = 0.5 * grid.dp
    return np.outer(grid.q_weights(), wp)


def residual(hf: HeightField) -> tuple[np.ndarray, np.ndarray]:
    """(F, G): interior equation at nodes 0 < p < 1 and Bernoulli trace at p=1.

    F is the gradient row divided by the nodal area (a conservative
    second-order stencil of the interior equation); G is the surface row
    divided by the q-weight, i.e. the Bernoulli residual plus the half-cell
    interior contribution, which vanishes with the interior equation.
    """
    g = assemble(hf.grid, hf.h, hf.lam, hf.R, hf.vm, hessian=False).grad.reshape(hf.grid.nq, hf.grid.np)
    area = node_areas(hf.grid)
    F = g[:, 1:-1] / area[:, 1:-1]
    G = -g[:, -1] / hf.grid.q_weights()
    return F, G


def residual_norm(hf: HeightField) -> float:
    F, G = residual(hf)
    return float(max(np.max(np.abs(F)), np.max(np.abs(G))))


@dataclass(frozen=True)
class FrechetPair:
    """Hessian restricted to the free nodes (p > 0) and its surface rows."""

    A_matrix: sp.csr_matrix
    N_trace: sp.csr_matrix
    free: np.ndarray
    surface: np.ndarray
    g_lambda: np.ndarray


def free_nodes(grid: Grid) -> np.ndarray:
    idx = np.arange(grid.nq * grid.np).reshape(grid.nq, grid.np)
    return idx[:, 1:].ravel()


def assemble_frechet(hf: HeightField) -> FrechetPair:
    asm = assemble(hf.grid, hf.h, hf.lam, hf.R, hf.vm, hessian=True, lam_derivative=True)
    free = free_nodes(hf.grid)
    K = asm.hess[free][:, free].tocsr()
    idx = np.arange(hf.grid.nq * hf.grid.np).reshape(hf.grid.nq, hf.grid.np)
    surf = idx[:, -1]
    # surface rows scaled by the q-weights: the discrete trace N w - w
    N = sp.diags(1.0 / hf.grid.q_weights()) @ asm.hess[surf][:, free]
    return FrechetPair(A_matrix=K, N_trace=N.tocsr(), free=free, surface=surf,
                       g_lambda=asm.grad_lam[free])


def _split(grid: Grid):
    idx = np.arange(grid.nq * grid.np).reshape(grid.nq, grid.np)
    return idx[:, 1:-1].ravel(), idx[:, -1]


def dirichlet_solve(hf: HeightField, f: np.ndarray, g: np.ndarray, log: list | None = None) -> np.ndarray:
    """Solve A w = f (interior), w = g at p=1, w = 0 at p=0."""
    grid = hf.grid
    K = assemble(grid, hf.h, hf.lam, hf.R, hf.vm).hess
    I, S = _split(grid)
    area = node_areas(grid)[:, 1:-1].ravel()
    f = np.asarray(f, dtype=float).reshape(-1)
    g = np.asarray(g, dtype=float).reshape(-1)
    KII = K[I][:, I].tocsc()
    rhs = area * f - K[I][:, S] @ g
    try:
        lu = spla.splu(KII)
        wI = lu.solve(rhs)
    except RuntimeError as exc:
        raise SolverSingular(str(exc)) from exc
    res = np.linalg.norm(KII @ wI - rhs) / max(np.linalg.norm(rhs), 1e-300)
    if not np.isfinite(res) or res > 1e-10:
        raise SolverSingular(f"Dirichlet solve residual {res:.2e}")
    w = np.zeros((grid.nq, grid.np))
    w[:, 1:-1] = wI.reshape(grid.nq, grid.np - 2)
    w[:, -1] = g
    if log is not None:
        data = np.linalg.norm(f, np.inf) + np.linalg.norm(g, np.inf)
        log.append({"norm_w": float(np.max(np.abs(w))), "norm_data": float(data),
                    "ratio": float(np.max(np.abs(w)) / data) if data > 0 else 0.0,
                    "relative_residual": float(res)})
    return w


def dn_matrix(hf: HeightField) -> np.ndarray:
    """Dense Dirichlet-Neumann map S g = (N w - w)|_{p=1} (Schur complement)."""
    grid = hf.grid
    K = assemble(grid, hf.h, hf.lam, hf.R, hf.vm).hess
    I, S = _split(grid)
    KII = spla.splu(K[I][:, I].tocsc())
    KIS = K[I][:, S].toarray()
    schur = K[S][:, S].toarray() - K[S][:, I] @ KII.solve(KIS)
    return schur / grid.q_weights()[:, None]


def dn_operator(hf: HeightField, g: np.ndarray) -> np.ndarray:
    grid = hf.grid
    w = dirichlet_solve(hf, np.zeros((grid.nq, grid.np - 2)), g)
    K = assemble(grid, hf.h, hf.lam, hf.R, hf.vm).hess
    _, S = _split(grid)
    return (K[S] @ w.ravel()) / grid.q_weights()


def nonlinear_dirichlet_solve(hf: HeightField, f: np.ndarray, g: np.ndarray,
                              delta: float = 1e-2, max_iter: int = 30,
                              tol: float = 1e-11) -> tuple[np.ndarray, dict]:
    """Find w with F(h+w) - F(h) = f inside, w = g at p=1, w = 0 at p=0."""
    grid = hf.grid
    I, S = _split(grid)
    area = node_areas(grid)[:, 1:-1].ravel()
    f = np.asarray(f, dtype=float).reshape(-1)
    g = np.asarray(g, dtype=float).reshape(-1)
    base = assemble(grid, hf.h, hf.lam, hf.R, hf.vm, hessian=False).grad[I]
    size = float(np.max(np.abs(f), initial=0.0) + np.max(np.abs(g), initial=0.0))
    w = np.zeros(grid.nq * grid.np)
    w[S] = g
    history = []
    for it in range(max_iter):
        try:
            asm = assemble(grid, hf.h + w.reshape(grid.nq, grid.np), hf.lam, hf.R, hf.vm)
        except DegenerateHp as exc:
            raise NewtonDiverged(f"h_p degenerated at iteration {it}") from exc
        r = (asm.grad[I] - base) / area - f
        rn = float(np.max(np.abs(r)))
        history.append(rn)
        if not np.isfinite(rn) or (it > 3 and rn > 10 * history[0]):
            raise NewtonDiverged(f"residual grew to {rn:.2e}")
        if rn < tol:
            break
        dw = spla.spsolve(asm.hess[I][:, I].tocsc(), -r * area)
        w[I] += dw
    else:
        raise NewtonDiverged(f"no convergence in {max_iter} iterations (last {history[-1]:.2e})")
    info = {"iterations": len(history) - 1, "history": history, "data_size": size,
            "delta": delta, "within_delta": size <= delta,
            "norm_w": float(np.max(np.abs(w)))}
    return w.reshape(grid.nq, grid.np), info


# ----------------------------------------------------------------------------
# even / periodic extensions


def column_map(grid_from: Grid, target: Grid) -> np.ndarray:
    """Index of the half-period column feeding each column of ``target``."""
    n = grid_from.nq - 1
    if target.symmetry in ("full_periodic", "full_phase"):
        k = np.arange(target.nq) - n
    else:
        k = np.arange(target.nq)
    r = np.mod(k, 2 * n)
    return np.where(r <= n, r, 2 * n - r)


def extend(hf: HeightField, symmetry: str, copies: int = 1, tau: float = 0.0) -> HeightField:
    """Map a half-period field to a full-period or M-period grid."""
    g = hf.grid
    if g.symmetry != "half_even":
        raise ValueError("extend expects a half_even field")
    if symmetry in ("full_periodic", "full_phase"):
        nq = 2 * (g.nq - 1) + 1
        tgt = Grid(nq, g.np, g.L, symmetry, tau)
    elif symmetry == "subharmonic":
        nq = copies * (g.nq - 1) + 1
        tgt = Grid(nq, g.np, g.L, "subharmonic", 0.0, copies)
    elif symmetry == "half_even":
        return hf
    else:
        raise ValueError(symmetry)
    return HeightField(grid=tgt, h=hf.h[column_map(g, tgt)], lam=hf.lam, R=hf.R,
                       vm=hf.vm, t_label=hf.t_label)


# ----------------------------------------------------------------------------
# physical variables


def _surface_derivatives(hf: HeightField) -> tuple[np.ndarray, np.ndarray]:
    g = hf.grid
    s = hf.h[:, -1]
    if g.symmetry in ("half_even", "subharmonic"):
        ext = np.concatenate([[s[1]], s, [s[-2]]])
    else:
        ext = np.concatenate([[s[-2]], s, [s[1]]])
    hq = (ext[2:] - ext[:-2]) / (2 * g.dq)
    hp = (3 * hf.h[:, -1] - 4 * hf.h[:, -2] + hf.h[:, -3]) / (2 * g.dp)
    return hq, hp


def bernoulli_pointwise(hf: HeightField) -> np.ndarray:
    """(1 + lam^2 h_q^2) / (2 h_p^2) + h - R at p=1 from finite differences."""
    hq, hp = _surface_derivatives(hf)
    return (1 + hf.lam ** 2 * hq ** 2) / (2 * hp ** 2) + hf.h[:, -1] - hf.R


def to_physical(hf: HeightField, ny: int = 64) -> dict:
    """Surface profile Xi(X) and stream function samples Psi(X, y)."""
    if hf.min_hp() <= HP_MIN:
        raise DegenerateHp(f"min h_p = {hf.min_hp():.3e}")
    g = hf.grid
    X = g.q / hf.lam
    Xi = hf.h[:, -1].copy()
    ymax = float(np.max(Xi))
    y = np.linspace(0.0, ymax, ny)
    psi = np.full((g.nq, ny), np.nan)
    for i in range(g.nq):
        inv = interpolate.PchipInterpolator(hf.h[i], g.p)
        mask = y <= Xi[i]
        psi[i, mask] = inv(y[mask])
    _, G = residual(hf)
    return {"X": X, "Xi": Xi, "y": y, "Psi": psi,
            "bernoulli_discrete": float(np.max(np.abs(G))),
            "bernoulli_pointwise": float(np.max(np.abs(bernoulli_pointwise(hf))))}


# ----------------------------------------------------------------------------
# checkpoints


def save_heightfield(hf: HeightField, stem: str | Path, extra: dict | None = None) -> Path:
    """Write ``stem.json`` (header) and ``stem.npy`` (node array, bit exact)."""
    stem = Path(stem)
    g = hf.grid
    header = {"nq": g.nq, "np": g.np, "L": float(g.L), "lambda": float(hf.lam), "R": float(hf.R),
              "t_label": float(hf.t_label), "symmetry": g.symmetry, "tau": float(g.tau),
              "copies": g.copies, "vorticity": hf.vm.spec(),
              "L_hex": float(g.L).hex(), "lambda_hex": float(hf.lam).hex(),
              "R_hex": float(hf.R).hex(), "t_label_hex": float(hf.t_label).hex(),
              "array": stem.name + ".npy"}
    if extra:
        header["extra"] = extra
    try:
        stem.parent.mkdir(parents=True, exist_ok=True)
        np.save(stem.with_suffix(".npy"), np.ascontiguousarray(hf.h, dtype="<f8"), allow_pickle=False)
        stem.with_suffix(".json").write_text(json.dumps(header, indent=1, sort_keys=True))
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return stem.with_suffix(".json")


def load_heightfield(path: str | Path, vm: VorticityModel | None = None) -> HeightField:
    path = Path(path)
    stem = path.with_suffix("")
    try:
        header = json.loads(stem.with_suffix(".json").read_text())
        h = np.load(stem.with_suffix(".npy"), allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise IoFailure(str(exc)) from exc
    grid = Grid(header["nq"], header["np"], float.fromhex(header["L_hex"]), header["symmetry"],
                header.get("tau", 0.0), header.get("copies", 1))
    if vm is None:
        vm = vorticity_from_spec(header["vorticity"])
    return HeightField(grid=grid, h=h, lam=float.fromhex(header["lambda_hex"]),
                       R=float.fromhex(header["R_hex"]), vm=vm,
                       t_label=float.fromhex(header["t_label_hex"]))
