"""Eigenvalue families of the Frechet derivative.

Every family is the generalized problem K F = mu M F, where K is the
Hessian of the discrete potential and M the mass with weight 1/h_p; with
F = h_p u this is the physical L2 product, so mu does not depend on the
scaling lam.  Families differ only in the admissible node set:

  half_even   [0, L/2], ends free              mu_j
  aux_0star   [0, L/2], Dirichlet at q=0       nu^{0*}_j
  aux_star0   [0, L/2], Dirichlet at q=L/2     nu^{*0}_j
  aux_00      [0, L/2], Dirichlet at both ends nu^{00}_j
  neumann     [-L/2, L/2], ends free           mu_{Nj}
  dirichlet   [-L/2, L/2], ends fixed          mu_{Dj}
  bloch       [-L/2, L/2], F(L/2) = e^{i tau L} F(-L/2)
  subharmonic [0, M L/2], ends free            mu^{(M)}_j

tau is measured in q units, tau_* = 2 pi / L.  The bottom row p=0 is
always Dirichlet.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import linalg, ndimage

from .errors import AmbiguousSign, EigensolverFailure, KernelNotSimple
from .hodograph_core import Grid, HeightField, assemble, extend, first_order_forms, mass_matrix

FAMILIES = ("half_even", "aux_0star", "aux_star0", "aux_00", "neumann", "dirichlet",
            "bloch", "subharmonic")
HALF_FAMILIES = {"half_even": (), "aux_0star": ("first",), "aux_star0": ("last",),
                 "aux_00": ("first", "last")}
DENSE_LIMIT = 600
RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class FormTriple:
    """Forms on a grid, unreduced: a (Hessian), b, c (gauge terms) and mass.

    For quasi-momentum kappa the gauge-shifted Hessian is a + i kappa b +
    kappa^2 c; a and c are symmetric, b is antisymmetric.
    """

    hf: HeightField
    a: sp.csr_matrix = field(repr=False)
    b: sp.csr_matrix = field(repr=False)
    c: sp.csr_matrix = field(repr=False)
    mass: sp.csr_matrix = field(repr=False)

    @property
    def grid(self) -> Grid:
        return self.hf.grid


@dataclass(frozen=True)
class SpectrumResult:
    family: str
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray = field(repr=False)  # shape (count, nq, np)
    residual: float
    grid: Grid
    tau: float = 0.0
    M: int = 1

    def __len__(self) -> int:
        return len(self.eigenvalues)


def assemble_forms(hf: HeightField, symmetry: str = "half_even", copies: int = 1) -> FormTriple:
    """Forms on the half period, the full period or the M-period half grid."""
    if symmetry in ("full_periodic", "full_phase", "full"):
        hf = extend(hf, "full_periodic")
    elif symmetry == "subharmonic":
        hf = extend(hf, "subharmonic", copies=copies)
    elif symmetry != "half_even":
        raise ValueError(symmetry)
    return forms_on(hf)


def forms_on(hf: HeightField) -> FormTriple:
    """Forms on the grid of ``hf`` as given (no extension)."""
    g = hf.grid
    a = assemble(g, hf.h, hf.lam, hf.R, hf.vm).hess
    b, c = first_order_forms(g, hf.h, hf.lam)
    return FormTriple(hf=hf, a=a, b=b, c=c, mass=mass_matrix(g, hf.h))


def restriction(grid: Grid, fixed_columns=(), theta: float | None = None) -> sp.csr_matrix:
    """Map from reduced unknowns to all nodes.

    Rows p=0 and the listed columns are removed.  With ``theta`` the last
    column is slaved to the first by the factor e^{i theta}.
    """
    nq, np_ = grid.nq, grid.np
    cols = [i for i in range(nq) if i not in fixed_columns]
    if theta is not None:
        cols = [i for i in cols if i != nq - 1]
    index = {i: k for k, i in enumerate(cols)}
    rows, red, vals = [], [], []
    phase = 1.0 if theta is None else complex(math.cos(theta), math.sin(theta))
    for i in range(nq):
        if i in index:
            src, fac = index[i], 1.0
        elif theta is not None and i == nq - 1 and 0 in index:
            src, fac = index[0], phase
        else:
            continue
        for j in range(1, np_):
            rows.append(i * np_ + j)
            red.append(src * (np_ - 1) + j - 1)
            vals.append(fac)
    vals = np.asarray(vals, dtype=complex)
    if theta is None or theta == 0.0:
        vals = vals.real
    P = sp.csr_matrix((vals, (rows, red)),
                      shape=(nq * np_, len(cols) * (np_ - 1)))
    return P


def _fixed_for(family: str, grid: Grid) -> tuple:
    last = grid.nq - 1
    spec = {"half_even": (), "aux_0star": (0,), "aux_star0": (last,), "aux_00": (0, last),
            "neumann": (), "dirichlet": (0, last), "subharmonic": ()}
    return spec[family]


# ----------------------------------------------------------------------------
# generalized Hermitian eigensolver


def inertia_below(K: sp.spmatrix, M: sp.spmatrix, sigma: float) -> int:
    """Number of eigenvalues of (K, M) below sigma (Sylvester inertia)."""
    A = (K - sigma * M).tocsc()
    if A.shape[0] <= DENSE_LIMIT:
        return int(np.sum(linalg.eigvalsh(A.toarray()) < 0.0))
    try:
        lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options={"SymmetricMode": True})
    except RuntimeError:
        return int(np.sum(linalg.eigvalsh(A.toarray()) < 0.0))
    if not np.array_equal(lu.perm_r, lu.perm_c):
        return int(np.sum(linalg.eigvalsh(A.toarray()) < 0.0))
    return int(np.sum(lu.U.diagonal().real < 0.0))


def generalized_eigh(K: sp.spmatrix, M: sp.spmatrix, count: int) -> tuple[np.ndarray, np.ndarray, float]:
    """Lowest ``count`` eigenpairs of K v = mu M v, M-orthonormal."""
    n = K.shape[0]
    count = min(count, n)
    try:
        if n <= DENSE_LIMIT or count >= n - 1:
            w, v = linalg.eigh(K.toarray(), M.toarray(), subset_by_index=[0, count - 1])
        else:
            sigma = -1.0
            while inertia_below(K, M, sigma) > 0:
                sigma *= 2.0
                if sigma < -1e12:
                    raise EigensolverFailure("no lower bound for the spectrum")
            # fixed start vector keeps repeated runs bit-identical
            v0 = np.random.default_rng(20240611).standard_normal(n)
            if np.iscomplexobj(K.data):
                v0 = v0 + 1j * np.random.default_rng(7).standard_normal(n)
            w, v = spla.eigsh(K.tocsc(), k=count, M=M.tocsc(), sigma=sigma, which="LM",
                              tol=1e-13, v0=v0)
            order = np.argsort(w)
            w, v = w[order], v[:, order]
            gram = v.conj().T @ (M @ v)
            v = v @ np.linalg.inv(np.linalg.cholesky(gram)).conj().T
    except (linalg.LinAlgError, spla.ArpackNoConvergence, RuntimeError) as exc:
        raise EigensolverFailure(str(exc)) from exc
    R = K @ v - (M @ v) * w
    scale = max(spla.norm(K, 1), 1.0)
    res = float(np.max(np.linalg.norm(R, axis=0)) / scale)
    if not np.isfinite(res) or res > RESIDUAL_TOL:
        raise EigensolverFailure(f"eigen-residual {res:.2e}")
    return np.asarray(w.real), v, res


def _fix_sign(vec: np.ndarray) -> np.ndarray:
    s = np.sum(vec[:, -1])
    if np.iscomplexobj(vec):
        if abs(s) > 1e-14 * np.max(np.abs(vec)):
            return vec * (abs(s) / s)
        k = np.argmax(np.abs(vec))
        return vec * (abs(vec.flat[k]) / vec.flat[k])
    return -vec if s < 0 else vec


def solve_reduced(ft: FormTriple, P: sp.spmatrix, count: int, kappa: float | None = None):
    K = ft.a if kappa is None else ft.a + 1j * kappa * ft.b + kappa * kappa * ft.c
    PH = P.conj().T.tocsr()
    Kr = (PH @ K @ P).tocsc()
    Mr = (PH @ ft.mass @ P).tocsc()
    # symmetrize round-off
    Kr = 0.5 * (Kr + Kr.conj().T)
    Mr = 0.5 * (Mr + Mr.conj().T)
    w, v, res = generalized_eigh(Kr, Mr, count)
    g = ft.grid
    vecs = np.array([_fix_sign(np.asarray(P @ v[:, k]).reshape(g.nq, g.np)) for k in range(len(w))])
    return w, vecs, res


def solve_family(ft: FormTriple, family: str, count: int = 6, tau: float = 0.0,
                 gauge: bool = False) -> SpectrumResult:
    """Lowest ``count`` eigenpairs of one family on the grid of ``ft``.

    Bloch problems use the nodal phase condition on the full grid (the
    Hermitian form P^H K P); ``gauge=True`` uses a + i tau b + tau^2 c with
    periodic nodes instead.
    """
    g = ft.grid
    if family == "bloch":
        if g.symmetry not in ("full_periodic", "full_phase"):
            raise ValueError("bloch family needs full-period forms")
        if gauge:
            P = restriction(g, theta=0.0)
            w, v, res = solve_reduced(ft, P, count, kappa=tau)
            # back to the nodal functions e^{i tau q} w
            v = v * np.exp(1j * tau * (g.q - g.q0))[None, :, None]
        else:
            P = restriction(g, theta=tau * g.L)
            w, v, res = solve_reduced(ft, P, count)
        return SpectrumResult("bloch", w, v, res, g, tau=tau)
    expected = {"half_even": "half_even", "aux_0star": "half_even", "aux_star0": "half_even",
                "aux_00": "half_even", "neumann": "full_periodic", "dirichlet": "full_periodic",
                "subharmonic": "subharmonic"}[family]
    if g.symmetry != expected:
        raise ValueError(f"family {family} needs {expected} forms, got {g.symmetry}")
    P = restriction(g, _fixed_for(family, g))
    w, v, res = solve_reduced(ft, P, count)
    return SpectrumResult(family, w, v, res, g, M=g.copies)


def family_spectrum(hf: HeightField, family: str, count: int = 6, tau: float = 0.0,
                    M: int = 1) -> SpectrumResult:
    """Convenience wrapper assembling the forms for ``family``."""
    if family in ("neumann", "dirichlet", "bloch"):
        ft = assemble_forms(hf, "full_periodic")
    elif family == "subharmonic":
        ft = assemble_forms(hf, "subharmonic", copies=M)
    else:
        ft = assemble_forms(hf, "half_even")
    return solve_family(ft, family, count, tau)


def zero_band(hf: HeightField, eigenvalues=None) -> float:
    """Tolerance for 'eigenvalue = 0': 10 * median|mu_0..4| * (dq^2 + dp^2)^2.

    The translation mode is an exact kernel only in the continuum; its
    discrete eigenvalue is O(grid^2) times a small coefficient, far below
    this band on desk grids.
    """
    if eigenvalues is None:
        eigenvalues = family_spectrum(hf, "half_even", 5).eigenvalues
    g = hf.grid
    h2 = (g.dq * hf.lam) ** 2 + g.dp ** 2
    return float(10.0 * np.median(np.abs(eigenvalues[:5])) * h2 * h2)


# ----------------------------------------------------------------------------
# quasi-momentum sweeps


@dataclass
class BlochCurves:
    tau_grid: np.ndarray
    curves: np.ndarray  # shape (len(tau_grid), J)
    t_label: float
    tau_star: float
    dropped: list = field(default_factory=list)
    symmetry_error: float = float("nan")
    endpoint_error: float = float("nan")


def bloch_sweep(hf: HeightField, tau_grid, count: int = 4, check: bool = True,
                ft: FormTriple | None = None) -> BlochCurves:
    """mu-hat_j(tau) on the sampled tau grid, plus symmetry and tau=0 checks.

    The symmetry tau <-> tau_* - tau is checked on every sample by solving
    the mirrored problem; at tau=0 the identities
    mu-hat_1 = min(mu_1, nu00_0), mu-hat_2 = min(max(mu_1, nu00_0), mu_2, nu00_1)
    are checked (nu00_0 is the discrete translation eigenvalue, zero in the
    continuum).
    """
    ft = ft or assemble_forms(hf, "full_periodic")
    tau_star = ft.grid.tau_star
    taus = np.asarray(tau_grid, dtype=float)
    curves = np.full((len(taus), count), np.nan)
    dropped = []
    sym = 0.0
    for k, tau in enumerate(taus):
        try:
            curves[k] = solve_family(ft, "bloch", count, tau).eigenvalues
            if check:
                mirror = solve_family(ft, "bloch", count, tau_star - tau).eigenvalues
                sym = max(sym, float(np.max(np.abs(mirror - curves[k]))))
        except EigensolverFailure as exc:
            dropped.append((float(tau), str(exc)))
    end = float("nan")
    if check and np.any(taus == 0.0):
        k0 = int(np.where(taus == 0.0)[0][0])
        mu = family_spectrum(hf, "half_even", 4).eigenvalues
        nu = family_spectrum(hf, "aux_00", 3).eigenvalues
        e1 = min(mu[1], nu[0])
        e2 = min(max(mu[1], nu[0]), mu[2], nu[1])
        end = float(max(abs(curves[k0, 1] - e1), abs(curves[k0, 2] - e2)))
    return BlochCurves(taus, curves, hf.t_label, tau_star, dropped, sym, end)


def mu_hat(hf_or_ft, tau: float, count: int = 4) -> np.ndarray:
    ft = hf_or_ft if isinstance(hf_or_ft, FormTriple) else assemble_forms(hf_or_ft, "full_periodic")
    return solve_family(ft, "bloch", count, tau).eigenvalues


# ----------------------------------------------------------------------------
# curvature of the translation branch


@dataclass(frozen=True)
class CurvatureResult:
    c_pert: float          # tau^2 coefficient, second-order perturbation
    c_fd: float            # same formulation, centered differences
    rel_error: float
    c_nodal_fd: float      # nodal phase formulation, differences
    c_other_sign: float    # value with the opposite sign on the resolvent term
    mu0: float
    index: int             # position of the branch at tau=0 (1 or 2)
    gap: float
    kappa_unit: str = "q"


def bloch_curvature(hf: HeightField, band: float | None = None, delta: float | None = None) -> CurvatureResult:
    """tau^2 coefficient of the eigenvalue branch through the translation mode.

    u0 is the odd eigenvector of the periodic problem nearest zero (the
    discrete psi_x); the coefficient is
        c = u0^T c u0 - v^T R v,   v = b u0,
    with R the reduced resolvent of (a - mu0 M) on the M-complement of u0.
    """
    ft = assemble_forms(hf, "full_periodic")
    g = ft.grid
    P = restriction(g, theta=0.0)
    PT = P.T.tocsr()
    A = (PT @ ft.a @ P).tocsc()
    B = (PT @ ft.b @ P).tocsc()
    C = (PT @ ft.c @ P).tocsc()
    Mm = (PT @ ft.mass @ P).tocsc()
    w, v, _ = generalized_eigh(0.5 * (A + A.T), 0.5 * (Mm + Mm.T), 6)
    if band is None:
        band = zero_band(hf)
    # odd modes (in q about 0) among the lowest pairs
    nf = g.nq
    mirror = np.arange(nf)[::-1]
    odd = []
    for k in range(len(w)):
        full = np.asarray(P @ v[:, k]).reshape(nf, g.np)
        odd.append(np.linalg.norm(full + full[mirror]) < 1e-6 * np.linalg.norm(full))
    cand = [k for k in range(len(w)) if odd[k]]
    if not cand:
        raise KernelNotSimple("no odd mode among the lowest eigenpairs")
    k0 = min(cand, key=lambda k: abs(w[k]))
    mu0 = float(w[k0])
    others = np.delete(w, k0)
    gap = float(np.min(np.abs(others - mu0)))
    if abs(mu0) > band or gap <= band:
        raise KernelNotSimple(f"translation eigenvalue {mu0:.3e}, gap {gap:.3e}, band {band:.3e}")
    u0 = np.real(v[:, k0])
    u0 = u0 / math.sqrt(u0 @ (Mm @ u0))
    vb = B @ u0
    Mu = Mm @ u0
    n = A.shape[0]
    Kb = sp.bmat([[A - mu0 * Mm, Mu[:, None]], [Mu[None, :], None]]).tocsc()
    x = spla.spsolve(Kb, np.concatenate([vb, [0.0]]))[:n]
    cu = float(u0 @ (C @ u0))
    rv = float(vb @ x)
    c_pert = cu - rv

    def branch(kappa, gauge=True):
        if gauge:
            K = (A + 1j * kappa * B + kappa * kappa * C).tocsc()
            ww, vv, _ = generalized_eigh(0.5 * (K + K.conj().T), Mm, 6)
        else:
            ww = solve_family(ft, "bloch", 6, kappa).eigenvalues
        return float(ww[np.argmin(np.abs(ww - mu0))])

    tau_star = g.tau_star
    d = delta if delta is not None else 2e-3 * tau_star

    def fd(gauge):
        m0 = mu0 if gauge else branch(0.0, gauge=False)
        f1 = (branch(d, gauge) - m0) / d ** 2
        f2 = (branch(0.5 * d, gauge) - m0) / (0.5 * d) ** 2
        return (4.0 * f2 - f1) / 3.0

    c_fd = fd(True)
    c_nodal = fd(False)
    index = int(np.sum(w < mu0))
    return CurvatureResult(c_pert=c_pert, c_fd=c_fd, rel_error=abs(c_pert - c_fd) / max(abs(c_fd), 1e-300),
                           c_nodal_fd=c_nodal, c_other_sign=cu + rv, mu0=mu0, index=index, gap=gap)


# ----------------------------------------------------------------------------
# subharmonic spectra


@dataclass(frozen=True)
class SubharmonicSpectrum:
    M: int
    direct: np.ndarray
    synthesis: np.ndarray
    sources: list            # (k, eigenvalue) pairs feeding the synthesis
    max_difference: float


def synthesis_eigenvalues(hf: HeightField, M: int, count: int, ft_full: FormTriple | None = None):
    """Even M-period eigenvalues from quasi-momentum samples tau_k = k tau_*/M.

    k = 0 contributes the half-period even spectrum, 0 < k < M/2 the full
    Bloch spectrum (each eigenvalue yields one even combination), and for
    even M, k = M/2 contributes the nu^{*0} family.
    """
    ft_full = ft_full or assemble_forms(hf, "full_periodic")
    tau_star = ft_full.grid.tau_star
    src = [(0, float(x)) for x in family_spectrum(hf, "half_even", count).eigenvalues]
    for k in range(1, (M + 1) // 2):
        if 2 * k == M:
            break
        ev = solve_family(ft_full, "bloch", count, k * tau_star / M).eigenvalues
        src += [(k, float(x)) for x in ev]
    if M % 2 == 0:
        src += [(M // 2, float(x)) for x in family_spectrum(hf, "aux_star0", count).eigenvalues]
    src.sort(key=lambda kv: kv[1])
    return np.array([x for _, x in src[:count]]), src[:count]


def subharmonic_spectrum(hf: HeightField, M: int, count: int = 8,
                         ft_full: FormTriple | None = None) -> SubharmonicSpectrum:
    if M < 1:
        raise ValueError("M must be at least 1")
    direct = family_spectrum(hf, "subharmonic", count, M=M).eigenvalues
    synth, src = synthesis_eigenvalues(hf, M, count, ft_full)
    n = min(len(direct), len(synth))
    return SubharmonicSpectrum(M, direct, synth, src, float(np.max(np.abs(direct[:n] - synth[:n]))))


def count_nonpositive(eigenvalues, band: float) -> tuple[int, int]:
    """(n0, n): eigenvalues below -band, and at most +band."""
    ev = np.asarray(eigenvalues)
    return int(np.sum(ev < -band)), int(np.sum(ev <= band))


# ----------------------------------------------------------------------------
# comparison of negative spectra


def weighted_count_check(hf: HeightField, a_weight=None, b_weight=None) -> dict:
    """Negative counts of the surface problem (N u - u = theta a u, A u = 0)
    and of the domain problem (A u = mu b u, N u - u = 0).

    a_weight(q) and b_weight(q, p) must be positive; default 1.  The
    surface problem is the Schur complement of the interior block.  The
    push-forward Gamma = F / h_p of the lowest domain eigenfunction is
    checked by recomputing its weighted mass in (x, y) variables.
    """
    g = hf.grid
    Q, Pp = np.meshgrid(g.q, g.p, indexing="ij")
    a = np.ones(g.nq) if a_weight is None else np.asarray(a_weight(g.q), dtype=float) * np.ones(g.nq)
    b = np.ones_like(Q) if b_weight is None else np.asarray(b_weight(Q, Pp), dtype=float) * np.ones_like(Q)
    if np.min(a) <= 0 or np.min(b) <= 0:
        raise ValueError("weights must be positive")
    K = assemble(g, hf.h, hf.lam, hf.R, hf.vm).hess
    idx = np.arange(g.nq * g.np).reshape(g.nq, g.np)
    I, S = idx[:, 1:-1].ravel(), idx[:, -1]
    KII = K[I][:, I].toarray()
    schur = K[S][:, S].toarray() - K[S][:, I].toarray() @ linalg.solve(KII, K[I][:, S].toarray(), assume_a="sym")
    theta = linalg.eigh(0.5 * (schur + schur.T), np.diag(a * g.q_weights()), eigvals_only=True)
    # domain problem: mass weight b / h_p (physical weighted L2)
    Mb = _weighted_mass(hf, b)
    free = idx[:, 1:].ravel()
    mu, vec = linalg.eigh(K[free][:, free].toarray(), Mb[free][:, free].toarray())
    F = np.zeros(g.nq * g.np)
    F[free] = vec[:, 0]
    F = F.reshape(g.nq, g.np)
    push = _pushforward_mass_error(hf, F, b)
    return {"neg_count_boundary": int(np.sum(theta < 0.0)), "neg_count_domain": int(np.sum(mu < 0.0)),
            "interior_positive": bool(linalg.eigvalsh(KII)[0] > 0.0),
            "lowest_theta": float(theta[0]), "lowest_mu": float(mu[0]), "mapped_residual": push}


def _weighted_mass(hf: HeightField, b: np.ndarray) -> sp.csr_matrix:
    g = hf.grid
    mesh = g.mesh
    he = hf.h.ravel()[mesh.conn]
    be = b.ravel()[mesh.conn]
    me = np.zeros((mesh.ne, 4, 4))
    for k, (wq, N, Nq, Np, _) in enumerate(mesh.gauss):
        me += wq * ((be @ N) / (he @ Np))[:, None, None] * mesh.outer[k]["nn"][None]
    return mesh.csr(me)


def _pushforward_mass_error(hf: HeightField, F: np.ndarray, b: np.ndarray) -> float:
    """Relative gap between int b F^2/h_p dq dp and int b Gamma^2 dx dy.

    Gamma = F / h_p is evaluated on the physical column y = h(q, p) with
    two-point Gauss rules in y on each cell; both sides use the same
    bilinear F, so the gap measures the change of variables only.
    """
    g = hf.grid
    Mb = _weighted_mass(hf, b)
    lhs = float(F.ravel() @ (Mb @ F.ravel()))
    mesh = g.mesh
    he = hf.h.ravel()[mesh.conn]
    Fe = F.ravel()[mesh.conn]
    be = b.ravel()[mesh.conn]
    rhs = 0.0
    for (wq, N, Nq, Np, eta) in mesh.gauss:
        hp = he @ Np
        gamma = (Fe @ N) / hp          # Gamma at the mapped point
        dy = hp * g.dp                 # physical cell height along the column
        # dx dy = dq (h_p dp); weight 1/psi_y = h_p enters the mass
        rhs += float(np.sum(wq / (g.dq * g.dp) * g.dq * dy * (be @ N) * gamma ** 2))
    return abs(lhs - rhs) / max(abs(lhs), 1e-300)


# ----------------------------------------------------------------------------
# nodal domains


def nodal_domains(vec: np.ndarray, rel_band: float = 1e-8) -> dict:
    """Count sign domains of a half-grid eigenvector (bottom row excluded)."""
    v = np.real(np.asarray(vec))[:, 1:]
    vmax = float(np.max(np.abs(v)))
    if vmax == 0.0:
        return {"count": 1, "surface_endpoint": False, "zero_fraction": 1.0}
    zero = np.abs(v) < rel_band * vmax
    frac = float(np.mean(zero))
    if frac > 0.2 and not np.all(np.abs(v - v.flat[0]) < rel_band * vmax):
        raise AmbiguousSign(f"{100 * frac:.0f}% of nodes in the zero band")
    if np.all(np.abs(v - v.flat[0]) < rel_band * vmax):
        return {"count": 1, "surface_endpoint": False, "zero_fraction": frac}
    n_pos = ndimage.label((v > 0) & ~zero)[1]
    n_neg = ndimage.label((v < 0) & ~zero)[1]
    tr = v[:, -1]
    tr = tr[np.abs(tr) >= rel_band * vmax]
    surface = bool(np.any(tr > 0) and np.any(tr < 0))
    return {"count": int(n_pos + n_neg), "surface_endpoint": surface, "zero_fraction": frac}
