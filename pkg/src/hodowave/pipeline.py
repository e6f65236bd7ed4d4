"""End-to-end runs: configuration, the staged pipeline, report and export."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import platform
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .bifurcation import (PointCache, asymptotic_classify, branch_switch, detect_t0, morse_counts,
                          solve_tM, tau_roots)
from .continuation import branch_monitors, continue_branch, save_branch
from .dispersion import dispersion_curve, froude_check
from .errors import HodowaveError, IoFailure, ValidationError
from .hodograph_core import to_physical
from .spectra import bloch_curvature, family_spectrum, zero_band
from .stream_core import critical_data, solve_uniform_stream, vorticity_from_spec


@dataclass(frozen=True)
class RunConfig:
    vorticity: dict = field(default_factory=lambda: {"kind": "constant", "value": 0.0})
    R: float = 1.575
    nq: int = 33
    np: int = 17
    step: float = 0.001            # branch step in t = arclength / Lambda0
    n_steps: int = 40
    stop_on_stagnation: bool = True
    tau_samples: int = 16
    t_samples: int = 16
    window: tuple | None = None    # (t_lo, t_hi); default (t0, end of branch)
    M_min: int = 2
    M_max: int = 5
    spectra_every: int = 2
    switch_epsilon: float = 1e-2
    out: str = "hodowave_run"
    seed: int = 0

    def __post_init__(self):
        for name in ("R", "nq", "np", "step", "n_steps", "tau_samples", "t_samples", "M_min",
                     "M_max", "spectra_every", "switch_epsilon"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and v > 0):
                raise ValidationError(f"config field {name} must be positive, got {v!r}", stage="config")
        if self.nq < 8 or self.np < 8:
            raise ValidationError("grids need at least 8 nodes per direction", stage="config")
        if self.M_max < self.M_min:
            raise ValidationError("M_max < M_min", stage="config")

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValidationError(f"unknown config keys {sorted(unknown)}", stage="config")
        d = dict(d)
        if d.get("window") is not None:
            d["window"] = tuple(d["window"])
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        try:
            if path.suffix == ".toml":
                try:
                    import tomllib
                except ModuleNotFoundError:  # Python < 3.11
                    import tomli as tomllib
                d = tomllib.loads(path.read_text())
            else:
                d = json.loads(path.read_text())
        except (OSError, ValueError) as exc:
            raise ValidationError(f"cannot read config {path}: {exc}", stage="config") from exc
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["window"] is not None:
            d["window"] = list(d["window"])
        return d

    def canonical_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def clean(obj):
    """Convert numpy scalars/arrays and tuples to plain JSON types."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


@dataclass
class BifurcationReport:
    provenance: dict = field(default_factory=dict)
    stream: dict = field(default_factory=dict)
    dispersion: dict = field(default_factory=dict)
    branch: dict = field(default_factory=dict)
    monitors: list = field(default_factory=list)
    spectra: list = field(default_factory=list)
    bloch_curves: list = field(default_factory=list)
    t0: dict | None = None
    tau_roots: dict = field(default_factory=dict)
    subharmonic_points: list = field(default_factory=list)
    morse_counts: list = field(default_factory=list)
    curvature: dict | None = None
    branch_switch: dict | None = None
    asymptotics: dict | None = None
    errors: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(clean(asdict(self)), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "BifurcationReport":
        return cls(**json.loads(text))


def _record(report: BifurcationReport, stage: str, exc: Exception) -> None:
    report.errors.append({"stage": stage, "type": type(exc).__name__, "message": str(exc)})


def _log(verbose, msg):
    if verbose:
        print(msg, flush=True)


def _new_report(config: RunConfig) -> BifurcationReport:
    rep = BifurcationReport()
    rep.provenance = {"config": config.to_dict(), "config_hash": config.canonical_hash(),
                      "grid": {"nq": config.nq, "np": config.np},
                      "versions": {"hodowave": __version__, "numpy": np.__version__,
                                   "scipy": scipy.__version__, "python": platform.python_version()}}
    return rep


def _staged(stage: str, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except HodowaveError as exc:
        exc.stage = exc.stage or stage
        raise


def stream_stage(config: RunConfig):
    vm = _staged("stream", vorticity_from_spec, config.vorticity)
    cd = _staged("stream", critical_data, vm, config.R)
    stream = _staged("stream", solve_uniform_stream, vm, cd.s_plus)
    info = {"s": stream.s, "d": stream.d, "R": stream.R, "s_c": cd.s_c, "R_c": cd.R_c,
            "s_plus": cd.s_plus, "s_minus": cd.s_minus, "kappa": stream.kappa,
            "bernoulli_residual": stream.bernoulli_residual()}
    return stream, info


def dispersion_stage(stream, n_table: int = 41):
    dc = _staged("dispersion", dispersion_curve, stream)
    fr = _staged("dispersion", froude_check, stream)
    taus = np.linspace(0.0, 2.0 * dc.tau_star, n_table)
    info = {"tau_star": dc.tau_star, "Lambda0": dc.Lambda0, "sigma0": dc.sigma0, "rho0": dc.rho0,
            **fr, "table": dc.table(taus).tolist()}
    return dc, info


def branch_stage(config: RunConfig, stream, dc, out: Path | None, verbose: bool = False):
    stop = (lambda hf: float(np.min(hf.R - hf.h[:, -1])) <= 0.0) if config.stop_on_stagnation else None
    branch = _staged("continuation", continue_branch, stream, dc, config.nq, config.np, config.n_steps,
                     step=config.step, stop=stop, log=(lambda m: _log(verbose, m)))
    if out is not None:
        _staged("continuation", save_branch, branch, out / "branch")
    return branch


def run_pipeline(config: RunConfig, out: str | Path | None = None, verbose: bool = False,
                 state: dict | None = None) -> BifurcationReport:
    """stream -> dispersion -> continuation -> spectra -> bifurcation.

    Fatal errors of the first three stages propagate with their stage
    label; failures inside the spectral and bifurcation analysis are
    recorded in the report.  The branch is checkpointed in ``out``/branch.
    ``state`` (optional dict) receives the live objects for plotting.
    """
    out = Path(out or config.out)
    state = state if state is not None else {}
    rep = _new_report(config)
    stream, rep.stream = stream_stage(config)
    _log(verbose, f"stream: s={stream.s:.10g} d={stream.d:.10g}")
    dc, rep.dispersion = dispersion_stage(stream)
    _log(verbose, f"dispersion: tau*={dc.tau_star:.10g}")
    branch = branch_stage(config, stream, dc, out, verbose)
    state.update(stream=stream, dc=dc)
    analyse_branch(branch, config, rep, state, verbose)
    return rep


def analyse_branch(branch, config: RunConfig, rep: BifurcationReport, state: dict | None = None,
                   verbose: bool = False) -> BifurcationReport:
    """Spectral sweeps and the bifurcation stage on an existing branch."""
    state = state if state is not None else {}
    state["branch"] = branch
    mons = branch_monitors(branch)
    rep.monitors = mons
    valid = [p for p, m in zip(branch.points, mons) if m["min_R_minus_Xi"] > 0.0]
    t_end = valid[-1].t
    rep.branch = {"n_points": len(branch.points), "t_end": branch.points[-1].t, "t_valid_end": t_end,
                  "Lambda0": branch.Lambda0, "lam_c": branch.lam_c, "grid_L": branch.grid.L,
                  "grid": [branch.grid.nq, branch.grid.np],
                  "max_newton_residual": max(p.newton_residual for p in branch.points)}

    # spectra along the branch
    cache = PointCache(branch)
    ts_grid = np.linspace(0.0, 1.0, config.tau_samples + 1)
    for k, p in enumerate(branch.points):
        if k % config.spectra_every and k != len(branch.points) - 1:
            continue
        try:
            hf = p.hf
            mu = family_spectrum(hf, "half_even", 5).eigenvalues
            row = {"t": p.t, "mu": mu, "band": zero_band(hf, mu)}
            for fam in ("aux_0star", "aux_star0", "aux_00"):
                row[fam] = family_spectrum(hf, fam, 3).eigenvalues
            rep.spectra.append(row)
            tau_star = cache.full_forms(p.t).grid.tau_star
            vals = np.array([cache.mu_hat(p.t, x * tau_star) for x in ts_grid])
            rep.bloch_curves.append({"t": p.t, "tau_over_tau_star": ts_grid, "mu_hat": vals})
        except HodowaveError as exc:
            _record(rep, "spectra", exc)
    _log(verbose, f"spectra: {len(rep.spectra)} points")
    state["cache"] = cache

    # bifurcation analysis
    try:
        sb = detect_t0(branch, cache)
        rep.t0 = asdict(sb)
        _log(verbose, f"t0={sb.t0:.12g}")
    except HodowaveError as exc:
        _record(rep, "bifurcation.t0", exc)
        return rep
    lo, hi = config.window if config.window is not None else (sb.t0 + 1e-6, t_end)
    delta = 5.0 * (hi - lo) / max(config.t_samples - 1, 1)
    roots = None
    try:
        roots = tau_roots(branch, (lo, hi), n_t=config.t_samples, n_tau=config.tau_samples,
                          t0=sb.t0, cache=cache)
        rep.tau_roots = {"window": [lo, hi], "roots_before_t0": roots.roots_before_t0,
                         "curves": [{"j": c.j, "samples": c.samples, "slope_sign": c.slope_sign,
                                     "crossing_sign": c.crossing_sign, "crossing_order": c.crossing_order}
                                    for c in roots.curves],
                         "raw": [{"t": t, "roots": r} for t, r in roots.raw],
                         "min_mu_hat2": roots.min_tau_hat_negative}
    except HodowaveError as exc:
        _record(rep, "bifurcation.tau_roots", exc)
    if roots is not None:
        for M in range(config.M_min, config.M_max + 1):
            try:
                spt = solve_tM(branch, roots, M, delta, cache)
                rep.subharmonic_points.append(asdict(spt))
                _log(verbose, f"t_{M}={spt.t_M:.12g} crossing={spt.crossing_number}")
            except HodowaveError as exc:
                _record(rep, f"bifurcation.t_M[{M}]", exc)
    hf0 = cache.hf(sb.t0)
    for M in range(1, config.M_max + 1):
        try:
            rep.morse_counts.append(morse_counts(hf0, M))
        except HodowaveError as exc:
            _record(rep, f"bifurcation.morse[{M}]", exc)
    # curvature of the translation branch a little after t0
    tc = sb.t0 + 0.25 * (hi - sb.t0)
    try:
        cr = bloch_curvature(cache.hf(tc))
        rep.curvature = {"t": tc, **asdict(cr)}
    except HodowaveError as exc:
        _record(rep, "bifurcation.curvature", exc)
    # small-tau behaviour at t0
    try:
        tau_star = cache.full_forms(sb.t0).grid.tau_star
        small = np.geomspace(1e-3, 1e-2, 6) * tau_star
        mh = np.array([cache.mu_hat(sb.t0, x) for x in small])
        rep.asymptotics = asymptotic_classify(small, mh[:, 1], mh[:, 2])
    except HodowaveError as exc:
        _record(rep, "bifurcation.asymptotics", exc)
    # branch switching at the first validated subharmonic point
    for spt in rep.subharmonic_points:
        try:
            sw = branch_switch(cache.hf(spt["t_M"]), spt["M"], epsilon=config.switch_epsilon)
            rep.branch_switch = {"M": spt["M"], "t_M": spt["t_M"], "residual": sw.residual,
                                 "deviation": sw.deviation, "amplitude": sw.amplitude,
                                 "crest_heights": sw.crest_heights, "epsilon": sw.epsilon,
                                 "lambda": sw.hf.lam}
            state["switch"] = sw
            break
        except HodowaveError as exc:
            _record(rep, f"bifurcation.switch[{spt['M']}]", exc)
    state["report"] = rep
    return rep


# ----------------------------------------------------------------------------
# export

SCHEMAS = {
    "dispersion.csv": ["tau", "sigma"],
    "monitors.csv": ["t", "max_slope", "min_R_minus_Xi", "min_bottom_velocity", "Lambda_t"],
    "spectra.csv": ["t", "family", "j", "eigenvalue"],
    "bloch_curves.csv": ["t", "tau_over_tau_star", "j", "mu_hat"],
    "tau_roots.csv": ["curve", "t", "tau_hat"],
    "subharmonic.csv": ["M", "t_M", "crossing_number", "kernel_eigenvalue", "kernel_trivial_off"],
    "morse.csv": ["M", "n0_direct", "n_direct", "n0_pairing", "n_pairing"],
}


def _rows(report: BifurcationReport) -> dict:
    r = {k: [] for k in SCHEMAS}
    r["dispersion.csv"] = [list(x) for x in report.dispersion.get("table", [])]
    r["monitors.csv"] = [[m[k] for k in SCHEMAS["monitors.csv"]] for m in report.monitors]
    for row in report.spectra:
        for fam in ("mu", "aux_0star", "aux_star0", "aux_00"):
            for j, v in enumerate(row[fam]):
                r["spectra.csv"].append([row["t"], "half_even" if fam == "mu" else fam, j, v])
    for bc in report.bloch_curves:
        for x, vals in zip(bc["tau_over_tau_star"], bc["mu_hat"]):
            for j, v in enumerate(vals):
                r["bloch_curves.csv"].append([bc["t"], x, j, v])
    for c in report.tau_roots.get("curves", []):
        for t, tau in c["samples"]:
            r["tau_roots.csv"].append([c["j"], t, tau])
    for p in report.subharmonic_points:
        r["subharmonic.csv"].append([p[k] for k in SCHEMAS["subharmonic.csv"]])
    for m in report.morse_counts:
        r["morse.csv"].append([m["M"], m["direct"]["n0"], m["direct"]["n"], m["pairing"]["n0"],
                               m["pairing"]["n"]])
    return r


def export(report: BifurcationReport, out: str | Path, fmt: str = "both") -> list[Path]:
    """Write report.json and/or the fixed-schema CSV tables into ``out``."""
    out = Path(out)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        if fmt in ("json", "both"):
            p = out / "report.json"
            p.write_text(report.to_json())
            written.append(p)
        if fmt in ("csv", "both"):
            for name, rows in _rows(report).items():
                p = out / name
                with p.open("w", newline="") as fh:
                    w = csv.writer(fh)
                    w.writerow(SCHEMAS[name])
                    for row in rows:
                        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x
                                    for x in clean(row)])
                written.append(p)
    except OSError as exc:
        raise IoFailure(str(exc), stage="export") from exc
    return written


def render_figures(report: BifurcationReport, state: dict, out: str | Path) -> list[Path]:
    from . import plotting
    out = Path(out)
    figs = []
    d = report.dispersion
    figs.append(plotting.plot_dispersion(np.array(d["table"]), d["tau_star"], out / "dispersion.png"))
    t0 = report.t0["t0"] if report.t0 else None
    sp_t = [r["t"] for r in report.spectra]
    mu = [r["mu"][:3] for r in report.spectra]
    branch = state.get("branch")
    if branch is not None:
        amp_at = {p.t: p.amplitude for p in branch.points}
        lam_at = {p.t: p.hf.lam for p in branch.points}
        figs.append(plotting.plot_branch(sp_t, [amp_at[t] for t in sp_t], [lam_at[t] for t in sp_t],
                                         mu, t0, out / "branch.png"))
        picks = branch.points[:: max(1, len(branch.points) // 5)]
        profiles = []
        for p in picks:
            ph = to_physical(p.hf)
            profiles.append((f"t={p.t:.4f}", ph["X"], ph["Xi"]))
        sw = state.get("switch")
        if sw is not None:
            profiles.append((f"switched M={report.branch_switch['M']}", sw.hf.grid.q / sw.hf.lam,
                             sw.hf.h[:, -1]))
        figs.append(plotting.plot_profiles(profiles, out / "profiles.png"))
    curves = [(bc["t"], np.array(bc["tau_over_tau_star"]), np.array(bc["mu_hat"]))
              for bc in report.bloch_curves[:: max(1, len(report.bloch_curves) // 6)]]
    if curves:
        figs.append(plotting.plot_bloch(curves, out / "bloch.png"))
    figs.append(plotting.plot_subharmonic(report.subharmonic_points, t0, out / "subharmonic.png"))
    figs.append(plotting.plot_monitors(report.monitors, out / "monitors.png"))
    return figs
