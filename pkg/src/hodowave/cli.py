"""Command-line front end: ``hodowave <subcommand> [options]``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .errors import HodowaveError, ValidationError


def _range(text: str, cast=int) -> tuple:
    try:
        a, b = text.split("..")
        return cast(a), cast(b)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a..b, got {text!r}") from exc


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])


def _config(args):
    from .pipeline import RunConfig
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    over = {}
    for key in ("R", "nq", "np", "step", "n_steps"):
        v = getattr(args, key, None)
        if v is not None:
            over[key] = v
    if getattr(args, "vorticity", None):
        try:
            over["vorticity"] = json.loads(args.vorticity)
        except ValueError as exc:
            raise ValidationError(f"--vorticity must be JSON: {exc}", stage="config") from exc
    if getattr(args, "M_range", None):
        over["M_min"], over["M_max"] = args.M_range
    if getattr(args, "window", None):
        over["window"] = args.window
    if args.out:
        over["out"] = args.out
    cfg = dataclasses.replace(cfg, **over) if over else cfg
    if args.verbose:
        print(f"config hash {cfg.canonical_hash()}", file=sys.stderr)
    return cfg


def cmd_stream(args) -> None:
    from .pipeline import clean, stream_stage
    from .stream_core import stream_table
    cfg = _config(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    stream, info = stream_stage(cfg)
    (out / "stream.json").write_text(json.dumps(clean(info), indent=1, sort_keys=True))
    y, U = stream_table(stream, 201)
    _write_csv(out / "stream.csv", ["y", "U"], zip(y, U))
    print(json.dumps(clean(info), sort_keys=True))


def cmd_dispersion(args) -> None:
    from .pipeline import clean, dispersion_stage, stream_stage
    cfg = _config(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    stream, _ = stream_stage(cfg)
    _, info = dispersion_stage(stream, n_table=args.samples)
    _write_csv(out / "dispersion.csv", ["tau", "sigma"], info["table"])
    summary = {"tau_star": info["tau_star"], "Lambda0": info["Lambda0"], "sigma0": info["sigma0"]}
    (out / "dispersion.json").write_text(json.dumps(clean(summary), indent=1, sort_keys=True))
    print(json.dumps(clean(summary), sort_keys=True))


def cmd_branch(args) -> None:
    from .continuation import branch_monitors
    from .pipeline import SCHEMAS, branch_stage, dispersion_stage, stream_stage
    cfg = _config(args)
    out = Path(cfg.out)
    stream, _ = stream_stage(cfg)
    dc, _ = dispersion_stage(stream)
    branch = branch_stage(cfg, stream, dc, out, args.verbose)
    cols = SCHEMAS["monitors.csv"]
    _write_csv(out / "monitors.csv", cols, ([m[c] for c in cols] for m in branch_monitors(branch)))
    print(f"{len(branch.points)} points, t_end={branch.points[-1].t:.6g}, saved to {out / 'branch'}")


def cmd_spectrum(args) -> None:
    from .hodograph_core import load_heightfield
    from .spectra import family_spectrum
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    hf = load_heightfield(args.point)
    tau = args.tau * hf.grid.tau_star
    res = family_spectrum(hf, args.family, args.count, tau=tau, M=args.M)
    name = f"spectrum_{args.family}"
    _write_csv(out / f"{name}.csv", ["index", "eigenvalue"], enumerate(res.eigenvalues))
    if args.vectors:
        np.save(out / f"{name}_vectors.npy", res.eigenvectors)
    for j, v in enumerate(res.eigenvalues):
        print(f"{j} {v!r}")


def cmd_bifurcate(args) -> None:
    from .continuation import load_branch
    from .pipeline import _new_report, analyse_branch, export
    cfg = _config(args)
    branch = load_branch(args.branch)
    cfg = dataclasses.replace(cfg, nq=branch.grid.nq, np=branch.grid.np)
    rep = _new_report(cfg)
    analyse_branch(branch, cfg, rep, verbose=args.verbose)
    export(rep, cfg.out)
    _print_summary(rep)


def cmd_report(args) -> None:
    from .pipeline import export, render_figures, run_pipeline
    cfg = _config(args)
    state = {}
    rep = run_pipeline(cfg, cfg.out, verbose=args.verbose, state=state)
    export(rep, cfg.out)
    if not args.no_figures:
        render_figures(rep, state, cfg.out)
    _print_summary(rep)


def _print_summary(rep) -> None:
    if rep.t0:
        print(f"t0 = {rep.t0['t0']!r}")
    for p in rep.subharmonic_points:
        print(f"M={p['M']} t_M={p['t_M']!r} crossing={p['crossing_number']}")
    for e in rep.errors:
        print(f"[{e['stage']}] {e['type']}: {e['message']}", file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration (JSON or TOML)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, default=1,
                        help="accepted for compatibility; computations are single-threaded")
    common.add_argument("--verbose", "-v", action="store_true")

    phys = argparse.ArgumentParser(add_help=False)
    phys.add_argument("--R", type=float, help="Bernoulli constant")
    phys.add_argument("--vorticity", help='JSON spec, e.g. \'{"kind": "constant", "value": 0}\'')

    grid = argparse.ArgumentParser(add_help=False)
    grid.add_argument("--nq", type=int)
    grid.add_argument("--np", type=int)
    grid.add_argument("--step", type=float, help="branch step in t")
    grid.add_argument("--n-steps", dest="n_steps", type=int)

    bif = argparse.ArgumentParser(add_help=False)
    bif.add_argument("--M-range", dest="M_range", type=_range, help="a..b")
    bif.add_argument("--window", type=lambda s: _range(s, float), help="t_lo..t_hi")

    p = argparse.ArgumentParser(prog="hodowave", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("stream", parents=[common, phys], help="uniform stream for R").set_defaults(fn=cmd_stream)
    sp = sub.add_parser("dispersion", parents=[common, phys], help="dispersion curve and tau_*")
    sp.add_argument("--samples", type=int, default=41)
    sp.set_defaults(fn=cmd_dispersion)
    sub.add_parser("branch", parents=[common, phys, grid], help="continue the Stokes branch").set_defaults(
        fn=cmd_branch)
    sp = sub.add_parser("spectrum", parents=[common], help="eigenvalues at a checkpoint")
    sp.add_argument("--point", required=True, help="height-field checkpoint (.json)")
    sp.add_argument("--family", default="half_even",
                    choices=["half_even", "aux_0star", "aux_star0", "aux_00", "neumann", "dirichlet",
                             "bloch", "subharmonic"])
    sp.add_argument("--tau", type=float, default=0.0, help="quasi-momentum as a fraction of tau_*")
    sp.add_argument("--M", type=int, default=1)
    sp.add_argument("--count", type=int, default=6)
    sp.add_argument("--vectors", action="store_true", help="also dump eigenvectors (.npy)")
    sp.set_defaults(fn=cmd_spectrum)
    sp = sub.add_parser("bifurcate", parents=[common, bif], help="bifurcation analysis of a saved branch")
    sp.add_argument("--branch", required=True, help="branch directory")
    sp.set_defaults(fn=cmd_bifurcate)
    sp = sub.add_parser("report", parents=[common, phys, grid, bif], help="full pipeline with tables and figures")
    sp.add_argument("--no-figures", action="store_true")
    sp.set_defaults(fn=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.fn(args)
    except HodowaveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
