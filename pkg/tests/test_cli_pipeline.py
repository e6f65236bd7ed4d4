import csv
import json

import pytest

from hodowave.cli import main
from hodowave.errors import IoFailure, NoWavesForR, ValidationError
from hodowave.pipeline import SCHEMAS, BifurcationReport, RunConfig, export, run_pipeline

SMALL = dict(nq=17, np=9, n_steps=30, tau_samples=4, t_samples=4, M_max=3, spectra_every=5)


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("small_run")
    rep = run_pipeline(RunConfig(**SMALL), out)
    export(rep, out)
    return rep, out


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_config_hash_and_roundtrip(tmp_path):
    a = RunConfig(**SMALL)
    b = RunConfig.from_dict(a.to_dict())
    assert a == b and a.canonical_hash() == b.canonical_hash()
    assert RunConfig(**{**SMALL, "R": 1.6}).canonical_hash() != a.canonical_hash()
    path = tmp_path / "c.toml"
    path.write_text("R = 1.575\nnq = 17\nnp = 9\nn_steps = 30\ntau_samples = 4\nt_samples = 4\n"
                    "M_max = 3\nspectra_every = 5\n\n[vorticity]\nkind = \"constant\"\nvalue = 0.0\n")
    assert RunConfig.load(path).canonical_hash() == a.canonical_hash()
    jpath = tmp_path / "c.json"
    jpath.write_text(json.dumps(a.to_dict()))
    assert RunConfig.load(jpath) == a


def test_config_validation():
    with pytest.raises(ValidationError):
        RunConfig(nq=1)
    with pytest.raises(ValidationError):
        RunConfig(step=-1e-3)
    with pytest.raises(ValidationError):
        RunConfig.from_dict({"R": 2.0, "bogus": 1})


def test_report_json_roundtrip(small_run):
    rep, _ = small_run
    text = rep.to_json()
    assert BifurcationReport.from_json(text).to_json() == text


def test_report_contents(small_run):
    rep, _ = small_run
    assert rep.provenance["config_hash"] == RunConfig(**SMALL).canonical_hash()
    assert rep.t0 is not None and rep.t0["pattern_ok"]
    assert rep.stream["s"] == pytest.approx(rep.stream["s_plus"])
    assert len(rep.monitors) == rep.branch["n_points"]
    # failures inside the analysis are recorded, not raised
    for e in rep.errors:
        assert set(e) == {"stage", "type", "message"}


def test_csv_schemas(small_run):
    _, out = small_run
    for name, header in SCHEMAS.items():
        rows = read_csv(out / name)
        assert rows[0] == list(header)
        assert all(len(r) == len(header) for r in rows[1:])
    assert len(read_csv(out / "dispersion.csv")) == 42


def test_csv_headers_when_empty(tmp_path):
    export(BifurcationReport(), tmp_path)
    for name, header in SCHEMAS.items():
        assert read_csv(tmp_path / name) == [list(header)]


def test_export_io_failure(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(IoFailure):
        export(BifurcationReport(), blocker / "sub")


def test_determinism(small_run, tmp_path):
    rep, _ = small_run
    again = run_pipeline(RunConfig(**SMALL), tmp_path)
    assert again.to_json() == rep.to_json()


def test_no_waves_stage(tmp_path):
    with pytest.raises(NoWavesForR) as info:
        run_pipeline(RunConfig(R=1.4), tmp_path)
    assert info.value.stage == "stream"
    assert main(["stream", "--R", "1.4", "--out", str(tmp_path)]) == 2


def test_cli_stream_and_dispersion(tmp_path, capsys):
    assert main(["stream", "--R", "2.0", "--out", str(tmp_path)]) == 0
    info = json.loads((tmp_path / "stream.json").read_text())
    assert info["s"] == pytest.approx(0.5392, abs=1e-4)
    assert read_csv(tmp_path / "stream.csv")[0] == ["y", "U"]
    assert main(["dispersion", "--R", "2.0", "--samples", "11", "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "dispersion.json").read_text())
    assert summary["tau_star"] == pytest.approx(3.4405, abs=1e-3)
    assert len(read_csv(tmp_path / "dispersion.csv")) == 12


def test_cli_bad_vorticity(tmp_path):
    assert main(["stream", "--vorticity", "{not json", "--out", str(tmp_path)]) == 2
    assert main(["stream", "--vorticity", '{"kind": "cubic"}', "--out", str(tmp_path)]) == 2
    assert main(["stream", "--vorticity", '{"kind": "affine"}', "--out", str(tmp_path)]) == 2


def test_cli_branch_spectrum_bifurcate(tmp_path, capsys):
    cfg = tmp_path / "small.json"
    cfg.write_text(json.dumps({**RunConfig(**SMALL).to_dict(), "n_steps": 30}))
    out = tmp_path / "run"
    assert main(["branch", "--config", str(cfg), "--out", str(out)]) == 0
    assert (out / "branch" / "manifest.json").exists()
    rows = read_csv(out / "monitors.csv")
    assert rows[0] == list(SCHEMAS["monitors.csv"]) and len(rows) > 10
    point = out / "branch" / "point_0000.json"
    assert main(["spectrum", "--point", str(point), "--family", "half_even", "--count", "3",
                 "--out", str(out)]) == 0
    ev = read_csv(out / "spectrum_half_even.csv")
    assert ev[0] == ["index", "eigenvalue"] and len(ev) == 4
    assert abs(float(ev[2][1])) < 1e-8  # Stokes kernel at the flat state
    assert main(["spectrum", "--point", str(point), "--family", "bloch", "--tau", "0.5",
                 "--count", "3", "--out", str(out)]) == 0
    bif = tmp_path / "bif"
    assert main(["bifurcate", "--branch", str(out / "branch"), "--config", str(cfg),
                 "--M-range", "2..3", "--out", str(bif)]) == 0
    rep = json.loads((bif / "report.json").read_text())
    assert rep["t0"] is not None


def test_cli_report(tmp_path):
    cfg = tmp_path / "small.json"
    cfg.write_text(json.dumps(RunConfig(**SMALL).to_dict()))
    assert main(["report", "--config", str(cfg), "--out", str(tmp_path / "r")]) == 0
    assert (tmp_path / "r" / "report.json").exists()
    assert list((tmp_path / "r").glob("*.png"))


def test_cli_bad_range():
    with pytest.raises(SystemExit):
        main(["bifurcate", "--branch", "x", "--M-range", "2-3"])
