from __future__ import annotations

import json
import math
import os

import numpy as np
import pytest

from pilotwave import io
from pilotwave.cli import EXIT_ERROR, EXIT_OK, RunConfig, main, parse_emit, run
from pilotwave.errors import ConfigurationError
from pilotwave.experiments import PRESETS
from pilotwave.grid import Axis, GridField, GridSpec, SeparableField, field_1d, gaussian
from pilotwave.guidance import integrate_ensemble
from pilotwave.propagator import HamiltonianSpec, evolve
from pilotwave.report import Histogram

SLITS = {"schema_version": 1, "preset": "double-slit",
         "params": {"grid": {"min": -51.2, "max": 51.2, "points": 1024}, "screen_time": 4.0,
                    "snapshot_interval": 0.05},
         "ensemble": {"trajectories": 3000, "seed": 42}}
READOUT = {"schema_version": 1, "preset": "pointer-readout",
           "params": {"c1": math.sqrt(0.3), "system_grid": {"min": -25.6, "max": 25.6, "points": 256},
                      "pointer_grid": {"min": -12.8, "max": 12.8, "points": 256}},
           "ensemble": {"trajectories": 10_000, "seed": 3}}


@pytest.fixture
def slits_file(tmp_path):
    p = tmp_path / "slits.json"
    p.write_text(json.dumps(SLITS))
    return str(p)


def _read(d, name):
    with open(os.path.join(d, name), "rb") as fh:
        return fh.read()


# -- file formats ------------------------------------------------------------------------

def test_sample_indices_keep_last():
    assert io.sample_indices(10, 4).tolist() == [0, 4, 8, 9]
    assert io.sample_indices(9, 4).tolist() == [0, 4, 8]
    with pytest.raises(ConfigurationError):
        io.sample_indices(5, 0)


def test_trajectory_table_round_trip(tmp_path):
    ax = Axis(-12.8, 12.8, 256, "x")
    f = field_1d(ax, gaussian(ax, 6.0, 0.5, 8.0), boundary="absorbing").normalized()
    hist = evolve(f, HamiltonianSpec(), 1.0, snapshot_interval=0.05)
    e = integrate_ensemble(hist, np.array([[6.0], [-1.0], [0.3]]))
    p = tmp_path / "t.csv"
    io.write_trajectories(p, e)
    back = io.read_trajectories(p)
    assert back.positions.tobytes() == e.positions.tobytes()
    assert back.times.tobytes() == e.times.tobytes()
    assert back.status.tolist() == e.status.tolist()
    assert back.absorbed_at[0] == e.absorbed_at[0]
    assert p.read_text().splitlines()[0] == "trajectory,time,x,status"


def test_dense_field_round_trip(tmp_path):
    ax, ay = Axis(-4, 4, 32, "x"), Axis(-2, 2, 16, "y")
    a = np.random.default_rng(0).normal(size=(32, 16)) + 1j * np.random.default_rng(1).normal(size=(32, 16))
    f = GridField(GridSpec((ax, ay)), a, 0.125)
    binp, hdr = io.write_field(tmp_path / "f", f)
    assert os.path.getsize(binp) == 32 * 16 * 16
    raw = np.fromfile(binp, dtype="<f8")
    assert raw[0] == a[0, 0].real and raw[1] == a[0, 0].imag
    g = io.read_field(tmp_path / "f")
    assert g.spec == f.spec and g.time == 0.125
    assert np.array_equal(g.amplitudes, f.amplitudes)


def test_separable_field_round_trip(tmp_path):
    ax, ay = Axis(-4, 4, 32, "x"), Axis(-2, 2, 16, "y")
    f = SeparableField(GridSpec((ax, ay)), [(0.6, (gaussian(ax, 1), gaussian(ay))),
                                           (0.8j, (gaussian(ax, -1, 0.5, 2), gaussian(ay, 0.5)))],
                       ["a", "b"], 2.0)
    io.write_field(tmp_path / "s", f)
    g = io.read_field(tmp_path / "s")
    assert g.labels == f.labels
    assert np.array_equal(g.to_dense().amplitudes, f.to_dense().amplitudes)


def test_histogram_round_trip(tmp_path):
    h = Histogram(np.array([-1.0, 0.1, 1 / 3, 2.0]), np.array([3, 0, 7]), np.array([0.25, 0.1, 0.65]), axis=1)
    io.write_histograms(tmp_path / "h.csv", {"pointer": h})
    g = io.read_histograms(tmp_path / "h.csv")["pointer"]
    assert np.array_equal(g.edges, h.edges) and np.array_equal(g.counts, h.counts)
    assert np.array_equal(g.expected, h.expected) and g.axis == 1


# -- run config -----------------------------------------------------------------------

def test_emit_parsing():
    assert parse_emit("none") == frozenset()
    assert parse_emit("all") == {"trajectories", "histograms", "fields", "plots"}
    assert parse_emit("fields, plots") == {"fields", "plots"}
    with pytest.raises(ConfigurationError):
        RunConfig("numerics", emit=parse_emit("movies"))


@pytest.mark.parametrize("kw", [{"seed": -1}, {"seed": 2**64}, {"snapshot_stride": 0}, {"threads": 0}])
def test_run_config_validation(kw):
    with pytest.raises(ConfigurationError):
        RunConfig("numerics", **kw)


# -- CLI verbs ----------------------------------------------------------------------------

def test_run_writes_artifacts(slits_file, tmp_path, capsys):
    out = str(tmp_path / "a")
    assert main(["run", slits_file, "--out", out, "--emit", "all"]) == EXIT_OK
    names = set(os.listdir(out))
    assert {"report.json", "timing.json", "scenario.json", "trajectories.csv", "histograms.csv",
            "field_final.bin", "field_final.hdr", "hist_screen.png", "fan_0.png"} <= names
    rep = json.loads(_read(out, "report.json"))
    assert rep["passed"] and "timing" not in rep
    assert [c["name"] for c in rep["checks"]] == list(PRESETS["double-slit"].predicates)
    assert "PASS  no_axis_crossing" in capsys.readouterr().out


def test_same_config_is_byte_identical_at_any_thread_count(slits_file, tmp_path):
    outs = []
    for i, threads in enumerate((1, 1, 3)):
        out = str(tmp_path / f"r{i}")
        assert main(["run", slits_file, "--out", out, "--threads", str(threads), "--emit",
                     "trajectories,histograms,fields"]) == EXIT_OK
        outs.append(out)
    for name in ("report.json", "trajectories.csv", "histograms.csv", "field_final.bin", "scenario.json"):
        blobs = {_read(o, name) for o in outs}
        assert len(blobs) == 1, name


def test_emit_none_writes_report_only(slits_file, tmp_path):
    out = str(tmp_path / "n")
    assert main(["run", slits_file, "--out", out, "--emit", "none"]) == EXIT_OK
    assert os.listdir(out) == ["report.json"]


def test_seed_and_trajectory_flags_override_file(slits_file, tmp_path):
    out = str(tmp_path / "o")
    main(["run", slits_file, "--out", out, "--seed", "7", "--trajectories", "123", "--emit", "none"])
    ens = json.loads(_read(out, "report.json"))["scenario"]["ensemble"]
    assert ens == {"n": 123, "seed": 7}


def test_snapshot_stride(slits_file, tmp_path):
    out = str(tmp_path / "s")
    main(["run", slits_file, "--out", out, "--snapshot-stride", "40", "--emit", "trajectories"])
    times = {r.split(",")[1] for r in _read(out, "trajectories.csv").decode().splitlines()[1:]}
    assert sorted(float(t) for t in times) == [0.0, 2.0, 4.0]


def test_semantic_error_exit_and_record(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"schema_version": 1, "preset": "pointer-readout", "params": {"c1": 1.0, "c2": 1.0}}))
    out = str(tmp_path / "e")
    assert main(["run", str(p), "--out", out]) == EXIT_ERROR
    rec = json.loads(_read(out, "error.json"))
    assert rec["type"] == "SemanticError" and rec["error"] == "semantic"
    assert "normalization" in rec["message"]
    assert json.loads(capsys.readouterr().err) == rec


def test_module_error_in_run_surfaces(tmp_path):
    bad = dict(SLITS, params={**SLITS["params"], "slit_widths": [0.5, 0.7]})
    p = tmp_path / "asym.json"
    p.write_text(json.dumps(bad))
    out = str(tmp_path / "x")
    assert main(["run", str(p), "--out", out]) == EXIT_ERROR
    assert "mirror-symmetric" in json.loads(_read(out, "error.json"))["message"]


def test_validate_and_schema(slits_file, capsys):
    assert main(["validate", slits_file]) == EXIT_OK
    resolved = json.loads(capsys.readouterr().out)
    assert resolved["params"]["screen_time"] == 4.0 and resolved["params"]["mass"] == 1.0
    assert main(["validate", "--schema"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["properties"]["schema_version"]["const"] == 1
    assert main(["validate", "no-such-preset"]) == EXIT_ERROR


def test_presets_listing(capsys):
    assert main(["presets", "--json"]) == EXIT_OK
    rows = json.loads(capsys.readouterr().out)
    assert {r["name"] for r in rows} >= {"double-slit", "packet-exchange", "absolute-uncertainty"}


def test_report_recomputes_from_tables(slits_file, tmp_path, capsys):
    out = str(tmp_path / "rep")
    main(["run", slits_file, "--out", out, "--snapshot-stride", "1000"])
    capsys.readouterr()
    assert main(["report", out]) == EXIT_OK
    res = json.loads(capsys.readouterr().out)
    assert res["consistent"] and res["histograms"]["screen"]["matches_stored"]
    assert os.path.exists(os.path.join(out, "recomputed.json"))


def test_report_without_trajectories_is_an_error(slits_file, tmp_path):
    out = str(tmp_path / "nt")
    main(["run", slits_file, "--out", out, "--emit", "histograms"])
    assert main(["report", out]) == EXIT_ERROR


def test_pointer_readout_rate_within_its_wilson_interval(tmp_path):
    p = tmp_path / "readout.json"
    p.write_text(json.dumps(READOUT))
    out = str(tmp_path / "pr")
    assert run(RunConfig(str(p), out=out, emit=frozenset())) == EXIT_OK
    est = json.loads(_read(out, "report.json"))["empirical"]["P(Y in L)"]
    lo, hi = est["wilson95"]
    assert est["n"] == 10_000 and lo <= 0.3 <= hi
