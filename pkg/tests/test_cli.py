import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from depthkit.cli import run_command
from depthkit.distributions import DistSpec, Sample, sample
from depthkit.experiments import FigureSpec, run_figure
from depthkit.exceptions import ConfigurationError
from depthkit.io import read_table


def _run(tmp_path, *argv):
    out = tmp_path / "out"
    return run_command([*argv, "--out-dir", str(out)]), out


def _manifest(out):
    return json.loads((out / "manifest.json").read_text())


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.mark.parametrize(
    "argv",
    [
        ["sample", "--dist", "clover2d", "--n", "50"],
        ["depth", "--dist", "normal2d", "--n", "60"],
        ["depth", "--dist", "sphcauchy3d", "--n", "60", "--dirs", "200"],
        ["rdepth", "--dist", "sphcauchy2d", "--n", "300", "--k", "30"],
        ["rdepth", "--dist", "normal2d", "--n", "300", "--k", "30", "--method", "random", "--dirs", "100"],
        ["rdepth", "--dist", "cauchy1d", "--n", "300", "--k", "30"],
        ["evt", "--dist", "t2_1d", "--n", "400"],
        ["contour", "--dist", "sphcauchy2d", "--n", "300", "--k", "30", "--angles", "60"],
        ["spc-far", "--dist", "normal2d", "--n", "200", "--stream", "300", "--reps", "2"],
        ["spc-arl", "--dist", "normal2d", "--n", "200", "--shift", "2", "--reps", "2", "--cap", "200"],
        ["ddclass", "--dist", "normal2d", "--n", "200", "--m", "200", "--shift", "2", "--test", "400"],
    ],
    ids=lambda a: "-".join(a[:2]) if isinstance(a, list) else a,
)
def test_commands_succeed_and_write_manifests(tmp_path, argv):
    code, out = _run(tmp_path, *argv, "--seed", "3")
    assert code == 0
    m = _manifest(out)
    assert m["status"] == "ok" and m["command"] == argv[0] and m["seed"] == 3
    assert m["outputs"][-1].endswith("manifest.json")
    for path in m["outputs"]:
        assert (tmp_path / "out" / path.split("/")[-1]).exists()


@pytest.mark.parametrize(
    "argv,code",
    [
        (["depth", "--dist", "sphcauchy3d", "--n", "50", "--method", "exact2d"], 2),
        (["rdepth", "--k", "300", "--n", "500"], 2),
        (["depth", "--bogus-flag"], 2),
        (["depth", "--dist", "gumbel2d"], 2),
        (["repro", "fig9"], 2),
        (["rdepth", "--dist", "sphcauchy2d", "--n", "300", "--center", "origin", "--k", "30",
          "--input", "__missing__.csv"], 2),
    ],
)
def test_configuration_errors_exit_with_two(tmp_path, argv, code):
    got, out = _run(tmp_path, *argv)
    assert got == code
    m = _manifest(out)
    assert m["status"] == "failed" and m["error"]


def test_numeric_errors_exit_with_three(tmp_path):
    # a sample whose top order statistics are all equal: the moment estimator degenerates
    data = tmp_path / "flat.csv"
    data.write_text("x1\n" + "\n".join(["-1.0"] * 5 + ["1.0"] * 40 + ["2.0"] * 40) + "\n")
    code, out = _run(tmp_path, "rdepth", "--input", str(data), "--k", "20")
    assert code == 3
    assert _manifest(out)["failed_stage"] == "rdepth"


def test_module_entry_point_reports_usage(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "depthkit", "depth", "--nope", "--out-dir", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    assert "error" in proc.stderr
    ok = subprocess.run([sys.executable, "-m", "depthkit", "--help"], capture_output=True, text=True)
    assert ok.returncode == 0 and "repro" in ok.stdout


def test_repro_is_byte_identical_across_runs_and_threads(tmp_path, monkeypatch):
    a, b = tmp_path / "a", tmp_path / "b"
    monkeypatch.setenv("DEPTHKIT_THREADS", "1")
    assert run_command(["repro", "fig3", "--scale", "0.1", "--seed", "42", "--out-dir", str(a)]) == 0
    monkeypatch.setenv("DEPTHKIT_THREADS", "3")
    assert run_command(["repro", "fig3", "--scale", "0.1", "--seed", "42", "--out-dir", str(b)]) == 0
    csvs = sorted(p.name for p in a.glob("*.csv"))
    assert len(csvs) == 6
    for name in csvs + ["summary.json", "fig3.svg"]:
        assert (a / name).read_bytes() == (b / name).read_bytes()
    text = (a / csvs[0]).read_bytes()
    assert b"\r" not in text and text.endswith(b"\n")


def test_bad_thread_setting_is_a_configuration_error(tmp_path, monkeypatch):
    monkeypatch.setenv("DEPTHKIT_THREADS", "zero")
    assert run_command(["repro", "fig2", "--scale", "0.05", "--out-dir", str(tmp_path)]) == 2


def test_fig2_shape(tmp_path):
    m = run_figure(FigureSpec("fig2_univariate", 0.05, {"dists": ["cauchy1d"]}), tmp_path)
    rows = _rows(tmp_path / "fig2_cauchy1d.csv")
    assert len(rows) == 5 * 4
    assert {"dn_ratio", "rn_ratio"} <= set(rows[0])
    assert sorted({float(r["level"]) for r in rows}) == [1 / 2000, 1 / 1000, 1 / 500, 1 / 100]
    assert m.status == "ok" and m.replicates == 5
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["groups"]["cauchy1d"]["0.0005"]["rn_ratio"]["n"] == 5


def test_fig1_contour_has_500_evenly_spaced_angles(tmp_path):
    run_figure(FigureSpec("fig1_contour", 0.05, {}), tmp_path)
    rows = _rows(tmp_path / "contour.csv")
    assert len(rows) == 500
    theta = np.array([float(r["theta"]) for r in rows])
    assert np.allclose(np.diff(theta), 2 * np.pi / 500)
    assert theta[0] == 0.0
    assert list(rows[0]) == ["theta", "radius", "x", "y"]
    assert (tmp_path / "fig1_contour.svg").read_text().startswith("<svg")


def test_fig4_has_three_chart_groups(tmp_path):
    run_figure(FigureSpec("fig4_far", 0.05, {"dists": ["normal2d"], "stream": 300}), tmp_path)
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert set(summary["groups"]["normal2d"]) == {"parametric", "D_n", "R_n"}
    assert len(_rows(tmp_path / "fig4_normal2d.csv")) == 5


def test_figure_spec_validation():
    with pytest.raises(ConfigurationError):
        FigureSpec("fig2_univariate", 0.04, {})
    with pytest.raises(ConfigurationError):
        FigureSpec("fig2_univariate", 1.5, {})
    with pytest.raises(ConfigurationError):
        FigureSpec("fig2_univariate", 0.1, {"colour": "red"})
    assert FigureSpec("fig5_arl_normal", 0.3, {}).replicates == 30


def test_failed_figure_writes_a_flagged_manifest(tmp_path):
    spec = FigureSpec("fig2_univariate", 0.05, {"dists": ["cauchy1d"], "k": 400})
    with pytest.raises(ConfigurationError):
        run_figure(spec, tmp_path)
    m = _manifest(tmp_path)
    assert m["status"] == "failed" and m["failed_stage"]
    assert m["outputs"][-1].endswith("manifest.json")


def test_sample_csv_round_trip_through_cli(tmp_path):
    code, out = _run(tmp_path, "sample", "--dist", "elliptical2d", "--n", "25", "--seed", "9")
    assert code == 0
    back = Sample.from_csv(out / "sample.csv")
    assert np.array_equal(back.data, sample(DistSpec("elliptical2d"), 25, 9).data)
    header, rows = read_table(out / "sample.csv")
    assert header == ["x1", "x2"] and len(rows) == 25


def test_depth_command_on_input_file(tmp_path):
    pts = tmp_path / "pts.csv"
    pts.write_text("x1,x2\n0,0\n1,0\n0,1\n1,1\n0.5,0.5\n")
    code, out = _run(tmp_path, "depth", "--input", str(pts))
    assert code == 0
    rows = _rows(out / "depth.csv")
    # corners: one point in the best half-plane; centre: a diagonal line leaves three
    assert [float(r["depth"]) for r in rows] == [0.2, 0.2, 0.2, 0.2, 0.6]
