import json
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gem_mix.cli import main
from gem_mix.experiments import (
    ExperimentSpec,
    SpecError,
    arc_layout,
    build_model,
    fit_log_slope,
    load_spec,
    run_bounds,
    run_convergence,
    run_region_probe,
    run_suite,
)
from gem_mix.mixture import separation_stats


def _polygon_ratio(M):
    k = np.arange(1, M // 2 + 1)
    chords = np.sin(np.pi * k / M)
    return chords.max() / chords.min()


@settings(max_examples=60, deadline=None)
@given(st.integers(3, 7), st.floats(0.01, 0.99), st.floats(0.5, 50), st.integers(2, 5))
def test_arc_layout_hits_separation(M, t, r_min, d):
    lo = _polygon_ratio(M)
    ratio = lo + t * (M - 1 - lo)
    cfg = arc_layout(M, d, r_min, ratio)
    s = separation_stats(cfg)
    assert abs(s.r_min - r_min) <= 1e-6
    assert abs(s.r_max / s.r_min - ratio) <= 1e-6
    np.testing.assert_allclose(cfg.weights @ cfg.means, 0.0, atol=1e-10)
    np.testing.assert_array_equal(cfg.means[:, 2:], 0.0)


def test_arc_layout_edge_cases():
    cfg = arc_layout(3, 1, 2.0, 2.0)
    assert cfg.dim == 1 and separation_stats(cfg).r_max == pytest.approx(4.0)
    cfg = arc_layout(2, 3, 4.0, 1.0, [0.3, 0.7])
    np.testing.assert_allclose(cfg.weights @ cfg.means, 0.0, atol=1e-12)
    with pytest.raises(SpecError):
        arc_layout(3, 2, 5.0, 0.9)
    with pytest.raises(SpecError):
        arc_layout(3, 2, 5.0, 2.5)
    with pytest.raises(SpecError):
        arc_layout(2, 2, 5.0, 1.5)


def test_build_model_variants():
    explicit = build_model({"weights": [0.5, 0.5], "means": [[0.0, 0.0], [2.0, 0.0]]})
    np.testing.assert_allclose(explicit.means, [[-1, 0], [1, 0]])
    gen = build_model({"M": 3, "d": 2, "r_min": 3.0, "ratio": 1.5, "weights": [0.6, 0.3, 0.1]})
    assert separation_stats(gen).kappa == pytest.approx(6)
    assert separation_stats(build_model({"M": 3, "d": 2}, r_min=7.0)).r_min == pytest.approx(7.0)
    with pytest.raises(SpecError):
        build_model({"M": 3, "d": 2, "shape": "line"})
    with pytest.raises(SpecError):
        build_model({"M": 3, "d": 2, "layout": "grid"})


def test_spec_parsing(tmp_path):
    path = tmp_path / "s.toml"
    path.write_text('kind = "convergence"\ntrials = 2\nn = 500\nsnr_grid = [3, 4]\n[model]\nM = 3\nd = 2\n')
    spec = load_spec(path)
    assert spec.snr_grid == [3.0, 4.0] and spec.name == "convergence"
    with pytest.raises(SpecError):
        ExperimentSpec.from_dict({"kind": "convergence", "trails": 3})
    with pytest.raises(SpecError):
        ExperimentSpec.from_dict({"kind": "nope"})
    with pytest.raises(SpecError):
        ExperimentSpec.from_dict({"trials": 3})
    bad = tmp_path / "s.yaml"
    bad.write_text("kind: convergence")
    with pytest.raises(SpecError):
        load_spec(bad)


def test_fit_log_slope():
    err = np.concatenate([np.exp(-0.5 * np.arange(20)), np.full(30, np.exp(-0.5 * 19))])
    slope, end = fit_log_slope(err)
    assert slope == pytest.approx(-0.5, rel=0.05)
    assert end <= 19


def _small_convergence(tmp_path, name="c"):
    spec = ExperimentSpec(kind="convergence", trials=1, n=800, snr_grid=[4.0], seed=3, name=name,
                          params={"max_iters": 20})
    return spec, run_convergence(spec, tmp_path)


def test_convergence_byte_identical(tmp_path):
    _small_convergence(tmp_path / "a")
    _small_convergence(tmp_path / "b")
    for suffix in (".csv", ".svg", ".json"):
        assert (tmp_path / "a" / f"c{suffix}").read_bytes() == (tmp_path / "b" / f"c{suffix}").read_bytes()
    header = (tmp_path / "a" / "c.csv").read_text().splitlines()[0]
    assert header == "snr,t,mean_log_err,sd_log_err"
    ET.parse(tmp_path / "a" / "c.svg")


def test_convergence_infeasible_generator_fails_early(tmp_path):
    spec = ExperimentSpec(kind="convergence", model={"M": 3, "d": 2, "ratio": 3.0}, trials=1, n=100)
    with pytest.raises(SpecError):
        run_convergence(spec, tmp_path)
    assert not any(tmp_path.iterdir())


def test_region_probe_small(tmp_path):
    spec = ExperimentSpec(kind="region-probe", trials=2, n=3000, snr_grid=[5.0], seed=1,
                          params={"eps_grid": [0.0, 0.1, 0.5], "plot": "paths"})
    summary = run_region_probe(spec, tmp_path)
    med = summary["median_final_err_over_rmin"]
    assert med[0] > 0.2 and med[1] < 0.05 and med[2] < 0.05
    ET.parse(tmp_path / "region-probe.svg")
    meta = json.loads((tmp_path / "region-probe.json").read_text())
    assert "eps_grid_note" in meta["summary"]


def test_bounds_report_paths(tmp_path, capsys):
    spec = ExperimentSpec(kind="bounds", n=1000, snr_grid=[2.0, 40.0], params={"constant_mode": "solved",
                                                                             "mc_samples": 100_000})
    summary = run_bounds(spec, tmp_path)
    small, large = summary["entries"]
    assert small["report"]["message"] == "separation too small for certificate"
    assert small["measured"] is None
    assert large["report"]["contractive"]
    assert large["measured"] <= max(3, 2 * large["predicted"])
    out = capsys.readouterr().out
    assert "gamma" in out and "separation too small" in out


def test_suite_manifest(tmp_path):
    assert run_suite({"experiments": []}, tmp_path / "empty")["experiments"] == []
    assert json.loads((tmp_path / "empty" / "manifest.json").read_text()) == {"experiments": []}
    suite = {
        "n": 600,
        "trials": 1,
        "experiments": [
            {"kind": "convergence", "name": "conv", "snr_grid": [4.0], "params": {"max_iters": 10}},
            {"kind": "region-probe", "name": "broken", "model": {"M": 2, "d": 2, "ratio": 1.0}},
        ],
    }
    m1 = run_suite(suite, tmp_path / "r1", seed=4)
    m2 = run_suite(suite, tmp_path / "r2", seed=4)
    assert [e["status"] for e in m1["experiments"]] == ["ok", "failed"]
    assert "three components" in m1["experiments"][1]["error"]
    assert len(m1["experiments"][0]["artifacts"]) == 3
    assert m1 == m2


def test_cli_exit_codes(tmp_path, capsys):
    good = tmp_path / "b.json"
    good.write_text(json.dumps({"kind": "bounds", "snr_grid": [2.0], "n": 100}))
    assert main(["bounds", "--spec", str(good), "--seed", "1", "--out", str(tmp_path / "o")]) == 0
    assert "separation too small" in capsys.readouterr().out

    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"kind": "bounds", "unknown": 1}))
    assert main(["bounds", "--spec", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert main(["bounds", "--spec", str(tmp_path / "missing.json")]) == 1
    mismatch = tmp_path / "m.json"
    mismatch.write_text(json.dumps({"kind": "stochastic"}))
    assert main(["bounds", "--spec", str(mismatch)]) == 1

    failing = tmp_path / "f.json"
    failing.write_text(json.dumps({"kind": "verify-gs", "snr_grid": [2.0]}))
    assert main(["verify-gs", "--spec", str(failing), "--out", str(tmp_path / "o")]) == 2


def test_cli_suite(tmp_path):
    spec = tmp_path / "suite.toml"
    spec.write_text(
        'n = 500\ntrials = 1\n[[experiments]]\nkind = "convergence"\nname = "c"\nsnr_grid = [4.0]\n'
        '[experiments.params]\nmax_iters = 5\n'
    )
    assert main(["suite", "--spec", str(spec), "--seed", "2", "--out", str(tmp_path / "out")]) == 0
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert [a["path"] for a in manifest["experiments"][0]["artifacts"]] == ["c.csv", "c.svg", "c.json"]


def test_cli_against_best_fixed_point(tmp_path):
    spec = tmp_path / "c.json"
    spec.write_text(json.dumps({"kind": "convergence", "trials": 1, "n": 600, "snr_grid": [4.0],
                                "params": {"max_iters": 10}}))
    assert main(["convergence", "--spec", str(spec), "--out", str(tmp_path), "--against-best-fixed-point"]) == 0
    meta = json.loads((tmp_path / "convergence.json").read_text())
    assert meta["summary"]["reference"] == "best_fixed_point"
    assert not math.isnan(meta["summary"]["per_snr"]["4.0"]["median_slope"])
