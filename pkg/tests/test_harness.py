from __future__ import annotations

import json
import math

import numpy as np
import pytest

from mbmhurst import harness
from mbmhurst.estimators import EstimatorParams
from mbmhurst.harness import ConfigError, ExperimentConfig, load_config_file, run_rate_study, run_test_study
from mbmhurst.hypotests import MCSettings


def _rate_cfg(**kw):
    base = dict(scenario="constant_h", hurst=0.4, n_list=(512, 1024), replications=3, seed=11,
                probes=(0.5,), params=EstimatorParams(bandwidth_const=2.0))
    base.update(kw)
    return ExperimentConfig(**base)


def test_config_validation():
    with pytest.raises(ConfigError, match="replications"):
        ExperimentConfig(replications=0)
    with pytest.raises(ConfigError, match="256"):
        ExperimentConfig(n_list=(128,))
    with pytest.raises(ConfigError):
        ExperimentConfig(n_list=())
    with pytest.raises(ConfigError):
        ExperimentConfig(scenario="wiggly")
    with pytest.raises(ConfigError):
        ExperimentConfig(scenario="custom")
    with pytest.raises(ConfigError, match="unknown config keys"):
        ExperimentConfig.from_dict({"replicates": 5})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"params": {"epsilon_floor": -1.0}})


def test_config_dict_round_trip():
    cfg = _rate_cfg(mc=MCSettings(reps=1500, seed=3))
    d = cfg.to_dict()
    json.dumps(d)
    assert ExperimentConfig.from_dict(d) == cfg


def test_yaml_and_json_config_files(tmp_path):
    (tmp_path / "a.yaml").write_text("scenario: jump_h\nn_list: [512]\nreplications: 2\nparams:\n  degree: 0\n")
    (tmp_path / "b.json").write_text(json.dumps({"scenario": "jump_h", "n_list": [512], "replications": 2,
                                                 "params": {"degree": 0}}))
    a = ExperimentConfig.from_dict(load_config_file(tmp_path / "a.yaml"))
    b = ExperimentConfig.from_dict(load_config_file(tmp_path / "b.json"))
    assert a == b and a.params.degree == 0
    (tmp_path / "c.json").write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_config_file(tmp_path / "c.json")


def test_custom_scenario_theta(tmp_path):
    f = tmp_path / "theta.json"
    f.write_text(json.dumps({"h_samples": [0.3, 0.6], "s_samples": [1.0, 1.0]}))
    th = harness.scenario_theta(ExperimentConfig(scenario="custom", theta_file=str(f)))
    assert th.hurst_at(0.5) == pytest.approx(0.45)


def test_constant_scenario_uses_exact_fbm():
    cfg = ExperimentConfig(scenario="constant_h", hurst=0.3, n_list=(512,))
    from mbmhurst.simulate import FbmConfig, simulate_fbm
    a = harness.simulate_scenario(cfg, 512, 99).values
    b = simulate_fbm(FbmConfig(H=0.3, n=512, seed=99)).values
    assert np.array_equal(a, b)


def test_rate_study_rows_and_determinism(tmp_path):
    cfg = _rate_cfg(output_dir=str(tmp_path / "a"))
    t1 = run_rate_study(cfg)
    t2 = run_rate_study(_rate_cfg(output_dir=str(tmp_path / "b")))
    assert len(t1.rows) == 2 * 3 and all(r["status"] == "ok" for r in t1.rows)
    for name in ("rate_constant_h.csv", "rate_constant_h_summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    man = json.loads((tmp_path / "a" / "rate_constant_h_manifest.json").read_text())
    assert man["config"]["seed"] == 11 and man["generator"] == "exact_fbm" and "numpy" in man["versions"]
    # RMSE aggregates agree with the rows
    errs = np.array([r["err_log_ratio@0.5"] for r in t1.rows if r["n"] == 512])
    s = next(x for x in t1.summary if x["estimator"] == "log_ratio@0.5" and x["n"] == 512)
    assert s["rmse"] == pytest.approx(math.sqrt(np.mean(errs ** 2)), rel=1e-12)
    assert s["median_abs_error"] == pytest.approx(np.median(np.abs(errs)), rel=1e-12)


def test_parallel_matches_serial():
    serial = run_rate_study(_rate_cfg(), write=False)
    parallel = run_rate_study(_rate_cfg(threads=2), write=False)
    assert serial.to_csv() == parallel.to_csv()


def test_seeds_follow_derivation():
    from mbmhurst.core import derive_seed
    t = run_rate_study(_rate_cfg(n_list=(512,), replications=2), write=False)
    assert [r["seed"] for r in t.rows] == [derive_seed(11, "constant_h", 512, k) for k in range(2)]


def test_crash_isolation(monkeypatch, caplog):
    bad = harness.derive_seed(11, "constant_h", 512, 1)
    real = harness.simulate_scenario

    def flaky(cfg, n, seed):
        if seed == bad:
            raise FloatingPointError("injected")
        return real(cfg, n, seed)

    monkeypatch.setattr(harness, "simulate_scenario", flaky)
    with caplog.at_level("WARNING"):
        t = run_rate_study(_rate_cfg(), write=False)
    status = [(r["n"], r["replication"], r["status"]) for r in t.rows]
    assert status.count((512, 1, "error")) == 1
    assert sum(s == "ok" for *_, s in status) == 5
    assert str(bad) in caplog.text
    failed = next(r for r in t.rows if r["status"] == "error")
    assert "injected" in failed["error"]
    s = next(x for x in t.summary if x["n"] == 512)
    assert s["ok"] == 2 and math.isfinite(s["rmse"])


def test_rate_improves_with_n():
    cfg = _rate_cfg(n_list=(1024, 16384), replications=30, methods=("smoothed",), hurst=0.5,
                    params=EstimatorParams())
    t = run_rate_study(cfg, write=False)
    rmse = {s["n"]: s["rmse"] for s in t.summary}
    assert rmse[16384] < rmse[1024]
    assert t.meta["slopes"]["smoothed@0.5"] < 0


def test_test_study_se_and_power(tmp_path):
    mc = MCSettings(reps=1000)
    null = run_test_study(ExperimentConfig(scenario="constant_h", n_list=(1024,), replications=8, mc=mc,
                                           output_dir=str(tmp_path)))
    s = null.summary[0]
    assert s["se"] == pytest.approx(math.sqrt(s["rejection_rate"] * (1 - s["rejection_rate"]) / 8), abs=1e-15)
    assert (tmp_path / "test_cusum_constant_h.csv").exists()
    jump = run_test_study(ExperimentConfig(scenario="jump_h", n_list=(2048,), replications=4, mc=mc, m_sub=4,
                                           past_horizon=4.0), write=False)
    assert jump.summary[0]["rejection_rate"] >= s["rejection_rate"]


def test_binomial_se_arithmetic():
    # 500 replications at a 5% rate: SE = sqrt(0.05 * 0.95 / 500)
    assert math.sqrt(0.05 * 0.95 / 500) == pytest.approx(0.00975, abs=1e-5)


def test_gof_study_runs():
    cfg = ExperimentConfig(scenario="linear_h", test="gof", gof_class="linear", n_list=(1024,), replications=2,
                           mc=MCSettings(reps=1000), m_sub=4, past_horizon=4.0)
    t = run_test_study(cfg, write=False)
    assert all(r["status"] == "ok" for r in t.rows)
    assert "mesh" not in t.to_csv()
