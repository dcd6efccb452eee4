import math

import numpy as np
import pytest
import yaml

from hetreuse.cli import main
from hetreuse.config import (ExperimentConfig, ScenarioConfig, SearchParams, experiment_from_dict,
                             load_config, to_dict)
from hetreuse.harness import (baseline_reuse1, compute_metrics, nearest_rank, pattern_ratios,
                              read_rows, reuse1_patterns, run_experiment, strategy_name, summarize,
                              table2)
from hetreuse.rates import RateTensor


def test_nearest_rank_examples():
    m = compute_metrics(np.arange(1, 101, dtype=float))
    assert (m.p5, m.p50, m.p95) == (5.0, 50.0, 95.0)
    assert m.sum_rate == 5050.0


def test_equal_rates():
    m = compute_metrics(np.full(7, 3.0))
    assert m.p5 == m.p50 == m.p95 == 3.0
    assert m.sum_rate == 21.0
    assert m.log_utility == pytest.approx(7 * math.log(3.0))


def test_metrics_validation():
    with pytest.raises(ValueError):
        nearest_rank([], 50)
    with pytest.raises(ValueError):
        compute_metrics(np.array([-1.0, 2.0]))


def test_baseline_zero_bias_is_max_power(default_drop):
    scen, gains, _ = default_drop
    rates = RateTensor.from_gains(gains, scen, reuse1_patterns(scen.n_cells))
    sol = baseline_reuse1(scen, gains, rates, 0.0)
    assert np.array_equal(sol.serving, gains.rx_power_dbm.argmax(axis=1))
    assert sol.pi.tolist() == [1.0]


def test_baseline_huge_bias_goes_to_picos(default_drop):
    scen, gains, _ = default_drop
    rates = RateTensor.from_gains(gains, scen, reuse1_patterns(scen.n_cells))
    sol = baseline_reuse1(scen, gains, rates, 1e6)
    picos = np.flatnonzero(~scen.is_macro)
    expect = picos[gains.rx_power_dbm[:, picos].argmax(axis=1)]
    assert np.array_equal(sol.serving, expect)


def test_baseline_needs_reuse1(default_drop):
    scen, gains, rates = default_drop
    with pytest.raises(ValueError):
        baseline_reuse1(scen, gains, rates, 0.0)


def test_strategy_name():
    assert strategy_name(5.0) == "reuse1_5dB"


def test_default_study_has_five_strategies(tmp_path):
    cfg = ExperimentConfig(drops=1, search=SearchParams(max_iter_total=50))
    res = run_experiment(cfg, tmp_path)
    names = [s["strategy"] for s in res["summary"]]
    assert sorted(names) == sorted(["proposed"] + [strategy_name(b) for b in (0, 5, 10, 15)])
    for f in ("per_drop.csv", "per_user.csv", "summary.csv", "metadata.txt"):
        assert (tmp_path / f).exists()
    meta = yaml.safe_load((tmp_path / "metadata.txt").read_text())
    assert meta["config"]["search"]["tenure"] == 2
    assert len(read_rows(tmp_path / "per_user.csv")) == 5 * 90
    assert list(table2(res["summary"])[0]) [0] == "n_users"


def test_single_user_single_strategy(tmp_path):
    cfg = ExperimentConfig(scenario=ScenarioConfig(n_users=1), user_counts=(1,), drops=1,
                           biases=(0.0,), include_proposed=False)
    res = run_experiment(cfg, tmp_path)
    assert len(res["summary"]) == 1
    assert len(read_rows(tmp_path / "summary.csv")) == 1


def test_summarize_and_ratios():
    rows = [{"n_users": 9, "drop": d, "strategy": s, "p5": 1, "p50": 2, "p95": 3,
             "sum_rate": v, "log_utility": v, "error": ""}
            for d in range(2) for s, v in (("proposed", 2.0), ("proposed_full", 4.0))]
    rows.append({"n_users": 9, "drop": 2, "strategy": "proposed", "log_utility": "",
                 "error": "boom"})
    summary = summarize(rows)
    assert [s["drops"] for s in summary] == [2, 2]
    assert pattern_ratios(summary)[0]["sum_rate"] == 0.5


def test_failed_drop_is_recorded(tmp_path):
    cfg = ExperimentConfig(scenario=ScenarioConfig(n_macros=1, picos_per_macro=30,
                                                   min_pico_pico=300.0, max_attempts=20),
                           drops=1, biases=(0.0,))
    res = run_experiment(cfg, tmp_path)
    assert len(res["failures"]) == 1
    assert res["summary"] == []


def test_config_roundtrip(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump({
        "scenario": {"n_users": 30, "isd": 600.0},
        "radio": {"shadow_std_pico_db": 0.0},
        "search": {"tenure": 3},
        "experiment": {"drops": 2, "biases": [0, 5], "user_counts": [30, 60]},
    }))
    cfg = load_config(path)
    assert cfg.scenario.n_users == 30 and cfg.scenario.radius == pytest.approx(600 / math.sqrt(3))
    assert cfg.scenario.radio.shadow_std_pico_db == 0.0
    assert cfg.search.tenure == 3 and cfg.biases == (0, 5) and cfg.user_counts == (30, 60)
    d = to_dict(cfg)
    rebuilt = experiment_from_dict({
        "scenario": d.pop("scenario"), "search": d.pop("search"), "experiment": d})
    assert rebuilt == cfg
    assert load_config(None) == ExperimentConfig()


def test_config_rejects_unknown_keys():
    with pytest.raises(ValueError):
        experiment_from_dict({"search": {"tenur": 2}})
    with pytest.raises(ValueError):
        experiment_from_dict({"solver": {}})


def test_config_validation():
    with pytest.raises(ValueError):
        ScenarioConfig(n_macros=0)
    with pytest.raises(ValueError):
        ExperimentConfig(drops=0)


def test_cli_generate_optimize_baseline(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("scenario: {n_macros: 1, picos_per_macro: 2, n_users: 10}\n"
                   "search: {max_iter_total: 30, diversification: 3}\n")
    assert main(["generate", "--config", str(cfg), "--seed", "2", "--out", str(tmp_path / "g")]) == 0
    assert (tmp_path / "g" / "cells.csv").exists()
    assert main(["optimize", "--config", str(cfg), "--out", str(tmp_path / "o"),
                 "--patterns", "full"]) == 0
    for f in ("trace.csv", "per_user.csv", "allocation.csv", "summary.csv", "metadata.txt"):
        assert (tmp_path / "o" / f).exists()
    assert main(["baseline", "--config", str(cfg), "--out", str(tmp_path / "b")]) == 0
    assert len(read_rows(tmp_path / "b" / "baseline.csv")) == 4
    assert "utility" in capsys.readouterr().out


def test_cli_experiment_and_report(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("scenario: {n_macros: 1, picos_per_macro: 2, n_users: 8}\n"
                   "search: {max_iter_total: 20, diversification: 2}\n"
                   "experiment: {drops: 2, biases: [0]}\n")
    out = tmp_path / "e"
    assert main(["experiment", "--config", str(cfg), "--out", str(out), "--compare-full"]) == 0
    assert (out / "pattern_ratios.csv").exists()
    assert main(["report", str(out / "per_drop.csv"), "--out", str(tmp_path / "r")]) == 0
    assert len(read_rows(tmp_path / "r" / "summary.csv")) == 3


def test_cli_oracle(tmp_path):
    assert main(["oracle", "--instances", "3", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "oracle.csv").exists()


def test_shipped_configs_load():
    from pathlib import Path
    root = Path(__file__).resolve().parents[1] / "configs"
    assert load_config(root / "default.yaml") == ExperimentConfig()
    assert load_config(root / "reduced.yaml").scenario.n_cells == 6


def test_float_strings_coerced():
    cfg = experiment_from_dict({"radio": {"bandwidth": "10.0e6"}})
    assert cfg.scenario.radio.bandwidth == 1e7
