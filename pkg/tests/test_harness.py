import json
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from hetddf.cli import main
from hetddf.errors import ConfigError
from hetddf.harness import CSV_COLUMNS, RunReport, centralized_oracle, compare, monte_carlo, run_scenario, with_engines
from hetddf.metrics import chi2_bounds, nees, nees_report, position_error, rmse
from hetddf.scenario import default_scenario, single_robot_scenario


def test_horizon_zero_has_priors_only():
    rep = run_scenario(default_scenario(0, horizon=0))
    assert len(rep.records) == 2
    assert {r["step"] for r in rep.records} == {0}
    # step 0 holds the priors plus the first detections, never more uncertain than the prior
    prior_cov = default_scenario().target(0).prior_cov()
    cov = np.asarray(rep.records[0]["targets"]["0"]["cov"])
    assert np.all(np.linalg.eigvalsh(prior_cov - cov) > -1e-12)


def test_same_seed_gives_identical_csv(tmp_path):
    sc = default_scenario(7, horizon=8)
    run_scenario(sc, out=tmp_path / "a")
    run_scenario(sc, out=tmp_path / "b")
    a = (tmp_path / "a" / "decentralized-seed7.csv").read_bytes()
    b = (tmp_path / "b" / "decentralized-seed7.csv").read_bytes()
    assert a == b
    header = a.decode().splitlines()[0].split(",")
    assert header == CSV_COLUMNS
    assert (tmp_path / "a" / "messages.jsonl").exists()
    assert (tmp_path / "a" / "states.jsonl").read_text().count("\n") == 2 * 9


def test_report_json_round_trip(tmp_path):
    rep = run_scenario(default_scenario(1, horizon=3), with_oracle=True)
    path, _ = rep.write(tmp_path)
    back = RunReport.from_dict(json.loads(path.read_text()))
    assert back.to_dict() == rep.to_dict()
    assert back.to_dict()["schema"] == "hetddf.report/1"


def test_single_robot_compare_is_exact():
    c = compare(single_robot_scenario(0))
    # no common targets: nothing to compare, trivially passing
    assert c.passed


@pytest.mark.parametrize("known", [False, True])
def test_target_inputs_known_or_unknown(known):
    sc = default_scenario(2, horizon=15)
    sc = replace(sc, targets=[replace(t, inputs=[[0.5, -0.5]] * 15) for t in sc.targets], known_target_inputs=known)
    assert (sc.estimator_inputs(2) is not None) == known
    # the oracle sees the same inputs, so exactness holds in both modes
    assert compare(sc).passed
    base = run_scenario(replace(sc, known_target_inputs=False))
    rep = run_scenario(sc)
    same = rep.records[-1]["targets"]["2"]["mean"] == base.records[-1]["targets"]["2"]["mean"]
    assert same != known


def test_oracle_report(tmp_path):
    rep = centralized_oracle(default_scenario(0, horizon=4), out=tmp_path)
    assert rep.source == "oracle"
    assert len(rep.records) == 2 * 5
    assert (tmp_path / "oracle-seed0.csv").exists()


def test_with_engines():
    sc = with_engines(default_scenario(), {1: "odometry"})
    assert sc.robot(1).engine == "odometry" and sc.robot(1).fix_every == 20
    assert sc.robot(0).engine == "landmark"


def test_chi2_bounds_table_values():
    # chi-square 95% two-sided interval for 200 dof, divided by 50 runs
    lo, hi = chi2_bounds(4, 50)
    assert lo == pytest.approx(stats.chi2.ppf(0.025, 200) / 50)
    assert lo == pytest.approx(3.2546, abs=1e-4)
    assert hi == pytest.approx(4.8212, abs=1e-4)


def test_nees_and_errors():
    assert nees([1.0, 0.0], np.diag([4.0, 1.0]), [0.0, 0.0]) == pytest.approx(0.25)
    assert position_error([3.0, 9.0, 4.0, 9.0], [0.0, 0.0, 0.0, 0.0]) == pytest.approx(5.0)
    assert rmse([3.0, 4.0]) == pytest.approx(np.sqrt(12.5))
    assert np.isnan(rmse([]))


def test_nees_report_rejects_bad_input():
    sc = default_scenario(0, horizon=2)
    reps = monte_carlo(sc, 2)
    with pytest.raises(ConfigError):
        nees_report(reps[:1])
    other = run_scenario(default_scenario(0, horizon=3))
    with pytest.raises(ConfigError):
        nees_report([reps[0], other])
    s = nees_report(reps)
    assert s.to_dict()["schema"] == "hetddf.nees/1" and s.runs == 2


def test_under_modeled_process_noise_is_detected():
    sc = replace(default_scenario(0, horizon=40), model_process_noise=0.008)
    s = nees_report(monte_carlo(sc, 3))
    assert not s.all_passed
    assert max(s.mean_nees.values()) > s.bounds[1]


def test_cli_compare_and_exit_codes(tmp_path, capsys):
    assert main(["compare", "--config", "common2", "--out", str(tmp_path / "c")]) == 0
    out = json.loads((tmp_path / "c" / "compare.json").read_text())
    assert out["passed"] and out["max_delta"] < 1e-9
    # an impossible tolerance fails with a nonzero exit
    assert main(["compare", "--config", "common2", "--tolerance", "0"]) == 1
    capsys.readouterr()


def test_cli_nees_failure_and_errors(tmp_path, capsys):
    bad = replace(default_scenario(0, horizon=20), model_process_noise=0.004)
    cfg = tmp_path / "bad.json"
    cfg.write_text(bad.to_json())
    assert main(["nees", "--config", str(cfg), "--mc-runs", "2", "--out", str(tmp_path / "n")]) == 1
    assert (tmp_path / "n" / "nees_steps.csv").exists()
    assert main(["nees", "--config", str(cfg), "--mc-runs", "1"]) == 2
    capsys.readouterr()


def test_cli_run_dump_plot(tmp_path, capsys):
    cfg = tmp_path / "s.json"
    cfg.write_text(default_scenario(0, horizon=5).to_json())
    assert main(["run", "--config", str(cfg), "--seed", "2", "--out", str(tmp_path / "r")]) == 0
    assert (tmp_path / "r" / "decentralized-seed2.csv").exists()
    assert main(["oracle", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert main(["dump-graph", "--config", str(cfg), "--step", "2", "--robot", "1", "--out", str(tmp_path / "d")]) == 0
    dump = json.loads((tmp_path / "d" / "graphs.json").read_text())
    assert list(dump["robots"]) == ["1"] and dump["robots"]["1"]["step"] == 2
    pytest.importorskip("matplotlib")
    assert main(["plot", "--config", str(cfg), "--out", str(tmp_path / "p")]) == 0
    assert (tmp_path / "p" / "metrics.svg").read_text().startswith("<?xml")
    capsys.readouterr()
