import csv
import io
import json

import pytest
import yaml

from visbeam import cli, harness, suites
from visbeam.blockage import blockage_events
from visbeam.harness import ConfigError, config_from_dict, emit_report, load_report, parse_config, run_experiment
from visbeam.pipeline import PipelineParams, run_link
from visbeam.scene import generate_frames, save_scenario


def _crossing(name, onset=25, frames=60, speed=8):
    tx = suites._tx(580, 0, frames)
    return suites._scenario(name, frames, [tx, suites._crosser(2, tx, onset, speed, True)])


@pytest.fixture
def scenario_dir(tmp_path):
    for k, name in enumerate(("alpha", "beta", "gamma")):
        save_scenario(_crossing(name, onset=20 + 5 * k), tmp_path / f"{name}.yaml")
    return tmp_path


def _write_config(d, **cfg):
    base = {"scenarios": ["alpha.yaml", "beta.yaml", "gamma.yaml"], "out": "results"}
    base.update(cfg)
    path = d / "run.yaml"
    path.write_text(yaml.safe_dump(base))
    return path


def test_defaults():
    cfg = config_from_dict({"suites": ["recovery"]})
    p = cfg.params
    assert p.history_len == 3 and p.tau_match == 0.3 and p.iou_threshold == 0.5
    assert p.s_max == 3 and p.m_frames == (1, 3, 5) and p.topn == (1, 3, 5)
    assert cfg.seed == 0 and cfg.workers == 1


def test_topn_larger_than_codebook_rejected():
    with pytest.raises(ConfigError) as exc:
        config_from_dict({"suites": ["recovery"], "params": {"topn": [1, 128]}})
    assert any("params.topn" in p and "128" in p and "64" in p for p in exc.value.problems)


def test_duplicate_path_rejected(scenario_dir):
    with pytest.raises(ConfigError) as exc:
        config_from_dict({"scenarios": ["alpha.yaml", "./alpha.yaml", "alpha.yaml"]}, base_dir=scenario_dir)
    assert any("duplicate" in p for p in exc.value.problems)


def test_all_problems_reported_together():
    with pytest.raises(ConfigError) as exc:
        config_from_dict({"suites": ["nope"], "bogus": 1, "params": {"S_max": 4, "tau_match": 2, "wat": 0}})
    text = "\n".join(exc.value.problems)
    for needle in ("unknown key: bogus", "params.wat", "nope", "params.S_max", "params.tau_match"):
        assert needle in text


def test_seed_depends_on_master_and_name():
    a, b = _crossing("a"), _crossing("b")
    assert harness.scenario_seed(0, a) == harness.scenario_seed(0, a)
    assert harness.scenario_seed(0, a) != harness.scenario_seed(0, b)
    assert harness.scenario_seed(0, a) != harness.scenario_seed(1, a)


def test_run_writes_confusion_files_and_tables(scenario_dir):
    cfg = parse_config(_write_config(scenario_dir))
    report = run_experiment(cfg)
    assert not report.failures
    out = scenario_dir / "results"
    emit_report(report, out)
    confusion = sorted(p.name for p in (out / "confusion").iterdir())
    assert len(confusion) == 9
    assert "beta_S2.csv" in confusion
    for p in (out / "confusion").iterdir():
        rows = list(csv.DictReader(p.open()))
        for r in rows:
            if r["matrix"] == "normalized" and r["predicted_negative"] != "":
                assert float(r["predicted_negative"]) + float(r["predicted_positive"]) == pytest.approx(1.0)
    for name in ("table_tx_identification.csv", "table_beam_prediction.csv", "table_blockage.csv",
                 "table_recovery.csv", "transitions.csv"):
        assert (out / name).exists()


def test_csv_round_trip(scenario_dir):
    report = run_experiment(parse_config(_write_config(scenario_dir)))
    text = harness.report_tables(report)["table_blockage.csv"]
    rows = list(csv.DictReader(io.StringIO(text)))
    assert len(rows) == 9
    for r in rows:
        m = report.scenarios[r["scenario"]]["blockage"][r["S"]]
        for key in ("accuracy", "precision", "recall", "fpr", "fnr"):
            assert (None if r[key] == "" else float(r[key])) == m[key]
        for key in ("tp", "fp", "tn", "fn"):
            assert int(r[key]) == m[key]


def test_report_json_round_trip(scenario_dir, tmp_path):
    report = run_experiment(parse_config(_write_config(scenario_dir)))
    emit_report(report, tmp_path / "o")
    again = load_report(tmp_path / "o" / harness.REPORT_FILE)
    assert again.to_json() == report.to_json()


def test_same_seed_same_bytes(scenario_dir):
    cfg = parse_config(_write_config(scenario_dir, params={"power_noise_db": 2.0, "detection_noise": 1.0}))
    a, b = run_experiment(cfg), run_experiment(cfg)
    assert a.to_json() == b.to_json()
    assert harness.report_tables(a) == harness.report_tables(b)


def test_scenario_isolation(scenario_dir):
    noisy = {"power_noise_db": 2.0}
    both = run_experiment(parse_config(_write_config(scenario_dir, params=noisy)))
    alone = run_experiment(
        parse_config(_write_config(scenario_dir, scenarios=["beta.yaml"], params=noisy))
    )
    assert alone.scenarios["beta"] == both.scenarios["beta"]


def test_every_frame_counted_once():
    sc = _crossing("x", frames=80)
    sc.drop_schedule = [10, 11, 40]
    frames, truth = generate_frames(sc, 3)
    for s in (1, 2, 3):
        run = run_link(sc, frames, s, PipelineParams())
        by = truth.by_frame()
        events = blockage_events(run.frames, [by[f].blockage_flag for f in run.frames], run.predictions, s)
        covered = [f for e in events for f in e.frames]
        assert sorted(covered) == [f.frame_index for f in frames]
        assert len(set(covered)) == len(covered)


def test_failing_scenario_is_recorded_and_others_finish(scenario_dir, monkeypatch, capsys):
    real = harness.run_scenario

    def flaky(sc, seed, params):
        if sc.name == "beta":
            raise RuntimeError("boom")
        return real(sc, seed, params)

    monkeypatch.setattr(harness, "run_scenario", flaky)
    code = cli.main(["run", "--config", str(_write_config(scenario_dir)), "--S-max", "1"])
    assert code == cli.EXIT_SCENARIO
    report = json.loads((scenario_dir / "results" / "report.json").read_text())
    assert sorted(report["scenarios"]) == ["alpha", "gamma"]
    assert "boom" in report["failures"]["beta"]
    assert "beta" in capsys.readouterr().err


# -- cli -------------------------------------------------------------------------


def test_cli_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({"suites": ["recovery"], "params": {"topn": [128]}}))
    assert cli.main(["validate", "--config", str(bad)]) == cli.EXIT_CONFIG
    assert "params.topn" in capsys.readouterr().err
    assert cli.main(["run", "--config", str(tmp_path / "missing.yaml")]) == cli.EXIT_CONFIG


def test_cli_out_precedence(scenario_dir, monkeypatch, tmp_path):
    path = _write_config(scenario_dir, scenarios=["alpha.yaml"])
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "from_env"))
    assert cli.main(["run", "--config", str(path), "--S-max", "1"]) == 0
    assert (tmp_path / "from_env" / "report.json").exists()
    assert cli.main(["run", "--config", str(path), "--S-max", "1", "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "report.json").exists()
    monkeypatch.delenv(cli.OUT_ENV)
    assert cli.main(["run", "--config", str(path), "--S-max", "1"]) == 0
    assert (scenario_dir / "results" / "report.json").exists()


def test_cli_flags_override_config(scenario_dir, tmp_path):
    path = _write_config(scenario_dir)
    out = tmp_path / "o"
    argv = ["run", "--config", str(path), "--scenarios", "g*", "--S-max", "2", "--topn", "1,2",
            "--m-frames", "3", "--seed", "7", "--out", str(out)]
    assert cli.main(argv) == 0
    report = json.loads((out / "report.json").read_text())
    assert list(report["scenarios"]) == ["gamma"]
    res = report["scenarios"]["gamma"]
    assert sorted(res["blockage"]) == ["1", "2"]
    assert sorted(res["beam_selection"]["topn"]) == ["1", "2"]
    assert list(res["identification"]) == ["3"]
    assert report["seed"] == 7


def test_cli_gen_scenarios_and_report(tmp_path):
    out = tmp_path / "gen"
    assert cli.main(["gen-scenarios", "--out", str(out), "--suite", "recovery"]) == 0
    cfg = yaml.safe_load((out / "run.yaml").read_text())
    assert len(cfg["scenarios"]) == 20
    assert cli.main(["validate", "--config", str(out / "run.yaml")]) == 0
    assert cli.main(["run", "--config", str(out / "run.yaml"), "--scenarios", "recover_cross_00", "--S-max", "1"]) == 0
    results = out / "results"
    (results / "table_blockage.csv").unlink()
    assert cli.main(["report", "--input", str(results / "report.json")]) == 0
    assert (results / "table_blockage.csv").exists()
    assert cli.main(["report", "--input", str(tmp_path / "nope.json")]) == cli.EXIT_CONFIG


def test_cli_rejects_bad_flag_values(scenario_dir):
    with pytest.raises(SystemExit):
        cli.main(["run", "--config", str(_write_config(scenario_dir)), "--S-max", "5"])
    with pytest.raises(SystemExit):
        cli.main(["run", "--config", str(_write_config(scenario_dir)), "--topn", "a,b"])


def test_report_independent_of_checkout_location(tmp_path):
    texts = []
    for where in ("a", "b/deeper"):
        d = tmp_path / where
        d.mkdir(parents=True)
        save_scenario(_crossing("alpha"), d / "alpha.yaml")
        cfg = parse_config(_write_config(d, scenarios=["alpha.yaml"], params={"S_max": 1}))
        texts.append(run_experiment(cfg).to_json())
    assert texts[0] == texts[1]
