import filecmp
import json

import numpy as np
import pytest
import yaml

from delaycorrect.cli import main

SCENARIO = {
    "start": "2016-01", "months": 30, "seed": 5,
    "rate": {"kind": "linear", "start": 300, "end": 600},
    "truth": {"alpha": 0.15, "scale": 60, "mu": 400, "sigma": 80},
}
FAST = ["--first-end", "2018-04", "--max-generations", "60"]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "scenario.yaml").write_text(yaml.safe_dump(SCENARIO))
    assert main(["synth", "--scenario", str(root / "scenario.yaml"), "--out", str(root / "synth")]) == 0
    assert main(["run", "--scenario", str(root / "scenario.yaml"), "--out", str(root / "direct"), *FAST]) == 0
    return root


def read(path):
    return path.read_text(encoding="utf-8")


def test_synth_writes_events_and_truth(workspace):
    truth = read(workspace / "synth" / "truth.csv").splitlines()
    assert truth[0] == "month,true_count,alpha,scale,mu,sigma"
    assert len(truth) == 31
    assert read(workspace / "synth" / "events.csv").startswith("entity_id,occurred_on,reported_on\n")


def test_run_artifacts_and_manifest(workspace):
    out = workspace / "direct"
    manifest = json.loads(read(out / "manifest.json"))
    assert manifest["seed"] == 0
    assert manifest["windows"]["first_end"] == "2018-04" and manifest["windows"]["last_end"] == "2018-06"
    assert manifest["config"]["optimizer"]["max_generations"] == 60
    assert set(manifest["artifacts"]) == {"events.csv", "rejects.csv", "parameters.csv", "corrected.csv"}
    assert set(json.loads(read(out / "timings.json"))) == {"ingest", "debias", "fit", "correct"}
    params = read(out / "parameters.csv").splitlines()
    assert params[0].startswith("window_end,alpha,scale,mu,sigma,objective,converged")
    assert len(params) == 4


def test_run_on_synth_output_matches_scenario_mode(workspace):
    out = workspace / "from-file"
    assert main(["run", "--input", str(workspace / "synth" / "events.csv"), "--out", str(out), *FAST]) == 0
    for name in ("events.csv", "parameters.csv", "corrected.csv"):
        assert filecmp.cmp(out / name, workspace / "direct" / name, shallow=False), name


def test_stages_chain_to_the_same_result(workspace):
    s = workspace / "stages"
    assert main(["ingest", "--input", str(workspace / "synth" / "events.csv"), "--out", str(s / "i")]) == 0
    assert main(["debias", "--events", str(s / "i" / "events.csv"), "--out", str(s / "d"), "--first-end", "2018-04"]) == 0
    assert main(["fit", "--windows", str(s / "d" / "windows.csv"), "--out", str(s / "f"),
                 "--max-generations", "60", "--trace"]) == 0
    assert main(["correct", "--events", str(s / "i" / "events.csv"), "--parameters", str(s / "f" / "parameters.csv"),
                 "--out", str(s / "c")]) == 0
    assert filecmp.cmp(s / "f" / "parameters.csv", workspace / "direct" / "parameters.csv", shallow=False)
    assert filecmp.cmp(s / "c" / "corrected.csv", workspace / "direct" / "corrected.csv", shallow=False)
    traces = sorted(p.name for p in (s / "f" / "traces").iterdir())
    assert traces == ["2018-04.csv", "2018-05.csv", "2018-06.csv"]
    assert read(s / "f" / "traces" / "2018-04.csv").startswith("generation,best_objective,alpha,scale,mu,sigma\n")
    assert (s / "d" / "histograms" / "2018-06.csv").exists()


def test_thread_count_does_not_change_outputs(workspace):
    out = workspace / "threads"
    assert main(["run", "--scenario", str(workspace / "scenario.yaml"), "--out", str(out), "--threads", "4",
                 "--emit-windows", *FAST]) == 0
    for name in ("parameters.csv", "corrected.csv"):
        assert filecmp.cmp(out / name, workspace / "direct" / name, shallow=False)


def test_debias_reproduces_two_event_example(tmp_path):
    (tmp_path / "h.csv").write_text("lag,h_A,h_delta\n0,0,1\n1,2,1\n")
    assert main(["debias", "--histogram", str(tmp_path / "h.csv"), "--out", str(tmp_path)]) == 0
    assert read(tmp_path / "distribution.csv") == "lag,f,F,degenerate_flag\n0,0.5,0.5,0\n1,0.5,1.0,0\n"


def test_flags_override_config_file(workspace, tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(yaml.safe_dump({"first_end": "2018-06", "optimizer": {"seed": 7, "max_generations": 20}}))
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--scenario", str(workspace / "scenario.yaml"),
                 "--out", str(out), "--seed", "3"]) == 0
    manifest = json.loads(read(out / "manifest.json"))
    assert manifest["seed"] == 3
    assert manifest["config"]["optimizer"]["max_generations"] == 20
    assert manifest["windows"]["count"] == 1


def test_missing_upstream_artifact_names_producer(tmp_path, capsys):
    assert main(["fit", "--windows", str(tmp_path / "windows.csv"), "--out", str(tmp_path)]) == 2
    assert "delaycorrect debias" in capsys.readouterr().err
    assert main(["correct", "--events", str(tmp_path / "e.csv"), "--parameters", str(tmp_path / "p.csv"),
                 "--out", str(tmp_path)]) == 2
    assert "delaycorrect ingest" in capsys.readouterr().err


def test_last_end_after_cutoff_fails_validation(workspace, tmp_path, capsys):
    rc = main(["run", "--scenario", str(workspace / "scenario.yaml"), "--out", str(tmp_path / "o"),
               "--last-end", "2019-01"])
    assert rc == 2
    assert "[debias]" in capsys.readouterr().err
    assert not (tmp_path / "o" / "events.csv").exists()  # partial outputs removed


@pytest.mark.parametrize("args", [
    ["--window-length", "0"], ["--lag-resolution", "7"], ["--threads", "0"], ["--first-end", "2018-13"],
])
def test_invalid_settings(workspace, tmp_path, args):
    assert main(["run", "--scenario", str(workspace / "scenario.yaml"), "--out", str(tmp_path), *args]) == 2


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("window_lenght: 12\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_data_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("entity_id,occurred_on,reported_on\nx,2018-05-02,2018-05-01\n")
    assert main(["run", "--input", str(bad), "--out", str(tmp_path / "o")]) == 3
    assert "[ingest]" in capsys.readouterr().err


def test_fit_failure_exit_code(tmp_path):
    # a corrupt distribution whose CDF is zero up to delta_max leaves nothing to fit
    d = tmp_path / "d"
    (d / "distributions").mkdir(parents=True)
    rows = ["lag,f,F,degenerate_flag"] + [f"{k},{float(k == 5)},0.0,1" for k in range(10)] + ["10,0.0,1.0,1"]
    (d / "distributions" / "2018-01.csv").write_text("\n".join(rows) + "\n")
    (d / "windows.csv").write_text(
        "window_end,start,end,cutoff,n_events,delta_max,a_max,sparse,degenerate,delta_fix,distribution\n"
        "2018-01,2016-02-01,2018-01-31,2018-01-31,5,5,10,1,1,10,distributions/2018-01.csv\n"
    )
    assert main(["fit", "--windows", str(d / "windows.csv"), "--out", str(tmp_path / "f")]) == 4
    assert not (tmp_path / "f" / "parameters.csv").exists()


def test_rejects_report(tmp_path):
    src = tmp_path / "raw.csv"
    lines = ["entity_id,occurred_on,reported_on", "x,,2018-01-01", "y,2018-01-02,2018-01-01"]
    rng = np.random.default_rng(0)
    for i in range(200):
        lines.append(f"e{i},2017-{rng.integers(1, 13):02d}-10,2018-01-{rng.integers(10, 29):02d}")
    src.write_text("\n".join(lines) + "\n")
    assert main(["ingest", "--input", str(src), "--out", str(tmp_path / "i"), "--default-dates", "keep"]) == 0
    assert read(tmp_path / "i" / "rejects.csv").splitlines() == [
        "line,reason,detail", "2,missing_occurred,occurrence date empty",
        "3,inconsistent,reported 2018-01-01 before occurred 2018-01-02",
    ]
