import json

import pytest

from railfd import cli
from railfd import pipeline
from railfd.config import ExperimentConfig, config_from_dict, load_config
from railfd.errors import ConfigError, StageError

SMOKE = {
    "seed": 3,
    "fleet": {"n_train": 3, "n_healthy_test": 2, "n_shelling": 2, "n_crack": 2, "monitoring_days": 40, "visit_interval_days": 40},
    "train": {"epochs": 1, "steps_per_epoch": 3},
}


def write(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


def run_cli(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


# -- config -------------------------------------------------------------------

def test_defaults_valid():
    cfg = load_config()
    assert cfg.seed == 7 and cfg.threshold("contrastive-ocsvm") == 0.88 and cfg.threshold("dyncoeff") == 1.8


@pytest.mark.parametrize("bad", [
    {"seed": 1, "thresholds": {"contrastive_ocsvm": 0.9}},
    {"seed": 1, "treshold": 1},
    {"seed": 1, "encoder": {"filter": 3}},
    {"seed": 1, "fleet": {"n_wheel": 3}},
    {"seed": 1, "detectors": ["ensemble", "helm"]},
    {"seed": 1, "detectors": ["magic"]},
    {"seed": -1},
    {"seed": 2**64},
    {"seed": 1, "dataset": "/nonexistent/path"},
    {"seed": 1, "task": "images"},
    {"seed": 1, "ocsvm": {"nu": 0}},
    {"fleet": {}},
])
def test_invalid_configs(bad):
    with pytest.raises(ConfigError):
        config_from_dict(bad).validate()


def test_seed_override_and_out(tmp_path):
    cfg = load_config(write(tmp_path, {"seed": 1}), seed=2**64 - 1, out=str(tmp_path / "o"))
    assert cfg.seed == 2**64 - 1 and cfg.output_dir == str(tmp_path / "o")


def test_to_dict_round_trip():
    cfg = config_from_dict({**SMOKE, "helm": {"layer_sizes": [5, 5]}})
    d = cfg.to_dict()
    d.pop("output_dir")
    assert config_from_dict(d).to_dict() == cfg.to_dict() | {"output_dir": ExperimentConfig().output_dir}


# -- CLI errors ---------------------------------------------------------------

def test_cli_config_error_json(tmp_path, capsys):
    code, _, err = run_cli(["--config", write(tmp_path, {"seed": 1, "detectors": ["ensemble"]}), "run"], capsys)
    assert code == 2
    rec = json.loads(err.strip().splitlines()[-1])
    assert rec["error"] == "ConfigError" and rec["stage"] == "config" and "ensemble" in rec["message"]


def test_cli_bad_json(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text("{nope")
    code, _, err = run_cli(["--config", str(p), "run"], capsys)
    assert code == 2 and json.loads(err)["error"] == "ConfigError"


def test_cli_stage_error_json(tmp_path, capsys):
    code, _, err = run_cli(["--out", str(tmp_path / "empty"), "train"], capsys)
    rec = json.loads(err)
    assert code == 1 and rec["stage"] == "train" and rec["error"] == "FormatError"


def test_cli_stage_commands_need_wheel_task(tmp_path, capsys):
    code, _, err = run_cli(["--config", write(tmp_path, {"seed": 1, "task": "supervised-toy"}), "prep"], capsys)
    assert code == 2 and json.loads(err)["error"] == "ConfigError"


def test_cli_help_lists_commands(capsys):
    with pytest.raises(SystemExit):
        cli.main(["--help"])
    out = capsys.readouterr().out
    for name in cli.COMMANDS:
        assert name in out


# -- pipeline -----------------------------------------------------------------

@pytest.fixture(scope="module")
def smoke_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("smoke")
    cfg = config_from_dict(SMOKE)
    cfg.output_dir = str(out / "a")
    report = pipeline.run_pipeline(cfg)
    return cfg, report, out


def test_run_writes_artifacts(smoke_run):
    cfg, report, _ = smoke_run
    out = pipeline.Path(cfg.output_dir)
    for name in ("dataset/manifest.json", "prepared.npz", "model.rhm", "loss_history.csv", "health_helm.csv",
                 "health_contrastive-ocsvm.csv", "health_dyncoeff.csv", "detections.json", "report.json", "report.txt", "timings.json"):
        assert (out / name).exists(), name
    assert not (out / pipeline.INCOMPLETE).exists()
    body = json.loads((out / "report.json").read_text())
    assert set(body["detectors"]) == {"contrastive-ocsvm", "helm", "dyncoeff", "ensemble"}
    assert "timings" not in body and "output_dir" not in body["config"]


def test_rerun_identical_report(smoke_run, tmp_path):
    cfg, _, _ = smoke_run
    cfg2 = config_from_dict(SMOKE)
    cfg2.output_dir = str(tmp_path / "b")
    pipeline.run_pipeline(cfg2)
    a = (pipeline.Path(cfg.output_dir) / "report.json").read_bytes()
    b = (tmp_path / "b" / "report.json").read_bytes()
    assert a == b


def test_stage_by_stage_cli_matches_run(smoke_run, tmp_path, capsys):
    cfg, _, _ = smoke_run
    path = write(tmp_path, SMOKE)
    out = str(tmp_path / "c")
    for stage in pipeline.WHEEL_STAGES:
        code, _, err = run_cli(["--config", path, "--out", out, stage], capsys)
        assert code == 0, err
    assert (tmp_path / "c" / "report.json").read_bytes() == (pipeline.Path(cfg.output_dir) / "report.json").read_bytes()


def test_external_dataset(smoke_run, tmp_path):
    cfg, _, _ = smoke_run
    cfg2 = config_from_dict({**SMOKE, "dataset": str(pipeline.Path(cfg.output_dir) / "dataset"), "detectors": ["dyncoeff"]})
    cfg2.output_dir = str(tmp_path / "d")
    report = pipeline.run_pipeline(cfg2)
    assert list(report.detectors) == ["dyncoeff"]
    assert not (tmp_path / "d" / "dataset").exists()


def test_failure_leaves_marker(tmp_path):
    cfg = config_from_dict(SMOKE)
    cfg.output_dir = str(tmp_path / "e")
    pipeline.run_stage(cfg, "simulate")
    (tmp_path / "e" / "dataset" / "measurements" / "wheel_0000.wlc").write_bytes(b"junk")
    cfg.dataset = str(tmp_path / "e" / "dataset")
    with pytest.raises(StageError) as info:
        pipeline.run_pipeline(cfg)
    assert info.value.stage == "prep"
    marker = (tmp_path / "e" / pipeline.INCOMPLETE).read_text()
    assert marker.startswith("failed prep: FormatError")


def test_plots(smoke_run):
    pytest.importorskip("matplotlib")
    from railfd.plots import plot_health_series

    cfg, _, _ = smoke_run
    paths = plot_health_series(cfg)
    assert paths and all(p.suffix == ".svg" and p.stat().st_size > 0 for p in paths)
