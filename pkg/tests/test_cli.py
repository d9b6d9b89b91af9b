import json

import pytest
import yaml

from lifelong_dp.cli import (ExperimentConfig, compare_runs, main, parse_config, read_config,
                             run_experiment)
from lifelong_dp.exceptions import (ComparisonError, ConfigurationError, NumericError,
                                    ParameterError)

SMALL = """\
name: tiny
n_tasks: 2
n_train: 120
n_test: 40
n_features: 8
n_classes: 3
h1_size: 4
hidden_sizes: [6]
batch_size: 40
seeds: [0, 1]
"""


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(SMALL)
    return path


def test_unknown_key_reports_line():
    with pytest.raises(ConfigurationError, match=r"c.yaml:3: unknown key 'epsilon'"):
        parse_config("name: a\nn_tasks: 2\nepsilon: 1\n", "c.yaml")


def test_type_and_value_errors():
    with pytest.raises(ConfigurationError, match="eps1"):
        parse_config("eps1: high\n")
    with pytest.raises(ConfigurationError, match="eps1"):
        parse_config("eps1: -1\n")
    with pytest.raises(ConfigurationError, match="duplicate"):
        parse_config("eps1: 1\neps1: 2\n")
    with pytest.raises(ConfigurationError, match="target_epsilon"):
        parse_config("mechanism: naive-gaussian\n")
    with pytest.raises(ConfigurationError, match=":1:"):
        parse_config("eps1: [1\n", "x.yaml")


def test_defaults_and_roundtrip():
    cfg = parse_config("")
    assert cfg.repeat == 10 and cfg.seed_list() == list(range(10))
    again = parse_config(yaml.safe_dump(cfg.to_dict()))
    assert again == cfg and again.config_hash() == cfg.config_hash()


def test_overrides_win():
    cfg = parse_config("eps1: 0.5\n", overrides=[("eps1", 0.25)])
    assert cfg.eps1 == 0.25
    with pytest.raises(ConfigurationError, match="--set"):
        parse_config("", overrides=[("nope", 1)])


def test_task_order_flag_for_rates():
    cfg = parse_config("generator: multirate\nn_classes: 5\n",
                       overrides=[("task_order", [50, 20, 10, 5])])
    assert cfg.task_order == [50, 20, 10, 5]
    with pytest.raises(ConfigurationError, match="task_order"):
        parse_config("generator: multirate\ntask_order: [50, 20]\n")


def test_run_writes_artifacts_and_is_deterministic(config_file, tmp_path):
    cfg = read_config(config_file)
    assert run_experiment(cfg, tmp_path / "a") == 0
    assert run_experiment(cfg, tmp_path / "b") == 0
    seed_dir = tmp_path / "a" / "seed_0"
    for name in ("accuracy_matrix.csv", "metrics.csv", "budget.csv", "memory_manifest.csv",
                 "step_log.csv", "manifest.json", "checkpoints/release_02.npz"):
        assert (seed_dir / name).exists(), name
    for name in ("accuracy_matrix.csv", "metrics.csv", "budget.csv", "step_log.csv"):
        assert (seed_dir / name).read_bytes() == (tmp_path / "b/seed_0" / name).read_bytes()
    manifest = json.loads((seed_dir / "manifest.json").read_text())
    assert manifest["config_hash"] == cfg.config_hash() and manifest["seed"] == 0
    summary = (tmp_path / "a" / "summary.csv").read_text().splitlines()
    assert summary[0].startswith("tau,avg_accuracy_mean,avg_accuracy_std")
    assert len(summary) == 3


def test_failed_seed_is_isolated(config_file, tmp_path, monkeypatch):
    import lifelong_dp.cli as cli
    real = cli.train_lifelong

    def flaky(tasks, shape, privacy, cfg, run_id="run", params=None):
        if cfg.seed == 1:
            raise NumericError("boom")
        return real(tasks, shape, privacy, cfg, run_id, params)

    monkeypatch.setattr(cli, "train_lifelong", flaky)
    code = run_experiment(read_config(config_file), tmp_path / "out")
    assert code == 2
    top = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert {r["seed"]: r["status"] for r in top["runs"]} == {0: "ok", 1: "failed"}
    assert (tmp_path / "out" / "seed_0" / "metrics.csv").exists()
    assert "boom" in (tmp_path / "out" / "seed_1" / "manifest.json").read_text()


def test_compare(config_file, tmp_path):
    run_experiment(read_config(config_file), tmp_path / "a")
    out = compare_runs([tmp_path / "a", tmp_path / "a"], tmp_path / "cmp")
    assert [r["p_value"] for r in out["pvalues"]] == [None, 1.0]
    assert out["table"][0]["mechanism"] == "l2dp"
    with pytest.raises(ParameterError):
        compare_runs([], tmp_path / "cmp")
    other = read_config(config_file, overrides=[("n_tasks", 3)])
    run_experiment(other, tmp_path / "c")
    with pytest.raises(ComparisonError):
        compare_runs([tmp_path / "a", tmp_path / "c"], tmp_path / "cmp")


def test_main_exit_codes(config_file, tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("LIFELONG_DP_OUTPUT_ROOT", str(tmp_path / "root"))
    assert main(["budget", str(config_file)]) == 0
    assert capsys.readouterr().out.startswith("total_epsilon,")
    assert main(["run", str(config_file), "--seeds", "3", "--output", "r"]) == 0
    assert (tmp_path / "root" / "r" / "seed_3" / "metrics.csv").exists()
    bad = tmp_path / "bad.yaml"
    bad.write_text("foo: 1\n")
    assert main(["run", str(bad)]) == 1
    assert "unknown key" in capsys.readouterr().err
    assert main(["compare", "--output", "x"]) == 1


def test_gen_data_then_files_generator(tmp_path):
    spec = tmp_path / "g.yaml"
    spec.write_text(f"n_tasks: 2\nn_train: 50\nn_test: 10\nn_features: 4\nn_classes: 2\n"
                    f"output_dir: {tmp_path / 'data'}\n")
    assert main(["gen-data", str(spec)]) == 0
    assert len(list((tmp_path / "data").glob("*.ldpd"))) == 4
    spec.write_text("mechanism: l2dp\n")
    assert main(["gen-data", str(spec)]) == 1
    cfg = ExperimentConfig(generator="files", data_dir=str(tmp_path / "data"), h1_size=3,
                           hidden_sizes=[4], batch_size=25, n_classes=2, seeds=[0])
    assert run_experiment(cfg, tmp_path / "run") == 0
