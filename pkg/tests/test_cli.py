"""Exit codes, artifacts and output of the ``attacklab`` command."""

import pytest

from attacklab.harness import load_record, parse_report
from attacklab.harness.cli import main
from attacklab.learners import load_policy

ORACLE_CFG = """
env.kind = tree_example1
env.depth = 6
attack.method = oracle-reg
attack.lambda = 1.0
"""

TREE_OPT_CFG = """
env.kind = tree_example1
env.depth = 5
attack.method = OPT
attack.algo = tabular-Q
attack.lambda_grid = 0.0,1.0
attack.train.episodes = 5000
eval.n_episodes = 2
"""

BASELINE_CFG = """
env.kind = tree_example1
env.depth = 5
attack.method = Ru-B
attack.threshold_grid = 0.2,0.8
eval.n_episodes = 2
"""

DEGRADED_CFG = """
env.kind = goalgather
env.width = 3
env.height = 3
env.horizon = 6
env.obs_radius = 0
base.train.episodes = 20
base.train.min_buffer = 16
base.train.batch_size = 8
base.train.hidden = 8
base.train.mixer_embed = 4
base.train.mixer_hyper_hidden = 8
eval.n_episodes = 5
attack.method = Ru-D
attack.targets = 7
"""


def write(tmp_path, text, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_oracle_prints_value_and_plan(tmp_path, capsys):
    code = main(["oracle", "--config", write(tmp_path, ORACLE_CFG)])
    assert code == 0
    out = capsys.readouterr().out
    assert "value=98" in out
    assert "count=2" in out
    assert "team_return=-100.0" in out
    assert "plan=3:" in out


def test_oracle_rejects_non_oracle_method(tmp_path, capsys):
    code = main(["oracle", "--config", write(tmp_path, BASELINE_CFG)])
    assert code == 2
    assert "config error" in capsys.readouterr().err


def test_missing_config_file_is_a_config_error(tmp_path, capsys):
    code = main(["oracle", "--config", str(tmp_path / "absent.cfg")])
    assert code == 2
    assert "config error" in capsys.readouterr().err


def test_malformed_config_is_a_config_error(tmp_path, capsys):
    code = main(["evaluate", "--config",
                 write(tmp_path, "env.kind = mars\n")])
    assert code == 2
    assert "config error" in capsys.readouterr().err


def test_train_base_saves_a_loadable_policy(tmp_path, capsys):
    cfg = write(tmp_path, "env.kind = tree_example1\nenv.depth = 5\n"
                          "eval.n_episodes = 2\n")
    code = main(["train-base", "--config", cfg, "--out", str(tmp_path / "run")])
    assert code == 0
    assert "saved" in capsys.readouterr().out
    assert (tmp_path / "run" / "base.policy").exists()
    policy = load_policy(tmp_path / "run" / "base")
    assert policy.algo == "tabular-VI"


def test_train_attack_sweeps_the_lambda_grid(tmp_path, capsys):
    cfg = write(tmp_path, TREE_OPT_CFG)
    code = main(["train-attack", "--config", cfg,
                 "--out", str(tmp_path / "run")])
    assert code == 0
    assert (tmp_path / "run" / "attack_lambda0.policy").exists()
    assert (tmp_path / "run" / "attack_lambda1.policy").exists()
    lines = [ln for ln in capsys.readouterr().out.splitlines() if ln]
    assert len(lines) == 2
    assert "[lambda=0.0]" in lines[0] and "[lambda=1.0]" in lines[1]


def test_train_attack_rejects_baseline_methods(tmp_path, capsys):
    code = main(["train-attack", "--config", write(tmp_path, BASELINE_CFG),
                 "--out", str(tmp_path / "run")])
    assert code == 2
    assert "OPT or RL-F" in capsys.readouterr().err


def test_train_attack_rejects_mismatched_base_policy(tmp_path, capsys):
    base_cfg = write(tmp_path, "env.kind = tree_example1\nenv.depth = 6\n"
                               "eval.n_episodes = 2\n", "base.cfg")
    assert main(["train-base", "--config", base_cfg,
                 "--out", str(tmp_path / "run")]) == 0
    capsys.readouterr()
    code = main(["train-attack", "--config", write(tmp_path, TREE_OPT_CFG),
                 "--out", str(tmp_path / "run"),
                 "--base", str(tmp_path / "run" / "base.policy")])
    assert code == 2
    assert "different environment" in capsys.readouterr().err


def test_attack_baseline_reports_every_grid_point(tmp_path, capsys):
    code = main(["attack-baseline", "--config", write(tmp_path, BASELINE_CFG)])
    assert code == 0
    lines = [ln for ln in capsys.readouterr().out.splitlines() if ln]
    assert len(lines) == 2
    assert all(ln.startswith("Ru-B [maxdiff threshold=") for ln in lines)
    assert all("win_rate=-" in ln for ln in lines)


def test_evaluate_writes_a_parseable_record(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["evaluate", "--config", write(tmp_path, ORACLE_CFG),
                 "--out", str(out), "--seed", "3"])
    assert code == 0
    assert "oracle-reg" in capsys.readouterr().out
    record = load_record(out / "record.txt")
    assert record.method == "oracle-reg"
    assert not record.degraded
    assert "run.master_seed = 3" in record.config_text


def test_evaluate_returns_3_when_a_seed_fails(tmp_path, capsys):
    code = main(["evaluate", "--config", write(tmp_path, DEGRADED_CFG),
                 "--out", str(tmp_path / "run")])
    assert code == 3
    captured = capsys.readouterr()
    assert "seed 0 failed" in captured.err
    record = load_record(tmp_path / "run" / "record.txt")
    assert record.degraded


def evaluate_records(tmp_path):
    paths = []
    for lam in ("0.5", "1.0"):
        cfg = write(tmp_path, ORACLE_CFG.replace("attack.lambda = 1.0",
                                                 f"attack.lambda = {lam}"),
                    f"lam{lam}.cfg")
        out = tmp_path / f"run{lam}"
        assert main(["evaluate", "--config", cfg, "--out", str(out)]) == 0
        paths.append(str(out / "record.txt"))
    return paths


def test_report_renders_and_round_trips(tmp_path, capsys):
    paths = evaluate_records(tmp_path)
    capsys.readouterr()
    assert main(["report", *paths, "--format", "delimited"]) == 0
    rows = parse_report(capsys.readouterr().out)
    assert [r["parameter"] for r in rows] == ["lambda=0.5", "lambda=1.0"]
    assert all(r["method"] == "oracle-reg" for r in rows)

    out = tmp_path / "report"
    assert main(["report", *paths, "--out", str(out)]) == 0
    assert (out / "report.txt").exists()


def test_report_figures_need_an_output_directory(tmp_path, capsys):
    paths = evaluate_records(tmp_path)
    capsys.readouterr()
    assert main(["report", *paths, "--figures"]) == 2
    assert "--out" in capsys.readouterr().err


def test_report_writes_figures(tmp_path, capsys):
    paths = evaluate_records(tmp_path)
    out = tmp_path / "report"
    assert main(["report", *paths, "--out", str(out), "--figures"]) == 0
    assert (out / "report.txt").exists()
    assert (out / "attack_density.png").exists()
    assert (out / "sparsity_lambda.png").exists()


def test_report_on_degraded_record_exits_3(tmp_path, capsys):
    assert main(["evaluate", "--config", write(tmp_path, DEGRADED_CFG),
                 "--out", str(tmp_path / "run")]) == 3
    capsys.readouterr()
    code = main(["report", str(tmp_path / "run" / "record.txt")])
    assert code == 3
    assert "yes" in capsys.readouterr().out


def test_unknown_subcommand_is_rejected():
    with pytest.raises(SystemExit):
        main(["frobnicate"])
