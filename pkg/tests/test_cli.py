import json

import pytest

from invfilter import cli, runner
from invfilter.config import ConfigError, RunConfig, parse_config, validate


def test_empty_config_gives_defaults():
    cfg = parse_config("")
    assert cfg == RunConfig()
    assert (cfg.coarse_n, cfg.fine_n, cfg.noise_level) == (60, 120, 0.05)
    plan = runner.resolve(parse_config("experiment = rate_study_dm1"))
    assert plan["replicates"] == 20
    assert plan["N_list"][0] == 100 and plan["N_list"][-1] == 3000


def test_parsing_types_comments_and_lists():
    cfg = parse_config("""
        # a comment
        experiment = rate_study_dm2
        s_values = 1, 2
        N_list = 10,20,30,40   # inline comment
        gamma = none
        seed = 7
    """)
    assert cfg.s_values == (1.0, 2.0) and cfg.N_list == (10, 20, 30, 40)
    assert cfg.gamma is None and cfg.seed == 7


@pytest.mark.parametrize("text", [
    "foo = 1",
    "coarse_n = ten",
    "experiment = fancy",
    "q = 1.0",
    "seed = none",
    "a = 1\na = 2",
    "just a line",
    "fine_n = 100",
    "N_list = 1,2",
    "filter = variant\nq = 0.5",
])
def test_rejections(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_validate_reports():
    assert validate("")["valid"]
    report = validate("experiment = variant_blowup\nq = 1.5")
    assert not report["valid"] and "0 < q < 1" in report["errors"][0]
    report = validate("s = 4")
    assert report["valid"] and report["warnings"]
    assert validate("experiment = rate_study_dm1")["cost"]["mode_updates"] > 0


def small_config(tmp_path, body):
    path = tmp_path / "run.cfg"
    path.write_text(body + f"\noutput_dir = {tmp_path / 'out'}\n")
    return path


def test_run_single_writes_artifacts(tmp_path):
    path = small_config(tmp_path, "coarse_n = 8\nfine_n = 16\nn_iter = 12\nreplicates = 3")
    assert cli.main(["run", str(path)]) == 0
    out = tmp_path / "out"
    lines = (out / "trajectory.csv").read_text().splitlines()
    assert lines[0] == "n,error,bias_sq,variance,mse,stderr"
    assert len(lines) == 13
    assert "e" in lines[1].split(",")[1]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["checksums"]["trajectory.csv"] == runner.sha256(out / "trajectory.csv")
    assert manifest["config"]["coarse_n"] == 8


def test_manifest_rerun_is_bit_exact(tmp_path):
    path = small_config(tmp_path, "experiment = rate_study_dm1\ncoarse_n = 8\nfine_n = 16\n"
                                  "s_values = 1\nfilters = kalman\nN_list = 5,10,15,20\n"
                                  "replicates = 3")
    assert cli.main(["run", str(path)]) == 0
    first = tmp_path / "out"
    manifest = first / "manifest.json"
    assert cli.main(["run", str(manifest), "-o", str(tmp_path / "again")]) == 0
    for name in ("trajectory.csv", "slopes.csv", "summary.json"):
        assert (first / name).read_bytes() == (tmp_path / "again" / name).read_bytes()
    header = (first / "slopes.csv").read_text().splitlines()[0]
    assert header == "param_set,predicted_exponent,fitted_slope,residual"


def test_every_row_decomposes(tmp_path):
    path = small_config(tmp_path, "experiment = rate_study_dm2\ncoarse_n = 8\nfine_n = 16\n"
                                  "s_values = 1\nN_list = 4,8,16,32\nreplicates = 10")
    assert cli.main(["run", str(path)]) == 0
    for line in (tmp_path / "out" / "trajectory.csv").read_text().splitlines()[1:]:
        n, err, bias, var, mse, se = map(float, line.split(","))
        assert abs(mse - bias - var) <= 3 * se


def test_exit_codes(tmp_path, monkeypatch, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("nope = 3\n")
    assert cli.main(["run", str(bad)]) == 2
    assert cli.main(["run", str(tmp_path / "missing.cfg")]) == 2
    assert cli.main(["validate", str(bad)]) == 2

    def boom(cfg):
        raise FloatingPointError("non-finite mean at step 3")
    monkeypatch.setattr(runner, "execute", boom)
    ok = small_config(tmp_path, "coarse_n = 8\nfine_n = 16")
    assert cli.main(["run", str(ok)]) == 3
    assert "numerical failure" in capsys.readouterr().err


def test_variant_single_run(tmp_path):
    path = small_config(tmp_path, "coarse_n = 8\nfine_n = 16\nfilter = variant\n"
                                  "alpha_rule = variant_geometric\nalpha = 1\nq = 0.5\n"
                                  "n_iter = 8")
    assert cli.main(["run", str(path)]) == 0


def test_oracle_command(capsys):
    assert cli.main(["oracle"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out and all(line.startswith("PASS") for line in out)


def test_oracle_suite_experiment(tmp_path):
    path = small_config(tmp_path, "experiment = oracle_suite")
    assert cli.main(["run", str(path)]) == 0
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["all_passed"]


def test_thread_env(monkeypatch):
    monkeypatch.setenv(runner.THREADS_ENV, "2")
    assert runner.thread_limit() == 2
    monkeypatch.setenv(runner.THREADS_ENV, "x")
    with pytest.raises(ValueError):
        runner.thread_limit()
