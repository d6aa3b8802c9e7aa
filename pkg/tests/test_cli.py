import json

import numpy as np
import pytest

from bregmin.cli import (
    EXIT_CERTIFICATE_FAILURE,
    EXIT_CONFIG_ERROR,
    EXIT_OK,
    ConfigError,
    ExperimentConfig,
    compare_models,
    config_to_dict,
    main,
    parse_config,
    run_experiment,
)


def write_config(tmp_path, name="cfg.json", **body):
    path = tmp_path / name
    path.write_text(json.dumps(body))
    return str(path)


class TestParseConfig:
    def test_minimal_defaults(self, tmp_path):
        cfg = parse_config(write_config(tmp_path, problem="poisson", seed=0))
        assert cfg.lam == 0.1
        assert cfg.epsilon == 1e-8
        assert (cfg.m, cfg.n) == (50, 10)
        assert cfg.reg == "none"

    def test_unknown_problem_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="problem"):
            parse_config(write_config(tmp_path, problem="sudoku"))

    def test_unknown_key_rejected_by_name(self, tmp_path):
        with pytest.raises(ConfigError, match="warp_factor"):
            parse_config(write_config(tmp_path, problem="poisson", warp_factor=9))

    def test_missing_problem_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="required"):
            parse_config(write_config(tmp_path, seed=0))

    def test_flag_overrides_file_value(self, tmp_path):
        path = write_config(tmp_path, problem="poisson", **{"lambda": 0.1})
        cfg = parse_config(path, {"lam": 0.5})
        assert cfg.lam == 0.5

    def test_round_trip(self, tmp_path):
        cfg = parse_config(write_config(tmp_path, problem="robust_pr", reg="l1",
                                        seed=3, max_iters=7))
        again = parse_config(write_config(tmp_path, "b.json", **config_to_dict(cfg)))
        assert again == cfg

    def test_invalid_json_rejected(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{nope")
        with pytest.raises(ConfigError, match="JSON"):
            parse_config(str(path))


class TestRunExperiment:
    def test_poisson_run_writes_csv_and_passes(self, tmp_path, capsys):
        out = str(tmp_path / "trace.csv")
        cfg = ExperimentConfig(problem="poisson", seed=0, max_iters=300,
                               emit_certificates=True, record_time=False,
                               map_samples=2000, map_radius=3.0, output=out)
        assert run_experiment(cfg) == EXIT_OK
        lines = open(out).read().strip().split("\n")
        data = [l for l in lines if not l.startswith("#") and not l.startswith("iter")]
        assert len(data) == 301
        lyap = np.array([float(l.split(",")[3]) for l in data])
        assert np.all(np.diff(lyap) <= 1e-9 * (1 + abs(lyap[0])))
        assert any(l.startswith("# certificates:") for l in lines)

    def test_zero_budget_run(self, tmp_path):
        out = str(tmp_path / "tiny.csv")
        cfg = ExperimentConfig(problem="phase_retrieval_m1", max_iters=0,
                               record_time=False, output=out)
        assert run_experiment(cfg) == EXIT_OK
        rows = open(out).read().strip().split("\n")
        assert len(rows) == 2  # header plus the initial row

    def test_m2_with_l1_regularization(self, tmp_path):
        # the inner solver reaches its tolerance on the vast majority of rows
        out = str(tmp_path / "m2.csv")
        cfg = ExperimentConfig(problem="phase_retrieval_m2", reg="l1", seed=0,
                               max_iters=500, record_time=False, output=out)
        assert run_experiment(cfg) == EXIT_OK
        data = [l for l in open(out).read().strip().split("\n")[1:]
                if not l.startswith("#")]
        res = np.array([float(l.split(",")[7]) for l in data[1:]])
        assert res.shape[0] == 500
        assert np.mean(res <= 1e-9) >= 0.95

    def test_replay_is_byte_identical(self, tmp_path):
        out_a = str(tmp_path / "a.csv")
        out_b = str(tmp_path / "b.csv")
        base = dict(problem="poisson", seed=1, max_iters=50, record_time=False)
        assert run_experiment(ExperimentConfig(output=out_a, **base)) == EXIT_OK
        assert run_experiment(ExperimentConfig(output=out_b, **base)) == EXIT_OK
        assert open(out_a, "rb").read() == open(out_b, "rb").read()

    def test_forced_certificate_failure_exits_three(self, tmp_path):
        cfg = ExperimentConfig(problem="poisson", seed=0, max_iters=20,
                               emit_certificates=True, record_time=False,
                               certificate_slack=-1.0, map_samples=200,
                               map_radius=3.0, output=str(tmp_path / "f.csv"))
        assert run_experiment(cfg) == EXIT_CERTIFICATE_FAILURE

    def test_check_only_writes_nothing(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        cfg = ExperimentConfig(problem="poisson", seed=0, max_iters=30,
                               record_time=False, map_samples=500, map_radius=3.0)
        assert run_experiment(cfg, check_only=True) == EXIT_OK
        assert not list(tmp_path.glob("*.csv"))


class TestCompare:
    def test_m1_versus_m2_shares_instance(self, tmp_path, capsys):
        out = str(tmp_path / "cmp.csv")
        a = ExperimentConfig(problem="phase_retrieval_m1", seed=0, max_iters=40,
                             record_time=False)
        b = ExperimentConfig(problem="phase_retrieval_m2", seed=0, max_iters=40,
                             record_time=False)
        assert compare_models(a, b, out) == EXIT_OK
        text = capsys.readouterr().out
        digests = [w.split("=")[1] for w in text.split() if w.startswith("instance_")]
        assert len(digests) == 2 and digests[0] == digests[1]
        assert "winner:" in text
        verdict = text.strip().split("winner:")[1].strip()
        assert verdict in ("phase_retrieval_m1", "phase_retrieval_m2", "tie")

    def test_compare_with_certificates(self, tmp_path, capsys):
        out = str(tmp_path / "cmp_cert.csv")
        common = dict(seed=0, max_iters=40, record_time=False,
                      emit_certificates=True, map_samples=1500)
        a = ExperimentConfig(problem="phase_retrieval_m1", **common)
        b = ExperimentConfig(problem="phase_retrieval_m2", **common)
        assert compare_models(a, b, out) == EXIT_OK
        assert "winner:" in capsys.readouterr().out

    def test_mismatched_seeds_rejected(self, tmp_path):
        a = ExperimentConfig(problem="phase_retrieval_m1", seed=0)
        b = ExperimentConfig(problem="phase_retrieval_m2", seed=1)
        assert compare_models(a, b, str(tmp_path / "x.csv")) == EXIT_CONFIG_ERROR

    def test_requires_the_two_models(self, tmp_path):
        a = ExperimentConfig(problem="poisson", seed=0)
        b = ExperimentConfig(problem="phase_retrieval_m2", seed=0)
        assert compare_models(a, b, str(tmp_path / "x.csv")) == EXIT_CONFIG_ERROR


class TestMain:
    def test_run_subcommand(self, tmp_path):
        cfg = write_config(tmp_path, problem="poisson", seed=0, max_iters=20,
                           record_time=False)
        out = str(tmp_path / "o.csv")
        assert main(["run", "--config", cfg, "--output", out]) == EXIT_OK
        assert (tmp_path / "o.csv").exists()

    def test_invalid_problem_exits_two(self, tmp_path):
        cfg = write_config(tmp_path, problem="nonsense")
        assert main(["run", "--config", cfg]) == EXIT_CONFIG_ERROR

    def test_check_subcommand_healthy(self, tmp_path):
        cfg = write_config(tmp_path, problem="poisson", seed=0, max_iters=40,
                           record_time=False, map_samples=500, map_radius=3.0)
        assert main(["check", "--config", cfg]) == EXIT_OK

    def test_flag_only_invocation(self, tmp_path):
        out = str(tmp_path / "flags.csv")
        code = main(["run", "--problem", "poisson", "--seed", "2",
                     "--max-iters", "15", "--no-timing", "--output", out])
        assert code == EXIT_OK

    def test_multi_seed_jobs(self, tmp_path):
        cfg = write_config(tmp_path, problem="poisson", max_iters=10,
                           record_time=False)
        out = str(tmp_path / "multi.csv")
        code = main(["run", "--config", cfg, "--output", out,
                     "--seeds", "0,1", "--jobs", "2"])
        assert code == EXIT_OK
        assert (tmp_path / "multi_seed0.csv").exists()
        assert (tmp_path / "multi_seed1.csv").exists()
