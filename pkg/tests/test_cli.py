import csv
import json
import math

import numpy as np
import pytest

from dynts import cli
from dynts.decay import DriftSchedule, discount_factor
from dynts.policies import PolicyConfig
from dynts.simulator import EnvironmentSpec, generate, run_experiment
from dynts.experiments import replicate_seeds

SMALL = """
n_seeds = 2
seed = 5
[environment]
horizon = 120
n_arms = 4
dim = 3
[model_select]
n_datasets = 3
n_train = 2
etas = [0.01, 0.1]
powers = [1.0, 2.0]
"""


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.toml"
    path.write_text(SMALL)
    return str(path)


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for name in ("CONFIG", "OUT", "SEED", "SEEDS", "THREADS"):
        monkeypatch.delenv(cli.ENV_PREFIX + name, raising=False)


def read_decay(path):
    lines = path.read_text().splitlines()
    header = json.loads(lines[0][2:])
    rows = list(csv.DictReader(lines[1:]))
    return header, rows


def snapshot(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


class TestDecay:
    def test_power_bound(self, tmp_path):
        assert cli.main(["decay", "--family", "power", "--eta", "1", "--p", "2", "--t-max", "1e6", "--out", str(tmp_path)]) == 0
        header, rows = read_decay(tmp_path / "decay.csv")
        assert header["tag"] == "bounded_below"
        assert header["lower_bound"] == pytest.approx(math.exp(-1))
        assert len(rows) >= 40 and int(rows[-1]["T"]) == 10**6
        assert all(float(r["lambda"]) > 0.36787 for r in rows)

    def test_static_is_an_error(self, tmp_path, capsys):
        assert cli.main(["decay", "--family", "static", "--out", str(tmp_path)]) != 0
        assert "no decay to classify" in capsys.readouterr().err
        assert not (tmp_path / "decay.csv").exists()

    def test_constant_exact(self, tmp_path):
        cli.main(["decay", "--family", "constant", "--eta", "1", "--t-max", "10", "--out", str(tmp_path)])
        _, rows = read_decay(tmp_path / "decay.csv")
        assert [int(r["T"]) for r in rows] == list(range(2, 11))
        for r in rows:
            assert float(r["lambda"]) == 2.0 ** (1 - int(r["T"]))
            assert r["lower_bound"] == ""

    def test_columns_and_values(self, tmp_path):
        cli.main(["decay", "--family", "exponential", "--eta", "1", "--gamma", "0.5", "--t-max", "1000", "--out", str(tmp_path)])
        header, rows = read_decay(tmp_path / "decay.csv")
        assert list(rows[0]) == list(cli.DECAY_COLUMNS)
        s = DriftSchedule.exponential(1.0, 0.5)
        for r in rows:
            assert float(r["lambda"]) == pytest.approx(discount_factor(s, 1, int(r["T"])).value, rel=1e-14)
        assert header["schedule"] == s.to_dict()

    def test_config_section(self, tmp_path):
        cfg = tmp_path / "d.toml"
        cfg.write_text('[decay]\nfamily = "power"\neta = 1.0\np = 1.0\nt_max = 100\nn_points = 5\n')
        cli.main(["decay", "--config", str(cfg), "--out", str(tmp_path)])
        header, rows = read_decay(tmp_path / "decay.csv")
        assert header["tag"] == "power_law" and len(rows) == 5

    def test_non_integer_horizon(self, tmp_path):
        assert cli.main(["decay", "--t-max", "10.5", "--out", str(tmp_path)]) == 2

    def test_invalid_parameters(self, tmp_path):
        assert cli.main(["decay", "--family", "power", "--eta", "-1", "--out", str(tmp_path)]) == 2


class TestRun:
    def test_files_and_determinism(self, tmp_path, small_config):
        a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
        assert cli.main(["run", "--config", small_config, "--out", str(a)]) == 0
        cli.main(["run", "--config", small_config, "--out", str(b)])
        cli.main(["run", "--config", small_config, "--out", str(c), "--threads", "2"])
        assert sorted(snapshot(a)) == ["steps_seed000.csv", "steps_seed001.csv", "summary.json"]
        assert snapshot(a) == snapshot(b) == snapshot(c)

    def test_summary_contents(self, tmp_path, small_config):
        cli.main(["run", "--config", small_config, "--out", str(tmp_path)])
        summary = json.loads((tmp_path / "summary.json").read_text())
        cfg = summary["config"]
        assert cfg["environment"]["horizon"] == 120
        assert cfg["environment"]["sigma0_scale"] == 0.001  # default echoed
        assert cfg["policy"] == {"kind": "thompson", "epsilon": 0.1, "c": 1.0}
        assert cfg["inference"]["drift"] == {"family": "power", "eta": 0.01, "p": 1.0}
        res = summary["results"]["thompson"]
        assert 0 < res["reward_ratio_mean"] <= 1
        assert [s["replicate"] for s in summary["seeds"]] == [0, 1]
        assert summary["seeds"][1]["dataset_seed"] == replicate_seeds(5, 1)[0]

    def test_csv_matches_library_exactly(self, tmp_path, small_config):
        cli.main(["run", "--config", small_config, "--out", str(tmp_path)])
        data_seed, policy_seed = replicate_seeds(5, 0)
        env = EnvironmentSpec.stationary(horizon=120, n_arms=4, dim=3, seed=data_seed)
        rec = run_experiment(generate(env), PolicyConfig("thompson"), DriftSchedule.power(0.01, 1), policy_seed)
        with open(tmp_path / "steps_seed000.csv") as fh:
            reader = csv.reader(fh)
            assert tuple(next(reader)) == cli.STEP_COLUMNS
            rows = list(reader)
        assert [int(r[1]) for r in rows] == rec.arms.tolist()
        np.testing.assert_array_equal([float(r[2]) for r in rows], rec.theta_hat)
        np.testing.assert_array_equal([float(r[4]) for r in rows], rec.reward_ratio)
        np.testing.assert_array_equal([float(r[5]) for r in rows], rec.avg_regret)

    def test_flag_and_env_overrides(self, tmp_path, small_config, monkeypatch):
        monkeypatch.setenv("DYNTS_SEEDS", "1")
        monkeypatch.setenv("DYNTS_CONFIG", small_config)
        monkeypatch.setenv("DYNTS_OUT", str(tmp_path / "env"))
        assert cli.main(["run"]) == 0
        assert sorted(snapshot(tmp_path / "env")) == ["steps_seed000.csv", "summary.json"]
        cli.main(["run", "--seeds", "3", "--seed", "9", "--out", str(tmp_path / "flag")])
        summary = json.loads((tmp_path / "flag" / "summary.json").read_text())
        assert summary["config"]["n_seeds"] == 3 and summary["config"]["seed"] == 9

    def test_bad_env_value(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("DYNTS_SEEDS", "zero")
        assert cli.main(["run", "--out", str(tmp_path)]) == 2
        assert "DYNTS_SEEDS" in capsys.readouterr().err

    @pytest.mark.parametrize(
        "text, message",
        [
            ("x = [", "cannot parse"),
            ("[environment]\nfoo = 1\n", "unknown config key"),
            ("[policy]\nkind = 'softmax'\n", "softmax"),
            ("environment = 3\n", "must be a table"),
            ("[inference]\ndim = 4\n[environment]\ndim = 3\nhorizon = 5\n", "dimension"),
            ("n_seeds = 0\n", "n_seeds"),
        ],
    )
    def test_config_errors(self, tmp_path, capsys, text, message):
        cfg = tmp_path / "bad.toml"
        cfg.write_text(text)
        assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
        assert message in capsys.readouterr().err
        assert not (tmp_path / "o").exists()

    def test_missing_config(self, tmp_path):
        assert cli.main(["run", "--config", str(tmp_path / "none.toml"), "--out", str(tmp_path)]) == 2

    def test_bad_flag(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["run", "--seeds", "0"])
        assert exc.value.code != 0


class TestModelSelect:
    def test_grid_rows(self, tmp_path, small_config):
        assert cli.main(["model-select", "--config", small_config, "--out", str(tmp_path)]) == 0
        with open(tmp_path / "model_select.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert [(float(r["eta"]), float(r["p"])) for r in rows] == [(0.01, 1), (0.1, 1), (0.01, 2), (0.1, 2)]
        summary = json.loads((tmp_path / "model_select.json").read_text())
        best = max(rows, key=lambda r: float(r["train_mean"]))
        assert summary["selected"] == {"family": "power", "eta": float(best["eta"]), "p": float(best["p"])}
        assert len(summary["dataset_seeds"]) == 3

    def test_one_point_grid(self, tmp_path, small_config):
        cfg = tmp_path / "one.toml"
        cfg.write_text(SMALL.replace("etas = [0.01, 0.1]", "etas = [0.03]").replace("powers = [1.0, 2.0]", "powers = [2.0]"))
        cli.main(["model-select", "--config", str(cfg), "--out", str(tmp_path)])
        summary = json.loads((tmp_path / "model_select.json").read_text())
        assert summary["selected"] == {"family": "power", "eta": 0.03, "p": 2.0}

    def test_deterministic(self, tmp_path, small_config):
        for d in ("a", "b"):
            cli.main(["model-select", "--config", small_config, "--out", str(tmp_path / d)])
        assert snapshot(tmp_path / "a") == snapshot(tmp_path / "b")


class TestReproduce:
    def test_decay_rates(self, tmp_path):
        cfg = tmp_path / "d.toml"
        cfg.write_text("[decay]\nt_max = 10000\nn_points = 20\n")
        assert cli.main(["reproduce", "decay_rates", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
        files = sorted((tmp_path / "o").iterdir())
        assert len(files) == 8
        for f in files:
            header, rows = read_decay(f)
            assert header["schedule"]["eta"] == 1.0
            lam = [float(r["lambda"]) for r in rows]
            assert all(b <= a for a, b in zip(lam, lam[1:]))

    @pytest.mark.parametrize("figure", ["stationary", "nonstationary"])
    def test_policy_figures(self, tmp_path, small_config, figure):
        out = tmp_path / figure
        assert cli.main(["reproduce", figure, "--config", small_config, "--out", str(out)]) == 0
        assert sorted(snapshot(out)) == ["curves.csv", "model_select.csv", "summary.json"]
        with open(out / "curves.csv") as fh:
            rows = list(csv.DictReader(fh))
        labels = {r["curve"] for r in rows}
        assert labels == {"thompson", "epsilon_greedy", "ucb1", "thompson_static"}
        assert len(rows) == 4 * 120
        summary = json.loads((out / "summary.json").read_text())
        expected = {"stationary": 2.0, "nonstationary": 1.0}[figure]
        assert summary["config"]["environment"]["drift"]["p"] == expected
        if figure == "stationary":
            assert summary["inference_drift"] == {"family": "power", "eta": 0.01, "p": 1.0}
        else:
            assert summary["inference_drift"] == summary["model_select"]["selected"]

    def test_rerun_identical(self, tmp_path, small_config):
        for d in ("a", "b"):
            cli.main(["reproduce", "nonstationary", "--config", small_config, "--out", str(tmp_path / d)])
        assert snapshot(tmp_path / "a") == snapshot(tmp_path / "b")

    def test_unknown_figure(self, tmp_path, capsys):
        assert cli.main(["reproduce", "fig99", "--out", str(tmp_path)]) == 2
        assert "unknown figure" in capsys.readouterr().err


def test_float_format_round_trips():
    rng = np.random.default_rng(0)
    for v in rng.standard_normal(1000) * 10.0 ** rng.integers(-300, 300, 1000):
        assert float(cli.fmt(v)) == v
    assert cli.fmt(np.int64(3)) == "3" and cli.fmt(None) == ""


def test_module_entry_point():
    import subprocess
    import sys

    out = subprocess.run([sys.executable, "-m", "dynts", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "reproduce" in out.stdout
