import json
import subprocess
import sys

import pytest

from graphsparse.cli import run


def first_json_line(text):
    return json.loads(text.splitlines()[0])


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    assert run(["gen-data", "--nodes", "8", "--steps", "600", "--seed", "7", "--out", str(out)]) == 0
    return out


class TestGenData:
    def test_files(self, data_dir):
        assert (data_dir / "series.csv").exists() and (data_dir / "series.adj").exists()
        assert (data_dir / "series.csv").read_text().startswith("nodes=8 steps=600 rate_min=5\n")

    def test_prints_config_first(self, tmp_path, capsys):
        run(["gen-data", "--nodes", "4", "--steps", "100", "--out", str(tmp_path)])
        cfg = first_json_line(capsys.readouterr().out)
        assert cfg["command"] == "gen-data" and cfg["nodes"] == 4 and cfg["seed"] == 0

    def test_env_seed_overrides(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("GSNET_SEED", "11")
        run(["gen-data", "--nodes", "4", "--steps", "100", "--seed", "3", "--out", str(tmp_path)])
        assert first_json_line(capsys.readouterr().out)["seed"] == 11

    def test_domain_error_exit_1(self, tmp_path, capsys):
        assert run(["gen-data", "--nodes", "1", "--out", str(tmp_path)]) == 1
        assert "DataError" in capsys.readouterr().err


class TestUsage:
    def test_unknown_command(self):
        assert run(["frobnicate"]) == 2

    def test_unknown_flag(self, tmp_path):
        assert run(["gen-data", "--bogus", "--out", str(tmp_path)]) == 2

    def test_bad_env_seed(self, tmp_path, monkeypatch):
        monkeypatch.setenv("GSNET_SEED", "abc")
        assert run(["gen-data", "--out", str(tmp_path)]) == 2

    def test_bad_ratios(self, data_dir, tmp_path):
        assert run(["train", "--data", str(data_dir), "--ratios", "0.5,0.5", "--out", str(tmp_path)]) == 2

    def test_bad_value(self, data_dir, tmp_path):
        assert run(["train", "--data", str(data_dir), "--lr", "-1", "--out", str(tmp_path)]) == 2

    def test_parallel_needs_flops_only(self, tmp_path):
        assert run(["bench", "--ns", "16,24,32", "--jobs", "2", "--out", str(tmp_path)]) == 2


class TestTrainEval:
    @pytest.mark.parametrize("model", ["gsnet", "dense_gcn"])
    def test_end_to_end(self, data_dir, tmp_path, model):
        out = tmp_path / model
        assert run(["train", "--data", str(data_dir), "--model", model, "--epochs", "2",
                    "--d", "4", "--out", str(out)]) == 0
        assert (out / "train_log.csv").exists() and (out / "checkpoint.bin").exists()
        assert run(["eval", "--data", str(data_dir), "--out", str(out)]) == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["model"] == model
        assert metrics["test"]["mae"] > 0 and metrics["test"]["rmse"] >= metrics["test"]["mae"]
        assert metrics["historical_average"]["mae"] > 0

    def test_missing_data(self, tmp_path):
        assert run(["train", "--data", str(tmp_path / "nope"), "--out", str(tmp_path)]) == 1

    def test_sparsity_from_checkpoint_and_adjacency(self, data_dir, tmp_path):
        out = tmp_path / "d"
        run(["train", "--data", str(data_dir), "--model", "dense_gcn", "--epochs", "1",
             "--d", "4", "--out", str(out)])
        assert run(["sparsity", "--checkpoint", str(out / "checkpoint.bin"), "--out", str(out)]) == 0
        rep = json.loads((out / "sparsity.json").read_text())
        assert rep["tau"] == pytest.approx(1 / 8) and 0 <= rep["gini"] <= 1
        assert run(["sparsity", "--adjacency", str(data_dir / "series.adj"), "--out", str(tmp_path)]) == 0

    def test_sparsity_rejects_gsnet(self, data_dir, tmp_path):
        run(["train", "--data", str(data_dir), "--epochs", "1", "--d", "4", "--out", str(tmp_path)])
        assert run(["sparsity", "--checkpoint", str(tmp_path / "checkpoint.bin"),
                    "--out", str(tmp_path)]) == 1


class TestVerify:
    def test_theorem(self, tmp_path, capsys):
        assert run(["verify-theorem", "--n", "20", "--rank", "4", "--trials", "100",
                    "--out", str(tmp_path)]) == 0
        rep = json.loads((tmp_path / "theorem.json").read_text())
        assert rep["max_residual"] < 1e-8 and rep["passed"]

    def test_gradients(self, tmp_path):
        assert run(["verify-gradients", "--draws", "200", "--out", str(tmp_path)]) == 0
        rep = json.loads((tmp_path / "gradients.json").read_text())
        assert rep["softmax_bound_holds"] and rep["violations"] == 0

    def test_bench(self, tmp_path):
        assert run(["bench", "--ns", "16,24,32", "--d", "4", "--flops-only", "--jobs", "2",
                    "--out", str(tmp_path)]) == 0
        assert (tmp_path / "scaling.csv").exists()
        assert set(json.loads((tmp_path / "scaling.json").read_text())["exponents"]) == {
            "gsnet", "dense_gcn"}


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "graphsparse", "verify-theorem", "--trials", "3",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0
    assert first_json_line(proc.stdout)["command"] == "verify-theorem"
