import json

import numpy as np
import pytest

from convdensity.cli import main


def run(argv):
    return main(argv)


@pytest.fixture
def sample_file(tmp_path):
    out = str(tmp_path / "sample")
    assert run(["simulate", "--target", "gaussian", "--alpha", "0.5",
                "--noise", "laplace:1", "--n", "400", "--seed", "31",
                "--out", out]) == 0
    return out + ".csv"


class TestSimulate:
    def test_writes_csv_and_sidecar(self, tmp_path):
        out = str(tmp_path / "s")
        assert run(["simulate", "--n", "25", "--seed", "7", "--out", out]) == 0
        pts = np.loadtxt(out + ".csv", delimiter=",")
        assert pts.shape == (25,)
        meta = json.loads(open(out + ".csv.meta.json").read())
        assert (meta["d"], meta["n"], meta["seed"]) == (1, 25, 7)
        assert "config_hash" in meta

    def test_deterministic(self, tmp_path):
        a, b = str(tmp_path / "a"), str(tmp_path / "b")
        for out in (a, b):
            run(["simulate", "--alpha", "1", "--noise", "laplace:1",
                 "--n", "50", "--seed", "3", "--out", out])
        assert open(a + ".csv", "rb").read() == open(b + ".csv", "rb").read()


class TestEstimate:
    def test_runs_and_writes_rows(self, tmp_path, sample_file, capsys):
        out = str(tmp_path / "est")
        code = run(["estimate", sample_file, "--alpha", "0.5",
                    "--noise", "laplace:1", "--eval-grid=-3:3:31",
                    "--describe-grid", "--out", out])
        assert code == 0
        assert "grid summary" in capsys.readouterr().out
        lines = open(out + ".csv").read().strip().splitlines()
        assert lines[0] == "x_1,k_1,estimate,objective,boundary_hit"
        assert len(lines) == 32
        diag = json.loads(open(out + ".json").read())
        assert diag["certified_margin"] == 0.5
        assert diag["selection_gap"] <= 1e-12

    def test_byte_identical_replay(self, tmp_path, sample_file):
        outs = [str(tmp_path / "r1"), str(tmp_path / "r2")]
        for out in outs:
            assert run(["estimate", sample_file, "--alpha", "0.5",
                        "--noise", "laplace:1", "--eval-grid=-2:2:11",
                        "--out", out]) == 0
        assert open(outs[0] + ".csv", "rb").read() == \
            open(outs[1] + ".csv", "rb").read()
        assert open(outs[0] + ".json", "rb").read() == \
            open(outs[1] + ".json", "rb").read()

    def test_empty_sample_error(self, tmp_path, capsys):
        empty = tmp_path / "empty.csv"
        empty.write_text("")
        code = run(["estimate", str(empty), "--out", str(tmp_path / "x")])
        assert code == 2
        payload = json.loads(capsys.readouterr().out)
        assert payload["error"] == "empty-sample"

    def test_unknown_kernel_error(self, tmp_path, sample_file, capsys):
        code = run(["estimate", sample_file, "--kernel", "boxcar",
                    "--out", str(tmp_path / "x")])
        assert code == 2
        payload = json.loads(capsys.readouterr().out)
        assert payload["error"] == "unknown-kernel"
        assert "smooth" in payload["message"]

    def test_clip_nonnegative(self, tmp_path, sample_file):
        out = str(tmp_path / "clip")
        assert run(["estimate", sample_file, "--alpha", "0.5",
                    "--noise", "laplace:1", "--eval-grid=-6:6:41",
                    "--clip-nonnegative", "--out", out]) == 0
        rows = np.loadtxt(out + ".csv", delimiter=",", skiprows=1)
        assert np.all(rows[:, 2] >= 0.0)
        diag = json.loads(open(out + ".json").read())
        assert diag["clipped_mass"] >= 0.0


class TestBenchmark:
    def test_small_run_and_replay(self, tmp_path):
        args = ["benchmark", "--target", "gaussian", "--alpha", "0",
                "--noise", "none", "--n-list", "256,512", "--replicates", "2",
                "--seed", "5", "--p", "2", "--quad-nodes", "81",
                "--threads", "1"]
        a, b = str(tmp_path / "a"), str(tmp_path / "b")
        assert run(args + ["--out", a]) == 0
        assert run(args + ["--out", b]) == 0
        assert open(a + ".csv", "rb").read() == open(b + ".csv", "rb").read()
        assert open(a + ".json", "rb").read() == open(b + ".json", "rb").read()
        payload = json.loads(open(a + ".json").read())
        assert {row["method"] for row in payload["rows"]} >= {"selected", "oracle"}

    def test_zero_replicates_rejected(self, tmp_path, capsys):
        code = run(["benchmark", "--replicates", "0",
                    "--out", str(tmp_path / "x")])
        assert code == 2
        assert json.loads(capsys.readouterr().out)["error"] == "invalid-replicates"

    def test_config_file_with_flag_override(self, tmp_path):
        cfg = tmp_path / "run.ini"
        cfg.write_text(
            "[model]\nalpha = 0.0\nnoise = none\n"
            "[estimator]\nkernel = smooth\np = 2.0\n"
            "[experiment]\ntarget = gaussian\nn-list = 256\n"
            "replicates = 2\nseed = 5\nquad-nodes = 81\n")
        out = str(tmp_path / "cfg")
        assert run(["benchmark", "--config", str(cfg), "--threads", "1",
                    "--replicates", "3", "--out", out]) == 0
        payload = json.loads(open(out + ".json").read())
        assert payload["config"]["replicates"] == 3  # flag wins
        assert payload["config"]["n_list"] == [256]


class TestInspectKernel:
    def test_direct_case_constants(self, tmp_path):
        out = str(tmp_path / "ker")
        assert run(["inspect-kernel", "--alpha", "0", "--noise", "none",
                    "--h", "1.0", "--out", out]) == 0
        payload = json.loads(open(out + ".json").read())
        assert payload["gamma"] == [0.0]
        assert payload["sup_bound"] >= 1.0

    def test_laplace_dump_matches_symbolic_oracle(self, tmp_path):
        import convdensity as cd

        out = str(tmp_path / "ker")
        assert run(["inspect-kernel", "--alpha", "1", "--noise", "laplace:1",
                    "--mu", "2", "--h", "1.0", "--out", out]) == 0
        h, window, values = cd.load_kernel_dump(out + ".bin")
        k = cd.get_kernel("smooth")
        nodes = window[0, 0] + np.arange(values.size) * \
            (window[0, 1] - window[0, 0]) / values.size
        oracle = k(nodes / h[0]) / h[0] - k.second_derivative(nodes / h[0]) / h[0] ** 3
        assert np.max(np.abs(values - oracle)) < 1e-4

    def test_gaussian_pure_deconv_rejected(self, tmp_path, capsys):
        code = run(["inspect-kernel", "--alpha", "1", "--noise", "gaussian:1",
                    "--out", str(tmp_path / "x")])
        assert code == 2
        assert json.loads(capsys.readouterr().out)["error"] == "assumption-violated"


class TestParser:
    def test_help_lists_flags(self, capsys):
        with pytest.raises(SystemExit):
            main(["estimate", "--help"])
        text = capsys.readouterr().out
        for flag in ["--alpha", "--noise", "--kernel", "--grid-mode", "--p",
                     "--k-min", "--k-max", "--seed", "--out",
                     "--describe-grid", "--clip-nonnegative", "--threads"]:
            assert flag in text

    def test_unknown_flag_is_hard_error(self, capsys):
        with pytest.raises(SystemExit) as err:
            main(["simulate", "--does-not-exist", "1", "--out", "/tmp/x"])
        assert err.value.code == 2
