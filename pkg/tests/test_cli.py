import json

import pytest

from saddlelab.cli import main

BASE = """
function.name = saddle_abs
schedule.c = 0.05
schedule.alpha = 0.7
noise.kind = sphere
noise.sigma = 0.5
sgd.x0 = 0, 0.3
sgd.x_star = 0, 0
sgd.horizon = 300
sgd.radius = 0.5
sgd.seed = 77
sgd.selection = active_piece
mc.runs = 6
"""

CS = """
schedule.c = 0.5
schedule.alpha = 0.7
cs.j_plus = 1
cs.j_minus = -1
cs.g_coeff = 0.1
cs.delta_scale = 0.05
cs.steps = 300
cs.tau_start = 10
cs.level = 0.01
cs.runs = 5
cs.seed = 11
cs.e_kind = sphere
cs.e_sigma = 0.3
cs.r_scale = 0.05
cs.rt_scale = 0.05
"""


def write_cfg(tmp_path, text, out):
    path = tmp_path / "exp.cfg"
    path.write_text(text + f"out.dir = {out}\n")
    return str(path)


def read(path):
    with open(path, "rb") as fh:
        return fh.read()


class TestRun:
    def test_trajectory_csv_schema(self, tmp_path):
        out = tmp_path / "out"
        cfg = write_cfg(tmp_path, BASE, out)
        assert main(["run", "-c", cfg]) == 0
        lines = read(out / "trajectory.csv").decode().splitlines()
        assert lines[0].startswith("# version=")
        assert lines[1].startswith("# config_sha256=")
        assert lines[2] == "# seed=77"
        assert lines[3] == "n,gamma,x_0,x_1,f,dist_M"
        assert len(lines) == 4 + 301

    def test_rerun_byte_identical(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        cfg1 = write_cfg(tmp_path, BASE, out1)
        main(["run", "-c", cfg1])
        cfg2 = write_cfg(tmp_path, BASE, out2)
        main(["run", "-c", cfg2])
        assert read(out1 / "trajectory.csv") == read(out2 / "trajectory.csv")


class TestMonteCarlo:
    def test_worker_count_does_not_change_bytes(self, tmp_path):
        out1, out2 = tmp_path / "w1", tmp_path / "w2"
        main(["mc", "-c", write_cfg(tmp_path, BASE, out1), "--workers", "1"])
        main(["mc", "-c", write_cfg(tmp_path, BASE, out2), "--workers", "3"])
        assert read(out1 / "mc_runs.csv") == read(out2 / "mc_runs.csv")
        assert read(out1 / "mc_summary.json") == read(out2 / "mc_summary.json")

    def test_summary_fields(self, tmp_path):
        out = tmp_path / "out"
        main(["mc", "-c", write_cfg(tmp_path, BASE, out)])
        doc = json.loads(read(out / "mc_summary.json"))
        assert list(doc)[:4] == ["version", "config_sha256", "seed", "config"]
        total = (doc["fraction_escaped"] + doc["fraction_at_saddle"]
                 + doc["fraction_at_other_critical"])
        assert total == pytest.approx(1.0)

    def test_invalid_runs_exit_code(self, tmp_path):
        out = tmp_path / "out"
        cfg = write_cfg(tmp_path, BASE, out)
        assert main(["mc", "-c", cfg, "--runs", "0"]) == 1

    def test_seed_override(self, tmp_path):
        out = tmp_path / "out"
        cfg = write_cfg(tmp_path, BASE, out)
        main(["mc", "-c", cfg, "--seed", "123"])
        doc = json.loads(read(out / "mc_summary.json"))
        assert doc["seed"] == 123


class TestConditions:
    @pytest.mark.parametrize("kind", ["sharpness", "angle", "verdier",
                                      "weak_convexity"])
    def test_reports(self, tmp_path, kind):
        out = tmp_path / "out"
        text = BASE + f"conditions.kind = {kind}\nconditions.n_samples = 500\n" \
                      "conditions.n_segments = 200\nconditions.r = 0.1\n"
        assert main(["conditions", "-c", write_cfg(tmp_path, text, out)]) == 0
        doc = json.loads(read(out / f"conditions_{kind}.json"))
        assert doc["kind"] == kind
        assert doc["verdict"] in ("holds", "fails", "inconclusive")
        lines = read(out / f"conditions_{kind}_ratios.csv").decode().splitlines()
        assert lines[3] == "sample,ratio,distance"


class TestDrift:
    def test_csv_schema(self, tmp_path):
        out = tmp_path / "out"
        text = BASE + ("drift.x_grid = 0,0.02; 0,0.05\n"
                       "drift.gamma_grid = 0.01, 0.001\n"
                       "drift.n_mc = 200\ndrift.beta = 1.0\ndrift.c = 12.5\n")
        assert main(["drift", "-c", write_cfg(tmp_path, text, out)]) == 0
        lines = read(out / "drift.csv").decode().splitlines()
        assert lines[3] == "probe_x_0,probe_x_1,gamma,lhs,bound,fitted_C"
        assert len(lines) == 4 + 4
        doc = json.loads(read(out / "drift_summary.json"))
        assert doc["violations"] == 0


class TestRates:
    def test_outputs(self, tmp_path):
        out = tmp_path / "out"
        text = BASE.replace("function.name = saddle_abs",
                            "function.name = quad_min") \
                   .replace("sgd.x0 = 0, 0.3", "sgd.x0 = 0.05, 0.05") \
                   .replace("sgd.horizon = 300", "sgd.horizon = 2000")
        text += ("rates.runs = 5\nrates.a = 0.2\n"
                 "rates.checkpoints = 100, 500, 2000\n"
                 "rates.tail_grid = 100, 500, 1500\n")
        assert main(["rates", "-c", write_cfg(tmp_path, text, out)]) == 0
        lines = read(out / "rates.csv").decode().splitlines()
        assert lines[3] == "n,mean_scaled_z2"
        assert len(lines) == 4 + 3
        doc = json.loads(read(out / "rates_summary.json"))
        assert doc["rate_decreasing"] is True
        assert len(doc["tail_values"]) == 3


class TestCenterStable:
    def test_outputs_and_schema(self, tmp_path):
        out = tmp_path / "out"
        assert main(["centerstable", "-c", write_cfg(tmp_path, CS, out)]) == 0
        doc = json.loads(read(out / "centerstable_summary.json"))
        assert doc["n_runs"] == 5
        lines = read(out / "centerstable_run_0.csv").decode().splitlines()
        assert lines[3] == "n,gamma,chi,U,w_minus_0,tau_flag"
        assert len(lines) == 4 + 301

    def test_rerun_byte_identical(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["centerstable", "-c", write_cfg(tmp_path, CS, out1)])
        main(["centerstable", "-c", write_cfg(tmp_path, CS, out2)])
        assert read(out1 / "centerstable_run_0.csv") == read(
            out2 / "centerstable_run_0.csv")
        assert read(out1 / "centerstable_summary.json") == read(
            out2 / "centerstable_summary.json")


class TestApt:
    def test_prints_gap(self, capsys):
        assert main(["apt", "--T", "1", "--t", "99"]) == 0
        printed = capsys.readouterr().out.strip()
        assert float(printed) == pytest.approx(1.0 + 1.0 / 100 - 1.0 / 101,
                                               abs=1e-9)


class TestValidation:
    def test_bad_config_exit_code(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("schedule.alpha = 0.4\n")
        assert main(["run", "-c", str(path)]) == 1

    def test_missing_config(self):
        assert main(["run"]) == 1

    def test_missing_required_key_is_runtime_error(self, tmp_path):
        path = tmp_path / "partial.cfg"
        path.write_text("function.name = saddle_abs\n")
        # builders report the missing keys; dispatch maps them to exit 1
        assert main(["run", "-c", str(path)]) == 1
