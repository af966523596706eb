import csv
import io
import json
import subprocess
import sys

import pytest

from banditscape import cli

CONFIGS = {
    "simulate": {"K": 2, "T": 8, "n_episodes": 3, "seed": 4, "forecaster": {"kind": "pde_forecaster"}, "adversary": {"kind": "balanced_uniform_adversary"}},
    "dp-value": {"K": 2, "T": 1, "grid_b": 20, "grid_a": 10},
    "expansion-check": {"functional": {"kind": "quadratic_x", "M": [[1, 0], [0, 1]]}, "signal": "+1", "T": [16, 64, 256]},
    "potential-probe": {"K": 2, "t": [0.0, 0.5], "n_points": 4, "seed": 2},
    "regret-sweep": {"K": 2, "T": [16, 32, 64], "n_episodes": 50, "seed": 9},
}


def run(args, cwd):
    return subprocess.run([sys.executable, "-m", "banditscape.cli", *args], capture_output=True, text=True, cwd=cwd)


@pytest.fixture
def config_file(tmp_path):
    def write(name, obj):
        path = tmp_path / f"{name}.json"
        path.write_text(json.dumps(obj))
        return str(path)

    return write


class TestCommands:
    @pytest.mark.parametrize("command", sorted(CONFIGS))
    def test_byte_identical_reruns(self, command, config_file, tmp_path):
        path = config_file(command, CONFIGS[command])
        first = run([command, "--config", path], tmp_path)
        second = run([command, "--config", path], tmp_path)
        assert first.returncode == 0, first.stderr
        assert first.stdout == second.stdout
        assert first.stdout

    def test_simulate_lines(self, config_file, tmp_path):
        out = run(["simulate", "--config", config_file("s", CONFIGS["simulate"])], tmp_path).stdout
        lines = out.splitlines()
        assert len(lines) == 3
        trace = json.loads(lines[0])
        assert len(trace["signals"]) == 8

    def test_dp_flags(self, tmp_path):
        out = run(["dp-value", "--k", "2", "--t", "1", "--grid-b", "20", "--grid-a", "10"], tmp_path)
        assert out.returncode == 0, out.stderr
        assert json.loads(out.stdout)["value"] == pytest.approx(0.5, abs=0.01)

    def test_expansion_csv(self, config_file, tmp_path):
        out = run(["expansion-check", "--config", config_file("e", CONFIGS["expansion-check"])], tmp_path).stdout
        rows = list(csv.reader(io.StringIO(out.split("{", 1)[0])))
        assert rows[0] == ["order", "T", "measured", "predicted", "error"]
        assert len(rows) == 7

    def test_probe_columns(self, config_file, tmp_path):
        out = run(["potential-probe", "--config", config_file("p", CONFIGS["potential-probe"])], tmp_path).stdout
        rows = list(csv.DictReader(io.StringIO(out)))
        assert len(rows) == 8
        for r in rows:
            assert float(r["grad1"]) + float(r["grad2"]) == pytest.approx(1.0, abs=1e-9)

    def test_probe_uniform_residual_vanishes_at_half(self):
        rows = list(csv.DictReader(io.StringIO(cli.cmd_potential_probe(dict(CONFIGS["potential-probe"], sigma=0.5)))))
        assert all(abs(float(r["uniform_residual"])) <= 1e-9 for r in rows)

    def test_sweep_writes_pair(self, config_file, tmp_path):
        prefix = tmp_path / "sweep"
        res = run(["regret-sweep", "--config", config_file("r", CONFIGS["regret-sweep"]), "--output", str(prefix)], tmp_path)
        assert res.returncode == 0, res.stderr
        assert json.loads((tmp_path / "sweep.json").read_text())["fits"]
        assert (tmp_path / "sweep.csv").read_text().startswith("K,T,")


class TestErrors:
    def test_bad_strategy_exit_code(self, config_file, tmp_path):
        cfg = dict(CONFIGS["simulate"], forecaster={"kind": "exp3"})
        res = run(["simulate", "--config", config_file("bad", cfg)], tmp_path)
        assert res.returncode == 2
        assert "pde_forecaster" in res.stderr

    def test_dp_horizon_limit(self, tmp_path):
        assert run(["dp-value", "--k", "2", "--t", "9"], tmp_path).returncode == 2

    def test_probe_time_range(self):
        with pytest.raises(ValueError):
            cli.cmd_potential_probe({"t": [1.0]})

    def test_signal_parsing(self):
        assert cli.parse_signal("-2").index == 1
        assert cli.parse_signal(1).positive
