import json
import subprocess
import sys

import numpy as np
import pytest

from jumpparticles import config as cfgmod
from jumpparticles.cli import main
from jumpparticles.errors import ConfigError
from jumpparticles.io import (read_snapshot_binary, read_snapshot_csv, write_snapshot_binary,
                              write_snapshot_csv)

MINIMAL = """\
schema_version: 1
scenario: simulate
seed: 3
model: {name: example1-exp}
coefficients: {name: kac}
simulation: {T: 0.2, dt: 0.1, M: 2, N: 10, init: {kind: gaussian, mean: [0.0]}}
"""


def write(tmp_path, text, name="run.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestConfig:
    def test_empty_file(self):
        with pytest.raises(ConfigError, match="empty"):
            cfgmod.parse_text("   \n")

    def test_zero_particles(self):
        with pytest.raises(ConfigError, match="simulation.N"):
            cfgmod.parse_text(MINIMAL.replace("N: 10", "N: 0"))

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="dtt"):
            cfgmod.parse_text(MINIMAL.replace("dt: 0.1", "dtt: 0.1"))

    def test_bad_schema_version(self):
        with pytest.raises(ConfigError):
            cfgmod.parse_text(MINIMAL.replace("schema_version: 1", "schema_version: 2"))

    def test_malformed_yaml_reports_position(self):
        with pytest.raises(ConfigError, match="line"):
            cfgmod.parse_text("scenario: [simulate\nseed: 1\n")

    def test_defaults_filled(self):
        cfg = cfgmod.parse_text(MINIMAL)
        assert cfg["threads"] == 1 and cfg["estimator"]["theorem"] == "2.3i"
        assert cfgmod.parse_text(cfgmod.dumps(cfg)) == cfg

    def test_json_accepted(self):
        cfg = cfgmod.parse_text(json.dumps({"scenario": "tail-quantities", "model": {"name": "example1-exp"},
                                            "coefficients": {"name": "example1-exp"}}))
        assert cfg["scenario"] == "tail-quantities"


class TestMain:
    def test_minimal_simulate(self, tmp_path):
        out = tmp_path / "out"
        assert main(["--config", str(write(tmp_path, MINIMAL)), "--out", str(out)]) == 0
        x = read_snapshot_csv(out / "snapshot_000.csv")
        assert x.shape == (10, 1)
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["status"] == 0 and manifest["seed"] == 3
        assert set(manifest["files"]) == {"snapshot_000.csv", "summary.json"}

    def test_unknown_scenario(self, tmp_path):
        out = tmp_path / "out"
        code = main(["--config", str(write(tmp_path, MINIMAL)), "--out", str(out), "--scenario", "dance"])
        assert code == 2 and not out.exists()

    def test_missing_config_file(self, tmp_path):
        assert main(["--config", str(tmp_path / "absent.yaml")]) == 2

    def test_numeric_failure_code(self, tmp_path):
        # a constant envelope has no finite tail integral
        text = ("scenario: tail-quantities\nmodel: {name: example1-exp}\n"
                "coefficients: {name: constant-jump}\nsimulation: {M: 2}\n")
        out = tmp_path / "out"
        assert main(["--config", str(write(tmp_path, text)), "--out", str(out)]) == 3
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["status"] == 3 and "NonConvergentTailError" in manifest["error"]

    def test_unknown_model_is_usage_error(self, tmp_path):
        text = MINIMAL.replace("coefficients: {name: kac}", "coefficients: {name: nope}")
        assert main(["--config", str(write(tmp_path, text)), "--out", str(tmp_path / "out")]) == 2

    def test_rerun_is_byte_identical(self, tmp_path):
        cfg = write(tmp_path, MINIMAL.replace("N: 10", "N: 200"))
        main(["--config", str(cfg), "--out", str(tmp_path / "a")])
        main(["--config", str(cfg), "--out", str(tmp_path / "b"), "--threads", "4"])
        for name in ("snapshot_000.csv", "summary.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_replay_from_manifest(self, tmp_path):
        main(["--config", str(write(tmp_path, MINIMAL)), "--out", str(tmp_path / "a")])
        main(["--config", str(tmp_path / "a" / "manifest.json"), "--out", str(tmp_path / "b")])
        assert (tmp_path / "a" / "snapshot_000.csv").read_bytes() == (tmp_path / "b" / "snapshot_000.csv").read_bytes()

    def test_seed_override(self, tmp_path):
        cfg = write(tmp_path, MINIMAL)
        main(["--config", str(cfg), "--out", str(tmp_path / "a")])
        main(["--config", str(cfg), "--out", str(tmp_path / "b"), "--seed", "4"])
        assert (tmp_path / "a" / "snapshot_000.csv").read_bytes() != (tmp_path / "b" / "snapshot_000.csv").read_bytes()

    def test_tail_quantities(self, tmp_path):
        text = ("scenario: tail-quantities\nmodel: {name: example1-exp, params: {a2: 2.0, p_decay: 1.0}}\n"
                "coefficients: {name: example1-exp, params: {a2: 2.0, p_decay: 1.0}}\n"
                "simulation: {T: 1.0, M: 5}\n")
        out = tmp_path / "out"
        assert main(["--config", str(write(tmp_path, text)), "--out", str(out)]) == 0
        data = json.loads((out / "tail_quantities.json").read_text())
        assert data["a_M_T"] == pytest.approx(np.exp(-5), rel=1e-6)

    def test_density_columns(self, tmp_path):
        text = MINIMAL.replace("scenario: simulate", "scenario: density") + \
            "estimator: {N: 50, grid: {lo: -1, hi: 1, points: 5}}\n"
        out = tmp_path / "out"
        assert main(["--config", str(write(tmp_path, text)), "--out", str(out)]) == 0
        header = (out / "density.csv").read_text().splitlines()[0].split(",")
        assert header[:5] == ["x1", "value", "method", "delta", "N"]
        assert len((out / "density.csv").read_text().splitlines()) == 6

    def test_module_entry_point(self, tmp_path):
        out = tmp_path / "out"
        proc = subprocess.run([sys.executable, "-m", "jumpparticles", "--config", str(write(tmp_path, MINIMAL)),
                               "--out", str(out)], capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        assert (out / "manifest.json").exists()


class TestSnapshots:
    def test_binary_round_trip(self, tmp_path):
        x = np.random.default_rng(0).normal(size=(7, 2))
        write_snapshot_binary(tmp_path / "s.bin", x, 0.5)
        y, t = read_snapshot_binary(tmp_path / "s.bin")
        assert np.array_equal(x, y) and t == 0.5

    def test_csv_round_trip_is_exact(self, tmp_path):
        x = np.array([[0.1, 1 / 3], [-2e-300, 1e300]])
        write_snapshot_csv(tmp_path / "s.csv", x)
        assert np.array_equal(read_snapshot_csv(tmp_path / "s.csv"), x)

    def test_truncated_binary_rejected(self, tmp_path):
        write_snapshot_binary(tmp_path / "s.bin", np.zeros((4, 1)), 0.0)
        data = (tmp_path / "s.bin").read_bytes()
        (tmp_path / "t.bin").write_bytes(data[:-3])
        with pytest.raises(Exception):
            read_snapshot_binary(tmp_path / "t.bin")
        (tmp_path / "u.bin").write_bytes(b"XXXX" + data[4:])
        with pytest.raises(Exception):
            read_snapshot_binary(tmp_path / "u.bin")
