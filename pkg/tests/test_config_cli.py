import json
import os
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from escapelab import cli, config
from escapelab.errors import ConfigError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

STATIONARY = """\
experiment: stationary
seed: 1
landscape:
  name: quadratic
  params: {a: 1.0}
grid:
  axes: [[-5.0, 5.0, 200]]
stationary:
  eta: 4.0
  epsilons: [0.5]
"""

FPE = """\
experiment: solve-fpe
seed: 2
landscape:
  name: quadratic
schedule:
  family: constant
  gamma: 0.5
  batch: 1
  beta: 1.0
grid:
  axes: [[-5.0, 5.0, 100]]
fpe:
  dt: %s
  t_end: 1.0
  record_every: 0.5
"""


def write(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def listing(path):
    return sorted(os.listdir(path)) if os.path.isdir(path) else []


class TestParse:
    def test_unknown_key_reports_line(self):
        text = STATIONARY.replace("  eta: 4.0\n", "  eta: 4.0\n  etta: 2.0\n")
        with pytest.raises(ConfigError) as info:
            config.parse_config(text)
        assert info.value.line == 10
        assert "etta" in str(info.value) or "unknown" in str(info.value)

    def test_duplicate_key_reports_line(self):
        text = STATIONARY.replace("seed: 1\n", "seed: 1\nseed: 2\n")
        with pytest.raises(ConfigError) as info:
            config.parse_config(text)
        assert info.value.line == 3

    def test_negative_step_reports_line(self):
        with pytest.raises(ConfigError) as info:
            config.parse_config(FPE % "-0.01")
        assert info.value.line == 13

    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError) as info:
            config.parse_config("colour: blue\n" + STATIONARY)
        assert info.value.line == 1

    def test_missing_required_section(self):
        with pytest.raises(ConfigError, match="grid"):
            config.parse_config(STATIONARY.replace("grid:\n  axes: [[-5.0, 5.0, 200]]\n", ""))

    def test_unknown_landscape_lists_builtins(self):
        with pytest.raises(ConfigError, match="double_well_1d") as info:
            config.parse_config(STATIONARY.replace("quadratic", "banana"))
        assert info.value.line == 4

    def test_yaml_round_trip(self):
        cfg = config.parse_config(STATIONARY)
        again = config.parse_config(cfg.to_yaml())
        assert again.fingerprint() == cfg.fingerprint()
        assert again.data == cfg.data

    def test_fingerprint_sees_values(self):
        a = config.parse_config(STATIONARY)
        b = config.parse_config(STATIONARY.replace("eta: 4.0", "eta: 5.0"))
        assert a.fingerprint() != b.fingerprint()

    @pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.yaml")), ids=lambda p: p.stem)
    def test_shipped_configs_parse(self, path):
        cfg = config.load_config(str(path))
        assert cfg.kind in config.KINDS


class TestMain:
    def test_run_writes_manifest(self, tmp_path, capsys):
        out = tmp_path / "out"
        assert cli.main(["run", "--config", write(tmp_path, STATIONARY), "--out", str(out)]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["experiment"] == "stationary"
        assert manifest["master_seed"] == 1
        files = {a["file"] for a in manifest["artifacts"]}
        assert {"density.csv", "summary.csv", "trapping.csv"} <= files
        assert set(listing(out)) == files | {"manifest.json"}
        head = (out / "summary.csv").read_text().splitlines()[:3]
        assert head[0] == f"# fingerprint={manifest['config_fingerprint']}"
        assert head[1] == "# master_seed=1"

    def test_stationary_variance(self, tmp_path):
        out = tmp_path / "out"
        cli.main(["run", "--config", write(tmp_path, STATIONARY), "--out", str(out)])
        rows = [ln for ln in (out / "summary.csv").read_text().splitlines()
                if not ln.startswith("#")]
        table = {tuple(r.split(",")[:2]): float(r.split(",")[2]) for r in rows[1:]}
        assert table[("variance", "0")] == pytest.approx(0.25, rel=1e-3)

    def test_config_error_exits_2_without_artifacts(self, tmp_path, capsys):
        out = tmp_path / "out"
        path = write(tmp_path, FPE % "-0.01")
        assert cli.main(["run", "--config", path, "--out", str(out)]) == 2
        assert "line 13" in capsys.readouterr().err
        assert listing(out) == []

    def test_numeric_error_exits_3_without_artifacts(self, tmp_path, capsys):
        out = tmp_path / "out"
        assert cli.main(["run", "--config", write(tmp_path, FPE % "0.5"), "--out",
                         str(out)]) == 3
        assert "StepSizeError" in capsys.readouterr().err
        assert listing(out) == []

    def test_missing_file(self, tmp_path):
        assert cli.main(["validate", "--config", str(tmp_path / "nope.yaml")]) == 2

    def test_bad_arguments(self):
        assert cli.main(["run"]) == 2
        assert cli.main(["frobnicate"]) == 2

    def test_environment_sets_output(self, tmp_path, monkeypatch):
        monkeypatch.setenv(cli.ENV_OUT, str(tmp_path / "env"))
        assert cli.main(["run", "--config", write(tmp_path, STATIONARY)]) == 0
        assert "manifest.json" in listing(tmp_path / "env")

    def test_validate_clean(self, tmp_path, capsys):
        assert cli.main(["validate", "--config", write(tmp_path, STATIONARY)]) == 0
        text = capsys.readouterr().out
        assert "eta: 4.0" in text
        assert "diagnostics: none" in text

    def test_validate_names_truncated_bound(self, tmp_path, capsys):
        narrow = STATIONARY.replace("[[-5.0, 5.0, 200]]", "[[-5.0, 1.5, 200]]")
        assert cli.main(["validate", "--config", write(tmp_path, narrow)]) == 2
        err = capsys.readouterr().err
        assert "upper" in err and "1.5" in err

    def test_validate_reports_step_bound(self, tmp_path, capsys):
        assert cli.main(["validate", "--config", write(tmp_path, FPE % "0.5")]) == 2
        assert "dt" in capsys.readouterr().err


class TestConsoleScript:
    def test_entry_point(self, tmp_path):
        exe = shutil.which("escape-lab")
        cmd = [exe] if exe else [sys.executable, "-m", "escapelab.cli"]
        res = subprocess.run(cmd + ["validate", "--config", write(tmp_path, STATIONARY)],
                             capture_output=True, text=True)
        assert res.returncode == 0
        assert "diagnostics: none" in res.stdout
