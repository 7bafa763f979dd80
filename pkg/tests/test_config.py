"""
設定ファイルの読み込みと検証のテスト
"""

import os
import sys
from pathlib import Path

import pytest
from pydantic import ValidationError

# プロジェクトルートをパスに追加
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from config import OUT_DIR_ENV, dump_config, load_config, parse_config, resolve_out_dir
from errors import OutputError, ParameterValidationError
from model import NDFEB_REFERENCE_SPECS, params_from_specs
from stability import min_spin

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"

MAGNET = """
params:
  magnet:
    density: 7400.0
    remanence: 0.25
    disk_diameter: 0.014
    disk_height: 0.006
    pole_kappa: 17.6
    pole_half_gap: 0.05
"""

INLINE = """
params:
  kappa: 17.6
  h: 0.05
  mu: 0.18375
  M: 6.8349e-3
  I_perp: 1.0423e-7
  I_axial: 1.6746e-7
"""


class TestShippedConfigs:
    """同梱の設定ファイル"""

    @pytest.mark.parametrize("name, command", [
        ("orbitron-reference.yaml", "equilibrium"),
        ("orbitron-stability-map.yaml", "stability"),
        ("orbitron-simulate.yaml", "simulate"),
        ("orbitron-montecarlo.yaml", "montecarlo"),
    ])
    def test_load(self, name, command):
        config = load_config(CONFIG_DIR / name)
        assert config.command == command
        assert config.params.build() == params_from_specs(NDFEB_REFERENCE_SPECS)

    def test_dump_is_idempotent(self):
        for path in sorted(CONFIG_DIR.glob("*.yaml")):
            config = load_config(path)
            once = dump_config(config)
            twice = dump_config(parse_config(once))
            assert once == twice, path.name


class TestParseConfig:
    """設定ブロックの検証"""

    def test_inline_params(self):
        config = parse_config(INLINE + "equilibrium:\n  r0: 0.075\n  n0: 1.8e-5\n")
        params = config.params.build()
        assert params.kappa == 17.6
        assert params.I_axial == 1.6746e-7
        assert config.equilibrium.resolve_n0(params) == 1.8e-5

    def test_n0_over_min(self):
        config = parse_config(MAGNET + "equilibrium:\n  r0: 0.075\n  n0_over_min: 1.5\n")
        params = config.params.build()
        n0_min, _ = min_spin(params, 0.075)
        assert config.equilibrium.resolve_n0(params) == pytest.approx(1.5 * n0_min, rel=1e-15)

    def test_exactly_one_command_block(self):
        with pytest.raises(ValidationError):
            parse_config(MAGNET)
        with pytest.raises(ValidationError):
            parse_config(MAGNET + "equilibrium:\n  r0: 0.075\n  n0: 1e-5\n"
                         "montecarlo:\n  equilibrium:\n    r0: 0.075\n    n0: 1e-5\n  n_trials: 3\n")

    def test_unknown_keys_rejected(self):
        with pytest.raises(ValidationError):
            parse_config(MAGNET + "equilibrium:\n  r0: 0.075\n  n0: 1e-5\n  spin: 3\n")
        with pytest.raises(ValidationError):
            parse_config(MAGNET + "equilibrium:\n  r0: 0.075\n  n0: 1e-5\nextra: 1\n")

    def test_params_source_rules(self):
        with pytest.raises(ValidationError):
            parse_config(MAGNET + "  kappa: 17.6\nequilibrium:\n  r0: 0.075\n  n0: 1e-5\n")
        with pytest.raises(ValidationError):
            parse_config("params:\n  kappa: 17.6\nequilibrium:\n  r0: 0.075\n  n0: 1e-5\n")

    def test_spin_choice(self):
        with pytest.raises(ValidationError):
            parse_config(MAGNET + "equilibrium:\n  r0: 0.075\n")
        with pytest.raises(ValidationError):
            parse_config(MAGNET + "equilibrium:\n  r0: 0.075\n  n0: 1e-5\n  n0_over_min: 1.5\n")

    def test_simulate_block(self):
        base = MAGNET + "simulate:\n  equilibrium:\n    r0: 0.075\n    n0: 2e-5\n"
        config = parse_config(base + "  periods: 2\n")
        assert config.simulate.equations == "classical"
        assert config.simulate.renormalize is True
        with pytest.raises(ValidationError):
            parse_config(base + "  periods: 2\n  t_end: 5.0\n")
        with pytest.raises(ValidationError):
            parse_config(base)
        with pytest.raises(ValidationError):
            parse_config(base + "  periods: 2\n  equations: lagrangian\n")

    def test_sweep_block(self):
        text = MAGNET + (
            "stability:\n  sweep:\n    ratio_min: 0.5\n    ratio_max: 2.5\n    ratio_steps: 201\n"
            "    n0_min: 0.0\n    n0_max: 4.0e-5\n    n0_steps: 41\n"
        )
        sweep = parse_config(text).stability.sweep
        assert len(sweep.ratios()) == 201
        assert sweep.ratios()[150] == pytest.approx(2.0)
        assert sweep.n0_values()[-1] == 4.0e-5
        with pytest.raises(ValidationError):
            parse_config(text.replace("ratio_max: 2.5", "ratio_max: 0.4"))
        with pytest.raises(ValidationError):
            parse_config(text.replace("n0_steps: 41", "n0_steps: 0"))
        with pytest.raises(ValidationError):
            parse_config(MAGNET + "stability:\n  oracle: false\n")

    def test_require_command(self):
        config = parse_config(MAGNET + "equilibrium:\n  r0: 0.075\n  n0: 1e-5\n")
        config.require_command("equilibrium")
        with pytest.raises(ParameterValidationError):
            config.require_command("simulate")

    def test_malformed_text(self):
        with pytest.raises(ParameterValidationError):
            parse_config("params: [unclosed\n")
        with pytest.raises(ParameterValidationError):
            parse_config("- just\n- a list\n")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParameterValidationError):
            load_config(tmp_path / "missing.yaml")


class TestOutputDirectory:
    """出力先の決定"""

    def test_cli_value_wins(self, tmp_path, monkeypatch):
        monkeypatch.setenv(OUT_DIR_ENV, str(tmp_path / "env"))
        out = resolve_out_dir(str(tmp_path / "cli"))
        assert out == tmp_path / "cli"
        assert out.is_dir()

    def test_environment_variable(self, tmp_path, monkeypatch):
        monkeypatch.setenv(OUT_DIR_ENV, str(tmp_path / "env"))
        assert resolve_out_dir() == tmp_path / "env"

    def test_default(self, tmp_path, monkeypatch):
        monkeypatch.delenv(OUT_DIR_ENV, raising=False)
        monkeypatch.chdir(tmp_path)
        assert resolve_out_dir() == Path("orbitron_out")
        assert (tmp_path / "orbitron_out").is_dir()

    def test_unwritable(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OutputError):
            resolve_out_dir(str(blocker / "sub"))


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
