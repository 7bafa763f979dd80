"""
実行設定 (YAML) の読み込みと検証
各コマンドの設定ブロックを pydantic モデルとして定義する
"""

import os
from pathlib import Path
from typing import List, Literal, Optional

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, model_validator

from errors import OutputError, ParameterValidationError
from model import MagnetSpecs, OrbitronParams, PositiveReal, params_from_specs
from stability import min_spin

OUT_DIR_ENV = "ORBITRON_OUT_DIR"
DEFAULT_OUT_DIR = "orbitron_out"
COMMANDS = ("simulate", "equilibrium", "stability", "montecarlo")


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ParamsBlock(_Block):
    """物理定数 (直接指定または magnet ブロック)"""

    kappa: Optional[PositiveReal] = None
    h: Optional[PositiveReal] = None
    mu: Optional[PositiveReal] = None
    M: Optional[PositiveReal] = None
    I_perp: Optional[PositiveReal] = None
    I_axial: Optional[PositiveReal] = None
    mu0: Optional[PositiveReal] = None
    magnet: Optional[MagnetSpecs] = None

    @model_validator(mode="after")
    def _check_source(self) -> "ParamsBlock":
        inline = [self.kappa, self.h, self.mu, self.M, self.I_perp, self.I_axial]
        if self.magnet is not None:
            if any(v is not None for v in inline) or self.mu0 is not None:
                raise ValueError("magnet と直接指定の値は併用できません")
        elif any(v is None for v in inline):
            raise ValueError("kappa, h, mu, M, I_perp, I_axial をすべて指定するか magnet を指定してください")
        return self

    def build(self) -> OrbitronParams:
        if self.magnet is not None:
            return params_from_specs(self.magnet)
        values = self.model_dump(exclude={"magnet"}, exclude_none=True)
        return OrbitronParams(**values)


class EquilibriumBlock(_Block):
    """相対平衡の指定 (n0 は絶対値か最小スピンに対する倍率)"""

    r0: PositiveReal
    n0: Optional[float] = None
    n0_over_min: Optional[float] = None

    @model_validator(mode="after")
    def _check_spin(self) -> "EquilibriumBlock":
        if (self.n0 is None) == (self.n0_over_min is None):
            raise ValueError("n0 と n0_over_min のどちらか一方を指定してください")
        return self

    def resolve_n0(self, params: OrbitronParams) -> float:
        if self.n0 is not None:
            return self.n0
        n0_min, _ = min_spin(params, self.r0)
        return self.n0_over_min * n0_min


class StateBlock(_Block):
    x: List[float]
    p: List[float]
    nu: List[float]
    n: List[float]


class SimulateBlock(_Block):
    """simulate コマンドの設定"""

    equilibrium: Optional[EquilibriumBlock] = None
    initial: Optional[StateBlock] = None
    rel_eps: float = 0.0
    seed: int = 0
    t_end: Optional[float] = None
    periods: Optional[float] = None
    dt: Optional[float] = None
    steps_per_period: int = 2000
    renormalize: bool = True
    save_every: int = 1
    equations: Literal["hamiltonian", "classical"] = "classical"

    @model_validator(mode="after")
    def _check_start(self) -> "SimulateBlock":
        if (self.equilibrium is None) == (self.initial is None):
            raise ValueError("equilibrium と initial のどちらか一方を指定してください")
        if (self.t_end is None) == (self.periods is None):
            raise ValueError("t_end と periods のどちらか一方を指定してください")
        if self.rel_eps != 0.0 and self.equilibrium is None:
            raise ValueError("rel_eps は equilibrium からの開始時のみ指定できます")
        return self


class SweepBlock(_Block):
    """(r0/h, n0) 格子"""

    ratio_min: float
    ratio_max: float
    ratio_steps: int
    n0_min: float
    n0_max: float
    n0_steps: int

    @model_validator(mode="after")
    def _check_grid(self) -> "SweepBlock":
        if self.ratio_steps < 1 or self.n0_steps < 1:
            raise ValueError("格子の点数は1以上である必要があります")
        if self.ratio_min > self.ratio_max or self.n0_min > self.n0_max:
            raise ValueError("格子の範囲が空です (min > max)")
        if self.ratio_min <= 0.0:
            raise ValueError("ratio_min は正である必要があります")
        return self

    def ratios(self) -> np.ndarray:
        return np.linspace(self.ratio_min, self.ratio_max, self.ratio_steps)

    def n0_values(self) -> np.ndarray:
        return np.linspace(self.n0_min, self.n0_max, self.n0_steps)


class StabilityBlock(_Block):
    """stability コマンドの設定 (単一点、格子、または両方)"""

    point: Optional[EquilibriumBlock] = None
    sweep: Optional[SweepBlock] = None
    oracle: bool = True

    @model_validator(mode="after")
    def _check_target(self) -> "StabilityBlock":
        if self.point is None and self.sweep is None:
            raise ValueError("point か sweep を指定してください")
        return self


class MonteCarloBlock(_Block):
    """montecarlo コマンドの設定"""

    equilibrium: EquilibriumBlock
    n_trials: int
    rel_eps: float = 0.01
    seed: int = 0
    horizon_periods: float = 10.0
    threshold: float = 0.5
    steps_per_period: int = 2000
    save_every: int = 10
    threads: int = 1


class RunConfig(_Block):
    """設定ファイル全体 (コマンドブロックはちょうど1つ)"""

    params: ParamsBlock
    simulate: Optional[SimulateBlock] = None
    equilibrium: Optional[EquilibriumBlock] = None
    stability: Optional[StabilityBlock] = None
    montecarlo: Optional[MonteCarloBlock] = None

    @model_validator(mode="after")
    def _one_command(self) -> "RunConfig":
        present = [name for name in COMMANDS if getattr(self, name) is not None]
        if len(present) != 1:
            raise ValueError(f"コマンドブロックはちょうど1つ必要です: {present or 'なし'}")
        return self

    @property
    def command(self) -> str:
        return next(name for name in COMMANDS if getattr(self, name) is not None)

    def require_command(self, command: str) -> None:
        if self.command != command:
            raise ParameterValidationError(
                f"設定ファイルは '{self.command}' 用ですが '{command}' が指定されました"
            )


def parse_config(text: str) -> RunConfig:
    """YAML 文字列から RunConfig を作成 (pydantic の ValidationError はそのまま送出)"""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ParameterValidationError(f"YAML を解析できません: {e}") from e
    if not isinstance(data, dict):
        raise ParameterValidationError("設定ファイルの最上位はマッピングである必要があります")
    return RunConfig.model_validate(data)


def load_config(path: str | Path) -> RunConfig:
    """
    設定ファイルを読み込む

    Args:
        path: YAML ファイルのパス

    Returns:
        検証済みの RunConfig
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ParameterValidationError(f"設定ファイルを読めません: {path}: {e}") from e
    return parse_config(text)


def dump_config(config: RunConfig) -> str:
    """正規化した YAML 文字列 (load → dump を繰り返しても変わらない)"""
    data = config.model_dump(mode="json", exclude_none=True)
    return yaml.safe_dump(data, sort_keys=False, allow_unicode=True)


def resolve_out_dir(cli_out: Optional[str] = None) -> Path:
    """出力先: --out、環境変数 ORBITRON_OUT_DIR、./orbitron_out の順"""
    chosen = cli_out or os.environ.get(OUT_DIR_ENV) or DEFAULT_OUT_DIR
    out_dir = Path(chosen)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OutputError(f"出力ディレクトリを作成できません: {out_dir}: {e}") from e
    return out_dir
