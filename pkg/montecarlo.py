"""
相対平衡近傍のモンテカルロ試行
初期状態を乱数で摂動し、一定時間積分して z_e からの最大偏差を調べる

乱数列は試行ごとに SeedSequence([seed, trial_index]) から作るため、
結果はスレッド数や試行の割り当て方によらない。
"""

import asyncio
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from batch_monitor import BatchMonitor, TrialRecord
from dynamics import check_time_step, integrate_batch
from equilibrium import EquilibriumSolution, natural_scales, spin_scale
from errors import ParameterValidationError
from model import OrbitronParams, dot3
from run_callback import RunCallback
from shared_state import DipoleState
from stability import stability_conditions

logger = logging.getLogger(__name__)

RNG_ALGORITHM = "PCG64"
DEFAULT_THRESHOLD = 0.5


class PerturbationSpec(BaseModel):
    """
    摂動の仕様

    Fields:
        rel_eps: 各成分の摂動幅 (基準量に対する比)
        seed: 乱数の種 (≥ 0)
        n_trials: 試行回数
        horizon_periods: 積分時間 (公転周期の何倍か)
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    rel_eps: float = Field(ge=0, allow_inf_nan=False)
    seed: int = Field(ge=0)
    n_trials: int = Field(ge=1)
    horizon_periods: float = Field(default=10.0, gt=0, allow_inf_nan=False)


def trial_rng(seed: int, trial_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, trial_index])))


def sample_perturbed(eq: EquilibriumSolution, spec: PerturbationSpec, trial_index: int) -> DipoleState:
    """
    z_e の各成分に一様乱数 rel_eps·s_i·u (u ∈ [−1, 1]) を加え、ν を正規化した状態

    Args:
        eq: 相対平衡
        spec: 摂動の仕様
        trial_index: 試行番号 (≥ 0)
    """
    if trial_index < 0:
        raise ParameterValidationError(f"trial_index は0以上である必要があります: {trial_index}")
    u = trial_rng(spec.seed, trial_index).uniform(-1.0, 1.0, size=12)
    y = eq.state.to_array() + spec.rel_eps * u * natural_scales(eq)
    nu = y[6:9]
    y[6:9] = nu / math.sqrt(float(dot3(nu, nu)))
    return DipoleState.from_array(y)


def deviation_metric_array(y: np.ndarray, eq: EquilibriumSolution) -> np.ndarray:
    """deviation_metric の配列版 (y の形は (..., 12))"""
    x, p, nu, n = y[..., 0:3], y[..., 3:6], y[..., 6:9], y[..., 9:12]
    r = np.sqrt(dot3(x, x))
    p_norm = np.sqrt(dot3(p, p))
    cos_tilt = np.clip(-nu[..., 2] / np.sqrt(dot3(nu, nu)), -1.0, 1.0)
    parts = np.stack((
        np.abs(r - eq.r0) / eq.r0,
        np.abs(x[..., 2]) / eq.r0,
        np.abs(p_norm - eq.p0) / eq.p0,
        np.arccos(cos_tilt) / (math.pi / 2.0),
        np.abs(n[..., 2] - eq.n0) / spin_scale(eq),
    ), axis=-1)
    return np.max(parts, axis=-1)


def deviation_metric(state: DipoleState, eq: EquilibriumSolution) -> float:
    """
    z_e の回転軌道からの無次元偏差

    max(|r − r₀|/r₀, |x₃|/r₀, ||p| − p₀|/p₀, ∠(ν, −e_z)/(π/2), |n₃ − n₀|/|n₀|)
    z 軸まわりの回転に対して不変
    """
    return float(deviation_metric_array(state.to_array(), eq))


@dataclass
class BatchResult:
    """モンテカルロ試行の集計結果"""

    spec: PerturbationSpec
    threshold: float
    steps_per_period: int
    records: List[TrialRecord]
    bounded_count: int
    unbounded_count: int
    fault_count: int
    percentiles: Dict[str, float]
    mean_energy_drift: Optional[float]
    sufficient_conditions_hold: bool
    rng_algorithm: str = RNG_ALGORITHM
    notes: List[str] = field(default_factory=list)

    @property
    def n_trials(self) -> int:
        return len(self.records)

    @property
    def bounded_fraction(self) -> float:
        return self.bounded_count / self.n_trials if self.records else 0.0

    @property
    def max_deviations(self) -> List[float]:
        return [r.max_deviation for r in self.records]


def _run_chunk(
    params: OrbitronParams,
    eq: EquilibriumSolution,
    spec: PerturbationSpec,
    indices: Sequence[int],
    dt: float,
    save_every: int,
    monitor: BatchMonitor,
    callback: Optional[RunCallback],
) -> None:
    start = monitor.start_measurement()
    initial = [sample_perturbed(eq, spec, i) for i in indices]
    trajectories = integrate_batch(
        params, initial, spec.horizon_periods * eq.period, dt,
        renormalize=True, save_every=save_every,
    )
    for index, traj in zip(indices, trajectories):
        record = monitor.record_trial(
            start,
            trial_index=int(index),
            seed=spec.seed,
            max_deviation=float(np.max(deviation_metric_array(traj.states, eq))),
            energy_drift=traj.drift()["energy"],
            fault_message=traj.fault.detail if traj.fault else None,
        )
        if callback:
            callback.log_step("trial", {
                "trial_index": record.trial_index,
                "max_deviation": record.max_deviation,
                "bounded": record.bounded,
                "fault": record.fault,
            })


async def run_batch_async(
    params: OrbitronParams,
    eq: EquilibriumSolution,
    spec: PerturbationSpec,
    threshold: float = DEFAULT_THRESHOLD,
    steps_per_period: int = 2000,
    save_every: int = 10,
    threads: int = 1,
    callback: Optional[RunCallback] = None,
) -> BatchResult:
    """
    試行をスレッドに分けて実行

    Args:
        params: 物理定数
        eq: 基準の相対平衡
        spec: 摂動の仕様
        threshold: 有界判定のしきい値 (最大偏差 < threshold で有界)
        steps_per_period: 1周期あたりの積分ステップ数
        save_every: 偏差を評価する間隔 (ステップ数)
        threads: 同時に走らせるスレッド数
        callback: 試行ごとのログ出力先

    Returns:
        BatchResult (試行は trial_index 順)
    """
    if not (math.isfinite(threshold) and threshold > 0.0):
        raise ParameterValidationError(f"threshold は正の値である必要があります: {threshold}")
    if threads < 1:
        raise ParameterValidationError(f"threads は1以上である必要があります: {threads}")
    if steps_per_period < 1:
        raise ParameterValidationError(f"steps_per_period は1以上である必要があります: {steps_per_period}")

    dt = eq.period / steps_per_period
    # 摂動後の |n| の上限で刻み幅を検査する
    n_bound = abs(eq.n0) + math.sqrt(3.0) * spec.rel_eps * spin_scale(eq)
    check_time_step(params, np.array([0.0, 0.0, n_bound]), dt)

    report = stability_conditions(params, eq.r0, eq.n0)
    notes = []
    if not report.sufficient_conditions_hold:
        logger.warning("十分条件を満たさない相対平衡での試行です: r0=%.6g n0=%.6g", eq.r0, eq.n0)
        notes.append("sufficient conditions fail at this equilibrium")

    monitor = BatchMonitor(threshold)
    chunks = [c for c in np.array_split(np.arange(spec.n_trials), threads) if len(c)]
    semaphore = asyncio.Semaphore(threads)

    async def run(chunk: np.ndarray) -> None:
        async with semaphore:
            await asyncio.to_thread(
                _run_chunk, params, eq, spec, chunk.tolist(), dt, save_every, monitor, callback
            )

    await asyncio.gather(*(run(c) for c in chunks))

    summary = monitor.get_summary()
    logger.info(
        "モンテカルロ完了: 有界 %d / 非有界 %d / 障害 %d",
        summary["bounded_count"], summary["unbounded_count"], summary["fault_count"],
    )
    return BatchResult(
        spec=spec,
        threshold=threshold,
        steps_per_period=steps_per_period,
        records=monitor.sorted_records(),
        bounded_count=summary["bounded_count"],
        unbounded_count=summary["unbounded_count"],
        fault_count=summary["fault_count"],
        percentiles=summary["percentiles"],
        mean_energy_drift=summary["mean_energy_drift"],
        sufficient_conditions_hold=report.sufficient_conditions_hold,
        notes=notes,
    )


def run_batch(
    params: OrbitronParams,
    eq: EquilibriumSolution,
    spec: PerturbationSpec,
    threshold: float = DEFAULT_THRESHOLD,
    steps_per_period: int = 2000,
    save_every: int = 10,
    threads: int = 1,
    callback: Optional[RunCallback] = None,
) -> BatchResult:
    """run_batch_async の同期版 (イベントループの外から呼ぶ)"""
    return asyncio.run(run_batch_async(
        params, eq, spec,
        threshold=threshold, steps_per_period=steps_per_period,
        save_every=save_every, threads=threads, callback=callback,
    ))
