"""
運動方程式と数値積分
ハミルトン形式と古典形式の右辺、RK4 積分器、保存量の計算

積分器は (N, 12) の状態配列をまとめて進める。各行の計算は成分ごとの演算のみで
行い、同じ試行はバッチの構成によらず同じ結果になる。
"""

import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Dict, List, Literal, Optional

import numpy as np

from errors import DomainError, IntegrationFault, ParameterValidationError
from model import (
    E_Z,
    OrbitronParams,
    check_pole_guard,
    coulomb_field_array,
    coulomb_jacobian_array,
    cross3,
    dot3,
    pole_distances,
)
from potential import gradient_terms, potential_terms
from shared_state import DipoleState, StateDerivative, require_valid_state

if TYPE_CHECKING:
    from equilibrium import EquilibriumSolution

logger = logging.getLogger(__name__)

Equations = Literal["hamiltonian", "classical"]
RhsFunction = Callable[[OrbitronParams, np.ndarray], np.ndarray]

CONSERVED_LABELS = ("E", "j3", "C1", "C2")

# RK4 の安定領域の虚軸上の限界 (≈ 2√2)。α|n|dt がこれを超えると歳差運動が発散する
RK4_SPIN_LIMIT = 2.8
# α|n|dt がこれを超えると歳差運動の分解能が落ちる
SPIN_STEP_WARNING = 1.0
# 再正規化前の |ν|² がこの範囲を外れたら数値的に破綻したとみなす
NU_NORM2_RANGE = (0.5, 1.5)
# 1 周期あたりの保存量ドリフトの丸め誤差水準
DRIFT_FLOOR = 1e-12


def _col(a) -> np.ndarray:
    return np.expand_dims(a, -1)


def _split(y: np.ndarray):
    return y[..., 0:3], y[..., 3:6], y[..., 6:9], y[..., 9:12]


def _invariants(x: np.ndarray, nu: np.ndarray):
    r = np.sqrt(dot3(x, x))
    er = x / _col(r)
    return r, er, x[..., 2] / r, dot3(nu, er), nu[..., 2]


def hamiltonian_rhs_array(params: OrbitronParams, y: np.ndarray) -> np.ndarray:
    """スカラー不変量による右辺 (ガード検査なし)"""
    x, p, nu, n = _split(y)
    r, er, c1, c2, c3 = _invariants(x, nu)
    d_r, d_c1, d_c2, d_c3 = gradient_terms(params.lambda0, params.h, r, c1, c2, c3)

    perp_z = E_Z - _col(c1) * er
    perp_nu = nu - _col(c2) * er
    dp = -_col(d_r) * er - (_col(d_c1) * perp_z + _col(d_c2) * perp_nu) / _col(r)
    dnu = params.alpha * cross3(n, nu)
    dn = -cross3(nu, _col(d_c2) * er + _col(d_c3) * E_Z)
    return np.concatenate((p / params.M, dp, dnu, dn), axis=-1)


def classical_rhs_array(params: OrbitronParams, y: np.ndarray) -> np.ndarray:
    """磁場とそのヤコビ行列による右辺 (ガード検査なし)"""
    x, p, nu, n = _split(y)
    m = params.mu * nu
    field_b = coulomb_field_array(params, x)
    jac = coulomb_jacobian_array(params, x)
    # ∇(m·B)_j = Σ_i m_i ∂B_i/∂x_j
    force = (
        _col(m[..., 0]) * jac[..., 0, :]
        + _col(m[..., 1]) * jac[..., 1, :]
        + _col(m[..., 2]) * jac[..., 2, :]
    )
    dnu = cross3(n, nu) / params.I_perp
    dn = cross3(m, field_b)
    return np.concatenate((p / params.M, force, dnu, dn), axis=-1)


RHS_FORMS: Dict[str, RhsFunction] = {
    "hamiltonian": hamiltonian_rhs_array,
    "classical": classical_rhs_array,
}


def _checked(params: OrbitronParams, state: DipoleState) -> np.ndarray:
    if float(dot3(state.x, state.x)) == 0.0:
        raise DomainError("原点では e_r が定義されません (r = 0)")
    check_pole_guard(params, state.x)
    return state.to_array()


def rhs_hamiltonian(params: OrbitronParams, state: DipoleState) -> StateDerivative:
    """
    ハミルトン形式の右辺

    ẋ = p/M
    ṗ = −∂_r U e_r − (1/r)[∂_c′U (e_z − c′e_r) + ∂_c″U (ν − c″e_r)]
    ν̇ = α n × ν
    ṅ = −ν × (e_r ∂_c″U + e_z ∂_c‴U)
    """
    return StateDerivative.from_array(hamiltonian_rhs_array(params, _checked(params, state)))


def rhs_classical(params: OrbitronParams, state: DipoleState) -> StateDerivative:
    """
    古典形式の右辺

    ẋ = p/M, ṗ = ∇(μ⃗·B⃗), μ̇⃗ = (n × μ⃗)/I⊥, ṅ = μ⃗ × B⃗
    """
    return StateDerivative.from_array(classical_rhs_array(params, _checked(params, state)))


def conserved_array(params: OrbitronParams, y: np.ndarray) -> np.ndarray:
    """(E, j₃, ν·ν, ν·n) の配列版"""
    x, p, nu, n = _split(y)
    r, _, c1, c2, c3 = _invariants(x, nu)
    energy = (
        dot3(p, p) / (2.0 * params.M)
        + 0.5 * params.alpha * dot3(n, n)
        + potential_terms(params.lambda0, params.h, r, c1, c2, c3)
    )
    j3 = x[..., 0] * p[..., 1] - x[..., 1] * p[..., 0] + n[..., 2]
    return np.stack((energy, j3, dot3(nu, nu), dot3(nu, n)), axis=-1)


@dataclass(frozen=True)
class ConservedQuantities:
    """保存量"""

    energy: float
    j3: float
    casimir_nu2: float
    casimir_nun: float


def conserved_quantities(params: OrbitronParams, state: DipoleState) -> ConservedQuantities:
    values = conserved_array(params, _checked(params, state))
    return ConservedQuantities(*(float(v) for v in values))


def generator_flow(state: DipoleState, omega: float) -> StateDerivative:
    """z 軸まわりの回転生成子 ω e_z × (x, p, ν, n)"""
    w = omega * E_Z
    return StateDerivative(
        dx=cross3(w, state.x),
        dp=cross3(w, state.p),
        dnu=cross3(w, state.nu),
        dn=cross3(w, state.n),
    )


def _relative_drift(series: np.ndarray) -> float:
    ref = abs(float(series[0]))
    spread = float(np.max(np.abs(series - series[0])))
    return spread / ref if ref > 0.0 else spread


@dataclass
class Trajectory:
    """
    積分結果

    Fields:
        times: 保存時刻 (単調増加)
        states: 保存状態 (K, 12)
        conserved: 保存量 (K, 4) 列は (E, j₃, ν·ν, ν·n)
        dt: 名目時間刻み
        renormalized: ν の再正規化を行ったか
        fault: 数値障害 (正常終了時は None)
    """

    times: np.ndarray
    states: np.ndarray
    conserved: np.ndarray
    dt: float
    renormalized: bool
    fault: Optional[IntegrationFault] = None

    def __len__(self) -> int:
        return len(self.times)

    @property
    def faulted(self) -> bool:
        return self.fault is not None

    def state_at(self, index: int) -> DipoleState:
        return DipoleState.from_array(self.states[index])

    @property
    def final_state(self) -> DipoleState:
        return self.state_at(-1)

    def drift(self) -> Dict[str, float]:
        """保存量の最大ドリフト (E と j₃ は相対値、カシミールは絶対値)"""
        c = self.conserved
        return {
            "energy": _relative_drift(c[:, 0]),
            "j3": _relative_drift(c[:, 1]),
            "casimir_nu2": float(np.max(np.abs(c[:, 2] - c[0, 2]))),
            "casimir_nun": float(np.max(np.abs(c[:, 3] - c[0, 3]))),
        }


def _rk4_step(rhs: RhsFunction, params: OrbitronParams, y: np.ndarray, h: float) -> np.ndarray:
    k1 = rhs(params, y)
    k2 = rhs(params, y + 0.5 * h * k1)
    k3 = rhs(params, y + 0.5 * h * k2)
    k4 = rhs(params, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _renormalize(y: np.ndarray, casimir_nun: np.ndarray) -> np.ndarray:
    """|ν| = 1 に戻し、ν·n を初期値に合わせる (n の ν 方向成分のみ修正)"""
    nu = y[:, 6:9]
    nu = nu / _col(np.sqrt(dot3(nu, nu)))
    n = y[:, 9:12]
    n = n + _col(casimir_nun - dot3(nu, n)) * nu
    out = y.copy()
    out[:, 6:9] = nu
    out[:, 9:12] = n
    return out


def _validate_step(t_end: float, dt: float, save_every: int) -> None:
    if not (math.isfinite(dt) and dt > 0.0):
        raise ParameterValidationError(f"dt は正の有限値である必要があります: {dt}")
    if not (math.isfinite(t_end) and t_end > 0.0):
        raise ParameterValidationError(f"t_end は正の有限値である必要があります: {t_end}")
    if save_every < 1:
        raise ParameterValidationError(f"save_every は1以上である必要があります: {save_every}")


def spin_step(params: OrbitronParams, n: np.ndarray, dt: float) -> np.ndarray:
    """1 ステップあたりの歳差角 α|n|dt"""
    return params.alpha * np.sqrt(dot3(n, n)) * dt


def check_time_step(params: OrbitronParams, n: np.ndarray, dt: float) -> None:
    """
    スピンの歳差運動に対して dt が大きすぎないか検査

    Raises:
        ParameterValidationError: α|n|dt ≥ RK4_SPIN_LIMIT
    """
    worst = float(np.max(spin_step(params, np.asarray(n, dtype=np.float64), dt)))
    if worst >= RK4_SPIN_LIMIT:
        raise ParameterValidationError(
            f"dt = {dt:.6g} は歳差運動に対して大きすぎます: α|n|dt = {worst:.3g} ≥ {RK4_SPIN_LIMIT}"
        )
    if worst > SPIN_STEP_WARNING:
        logger.warning("α|n|dt = %.3g: 歳差運動の分解能が不足しています", worst)


def integrate_batch(
    params: OrbitronParams,
    initial: List[DipoleState],
    t_end: float,
    dt: float,
    renormalize: bool = True,
    save_every: int = 1,
    equations: Equations = "hamiltonian",
) -> List[Trajectory]:
    """
    複数の初期状態を同時に RK4 で積分

    Args:
        params: 物理定数
        initial: 初期状態のリスト (各 |ν| = 1)
        t_end: 終了時刻 (開始は 0)
        dt: 時間刻み (最後の刻みは t_end に合わせて短くなる)
        renormalize: 各ステップ後に |ν| と ν·n を初期値へ戻すか
        save_every: 保存間隔 (ステップ数)。最終状態は常に保存する
        equations: "hamiltonian" または "classical"

    Returns:
        初期状態ごとの Trajectory。磁極接近や非有限値が出た試行は
        その直前までの軌道と fault を持つ
    """
    _validate_step(t_end, dt, save_every)
    if equations not in RHS_FORMS:
        raise ParameterValidationError(f"未知の運動方程式: {equations}")
    if not initial:
        raise ParameterValidationError("初期状態が空です")
    for state in initial:
        require_valid_state(state)
        check_pole_guard(params, state.x)
    check_time_step(params, np.stack([s.n for s in initial]), dt)

    rhs = RHS_FORMS[equations]
    y = np.stack([s.to_array() for s in initial])
    n_rows = y.shape[0]
    casimir0 = dot3(y[:, 6:9], y[:, 9:12])
    n_steps = max(1, math.ceil(t_end / dt - 1e-9))

    active = np.ones(n_rows, dtype=bool)
    faults: List[Optional[IntegrationFault]] = [None] * n_rows
    tails: List[Optional[tuple]] = [None] * n_rows
    saved_count = np.ones(n_rows, dtype=int)
    saved_times = [0.0]
    saved_states = [y.copy()]

    t = 0.0
    for step in range(n_steps):
        t_next = t_end if step == n_steps - 1 else min((step + 1) * dt, t_end)
        h = t_next - t
        with np.errstate(all="ignore"):
            y_new = _rk4_step(rhs, params, y, h)
            nu_norm2 = dot3(y_new[:, 6:9], y_new[:, 6:9])
            if renormalize:
                y_new = _renormalize(y_new, casimir0)
            finite = np.all(np.isfinite(y_new), axis=1)
            d_plus, d_minus = pole_distances(params.h, y_new[:, 0:3])
            near_pole = np.minimum(d_plus, d_minus) < params.guard_radius
            unstable = (
                ~((nu_norm2 > NU_NORM2_RANGE[0]) & (nu_norm2 < NU_NORM2_RANGE[1]))
                | (spin_step(params, y_new[:, 9:12], dt) >= RK4_SPIN_LIMIT)
            )
        bad = (~finite | near_pole | unstable) & active
        for i in np.flatnonzero(bad):
            if not finite[i]:
                reason = "非有限値"
            elif near_pole[i]:
                reason = "磁極接近"
            else:
                reason = "数値的不安定"
            faults[i] = IntegrationFault(
                f"積分を中断しました ({reason}): t = {t_next:.6g}", time=t_next, step_index=step + 1
            )
            if saved_times[-1] != t:
                tails[i] = (t, y[i].copy())
            logger.warning("試行 %d: %s", i, faults[i].detail)
        active &= ~bad
        y = np.where(_col(active), y_new, y)
        t = t_next

        if (step + 1) % save_every == 0 or step == n_steps - 1:
            saved_times.append(t)
            saved_states.append(y.copy())
            saved_count[active] += 1
        if not active.any():
            break

    times_all = np.asarray(saved_times)
    states_all = np.stack(saved_states, axis=1)
    trajectories = []
    for i in range(n_rows):
        times = times_all[: saved_count[i]]
        states = states_all[i, : saved_count[i]]
        if tails[i] is not None:
            times = np.append(times, tails[i][0])
            states = np.vstack((states, tails[i][1]))
        trajectories.append(
            Trajectory(
                times=times,
                states=states,
                conserved=conserved_array(params, states),
                dt=dt,
                renormalized=renormalize,
                fault=faults[i],
            )
        )
    return trajectories


def integrate(
    params: OrbitronParams,
    initial: DipoleState,
    t_end: float,
    dt: float,
    renormalize: bool = True,
    save_every: int = 1,
    equations: Equations = "hamiltonian",
) -> Trajectory:
    """
    単一の初期状態を RK4 で積分

    Returns:
        Trajectory (障害時は fault 付きの部分軌道)
    """
    return integrate_batch(
        params, [initial], t_end, dt,
        renormalize=renormalize, save_every=save_every, equations=equations,
    )[0]


def rotate_about_z(y: np.ndarray, angle: float) -> np.ndarray:
    """12成分状態の各ベクトルを z 軸まわりに回転"""
    c, s = math.cos(angle), math.sin(angle)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return np.concatenate([rot @ y[k:k + 3] for k in (0, 3, 6, 9)])


@dataclass
class DriftCalibration:
    """刻み幅を半分ずつにした積分の誤差とドリフト"""

    dts: List[float] = field(default_factory=list)
    position_errors: List[float] = field(default_factory=list)
    energy_drifts: List[float] = field(default_factory=list)
    periods: float = 1.0
    j3_drifts: List[float] = field(default_factory=list)

    @property
    def error_ratios(self) -> List[float]:
        """隣り合う刻み幅での位置誤差の比 (4 次精度なら ≈ 16)"""
        e = self.position_errors
        return [e[k] / e[k + 1] for k in range(len(e) - 1) if e[k + 1] > 0.0]

    @property
    def observed_orders(self) -> List[float]:
        return [math.log2(ratio) for ratio in self.error_ratios]

    def drift_bound(self, periods: float, safety: float = 100.0) -> Dict[str, float]:
        """
        最も細かい刻みで測ったドリフトを periods 周期へ伸ばした許容値

        丸め誤差の水準 (DRIFT_FLOOR × 周期数) を下限とする
        """
        scale = safety * periods / self.periods
        floor = DRIFT_FLOOR * max(1.0, periods)
        return {
            "energy": max(scale * self.energy_drifts[-1], floor),
            "j3": max(scale * self.j3_drifts[-1], floor),
        }


def calibrate_drift(
    params: OrbitronParams,
    eq: "EquilibriumSolution",
    periods: float = 1.0,
    steps_per_period: int = 800,
    levels: int = 3,
    equations: Equations = "hamiltonian",
) -> DriftCalibration:
    """
    相対平衡の厳密解 (z 軸まわりの一様回転) と比較して刻み幅依存性を測る

    Args:
        eq: 相対平衡
        periods: 積分する公転周期数
        steps_per_period: 最も粗い刻みでの1周期あたりステップ数
        levels: 刻み幅の段数 (dt, dt/2, dt/4, ...)
    """
    if levels < 2:
        raise ParameterValidationError("levels は2以上である必要があります")
    t_end = periods * eq.period
    exact = rotate_about_z(eq.state.to_array(), eq.omega * t_end)
    result = DriftCalibration(periods=periods)
    for level in range(levels):
        dt = eq.period / (steps_per_period * 2**level)
        traj = integrate(params, eq.state, t_end, dt, equations=equations)
        final = traj.states[-1]
        drift = traj.drift()
        result.dts.append(dt)
        result.position_errors.append(float(np.linalg.norm(final[0:3] - exact[0:3]) / eq.r0))
        result.energy_drifts.append(drift["energy"])
        result.j3_drifts.append(drift["j3"])
        logger.debug("dt=%.6g 位置誤差=%.3e エネルギードリフト=%.3e", dt, result.position_errors[-1], drift["energy"])
    return result
