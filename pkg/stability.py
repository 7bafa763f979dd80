"""
エネルギー・運動量法による安定性判定
8×8 の二次形式 Q、その数値オラクル、正定値判定、閉形式の安定条件

基底の並び: (δx₁, δx₂, δp₃, δx₃, δν₁, δn₁, δν₂, δn₂)
ブロック構造: {δx₁}, {δx₂}, {δp₃}, {δx₃, δν₁, δn₁}, {δν₂, δn₂}
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from equilibrium import (
    EquilibriumSolution,
    difference_steps,
    effective_hamiltonian_terms,
    effective_hamiltonian_weights,
    make_equilibrium,
    orbital_frequency,
)
from errors import DomainError, ParameterValidationError
from model import OrbitronParams

logger = logging.getLogger(__name__)

BASIS_LABELS = ("dx1", "dx2", "dp3", "dx3", "dnu1", "dn1", "dnu2", "dn2")
BLOCKS: Tuple[Tuple[int, ...], ...] = ((0,), (1,), (2,), (3, 4, 5), (6, 7))

GEOMETRIC_LO = math.sqrt(2.0 / 3.0)
GEOMETRIC_HI = 2.0

FLOAT_EPS = float(np.finfo(np.float64).eps)
# ピボットと打ち消し合った項の和との比の下限
DEFAULT_PD_TOL = 4.0 * FLOAT_EPS
PIVOT_NOISE_FACTOR = 32.0
# 条件式と Q の判定が食い違っても許容する境界からの相対距離
BOUNDARY_REL_TOL = 1e-9


@dataclass(frozen=True)
class QuadraticForm:
    """許容変分部分空間上の二次形式"""

    matrix: np.ndarray
    labels: Tuple[str, ...] = BASIS_LABELS

    def block(self, index: int) -> np.ndarray:
        idx = BLOCKS[index]
        return self.matrix[np.ix_(idx, idx)]

    def entry(self, row: str, col: str) -> float:
        return float(self.matrix[self.labels.index(row), self.labels.index(col)])


def build_q(params: OrbitronParams, eq: EquilibriumSolution) -> QuadraticForm:
    """
    相対平衡での Q を閉形式で構成

    Q₁₁ = (3K/R²)(4h² − r₀²)/R²   Q₂₂ = 12K/R²   Q₄₄ = 1/M
    Q₃₃ = 3K(3r₀² − 2h²)/R⁴      Q₃₅ = −3Kr₀/R²
    Q₅₅ = Q₆₆ = λ₁  Q₅₇ = Q₆₈ = λ₂  Q₇₇ = Q₈₈ = α
    """
    h, r0, K = params.h, eq.r0, eq.K
    R2 = r0 * r0 + h * h
    q = np.zeros((8, 8))
    q[0, 0] = 3.0 * K / R2 * (4.0 * h * h - r0 * r0) / R2
    q[1, 1] = 12.0 * K / R2
    q[2, 2] = 1.0 / params.M
    q[3, 3] = 3.0 * K * (3.0 * r0 * r0 - 2.0 * h * h) / (R2 * R2)
    q[3, 4] = q[4, 3] = -3.0 * K * r0 / R2
    for nu_idx, n_idx in ((4, 5), (6, 7)):
        q[nu_idx, nu_idx] = eq.lambda1
        q[nu_idx, n_idx] = q[n_idx, nu_idx] = eq.lambda2
        q[n_idx, n_idx] = params.alpha
    return QuadraticForm(matrix=q)


def q_entries_unsubstituted(params: OrbitronParams, eq: EquilibriumSolution) -> Dict[str, float]:
    """
    ポテンシャルの二階微分と ω をそのまま使った Q の成分
    (相対平衡の関係式を代入する前の形。build_q との一致で代入を検証できる)
    """
    h, r0, K = params.h, eq.r0, eq.K
    R2 = r0 * r0 + h * h
    u_rr = 3.0 * K * (h * h - 4.0 * r0 * r0) / (R2 * R2)
    u_yy = 3.0 * K / R2
    u_zz = 3.0 * K * (3.0 * r0 * r0 - 2.0 * h * h) / (R2 * R2)
    u_z_nu1 = -3.0 * K * r0 / R2
    m_omega2 = params.M * eq.omega**2
    return {
        "dx1.dx1": u_rr + 3.0 * m_omega2,
        "dx2.dx2": u_yy + 3.0 * m_omega2,
        "dp3.dp3": 1.0 / params.M,
        "dx3.dx3": u_zz,
        "dx3.dnu1": u_z_nu1,
        "dnu1.dnu1": eq.lambda1,
        "dnu1.dn1": eq.lambda2,
        "dn1.dn1": params.alpha,
    }


def embedding(eq: EquilibriumSolution) -> np.ndarray:
    """8 次元の許容変分から 12 次元への埋め込み (12×8)"""
    ratio = eq.p0 / eq.r0
    b = np.zeros((12, 8))
    b[0, 0] = 1.0
    b[4, 0] = -ratio  # δp₂ = −(p₀/r₀) δx₁
    b[1, 1] = 1.0
    b[3, 1] = ratio  # δp₁ = (p₀/r₀) δx₂
    b[5, 2] = 1.0
    b[2, 3] = 1.0
    b[6, 4] = 1.0
    b[9, 5] = 1.0
    b[7, 6] = 1.0
    b[10, 7] = 1.0
    return b


def hessian_12(params: OrbitronParams, eq: EquilibriumSolution, rel_step: float = 1e-4) -> np.ndarray:
    """H̃ の 12×12 ヘッセ行列 (項ごとの中心差分)"""
    y = eq.state.to_array()
    steps = difference_steps(eq, y, rel_step)
    weights = effective_hamiltonian_weights(eq)

    def terms(shifts: Dict[int, float]) -> np.ndarray:
        z = y.copy()
        for k, s in shifts.items():
            z[k] += s
        return effective_hamiltonian_terms(params, z)

    center = terms({})
    hess = np.zeros((12, 12))
    for i in range(12):
        hi = steps[i]
        diff = terms({i: hi}) - 2.0 * center + terms({i: -hi})
        hess[i, i] = float(weights @ diff) / (hi * hi)
        for j in range(i + 1, 12):
            hj = steps[j]
            diff = (
                terms({i: hi, j: hj}) - terms({i: hi, j: -hj})
                - terms({i: -hi, j: hj}) + terms({i: -hi, j: -hj})
            )
            hess[i, j] = hess[j, i] = float(weights @ diff) / (4.0 * hi * hj)
    return hess


def projected_hessian_oracle(
    params: OrbitronParams, eq: EquilibriumSolution, rel_step: float = 1e-4
) -> QuadraticForm:
    """数値ヘッセ行列を許容変分部分空間へ射影した Bᵀ H B"""
    b = embedding(eq)
    return QuadraticForm(matrix=b.T @ hessian_12(params, eq, rel_step) @ b)


def form_discrepancy(q: Union[QuadraticForm, np.ndarray], other: Union[QuadraticForm, np.ndarray]) -> float:
    """
    二つの二次形式の成分ごとの相対差の最大値
    各成分は max(|Q_ij|, √|Q_ii Q_jj|) で規格化する
    """
    a = _as_matrix(q)
    b = _as_matrix(other)
    diag = np.abs(np.diag(a))
    scale = np.maximum(np.abs(a), np.sqrt(np.outer(diag, diag)))
    scale[scale == 0.0] = 1.0
    return float(np.max(np.abs(a - b) / scale))


def orbit_tangent(eq: EquilibriumSolution) -> np.ndarray:
    """軌道方向 (δx₂ = r₀, δp₁ = −p₀) の 12 次元ベクトル"""
    t = np.zeros(12)
    t[1] = eq.r0
    t[3] = -eq.p0
    return t


def admissible_hessian(
    params: OrbitronParams, eq: EquilibriumSolution, rel_step: float = 1e-4
) -> np.ndarray:
    """
    δν₃ = δn₃ = 0 と δp₂ = −(p₀/r₀)δx₁ のみを課した 9 次元部分空間上のヘッセ行列
    基底: (δx₁, δx₂, δx₃, δp₁, δp₃, δν₁, δν₂, δn₁, δn₂)
    軌道方向 (δx₂, δp₁) = (r₀, −p₀) は零方向になる
    """
    ratio = eq.p0 / eq.r0
    b = np.zeros((12, 9))
    b[0, 0] = 1.0
    b[4, 0] = -ratio
    for col, row in enumerate((1, 2, 3, 5, 6, 7, 9, 10), start=1):
        b[row, col] = 1.0
    return b.T @ hessian_12(params, eq, rel_step) @ b


def _as_matrix(q: Union[QuadraticForm, np.ndarray]) -> np.ndarray:
    m = q.matrix if isinstance(q, QuadraticForm) else np.asarray(q, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ParameterValidationError(f"正方行列である必要があります: shape={m.shape}")
    if not np.all(np.isfinite(m)):
        raise ParameterValidationError("非有限値を含む行列です")
    return m


def _block_pd(block: np.ndarray, tol: float) -> bool:
    """
    LDLᵀ 消去のピボットによる判定 (シルベスターの判定法と同値)

    各ピボットは、それを作るのに打ち消し合った項の絶対値の和 × tol を
    超える必要がある。対角スケーリングに対して不変
    """
    a = np.array(block, dtype=np.float64)
    mag = np.abs(a)
    for k in range(a.shape[0]):
        pivot = a[k, k]
        if not pivot > tol * mag[k, k]:
            return False
        rest = slice(k + 1, None)
        update = np.outer(a[rest, k] / pivot, a[k, rest])
        a[rest, rest] -= update
        mag[rest, rest] += np.abs(update)
    return True


def positive_definite(q: Union[QuadraticForm, np.ndarray], tol: float = DEFAULT_PD_TOL) -> bool:
    """
    対称行列の正定値判定 (シルベスターの判定法)

    主座小行列式の比である LDLᵀ のピボットがすべて正かを調べる。
    8×8 で非ブロック成分がすべて 0 ならブロックごとに、それ以外は行列全体で判定する
    """
    m = _as_matrix(q)
    scale = float(np.max(np.abs(m))) if m.size else 0.0
    if not np.allclose(m, m.T, rtol=0.0, atol=1e-12 * scale):
        raise ParameterValidationError("対称行列ではありません")
    if m.shape == (8, 8):
        mask = np.zeros((8, 8), dtype=bool)
        for idx in BLOCKS:
            mask[np.ix_(idx, idx)] = True
        if not np.any(m[~mask]):
            return all(_block_pd(m[np.ix_(idx, idx)], tol) for idx in BLOCKS)
    return _block_pd(m, tol)


def geometric_factor(r0_over_h: float) -> float:
    """(1/3)(1 + (h/r₀)²) / (1.5(r₀/h)² − 1)  (√(2/3) より大きい比でのみ定義)"""
    if not (math.isfinite(r0_over_h) and r0_over_h > GEOMETRIC_LO):
        raise DomainError(f"r0/h = {r0_over_h} では幾何因子が定義されません (> √(2/3) が必要)")
    return (1.0 + 1.0 / r0_over_h**2) / (3.0 * (1.5 * r0_over_h**2 - 1.0))


def min_spin(params: OrbitronParams, r0: float) -> Tuple[float, float]:
    """
    安定に必要な最小スピン

    Returns:
        (n₀_min, Ω_min)  n₀_min = ω/α + g(r₀/h)·ωMr₀²,  Ω_min = n₀_min / I_axial
    """
    ratio = r0 / params.h
    g = geometric_factor(ratio)
    omega = orbital_frequency(params, r0)
    n0_min = omega / params.alpha + g * omega * params.M * r0 * r0
    return n0_min, n0_min / params.I_axial


@dataclass
class StabilityReport:
    """安定性判定の結果"""

    r0: float
    n0: float
    r0_over_h: float
    K: float
    omega: float
    geometric_ok: bool
    dynamic_lhs: float
    dynamic_rhs: float
    dynamic_ok: bool
    q_positive_definite: bool
    min_n0: Optional[float]
    min_spin_rate: Optional[float]
    lambda1: float
    minor_2x2: float
    minor_3x3_second: float
    det_3x3: float
    orbital_momentum: float
    transverse_term: float
    geometric_factor: Optional[float]
    n0_over_orbital_momentum: float
    geometric_lo: float = GEOMETRIC_LO
    geometric_hi: float = GEOMETRIC_HI
    notes: List[str] = field(default_factory=list)

    @property
    def sufficient_conditions_hold(self) -> bool:
        return self.q_positive_definite

    @property
    def verdict(self) -> str:
        if self.q_positive_definite:
            return "sufficient conditions hold"
        return "inconclusive (sufficient conditions fail)"


def spin_boundary_tolerance(params: OrbitronParams, eq: EquilibriumSolution) -> float:
    """
    動的条件の境界で判定の食い違いを許す n₀ の相対幅

    Q の 3×3 ブロックの最終ピボットは αn₀/ω 倍の桁落ちを伴うため、
    スピンが大きい領域 (幾何条件の下限付近) では 1e-9 より広くなる
    """
    cancellation = params.alpha * abs(eq.n0) / eq.omega
    return max(BOUNDARY_REL_TOL, PIVOT_NOISE_FACTOR * FLOAT_EPS * cancellation)


def _near_boundary(params: OrbitronParams, eq: EquilibriumSolution) -> bool:
    ratio = eq.r0 / params.h
    for edge in (GEOMETRIC_LO, GEOMETRIC_HI):
        if abs(ratio - edge) <= BOUNDARY_REL_TOL * edge:
            return True
    if ratio > GEOMETRIC_LO:
        n0_min, _ = min_spin(params, eq.r0)
        if abs(eq.n0 - n0_min) <= spin_boundary_tolerance(params, eq) * abs(n0_min):
            return True
    return False


def stability_conditions(params: OrbitronParams, r0: float, n0: float) -> StabilityReport:
    """
    閉形式の条件と Q の正定値性を評価

    幾何条件: √(2/3) < r₀/h < 2
    動的条件: (ω/α)(αn₀ − ω) > K / (1.5(r₀/h)² − 1)
    両者の積は Q の正定値性と同値で、境界から離れた点で食い違えば例外とする
    """
    eq = make_equilibrium(params, r0, n0)
    q = build_q(params, eq)
    pd = positive_definite(q)

    ratio = r0 / params.h
    geometric_ok = GEOMETRIC_LO < ratio < GEOMETRIC_HI
    denom = 1.5 * ratio * ratio - 1.0
    lhs = (eq.omega / params.alpha) * (params.alpha * n0 - eq.omega)
    if denom > 0.0:
        rhs = eq.K / denom
        dynamic_ok = lhs > rhs
        n0_min, spin_rate = min_spin(params, r0)
        g_factor = geometric_factor(ratio)
    else:
        rhs = math.inf
        dynamic_ok = False
        n0_min = spin_rate = g_factor = None

    m = q.matrix
    block3 = q.block(3)
    report = StabilityReport(
        r0=r0,
        n0=n0,
        r0_over_h=ratio,
        K=eq.K,
        omega=eq.omega,
        geometric_ok=geometric_ok,
        dynamic_lhs=lhs,
        dynamic_rhs=rhs,
        dynamic_ok=dynamic_ok,
        q_positive_definite=pd,
        min_n0=n0_min,
        min_spin_rate=spin_rate,
        lambda1=eq.lambda1,
        minor_2x2=float(m[4, 4] * m[5, 5] - m[4, 5] ** 2),
        minor_3x3_second=float(m[3, 3] * m[4, 4] - m[3, 4] ** 2),
        det_3x3=float(np.linalg.det(block3)),
        orbital_momentum=eq.orbital_momentum,
        transverse_term=eq.omega / params.alpha,
        geometric_factor=g_factor,
        n0_over_orbital_momentum=n0 / eq.orbital_momentum,
    )

    expected = geometric_ok and dynamic_ok
    if expected != pd:
        message = (
            f"閉形式条件 ({expected}) と Q の正定値判定 ({pd}) が一致しません: "
            f"r0/h={ratio:.17g}, n0={n0:.17g}"
        )
        if _near_boundary(params, eq):
            logger.warning(message + " (境界近傍)")
            report.notes.append("boundary mismatch")
        else:
            raise DomainError(message)
    return report


@dataclass(frozen=True)
class StabilityMapRow:
    r0_over_h: float
    n0: float
    geometric_ok: bool
    dynamic_ok: bool
    q_positive_definite: bool


def stability_map(
    params: OrbitronParams, ratios: Sequence[float], n0_values: Sequence[float]
) -> List[StabilityMapRow]:
    """
    (r₀/h, n₀) 格子上の安定性マップ

    Args:
        ratios: r₀/h の値
        n0_values: n₀ の値

    Returns:
        格子点ごとの判定 (ratios 外側、n0_values 内側の順)
    """
    if len(ratios) == 0 or len(n0_values) == 0:
        raise ParameterValidationError("スイープ格子が空です")
    rows = []
    for ratio in ratios:
        for n0 in n0_values:
            report = stability_conditions(params, float(ratio) * params.h, float(n0))
            rows.append(
                StabilityMapRow(
                    r0_over_h=float(ratio),
                    n0=float(n0),
                    geometric_ok=report.geometric_ok,
                    dynamic_ok=report.dynamic_ok,
                    q_positive_definite=report.q_positive_definite,
                )
            )
    logger.info("安定性マップ: %d 点", len(rows))
    return rows
