"""
相対平衡 (一様回転する円軌道) の構成と検証
z_e = (x = r₀e₁, p = p₀e₂, ν = −e₃, n = n₀e₃)、角速度 ω で z 軸まわりに回転する
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from errors import ParameterValidationError
from model import OrbitronParams, ScalarInvariants
from potential import potential_energy
from shared_state import DipoleState

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EquilibriumSolution:
    """
    相対平衡の解

    Fields:
        r0: 軌道半径 [m]
        omega: 公転角速度 [rad/s]
        p0: 運動量 M ω r₀
        n0: スピン角運動量
        K: λ₀h/(2πR³)
        lambda1: ν·ν/2 の乗数 K + n₀λ₂
        lambda2: ν·n の乗数 αn₀ − ω
        state: z_e
    """

    r0: float
    omega: float
    p0: float
    n0: float
    K: float
    lambda1: float
    lambda2: float
    state: DipoleState

    @property
    def period(self) -> float:
        return 2.0 * math.pi / self.omega

    @property
    def orbital_momentum(self) -> float:
        """L_z = r₀p₀ = ω M r₀²"""
        return self.r0 * self.p0


def _require_radius(r0: float) -> None:
    if not (math.isfinite(r0) and r0 > 0.0):
        raise ParameterValidationError(f"r0 は正の有限値である必要があります: {r0}")


def k_constant(params: OrbitronParams, r0: float) -> float:
    """K = λ₀h / (2π (r₀² + h²)^{3/2})"""
    _require_radius(r0)
    big_r = math.sqrt(r0 * r0 + params.h * params.h)
    return params.lambda0 * params.h / (2.0 * math.pi * big_r**3)


def orbital_frequency(params: OrbitronParams, r0: float) -> float:
    """ω = √(3K / (M R²))"""
    r2 = r0 * r0 + params.h * params.h
    return math.sqrt(3.0 * k_constant(params, r0) / (params.M * r2))


def make_equilibrium(params: OrbitronParams, r0: float, n0: float) -> EquilibriumSolution:
    """
    相対平衡を構成

    Args:
        params: 物理定数
        r0: 軌道半径 (> 0)
        n0: スピン角運動量 (符号付き)

    Returns:
        EquilibriumSolution
    """
    _require_radius(r0)
    if not math.isfinite(n0):
        raise ParameterValidationError(f"n0 は有限値である必要があります: {n0}")
    K = k_constant(params, r0)
    omega = orbital_frequency(params, r0)
    p0 = params.M * omega * r0
    lambda2 = params.alpha * n0 - omega
    lambda1 = K + n0 * lambda2
    state = DipoleState(
        x=np.array([r0, 0.0, 0.0]),
        p=np.array([0.0, p0, 0.0]),
        nu=np.array([0.0, 0.0, -1.0]),
        n=np.array([0.0, 0.0, n0]),
    )
    logger.debug("相対平衡: r0=%.6g n0=%.6g K=%.6g omega=%.6g", r0, n0, K, omega)
    return EquilibriumSolution(
        r0=r0, omega=omega, p0=p0, n0=n0, K=K,
        lambda1=lambda1, lambda2=lambda2, state=state,
    )


def spin_scale(eq: EquilibriumSolution) -> float:
    """角運動量の基準量 (n₀ = 0 のときは L_z)"""
    return abs(eq.n0) if eq.n0 != 0.0 else eq.orbital_momentum


def natural_scales(eq: EquilibriumSolution) -> np.ndarray:
    """12成分の基準量 (r₀, p₀, 1, |n₀|)"""
    s_n = spin_scale(eq)
    return np.array([eq.r0] * 3 + [eq.p0] * 3 + [1.0] * 3 + [s_n] * 3)


def effective_hamiltonian_terms(params: OrbitronParams, y: np.ndarray) -> np.ndarray:
    """
    有効ハミルトニアンの各項 (差分は項ごとに取り、最後に重み付けする)

    p²/2M, αn²/2, U, x₁p₂−x₂p₁, n₃, ν·ν/2, ν·n
    """
    x, p, nu, n = y[0:3], y[3:6], y[6:9], y[9:12]
    r = math.sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])
    inv = ScalarInvariants(
        r=r,
        c1=x[2] / r,
        c2=(nu[0] * x[0] + nu[1] * x[1] + nu[2] * x[2]) / r,
        c3=nu[2],
    )
    return np.array([
        (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]) / (2.0 * params.M),
        0.5 * params.alpha * (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]),
        potential_energy(params, inv),
        x[0] * p[1] - x[1] * p[0],
        n[2],
        0.5 * (nu[0] * nu[0] + nu[1] * nu[1] + nu[2] * nu[2]),
        nu[0] * n[0] + nu[1] * n[1] + nu[2] * n[2],
    ])


def effective_hamiltonian_weights(eq: EquilibriumSolution) -> np.ndarray:
    """H̃ = H − ω j₃ + λ₁ ν·ν/2 + λ₂ ν·n の重み"""
    return np.array([1.0, 1.0, 1.0, -eq.omega, -eq.omega, eq.lambda1, eq.lambda2])


def effective_hamiltonian(params: OrbitronParams, eq: EquilibriumSolution, state: DipoleState) -> float:
    terms = effective_hamiltonian_terms(params, state.to_array())
    return float(effective_hamiltonian_weights(eq) @ terms)


def difference_steps(eq: EquilibriumSolution, y: np.ndarray, rel_step: float) -> np.ndarray:
    """座標ごとの差分幅 rel_step · max(|z_i|, s_i)"""
    return rel_step * np.maximum(np.abs(y), natural_scales(eq))


def critical_point_gradient(
    params: OrbitronParams, eq: EquilibriumSolution, rel_step: float = 1e-5
) -> np.ndarray:
    """
    z_e における ∂H̃/∂z_i の中心差分 (s_i/K で無次元化)

    Returns:
        12成分の無次元勾配
    """
    y = eq.state.to_array()
    steps = difference_steps(eq, y, rel_step)
    weights = effective_hamiltonian_weights(eq)
    grad = np.empty(12)
    for i in range(12):
        plus = y.copy()
        minus = y.copy()
        plus[i] += steps[i]
        minus[i] -= steps[i]
        diff = effective_hamiltonian_terms(params, plus) - effective_hamiltonian_terms(params, minus)
        grad[i] = float(weights @ diff) / (plus[i] - minus[i])
    return grad * natural_scales(eq) / eq.K


def verify_critical_point(
    params: OrbitronParams, eq: EquilibriumSolution, rel_step: float = 1e-5
) -> float:
    """無次元勾配の最大ノルム (相対平衡なら ≲ 1e-8)"""
    return float(np.max(np.abs(critical_point_gradient(params, eq, rel_step))))
