"""
ポテンシャルエネルギーとその勾配
U(r, c′, c″, c‴) = −(λ₀/4π) Σ_ε ε (r c″ − εh c‴)/R_ε³
R_ε = √(r² − 2εh r c′ + h²)

配列版 (*_terms) はガード検査を行わず、ベクトル化された積分器から使う。
"""

import math
from dataclasses import dataclass

import numpy as np

from errors import DomainError, PoleProximityError
from model import OrbitronParams, ScalarInvariants

EPSILONS = (1.0, -1.0)


def r_eps(r: float, c1: float, h: float, eps: float) -> float:
    """
    ε 極までの距離 R_ε

    Raises:
        DomainError: R_ε² ≤ 0 (極の上)
    """
    arg = r * r - 2.0 * eps * h * r * c1 + h * h
    if not arg > 0.0:
        raise DomainError(f"磁極上での評価です (ε={eps:+.0f}, R_ε² = {arg:.6g})")
    return math.sqrt(arg)


def pole_distance_terms(h: float, r, c1):
    """両極までの距離 (R₊, R₋)"""
    base = r * r + h * h
    cross = 2.0 * h * r * c1
    return np.sqrt(base - cross), np.sqrt(base + cross)


def pole_term(h: float, eps: float, r, c1, c2, c3):
    """ε 極の項 (r c″ − εh c‴)/R_ε³ (符号 ε と係数 −λ₀/4π を掛ける前)"""
    R = np.sqrt(r * r - 2.0 * eps * h * r * c1 + h * h)
    return (r * c2 - eps * h * c3) / R**3


def pole_term_gradients(h: float, eps: float, r, c1, c2, c3):
    """pole_term の (r, c′, c″, c‴) に関する偏微分"""
    R2 = r * r - 2.0 * eps * h * r * c1 + h * h
    R = np.sqrt(R2)
    inv3 = 1.0 / (R * R2)
    inv5 = inv3 / R2
    numer = r * c2 - eps * h * c3
    return (
        c2 * inv3 - 3.0 * numer * (r - eps * h * c1) * inv5,
        3.0 * numer * eps * h * r * inv5,
        r * inv3,
        -eps * h * inv3,
    )


def potential_terms(lambda0: float, h: float, r, c1, c2, c3):
    """U の配列版"""
    total = 0.0
    for eps in EPSILONS:
        total = total + eps * pole_term(h, eps, r, c1, c2, c3)
    return -(lambda0 / (4.0 * math.pi)) * total


def gradient_terms(lambda0: float, h: float, r, c1, c2, c3):
    """(∂U/∂r, ∂U/∂c′, ∂U/∂c″, ∂U/∂c‴) の配列版"""
    totals = [0.0, 0.0, 0.0, 0.0]
    for eps in EPSILONS:
        for k, d in enumerate(pole_term_gradients(h, eps, r, c1, c2, c3)):
            totals[k] = totals[k] + eps * d
    pref = -(lambda0 / (4.0 * math.pi))
    return tuple(pref * t for t in totals)


@dataclass(frozen=True)
class PotentialGradients:
    """U のスカラー不変量に関する偏微分"""

    d_r: float
    d_c1: float
    d_c2: float
    d_c3: float


def _guard(params: OrbitronParams, inv: ScalarInvariants) -> None:
    r_plus, r_minus = pole_distance_terms(params.h, inv.r, inv.c1)
    closest = float(min(r_plus, r_minus))
    if not math.isfinite(closest) or closest < params.guard_radius:
        raise PoleProximityError(closest, params.guard_radius)


def potential_energy(params: OrbitronParams, inv: ScalarInvariants) -> float:
    """ポテンシャルエネルギー U [J]"""
    _guard(params, inv)
    return float(potential_terms(params.lambda0, params.h, inv.r, inv.c1, inv.c2, inv.c3))


def potential_gradients(params: OrbitronParams, inv: ScalarInvariants) -> PotentialGradients:
    """解析的な偏微分 (∂U/∂r, ∂U/∂c′, ∂U/∂c″, ∂U/∂c‴)"""
    _guard(params, inv)
    d_r, d_c1, d_c2, d_c3 = gradient_terms(
        params.lambda0, params.h, inv.r, inv.c1, inv.c2, inv.c3
    )
    return PotentialGradients(float(d_r), float(d_c1), float(d_c2), float(d_c3))


def dipole_limit_potential(params: OrbitronParams, inv: ScalarInvariants) -> float:
    """
    遠方での点双極子近似 (双極子モーメント 2κh e_z の場)

    U_far = −(λ₀/4π) · 2h (3c′c″ − c‴)/r³
    """
    if inv.r <= 0.0:
        raise DomainError("r > 0 が必要です")
    return -(params.lambda0 / (4.0 * math.pi)) * 2.0 * params.h * (
        3.0 * inv.c1 * inv.c2 - inv.c3
    ) / inv.r**3
