"""
Orbitron コアモデル
物理パラメータ、ベクトル検証、スカラー不変量、二磁極の磁場を定義する
すべて SI 単位系
"""

import math
from dataclasses import dataclass
from typing import Annotated, Any, Iterable

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from errors import DomainError, ParameterValidationError, PoleProximityError

# 真空の透磁率 [T·m/A]
MU0 = 4e-7 * math.pi

# 磁極ガード半径 (h に対する比)
POLE_GUARD_FRACTION = 1e-3

E_Z = np.array([0.0, 0.0, 1.0])

Vec3 = npt.NDArray[np.float64]

PositiveReal = Annotated[float, Field(gt=0, allow_inf_nan=False)]


def vec3(values: Iterable[float] | npt.ArrayLike, name: str = "vector") -> Vec3:
    """
    3成分ベクトルに変換して検証する

    Args:
        values: 任意の3要素シーケンス
        name: エラーメッセージ用の名前

    Returns:
        float64 の ndarray (shape=(3,))
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != (3,):
        raise DomainError(f"{name} は3成分ベクトルである必要があります: shape={arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} に非有限値が含まれています: {arr.tolist()}")
    return arr.copy()


def dot3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """最後の軸に沿った内積 (バッチ間で結果が変わらないよう成分ごとに計算)"""
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]


def cross3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """最後の軸に沿った外積"""
    return np.stack(
        (
            a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1],
            a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2],
            a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0],
        ),
        axis=-1,
    )


class OrbitronParams(BaseModel):
    """
    系の物理定数

    Fields:
        kappa: 磁極の強さ [A·m]
        h: 磁極間距離の半分 [m]
        mu: 双極子モーメントの大きさ [A·m²]
        M: 双極子の質量 [kg]
        I_perp: 横方向の慣性モーメント [kg·m²]
        I_axial: 軸方向の慣性モーメント [kg·m²] (スピン角速度の換算にのみ使用)
        mu0: 真空の透磁率 [T·m/A]
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    kappa: PositiveReal
    h: PositiveReal
    mu: PositiveReal
    M: PositiveReal
    I_perp: PositiveReal
    I_axial: PositiveReal
    mu0: PositiveReal = MU0

    @property
    def lambda0(self) -> float:
        """結合定数 λ₀ = μ₀κμ"""
        return self.mu0 * self.kappa * self.mu

    @property
    def alpha(self) -> float:
        return 1.0 / self.I_perp

    @property
    def guard_radius(self) -> float:
        return POLE_GUARD_FRACTION * self.h

    def scaled(self, **factors: float) -> "OrbitronParams":
        """指定フィールドを係数倍したコピーを返す"""
        values = self.model_dump()
        for key, factor in factors.items():
            values[key] = values[key] * factor
        return OrbitronParams(**values)


class MagnetSpecs(BaseModel):
    """磁石の材料・形状データ (円板状の可動磁石と二磁極)"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    density: PositiveReal
    remanence: PositiveReal
    disk_diameter: PositiveReal
    disk_height: PositiveReal
    pole_kappa: PositiveReal
    pole_half_gap: PositiveReal
    mu0: PositiveReal = MU0


# Nd-Fe-B 円板と二磁極の基準構成
NDFEB_REFERENCE_SPECS = MagnetSpecs(
    density=7.4e3,
    remanence=0.25,
    disk_diameter=0.014,
    disk_height=0.006,
    pole_kappa=17.6,
    pole_half_gap=0.05,
)


def params_from_specs(specs: MagnetSpecs) -> OrbitronParams:
    """MagnetSpecs から OrbitronParams を導出"""
    radius = specs.disk_diameter / 2.0
    volume = math.pi * radius**2 * specs.disk_height
    mass = specs.density * volume
    return OrbitronParams(
        kappa=specs.pole_kappa,
        h=specs.pole_half_gap,
        mu=specs.remanence * volume / specs.mu0,
        M=mass,
        I_perp=mass * (3.0 * radius**2 + specs.disk_height**2) / 12.0,
        I_axial=mass * radius**2 / 2.0,
        mu0=specs.mu0,
    )


def from_magnet_specs(
    density: float,
    remanence: float,
    disk_diameter: float,
    disk_height: float,
    pole_kappa: float,
    pole_half_gap: float,
    mu0: float = MU0,
) -> OrbitronParams:
    """
    磁石の材料データから物理パラメータを構築

    Args:
        density: 密度 [kg/m³]
        remanence: 残留磁束密度 [T]
        disk_diameter: 円板の直径 [m]
        disk_height: 円板の高さ [m]
        pole_kappa: 磁極の強さ [A·m]
        pole_half_gap: 磁極間距離の半分 [m]

    Returns:
        OrbitronParams
    """
    try:
        specs = MagnetSpecs(
            density=density,
            remanence=remanence,
            disk_diameter=disk_diameter,
            disk_height=disk_height,
            pole_kappa=pole_kappa,
            pole_half_gap=pole_half_gap,
            mu0=mu0,
        )
    except ValidationError as e:
        raise ParameterValidationError(f"磁石仕様が不正です: {e}") from e
    return params_from_specs(specs)


@dataclass(frozen=True)
class ScalarInvariants:
    """状態のスカラー不変量 (r, c′, c″, c‴)"""

    r: float
    c1: float
    c2: float
    c3: float


def scalar_invariants(state: Any) -> ScalarInvariants:
    """
    DipoleState からスカラー不変量を計算

    c′ = x₃/r, c″ = ν·e_r, c‴ = ν₃
    """
    x = state.x
    r = math.sqrt(float(dot3(x, x)))
    if r == 0.0:
        raise DomainError("原点では e_r が定義されません (r = 0)")
    nu = state.nu
    return ScalarInvariants(
        r=r,
        c1=float(x[2]) / r,
        c2=float(dot3(nu, x)) / r,
        c3=float(nu[2]),
    )


def pole_distances(h: float, pos: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """+h 極と -h 極までの距離"""
    dz_plus = pos[..., 2] - h
    dz_minus = pos[..., 2] + h
    rho2 = pos[..., 0] ** 2 + pos[..., 1] ** 2
    return np.sqrt(rho2 + dz_plus**2), np.sqrt(rho2 + dz_minus**2)


def check_pole_guard(params: OrbitronParams, pos: np.ndarray) -> None:
    """ガード半径内の点を拒否"""
    d_plus, d_minus = pole_distances(params.h, pos)
    closest = float(np.min(np.minimum(d_plus, d_minus)))
    if closest < params.guard_radius:
        raise PoleProximityError(closest, params.guard_radius)


def coulomb_field_array(params: OrbitronParams, pos: np.ndarray) -> np.ndarray:
    """二磁極の磁場 (ガード検査なし、任意の先頭軸に対応)"""
    coeff = params.mu0 * params.kappa / (4.0 * math.pi)
    field = np.zeros_like(pos, dtype=np.float64)
    for eps in (1.0, -1.0):
        d = pos - eps * params.h * E_Z
        dist = np.sqrt(dot3(d, d))
        field = field + (eps * coeff) * d / (dist**3)[..., None]
    return field


def coulomb_jacobian_array(params: OrbitronParams, pos: np.ndarray) -> np.ndarray:
    """磁場のヤコビ行列 ∂B_i/∂x_j (shape=(..., 3, 3))"""
    coeff = params.mu0 * params.kappa / (4.0 * math.pi)
    eye = np.eye(3)
    jac = np.zeros(pos.shape[:-1] + (3, 3))
    for eps in (1.0, -1.0):
        d = pos - eps * params.h * E_Z
        dist = np.sqrt(dot3(d, d))[..., None, None]
        outer = d[..., :, None] * d[..., None, :]
        jac = jac + (eps * coeff) * (eye / dist**3 - 3.0 * outer / dist**5)
    return jac


def field_at(params: OrbitronParams, pos: npt.ArrayLike) -> Vec3:
    """
    位置 pos における二磁極の磁場 B [T]

    B = Σ_ε (μ₀/4π) εκ (r − εh e_z)/|r − εh e_z|³
    """
    p = vec3(pos, "pos")
    check_pole_guard(params, p)
    return coulomb_field_array(params, p)


def field_jacobian(params: OrbitronParams, pos: npt.ArrayLike) -> np.ndarray:
    """位置 pos における ∂B_i/∂x_j"""
    p = vec3(pos, "pos")
    check_pole_guard(params, p)
    return coulomb_jacobian_array(params, p)
