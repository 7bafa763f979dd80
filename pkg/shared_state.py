"""
各モジュール間で共有される状態定義
双極子の位相空間状態 DipoleState とその時間微分 StateDerivative
"""

import math
from dataclasses import dataclass
from typing import Any, Dict

import numpy as np
import numpy.typing as npt

from errors import DomainError
from model import dot3, vec3

# 12成分配列での並び順 (CSV の列名にも使用)
STATE_LABELS = (
    "x1", "x2", "x3",
    "p1", "p2", "p3",
    "nu1", "nu2", "nu3",
    "n1", "n2", "n3",
)

UNIT_NORM_TOL = 1e-9


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class DipoleState:
    """
    双極子の状態

    Fields:
        x: 位置 [m]
        p: 運動量 [kg·m/s]
        nu: 双極子の向き (単位ベクトル、RK4 の中間段では単位長でなくてもよい)
        n: 角運動量 [kg·m²/s]
    """

    x: np.ndarray
    p: np.ndarray
    nu: np.ndarray
    n: np.ndarray

    def __post_init__(self) -> None:
        for name in ("x", "p", "nu", "n"):
            object.__setattr__(self, name, _readonly(vec3(getattr(self, name), name)))

    def to_array(self) -> np.ndarray:
        """12成分配列 (x, p, ν, n) に変換"""
        return np.concatenate((self.x, self.p, self.nu, self.n))

    @classmethod
    def from_array(cls, y: npt.ArrayLike) -> "DipoleState":
        arr = np.asarray(y, dtype=np.float64)
        if arr.shape != (12,):
            raise DomainError(f"状態配列は12成分である必要があります: shape={arr.shape}")
        return cls(x=arr[0:3], p=arr[3:6], nu=arr[6:9], n=arr[9:12])


@dataclass(frozen=True, eq=False)
class StateDerivative:
    """DipoleState の時間微分 (ẋ, ṗ, ν̇, ṅ)"""

    dx: np.ndarray
    dp: np.ndarray
    dnu: np.ndarray
    dn: np.ndarray

    def to_array(self) -> np.ndarray:
        return np.concatenate((self.dx, self.dp, self.dnu, self.dn))

    @classmethod
    def from_array(cls, y: np.ndarray) -> "StateDerivative":
        arr = np.asarray(y, dtype=np.float64)
        return cls(
            dx=_readonly(arr[0:3].copy()),
            dp=_readonly(arr[3:6].copy()),
            dnu=_readonly(arr[6:9].copy()),
            dn=_readonly(arr[9:12].copy()),
        )


def create_state(
    x: npt.ArrayLike,
    p: npt.ArrayLike,
    nu: npt.ArrayLike,
    n: npt.ArrayLike,
    normalize: bool = False,
) -> DipoleState:
    """
    状態を作成する便利関数

    Args:
        x, p, nu, n: 各3成分ベクトル
        normalize: True の場合 ν を単位長に正規化する

    Returns:
        DipoleState
    """
    nu_arr = vec3(nu, "nu")
    if normalize:
        norm = math.sqrt(float(dot3(nu_arr, nu_arr)))
        if norm == 0.0:
            raise DomainError("ν がゼロベクトルのため正規化できません")
        nu_arr = nu_arr / norm
    return DipoleState(x=x, p=p, nu=nu_arr, n=n)


def validate_state(state: DipoleState, tol: float = UNIT_NORM_TOL) -> bool:
    """
    DipoleState の有効性を検証

    Returns:
        |ν| = 1 (許容誤差 tol) かつ全成分が有限なら True
    """
    arr = state.to_array()
    if not np.all(np.isfinite(arr)):
        return False
    return abs(math.sqrt(float(dot3(state.nu, state.nu))) - 1.0) <= tol


def require_valid_state(state: DipoleState, tol: float = UNIT_NORM_TOL) -> None:
    if not validate_state(state, tol):
        norm = math.sqrt(float(dot3(state.nu, state.nu)))
        raise DomainError(f"|ν| = 1 ではありません: |ν| = {norm:.17g}")


def get_state_summary(state: DipoleState) -> Dict[str, Any]:
    """
    DipoleState の要約情報を取得

    Args:
        state: 要約対象の状態

    Returns:
        状態の要約情報
    """
    x, p, nu, n = state.x, state.p, state.nu, state.n
    summary: Dict[str, Any] = {
        "r": math.sqrt(float(dot3(x, x))),
        "rho": math.hypot(float(x[0]), float(x[1])),
        "z": float(x[2]),
        "p_norm": math.sqrt(float(dot3(p, p))),
        "nu_norm": math.sqrt(float(dot3(nu, nu))),
        "nu_dot_n": float(dot3(nu, n)),
        "j3": float(x[0] * p[1] - x[1] * p[0] + n[2]),
        "valid": validate_state(state),
    }
    return summary
