"""
Orbitron 例外定義
CLI の終了コードを保持する例外クラス群 (0: 成功, 1: 検証, 2: 数値エラー, 3: 入出力)
"""

from typing import Optional


class OrbitronError(Exception):
    """全例外の基底クラス

    終了コードと詳細メッセージを持つ。
    """

    exit_code: int = 1

    def __init__(self, detail: str, exit_code: Optional[int] = None):
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code


class ParameterValidationError(OrbitronError, ValueError):
    """入力パラメータの検証エラー"""

    exit_code = 1


class DomainError(OrbitronError, ValueError):
    """定義域外での評価 (原点、非有限値、条件の未定義領域など)"""

    exit_code = 2


class PoleProximityError(DomainError):
    """磁極のガード半径内での評価"""

    def __init__(self, distance: float, guard_radius: float):
        super().__init__(
            f"磁極に近すぎます: 距離 {distance:.6g} m < ガード半径 {guard_radius:.6g} m"
        )
        self.distance = distance
        self.guard_radius = guard_radius


class IntegrationFault(OrbitronError):
    """積分中の数値障害 (Trajectory.fault に格納され、送出はされない)"""

    exit_code = 2

    def __init__(self, detail: str, time: float, step_index: int):
        super().__init__(detail)
        self.time = time
        self.step_index = step_index


class OutputError(OrbitronError):
    """ファイル出力エラー"""

    exit_code = 3
