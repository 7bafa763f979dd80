"""
モンテカルロ試行の記録と集計
試行ごとの最大偏差、有界判定、保存量ドリフト、所要時間を記録する
"""

import statistics
import threading
import time
from dataclasses import dataclass
from typing import Any, Dict, List, Optional

import numpy as np

PERCENTILES = (50, 90, 99)


@dataclass
class TrialRecord:
    """試行1回分の結果"""
    trial_index: int
    seed: int
    max_deviation: float
    bounded: bool
    fault: bool
    energy_drift: float
    duration_ms: float
    fault_message: Optional[str] = None


class BatchMonitor:
    """試行結果の集計 (複数スレッドから記録される)"""

    def __init__(self, threshold: float):
        self.threshold = threshold
        self.records: List[TrialRecord] = []
        self.lock = threading.Lock()

    def start_measurement(self) -> float:
        """測定開始"""
        return time.perf_counter()

    def record_trial(
        self,
        start_time: float,
        trial_index: int,
        seed: int,
        max_deviation: float,
        energy_drift: float,
        fault_message: Optional[str] = None,
    ) -> TrialRecord:
        """試行結果を記録 (障害のあった試行は有界・非有界のどちらにも数えない)"""
        fault = fault_message is not None
        record = TrialRecord(
            trial_index=trial_index,
            seed=seed,
            max_deviation=max_deviation,
            bounded=(not fault) and max_deviation < self.threshold,
            fault=fault,
            energy_drift=energy_drift,
            duration_ms=(time.perf_counter() - start_time) * 1000,
            fault_message=fault_message,
        )
        with self.lock:
            self.records.append(record)
        return record

    def sorted_records(self) -> List[TrialRecord]:
        with self.lock:
            return sorted(self.records, key=lambda r: r.trial_index)

    def get_summary(self) -> Dict[str, Any]:
        """集計値を取得"""
        records = self.sorted_records()
        if not records:
            return {
                "n_trials": 0,
                "bounded_count": 0,
                "unbounded_count": 0,
                "fault_count": 0,
                "bounded_fraction": 0.0,
                "percentiles": {},
                "mean_energy_drift": None,
            }

        bounded = sum(1 for r in records if r.bounded)
        faults = sum(1 for r in records if r.fault)
        deviations = np.array([r.max_deviation for r in records])
        percentiles = {f"p{q}": float(np.percentile(deviations, q)) for q in PERCENTILES}
        percentiles["max"] = float(np.max(deviations))
        drifts = [r.energy_drift for r in records if r.bounded]

        return {
            "n_trials": len(records),
            "bounded_count": bounded,
            "unbounded_count": len(records) - bounded - faults,
            "fault_count": faults,
            "bounded_fraction": bounded / len(records),
            "percentiles": percentiles,
            "mean_energy_drift": statistics.mean(drifts) if drifts else None,
        }
