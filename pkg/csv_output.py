"""
CSV 出力
軌道、モンテカルロ試行、安定性マップの書き出し
"""

import csv
from pathlib import Path
from typing import Iterable, List

import numpy as np

from dynamics import CONSERVED_LABELS, Trajectory
from errors import OutputError
from montecarlo import BatchResult
from shared_state import STATE_LABELS
from stability import StabilityMapRow

TRAJECTORY_COLUMNS = ("t",) + STATE_LABELS + CONSERVED_LABELS
BATCH_COLUMNS = ("trial_index", "seed", "max_deviation", "bounded", "fault")
MAP_COLUMNS = ("r0_over_h", "n0", "geometric_ok", "dynamic_ok", "q_positive_definite")


def _bool(value: bool) -> str:
    return "true" if value else "false"


def write_trajectory_csv(path: Path, traj: Trajectory) -> Path:
    """保存ステップごとに1行 (t, 状態12成分, E, j₃, ν·ν, ν·n)"""
    table = np.column_stack((traj.times, traj.states, traj.conserved))
    try:
        np.savetxt(path, table, fmt="%.17g", delimiter=",",
                   header=",".join(TRAJECTORY_COLUMNS), comments="")
    except OSError as e:
        raise OutputError(f"軌道CSVを書き込めません: {path}: {e}") from e
    return path


def _write_rows(path: Path, header: Iterable[str], rows: List[list]) -> Path:
    try:
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as e:
        raise OutputError(f"CSVを書き込めません: {path}: {e}") from e
    return path


def write_batch_csv(path: Path, result: BatchResult) -> Path:
    rows = [
        [r.trial_index, r.seed, "%.17g" % r.max_deviation, _bool(r.bounded), _bool(r.fault)]
        for r in result.records
    ]
    return _write_rows(path, BATCH_COLUMNS, rows)


def write_stability_map_csv(path: Path, rows: List[StabilityMapRow]) -> Path:
    table = [
        ["%.17g" % row.r0_over_h, "%.17g" % row.n0, _bool(row.geometric_ok),
         _bool(row.dynamic_ok), _bool(row.q_positive_definite)]
        for row in rows
    ]
    return _write_rows(path, MAP_COLUMNS, table)
