"""
Orbitron コマンドラインインターフェース
orbitron <command> --config <path> [--out <dir>] [--seed <n>] [--threads <n>]

終了コード: 0 成功, 1 検証エラー, 2 数値エラー, 3 入出力エラー
"""

import argparse
import logging
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from pydantic import ValidationError

from config import RunConfig, load_config, resolve_out_dir
from csv_output import write_batch_csv, write_stability_map_csv, write_trajectory_csv
from dynamics import integrate
from equilibrium import make_equilibrium, orbital_frequency, verify_critical_point
from errors import OrbitronError, OutputError, ParameterValidationError
from montecarlo import PerturbationSpec, run_batch, sample_perturbed
from report_format import format_report
from run_callback import RunCallback, create_session_id
from shared_state import create_state, get_state_summary, require_valid_state
from stability import build_q, form_discrepancy, projected_hessian_oracle, stability_conditions, stability_map

logger = logging.getLogger(__name__)


@dataclass
class CommandResult:
    """コマンドの実行結果"""
    command: str
    text: str
    files: List[Path] = field(default_factory=list)
    exit_code: int = 0


def _write_text(path: Path, text: str) -> Path:
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as e:
        raise OutputError(f"レポートを書き込めません: {path}: {e}") from e
    return path


def _log(callback: Optional[RunCallback], step: str, data: Dict[str, Any]) -> None:
    if callback:
        callback.log_step(step, data)


def cmd_equilibrium(config: RunConfig, out_dir: Path,
                    callback: Optional[RunCallback] = None) -> CommandResult:
    """相対平衡を構成し、臨界点の残差とともに出力"""
    block = config.equilibrium
    params = config.params.build()
    n0 = block.resolve_n0(params)
    eq = make_equilibrium(params, block.r0, n0)
    residual = verify_critical_point(params, eq)
    _log(callback, "equilibrium", {"r0": eq.r0, "omega": eq.omega, "residual": residual})

    values = {
        "r0": eq.r0,
        "n0": eq.n0,
        "h": params.h,
        "omega": eq.omega,
        "period": eq.period,
        "p0": eq.p0,
        "K": eq.K,
        "lambda1": eq.lambda1,
        "lambda2": eq.lambda2,
        "critical_point_residual": residual,
    }
    text = format_report("equilibrium", values)
    path = _write_text(out_dir / "equilibrium_summary.txt", text)
    return CommandResult("equilibrium", text, [path])


def cmd_stability(config: RunConfig, out_dir: Path,
                  callback: Optional[RunCallback] = None) -> CommandResult:
    """単一点の安定性レポート、または (r0/h, n0) 格子の安定性マップ"""
    block = config.stability
    params = config.params.build()
    values: Dict[str, Any] = {}
    files: List[Path] = []

    if block.point is not None:
        n0 = block.point.resolve_n0(params)
        report = stability_conditions(params, block.point.r0, n0)
        values.update({k: v for k, v in asdict(report).items() if k != "notes"})
        values["verdict"] = report.verdict
        values["boundary_mismatch"] = bool(report.notes)
        if block.oracle:
            eq = make_equilibrium(params, block.point.r0, n0)
            values["oracle_discrepancy"] = form_discrepancy(
                build_q(params, eq), projected_hessian_oracle(params, eq)
            )
        _log(callback, "stability_point", {"verdict": report.verdict, "r0_over_h": report.r0_over_h})

    if block.sweep is not None:
        rows = stability_map(params, block.sweep.ratios().tolist(), block.sweep.n0_values().tolist())
        files.append(write_stability_map_csv(out_dir / "stability_map.csv", rows))
        values["sweep"] = {
            "cells": len(rows),
            "positive_definite_cells": sum(1 for r in rows if r.q_positive_definite),
            "geometric_ok_cells": sum(1 for r in rows if r.geometric_ok),
        }
        _log(callback, "stability_map", values["sweep"])

    text = format_report("stability", values)
    files.insert(0, _write_text(out_dir / "stability_summary.txt", text))
    return CommandResult("stability", text, files)


def cmd_simulate(config: RunConfig, out_dir: Path,
                 callback: Optional[RunCallback] = None,
                 seed: Optional[int] = None) -> CommandResult:
    """軌道を積分して CSV と要約を出力 (障害時は部分軌道を書いて終了コード 2)"""
    block = config.simulate
    params = config.params.build()

    eq = None
    perturbation_seed = None
    if block.equilibrium is not None:
        n0 = block.equilibrium.resolve_n0(params)
        eq = make_equilibrium(params, block.equilibrium.r0, n0)
        if block.rel_eps > 0.0:
            perturbation_seed = block.seed if seed is None else seed
            spec = PerturbationSpec(rel_eps=block.rel_eps, seed=perturbation_seed, n_trials=1)
            initial = sample_perturbed(eq, spec, 0)
        else:
            initial = eq.state
        period = eq.period
    else:
        s = block.initial
        initial = create_state(s.x, s.p, s.nu, s.n)
        require_valid_state(initial)
        rho = math.hypot(float(initial.x[0]), float(initial.x[1]))
        period = 2.0 * math.pi / orbital_frequency(params, rho) if rho > 0.0 else None

    if (block.dt is None or block.t_end is None) and period is None:
        raise ParameterValidationError("z 軸上の初期状態では dt と t_end を明示してください")
    dt = block.dt if block.dt is not None else period / block.steps_per_period
    t_end = block.t_end if block.t_end is not None else block.periods * period

    started = time.perf_counter()
    traj = integrate(params, initial, t_end, dt, renormalize=block.renormalize,
                     save_every=block.save_every, equations=block.equations)
    _log(callback, "integrate", {
        "steps_saved": len(traj),
        "duration_ms": (time.perf_counter() - started) * 1000,
        "fault": traj.faulted,
    })

    csv_path = write_trajectory_csv(out_dir / "trajectory.csv", traj)
    values: Dict[str, Any] = {
        "equations": block.equations,
        "dt": dt,
        "t_end": t_end,
        "t_final": float(traj.times[-1]),
        "saved_steps": len(traj),
        "renormalize": block.renormalize,
        "drift": traj.drift(),
        "fault": traj.faulted,
        "fault_detail": traj.fault.detail if traj.fault else None,
        "seed": perturbation_seed,
        "initial_state": get_state_summary(initial),
        "final_state": get_state_summary(traj.final_state),
    }
    if eq is not None:
        radii = np.linalg.norm(traj.states[:, 0:3], axis=1)
        values["max_radius_deviation"] = float(np.max(np.abs(radii - eq.r0)) / eq.r0)
    text = format_report("simulate", values)
    summary_path = _write_text(out_dir / "simulate_summary.txt", text)
    return CommandResult("simulate", text, [summary_path, csv_path],
                         exit_code=traj.fault.exit_code if traj.fault else 0)


def cmd_montecarlo(config: RunConfig, out_dir: Path,
                   callback: Optional[RunCallback] = None,
                   seed: Optional[int] = None,
                   threads: Optional[int] = None) -> CommandResult:
    """モンテカルロ試行を実行し、要約と試行ごとの CSV を出力"""
    block = config.montecarlo
    params = config.params.build()
    n0 = block.equilibrium.resolve_n0(params)
    eq = make_equilibrium(params, block.equilibrium.r0, n0)
    spec = PerturbationSpec(
        rel_eps=block.rel_eps,
        seed=block.seed if seed is None else seed,
        n_trials=block.n_trials,
        horizon_periods=block.horizon_periods,
    )
    result = run_batch(
        params, eq, spec,
        threshold=block.threshold,
        steps_per_period=block.steps_per_period,
        save_every=block.save_every,
        threads=block.threads if threads is None else threads,
        callback=callback,
    )

    values = {
        "r0": eq.r0,
        "n0": eq.n0,
        "n_trials": result.n_trials,
        "seed": spec.seed,
        "rng_algorithm": result.rng_algorithm,
        "rel_eps": spec.rel_eps,
        "horizon_periods": spec.horizon_periods,
        "steps_per_period": result.steps_per_period,
        "threshold": result.threshold,
        "bounded_count": result.bounded_count,
        "unbounded_count": result.unbounded_count,
        "fault_count": result.fault_count,
        "bounded_fraction": result.bounded_fraction,
        "percentiles": result.percentiles,
        "mean_energy_drift": result.mean_energy_drift,
        "sufficient_conditions_hold": result.sufficient_conditions_hold,
    }
    text = format_report("montecarlo", values)
    files = [
        _write_text(out_dir / "montecarlo_summary.txt", text),
        write_batch_csv(out_dir / "montecarlo_trials.csv", result),
    ]
    return CommandResult("montecarlo", text, files)


COMMAND_HANDLERS: Dict[str, Callable[..., CommandResult]] = {
    "simulate": cmd_simulate,
    "equilibrium": cmd_equilibrium,
    "stability": cmd_stability,
    "montecarlo": cmd_montecarlo,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="orbitron",
        description="二磁極の磁場中を公転する磁気双極子の数値解析",
    )
    parser.add_argument("command", choices=list(COMMAND_HANDLERS))
    parser.add_argument("--config", required=True, help="YAML 設定ファイル")
    parser.add_argument("--out", default=None, help="出力ディレクトリ (既定: $ORBITRON_OUT_DIR または ./orbitron_out)")
    parser.add_argument("--seed", type=int, default=None, help="乱数の種を上書き (montecarlo, simulate)")
    parser.add_argument("--threads", type=int, default=None, help="montecarlo のスレッド数を上書き")
    parser.add_argument("--log-level", default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parser.add_argument("--log-file", default=None, help="実行ログを追記する JSON ファイル")
    parser.add_argument("--quiet", action="store_true", help="構造化ログを出力しない")
    return parser


def run_command(args: argparse.Namespace, callback: RunCallback) -> CommandResult:
    config = load_config(args.config)
    config.require_command(args.command)
    out_dir = resolve_out_dir(args.out)
    logger.info("%s: 出力先 %s", args.command, out_dir)
    if args.seed is not None and args.command not in ("montecarlo", "simulate"):
        raise ParameterValidationError(f"--seed は {args.command} では使えません")
    if args.threads is not None and args.command != "montecarlo":
        raise ParameterValidationError(f"--threads は {args.command} では使えません")
    callback.log_step("load_config", {"command": config.command, "out_dir": str(out_dir)})
    if args.command == "montecarlo":
        return cmd_montecarlo(config, out_dir, callback, seed=args.seed, threads=args.threads)
    if args.command == "simulate":
        return cmd_simulate(config, out_dir, callback, seed=args.seed)
    return COMMAND_HANDLERS[args.command](config, out_dir, callback)


def _end_session(callback: RunCallback, exit_code: int, detail: str) -> int:
    """セッションを閉じて終了コードを返す (ログを書けなければ 3)"""
    try:
        callback.end_session(exit_code, detail)
    except OutputError as e:
        print(f"エラー: {e.detail}", file=sys.stderr)
        return e.exit_code
    return exit_code


def main(argv: Optional[List[str]] = None) -> int:
    """
    CLI のエントリーポイント

    Returns:
        終了コード
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    callback = RunCallback(
        stream_enabled=not args.quiet,
        file_logging=args.log_file is not None,
        log_file=args.log_file or "orbitron_log.json",
    )
    callback.start_session(create_session_id(args.command), args.command, args.config)

    try:
        result = run_command(args, callback)
    except ValidationError as e:
        print(f"設定エラー: {e}", file=sys.stderr)
        return _end_session(callback, 1, str(e))
    except OrbitronError as e:
        print(f"エラー: {e.detail}", file=sys.stderr)
        return _end_session(callback, e.exit_code, e.detail)

    print(result.text, end="")
    if result.exit_code != 0:
        print("エラー: 積分が中断されました (部分的な出力を書き込みました)", file=sys.stderr)
    return _end_session(callback, result.exit_code, ", ".join(str(p) for p in result.files))


if __name__ == "__main__":
    sys.exit(main())
