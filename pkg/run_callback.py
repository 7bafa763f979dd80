"""
実行ログのコールバック機能
コマンド実行の各ステップを構造化JSONとして出力する
"""

import json
import sys
import threading
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, TextIO

from errors import OutputError


class RunCallback:
    """実行ログのセッション管理クラス"""

    def __init__(self,
                 stream_enabled: bool = True,
                 stream: Optional[TextIO] = None,
                 file_logging: bool = False,
                 log_file: str = "orbitron_log.json"):
        self.stream_enabled = stream_enabled
        self.stream = stream
        self.file_logging = file_logging
        self.log_file = log_file
        self.callbacks: List[Callable[[str, Dict[str, Any]], None]] = []
        self.current_session: Optional[Dict[str, Any]] = None
        self.lock = threading.Lock()

    def add_callback(self, callback: Callable[[str, Dict[str, Any]], None]):
        """コールバック関数を追加"""
        self.callbacks.append(callback)

    def start_session(self, session_id: str, command: str, config_path: Optional[str] = None):
        """実行セッションを開始"""
        self.current_session = {
            "session_id": session_id,
            "command": command,
            "config": config_path,
            "start_time": datetime.now().isoformat(),
            "steps": [],
            "status": "started",
        }
        self._emit("SESSION_START", {
            "session_id": session_id,
            "command": command,
            "config": config_path,
        })

    def log_step(self, step_name: str, step_data: Dict[str, Any]):
        """ステップをログに記録 (スレッドから呼ばれてもよい)"""
        with self.lock:
            if not self.current_session:
                return
            self.current_session["steps"].append({
                "step": step_name,
                "timestamp": datetime.now().isoformat(),
                "data": step_data,
            })

        self._emit(f"STEP_{step_name.upper()}", step_data)

        for callback in list(self.callbacks):
            try:
                callback(step_name, step_data)
            except Exception as e:
                self._emit("CALLBACK_ERROR", {"error": str(e), "step": step_name})

    def end_session(self, exit_code: int, detail: str = "") -> Optional[Dict[str, Any]]:
        """実行セッションを終了"""
        if not self.current_session:
            return None

        self.current_session["end_time"] = datetime.now().isoformat()
        self.current_session["exit_code"] = exit_code
        self.current_session["detail"] = detail
        self.current_session["status"] = "completed" if exit_code == 0 else "failed"

        self._emit("SESSION_END", {
            "session_id": self.current_session["session_id"],
            "duration": self._calculate_duration(),
            "steps_count": len(self.current_session["steps"]),
            "exit_code": exit_code,
        })

        if self.file_logging:
            self._log_to_file()

        session_data = self.current_session.copy()
        self.current_session = None
        return session_data

    def _emit(self, event_type: str, data: Dict[str, Any]):
        """構造化ログを出力 (既定は stderr、標準出力はレポート用)"""
        if not self.stream_enabled:
            return

        log_entry = {
            "timestamp": datetime.now().isoformat(),
            "event_type": event_type,
            "data": data,
        }
        try:
            print(f"[ORBITRON_LOG] {json.dumps(log_entry, ensure_ascii=False, default=str)}",
                  file=self.stream or sys.stderr, flush=True)
        except Exception as e:
            print(f"[ORBITRON_LOG_ERROR] {str(e)}", file=sys.stderr, flush=True)

    def _log_to_file(self):
        """セッションをJSONファイルに追記"""
        if not self.current_session:
            return

        log_path = Path(self.log_file)
        try:
            logs = []
            if log_path.exists():
                with open(log_path, "r", encoding="utf-8") as f:
                    logs = json.load(f)
            logs.append(self.current_session)
            with open(log_path, "w", encoding="utf-8") as f:
                json.dump(logs, f, ensure_ascii=False, indent=2, default=str)
        except (OSError, json.JSONDecodeError) as e:
            raise OutputError(f"実行ログを書き込めません: {log_path}: {e}") from e

    def _calculate_duration(self) -> float:
        """セッションの実行時間 [s]"""
        if not self.current_session:
            return 0.0
        try:
            start_time = datetime.fromisoformat(self.current_session["start_time"])
            end_time = datetime.fromisoformat(self.current_session["end_time"])
            return (end_time - start_time).total_seconds()
        except (KeyError, ValueError):
            return 0.0


def create_session_id(command: str) -> str:
    return f"{command}_{datetime.now().strftime('%Y%m%d_%H%M%S')}"
