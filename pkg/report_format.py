"""
テキストレポートの書式化と解析
"# タイトル" の行に続いて "key: value" の行が並ぶ形式
浮動小数点数は %.17g で出力し、解析すると同じ値に戻る
"""

import math
import re
from typing import Any, Dict, Mapping, Optional

from errors import ParameterValidationError


def _format_value(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return "%.17g" % value
    if hasattr(value, "item"):
        return _format_value(value.item())
    text = str(value)
    if "\n" in text:
        raise ParameterValidationError(f"レポートの値に改行は使えません: {text!r}")
    return text


def _flatten(values: Mapping[str, Any], prefix: str = "") -> Dict[str, Any]:
    flat: Dict[str, Any] = {}
    for key, value in values.items():
        name = f"{prefix}{key}"
        if isinstance(value, Mapping):
            flat.update(_flatten(value, f"{name}."))
        elif isinstance(value, (list, tuple)):
            for i, item in enumerate(value):
                flat[f"{name}.{i}"] = item
        else:
            flat[name] = value
    return flat


def format_report(title: str, values: Mapping[str, Any]) -> str:
    """
    レポート文字列を作成

    Args:
        title: 先頭行に出力するタイトル
        values: 出力する値 (入れ子の辞書は "a.b" のキーに展開)

    Returns:
        改行で終わるレポート文字列
    """
    lines = [f"# {title}"]
    for key, value in _flatten(values).items():
        lines.append(f"{key}: {_format_value(value)}")
    return "\n".join(lines) + "\n"


class ReportParser:
    """レポート文字列のパーサー"""

    def __init__(self):
        self.title_pattern = re.compile(r'^#\s*(.*?)\s*$')
        self.line_pattern = re.compile(r'^([A-Za-z_][\w.]*)\s*:\s*(.*?)\s*$')
        self.int_pattern = re.compile(r'^[+-]?\d+$')
        self.float_pattern = re.compile(
            r'^[+-]?(?:\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|inf|nan)$'
        )

    def parse_value(self, text: str) -> Any:
        lowered = text.lower()
        if lowered == "true":
            return True
        if lowered == "false":
            return False
        if lowered == "none":
            return None
        if self.int_pattern.match(text):
            return int(text)
        if self.float_pattern.match(lowered):
            return float(text)
        return text

    def parse_report(self, text: str) -> Dict[str, Any]:
        """
        レポートを解析

        Returns:
            Dictionary containing:
            - title: 先頭のタイトル (なければ None)
            - values: キーと値の辞書
        """
        title: Optional[str] = None
        values: Dict[str, Any] = {}
        for number, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line:
                continue
            title_match = self.title_pattern.match(line)
            if title_match:
                if title is None:
                    title = title_match.group(1)
                continue
            match = self.line_pattern.match(line)
            if not match:
                raise ParameterValidationError(f"レポートの {number} 行目を解析できません: {raw!r}")
            values[match.group(1)] = self.parse_value(match.group(2))
        return {"title": title, "values": values}


def parse_report(text: str) -> Dict[str, Any]:
    """
    便利な関数：レポートを解析
    """
    parser = ReportParser()
    return parser.parse_report(text)
