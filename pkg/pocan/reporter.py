from enum import Enum
from fractions import Fraction
import datetime
import json
import math
from pathlib import Path
import sys
from typing import Any, Dict, Optional, TextIO

import numpy as np
import pandas as pd

INF_TOKEN = "inf"


def to_jsonable(value: Any) -> Any:
    """Converts analysis values to plain JSON types; infinity becomes the token 'inf'."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, Fraction, np.floating)):
        v = float(value)
        if math.isinf(v):
            return INF_TOKEN if v > 0 else "-" + INF_TOKEN
        if math.isnan(v):
            return None
        return v
    if isinstance(value, Path):
        return str(value)
    return value


class Reporter:
    """Collects command results and renders them for the console, as JSON, and as report files."""

    def __init__(self, output_dir: Optional[Path] = None):
        self.output_dir = output_dir
        self.results: Dict[str, Dict[str, Any]] = {}
        self.start_time = datetime.datetime.now()

    def add_analysis_result(self, command: str, model: Optional[Dict[str, str]], result: dict):
        """Stores the result of a command: machine-readable results, tables and precision."""
        self.results[command] = {"model": model, "result": result}

    def to_document(self, command: str, timing: Optional[Dict[str, float]] = None) -> dict:
        data = self.results[command]
        result = data["result"]
        doc = {
            "command": command,
            "model": data["model"],
            "results": result.get("results", {}),
            "precision": result.get("precision", {}),
        }
        if timing is not None:
            doc["timing"] = timing
        return to_jsonable(doc)

    def to_json(self, command: str, timing: Optional[Dict[str, float]] = None) -> str:
        return json.dumps(self.to_document(command, timing), indent=2, ensure_ascii=False)

    def _format_scalar_table(self, title: str, data: Dict[str, Any]) -> str:
        rows = "".join(f"| {k} | {self._cell(v)} |\n" for k, v in data.items())
        return (
            f"### {title}\n"
            "| Quantity | Value |\n"
            "| :--- | :--- |\n"
            f"{rows}\n"
        )

    def _format_frame(self, title: str, df: pd.DataFrame) -> str:
        header = "| " + " | ".join(str(c) for c in df.columns) + " |\n"
        rule = "| " + " | ".join(":---" for _ in df.columns) + " |\n"
        body = "".join("| " + " | ".join(self._cell(v) for v in row) + " |\n" for row in df.itertuples(index=False))
        return f"### {title}\n{header}{rule}{body}\n"

    @staticmethod
    def _cell(value: Any) -> str:
        value = to_jsonable(value)
        if isinstance(value, float):
            return f"{value:.6g}"
        return str(value)

    def write_markdown_report(self) -> Path:
        """Writes result.md with one section per command, plus one CSV per table."""
        md_path = self.output_dir / "result.md"
        with open(md_path, 'w', encoding='utf-8') as f:
            f.write(f"# pOC Analysis Report (Generated on: {self.start_time.strftime('%Y-%m-%d %H:%M:%S')})\n\n")
            for command, data in self.results.items():
                model = data["model"] or {}
                f.write(f"## Command: {command} (Model: {model.get('path', 'N/A')})\n\n")
                if model.get("sha256"):
                    f.write(f"SHA-256: `{model['sha256']}`\n\n")
                result = data["result"]
                if not result:
                    f.write("No analysis results available.\n\n")
                if result.get("summary"):
                    f.write(self._format_scalar_table("Summary", result["summary"]))
                for name, df in result.get("tables", {}).items():
                    f.write(self._format_frame(name, df))
                    self.save_table_csv(command, name, df)
                if result.get("precision"):
                    f.write(self._format_scalar_table("Precision", result["precision"]))
                for line in result.get("notes", []):
                    f.write(f"> {line}\n\n")
                f.write("---\n\n")
        return md_path

    def save_table_csv(self, command: str, name: str, df: pd.DataFrame) -> Path:
        csv_path = self.output_dir / f"{command}_{name.lower().replace(' ', '_')}.csv"
        df.to_csv(csv_path, index=False)
        return csv_path

    def print_console_report(self, stream: TextIO = sys.stdout):
        """Prints the collected results as plain-text tables."""
        print("\n--- pOC Analysis Report ---", file=stream)
        for command, data in self.results.items():
            model = data["model"] or {}
            print(f"\n## Command: {command} (Model: {model.get('path', 'N/A')})", file=stream)
            result = data["result"]
            if not result:
                print("No analysis results available.", file=stream)
                continue
            for key, value in result.get("summary", {}).items():
                print(f"  {key}: {self._cell(value)}", file=stream)
            for name, df in result.get("tables", {}).items():
                print(f"\n### {name}", file=stream)
                if df.empty:
                    print("  (empty)", file=stream)
                else:
                    print(df.to_string(index=False), file=stream)
            for line in result.get("notes", []):
                print(f"  Note: {line}", file=stream)
        print("\n--- End of Report ---", file=stream)
