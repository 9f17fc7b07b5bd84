"""
Results manager for c2lt3d runs.

Every command writes into one output directory: the resolved configuration,
a report document, optional per-object tables and audit files. Reports carry
no wall-clock fields, so a rerun with the same inputs and seed reproduces
them byte for byte.
"""

import json
import math
import os
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd

from c2lt3d import __version__
from c2lt3d.utils.errors import DataError

TOOL_NAME = "c2lt3d"
REPORT_NAME = "report.json"


def to_jsonable(value: Any) -> Any:
    """Plain JSON types: numpy scalars and arrays unwrapped, non-finite floats as null."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def build_report(command: str, config: Dict, objects: Sequence[Dict], aggregate: Dict) -> Dict:
    """Report document: ``meta`` (tool, version, command, config echo), ``objects`` and ``aggregate``."""
    return {
        "meta": {"tool": TOOL_NAME, "version": __version__, "command": command, "config": config},
        "objects": list(objects),
        "aggregate": aggregate,
    }


class ResultsManager:
    """
    Owns the output directory of one run.

    Parameters
    ----------
    base_dir : str
        Output directory (created on demand).
    run_name : str, optional
        Subdirectory of ``base_dir`` to write into instead.
    """

    def __init__(self, base_dir: str = "results", run_name: Optional[str] = None):
        self.run_name = run_name
        self.run_dir = os.path.join(base_dir, run_name) if run_name else base_dir
        os.makedirs(self.run_dir, exist_ok=True)

    def path(self, name: str) -> str:
        return os.path.join(self.run_dir, name)

    def _dump(self, document: Any, name: str) -> str:
        filepath = self.path(name)
        with open(filepath, "w", encoding="utf-8") as f:
            json.dump(to_jsonable(document), f, indent=2, sort_keys=True, allow_nan=False)
            f.write("\n")
        return filepath

    def save_config(self, config_dict: Dict) -> str:
        """Write the resolved configuration to ``config.json``."""
        return self._dump(config_dict, "config.json")

    def write_report(self, report: Dict, name: str = REPORT_NAME) -> str:
        """Write a report document as indented JSON with sorted keys."""
        return self._dump(report, name)

    def write_table(self, rows: Sequence[Dict], name: str) -> str:
        """Write flat rows as CSV through pandas."""
        filepath = self.path(name)
        pd.DataFrame([to_jsonable(r) for r in rows]).to_csv(filepath, index=False)
        return filepath

    def write_jsonl(self, records: Iterable[Dict], name: str) -> str:
        """One compact JSON document per line."""
        filepath = self.path(name)
        with open(filepath, "w", encoding="utf-8") as f:
            for record in records:
                f.write(json.dumps(to_jsonable(record), sort_keys=True, separators=(",", ":")) + "\n")
        return filepath

    @staticmethod
    def load_report(path: str) -> Dict:
        """
        Load a report document.

        Parameters
        ----------
        path : str
            A report JSON file, or a run directory containing ``report.json``.

        Returns
        -------
        dict
        """
        if os.path.isdir(path):
            path = os.path.join(path, REPORT_NAME)
        if not os.path.exists(path):
            raise DataError(f"report not found: {path}")
        try:
            with open(path, "r", encoding="utf-8") as f:
                report = json.load(f)
        except json.JSONDecodeError as e:
            raise DataError(f"report {path} is not valid JSON: {e}") from e
        if not isinstance(report, dict) or "meta" not in report:
            raise DataError(f"{path} is not a c2lt3d report")
        return report

    @staticmethod
    def collect_reports(paths: Sequence[str], output_file: Optional[str] = None) -> pd.DataFrame:
        """
        Flatten the aggregate block of many reports into one table.

        Parameters
        ----------
        paths : sequence of str
            Report files or run directories.
        output_file : str, optional
            CSV path to save the table to.

        Returns
        -------
        pandas.DataFrame
            One row per report: ``source``, ``command``, ``seed`` and the
            dotted aggregate keys.
        """
        rows: List[Dict] = []
        for path in paths:
            report = ResultsManager.load_report(path)
            meta = report["meta"]
            row = {
                "source": path,
                "command": meta.get("command"),
                "seed": meta.get("config", {}).get("seed"),
            }
            flat = pd.json_normalize(report.get("aggregate", {}), sep=".")
            if len(flat):
                row.update(flat.iloc[0].to_dict())
            rows.append(row)
        df = pd.DataFrame(rows) if rows else pd.DataFrame(columns=["source", "command", "seed"])
        if output_file:
            df.to_csv(output_file, index=False)
        return df
