"""
Report records and their persistence (CSV, JSON, two-column plot data).
"""

import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd

from src.calculation.fields_norms import Field

logger = logging.getLogger(__name__)

REPORT_COLUMNS = [
    "estimate_id", "case", "mu", "nr", "nz", "lhs", "rhs", "ratio",
    "residual", "prefactor", "skipped", "reason",
]


@dataclass
class EstimateReport:
    """
    Both sides of one estimate for one case on one mesh.

    ratio is lhs/rhs, defined as 0 when both sides vanish.
    """
    estimate_id: str
    case: str
    lhs: float
    rhs: float
    mu: float
    nr: int
    nz: int
    residual: float = 0.0
    prefactor: Optional[float] = None
    terms: Dict[str, float] = field(default_factory=dict)
    skipped: bool = False
    reason: str = ""

    @property
    def ratio(self) -> float:
        if self.skipped or (self.lhs == 0.0 and self.rhs == 0.0):
            return 0.0
        if self.rhs == 0.0:
            return math.inf
        return self.lhs / self.rhs

    @property
    def sort_key(self):
        return (self.case, self.estimate_id, self.nr, self.nz, self.mu)

    @classmethod
    def skip(cls, estimate_id: str, case: str, mu: float, nr: int, nz: int,
             reason: str) -> "EstimateReport":
        logger.warning("%s skipped for %s: %s", estimate_id, case, reason)
        return cls(estimate_id, case, 0.0, 0.0, mu, nr, nz, skipped=True, reason=reason)

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["ratio"] = self.ratio
        return data

    def to_row(self) -> Dict:
        data = self.to_dict()
        return {key: data[key] for key in REPORT_COLUMNS}


@dataclass
class ConvergenceTable:
    """Per-mesh ratios of one estimate plus the stable/drifting/diverging verdict."""
    case: str
    estimate_id: str
    frame: pd.DataFrame
    verdict: str
    observed_order: Optional[float] = None

    def to_dict(self) -> Dict:
        return {
            "case": self.case,
            "estimate_id": self.estimate_id,
            "verdict": self.verdict,
            "observed_order": self.observed_order,
            "rows": self.frame.astype(object).where(self.frame.notna(), None).to_dict(orient="records"),
        }


# ---------------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------------

def reports_frame(reports: Iterable[EstimateReport]) -> pd.DataFrame:
    rows = [report.to_row() for report in sorted(reports, key=lambda rep: rep.sort_key)]
    return pd.DataFrame(rows, columns=REPORT_COLUMNS)


def constants_by_estimate(reports: Iterable[EstimateReport]) -> pd.DataFrame:
    """Largest measured ratio per estimate id at the finest mesh of each case."""
    frame = reports_frame(reports)
    frame = frame[~frame["skipped"]]
    if frame.empty:
        return pd.DataFrame(columns=["estimate_id", "constant", "cases"])
    frame = frame.assign(cells=frame["nr"] * frame["nz"])
    finest = frame[frame["cells"] == frame.groupby(["estimate_id", "case"])["cells"].transform("max")]
    summary = finest.groupby("estimate_id").agg(constant=("ratio", "max"), cases=("case", "nunique"))
    return summary.reset_index()


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def _ensure_parent(path: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def _json_default(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return str(value)


def write_json(data, path: str) -> str:
    _ensure_parent(path)
    with open(path, "w") as f:
        json.dump(data, f, indent=2, default=_json_default)
    return path


def write_reports(reports: Sequence[EstimateReport], csv_path: str,
                  json_path: Optional[str] = None) -> List[str]:
    """One CSV row per report plus (optionally) the JSON array with per-term detail."""
    _ensure_parent(csv_path)
    reports_frame(reports).to_csv(csv_path, index=False)
    written = [csv_path]
    if json_path:
        ordered = sorted(reports, key=lambda rep: rep.sort_key)
        written.append(write_json([report.to_dict() for report in ordered], json_path))
    return written


def write_field_csv(field_: Field, path: str) -> str:
    """Field as rows r,z,value in row-major (r outer, z inner) order."""
    _ensure_parent(path)
    field_.to_frame().to_csv(path, index=False, float_format="%.17g")
    return path


def write_plot_data(x: Sequence[float], y: Sequence[float], path: str,
                    header: str = "") -> str:
    """Whitespace-separated two-column file readable by gnuplot."""
    _ensure_parent(path)
    with open(path, "w") as f:
        if header:
            f.write(f"# {header}\n")
        for xi, yi in zip(x, y):
            f.write(f"{float(xi):.17g} {float(yi):.17g}\n")
    return path


def write_convergence(table: ConvergenceTable, out_dir: str) -> List[str]:
    stem = f"{table.case}_{table.estimate_id}".replace(".", "_")
    csv_path = os.path.join(out_dir, f"convergence_{stem}.csv")
    _ensure_parent(csv_path)
    table.frame.to_csv(csv_path, index=False)
    plot_path = write_plot_data(table.frame["h"], table.frame["ratio"],
                                os.path.join(out_dir, f"convergence_{stem}.dat"),
                                header=f"{table.estimate_id} {table.case}: h ratio")
    json_path = write_json(table.to_dict(), os.path.join(out_dir, f"convergence_{stem}.json"))
    return [csv_path, plot_path, json_path]
