"""Shared report container for inequality checks.

Every check emits an InequalityReport: both sides of the estimate, the
empirical constant (lhs/rhs with the stated normalization), and a state in
{pass, degenerate, hypothesis-not-met, fail}.  Serialization is
deterministic (sorted keys, repr floats) so seeded reruns are
byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "InequalityReport",
    "STATES",
    "grid_metadata",
    "write_report",
    "load_report_dict",
    "dump_json",
]

STATES = ("pass", "degenerate", "hypothesis-not-met", "fail")


def _jsonify(obj):
    """Convert numpy scalars/arrays so json sees plain python values."""
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [_jsonify(v) for v in obj.tolist()]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    return obj


def dump_json(payload: dict) -> str:
    """Deterministic JSON text: sorted keys, two-space indent, newline."""
    return json.dumps(_jsonify(payload), sort_keys=True, indent=2) + "\n"


@dataclass
class InequalityReport:
    check_name: str
    anchor: str
    lhs: float | None
    rhs: float | None
    empirical_gamma: float | None
    state: str
    details: dict = field(default_factory=dict)
    seed: int | None = None
    grid_meta: dict | None = None

    def __post_init__(self):
        if self.state not in STATES:
            raise ValueError(f"state must be one of {STATES}, got {self.state!r}")

    @property
    def failed(self) -> bool:
        return self.state == "fail"

    def to_dict(self) -> dict:
        return {
            "check_name": self.check_name,
            "anchor": self.anchor,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "empirical_gamma": self.empirical_gamma,
            "state": self.state,
            "details": dict(self.details),
            "seed": self.seed,
            "grid_meta": self.grid_meta,
        }

    def to_json(self) -> str:
        return dump_json(self.to_dict())

    @staticmethod
    def from_dict(d: dict) -> "InequalityReport":
        return InequalityReport(
            check_name=d["check_name"],
            anchor=d["anchor"],
            lhs=d.get("lhs"),
            rhs=d.get("rhs"),
            empirical_gamma=d.get("empirical_gamma"),
            state=d["state"],
            details=d.get("details", {}),
            seed=d.get("seed"),
            grid_meta=d.get("grid_meta"),
        )


def grid_metadata(grid) -> dict:
    return {
        "dims": grid.ndim,
        "nodes_per_axis": list(grid.nodes_per_axis),
        "box": grid.box.to_dict(),
    }


def write_report(report: InequalityReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(report.to_json())


def load_report_dict(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
