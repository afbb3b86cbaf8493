"""JSON-friendly check reports shared by the verification harnesses."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

SLACK = 1e-9


def jsonable(value: Any) -> Any:
    """Convert numpy scalars/arrays and non-finite floats into strict JSON values."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return value


@dataclass
class Report:
    """Outcome of a verification sweep.

    ``max_slack_used`` is the largest amount by which a checked left-hand
    side came within (positive) or exceeded (negative) its bound, i.e. the
    smallest margin observed.
    """

    check: str
    instances: int = 0
    violations: list = field(default_factory=list)
    max_slack_used: float = 0.0
    details: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    def record(self, margin: float, info: dict | None = None, tol: float = 0.0) -> None:
        """Register one instance whose bound holds iff ``margin >= -tol``."""
        if self.instances == 0:
            self.max_slack_used = margin
        else:
            self.max_slack_used = min(self.max_slack_used, margin)
        self.instances += 1
        if not margin >= -tol:
            self.violations.append(jsonable({"margin": margin, **(info or {})}))

    def merge(self, other: "Report") -> None:
        if other.instances == 0:
            return
        if self.instances == 0:
            self.max_slack_used = other.max_slack_used
        else:
            self.max_slack_used = min(self.max_slack_used, other.max_slack_used)
        self.instances += other.instances
        self.violations.extend(other.violations)

    def to_json(self) -> dict:
        doc = {
            "check": self.check,
            "instances": self.instances,
            "violations": self.violations,
            "max_slack_used": self.max_slack_used,
        }
        if self.details:
            doc["details"] = self.details
        return jsonable(doc)
