"""Residual bookkeeping shared by the verification suites."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Check:
    name: str
    anchor: str
    residual: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return math.isfinite(self.residual) and self.residual < self.tolerance

    def as_dict(self) -> dict:
        return {
            "identity": self.name,
            "anchor": self.anchor,
            "max_residual": float(self.residual),
            "tolerance": float(self.tolerance),
            "passed": self.passed,
        }


def max_abs(*arrays) -> float:
    """Largest absolute entry over all arrays (0.0 for empty input)."""
    out = 0.0
    for a in arrays:
        a = np.asarray(a, dtype=float)
        if a.size:
            m = float(np.max(np.abs(a)))
            if not math.isfinite(m):
                return math.inf
            out = max(out, m)
    return out


def field_residual(fields, points) -> float:
    """max |F(p)| over a list of fields and the given points."""
    return max_abs(*[f(points) for f in fields])
