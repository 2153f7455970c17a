"""Expanding-window scale estimators for each candidate's forecast errors.

One estimator per (candidate, assumed family):

* Normal: root of the uncentered second moment, sqrt(sum e^2 / (n - 1));
  |e_1| for a single error.  ``centered=True`` gives the usual sample SD.
* DoubleExponential: mean absolute error.
* ScaledStudentT(nu): median absolute error divided by ``abs_median(nu)``.

Estimates never fall below ``floor_rel * max|e|`` (``floor_rel`` when all
errors are zero), so a forecaster with a perfect record yields a tiny but
finite scale instead of a degenerate density.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import List, Optional

from .distributions import Family, abs_median

NEUTRAL_SCALE = 1.0


class NotReadyError(RuntimeError):
    """The estimator has seen fewer errors than its warmup requires."""


@dataclass
class ScaleEstimatorState:
    family: Family
    dof: Optional[float] = None
    warmup: int = 1
    floor_rel: float = 1e-8
    centered: bool = False
    errors: List[float] = field(default_factory=list)
    # running summaries; rebuilt from ``errors`` when loading a saved state
    _sum: float = field(default=0.0, repr=False)
    _sum_sq: float = field(default=0.0, repr=False)
    _sum_abs: float = field(default=0.0, repr=False)
    _max_abs: float = field(default=0.0, repr=False)
    _sorted_abs: List[float] = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.family = Family.parse(self.family)
        if self.family is Family.SCALED_T:
            if self.dof is None or not self.dof > 0:
                raise ValueError("t scale estimator needs a positive dof")
        if self.warmup < 0:
            raise ValueError("warmup must be nonnegative")
        if not self.floor_rel > 0:
            raise ValueError("floor_rel must be positive")
        history, self.errors = list(self.errors), []
        self._sum = self._sum_sq = self._sum_abs = self._max_abs = 0.0
        self._sorted_abs = []
        for e in history:
            self.push(e)

    def __len__(self):
        return len(self.errors)

    @property
    def ready(self) -> bool:
        return len(self.errors) >= max(self.warmup, 1)

    def push(self, e: float) -> None:
        e = float(e)
        if not math.isfinite(e):
            raise ValueError(f"forecast error must be finite, got {e}")
        self.errors.append(e)
        a = abs(e)
        self._sum += e
        self._sum_sq += e * e
        self._sum_abs += a
        self._max_abs = max(self._max_abs, a)
        bisect.insort(self._sorted_abs, a)

    @property
    def floor(self) -> float:
        ref = self._max_abs if self._max_abs > 0 else 1.0
        return self.floor_rel * ref

    def estimate(self) -> float:
        n = len(self.errors)
        if not self.ready:
            raise NotReadyError(f"{n} errors seen, warmup is {max(self.warmup, 1)}")
        if self.family is Family.NORMAL:
            if n == 1:
                raw = abs(self.errors[0])
            elif self.centered:
                raw = math.sqrt(max(self._sum_sq - self._sum * self._sum / n, 0.0) / (n - 1))
            else:
                raw = math.sqrt(self._sum_sq / (n - 1))
        elif self.family is Family.DOUBLE_EXPONENTIAL:
            raw = self._sum_abs / n
        else:
            raw = _median_sorted(self._sorted_abs) / abs_median(self.dof)
        return max(raw, self.floor)

    def value(self) -> float:
        """Estimate, or the neutral scale 1.0 before warmup."""
        return self.estimate() if self.ready else NEUTRAL_SCALE

    def copy(self) -> "ScaleEstimatorState":
        return ScaleEstimatorState(self.family, self.dof, self.warmup, self.floor_rel,
                                   self.centered, list(self.errors))

    def to_dict(self) -> dict:
        return {
            "family": self.family.value, "dof": self.dof, "warmup": self.warmup,
            "floor_rel": self.floor_rel, "centered": self.centered, "errors": list(self.errors),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScaleEstimatorState":
        return cls(Family.parse(d["family"]), d.get("dof"), d["warmup"], d["floor_rel"],
                   d.get("centered", False), list(d["errors"]))


def _median_sorted(xs: List[float]) -> float:
    n = len(xs)
    mid = n // 2
    if n % 2:
        return xs[mid]
    return 0.5 * (xs[mid - 1] + xs[mid])


def push_error(state: ScaleEstimatorState, e: float) -> ScaleEstimatorState:
    """Functional form of ``state.push``: returns an updated copy."""
    new = state.copy()
    new.push(e)
    return new
