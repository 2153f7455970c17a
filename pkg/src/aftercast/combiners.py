"""Name registry for every combiner, shared by the simulation and panel harnesses.

Names follow the result tables: A2, A1, At, Ag, SA, MD, TM, BG, BG_<rho>
(e.g. BG_0.9), LR, CLR.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence, Tuple

from .baselines import BaselineCombiner, BaselineConfig, BaselineMethod
from .engine import AfterConfig, AfterState, Method

AFTER_NAMES = {"A2": Method.L2, "A1": Method.L1, "At": Method.T, "Ag": Method.G}
FIXED_BASELINES = ("SA", "MD", "TM", "BG", "LR", "CLR")
LINREG_METHODS = ("A2", "A1", "At", "Ag")
AR_METHODS = ("A2", "A1", "At", "Ag", "SA", "MD", "TM", "BG", "BG_0.95", "BG_0.9",
                   "BG_0.8", "BG_0.7", "LR", "CLR")
PANEL_METHODS = ("SA", "MD", "TM", "BG", "BG_0.95", "BG_0.9", "BG_0.8", "BG_0.7",
                 "A1", "A2", "At", "Ag")


class Combiner(Protocol):
    def forecast(self, forecasts) -> float: ...

    def absorb(self, forecasts, outcome: float): ...


@dataclass(frozen=True)
class AfterOptions:
    """AFTER settings shared by every AFTER-family method in a run."""

    omega: Tuple[float, ...] = (1.0, 3.0)
    c1: float = 1.0
    c2: float = 2.0
    warmup: int = 1
    centered_sd: bool = False


def valid_names() -> str:
    return ", ".join([*AFTER_NAMES, *FIXED_BASELINES, "BG_<rho>"])


def check_name(name: str) -> str:
    if name in AFTER_NAMES or name in FIXED_BASELINES:
        return name
    if name.startswith("BG_"):
        try:
            rho = float(name[3:])
        except ValueError:
            rho = -1.0
        if 0 < rho < 1:
            return name
    raise ValueError(f"unknown method {name!r}; valid names: {valid_names()}")


def check_names(names: Sequence[str]) -> Tuple[str, ...]:
    if not names:
        raise ValueError("method list is empty")
    return tuple(check_name(n) for n in names)


def make_combiner(name: str, J: int, after: AfterOptions = AfterOptions()) -> Combiner:
    check_name(name)
    if name in AFTER_NAMES:
        cfg = AfterConfig(method=AFTER_NAMES[name], omega=after.omega, c1=after.c1, c2=after.c2,
                          warmup=after.warmup, centered_sd=after.centered_sd)
        return AfterState(cfg, J)
    if name.startswith("BG_"):
        return BaselineCombiner(BaselineConfig(BaselineMethod.DISCOUNTED_BG, rho=float(name[3:])), J)
    return BaselineCombiner(BaselineConfig(BaselineMethod(name)), J)
