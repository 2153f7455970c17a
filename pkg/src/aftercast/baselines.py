"""Comparison combiners: SA, MD, TM, BG (plain and discounted), LR and CLR."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

BG_FLOOR_REL = 1e-12


class NotReady(Exception):
    """A history-based combiner lacks the data it needs; callers fall back to SA."""


def _vec(forecasts) -> np.ndarray:
    f = np.asarray(forecasts, dtype=float).ravel()
    if f.size == 0:
        raise ValueError("empty forecast vector")
    return f


def simple_average(forecasts) -> float:
    return float(np.mean(_vec(forecasts)))


def median_combine(forecasts) -> float:
    return float(np.median(_vec(forecasts)))


def trimmed_mean(forecasts) -> float:
    """Mean after dropping one smallest and one largest forecast (SA when J < 3)."""
    f = np.sort(_vec(forecasts))
    if f.size < 3:
        return float(f.mean())
    return float(f[1:-1].mean())


def bg_weights(sq_err_history, rho: Optional[float] = None) -> np.ndarray:
    """Inverse (discounted) mean squared error weights.

    ``sq_err_history`` is (T, J), oldest row first.  Row t gets discount
    rho**(T - 1 - t); rho=None is the plain mean.
    """
    E = np.asarray(sq_err_history, dtype=float)
    if E.ndim == 1:
        E = E[:, None]
    if E.shape[0] == 0:
        raise NotReady("BG needs at least one past squared error")
    if rho is None:
        v = E.mean(axis=0)
    else:
        if not 0 < rho < 1:
            raise ValueError("discount factor must lie in (0, 1)")
        d = rho ** np.arange(E.shape[0] - 1, -1, -1, dtype=float)
        v = d @ E / d.sum()
    vmax = v.max()
    v = np.maximum(v, BG_FLOOR_REL * vmax if vmax > 0 else BG_FLOOR_REL)
    inv = 1.0 / v
    return inv / inv.sum()


def _design(F: np.ndarray, intercept: bool) -> np.ndarray:
    return np.column_stack([np.ones(F.shape[0]), F]) if intercept else F


def lr_coefficients(history_forecasts, history_outcomes, intercept: bool = True) -> np.ndarray:
    F = np.atleast_2d(np.asarray(history_forecasts, dtype=float))
    y = np.asarray(history_outcomes, dtype=float).ravel()
    if F.shape[0] < F.shape[1] + 2:
        raise NotReady(f"LR needs at least J + 2 = {F.shape[1] + 2} rows, have {F.shape[0]}")
    coef, *_ = np.linalg.lstsq(_design(F, intercept), y, rcond=None)
    return coef


def lr_combine(history_forecasts, history_outcomes, forecasts, intercept: bool = True) -> float:
    """OLS of outcomes on candidate forecasts (minimum-norm if rank deficient),
    evaluated at the current forecast vector.  May leave the forecast range.
    """
    coef = lr_coefficients(history_forecasts, history_outcomes, intercept)
    x = _vec(forecasts)
    return float(coef[0] + x @ coef[1:]) if intercept else float(x @ coef)


# ---------------------------------------------------------------------------
# simplex-constrained least squares
# ---------------------------------------------------------------------------

def _solve_on_support(F: np.ndarray, y: np.ndarray, S: np.ndarray) -> np.ndarray:
    """argmin ||y - F_S w||^2 s.t. sum w = 1, closest to uniform when not unique."""
    k = S.size
    w0 = np.full(k, 1.0 / k)
    if k == 1:
        return w0
    # orthonormal basis of {v : sum v = 0}
    Q, _ = np.linalg.qr(np.column_stack([np.ones(k), np.eye(k)[:, :-1]]))
    N = Q[:, 1:]
    FS = F[:, S]
    A = FS @ N
    # rank cutoff relative to F itself: identical columns make A pure rounding noise
    U, sv, Vt = np.linalg.svd(A, full_matrices=False)
    keep = sv > 1e-12 * max(np.linalg.norm(FS, 2), 1e-300)
    r = y - FS @ w0
    z = Vt[keep].T @ ((U[:, keep].T @ r) / sv[keep])
    return w0 + N @ z


def clr_weights(history_forecasts, history_outcomes, tol: float = 1e-10, max_iter: Optional[int] = None
                ) -> np.ndarray:
    """min ||y - F w||^2 over the probability simplex (primal active-set method).

    Starts at the uniform point with every candidate free, so identical
    candidates end with equal weights.
    """
    F = np.atleast_2d(np.asarray(history_forecasts, dtype=float))
    y = np.asarray(history_outcomes, dtype=float).ravel()
    T, J = F.shape
    if J == 0:
        raise ValueError("no candidates")
    if J == 1:
        return np.ones(1)
    if T == 0:
        raise NotReady("CLR needs at least one past row")
    scale = max(np.linalg.norm(F, 2) ** 2, 1.0)
    w = np.full(J, 1.0 / J)
    free = np.ones(J, dtype=bool)
    max_iter = max_iter or 20 * J + 50
    for _ in range(max_iter):
        S = np.flatnonzero(free)
        cand = np.zeros(J)
        cand[S] = _solve_on_support(F, y, S)
        if np.all(cand[S] >= -tol):
            w = np.maximum(cand, 0.0)
            w /= w.sum()
            g = F.T @ (F @ w - y)
            gamma = g[S].mean()
            viol = np.where(~free, g - gamma, np.inf)
            j = int(np.argmin(viol))
            if viol[j] >= -tol * scale:
                return w
            free[j] = True
        else:
            d = cand - w
            neg = free & (cand < 0)
            alpha = np.min(w[neg] / (w[neg] - cand[neg]))
            w = w + alpha * d
            hit = free & (w <= tol)
            hit[np.flatnonzero(neg)[np.argmin(w[neg])]] = True
            w[hit] = 0.0
            free &= ~hit
            w = np.maximum(w, 0.0)
            w /= w.sum()
    raise ArithmeticError("CLR active-set iteration did not converge")


def clr_objective(history_forecasts, history_outcomes, w) -> float:
    r = np.asarray(history_outcomes, dtype=float) - np.asarray(history_forecasts, dtype=float) @ w
    return float(r @ r)


def clr_combine(history_forecasts, history_outcomes, forecasts) -> float:
    w = clr_weights(history_forecasts, history_outcomes)
    f = _vec(forecasts)
    return float(np.clip(w @ f, f.min(), f.max()))


# ---------------------------------------------------------------------------
# streaming wrappers
# ---------------------------------------------------------------------------

class BaselineMethod(str, enum.Enum):
    SA = "SA"
    MD = "MD"
    TM = "TM"
    BG = "BG"
    DISCOUNTED_BG = "DiscountedBG"
    LR = "LR"
    CLR = "CLR"


@dataclass
class BaselineConfig:
    method: BaselineMethod
    rho: Optional[float] = None
    lr_intercept: bool = True

    def __post_init__(self):
        self.method = BaselineMethod(self.method)
        if (self.method is BaselineMethod.DISCOUNTED_BG) != (self.rho is not None):
            raise ValueError("rho is required for DiscountedBG and only for it")
        if self.rho is not None and not 0 < self.rho < 1:
            raise ValueError("rho must lie in (0, 1)")


class BaselineCombiner:
    """Keeps the panel history for one series and emits causal combined forecasts.

    History-based methods that are not yet ready emit the simple average.
    """

    def __init__(self, config: BaselineConfig, J: int):
        self.config = config
        self.J = J
        self._F: list = []
        self._y: list = []

    def forecast(self, forecasts) -> float:
        f = _vec(forecasts)
        m = self.config.method
        if m is BaselineMethod.SA:
            return simple_average(f)
        if m is BaselineMethod.MD:
            return median_combine(f)
        if m is BaselineMethod.TM:
            return trimmed_mean(f)
        F = np.asarray(self._F).reshape(len(self._F), self.J)
        y = np.asarray(self._y)
        try:
            if m in (BaselineMethod.BG, BaselineMethod.DISCOUNTED_BG):
                w = bg_weights((y[:, None] - F) ** 2, self.config.rho)
                return float(np.clip(w @ f, f.min(), f.max()))
            if m is BaselineMethod.LR:
                return lr_combine(F, y, f, self.config.lr_intercept)
            return clr_combine(F, y, f)
        except NotReady:
            return simple_average(f)

    def absorb(self, forecasts, outcome: float) -> "BaselineCombiner":
        self._F.append(_vec(forecasts).copy())
        self._y.append(float(outcome))
        return self
