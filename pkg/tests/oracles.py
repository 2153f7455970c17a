"""Independent reference implementations shared by unit and acceptance tests."""
import functools
import math

import numpy as np
from scipy import integrate, stats

from aftercast import distributions as D


def feed(state, F, y):
    for f, v in zip(F, y):
        state.absorb(f, v)
    return state


@functools.lru_cache(maxsize=None)
def t_quartile(nu):
    # stats.t.ppf is only good to ~1e-11 near dof 1; polish with Newton steps on scipy's cdf
    q = stats.t.ppf(0.75, nu)
    for _ in range(3):
        q -= (stats.t.cdf(q, nu) - 0.75) / stats.t.pdf(q, nu)
    return q


def naive_weights(method, F, y, omega=(1.0, 3.0), c1=1.0, c2=2.0):
    """Plain products of scipy densities with numpy scale estimates."""
    T, J = F.shape
    K = len(omega)
    E = y[:, None] - F
    l2 = np.full(J, 1.0 / J)
    l1 = np.full(J, 1.0 / J)
    lt = np.full((J, K), 1.0 / (J * K))
    for i in range(1, T):  # step 0 is warmup: no density factor
        past = E[:i]
        e = E[i]
        sig = np.sqrt((past ** 2).sum(0) / (i - 1)) if i > 1 else np.abs(past[0])
        d = np.abs(past).mean(0)
        med = np.median(np.abs(past), axis=0)
        l2 = l2 * stats.norm.pdf(e, scale=sig)
        l1 = l1 * stats.laplace.pdf(e, scale=d)
        for k, nu in enumerate(omega):
            s = med / t_quartile(nu)
            lt[:, k] = lt[:, k] * stats.t.pdf(e, nu, scale=s)
    if method == "L2":
        w = l2
    elif method == "L1":
        w = l1
    elif method == "T":
        w = lt.sum(1)
    else:
        w = l2 + c1 * l1 + c2 * lt.sum(1)
    return w / w.sum()


def single_nu_weights(nu, F, y):
    """t-AFTER with one dof in the simplified form w_j prod (1/s) f_t(e/s | nu), summed in log space."""
    E = y[:, None] - F
    logw = np.zeros(F.shape[1])
    for i in range(1, len(y)):
        sc = np.median(np.abs(E[:i]), axis=0) / t_quartile(nu)
        logw += stats.t.logpdf(E[i] / sc, nu) - np.log(sc)
    w = np.exp(logw - logw.max())
    return w / w.sum()


def kl_scipy(p, q, shift):
    # QUADPACK on the raw line, split at the kinks
    f = lambda x: math.exp(D.log_pdf(p, x)) * (D.log_pdf(p, x) - D.log_pdf(q, x - shift))
    pts = sorted({0.0, shift})
    pieces = [(-np.inf, pts[0])] + list(zip(pts[:-1], pts[1:])) + [(pts[-1], np.inf)]
    return sum(integrate.quad(f, a, b, epsabs=1e-13, epsrel=1e-12, limit=500)[0] for a, b in pieces if a < b)


def normal_equations(F, y):
    X = np.column_stack([np.ones(len(y)), F])
    return np.linalg.solve(X.T @ X, X.T @ y)


def clr_grid_min(F, y, res=1000):
    """Minimum squared error over a simplex grid (J=3)."""
    A, b, c = F.T @ F, F.T @ y, y @ y
    i, j = np.meshgrid(np.arange(res + 1), np.arange(res + 1), indexing="ij")
    keep = i + j <= res
    W = np.column_stack([i[keep], j[keep], res - i[keep] - j[keep]]) / res
    obj = np.einsum("ni,ij,nj->n", W, A, W) - 2 * W @ b + c
    return obj.min()


def after_l2_msfe(F, y, warmup=6, n_scored=9):
    # scales from all past errors, densities from the first ready period on
    T, J = F.shape
    E = y[:, None] - F
    logw = np.zeros(J)
    sq = []
    for i in range(T):
        w = np.exp(logw - logw.max())
        w /= w.sum()
        if i >= T - n_scored:
            f = F[i]
            sq.append((y[i] - np.clip(w @ f, f.min(), f.max())) ** 2)
        if i >= warmup:
            sig = np.sqrt((E[:i] ** 2).sum(0) / (i - 1))
            logw += stats.norm.logpdf(E[i], scale=sig)
    return np.mean(sq)


def bg_msfe(F, y, n_scored=9, rho=None):
    T, J = F.shape
    sq = []
    for i in range(T - n_scored, T):
        past = (y[:i, None] - F[:i]) ** 2
        d = np.ones(i) if rho is None else rho ** np.arange(i - 1, -1, -1)
        v = d @ past / d.sum()
        w = (1 / v) / (1 / v).sum()
        sq.append((y[i] - w @ F[i]) ** 2)
    return np.mean(sq)


def hand_panel_msfes(F, y):
    last = slice(len(y) - 9, len(y))
    return {
        "SA": np.mean((y[last] - F[last].mean(1)) ** 2),
        "MD": np.mean((y[last] - np.median(F[last], 1)) ** 2),
        "TM": np.mean((y[last] - np.sort(F[last], 1)[:, 1]) ** 2),
        "BG": bg_msfe(F, y),
        "BG_0.9": bg_msfe(F, y, rho=0.9),
        "A2": after_l2_msfe(F, y),
    }


def seasonal_ar(n, rng, heavy):
    e = rng.standard_t(3, n + 60) if heavy else rng.normal(size=n + 60)
    months = np.arange(n + 60) % 12 + 1
    y = np.zeros(n + 60)
    for i in range(2, n + 60):
        y[i] = 0.5 * y[i - 1] - 0.2 * y[i - 2] + 2 * np.sin(2 * np.pi * months[i] / 12) + e[i]
    return y[60:], months[60:]
