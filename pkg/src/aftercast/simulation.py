"""Monte-Carlo protocol: linear-regression and AR data-generating processes,
nested candidate forecasters, ASEE scoring and ratio tables.

A run draws ``n_draws`` truth parameter sets (beta, or p0 and AR
coefficients); under each draw it simulates ``n_replicates`` series, scores
every method by ASEE over the evaluation window against the true conditional
means, averages per draw, and reports the mean and standard error over draws
of each method's ratio to the L1-AFTER (A1) mean ASEE.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import distributions as dist
from .combiners import AfterOptions, Combiner, check_names, make_combiner

BENCHMARK = "A1"


# ---------------------------------------------------------------------------
# specs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseSpec:
    """Error law.  Normal, DE and t are variance-targeted; lognormal uses ``sigma``
    as the scale of the underlying normal and is used raw unless ``center``.
    """

    family: str = "normal"
    variance: Optional[float] = 1.0
    dof: Optional[float] = None
    sigma: Optional[float] = None
    center: bool = False

    def __post_init__(self):
        fam = self.family.lower()
        if fam not in ("normal", "de", "t", "lognormal"):
            raise ValueError(f"unknown noise family {self.family!r}")
        object.__setattr__(self, "family", fam)
        if fam == "lognormal":
            if self.sigma is None or self.sigma <= 0:
                raise ValueError("lognormal noise needs sigma > 0")
        else:
            if self.variance is None or self.variance < 0:
                raise ValueError("noise variance must be nonnegative")
        if fam == "t" and (self.dof is None or self.dof <= 2):
            raise ValueError("variance-targeted t noise needs dof > 2")

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.family == "lognormal":
            e = dist.sample_lognormal(self.sigma, rng, size)
            return e - math.exp(self.sigma ** 2 / 2) if self.center else e
        if self.variance == 0:
            return np.zeros(size)
        if self.family == "normal":
            spec = dist.normal(math.sqrt(self.variance))
        elif self.family == "de":
            spec = dist.double_exponential(dist.de_scale_for_variance(self.variance))
        else:
            spec = dist.scaled_t(self.dof, dist.t_scale_for_variance(self.dof, self.variance))
        return dist.sample(spec, rng, size)

    def label(self) -> str:
        if self.family == "lognormal":
            return f"lognormal sigma={self.sigma:g}"
        name = f"t{self.dof:g}" if self.family == "t" else self.family
        return f"{name} var={self.variance:g}"


@dataclass(frozen=True)
class ScenarioSpec:
    kind: str = "linreg"
    p0: Union[int, str] = 3
    p: Optional[int] = None
    n: int = 125
    fit_start: int = 90
    combine_after: int = 5
    eval_window: int = 20
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    cov_kind: str = "equicorrelated"
    cov_rho: Optional[float] = None
    beta_low: float = 1.0
    beta_high: float = 3.0
    pacf_bound: float = 0.8
    burn_in: int = 200
    n_draws: int = 200
    n_replicates: int = 200
    seed: int = 0
    methods: Tuple[str, ...] = ("A2", "A1", "At", "Ag")
    name: str = ""

    def __post_init__(self):
        kind = self.kind.lower()
        if kind not in ("linreg", "ar"):
            raise ValueError(f"kind must be linreg or ar, got {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if isinstance(self.noise, dict):
            object.__setattr__(self, "noise", NoiseSpec(**self.noise))
        object.__setattr__(self, "methods", check_names(tuple(self.methods)))
        random_p0 = isinstance(self.p0, str)
        if random_p0 and self.p0 != "random":
            raise ValueError("p0 must be an integer or 'random'")
        if self.p is None:
            if random_p0:
                raise ValueError("p is required when p0 is random")
            object.__setattr__(self, "p", 2 * self.p0 - 1 if kind == "linreg" else self.p0)
        if not random_p0 and not 1 <= self.p0 <= self.p:
            raise ValueError("need 1 <= p0 <= p")
        if self.fit_start + self.combine_after + self.eval_window > self.n:
            raise ValueError("fit_start + combine_after + eval_window must not exceed n")
        if self.n - self.fit_start - self.eval_window < self.combine_after:
            raise ValueError("evaluation window overlaps the combination warmup")
        if self.cov_kind not in ("equicorrelated", "ar1", "identity"):
            raise ValueError(f"unknown cov_kind {self.cov_kind!r}")
        min_rows = self.p + 2 if kind == "linreg" else 2 * self.p + 2
        if self.fit_start < min_rows:
            raise ValueError(f"fit_start={self.fit_start} too small to fit the largest candidate")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")

    @property
    def covariance(self) -> np.ndarray:
        p = self.p
        if self.cov_kind == "identity":
            return np.eye(p)
        if self.cov_kind == "equicorrelated":
            r = 0.8 if self.cov_rho is None else self.cov_rho
            return np.full((p, p), r) + (1 - r) * np.eye(p)
        r = 0.5 if self.cov_rho is None else self.cov_rho
        idx = np.arange(p)
        return r ** np.abs(idx[:, None] - idx[None, :])

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        d = dict(d)
        if "noise" in d and isinstance(d["noise"], dict):
            d["noise"] = NoiseSpec(**d["noise"])
        if "methods" in d:
            d["methods"] = tuple(d["methods"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = list(self.methods)
        return d


# ---------------------------------------------------------------------------
# data
# ---------------------------------------------------------------------------

@dataclass
class Dataset:
    y: np.ndarray
    m: np.ndarray
    X: Optional[np.ndarray] = None


@dataclass
class ForecastPanel:
    """Candidate forecasts for the rows ``start .. start + T - 1`` of a series."""

    y: np.ndarray
    forecasts: np.ndarray
    m: Optional[np.ndarray] = None
    start: int = 0
    names: Tuple[str, ...] = ()

    @property
    def T(self) -> int:
        return self.forecasts.shape[0]

    @property
    def J(self) -> int:
        return self.forecasts.shape[1]


def gen_linreg(spec: ScenarioSpec, beta, rng: np.random.Generator) -> Dataset:
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (spec.p0,):
        raise ValueError(f"beta must have length p0={spec.p0}")
    L = np.linalg.cholesky(spec.covariance)
    X = rng.standard_normal((spec.n, spec.p)) @ L.T
    m = X[:, : spec.p0] @ beta
    return Dataset(y=m + spec.noise.draw(rng, spec.n), m=m, X=X)


def companion_radius(coeffs) -> float:
    a = np.asarray(coeffs, dtype=float)
    k = a.size
    if k == 0:
        return 0.0
    C = np.zeros((k, k))
    C[0] = a
    C[1:, :-1] = np.eye(k - 1)
    return float(np.max(np.abs(np.linalg.eigvals(C))))


def pacf_to_ar(pacf) -> np.ndarray:
    """Durbin-Levinson map from partial autocorrelations in (-1, 1) to AR coefficients."""
    phi = np.zeros(0)
    for r in np.asarray(pacf, dtype=float):
        phi = np.append(phi - r * phi[::-1], r)
    return phi


def draw_ar_coeffs(p0: int, rng: np.random.Generator, bound: float = 0.8) -> np.ndarray:
    return pacf_to_ar(rng.uniform(-bound, bound, p0))


def gen_ar(spec: ScenarioSpec, coeffs, rng: np.random.Generator, initial=None,
           burn_in: Optional[int] = None) -> Dataset:
    """Simulate y_t = sum_k a_k y_{t-k} + e_t; returns the n values after burn-in."""
    a = np.asarray(coeffs, dtype=float)
    if companion_radius(a) >= 1.0:
        raise ValueError("AR coefficients are not stationary")
    k = a.size
    burn = spec.burn_in if burn_in is None else burn_in
    total = spec.n + burn
    eps = spec.noise.draw(rng, total)
    y = np.zeros(total + k)
    if initial is not None:
        init = np.asarray(initial, dtype=float)
        # chronological order, most recent last
        y[k - init.size:k] = init
    m = np.zeros(total + k)
    for t in range(k, total + k):
        m[t] = a @ y[t - k:t][::-1]
        y[t] = m[t] + eps[t - k]
    return Dataset(y=y[k + burn:].copy(), m=m[k + burn:].copy())


def _ols_predict(Z: np.ndarray, y: np.ndarray, z_new: np.ndarray) -> float:
    coef, *_ = np.linalg.lstsq(Z, y, rcond=None)
    return float(z_new @ coef)


def fit_ar(y, k: int) -> np.ndarray:
    """OLS AR(k) with intercept; returns (intercept, a_1, ..., a_k)."""
    y = np.asarray(y, dtype=float)
    Z = np.column_stack([np.ones(y.size - k)] + [y[k - j:y.size - j] for j in range(1, k + 1)])
    coef, *_ = np.linalg.lstsq(Z, y[k:], rcond=None)
    return coef


def make_candidates(data: Dataset, spec: ScenarioSpec) -> ForecastPanel:
    """One-step forecasts of y_i for i = fit_start .. n-1 from p nested models,
    each refit by OLS (with intercept) on observations before i only.
    """
    n, p, start = data.y.size, spec.p, spec.fit_start
    if n != spec.n:
        raise ValueError("dataset length does not match the scenario")
    F = np.empty((n - start, p))
    y = data.y
    if spec.kind == "linreg":
        if start < p + 2:
            raise ValueError("not enough rows to fit the largest candidate")
        Z = np.column_stack([np.ones(n), data.X])
        for r, i in enumerate(range(start, n)):
            for k in range(1, p + 1):
                F[r, k - 1] = _ols_predict(Z[:i, : k + 1], y[:i], Z[i, : k + 1])
    else:
        if start < 2 * p + 2:
            raise ValueError("not enough rows to fit the largest candidate")
        lags = np.column_stack([np.ones(n)] + [np.r_[np.full(j, np.nan), y[:-j]] for j in range(1, p + 1)])
        for r, i in enumerate(range(start, n)):
            for k in range(1, p + 1):
                F[r, k - 1] = _ols_predict(lags[k:i, : k + 1], y[k:i], lags[i, : k + 1])
    names = tuple(f"{'M' if spec.kind == 'linreg' else 'AR'}{k}" for k in range(1, p + 1))
    return ForecastPanel(y=y[start:].copy(), forecasts=F, m=data.m[start:].copy(), start=start, names=names)


# ---------------------------------------------------------------------------
# scoring
# ---------------------------------------------------------------------------

@dataclass
class ReplicateResult:
    asee_by_method: Dict[str, float]
    candidate_asee: np.ndarray
    true_means: np.ndarray


def causal_forecasts(combiner: Combiner, panel: ForecastPanel, first: int) -> np.ndarray:
    """Combined forecasts for rows >= first; every row is absorbed after it is forecast."""
    out = np.full(panel.T, np.nan)
    for r in range(panel.T):
        if r >= first:
            out[r] = combiner.forecast(panel.forecasts[r])
        combiner.absorb(panel.forecasts[r], panel.y[r])
    return out


def run_replicate(panel: ForecastPanel, methods, combine_after: int, eval_window: int,
                  after: Optional[AfterOptions] = None) -> ReplicateResult:
    """ASEE of every method (a name or a zero-argument combiner factory) against m.

    AFTER methods use ``combine_after`` as their scale warmup, so their weights
    start at the prior on the first combined period.
    """
    if panel.m is None:
        raise ValueError("simulation scoring needs the true conditional means")
    after = after or AfterOptions(warmup=combine_after)
    ev = slice(panel.T - eval_window, panel.T)
    m = panel.m[ev]
    res = {}
    items = methods.items() if isinstance(methods, dict) else ((n, n) for n in methods)
    for name, how in items:
        combiner = make_combiner(how, panel.J, after) if isinstance(how, str) else how()
        pred = causal_forecasts(combiner, panel, combine_after)
        res[name] = float(np.mean((m - pred[ev]) ** 2))
    cand = np.mean((m[:, None] - panel.forecasts[ev]) ** 2, axis=0)
    return ReplicateResult(res, cand, m.copy())


# ---------------------------------------------------------------------------
# experiment driver
# ---------------------------------------------------------------------------

def draw_rng(spec: ScenarioSpec, d: int) -> np.random.Generator:
    return np.random.default_rng([spec.seed, d, 0])


def replicate_rng(spec: ScenarioSpec, d: int, r: int) -> np.random.Generator:
    return np.random.default_rng([spec.seed, d, r + 1])


def draw_truth(spec: ScenarioSpec, d: int) -> dict:
    rng = draw_rng(spec, d)
    if spec.kind == "linreg":
        return {"beta": rng.uniform(spec.beta_low, spec.beta_high, spec.p0)}
    p0 = int(rng.integers(1, spec.p + 1)) if spec.p0 == "random" else int(spec.p0)
    return {"p0": p0, "coeffs": draw_ar_coeffs(p0, rng, spec.pacf_bound)}


def simulate_panel(spec: ScenarioSpec, truth: dict, rng: np.random.Generator) -> ForecastPanel:
    if spec.kind == "linreg":
        data = gen_linreg(spec, truth["beta"], rng)
    else:
        data = gen_ar(spec, truth["coeffs"], rng)
    return make_candidates(data, spec)


def run_draw(spec: ScenarioSpec, d: int) -> Dict[str, float]:
    """Mean ASEE per method over the replicates of draw ``d``."""
    truth = draw_truth(spec, d)
    sums = {name: 0.0 for name in spec.methods}
    for r in range(spec.n_replicates):
        panel = simulate_panel(spec, truth, replicate_rng(spec, d, r))
        res = run_replicate(panel, spec.methods, spec.combine_after, spec.eval_window)
        for name, v in res.asee_by_method.items():
            sums[name] += v
    return {name: s / spec.n_replicates for name, s in sums.items()}


def _run_draw_star(args):
    return run_draw(*args)


@dataclass
class RatioTable:
    methods: Tuple[str, ...]
    mean: np.ndarray
    se: np.ndarray
    mean_asee: np.ndarray  # (n_draws, n_methods)
    benchmark: str
    spec: ScenarioSpec

    def ratio(self, method: str) -> Tuple[float, float]:
        i = self.methods.index(method)
        return float(self.mean[i]), float(self.se[i])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "mean_ratio", "se", "benchmark", "scenario", "kind", "noise", "p", "p0",
                    "n_draws", "n_replicates", "seed"])
        s = self.spec
        for name, mu, se in zip(self.methods, self.mean, self.se):
            w.writerow([name, repr(float(mu)), repr(float(se)), self.benchmark, s.name, s.kind,
                        s.noise.label(), s.p, s.p0, s.n_draws, s.n_replicates, s.seed])
        return buf.getvalue()

    def to_text(self) -> str:
        s = self.spec
        head = f"{s.name or s.kind}: {s.noise.label()}, p={s.p}, p0={s.p0}, " \
               f"{s.n_draws} draws x {s.n_replicates} replicates, ratios vs {self.benchmark}"
        lines = [head, "-" * len(head)]
        for name, mu, se in zip(self.methods, self.mean, self.se):
            lines.append(f"{name:<8}{mu:>10.3f}")
            lines.append(f"{'':<8}{'(' + format(se, '.3f') + ')':>10}")
        return "\n".join(lines) + "\n"


def run_experiment(spec: ScenarioSpec, methods: Optional[Sequence[str]] = None, jobs: int = 1,
                   benchmark: str = BENCHMARK) -> RatioTable:
    """Ratio table over ``spec.n_draws`` truth draws.  Output does not depend on ``jobs``."""
    if methods is not None:
        spec = ScenarioSpec.from_dict({**spec.to_dict(), "methods": list(methods)})
    if benchmark not in spec.methods:
        spec = ScenarioSpec.from_dict({**spec.to_dict(), "methods": [*spec.methods, benchmark]})
    args = [(spec, d) for d in range(spec.n_draws)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            per_draw = list(ex.map(_run_draw_star, args))
    else:
        per_draw = [run_draw(*a) for a in args]
    names = spec.methods
    A = np.array([[row[n] for n in names] for row in per_draw])
    ratios = A / A[:, [names.index(benchmark)]]
    mean = ratios.mean(axis=0)
    se = ratios.std(axis=0, ddof=1) / math.sqrt(len(per_draw)) if len(per_draw) > 1 else np.zeros(len(names))
    return RatioTable(names, mean, se, A, benchmark, spec)
