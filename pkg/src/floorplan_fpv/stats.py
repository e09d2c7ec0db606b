"""OLS with hedonic diagnostics and Bonferroni-corrected paired model comparison."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import linalg, stats

NEG_LOG10_P_CAP = 300.0
P_FLOOR = 1e-300


class RegressionError(ValueError):
    code = "RegressionError"


class RankDeficient(RegressionError):
    code = "RankDeficient"


class TooFewObservations(RegressionError):
    code = "TooFewObservations"


def add_constant(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    return np.column_stack([x, np.ones(len(x))])


def _constant_columns(x: np.ndarray) -> np.ndarray:
    return np.all(x == x[:1], axis=0) & (x[0] != 0)


@dataclass
class OlsFit:
    names: list[str]
    coefficients: np.ndarray
    standard_errors: np.ndarray
    t_stats: np.ndarray
    p_values: np.ndarray
    neg_log10_p: np.ndarray
    vif: np.ndarray  # nan for the constant column, inf for perfect collinearity
    r2: float
    adj_r2: float
    rmse: float  # sqrt(RSS / (n - p - 1)), the regression "root MSE"
    rmse_insample: float  # sqrt(RSS / n)
    n: int
    p: int  # predictors excluding the constant
    residuals: np.ndarray = field(repr=False)

    def coef(self, name: str) -> float:
        return float(self.coefficients[self.names.index(name)])

    def rows(self) -> list[dict]:
        return [
            {
                "variable": name,
                "coefficient": float(self.coefficients[k]),
                "std_error": float(self.standard_errors[k]),
                "t": float(self.t_stats[k]),
                "p": float(self.p_values[k]),
                "neg_log10_p": float(self.neg_log10_p[k]),
                "vif": float(self.vif[k]),
            }
            for k, name in enumerate(self.names)
        ]


def _neg_log10_two_sided(t: np.ndarray, df: int) -> np.ndarray:
    # log-space survival avoids underflow for very large |t|
    with np.errstate(divide="ignore"):
        logp = math.log(2.0) + stats.t.logsf(np.abs(t), df)
    out = -logp / math.log(10.0)
    return np.clip(out, 0.0, NEG_LOG10_P_CAP)


def fit_ols(
    x: np.ndarray,
    y: np.ndarray,
    names: Sequence[str] | None = None,
    compute_vif: bool = True,
) -> OlsFit:
    """Least squares via QR. ``x`` must already contain the constant column."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 1 or len(x) != len(y):
        raise RegressionError(f"shape mismatch: X{x.shape}, y{y.shape}")
    n, k = x.shape
    const = _constant_columns(x)
    p = k - int(const.sum())
    if n <= k:
        raise TooFewObservations(f"need n > {k} observations, got {n}")
    names = list(names) if names is not None else [f"x{j}" for j in range(k)]

    q, r = np.linalg.qr(x, mode="reduced")
    diag = np.abs(np.diag(r))
    if diag.min() <= 1e-10 * diag.max():
        raise RankDeficient("design matrix is rank deficient")
    beta = linalg.solve_triangular(r, q.T @ y)
    resid = y - x @ beta
    rss = float(resid @ resid)
    df = n - k
    yscale = max(float(np.max(np.abs(y))), 1.0)
    if rss <= n * (1e-12 * yscale) ** 2:
        rss = 0.0
    sigma2 = rss / df

    rinv = linalg.solve_triangular(r, np.eye(k))
    se = np.sqrt(sigma2 * np.sum(rinv**2, axis=1))
    colnorm = np.linalg.norm(x, axis=0)
    negligible = np.abs(beta) * colnorm <= 1e-10 * max(float(np.linalg.norm(y)), 1.0)
    t = np.empty(k)
    for j in range(k):
        if negligible[j]:
            t[j] = 0.0
        elif se[j] > 0:
            t[j] = beta[j] / se[j]
        else:
            # exact fit: coefficient is known without error
            t[j] = math.copysign(math.inf, beta[j])
    pvals = np.where(np.isinf(t), 0.0, 2.0 * stats.t.sf(np.abs(t), df))
    nl10 = np.where(np.isinf(t), NEG_LOG10_P_CAP, _neg_log10_two_sided(t, df))

    if const.any():
        tss = float(np.sum((y - y.mean()) ** 2))
    else:
        tss = float(y @ y)
    r2 = 0.0 if tss == 0 else 1.0 - rss / tss
    adj = 1.0 - (1.0 - r2) * (n - 1) / (n - p - 1) if n - p - 1 > 0 else float("nan")

    v = vif(x) if compute_vif and p >= 2 else np.where(const, np.nan, 1.0)
    return OlsFit(
        names=names,
        coefficients=beta,
        standard_errors=se,
        t_stats=t,
        p_values=pvals,
        neg_log10_p=nl10,
        vif=v,
        r2=r2,
        adj_r2=adj,
        rmse=math.sqrt(sigma2),
        rmse_insample=math.sqrt(rss / n),
        n=n,
        p=p,
        residuals=resid,
    )


def vif(x: np.ndarray) -> np.ndarray:
    """1 / (1 - R^2_j) from regressing each non-constant column on the rest.

    Perfectly collinear columns get ``inf``; the constant column gets ``nan``.
    """
    x = np.asarray(x, dtype=np.float64)
    const = _constant_columns(x)
    if int((~const).sum()) < 2:
        raise RegressionError("VIF needs at least two predictor columns")
    out = np.full(x.shape[1], np.nan)
    for j in np.flatnonzero(~const):
        target = x[:, j]
        others = np.delete(x, j, axis=1)
        coef, *_ = np.linalg.lstsq(others, target, rcond=None)
        resid = target - others @ coef
        if const.any():
            tss = float(np.sum((target - target.mean()) ** 2))
        else:
            tss = float(target @ target)
        if tss == 0:
            out[j] = np.inf
            continue
        one_minus_r2 = float(resid @ resid) / tss
        out[j] = np.inf if one_minus_r2 <= 1e-12 else 1.0 / one_minus_r2
    return out


def backward_eliminate(
    x: np.ndarray,
    y: np.ndarray,
    names: Sequence[str],
    threshold: float = 0.2,
    keep: Sequence[str] = (),
) -> list[str]:
    """Drop the largest-p predictor until every remaining p is below ``threshold``.

    Columns in ``keep`` (and the constant) are never dropped.
    """
    names = list(names)
    active = list(range(len(names)))
    const = _constant_columns(np.asarray(x))
    while True:
        fit = fit_ols(x[:, active], y, [names[j] for j in active], compute_vif=False)
        candidates = [
            (fit.p_values[k], j)
            for k, j in enumerate(active)
            if not const[j] and names[j] not in keep
        ]
        if not candidates:
            break
        worst_p, worst = max(candidates)
        if worst_p < threshold:
            break
        active.remove(worst)
    return [names[j] for j in active]


# ---------------------------------------------------------------------------
# paired comparison
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PairTest:
    metric: str
    model_a: str
    model_b: str
    mean_diff: float  # mean over folds of (a - b)
    t: float
    p: float
    significant: bool
    threshold: float


@dataclass
class ComparisonReport:
    metrics: dict[str, dict[str, np.ndarray]]  # metric -> model -> per-fold values
    pairs: list[PairTest]
    alpha: float
    family: str

    def find(self, metric: str, a: str, b: str) -> PairTest:
        for pt in self.pairs:
            if pt.metric == metric and {pt.model_a, pt.model_b} == {a, b}:
                return pt
        raise KeyError((metric, a, b))

    def significant(self, metric: str, a: str, b: str) -> bool:
        return self.find(metric, a, b).significant


def paired_t(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    d = a - b
    if len(d) < 2:
        raise RegressionError("paired test needs at least two folds")
    if np.all(d == d[0]):
        if d[0] == 0:
            return 0.0, 1.0
        return math.copysign(math.inf, d[0]), 0.0
    res = stats.ttest_rel(a, b)
    return float(res.statistic), float(res.pvalue)


def bonferroni_compare(
    metrics: Mapping[str, Mapping[str, Sequence[float]]] | Mapping[str, Sequence[float]],
    alpha: float = 0.05,
    family: str = "per_metric",
) -> ComparisonReport:
    """Two-sided paired t-tests for every model pair at ``alpha / n_tests``.

    ``metrics`` is either ``{model: per-fold values}`` (one metric) or
    ``{metric: {model: per-fold values}}``. With ``family="per_metric"`` each
    metric's pair family is corrected on its own; ``"joint"`` corrects over
    all pairs of all metrics.
    """
    first = next(iter(metrics.values()))
    if not isinstance(first, Mapping):
        metrics = {"metric": metrics}
    table = {m: {k: np.asarray(v, dtype=np.float64) for k, v in per.items()} for m, per in metrics.items()}
    for m, per in table.items():
        if len(per) < 2:
            raise RegressionError("need at least two models to compare")
        lengths = {len(v) for v in per.values()}
        if len(lengths) != 1:
            raise RegressionError(f"metric {m!r}: models have unequal fold counts")
        if lengths.pop() < 2:
            raise RegressionError("need at least two folds")
    if family not in ("per_metric", "joint"):
        raise ValueError(f"unknown family {family!r}")

    n_pairs = {m: len(per) * (len(per) - 1) // 2 for m, per in table.items()}
    total = sum(n_pairs.values())
    pairs = []
    for m, per in table.items():
        thr = alpha / (n_pairs[m] if family == "per_metric" else total)
        for a, b in itertools.combinations(per, 2):
            t, p = paired_t(per[a], per[b])
            pairs.append(PairTest(m, a, b, float(np.mean(per[a] - per[b])), t, p, p < thr, thr))
    return ComparisonReport(table, pairs, alpha, family)
