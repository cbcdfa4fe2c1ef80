"""Least squares with classical inference, plus linearity and crosstalk.

The t distribution is handled through the regularized incomplete beta
function: for ``df`` degrees of freedom the two-sided tail probability of
``|T| >= t`` is ``I_x(df/2, 1/2)`` with ``x = df / (df + t**2)``. Quantiles
are found by a bracketed Newton iteration on that CDF.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import special
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import AnalysisError, DomainError, RankDeficiencyError
from .preprocessing import FixationSegment

__all__ = [
    "CONDITION_LIMIT",
    "OlsFit",
    "LinearityResult",
    "CrosstalkResult",
    "solve_least_squares",
    "ols_fit",
    "t_cdf",
    "t_two_sided_p",
    "t_quantile",
    "confidence_interval",
    "linearity",
    "linearity_from_slopes",
    "crosstalk",
    "OrdinaryLeastSquares",
    "CrosstalkSelector",
]

# normal matrices (after column equilibration) more ill-conditioned than this are rank deficient
CONDITION_LIMIT = 1e10
# responses fitted to within this many degrees are treated as exact fits
EXACT_FIT_ATOL = 1e-9
# slack on the "1.0 inside the CI" test so round-off on perfect data is not flagged
CI_ATOL = 1e-9

DIMENSIONS = {"H": 0, "V": 1}


def solve_least_squares(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Solve the normal equations for ``X b = y`` (``y`` may hold several columns).

    Returns the coefficients and the inverse of ``X.T @ X``.

    Raises
    ------
    RankDeficiencyError
        If ``X.T @ X`` is singular, not positive definite, or its condition
        number after scaling to unit diagonal exceeds ``CONDITION_LIMIT``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    xtx = X.T @ X
    diag = np.diag(xtx)
    if not np.all(diag > 0) or not np.isfinite(xtx).all():
        raise RankDeficiencyError("design matrix has an all-zero or non-finite column")
    d = 1.0 / np.sqrt(diag)
    scaled = xtx * np.outer(d, d)
    cond = np.linalg.cond(scaled)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise RankDeficiencyError(f"normal matrix is rank deficient (condition number {cond:.3g})")
    try:
        chol = np.linalg.cholesky(scaled)
    except np.linalg.LinAlgError:
        raise RankDeficiencyError("normal matrix is not positive definite") from None
    inv_chol = np.linalg.inv(chol)
    inv_scaled = inv_chol.T @ inv_chol
    xtx_inv = inv_scaled * np.outer(d, d)
    coef = xtx_inv @ (X.T @ y)
    return coef, xtx_inv


def t_two_sided_p(t: np.ndarray | float, df: float) -> np.ndarray | float:
    """P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    t = np.asarray(t, dtype=float)
    x = df / (df + t * t)
    p = special.betainc(df / 2.0, 0.5, x)
    return float(p) if p.ndim == 0 else p


def t_cdf(t: float, df: float) -> float:
    tail = 0.5 * t_two_sided_p(t, df)
    return 1.0 - tail if t >= 0 else tail


def _t_pdf(t: float, df: float) -> float:
    log_norm = special.gammaln((df + 1) / 2) - special.gammaln(df / 2) - 0.5 * math.log(df * math.pi)
    return math.exp(log_norm - (df + 1) / 2 * math.log1p(t * t / df))


def t_quantile(p: float, df: float) -> float:
    """Inverse CDF of Student's t distribution.

    Raises
    ------
    DomainError
        Unless ``0 < p < 1`` and ``df >= 1``.
    """
    if not (0.0 < p < 1.0) or not (df >= 1) or not math.isfinite(df):
        raise DomainError(f"t_quantile needs 0 < p < 1 and df >= 1, got p={p}, df={df}")
    if p == 0.5:
        return 0.0
    if p < 0.5:
        return -t_quantile(1.0 - p, df)
    lo, hi = 0.0, 1.0
    while t_cdf(hi, df) < p:
        lo, hi = hi, hi * 2.0
    t = 0.5 * (lo + hi)
    for _ in range(200):
        f = t_cdf(t, df) - p
        if f > 0:
            hi = t
        else:
            lo = t
        pdf = _t_pdf(t, df)
        step = f / pdf if pdf > 0 else math.inf
        t_new = t - step
        if not (lo < t_new < hi):
            t_new = 0.5 * (lo + hi)
        if abs(t_new - t) <= 1e-14 * max(1.0, abs(t)):
            return t_new
        t = t_new
    return t


def confidence_interval(mean: float, sd: float, n: int, level: float = 0.95) -> tuple[float, float]:
    """Two-sided t interval for a mean from its sample SD and size."""
    if n < 2:
        raise DomainError("a confidence interval needs n >= 2")
    half = t_quantile(0.5 + level / 2.0, n - 1) * sd / math.sqrt(n)
    return (mean - half, mean + half)


@dataclass(frozen=True, eq=False)
class OlsFit:
    coefficients: np.ndarray
    standard_errors: np.ndarray
    p_values: np.ndarray
    residual_variance: float
    n: int
    k: int
    residuals: np.ndarray = field(repr=False, default=None)

    @property
    def t_values(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.coefficients / self.standard_errors

    def to_dict(self) -> dict:
        return {
            "coefficients": [float(c) for c in self.coefficients],
            "standard_errors": [float(s) for s in self.standard_errors],
            "p_values": [float(p) for p in self.p_values],
            "residual_variance": float(self.residual_variance),
            "n": self.n,
            "k": self.k,
        }


def ols_fit(X: np.ndarray, y: np.ndarray) -> OlsFit:
    """Ordinary least squares with classical standard errors.

    ``X`` must already contain the intercept column if one is wanted.
    P-values are two-sided t-tests with ``n - k`` degrees of freedom. A
    coefficient with zero standard error gets p = 0 when nonzero and p = 1
    when exactly zero.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).reshape(-1)
    n, k = X.shape
    if len(y) != n:
        raise ValueError("X and y have different numbers of rows")
    if n <= k:
        raise RankDeficiencyError(f"need more observations than predictors (n={n}, k={k})")
    coef, xtx_inv = solve_least_squares(X, y)
    resid = y - X @ coef
    sigma2 = float(resid @ resid) / (n - k)
    se = np.sqrt(np.clip(np.diag(xtx_inv), 0, None) * sigma2)
    with np.errstate(divide="ignore", invalid="ignore"):
        tvals = np.where(se > 0, coef / np.where(se > 0, se, 1.0), 0.0)
    p = np.asarray(t_two_sided_p(tvals, n - k), dtype=float).reshape(-1)
    p = np.where(se > 0, p, np.where(coef == 0, 1.0, 0.0))
    return OlsFit(coef, se, p, sigma2, n, k, resid)


class OrdinaryLeastSquares(RegressorMixin, BaseEstimator):
    """Scikit-learn style wrapper around :func:`ols_fit`.

    After ``fit``: ``coef_``, ``intercept_``, ``standard_errors_`` and
    ``p_values_`` (intercept first when ``fit_intercept``), and ``result_``.
    """

    def __init__(self, fit_intercept=True):
        self.fit_intercept = fit_intercept

    def _design(self, X):
        return np.column_stack([np.ones(len(X)), X]) if self.fit_intercept else X

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        self.result_ = ols_fit(self._design(X), y)
        c = self.result_.coefficients
        self.intercept_ = float(c[0]) if self.fit_intercept else 0.0
        self.coef_ = c[1:] if self.fit_intercept else c
        self.standard_errors_ = self.result_.standard_errors
        self.p_values_ = self.result_.p_values
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "result_")
        X = check_array(X, dtype=float)
        return X @ self.coef_ + self.intercept_


@dataclass(frozen=True)
class LinearityResult:
    dimension: str
    per_subject_slopes: tuple[float, ...]
    mean_slope: float
    sd_slope: float
    ci95: tuple[float, float]
    significantly_nonideal: bool
    subjects: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "subjects": list(self.subjects),
            "per_subject_slopes": list(self.per_subject_slopes),
            "mean_slope": self.mean_slope,
            "sd_slope": self.sd_slope,
            "ci95": list(self.ci95),
            "significantly_nonideal": self.significantly_nonideal,
        }


def _dim(dimension: str) -> int:
    try:
        return DIMENSIONS[dimension]
    except KeyError:
        raise DomainError(f"dimension must be 'H' or 'V', got {dimension!r}") from None


def linearity_from_slopes(slopes: Sequence[float], dimension: str = "H", subjects: Sequence[str] = ()) -> LinearityResult:
    """Aggregate per-subject slopes into mean, SD and a 95% t interval.

    The slope is significantly non-ideal when 1.0 falls outside the interval.
    """
    s = np.asarray(slopes, dtype=float)
    if len(s) < 2:
        raise AnalysisError("linearity needs at least 2 subjects")
    mean = float(s.mean())
    sd = float(s.std(ddof=1))
    lo, hi = confidence_interval(mean, sd, len(s))
    nonideal = not (lo - CI_ATOL <= 1.0 <= hi + CI_ATOL)
    return LinearityResult(dimension, tuple(float(v) for v in s), mean, sd, (lo, hi), nonideal, tuple(subjects))


def linearity(segments_by_subject: Mapping[str, Sequence[FixationSegment]], dimension: str) -> LinearityResult:
    """Per-subject slope of mean fixation gaze on target position in one dimension.

    Raises
    ------
    AnalysisError
        When fewer than two subjects are given or a subject has fewer than
        three distinct target positions in ``dimension``.
    """
    d = _dim(dimension)
    subjects = sorted(segments_by_subject)
    slopes = []
    for sid in subjects:
        segs = segments_by_subject[sid]
        target = np.array([s.target_array[d] for s in segs])
        gaze = np.array([s.mean_gaze[d] for s in segs])
        if len(np.unique(target)) < 3:
            raise AnalysisError(f"subject {sid!r}: linearity needs at least 3 distinct {dimension} target positions")
        fit = ols_fit(np.column_stack([np.ones(len(target)), target]), gaze)
        slopes.append(float(fit.coefficients[1]))
    return linearity_from_slopes(slopes, dimension, subjects)


_KINDS = ("intercept", "linear", "quadratic")


class CrosstalkSelector(RegressorMixin, BaseEstimator):
    """Backward elimination over intercept / linear / quadratic models.

    Fits ``err = a + b*t + c*t**2``; keeps the quadratic model when ``c`` is
    significant at ``alpha``, else refits without it and keeps the linear
    model when ``b`` is significant, else falls back to intercept only.

    When the full model reproduces the response to within ``exact_atol``
    (noise-free data) t-tests are meaningless, and a term counts as
    significant when its largest contribution over the data exceeds
    ``exact_atol``.
    """

    def __init__(self, alpha=0.05, exact_atol=EXACT_FIT_ATOL):
        self.alpha = alpha
        self.exact_atol = exact_atol

    def _significant(self, fit: OlsFit, X: np.ndarray, j: int, exact: bool) -> bool:
        if exact:
            return float(np.max(np.abs(fit.coefficients[j] * X[:, j]))) > self.exact_atol
        return bool(fit.p_values[j] < self.alpha)

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True, ensure_min_samples=4)
        t = X[:, 0]
        design = np.column_stack([np.ones_like(t), t, t * t])
        full = ols_fit(design, y)
        exact = float(np.sqrt(np.mean(full.residuals**2))) <= self.exact_atol
        self.exact_fit_ = exact
        self.steps_ = []
        fit, kind = full, "quadratic"
        for k in (2, 1):
            Xk = design[:, : k + 1]
            fit = full if k == 2 else ols_fit(Xk, y)
            keep = self._significant(fit, Xk, k, exact)
            self.steps_.append((_KINDS[k], float(fit.p_values[k]), keep))
            if keep:
                kind = _KINDS[k]
                break
        else:
            kind = "intercept"
            fit = ols_fit(design[:, :1], y)
        self.model_kind_ = kind
        self.result_ = fit
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "result_")
        t = check_array(X, dtype=float)[:, 0]
        c = self.result_.coefficients
        return sum(c[i] * t**i for i in range(len(c)))


@dataclass(frozen=True, eq=False)
class CrosstalkResult:
    dimension: str
    model_kind: str
    fit: OlsFit
    steps: tuple = ()
    predictor: np.ndarray = field(default=None, repr=False)
    response: np.ndarray = field(default=None, repr=False)

    def evaluate(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        c = self.fit.coefficients
        return sum(c[i] * t**i for i in range(len(c)))

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "kind": self.model_kind,
            "coefficients": [float(c) for c in self.fit.coefficients],
            "p_values": [float(p) for p in self.fit.p_values],
            "n": self.fit.n,
            "elimination": [{"term": k, "p_value": p, "kept": keep} for k, p, keep in self.steps],
        }


def crosstalk(segments: Sequence[FixationSegment], error_dimension: str, alpha: float = 0.05) -> CrosstalkResult:
    """Model the signed fixation error in one dimension against the orthogonal target coordinate.

    Observations are per-fixation mean errors pooled across subjects.
    """
    d = _dim(error_dimension)
    if len(segments) < 10:
        raise AnalysisError(f"crosstalk needs at least 10 fixations, got {len(segments)}")
    other = 1 - d
    t = np.array([s.target_array[other] for s in segments])
    err = np.array([s.mean_gaze[d] - s.target_array[d] for s in segments])
    sel = CrosstalkSelector(alpha=alpha).fit(t[:, None], err)
    return CrosstalkResult(error_dimension, sel.model_kind_, sel.result_, tuple(sel.steps_), t, err)
