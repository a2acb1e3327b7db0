"""Community-level predictive pipeline.

Feature screening, standardization, randomized dimensionality reduction and
ridge regression, evaluated out-of-sample with k-fold cross-validation. Every
data-dependent parameter (masks, means, projections, coefficients) is fit on
training folds only and applied unchanged to the held-out fold.

The steps are scikit-learn style estimators so they compose with sklearn
pipelines; :func:`cross_validate` wires them together with a deterministic,
hash-based fold assignment.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin

from . import evaluate

__all__ = [
    "FeatureMatrix",
    "PipelineConfig",
    "EvalResult",
    "VarianceFilter",
    "CorrelationFilter",
    "Standardizer",
    "RandomizedPCA",
    "RidgeRegressor",
    "ridge_fit",
    "assign_folds",
    "cross_validate",
]


@dataclass(frozen=True)
class FeatureMatrix:
    """Dense community-by-feature matrix with row/column identifiers."""

    rows: tuple[str, ...]
    cols: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.values.shape != (len(self.rows), len(self.cols)):
            raise ValueError("values shape does not match row/column ids")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("feature matrix contains non-finite values")

    def subset(self, row_ids: list[str]) -> "FeatureMatrix":
        index = {cid: i for i, cid in enumerate(self.rows)}
        sel = [index[cid] for cid in row_ids]
        return FeatureMatrix(tuple(row_ids), self.cols, self.values[sel])


@dataclass(frozen=True)
class PipelineConfig:
    """Fixed modelling settings shared by every fold."""

    min_var: float = 0.0
    alpha_family: float = 60.0
    reduce_ratio: float = 0.1
    ridge_lambda: float = 10_000.0
    power_iters: int = 4
    oversample: int = 10
    global_selection: bool = False


class VarianceFilter(BaseEstimator, TransformerMixin):
    """Drop columns whose variance does not exceed ``min_var``."""

    def __init__(self, min_var: float = 0.0):
        self.min_var = min_var

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=float)
        self.mask_ = X.var(axis=0) > self.min_var
        return self

    def transform(self, X):
        return np.asarray(X, dtype=float)[:, self.mask_]


class CorrelationFilter(BaseEstimator, TransformerMixin):
    """Keep columns whose outcome correlation clears a family-wise budget.

    A column survives when its two-sided correlation p-value is below
    ``alpha_family / n_columns``. If nothing survives, the single most
    correlated column is kept so downstream steps have input.
    """

    def __init__(self, alpha_family: float = 60.0):
        self.alpha_family = alpha_family

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        n = X.shape[0]
        if n < 3:
            raise ValueError("correlation filter needs at least 3 rows")
        self.p_values_ = _pearson_pvalues(X, y)
        threshold = self.alpha_family / X.shape[1]
        mask = self.p_values_ < threshold
        if not mask.any():
            mask = np.zeros(X.shape[1], dtype=bool)
            mask[int(np.argmin(self.p_values_))] = True
        self.mask_ = mask
        return self

    def transform(self, X):
        return np.asarray(X, dtype=float)[:, self.mask_]


def _pearson_pvalues(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Two-sided p-values of the per-column Pearson correlation with y."""
    n = X.shape[0]
    Xc = X - X.mean(axis=0)
    yc = y - y.mean()
    denom = np.sqrt((Xc**2).sum(axis=0) * (yc**2).sum())
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(denom > 0, Xc.T @ yc / denom, 0.0)
    r = np.clip(r, -1.0, 1.0)
    with np.errstate(divide="ignore"):
        t = r * np.sqrt((n - 2) / np.maximum(1e-300, 1.0 - r**2))
    return 2.0 * stats.t.sf(np.abs(t), df=n - 2)


class Standardizer(BaseEstimator, TransformerMixin):
    """Center to mean 0 and scale to unit (population) standard deviation."""

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=float)
        self.mean_ = X.mean(axis=0)
        self.sd_ = X.std(axis=0)
        if np.any(self.sd_ == 0):
            raise ValueError("zero-variance column; run a variance filter first")
        return self

    def transform(self, X):
        return (np.asarray(X, dtype=float) - self.mean_) / self.sd_


class RandomizedPCA(BaseEstimator, TransformerMixin):
    """Project onto the leading principal directions via a randomized
    range finder (Gaussian sketch, QR-stabilized power iterations)."""

    def __init__(self, ratio: float = 0.1, seed: int = 0, power_iters: int = 4, oversample: int = 10):
        self.ratio = ratio
        self.seed = seed
        self.power_iters = power_iters
        self.oversample = oversample

    def fit(self, X, y=None):
        if not 0 < self.ratio <= 1:
            raise ValueError(f"ratio must be in (0, 1], got {self.ratio}")
        X = np.asarray(X, dtype=float)
        n_cols = X.shape[1]
        k = int(math.ceil(self.ratio * n_cols))
        rng = np.random.default_rng(self.seed)
        sketch = min(n_cols, k + self.oversample)
        G = rng.standard_normal((n_cols, sketch))
        Q, _ = np.linalg.qr(X @ G)
        for _ in range(self.power_iters):
            Z, _ = np.linalg.qr(X.T @ Q)
            Q, _ = np.linalg.qr(X @ Z)
        B = Q.T @ X
        _, _, Vt = np.linalg.svd(B, full_matrices=False)
        self.components_ = Vt[:k].T  # (n_cols, k)
        return self

    def transform(self, X):
        return np.asarray(X, dtype=float) @ self.components_


def ridge_fit(X: np.ndarray, y: np.ndarray, lam: float = 10_000.0) -> tuple[np.ndarray, float]:
    """Solve the L2-penalized least squares normal equations on centered y.

    Returns ``(coefficients, intercept)`` with the intercept equal to the
    training outcome mean (X is assumed standardized, hence centered).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    intercept = float(y.mean())
    yc = y - intercept
    gram = X.T @ X + lam * np.eye(X.shape[1])
    coef = np.linalg.solve(gram, X.T @ yc)
    return coef, intercept


class RidgeRegressor(BaseEstimator, RegressorMixin):
    def __init__(self, lam: float = 10_000.0):
        self.lam = lam

    def fit(self, X, y):
        self.coef_, self.intercept_ = ridge_fit(X, y, self.lam)
        return self

    def predict(self, X):
        return np.asarray(X, dtype=float) @ self.coef_ + self.intercept_


def assign_folds(ids: list[str] | tuple[str, ...], folds: int, seed: int) -> dict[str, int]:
    """Deterministic near-balanced fold assignment.

    Ids are ordered by a salted stable hash and dealt round-robin, so the
    assignment depends only on ``(seed, set of ids)``, never on row order or
    process state.
    """
    if folds < 2:
        raise ValueError("need at least 2 folds")

    def key(cid: str) -> tuple[str, str]:
        return hashlib.sha256(f"{seed}:{cid}".encode()).hexdigest(), cid

    ordered = sorted(set(ids), key=key)
    return {cid: pos % folds for pos, cid in enumerate(ordered)}


@dataclass
class EvalResult:
    """Out-of-sample predictions and accuracy for one task."""

    task: str
    community_ids: tuple[str, ...]
    predictions: np.ndarray
    actuals: np.ndarray
    metrics: dict[str, float]
    fold_of: dict[str, int]
    fold_params: dict[int, dict] | None = None

    @property
    def residuals(self) -> np.ndarray:
        return self.predictions - self.actuals


def _fit_fold(X_train, y_train, config: PipelineConfig, seed: int, fold: int):
    steps = [
        VarianceFilter(config.min_var),
        CorrelationFilter(config.alpha_family),
        Standardizer(),
        RandomizedPCA(config.reduce_ratio, seed=_fold_seed(seed, fold),
                      power_iters=config.power_iters, oversample=config.oversample),
    ]
    Z = X_train
    for step in steps:
        Z = step.fit(Z, y_train).transform(Z)
    model = RidgeRegressor(config.ridge_lambda).fit(Z, y_train)
    return steps, model


def _fold_seed(seed: int, fold: int) -> int:
    digest = hashlib.sha256(f"{seed}:fold:{fold}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _apply_steps(steps, X):
    Z = X
    for step in steps:
        Z = step.transform(Z)
    return Z


def cross_validate(
    X: FeatureMatrix,
    y: dict[str, float],
    folds: int = 10,
    seed: int = 0,
    config: PipelineConfig = PipelineConfig(),
    task: str = "outcome",
    capture_params: bool = False,
) -> EvalResult:
    """K-fold out-of-sample evaluation of the full pipeline.

    Communities without an outcome value are dropped. All screening and
    transformation parameters are re-fit per fold on the training rows only
    (set ``config.global_selection`` to fit the two screening masks once on
    all rows, mimicking a non-fold-safe protocol).
    """
    kept = [cid for cid in X.rows if cid in y]
    if len(kept) < folds:
        raise ValueError(f"{len(kept)} rows is fewer than {folds} folds")
    Xm = X.subset(kept)
    yv = np.array([y[cid] for cid in kept], dtype=float)

    fold_of = assign_folds(kept, folds, seed)
    fold_index = np.array([fold_of[cid] for cid in kept])
    for f in range(folds):
        if int((fold_index == f).sum()) < 2:
            raise ValueError(f"fold {f} has fewer than 2 rows")

    global_masks = None
    if config.global_selection:
        vf = VarianceFilter(config.min_var).fit(Xm.values)
        cf = CorrelationFilter(config.alpha_family).fit(vf.transform(Xm.values), yv)
        global_masks = (vf, cf)

    predictions = np.empty(len(kept))
    fold_params: dict[int, dict] = {}
    for f in range(folds):
        train = fold_index != f
        test = ~train
        X_train, y_train = Xm.values[train], yv[train]
        if global_masks is not None:
            vf, cf = global_masks
            pre = [vf, cf]
            Z = cf.transform(vf.transform(X_train))
            steps = [
                Standardizer(),
                RandomizedPCA(config.reduce_ratio, seed=_fold_seed(seed, f),
                              power_iters=config.power_iters, oversample=config.oversample),
            ]
            for step in steps:
                Z = step.fit(Z, y_train).transform(Z)
            model = RidgeRegressor(config.ridge_lambda).fit(Z, y_train)
            steps = pre + steps
        else:
            steps, model = _fit_fold(X_train, y_train, config, seed, f)
        predictions[test] = model.predict(_apply_steps(steps, Xm.values[test]))
        if capture_params:
            fold_params[f] = _snapshot(steps, model)

    metrics = {
        "pearson_r": evaluate.pearson_r(predictions, yv),
        "r_squared": evaluate.r_squared(predictions, yv),
        "rmse": evaluate.rmse(predictions, yv),
    }
    return EvalResult(
        task=task,
        community_ids=tuple(kept),
        predictions=predictions,
        actuals=yv,
        metrics=metrics,
        fold_of=fold_of,
        fold_params=fold_params if capture_params else None,
    )


def _snapshot(steps, model) -> dict:
    snap: dict[str, np.ndarray] = {}
    for step in steps:
        if isinstance(step, VarianceFilter):
            snap["variance_mask"] = step.mask_.copy()
        elif isinstance(step, CorrelationFilter):
            snap["correlation_mask"] = step.mask_.copy()
        elif isinstance(step, Standardizer):
            snap["mean"] = step.mean_.copy()
            snap["sd"] = step.sd_.copy()
        elif isinstance(step, RandomizedPCA):
            snap["components"] = step.components_.copy()
    snap["coef"] = model.coef_.copy()
    snap["intercept"] = np.array(model.intercept_)
    return snap
