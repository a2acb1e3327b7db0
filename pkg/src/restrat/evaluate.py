"""Accuracy metrics, significance testing, and bias quantification.

Correction methods are judged two ways: whether they improve out-of-sample
prediction (paired tests on residual magnitudes, combined across dependent
tasks), and whether they actually shrink the demographic gap between the
weighted sample and the known population margins.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .types import CLASS_THRESHOLD, Individual, MarginTable, VARIABLES, WeightAssignment

__all__ = [
    "pearson_r",
    "r_squared",
    "rmse",
    "paired_residual_test",
    "combine_dependent_pvalues",
    "residual_diff_correlations",
    "ComparisonResult",
    "compare_metrics",
    "BiasEntry",
    "BiasReport",
    "quantify_bias",
]


def _check_pair(pred, actual) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=float)
    a = np.asarray(actual, dtype=float)
    if p.shape != a.shape or p.ndim != 1:
        raise ValueError("prediction and actual vectors must be aligned 1-D arrays")
    if len(p) < 3:
        raise ValueError("need at least 3 observations")
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(a))):
        raise ValueError("non-finite values")
    return p, a


def pearson_r(pred, actual) -> float:
    p, a = _check_pair(pred, actual)
    pc = p - p.mean()
    ac = a - a.mean()
    denom = math.sqrt(float(pc @ pc) * float(ac @ ac))
    if denom == 0.0:
        raise ValueError("zero variance; correlation undefined")
    return float(pc @ ac) / denom


def r_squared(pred, actual) -> float:
    """Variance explained, reported as the squared out-of-sample correlation."""
    return pearson_r(pred, actual) ** 2


def rmse(pred, actual) -> float:
    p, a = _check_pair(pred, actual)
    return float(np.sqrt(np.mean((p - a) ** 2)))


def paired_residual_test(residuals_a, residuals_b) -> float:
    """Two-sided paired t-test on the difference of residual magnitudes.

    Tests whether model A's absolute errors differ from model B's across the
    same communities. Identical (or offset-constant) magnitudes give p = 1.
    """
    a, b = _check_pair(residuals_a, residuals_b)
    d = np.abs(a) - np.abs(b)
    n = len(d)
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        warnings.warn("residual magnitude differences have zero variance", stacklevel=2)
        return 1.0
    t = float(d.mean()) / (sd / math.sqrt(n))
    return float(2.0 * stats.t.sf(abs(t), df=n - 1))


# Polynomial fit for the covariance of two -2*ln(p) terms as a function of
# the correlation between the underlying test statistics.
_COV_POLY = (3.263, 0.710, 0.027)


def combine_dependent_pvalues(p_values, pairwise_correlations) -> float:
    """Combine dependent p-values via a variance-rescaled chi-square.

    The summed statistic -2 * sum(ln p) keeps its mean 2L under dependence,
    but its variance inflates by twice the pairwise covariances, approximated
    polynomially from the test-statistic correlations. The statistic is then
    referred to a scaled chi-square with matched first two moments. With all
    correlations zero this reduces exactly to the classic product method.
    """
    p = np.asarray(p_values, dtype=float)
    if p.ndim != 1 or len(p) == 0:
        raise ValueError("need a 1-D list of p-values")
    if np.any(p <= 0) or np.any(p > 1):
        raise ValueError("p-values must lie in (0, 1]")
    R = np.asarray(pairwise_correlations, dtype=float)
    L = len(p)
    if R.shape != (L, L):
        raise ValueError(f"correlation matrix must be {L}x{L}")
    if np.any(np.abs(R) > 1):
        raise ValueError("correlations must lie in [-1, 1]")
    if not np.allclose(R, R.T, atol=1e-12) or not np.allclose(np.diag(R), 1.0, atol=1e-12):
        raise ValueError("correlation matrix must be symmetric with unit diagonal")

    statistic = -2.0 * float(np.sum(np.log(p)))
    mean = 2.0 * L
    var = 4.0 * L
    c0, c1, c2 = _COV_POLY
    for i in range(L):
        for j in range(i + 1, L):
            rho = R[i, j]
            var += 2.0 * (c0 * rho + c1 * rho**2 + c2 * rho**3)
    scale = var / (2.0 * mean)
    dof = 2.0 * mean**2 / var
    return float(stats.chi2.sf(statistic / scale, dof))


def residual_diff_correlations(diffs: dict[str, dict[str, float]]) -> np.ndarray:
    """Correlations between tasks' residual-magnitude-difference vectors.

    ``diffs`` maps task name to a per-community difference (|res_a| - |res_b|).
    Each pair's correlation is computed over the communities the two tasks
    share; pairs sharing fewer than 3 communities fall back to 0.
    """
    tasks = list(diffs)
    L = len(tasks)
    R = np.eye(L)
    for i in range(L):
        for j in range(i + 1, L):
            common = sorted(set(diffs[tasks[i]]) & set(diffs[tasks[j]]))
            if len(common) < 3:
                continue
            xi = np.array([diffs[tasks[i]][c] for c in common])
            xj = np.array([diffs[tasks[j]][c] for c in common])
            if xi.std() == 0 or xj.std() == 0:
                continue
            R[i, j] = R[j, i] = float(np.corrcoef(xi, xj)[0, 1])
    return R


@dataclass(frozen=True)
class ComparisonResult:
    """Baseline-vs-corrected outcome for one task and metric."""

    task: str
    metric: str
    baseline: float
    corrected: float
    p_value: float
    direction: str

    def __post_init__(self) -> None:
        if self.direction not in ("significant-increase", "significant-decrease", "ns"):
            raise ValueError(f"bad direction {self.direction!r}")


def compare_metrics(
    task: str, metric: str, baseline: float, corrected: float, p_value: float,
    alpha: float = 0.05,
) -> ComparisonResult:
    if p_value < alpha and corrected != baseline:
        direction = "significant-increase" if corrected > baseline else "significant-decrease"
    else:
        direction = "ns"
    return ComparisonResult(task, metric, baseline, corrected, p_value, direction)


# ---------------------------------------------------------------------------
# Bias quantification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BiasEntry:
    """Average absolute gap to the population margins for one variable.

    Continuous variables are standardized mean differences (census-imputed
    mean vs weighted sample mean over the pooled standard deviation);
    dichotomous variables are percentage-point differences.
    """

    variable: str
    kind: str
    before: float
    after: float

    def __post_init__(self) -> None:
        if self.before < 0 or self.after < 0:
            raise ValueError("bias magnitudes are non-negative by construction")


@dataclass(frozen=True)
class BiasReport:
    entries: dict[str, BiasEntry]

    def reduced(self, variable: str) -> bool:
        e = self.entries[variable]
        return e.after < e.before


def _census_moments(margin: MarginTable, kind: str) -> tuple[float, float]:
    """Mean and sd imputed from bin midpoints; the top bin of a continuous
    variable is open-ended in source tables and gets midpoint 1.5x its
    lower bound."""
    pcts = margin.normalized()
    mids = []
    for i, (lo, hi) in enumerate(margin.partition.bins):
        if kind == "continuous" and i == len(margin.partition.bins) - 1:
            mids.append(1.5 * lo)
        else:
            mids.append((lo + hi) / 2.0)
    mean = sum(p * m for p, m in zip(pcts, mids))
    var = sum(p * (m - mean) ** 2 for p, m in zip(pcts, mids))
    return mean, math.sqrt(var)


def _census_class_share(margin: MarginTable) -> float:
    pcts = margin.normalized()
    return sum(p for p, (lo, _) in zip(pcts, margin.partition.bins) if lo >= CLASS_THRESHOLD)


def _weighted_moments(values: np.ndarray, w: np.ndarray) -> tuple[float, float]:
    total = float(w.sum())
    mean = float((w * values).sum()) / total
    var = float((w * (values - mean) ** 2).sum()) / total
    return mean, math.sqrt(var)


def quantify_bias(
    individuals: list[Individual],
    weights: dict[str, WeightAssignment] | None,
    margins: dict[tuple[str, str], MarginTable],
    variables: tuple[str, ...] = ("age", "gender", "income", "education"),
    corrected_individuals: list[Individual] | None = None,
) -> BiasReport:
    """Average absolute demographic gap before and after correction.

    "Before" uses the raw estimates with unit weights; "after" uses the
    corrected weights over ``corrected_individuals`` (pass the redistributed
    individuals when redistribution is part of the correction; defaults to
    the same individuals). Communities with no score spread are skipped.
    """
    corrected = corrected_individuals if corrected_individuals is not None else individuals

    by_community: dict[str, list[int]] = {}
    for idx, ind in enumerate(individuals):
        by_community.setdefault(ind.community_id, []).append(idx)

    entries: dict[str, BiasEntry] = {}
    for var in variables:
        kind = VARIABLES[var].kind
        gaps_before: list[float] = []
        gaps_after: list[float] = []
        for cid in sorted(by_community):
            if (cid, var) not in margins:
                continue
            margin = margins[(cid, var)]
            rows = by_community[cid]
            raw = np.array([individuals[i].demographics[var] for i in rows])
            fixed = np.array([corrected[i].demographics[var] for i in rows])
            if weights is None or cid not in weights:
                w = np.ones(len(rows))
            else:
                assignment = weights[cid]
                w = np.array(
                    [assignment.weights[individuals[i].individual_id] for i in rows]
                )

            if kind == "continuous":
                c_mean, c_sd = _census_moments(margin, kind)
                b_mean, b_sd = _weighted_moments(raw, np.ones(len(rows)))
                a_mean, a_sd = _weighted_moments(fixed, w)
                pooled_b = math.sqrt((c_sd**2 + b_sd**2) / 2.0)
                pooled_a = math.sqrt((c_sd**2 + a_sd**2) / 2.0)
                if pooled_b == 0.0 or pooled_a == 0.0:
                    warnings.warn(
                        f"community {cid}: zero pooled sd for {var}; skipped", stacklevel=2
                    )
                    continue
                gaps_before.append(abs(c_mean - b_mean) / pooled_b)
                gaps_after.append(abs(c_mean - a_mean) / pooled_a)
            else:
                c_share = _census_class_share(margin)
                share_before = float((raw >= CLASS_THRESHOLD).mean())
                share_after = float(
                    (w * (fixed >= CLASS_THRESHOLD)).sum() / w.sum()
                )
                gaps_before.append(abs(c_share - share_before))
                gaps_after.append(abs(c_share - share_after))

        if not gaps_before or not gaps_after:
            continue
        entries[var] = BiasEntry(
            var, kind, float(np.mean(gaps_before)), float(np.mean(gaps_after))
        )
    return BiasReport(entries)
