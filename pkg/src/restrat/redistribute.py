"""Estimator redistribution: undo shrinkage in model-estimated scores.

Regularized demographic estimators compress scores toward their training
mean, so the sample's score distribution is narrower than the population it
came from. Redistribution fixes the *distribution*: source bin boundaries are
chosen over the pooled score sample so each source bin holds the same share
of mass as the corresponding national target bin, then every score is mapped
linearly from its source bin onto the target bin. Rank order is preserved.

Two boundary-construction modes are available:

* ``step=None`` (default): boundaries are placed between order statistics so
  every source bin's share matches the target share to within 1/N exactly.
  This is the limiting behaviour of the stepwise algorithm as the step
  shrinks to zero.
* ``step > 0``: boundaries grow upward one fixed step at a time until the
  accumulated share reaches the target share, which reproduces the coarse
  integer-step construction on native-unit data.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .types import Individual, NationalTarget

__all__ = [
    "SourceBinBoundaries",
    "build_source_bins",
    "redistribute_value",
    "redistribute_scores",
    "redistribute_all",
    "Redistributor",
]


@dataclass(frozen=True)
class SourceBinBoundaries:
    """Source-sample bin boundaries aligned one-to-one with target bins.

    ``achieved_fractions`` records the share of the source sample that
    actually fell inside each bin; with coarse steps or heavily tied data a
    bin can overshoot its target share, and that overshoot is visible here
    rather than silently hidden.
    """

    variable: str
    boundaries: tuple[tuple[float, float], ...]
    achieved_fractions: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if not self.boundaries:
            raise ValueError("no source bins")
        for (lo, hi) in self.boundaries:
            if not lo < hi:
                raise ValueError(f"degenerate source bin [{lo}, {hi})")
        for (_, hi_prev), (lo, _) in zip(self.boundaries, self.boundaries[1:]):
            if hi_prev != lo:
                raise ValueError("source bins must be contiguous")

    @property
    def lo(self) -> float:
        return self.boundaries[0][0]

    @property
    def hi(self) -> float:
        return self.boundaries[-1][1]

    def bin_index(self, value: float) -> int:
        edges = [b[0] for b in self.boundaries[1:]]
        return bisect_right(edges, value)


def _fraction_between(sorted_scores: np.ndarray, lo: float, hi: float) -> float:
    n_lo = np.searchsorted(sorted_scores, lo, side="left")
    n_hi = np.searchsorted(sorted_scores, hi, side="left")
    return float(n_hi - n_lo) / len(sorted_scores)


def _stepwise_boundaries(
    sorted_scores: np.ndarray, target: NationalTarget, step: float
) -> list[float]:
    """Literal stepwise growth: widen each bin's top edge until it holds
    its target share (or runs out of sample)."""
    top = float(sorted_scores[-1])
    edges = [target.partition.lo]
    for pct in target.percentages:
        lo = edges[-1]
        j = 1
        hi = lo + step
        while _fraction_between(sorted_scores, lo, hi) < pct and hi <= top:
            j += 1
            hi = lo + j * step
        edges.append(hi)
    return edges


def _quantile_boundaries(sorted_scores: np.ndarray, target: NationalTarget) -> list[float]:
    """Order-statistic placement: bin l's top edge sits between the
    round(N * cumulative-share)-th score and the next one."""
    n = len(sorted_scores)
    edges = [target.partition.lo]
    cum = 0.0
    for pct in target.percentages[:-1]:
        cum += pct
        k = int(np.floor(n * cum + 0.5))
        if k <= 0:
            edges.append(edges[-1])
        elif k >= n:
            edges.append(float(sorted_scores[-1]))
        else:
            edges.append(float(sorted_scores[k - 1] + sorted_scores[k]) / 2.0)
    edges.append(float(sorted_scores[-1]))
    return edges


def build_source_bins(
    scores: list[float] | np.ndarray,
    target: NationalTarget,
    step: float | None = None,
) -> SourceBinBoundaries:
    """Choose source bin boundaries whose per-bin mass matches the target.

    Scores below the target range are folded up to its floor (they belong to
    the lowest bin); scores above are folded down. A single-bin target is an
    identity case: the source boundaries are the full target range.
    """
    arr = np.asarray(scores, dtype=float)
    if arr.size == 0:
        raise ValueError("no scores to redistribute")
    if not np.all(np.isfinite(arr)):
        raise ValueError("scores contain non-finite values")
    if step is not None and step <= 0:
        raise ValueError("step must be positive")

    part = target.partition
    if len(part) == 1:
        return SourceBinBoundaries(target.variable, (part.bins[0],), (1.0,))

    arr = np.clip(arr, part.lo, part.hi)
    arr.sort()

    if step is None:
        edges = _quantile_boundaries(arr, target)
    else:
        edges = _stepwise_boundaries(arr, target, step)

    # membership works on half-open bins, so keep edges strictly increasing;
    # heavy ties can otherwise collapse a bin to zero width
    eps = (part.hi - part.lo) * 1e-12 or 1e-12
    for i in range(1, len(edges)):
        if edges[i] <= edges[i - 1]:
            edges[i] = edges[i - 1] + eps

    boundaries = tuple(zip(edges, edges[1:]))
    achieved = tuple(
        _fraction_between(arr, lo, hi if i < len(boundaries) - 1 else np.inf)
        for i, (lo, hi) in enumerate(boundaries)
    )
    return SourceBinBoundaries(target.variable, boundaries, achieved)


def redistribute_value(
    d_s: float,
    source_bin: tuple[float, float],
    target_bin: tuple[float, float],
) -> float:
    """Map one score from its source bin onto the target bin, preserving its
    relative position inside the bin."""
    s_lo, s_hi = source_bin
    t_lo, t_hi = target_bin
    if s_hi <= s_lo:
        raise ZeroDivisionError(f"zero-width source bin [{s_lo}, {s_hi})")
    if t_hi <= t_lo:
        raise ValueError(f"zero-width target bin [{t_lo}, {t_hi})")
    return t_lo + (d_s - s_lo) * (t_hi - t_lo) / (s_hi - s_lo)


def redistribute_scores(
    scores: list[float] | np.ndarray,
    source: SourceBinBoundaries,
    target: NationalTarget,
) -> np.ndarray:
    """Apply fitted source boundaries to a score vector."""
    if len(source.boundaries) != len(target.partition):
        raise ValueError("source boundaries misaligned with target bins")
    arr = np.clip(np.asarray(scores, dtype=float), source.lo, source.hi)
    out = np.empty_like(arr)
    for i, value in enumerate(arr):
        l = source.bin_index(value)
        out[i] = redistribute_value(value, source.boundaries[l], target.partition.bins[l])
    return out


def redistribute_all(
    individuals: list[Individual],
    variable: str,
    target: NationalTarget,
    step: float | None = None,
) -> list[Individual]:
    """Redistribute one variable across a pooled sample of individuals.

    The boundaries are fit on the pooled scores of everyone supplied here, so
    pass the whole national sample, not one community at a time.
    """
    scores = [ind.demographics[variable] for ind in individuals]
    source = build_source_bins(scores, target, step=step)
    mapped = redistribute_scores(scores, source, target)
    return [
        ind.with_demographics({variable: float(v)})
        for ind, v in zip(individuals, mapped)
    ]


class Redistributor(BaseEstimator, TransformerMixin):
    """Transformer view of redistribution for one variable.

    ``fit`` learns source boundaries from a pooled score sample; ``transform``
    maps scores onto the target distribution. Composes with scikit-learn
    pipelines operating on a single score column.
    """

    def __init__(self, target: NationalTarget | None = None, step: float | None = None):
        self.target = target
        self.step = step

    def fit(self, X, y=None):
        if self.target is None:
            raise ValueError("Redistributor requires a target distribution")
        self.source_bins_ = build_source_bins(np.ravel(X), self.target, step=self.step)
        return self

    def transform(self, X):
        if not hasattr(self, "source_bins_"):
            raise ValueError("Redistributor is not fitted")
        shape = np.shape(X)
        out = redistribute_scores(np.ravel(X), self.source_bins_, self.target)
        return out.reshape(shape)
