"""Core domain types shared by every other module.

All types here are immutable after construction: derived values are produced
by building new instances, never by mutation, so they are safe to share
across threads and worker processes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

__all__ = [
    "AGE",
    "GENDER",
    "INCOME",
    "EDUCATION",
    "VARIABLES",
    "CLASS_THRESHOLD",
    "DemographicVariable",
    "Individual",
    "FeatureVector",
    "Partition",
    "MarginTable",
    "NationalTarget",
    "WeightAssignment",
    "CommunityFeatures",
    "CorrectionConfig",
    "OutcomeTable",
    "ValidationReport",
    "census_partition",
    "survey_partition",
    "validate_dataset",
    "validate_feature_vector",
]

# Dichotomous variables are stored as continuous scores in [0, 1] and
# thresholded at this value when a class label is needed.
CLASS_THRESHOLD = 0.5

# Community size below which correction weights are considered unreliable.
MIN_COMMUNITY_SIZE = 100


@dataclass(frozen=True, slots=True)
class DemographicVariable:
    """One auxiliary variable used for reweighting.

    ``kind`` is ``"continuous"`` for score-valued variables (age, income) and
    ``"dichotomous"`` for class-valued ones (gender, education) whose scores
    are thresholded at :data:`CLASS_THRESHOLD` when binned into two classes.
    ``valid_range`` is in native units; values outside it are clamped on load.
    """

    name: str
    kind: str
    valid_range: tuple[float, float]

    def __post_init__(self) -> None:
        lo, hi = self.valid_range
        if not lo < hi:
            raise ValueError(f"{self.name}: valid_range must satisfy min < max, got {self.valid_range}")
        if self.kind not in ("continuous", "dichotomous"):
            raise ValueError(f"{self.name}: unknown kind {self.kind!r}")

    def clamp(self, value: float) -> float:
        lo, hi = self.valid_range
        return min(max(value, lo), hi)


AGE = DemographicVariable("age", "continuous", (13.0, 80.0))
GENDER = DemographicVariable("gender", "dichotomous", (0.0, 1.0))
INCOME = DemographicVariable("income", "continuous", (0.0, 500_000.0))
EDUCATION = DemographicVariable("education", "dichotomous", (0.0, 1.0))

VARIABLES: dict[str, DemographicVariable] = {
    v.name: v for v in (AGE, GENDER, INCOME, EDUCATION)
}


@dataclass(frozen=True, slots=True)
class Individual:
    """One sampled unit with (estimated) demographic values."""

    individual_id: str
    community_id: str
    demographics: dict[str, float]

    def with_demographics(self, updated: dict[str, float]) -> "Individual":
        merged = dict(self.demographics)
        merged.update(updated)
        return Individual(self.individual_id, self.community_id, merged)


# A feature vector is a sparse mapping feature_id -> relative frequency.
# Missing entries are structural zeros.
FeatureVector = dict[str, float]


def validate_feature_vector(vec: FeatureVector) -> None:
    """Check non-negativity, finiteness, and the <= 1 total-mass bound.

    Totals below 1 are legal: vocabularies are truncated to the most frequent
    features, so an individual's retained relative frequencies need not sum
    to 1.
    """
    total = 0.0
    for fid, value in vec.items():
        if not math.isfinite(value) or value < 0.0:
            raise ValueError(f"feature {fid!r}: invalid relative frequency {value}")
        total += value
    if total > 1.0 + 1e-9:
        raise ValueError(f"feature vector mass {total} exceeds 1")


@dataclass(frozen=True)
class Partition:
    """Ordered, non-overlapping bins covering one variable's valid range.

    Bins are half-open ``[lo, hi)`` except the final bin, which is closed at
    the top so the partition covers the whole range.
    """

    variable: str
    bins: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if not self.bins:
            raise ValueError("partition needs at least one bin")
        # normalize edge types so serialized boundaries round-trip bit-identically
        object.__setattr__(
            self, "bins", tuple((float(lo), float(hi)) for lo, hi in self.bins)
        )
        for (lo, hi) in self.bins:
            if not lo < hi:
                raise ValueError(f"degenerate bin [{lo}, {hi})")
        for (_, hi_prev), (lo, _) in zip(self.bins, self.bins[1:]):
            if hi_prev != lo:
                raise ValueError("bins must be contiguous and ascending")

    @property
    def edges(self) -> tuple[float, ...]:
        return tuple(b[0] for b in self.bins) + (self.bins[-1][1],)

    @property
    def lo(self) -> float:
        return self.bins[0][0]

    @property
    def hi(self) -> float:
        return self.bins[-1][1]

    def __len__(self) -> int:
        return len(self.bins)

    def bin_index(self, value: float) -> int:
        """Bin index for ``value``; out-of-range values fold into edge bins."""
        if value < self.lo:
            return 0
        if value >= self.hi:
            return len(self.bins) - 1
        # linear scan is fine: partitions have at most a dozen bins
        for i, (lo, hi) in enumerate(self.bins):
            if lo <= value < hi:
                return i
        return len(self.bins) - 1

    @staticmethod
    def from_edges(variable: str, edges: list[float] | tuple[float, ...]) -> "Partition":
        return Partition(variable, tuple(zip(edges, edges[1:])))


def _check_percentages(percentages: tuple[float, ...], where: str, strict_sum: bool = True) -> None:
    total = 0.0
    for p in percentages:
        if not math.isfinite(p) or p < 0.0 or p > 1.0:
            raise ValueError(f"{where}: percentage {p} outside [0, 1]")
        total += p
    if strict_sum and abs(total - 1.0) > 1e-9:
        raise ValueError(f"{where}: percentages sum to {total}, expected 1")


@dataclass(frozen=True)
class MarginTable:
    """Known per-community population percentages over one partition.

    Construction tolerates a sum away from 1 so that malformed input rows can
    be represented and flagged by :func:`validate_dataset`; consumers call
    :meth:`normalized` before using the percentages.
    """

    community_id: str
    variable: str
    partition: Partition
    percentages: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.percentages) != len(self.partition):
            raise ValueError(
                f"margin for {self.variable!r} has {len(self.percentages)} "
                f"percentages for {len(self.partition)} bins"
            )
        _check_percentages(
            self.percentages, f"margins[{self.community_id},{self.variable}]", strict_sum=False
        )
        if sum(self.percentages) <= 0.0:
            raise ValueError(f"margins[{self.community_id},{self.variable}]: all-zero percentages")

    @property
    def sums_to_one(self) -> bool:
        return abs(sum(self.percentages) - 1.0) <= 1e-9

    def normalized(self) -> tuple[float, ...]:
        total = sum(self.percentages)
        return tuple(p / total for p in self.percentages)


@dataclass(frozen=True)
class NationalTarget:
    """National target distribution used to redistribute shrunken estimates."""

    variable: str
    partition: Partition
    percentages: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.percentages) != len(self.partition):
            raise ValueError(f"target for {self.variable!r} misaligned with its partition")
        _check_percentages(self.percentages, f"target[{self.variable}]")


@dataclass(frozen=True)
class WeightAssignment:
    """Per-individual correction factors within one community."""

    community_id: str
    weights: dict[str, float]

    def __post_init__(self) -> None:
        for iid, w in self.weights.items():
            if not math.isfinite(w) or w <= 0.0:
                raise ValueError(f"weight for {iid!r} must be positive and finite, got {w}")

    def mean(self) -> float:
        return sum(self.weights.values()) / len(self.weights)


@dataclass(frozen=True)
class CommunityFeatures:
    """Weighted community-level feature means."""

    community_id: str
    means: dict[str, float]


@dataclass(frozen=True)
class CorrectionConfig:
    """Settings for one correction run.

    ``method`` selects how the reweighting numerator is estimated:
    ``"full"`` (per-variable post-stratification), ``"naive"`` (independence
    product over the joint cells), or ``"raking"`` (iterative proportional
    fitting of the sample marginals). An empty ``variables`` tuple means no
    correction (every weight is 1).
    """

    method: str = "raking"
    variables: tuple[str, ...] = ()
    redistribute: bool = False
    min_bin_threshold: int = 0
    smoothing_k: float = 0.0
    normalize_weights: bool = False

    def __post_init__(self) -> None:
        if self.method not in ("full", "naive", "raking"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.smoothing_k < 0.0:
            raise ValueError("smoothing_k must be >= 0")
        if self.min_bin_threshold < 0:
            raise ValueError("min_bin_threshold must be >= 0")
        for v in self.variables:
            if v not in VARIABLES:
                raise ValueError(f"unknown correction variable {v!r}")

    def label(self) -> str:
        vars_part = "+".join(self.variables) if self.variables else "none"
        return (
            f"{self.method}:{vars_part}:bin{self.min_bin_threshold}"
            f":k{self.smoothing_k:g}:r{int(self.redistribute)}:n{int(self.normalize_weights)}"
        )


@dataclass(frozen=True)
class OutcomeTable:
    """One community-level prediction target."""

    outcome_name: str
    values: dict[str, float]

    def __post_init__(self) -> None:
        for cid, v in self.values.items():
            if not math.isfinite(v):
                raise ValueError(f"outcome {self.outcome_name!r} has non-finite value for {cid!r}")


# ---------------------------------------------------------------------------
# Standard partition schemes.
#
# Bin boundaries are data (the CSV schemas carry them explicitly); these
# builders exist so synthetic runs and tests share the canonical census-style
# and national-survey-style schemes. The lowest age bin is stretched down to
# the valid-range floor so estimates below the scheme's nominal minimum fold
# into it rather than being dropped.
# ---------------------------------------------------------------------------

_CENSUS_EDGES: dict[str, tuple[float, ...]] = {
    "age": (13, 20, 25, 30, 35, 40, 45, 50, 55, 60, 65, 80),
    "gender": (0.0, CLASS_THRESHOLD, 1.0),
    "income": (0, 10_000, 15_000, 25_000, 35_000, 50_000, 75_000, 100_000, 150_000, 200_000, 500_000),
    "education": (0.0, CLASS_THRESHOLD, 1.0),
}

_SURVEY_EDGES: dict[str, tuple[float, ...]] = {
    "age": (13, 30, 50, 65, 80),
    "gender": (0.0, CLASS_THRESHOLD, 1.0),
    "income": (0, 30_000, 50_000, 75_000, 500_000),
    "education": (0.0, 1 / 3, 2 / 3, 1.0),
}


def census_partition(variable: str) -> Partition:
    """Census-style partition: 11 age, 2 gender, 10 income, 2 education bins."""
    return Partition.from_edges(variable, list(_CENSUS_EDGES[variable]))


def survey_partition(variable: str) -> Partition:
    """National-survey-style partition: 4 age, 2 gender, 4 income, 3 education bins."""
    return Partition.from_edges(variable, list(_SURVEY_EDGES[variable]))


# ---------------------------------------------------------------------------
# Dataset validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ValidationReport:
    """Non-fatal findings about a loaded dataset.

    Small communities and out-of-range estimates are warnings, not errors:
    synthetic runs use small communities deliberately, and sub-range values
    fold into edge bins rather than being dropped.
    """

    n_individuals: int
    n_communities: int
    small_communities: dict[str, int] = field(default_factory=dict)
    missing_demographics: tuple[str, ...] = ()
    invalid_margins: tuple[str, ...] = ()
    out_of_range: dict[str, int] = field(default_factory=dict)

    @property
    def clean(self) -> bool:
        return not (self.small_communities or self.missing_demographics or self.invalid_margins)

    def summary_lines(self) -> list[str]:
        lines = [f"{self.n_individuals} individuals in {self.n_communities} communities"]
        for cid, n in sorted(self.small_communities.items()):
            lines.append(f"community {cid} has only {n} individuals (< {MIN_COMMUNITY_SIZE})")
        for iid in self.missing_demographics:
            lines.append(f"individual {iid} is missing demographic values")
        for msg in self.invalid_margins:
            lines.append(f"invalid margin: {msg}")
        for var, n in sorted(self.out_of_range.items()):
            lines.append(f"{n} values outside the valid range for {var} (clamped)")
        return lines


def validate_dataset(
    individuals: list[Individual],
    features: dict[str, FeatureVector],
    margins: list[MarginTable],
    required_variables: tuple[str, ...] = ("age", "gender", "income", "education"),
) -> ValidationReport:
    """Report communities below the size floor, missing demographics, and bad margins."""
    sizes: dict[str, int] = {}
    missing: list[str] = []
    out_of_range: dict[str, int] = {}
    for ind in individuals:
        sizes[ind.community_id] = sizes.get(ind.community_id, 0) + 1
        if any(v not in ind.demographics for v in required_variables):
            missing.append(ind.individual_id)
        for var, value in ind.demographics.items():
            spec = VARIABLES.get(var)
            if spec is not None and not spec.valid_range[0] <= value <= spec.valid_range[1]:
                out_of_range[var] = out_of_range.get(var, 0) + 1

    small = {cid: n for cid, n in sizes.items() if n < MIN_COMMUNITY_SIZE}

    invalid: list[str] = []
    for m in margins:
        if not m.sums_to_one:
            invalid.append(f"{m.community_id}/{m.variable} sums to {sum(m.percentages):.6f}")

    for iid in features:
        validate_feature_vector(features[iid])

    return ValidationReport(
        n_individuals=len(individuals),
        n_communities=len(sizes),
        small_communities=small,
        missing_demographics=tuple(missing),
        invalid_margins=tuple(invalid),
        out_of_range=out_of_range,
    )
