"""Seeded synthetic populations with known selection bias.

Each community gets a full population with true demographics, feature usage
driven by those demographics, and an outcome generated from the *population*
feature means. A biased sample is then drawn through a logistic selection
function, and the sample's demographic estimates are shrunken toward the
pooled mean to emulate regularized estimators. The unshrunken values, the
population margins, and the population feature means are all kept as oracles
so correctness of a correction can be measured, not assumed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .io import Dataset
from .types import (
    CommunityFeatures,
    FeatureVector,
    Individual,
    MarginTable,
    NationalTarget,
    OutcomeTable,
    census_partition,
    survey_partition,
)

__all__ = ["SynthSpec", "SynthData", "generate"]

_VARS = ("age", "gender", "income", "education")

# fixed location/scale used when demographics enter the feature and
# selection models; constants, not data-dependent, so models are stable
_STANDARDIZE = {
    "age": (40.0, 12.0),
    "gender": (0.5, 0.3),
    "income": (math.log(40_000.0), 0.6),
    "education": (0.5, 0.3),
}


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of the generative model.

    ``selection_coefs`` is a logistic model in standardized true
    demographics; negative income weight under-samples the rich, etc.
    ``shrinkage`` is the fraction of each score's distance to the pooled
    sample mean that estimation removes (0 = estimates equal truth).
    """

    seed: int = 0
    n_communities: int = 50
    population_size: int = 1000
    sample_size: int = 200
    n_features: int = 24
    age_mean_range: tuple[float, float] = (32.0, 52.0)
    age_sd: float = 12.0
    gender_share_range: tuple[float, float] = (0.42, 0.58)
    education_share_range: tuple[float, float] = (0.25, 0.45)
    income_log_mean_range: tuple[float, float] = (math.log(28_000.0), math.log(60_000.0))
    income_log_sd: float = 0.55
    selection_intercept: float = 0.0
    selection_coefs: dict[str, float] = field(default_factory=lambda: {"income": -1.2})
    # per-community multiplier on the selection coefficients, drawn uniformly;
    # a non-degenerate range gives every community its own bias severity
    selection_strength_range: tuple[float, float] = (1.0, 1.0)
    feature_load_scale: float = 0.8
    outcome_name: str = "wellbeing"
    outcome_noise_sd: float = 0.1
    # 0 = outcome coefficients fully random; 1 = proportional to each
    # feature's loading on the first selection variable, so the outcome
    # rides exactly on the features the sampling bias distorts
    outcome_bias_alignment: float = 0.0
    shrinkage: float = 0.5

    def __post_init__(self) -> None:
        if self.population_size <= 0 or self.sample_size <= 0 or self.n_communities <= 0:
            raise ValueError("sizes must be positive")
        if self.sample_size > self.population_size:
            raise ValueError("cannot sample more individuals than the population holds")
        if not 0.0 <= self.shrinkage <= 1.0:
            raise ValueError("shrinkage must be in [0, 1]")
        for var in self.selection_coefs:
            if var not in _VARS:
                raise ValueError(f"unknown selection variable {var!r}")


@dataclass
class SynthData:
    """A biased sample plus the oracles that judge any correction of it."""

    dataset: Dataset
    oracle_means: dict[str, CommunityFeatures]
    true_demographics: dict[str, dict[str, float]]
    population_true: dict[str, dict[str, np.ndarray]]
    feature_ids: tuple[str, ...]


def _z(var: str, values: np.ndarray) -> np.ndarray:
    loc, scale = _STANDARDIZE[var]
    if var == "income":
        values = np.log(np.maximum(values, 1.0))
    return (values - loc) / scale


def generate(spec: SynthSpec) -> SynthData:
    """Generate the dataset and oracles; identical specs give identical data."""
    root = np.random.SeedSequence(spec.seed)
    streams = root.spawn(spec.n_communities + 1)
    g = np.random.default_rng(streams[0])

    C, P, S, F = spec.n_communities, spec.population_size, spec.sample_size, spec.n_features
    community_ids = [f"c{c:04d}" for c in range(C)]
    feature_ids = tuple(f"f{j:03d}" for j in range(F))

    age_mu = g.uniform(*spec.age_mean_range, C)
    gender_mu = g.uniform(*spec.gender_share_range, C)
    edu_mu = g.uniform(*spec.education_share_range, C)
    inc_mu = g.uniform(*spec.income_log_mean_range, C)
    strength = g.uniform(*spec.selection_strength_range, C)
    feature_base = g.normal(0.0, 1.0, F)
    feature_loads = g.normal(0.0, spec.feature_load_scale, (F, len(_VARS)))
    outcome_coef = g.normal(0.0, 1.0, F)
    if spec.outcome_bias_alignment > 0 and spec.selection_coefs:
        first = _VARS.index(sorted(spec.selection_coefs)[0])
        aligned = feature_loads[:, first].copy()
        aligned /= max(float(np.abs(aligned).max()), 1e-12)
        a = spec.outcome_bias_alignment
        outcome_coef = a * aligned * float(np.abs(outcome_coef).max()) + (1 - a) * outcome_coef

    margins: dict[tuple[str, str], MarginTable] = {}
    oracle_means: dict[str, CommunityFeatures] = {}
    sample_true: dict[str, np.ndarray] = {v: np.empty(C * S) for v in _VARS}
    sample_rates = np.empty((C * S, F))
    population_true: dict[str, dict[str, np.ndarray]] = {}

    parts = {v: census_partition(v) for v in _VARS}
    for c, cid in enumerate(community_ids):
        rng = np.random.default_rng(streams[c + 1])
        true = {
            "age": np.clip(rng.normal(age_mu[c], spec.age_sd, P), 13.0, 80.0),
            "gender": np.clip(rng.normal(gender_mu[c], 0.25, P), 0.0, 1.0),
            "income": np.clip(np.exp(rng.normal(inc_mu[c], spec.income_log_sd, P)), 0.0, 500_000.0),
            "education": np.clip(rng.normal(edu_mu[c], 0.25, P), 0.0, 1.0),
        }
        population_true[cid] = true

        for var in _VARS:
            edges = np.asarray(parts[var].edges)
            counts, _ = np.histogram(true[var], bins=edges)
            # top edge is closed; histogram already counts it that way
            margins[(cid, var)] = MarginTable(
                cid, var, parts[var], tuple((counts / counts.sum()).tolist())
            )

        Z = np.column_stack([_z(v, true[v]) for v in _VARS])
        rates = np.exp(feature_base + Z @ feature_loads.T)
        rel = rates / rates.sum(axis=1, keepdims=True)
        oracle_means[cid] = CommunityFeatures(cid, dict(zip(feature_ids, rel.mean(axis=0).tolist())))

        logit = spec.selection_intercept + strength[c] * sum(
            coef * _z(var, true[var]) for var, coef in spec.selection_coefs.items()
        )
        prob = 1.0 / (1.0 + np.exp(-np.asarray(logit, dtype=float)))
        if np.isscalar(logit) or np.ndim(logit) == 0:
            prob = np.full(P, float(prob))
        chosen = np.sort(rng.choice(P, size=S, replace=False, p=prob / prob.sum()))

        lo, hi = c * S, (c + 1) * S
        for var in _VARS:
            sample_true[var][lo:hi] = true[var][chosen]
        sample_rates[lo:hi] = rel[chosen]

    # estimation shrinks every score toward the pooled sample mean
    estimated: dict[str, np.ndarray] = {}
    for var in _VARS:
        if spec.shrinkage == 0.0:
            estimated[var] = sample_true[var].copy()
        else:
            pooled_mean = sample_true[var].mean()
            estimated[var] = pooled_mean + (1.0 - spec.shrinkage) * (sample_true[var] - pooled_mean)

    targets: dict[str, NationalTarget] = {}
    for var in _VARS:
        part = survey_partition(var)
        counts, _ = np.histogram(sample_true[var], bins=np.asarray(part.edges))
        targets[var] = NationalTarget(var, part, tuple((counts / counts.sum()).tolist()))

    individuals: list[Individual] = []
    features: dict[str, FeatureVector] = {}
    true_demographics: dict[str, dict[str, float]] = {}
    for c, cid in enumerate(community_ids):
        for s in range(S):
            row = c * S + s
            iid = f"{cid}_u{s:05d}"
            individuals.append(
                Individual(iid, cid, {v: float(estimated[v][row]) for v in _VARS})
            )
            features[iid] = dict(zip(feature_ids, sample_rates[row].tolist()))
            true_demographics[iid] = {v: float(sample_true[v][row]) for v in _VARS}

    signal = np.array(
        [
            sum(outcome_coef[j] * oracle_means[cid].means[fid] for j, fid in enumerate(feature_ids))
            for cid in community_ids
        ]
    )
    scale = signal.std() or 1.0
    noise = g.normal(0.0, spec.outcome_noise_sd * scale, C)
    outcome = OutcomeTable(
        spec.outcome_name, dict(zip(community_ids, (signal + noise).tolist()))
    )

    dataset = Dataset(
        individuals=individuals,
        features=features,
        margins=margins,
        targets=targets,
        outcomes={spec.outcome_name: outcome},
        provenance=f"seed={spec.seed}",
    )
    return SynthData(
        dataset=dataset,
        oracle_means=oracle_means,
        true_demographics=true_demographics,
        population_true=population_true,
        feature_ids=feature_ids,
    )
