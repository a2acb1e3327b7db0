"""Per-individual correction factors.

A correction factor is the ratio of a cell's population share to its sample
share. The population side comes from known margins; the sample side is
counted from the community's members, optionally padded with ``k`` pseudo
individuals drawn from the population distribution (informed smoothing) so
sparse cells stop producing extreme weights.

Three methods estimate the reweighting numerator:

* ``full``: per-variable post-stratification. Joint population margins are
  not available from per-variable census tables, so the joint correction
  degenerates to a product of per-variable ratios.
* ``naive``: the joint population distribution is the independence product
  of the margins; the sample side is the community's empirical joint cell.
* ``raking``: the sample marginals are iteratively scaled to the population
  margins (iterative proportional fitting) and each variable contributes the
  ratio of its adjusted marginal to its sample marginal.

The fixed per-community pipeline is: redistribution (fit on the pooled
national sample) -> per-variable adaptive binning with margin projection ->
joint estimation -> informed smoothing of the sample side -> cell ratios ->
optional normalization to mean weight 1.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .binning import adaptive_bin, count_per_bin, project_margins
from .redistribute import SourceBinBoundaries, build_source_bins, redistribute_scores
from .types import (
    CorrectionConfig,
    Individual,
    MarginTable,
    NationalTarget,
    Partition,
    WeightAssignment,
)

__all__ = [
    "JointCellTable",
    "UndefinedCellError",
    "RakingError",
    "StructuralZeroError",
    "cell_weight",
    "naive_joint",
    "rake",
    "smooth_sample_prob",
    "assign_weights",
    "correct_dataset",
    "CorrectionResult",
]


class UndefinedCellError(ValueError):
    """A cell's sample share is zero and no smoothing is in effect."""

    def __init__(self, cell):
        self.cell = cell
        super().__init__(f"correction factor undefined for empty sample cell {cell!r}")


class RakingError(RuntimeError):
    """Raking failed to converge within the iteration budget."""

    def __init__(self, deviation: float, max_iter: int):
        self.deviation = deviation
        self.max_iter = max_iter
        super().__init__(
            f"raking did not converge after {max_iter} iterations "
            f"(max marginal deviation {deviation:.3e})"
        )


class StructuralZeroError(RuntimeError):
    """An all-zero sample slice blocks a positive marginal target."""

    def __init__(self, axis: int, variable: str, bin_index: int):
        self.axis = axis
        self.variable = variable
        self.bin_index = bin_index
        super().__init__(
            f"axis {axis} ({variable}) bin {bin_index} has zero sample mass "
            f"but a positive target"
        )


@dataclass(frozen=True)
class JointCellTable:
    """Dense joint table over one partition per axis."""

    axes: tuple[tuple[str, Partition], ...]
    cells: np.ndarray

    def __post_init__(self) -> None:
        expected = tuple(len(p) for _, p in self.axes)
        if self.cells.shape != expected:
            raise ValueError(f"cell shape {self.cells.shape} != axis bins {expected}")
        if np.any(self.cells < 0) or not np.all(np.isfinite(self.cells)):
            raise ValueError("cells must be non-negative and finite")

    @property
    def is_probability(self) -> bool:
        return abs(float(self.cells.sum()) - 1.0) <= 1e-9

    def marginal(self, axis: int) -> np.ndarray:
        others = tuple(i for i in range(self.cells.ndim) if i != axis)
        return self.cells.sum(axis=others)


def cell_weight(pop_pct: float, samp_pct: float, cell=None) -> float:
    """Correction factor for one cell: population share over sample share."""
    if pop_pct < 0 or samp_pct < 0:
        raise ValueError("percentages must be non-negative")
    if samp_pct == 0.0:
        raise UndefinedCellError(cell)
    return pop_pct / samp_pct


def naive_joint(marginals: list[tuple[Partition, tuple[float, ...]]]) -> JointCellTable:
    """Joint distribution under the independence assumption (outer product)."""
    if not marginals:
        raise ValueError("need at least one marginal")
    cells = np.array(1.0)
    axes = []
    for part, pcts in marginals:
        if len(pcts) != len(part):
            raise ValueError(f"marginal for {part.variable!r} misaligned with partition")
        cells = np.multiply.outer(cells, np.asarray(pcts, dtype=float))
        axes.append((part.variable, part))
    return JointCellTable(tuple(axes), cells.reshape(tuple(len(p) for _, p in axes)))


def smooth_sample_prob(n_s: int | float, n_i: int | float, pop_prob: float, k: float) -> float:
    """Sample share padded with ``k`` pseudo individuals from the population.

    At ``k = 0`` this is the raw share; as ``k`` grows it converges to the
    population share, driving correction factors to 1.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if not 0 <= n_s <= n_i:
        raise ValueError(f"need 0 <= n_s <= n_i, got n_s={n_s}, n_i={n_i}")
    if not 0 <= pop_prob <= 1:
        raise ValueError(f"pop_prob must be in [0, 1], got {pop_prob}")
    if n_i == 0 and k == 0:
        raise ZeroDivisionError("empty sample with no smoothing")
    if k == 0:
        return n_s / n_i
    return (n_s + k * pop_prob) / (n_i + k)


def rake(
    sample_joint: JointCellTable,
    target_marginals: list[tuple[float, ...]] | list[np.ndarray],
    tol: float = 1e-6,
    max_iter: int = 500,
) -> JointCellTable:
    """Iterative proportional fitting of a joint table to marginal targets.

    Axes are rescaled in turn until every marginal of the (normalized) table
    matches its target within ``tol`` in max-absolute deviation.
    """
    cells = np.asarray(sample_joint.cells, dtype=float)
    if cells.sum() <= 0:
        raise ValueError("sample table has no mass")
    targets = [np.asarray(t, dtype=float) for t in target_marginals]
    if len(targets) != cells.ndim:
        raise ValueError(f"{len(targets)} targets for {cells.ndim} axes")
    for axis, t in enumerate(targets):
        if t.shape != (cells.shape[axis],):
            raise ValueError(f"target for axis {axis} misaligned")
        if abs(float(t.sum()) - 1.0) > 1e-9:
            raise ValueError(f"target for axis {axis} sums to {t.sum()}, expected 1")

    # a zero sample slice can never be scaled up to a positive target
    for axis, t in enumerate(targets):
        slice_mass = _marginal(cells, axis)
        blocked = (slice_mass == 0) & (t > 0)
        if np.any(blocked):
            bin_index = int(np.argmax(blocked))
            raise StructuralZeroError(axis, sample_joint.axes[axis][0], bin_index)

    table = cells / cells.sum()
    deviation = math.inf
    for _ in range(max_iter + 1):
        deviation = max(
            float(np.max(np.abs(_marginal(table, axis) - t)))
            for axis, t in enumerate(targets)
        )
        if deviation < tol:
            return JointCellTable(sample_joint.axes, table)
        for axis, t in enumerate(targets):
            marg = _marginal(table, axis)
            factor = np.divide(t, marg, out=np.zeros_like(t), where=marg > 0)
            table = table * _expand(factor, table.ndim, axis)
        table = table / table.sum()
    raise RakingError(deviation, max_iter)


def _marginal(cells: np.ndarray, axis: int) -> np.ndarray:
    others = tuple(i for i in range(cells.ndim) if i != axis)
    return cells.sum(axis=others) if others else cells


def _expand(vec: np.ndarray, ndim: int, axis: int) -> np.ndarray:
    shape = [1] * ndim
    shape[axis] = len(vec)
    return vec.reshape(shape)


# ---------------------------------------------------------------------------
# Community weight assignment
# ---------------------------------------------------------------------------


@dataclass
class CorrectionResult:
    """Weights per community plus the (possibly redistributed) individuals."""

    weights: dict[str, WeightAssignment]
    individuals: list[Individual]
    source_bins: dict[str, SourceBinBoundaries] = field(default_factory=dict)
    uncorrectable: dict[str, str] = field(default_factory=dict)


def _merged_tables(
    individuals: list[Individual],
    variables: tuple[str, ...],
    margins: dict[str, MarginTable],
    min_bin: int,
):
    """Adaptive binning per variable plus matching projected population shares."""
    out = []
    for var in variables:
        if var not in margins:
            raise ValueError(f"no margin table for configured variable {var!r}")
        margin = margins[var]
        base = MarginTable(margin.community_id, var, margin.partition, margin.normalized())
        counts = adaptive_bin(count_per_bin(individuals, base.partition), min_bin)
        projected = project_margins(base, counts.partition)
        out.append((var, counts, projected))
    return out


def assign_weights(
    individuals: list[Individual],
    config: CorrectionConfig,
    margins: dict[str, MarginTable],
    targets: dict[str, NationalTarget] | None = None,
    source_bins: dict[str, SourceBinBoundaries] | None = None,
    rake_tol: float = 1e-6,
    rake_max_iter: int = 500,
) -> WeightAssignment:
    """Correction factors for the members of one community.

    ``margins`` maps variable name to this community's margin table. When
    ``config.redistribute`` is set, ``source_bins`` must hold boundaries fit
    on the pooled national sample (see :func:`correct_dataset`); fitting them
    per community would re-introduce the bias redistribution removes.
    """
    if not individuals:
        raise ValueError("no individuals in community")
    community_id = individuals[0].community_id

    if config.redistribute:
        if not targets:
            raise ValueError("redistribution requires national targets")
        if source_bins is None:
            raise ValueError(
                "redistribution must be fit on the pooled national sample; "
                "pass source_bins or use correct_dataset()"
            )
        individuals = _apply_redistribution(individuals, targets, source_bins)

    weights, reason = _correction_factors(individuals, config, margins, rake_tol, rake_max_iter)
    if reason is not None:
        warnings.warn(f"community {community_id}: {reason}; weights set to 1", stacklevel=2)
        weights = {ind.individual_id: 1.0 for ind in individuals}

    if config.normalize_weights:
        mean = sum(weights.values()) / len(weights)
        weights = {iid: w / mean for iid, w in weights.items()}

    return WeightAssignment(community_id, weights)


def _apply_redistribution(
    individuals: list[Individual],
    targets: dict[str, NationalTarget],
    source_bins: dict[str, SourceBinBoundaries],
) -> list[Individual]:
    for var, target in targets.items():
        if var not in source_bins:
            continue
        scores = [ind.demographics[var] for ind in individuals]
        mapped = redistribute_scores(scores, source_bins[var], target)
        individuals = [
            ind.with_demographics({var: float(v)}) for ind, v in zip(individuals, mapped)
        ]
    return individuals


def _correction_factors(
    individuals: list[Individual],
    config: CorrectionConfig,
    margins: dict[str, MarginTable],
    rake_tol: float,
    rake_max_iter: int,
) -> tuple[dict[str, float], str | None]:
    """Raw (unnormalized) weights, or a reason the community is uncorrectable."""
    n = len(individuals)
    if not config.variables:
        return {ind.individual_id: 1.0 for ind in individuals}, None

    tables = _merged_tables(individuals, config.variables, margins, config.min_bin_threshold)
    k = config.smoothing_k

    if config.method == "naive":
        pop_joint = naive_joint([(proj.partition, proj.percentages) for _, _, proj in tables])
        member_cells = [
            tuple(counts.partition.bin_index(ind.demographics[var]) for var, counts, _ in tables)
            for ind in individuals
        ]
        cell_counts: dict[tuple[int, ...], int] = {}
        for cell in member_cells:
            cell_counts[cell] = cell_counts.get(cell, 0) + 1
        psi_by_cell: dict[tuple[int, ...], float] = {}
        for cell, count in cell_counts.items():
            pop = float(pop_joint.cells[cell])
            samp = smooth_sample_prob(count, n, pop, k)
            psi_by_cell[cell] = cell_weight(pop, samp, cell)
        weights = {
            ind.individual_id: psi_by_cell[cell] for ind, cell in zip(individuals, member_cells)
        }
    else:
        # full post-stratification and raking both produce per-variable factors;
        # raking feeds the smoothed sample marginals through IPF and uses the
        # adjusted marginal as numerator, full uses the population margin itself
        pops: list[np.ndarray] = []
        smoothed: list[np.ndarray] = []
        for var, counts, projected in tables:
            pop = np.asarray(projected.percentages, dtype=float)
            pops.append(pop)
            smoothed.append(
                np.array([smooth_sample_prob(c, n, p, k) for c, p in zip(counts.counts, pop)])
            )
        if config.method == "raking":
            joint = naive_joint(
                [(counts.partition, tuple(q)) for (_, counts, _), q in zip(tables, smoothed)]
            )
            adjusted = rake(joint, [tuple(p) for p in pops], tol=rake_tol, max_iter=rake_max_iter)
            numerators = [adjusted.marginal(i) for i in range(len(tables))]
        else:
            numerators = pops
        factors: list[np.ndarray] = []
        for (var, counts, _), numer, samp in zip(tables, numerators, smoothed):
            occupied = np.asarray(counts.counts) > 0
            factor = np.ones(len(samp))
            factor[occupied] = numer[occupied] / samp[occupied]
            factors.append(factor)
        weights = {}
        for ind in individuals:
            psi = 1.0
            for (var, counts, _), factor in zip(tables, factors):
                psi *= float(factor[counts.partition.bin_index(ind.demographics[var])])
            weights[ind.individual_id] = psi

    bad = [iid for iid, w in weights.items() if not (math.isfinite(w) and w > 0)]
    if bad:
        return {}, f"{len(bad)} members landed in cells with zero population share"
    return weights, None


def correct_dataset(
    individuals: list[Individual],
    margins: dict[tuple[str, str], MarginTable],
    targets: dict[str, NationalTarget],
    config: CorrectionConfig,
    redistribution_step: float | None = None,
) -> CorrectionResult:
    """Run the full correction over every community in a dataset.

    ``margins`` maps ``(community_id, variable)`` to the margin table. When
    redistribution is on, source bins are fit once on the pooled sample for
    every variable with a national target, then applied community by
    community.
    """
    source_bins: dict[str, SourceBinBoundaries] = {}
    warped = individuals
    if config.redistribute:
        if not targets:
            raise ValueError("redistribution requires national targets")
        for var, target in targets.items():
            scores = [ind.demographics[var] for ind in individuals]
            source_bins[var] = build_source_bins(scores, target, step=redistribution_step)
        warped = _apply_redistribution(individuals, targets, source_bins)

    by_community: dict[str, list[Individual]] = {}
    for ind in warped:
        by_community.setdefault(ind.community_id, []).append(ind)

    weights: dict[str, WeightAssignment] = {}
    uncorrectable: dict[str, str] = {}
    for cid in sorted(by_community):
        members = by_community[cid]
        community_margins = {
            var: margins[(cid, var)] for var in config.variables if (cid, var) in margins
        }
        # redistribution already applied above on the pooled sample
        raw, reason = _correction_factors(members, config, community_margins, 1e-6, 500)
        if reason is not None:
            uncorrectable[cid] = reason
            raw = {ind.individual_id: 1.0 for ind in members}
        if config.normalize_weights:
            mean = sum(raw.values()) / len(raw)
            raw = {iid: w / mean for iid, w in raw.items()}
        weights[cid] = WeightAssignment(cid, raw)

    return CorrectionResult(weights, warped, source_bins, uncorrectable)
