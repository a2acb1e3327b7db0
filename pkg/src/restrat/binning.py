"""Bin occupancy counting and adaptive merging of sparse bins.

Adaptive binning repairs the sparse-cell problem: adjacent bins are merged,
smallest first, until every bin holds at least a minimum number of sampled
individuals (or only one bin remains, in which case the variable contributes
no correction). Merging is per variable; coarsening one variable never
touches another's partition.
"""

from __future__ import annotations

from dataclasses import dataclass

from .types import Individual, MarginTable, Partition

__all__ = ["BinCounts", "count_per_bin", "count_values", "adaptive_bin", "project_margins"]


@dataclass(frozen=True)
class BinCounts:
    """Occupancy counts aligned with a partition's bins."""

    partition: Partition
    counts: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.counts) != len(self.partition):
            raise ValueError("counts misaligned with partition")
        if any(c < 0 for c in self.counts):
            raise ValueError("negative bin count")

    @property
    def total(self) -> int:
        return sum(self.counts)


def count_values(values: list[float], partition: Partition) -> BinCounts:
    counts = [0] * len(partition)
    for v in values:
        counts[partition.bin_index(v)] += 1
    return BinCounts(partition, tuple(counts))


def count_per_bin(individuals: list[Individual], partition: Partition) -> BinCounts:
    """Count community members per bin of ``partition``'s variable."""
    return count_values([ind.demographics[partition.variable] for ind in individuals], partition)


def adaptive_bin(bin_counts: BinCounts, min_bin_number: int) -> BinCounts:
    """Merge adjacent bins until every count reaches ``min_bin_number``.

    Each round takes the lowest-count bin (leftmost on ties) and combines it
    with its smaller adjacent neighbour (leftward on ties; edge bins have only
    one neighbour). Stops once all bins meet the threshold or a single bin
    remains. Total count is conserved.
    """
    if min_bin_number < 0:
        raise ValueError("min_bin_number must be >= 0")

    counts = list(bin_counts.counts)
    bins = list(bin_counts.partition.bins)

    while len(counts) > 1 and min(counts) < min_bin_number:
        i = counts.index(min(counts))
        if i == 0:
            j = 1
        elif i == len(counts) - 1:
            j = i - 1
        else:
            # merge with the smaller neighbour, leftward on ties
            j = i - 1 if counts[i - 1] <= counts[i + 1] else i + 1
        lo, hi = min(i, j), max(i, j)
        counts[lo:hi + 1] = [counts[lo] + counts[hi]]
        bins[lo:hi + 1] = [(bins[lo][0], bins[hi][1])]

    merged = Partition(bin_counts.partition.variable, tuple(bins))
    return BinCounts(merged, tuple(counts))


def project_margins(margins: MarginTable, merged: Partition) -> MarginTable:
    """Re-sum population percentages over a merged partition.

    ``merged`` must be a coarsening of the margin table's partition: every
    merged bin is the union of a consecutive run of original bins.
    """
    original = margins.partition
    if merged.variable != original.variable:
        raise ValueError("merged partition is for a different variable")
    if merged.lo != original.lo or merged.hi != original.hi:
        raise ValueError("merged partition does not cover the original range")

    pcts: list[float] = []
    i = 0
    for (lo, hi) in merged.bins:
        if original.bins[i][0] != lo:
            raise ValueError(f"merged bin [{lo}, {hi}) does not start on an original boundary")
        acc = 0.0
        while i < len(original.bins) and original.bins[i][1] <= hi:
            acc += margins.percentages[i]
            i += 1
        if not original.bins[i - 1][1] == hi:
            raise ValueError(f"merged bin [{lo}, {hi}) does not end on an original boundary")
        pcts.append(min(acc, 1.0))  # float accumulation can drift a hair past 1

    return MarginTable(margins.community_id, margins.variable, merged, tuple(pcts))
