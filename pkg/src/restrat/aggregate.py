"""Weighted aggregation of individual feature vectors to community means.

The estimate of a community's feature mean is the weight-scaled sum of its
members' relative frequencies divided by the member count (the weights are
multiplicative correction factors, not sampling weights, so the denominator
is N, not the weight total). Missing entries are structural zeros.

:func:`aggregate_features` is the reference implementation: per-feature sums
use exactly-rounded accumulation, so results are independent of member order.
:class:`FeatureIndex` is the throughput path for repeated aggregation of the
same dataset under many different weight assignments (grid searches), backed
by one sparse matrix.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import sparse

from .types import CommunityFeatures, FeatureVector, Individual, WeightAssignment

__all__ = ["aggregate_features", "FeatureIndex"]


def aggregate_features(
    individuals: list[Individual],
    features: dict[str, FeatureVector],
    weights: WeightAssignment,
) -> CommunityFeatures:
    """Weighted community feature means for one community."""
    n = len(individuals)
    if n == 0:
        raise ValueError("cannot aggregate an empty community")
    missing = [ind.individual_id for ind in individuals if ind.individual_id not in weights.weights]
    if missing:
        raise ValueError(f"weights missing for {len(missing)} members, e.g. {missing[0]!r}")

    contributions: dict[str, list[float]] = {}
    for ind in individuals:
        psi = weights.weights[ind.individual_id]
        for fid, freq in features.get(ind.individual_id, {}).items():
            contributions.setdefault(fid, []).append(psi * freq)

    means = {fid: math.fsum(vals) / n for fid, vals in contributions.items()}
    return CommunityFeatures(individuals[0].community_id, means)


class FeatureIndex:
    """Sparse individuals-by-features matrix grouped by community.

    Build once per dataset, then aggregate under any number of weight
    assignments without touching the per-individual dictionaries again.
    """

    def __init__(self, individuals: list[Individual], features: dict[str, FeatureVector]):
        self.feature_ids = sorted({fid for vec in features.values() for fid in vec})
        col = {fid: j for j, fid in enumerate(self.feature_ids)}

        by_community: dict[str, list[Individual]] = {}
        for ind in individuals:
            by_community.setdefault(ind.community_id, []).append(ind)
        self.community_ids = sorted(by_community)

        self.row_ids: list[str] = []
        self._slices: dict[str, slice] = {}
        rows: list[int] = []
        cols: list[int] = []
        vals: list[float] = []
        r = 0
        for cid in self.community_ids:
            start = r
            for ind in by_community[cid]:
                vec = features.get(ind.individual_id, {})
                for fid, freq in vec.items():
                    rows.append(r)
                    cols.append(col[fid])
                    vals.append(freq)
                self.row_ids.append(ind.individual_id)
                r += 1
            self._slices[cid] = slice(start, r)

        self.matrix = sparse.csr_matrix(
            (vals, (rows, cols)), shape=(r, len(self.feature_ids)), dtype=float
        )

    def aggregate(self, weights: dict[str, WeightAssignment]) -> dict[str, CommunityFeatures]:
        """Weighted means for every community; communities absent from
        ``weights`` get unit weights."""
        out: dict[str, CommunityFeatures] = {}
        for cid in self.community_ids:
            sl = self._slices[cid]
            n = sl.stop - sl.start
            assignment = weights.get(cid)
            if assignment is None:
                psi = np.ones(n)
            else:
                psi = np.array([assignment.weights[iid] for iid in self.row_ids[sl]])
            sums = psi @ self.matrix[sl]
            means = (np.asarray(sums).ravel() / n).tolist()
            out[cid] = CommunityFeatures(cid, dict(zip(self.feature_ids, means)))
        return out

    def matrix_of(self, aggregated: dict[str, CommunityFeatures]) -> np.ndarray:
        """Community-by-feature dense matrix in canonical order."""
        return np.array(
            [[aggregated[cid].means.get(fid, 0.0) for fid in self.feature_ids]
             for cid in self.community_ids]
        )
