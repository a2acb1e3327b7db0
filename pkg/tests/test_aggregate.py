import numpy as np
import pytest

from restrat.aggregate import FeatureIndex, aggregate_features
from restrat.types import Individual, WeightAssignment


def _people(freqs, cid="c1"):
    individuals = [Individual(f"u{i}", cid, {"age": 30.0}) for i in range(len(freqs))]
    features = {f"u{i}": {"f0": freq} for i, freq in enumerate(freqs)}
    return individuals, features


def test_unit_weights_are_plain_mean():
    individuals, features = _people([0.2, 0.4])
    weights = WeightAssignment("c1", {"u0": 1.0, "u1": 1.0})
    got = aggregate_features(individuals, features, weights)
    assert got.means["f0"] == pytest.approx(0.3, abs=1e-15)


def test_weighted_sum_divides_by_community_size():
    # the denominator is N, not the weight total: a negligible second weight
    # leaves only the first member's contribution over both members
    individuals, features = _people([0.2, 0.4])
    weights = WeightAssignment("c1", {"u0": 2.0, "u1": 1e-12})
    got = aggregate_features(individuals, features, weights)
    assert got.means["f0"] == pytest.approx(0.2, abs=1e-12)


def test_matches_double_loop_oracle():
    rng = np.random.default_rng(17)
    n, f = 100, 15
    individuals = [Individual(f"u{i:03d}", "c1", {"age": 30.0}) for i in range(n)]
    ids = [ind.individual_id for ind in individuals]
    features = {}
    for iid in ids:
        raw = rng.uniform(0, 1, f)
        raw /= raw.sum() * rng.uniform(1.0, 2.0)
        kept = rng.choice(f, size=rng.integers(1, f), replace=False)
        features[iid] = {f"f{j:02d}": float(raw[j]) for j in sorted(kept)}
    psi = {iid: float(w) for iid, w in zip(ids, rng.uniform(0.2, 3.0, n))}
    got = aggregate_features(individuals, features, WeightAssignment("c1", psi))

    oracle = {}
    for iid in ids:
        for fid, freq in features[iid].items():
            oracle[fid] = oracle.get(fid, 0.0) + psi[iid] * freq
    for fid, total in oracle.items():
        assert got.means[fid] == pytest.approx(total / n, abs=1e-12)


def test_linearity():
    rng = np.random.default_rng(3)
    n = 60
    individuals = [Individual(f"u{i:02d}", "c1", {"age": 30.0}) for i in range(n)]
    f_vals = rng.uniform(0, 0.4, n)
    g_vals = rng.uniform(0, 0.4, n)
    a, b = 0.7, 0.25
    feats = {
        ind.individual_id: {
            "f": float(f_vals[i]),
            "g": float(g_vals[i]),
            "combo": float(a * f_vals[i] + b * g_vals[i]),
        }
        for i, ind in enumerate(individuals)
    }
    psi = WeightAssignment("c1", {ind.individual_id: float(w) for ind, w in zip(individuals, rng.uniform(0.5, 2, n))})
    got = aggregate_features(individuals, feats, psi)
    assert got.means["combo"] == pytest.approx(a * got.means["f"] + b * got.means["g"], abs=1e-10)


def test_permutation_invariance_is_exact():
    rng = np.random.default_rng(23)
    n = 500
    individuals = [Individual(f"u{i:03d}", "c1", {"age": 30.0}) for i in range(n)]
    features = {
        ind.individual_id: {"f0": float(v)} for ind, v in zip(individuals, rng.uniform(0, 0.9, n))
    }
    psi = WeightAssignment(
        "c1", {ind.individual_id: float(w) for ind, w in zip(individuals, rng.uniform(0.1, 5, n))}
    )
    forward = aggregate_features(individuals, features, psi)
    shuffled = individuals[::-1]
    backward = aggregate_features(shuffled, features, psi)
    assert forward.means["f0"] == backward.means["f0"]  # bitwise, not approx


def test_errors():
    with pytest.raises(ValueError):
        aggregate_features([], {}, WeightAssignment("c1", {"u0": 1.0}))
    individuals, features = _people([0.2, 0.4])
    with pytest.raises(ValueError):
        aggregate_features(individuals, features, WeightAssignment("c1", {"u0": 1.0}))


def test_feature_index_parity_and_unit_default():
    rng = np.random.default_rng(5)
    individuals = []
    features = {}
    for c in range(3):
        for i in range(40):
            iid = f"c{c}_u{i:02d}"
            individuals.append(Individual(iid, f"c{c}", {"age": 30.0}))
            features[iid] = {
                f"f{j}": float(v) for j, v in enumerate(rng.uniform(0, 0.2, 4)) if v > 0.02
            }
    weights = {
        f"c{c}": WeightAssignment(
            f"c{c}",
            {f"c{c}_u{i:02d}": float(w) for i, w in enumerate(rng.uniform(0.3, 2.5, 40))},
        )
        for c in range(2)  # community c2 left out on purpose
    }
    index = FeatureIndex(individuals, features)
    fast = index.aggregate(weights)

    by_cid = {}
    for ind in individuals:
        by_cid.setdefault(ind.community_id, []).append(ind)
    for cid in ("c0", "c1"):
        slow = aggregate_features(by_cid[cid], features, weights[cid])
        for fid, value in slow.means.items():
            assert fast[cid].means[fid] == pytest.approx(value, abs=1e-12)
    unit = aggregate_features(
        by_cid["c2"], features, WeightAssignment("c2", {i.individual_id: 1.0 for i in by_cid["c2"]})
    )
    for fid, value in unit.means.items():
        assert fast["c2"].means[fid] == pytest.approx(value, abs=1e-12)
