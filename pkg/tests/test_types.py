import pytest

from restrat.types import (
    CorrectionConfig,
    Individual,
    MarginTable,
    Partition,
    WeightAssignment,
    census_partition,
    survey_partition,
    validate_dataset,
    validate_feature_vector,
)


def test_census_partitions_have_standard_bin_counts():
    assert len(census_partition("age")) == 11
    assert len(census_partition("gender")) == 2
    assert len(census_partition("income")) == 10
    assert len(census_partition("education")) == 2


def test_survey_partitions_have_standard_bin_counts():
    assert len(survey_partition("age")) == 4
    assert len(survey_partition("gender")) == 2
    assert len(survey_partition("income")) == 4
    assert len(survey_partition("education")) == 3


def test_partition_bin_index_half_open_with_closed_top():
    part = Partition.from_edges("age", [13, 30, 50, 65, 80])
    assert part.bin_index(13) == 0
    assert part.bin_index(29.999) == 0
    assert part.bin_index(30) == 1
    assert part.bin_index(80) == 3  # top edge belongs to the final bin
    # out-of-range folds into edge bins
    assert part.bin_index(5) == 0
    assert part.bin_index(99) == 3


def test_partition_rejects_gaps_and_empty():
    with pytest.raises(ValueError):
        Partition("age", ((13.0, 30.0), (35.0, 80.0)))
    with pytest.raises(ValueError):
        Partition("age", ())
    with pytest.raises(ValueError):
        Partition("age", ((30.0, 30.0),))


def test_margin_table_alignment_checked():
    part = census_partition("gender")
    with pytest.raises(ValueError):
        MarginTable("c1", "gender", part, (0.2, 0.3, 0.5))
    m = MarginTable("c1", "gender", part, (0.4, 0.4))
    assert not m.sums_to_one
    assert m.normalized() == (0.5, 0.5)


def test_weight_assignment_requires_positive_finite():
    WeightAssignment("c1", {"u1": 0.5, "u2": 2.0})
    with pytest.raises(ValueError):
        WeightAssignment("c1", {"u1": 0.0})
    with pytest.raises(ValueError):
        WeightAssignment("c1", {"u1": float("inf")})


def test_correction_config_validation():
    cfg = CorrectionConfig(method="naive", variables=("income",), smoothing_k=10)
    assert "naive" in cfg.label()
    with pytest.raises(ValueError):
        CorrectionConfig(method="magic")
    with pytest.raises(ValueError):
        CorrectionConfig(variables=("shoe_size",))
    with pytest.raises(ValueError):
        CorrectionConfig(smoothing_k=-1)


def test_feature_vector_mass_bound():
    validate_feature_vector({"a": 0.4, "b": 0.6})
    validate_feature_vector({"a": 0.1})  # truncated vocabularies sum below 1
    with pytest.raises(ValueError):
        validate_feature_vector({"a": 0.7, "b": 0.7})
    with pytest.raises(ValueError):
        validate_feature_vector({"a": -0.1})


def _individual(iid, cid, age=30.0):
    return Individual(iid, cid, {"age": age, "gender": 0.5, "income": 40_000.0, "education": 0.3})


def test_validate_flags_small_communities():
    individuals = [_individual(f"u{i}", "small") for i in range(99)]
    report = validate_dataset(individuals, {}, [])
    assert report.small_communities == {"small": 99}
    assert not report.clean


def test_validate_empty_dataset_is_clean():
    report = validate_dataset([], {}, [])
    assert report.n_individuals == 0
    assert report.n_communities == 0
    assert report.clean


def test_validate_flags_bad_margin_sum():
    part = census_partition("gender")
    bad = MarginTable("c1", "gender", part, (0.48, 0.5))  # sums to 0.98
    individuals = [_individual(f"u{i}", "c1") for i in range(150)]
    report = validate_dataset(individuals, {}, [bad])
    assert len(report.invalid_margins) == 1
    assert "0.98" in report.invalid_margins[0]


def test_validate_flags_missing_demographics():
    broken = Individual("u0", "c1", {"age": 30.0})
    report = validate_dataset([broken], {}, [])
    assert report.missing_demographics == ("u0",)
