import io
import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pathlasso.dataset import (
    ColumnMeta,
    ExclusionRule,
    PreparedDataset,
    VariableSpec,
    center_and_scale,
    load_schema,
    load_table,
    prepare_dataset,
    quartile_bin,
    schema_to_json,
    stratify,
    uncenter,
)
from pathlasso.errors import (
    DegenerateBinningError,
    EmptyDatasetError,
    EmptyStratumError,
    FormatError,
    SchemaError,
    TransformError,
)

SCHEMA = [
    VariableSpec("CVD", "binary", role="outcome"),
    VariableSpec("Age", "continuous"),
    VariableSpec("Waist", "continuous"),
    VariableSpec("Race", "categorical", reference_level="Other", levels=("MexAm", "White", "Black", "Other")),
]

TOY = b"""cvd,age,waist,race
0,40,90,White
1,65,,Black
0,22,80,Other
1,70,110,MexAm
0,35,95,Other
"""


def test_load_two_columns():
    raw = load_table(b"age,cvd\n30,1\n", [VariableSpec("CVD", "binary", role="outcome"),
                                         VariableSpec("Age", "continuous")])
    assert raw.columns == ("CVD", "Age")
    assert raw.rows == ((1.0, 30.0),)


def test_empty_cell_is_missing_not_zero():
    raw = load_table(TOY, SCHEMA)
    assert raw.column("Waist")[1] is None
    raw = load_table(b"cvd,age,waist,race\n0,NA,1,White\n", SCHEMA)
    assert raw.rows[0][1] is None


def test_missing_header_names_column():
    with pytest.raises(SchemaError, match="Waist"):
        load_table(b"cvd,age,race\n0,1,White\n", SCHEMA)


def test_duplicate_header():
    with pytest.raises(FormatError):
        load_table(b"cvd,age,Age,waist,race\n", SCHEMA)


def test_ragged_row():
    with pytest.raises(FormatError):
        load_table(b"cvd,age,waist,race\n0,1,2\n", SCHEMA)


def test_semicolon_delimiter_and_stream():
    raw = load_table(io.BytesIO(TOY.replace(b",", b";")), SCHEMA, delimiter=";")
    assert raw.n_rows == 5


def test_single_missing_row_removed():
    d, report = prepare_dataset(load_table(TOY, SCHEMA), SCHEMA)
    assert report.initial_n == 5 and report.final_n == 4
    assert sum(c for _, c in report.excluded_per_rule) == 1
    assert d.n == 4


def test_no_rules_no_missing_is_noop():
    raw = load_table(TOY.replace(b"65,,Black", b"65,100,Black"), SCHEMA)
    d, report = prepare_dataset(raw, SCHEMA)
    assert report.final_n == report.initial_n == 5
    assert report.excluded_per_rule == ()


def test_rules_apply_in_order_and_reconcile():
    raw = load_table(TOY, SCHEMA)
    rules = [ExclusionRule("min", ("Age",), 30.0), ExclusionRule("complete_case", ("Waist",))]
    d, report = prepare_dataset(raw, SCHEMA, rules)
    assert [c for _, c in report.excluded_per_rule] == [1, 1]
    assert report.final_n == 3
    # reversed order attributes the removals differently but reconciles the same
    _, rev = prepare_dataset(raw, SCHEMA, rules[::-1])
    assert [c for _, c in rev.excluded_per_rule] == [1, 1]
    assert rev.final_n == 3


def test_zero_rows_surviving():
    with pytest.raises(EmptyDatasetError):
        prepare_dataset(load_table(TOY, SCHEMA), SCHEMA, [ExclusionRule("min", ("Age",), 200.0)])


def test_dummy_encoding_reference_omitted():
    d, _ = prepare_dataset(load_table(TOY, SCHEMA), SCHEMA)
    assert d.labels == ["Age", "Waist", "Race[MexAm-Other]", "Race[White-Other]"]
    block = d.design[:, d.columns_of("Race")]
    assert set(block.sum(axis=1)) <= {0.0, 1.0}


def test_natural_log_and_error():
    schema = [SCHEMA[0], VariableSpec("Cd", "continuous", transform="natural_log")]
    d, _ = prepare_dataset(load_table(b"cvd,cd\n0,1\n1,2.718281828459045\n", schema), schema)
    np.testing.assert_allclose(d.design[:, 0], [0.0, 1.0])
    with pytest.raises(TransformError, match="Cd.*row 2"):
        prepare_dataset(load_table(b"cvd,cd\n0,1\n1,0\n", schema), schema)


def test_reference_level_must_be_observed():
    schema = [SCHEMA[0], VariableSpec("Race", "categorical", reference_level="Asian")]
    with pytest.raises(SchemaError):
        prepare_dataset(load_table(b"cvd,race\n0,White\n1,Black\n", schema), schema)


def test_schema_needs_one_binary_outcome():
    with pytest.raises(SchemaError):
        prepare_dataset(load_table(TOY, SCHEMA[1:]), SCHEMA[1:])


def test_quartiles_of_one_to_eight():
    assert quartile_bin(range(1, 9)) == ["Q1", "Q1", "Q2", "Q2", "Q3", "Q3", "Q4", "Q4"]


def test_quartiles_follow_rank():
    assert quartile_bin([3, 1, 4, 2]) == ["Q3", "Q1", "Q4", "Q2"]


def test_quartiles_constant():
    with pytest.raises(DegenerateBinningError):
        quartile_bin([5, 5, 5, 5])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(-20, 20), min_size=4, max_size=60).filter(lambda v: len(set(v)) > 1))
def test_quartile_bins_are_monotone_and_tie_consistent(values):
    bins = quartile_bin(values)
    order = {b: k for k, b in enumerate(["Q1", "Q2", "Q3", "Q4"])}
    pairs = sorted(zip(values, (order[b] for b in bins)))
    assert all(a[1] <= b[1] for a, b in zip(pairs, pairs[1:]))
    by_value = {}
    for v, b in pairs:
        by_value.setdefault(v, set()).add(b)
    assert all(len(s) == 1 for s in by_value.values())


def test_center_only_arithmetic():
    d = PreparedDataset.from_arrays(np.array([[1.0], [2.0], [3.0]]), [0, 1, 0])
    np.testing.assert_array_equal(center_and_scale(d).design[:, 0], [-1.0, 0.0, 1.0])


def test_standardize_drops_constant_column():
    X = np.column_stack([[1.0, 2.0, 4.0], [7.0, 7.0, 7.0]])
    d = PreparedDataset.from_arrays(X, [0, 1, 0])
    with pytest.warns(UserWarning, match="x2"):
        s = center_and_scale(d, "standardize")
    assert s.labels == ["x1"] and s.dropped_columns == ("x2",)
    assert abs(s.design[:, 0].std(ddof=1) - 1) < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(["center_only", "standardize"]))
def test_uncenter_round_trip(seed, mode):
    rng = np.random.default_rng(seed)
    X = rng.normal(50, 20, size=(30, 4))
    d = PreparedDataset.from_arrays(X, rng.integers(0, 2, 30))
    back = uncenter(center_and_scale(d, mode))
    np.testing.assert_allclose(back.design, X, rtol=0, atol=1e-12 * np.abs(X).max())


def smoking_fixture():
    """Smoking marginals of the study sample (never 1655, former 731, current 550)."""
    counts = {"Never": 1655, "Former": 731, "Current": 550}
    levels = np.repeat(list(counts), list(counts.values()))
    rng = np.random.default_rng(0)
    rows = [f"{rng.integers(0, 2)},{rng.normal(50, 10):.3f},{lvl}" for lvl in levels]
    schema = [VariableSpec("CVD", "binary", role="outcome"), VariableSpec("Age", "continuous"),
              VariableSpec("Smoking", "categorical", reference_level="Never",
                           levels=("Never", "Former", "Current"))]
    text = "cvd,age,smoking\n" + "\n".join(rows) + "\n"
    return prepare_dataset(load_table(text.encode(), schema), schema)[0]


def test_stratify_former_vs_never():
    s = stratify(smoking_fixture(), "Smoking", {"Former", "Never"})
    assert s.n == 1655 + 731
    assert s.labels[-1] == "Smoking[Former-Never]"
    assert s.parent_kinds["Smoking"] == "binary"
    assert s.strata_label == "Smoking: Former vs Never"


def test_stratify_current_binary_column():
    d = smoking_fixture()
    s = stratify(d, "Smoking", ["Current", "Never"])
    col = s.design[:, s.labels.index("Smoking[Current-Never]")]
    assert col.sum() == 550 and set(col) == {0.0, 1.0}


def test_stratify_all_levels_is_identity_in_rows():
    d = smoking_fixture()
    assert stratify(d, "Smoking", ["Never", "Former", "Current"]).n == d.n


def test_stratify_empty_level():
    with pytest.raises(EmptyStratumError):
        stratify(smoking_fixture(), "Smoking", ["Never", "Occasional"])


def test_prepare_is_deterministic():
    a, _ = prepare_dataset(load_table(TOY, SCHEMA), SCHEMA)
    b, _ = prepare_dataset(load_table(TOY, SCHEMA), SCHEMA)
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())


def test_prepared_dict_round_trip():
    d = smoking_fixture()
    back = PreparedDataset.from_dict(json.loads(json.dumps(d.to_dict())))
    np.testing.assert_array_equal(back.design, d.design)
    assert back.columns == d.columns and back.labels == d.labels
    np.testing.assert_array_equal(back.categories["Smoking"][0], d.categories["Smoking"][0])


def test_schema_json_round_trip():
    assert load_schema(json.loads(schema_to_json(SCHEMA))) == SCHEMA


def test_design_is_read_only():
    d = smoking_fixture()
    with pytest.raises(ValueError):
        d.design[0, 0] = 1.0
    assert isinstance(d.columns[0], ColumnMeta)
