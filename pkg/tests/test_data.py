import math

import numpy as np
import pytest

from textcate.data import (
    Dataset, DatasetFormatError, TestRecord, TextSurrogate, TrainRecord,
    read_jsonl, record_from_json, record_to_json, strip_covariates, validate_dataset, write_jsonl,
)
from textcate.dgp import DgpParams, generate


def _train(n=4, a=None):
    a = a if a is not None else [i % 2 for i in range(n)]
    recs = [TrainRecord(np.full(2, float(i)), a[i], float(i)) for i in range(n)]
    return Dataset(tuple(recs), 2)


def test_all_treated_reports_missing_control_arm():
    assert validate_dataset(_train(4, [1, 1, 1, 1])) == ["arm 0 absent"]


def test_nan_covariate_is_reported_with_index():
    recs = list(_train().records)
    recs[2] = TrainRecord(np.array([0.0, math.nan]), 0, 1.0)
    problems = validate_dataset(Dataset(tuple(recs), 2))
    assert problems == ["index 2: non-finite x"]


def test_generated_dataset_is_valid():
    ds = generate(DgpParams(n=100))
    assert set(ds.a.tolist()) == {0, 1}
    assert validate_dataset(ds) == []


def test_wrong_shape_and_bad_arm():
    recs = [TrainRecord(np.zeros(3), 0, 0.0), TrainRecord(np.zeros(2), 2, 0.0), TrainRecord(np.zeros(2), 1, 0.0)]
    problems = validate_dataset(Dataset(tuple(recs), 2))
    assert "index 0: x has shape (3,), expected (2,)" in problems
    assert any(p.startswith("index 1: treatment 2") for p in problems)


def test_mixed_record_kinds_flagged():
    recs = (TrainRecord(np.zeros(1), 0, 0.0), TestRecord(TextSurrogate("hi"), 1, 0.0))
    assert any("mixed" in p for p in validate_dataset(Dataset(recs, 1)))


def test_surrogate_invariants():
    with pytest.raises(ValueError):
        TextSurrogate("")
    with pytest.raises(ValueError):
        TextSurrogate("text", leaked_mask=(False, False))
    with pytest.raises(ValueError):
        TextSurrogate("text", prompt_family="Poetry")


def test_arrays_are_read_only_and_ordered():
    ds = _train(6)
    assert ds.y.tolist() == [0, 1, 2, 3, 4, 5]
    with pytest.raises(ValueError):
        ds.y[0] = 1.0
    assert ds.subset([4, 1]).y.tolist() == [4.0, 1.0]


def test_json_line_layout():
    r = TrainRecord(np.array([0.5, -1.0]), 1, 2.25, TextSurrogate("a b"), 0.1, {"sex": "F", "age": "O"})
    assert record_to_json(r) == (
        '{"x":[0.5,-1.0],"a":1,"y":2.25,"t":"a b","tau_true":0.1,"groups":{"age":"O","sex":"F"}}'
    )
    t = TestRecord(TextSurrogate("words"), 0, 1.0)
    assert record_to_json(t) == '{"x":null,"a":0,"y":1.0,"t":"words","tau_true":null,"groups":null}'


def test_round_trip_is_byte_stable(tmp_path):
    ds = generate(DgpParams(n=50, seed=3))
    p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_jsonl(ds, p1)
    back = read_jsonl(p1)
    write_jsonl(back, p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert np.array_equal(back.X, ds.X)
    assert np.array_equal(back.y, ds.y)


def test_stripped_records_have_no_covariates(tmp_path):
    ds = generate(DgpParams(n=10))
    ds = ds.with_surrogates([TextSurrogate(f"text {i}") for i in range(10)])
    test = strip_covariates(ds)
    assert all(isinstance(r, TestRecord) for r in test.records)
    assert not hasattr(test.records[0], "x")
    write_jsonl(test, tmp_path / "t.jsonl")
    assert read_jsonl(tmp_path / "t.jsonl").texts == ds.texts


@pytest.mark.parametrize("line, fragment", [
    ("{not json", "invalid JSON"),
    ("[1, 2]", "expected a JSON object"),
    ('{"x": [1.0], "y": 1.0}', "missing key 'a'"),
])
def test_parse_errors_name_the_line(line, fragment):
    with pytest.raises(DatasetFormatError) as err:
        record_from_json(line, 7)
    assert str(err.value).startswith("line 7:")
    assert fragment in str(err.value)


def test_read_jsonl_reports_line_number(tmp_path):
    p = tmp_path / "bad.jsonl"
    good = record_to_json(TrainRecord(np.zeros(1), 0, 0.0))
    p.write_text(good + "\n" + good + "\n" + "oops\n")
    with pytest.raises(DatasetFormatError, match="^line 3:"):
        read_jsonl(p)
