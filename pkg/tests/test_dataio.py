import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from spikelda.dataio import LabeledDataset, load_csv, load_features_csv, save_csv, train_test_split
from spikelda.errors import ParseError, SchemaError, SplitError, ValidationError


def write(tmp_path, text, name="d.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_small_file(tmp_path):
    ds = load_csv(write(tmp_path, "a,label,b\n1,x,2\n3,y,4.5\n"))
    np.testing.assert_array_equal(ds.features, [[1, 2], [3, 4.5]])
    assert ds.feature_names == ("a", "b")
    assert list(ds.labels) == ["x", "y"]


def test_na_cell_names_location(tmp_path):
    with pytest.raises(ParseError, match=r"row 2.*'b'"):
        load_csv(write(tmp_path, "a,b,label\n1,2,x\n3,NA,y\n"))


def test_empty_cell_is_error(tmp_path):
    with pytest.raises(ParseError):
        load_csv(write(tmp_path, "a,label\n,x\n"))


def test_duplicate_columns(tmp_path):
    with pytest.raises(SchemaError, match="duplicate"):
        load_csv(write(tmp_path, "a,a,label\n1,2,x\n"))


def test_missing_label_column(tmp_path):
    with pytest.raises(SchemaError):
        load_csv(write(tmp_path, "a,b\n1,2\n"))
    X, labels, names = load_features_csv(write(tmp_path, "a,b\n1,2\n", "f.csv"))
    assert labels is None and names == ("a", "b") and X.shape == (1, 2)


def test_custom_label_column_and_ragged_row(tmp_path):
    ds = load_csv(write(tmp_path, "class,v\nA,1\nB,2\n"), label_column="class")
    assert ds.classes == ("A", "B")
    with pytest.raises(ParseError):
        load_csv(write(tmp_path, "a,label\n1,x,3\n", "r.csv"))


def test_dataset_invariants():
    with pytest.raises(ValidationError):
        LabeledDataset(np.array([[np.inf]]), np.array([1]))
    with pytest.raises(ValidationError):
        LabeledDataset(np.ones((2, 2)), np.array([1]))
    ds = LabeledDataset(np.ones((3, 2)), np.array(["b", "a", "b"]))
    assert ds.classes == ("a", "b")
    np.testing.assert_array_equal(ds.y, [1, 0, 1])
    np.testing.assert_array_equal(ds.counts, [1, 2])
    assert ds.class_index == {"a": 0, "b": 1}


def test_features_read_only():
    ds = LabeledDataset(np.zeros((2, 2)), np.array([1, 2]))
    with pytest.raises(ValueError):
        ds.features[0, 0] = 1.0


def test_stratified_split():
    ds = LabeledDataset(np.arange(16.0).reshape(8, 2), np.array([1] * 4 + [2] * 4))
    tr, te = train_test_split(ds, 0.5, seed=3)
    assert list(tr.counts) == [2, 2] and list(te.counts) == [2, 2]
    tr2, te2 = train_test_split(ds, 0.5, seed=3)
    np.testing.assert_array_equal(tr.features, tr2.features)
    with pytest.raises(ValidationError):
        train_test_split(ds, 1.0)


def test_unstratified_split_can_empty_a_class():
    ds = LabeledDataset(np.zeros((11, 1)), np.array([1] * 10 + [2]))
    failures = 0
    for seed in range(20):
        try:
            train_test_split(ds, 0.5, seed=seed, stratified=False)
        except SplitError:
            failures += 1
    assert failures > 0


@given(arrays(np.float64, (4, 3), elements=st.floats(allow_nan=False, allow_infinity=False, width=64)))
def test_round_trip_is_bit_exact(tmp_path_factory, X):
    path = tmp_path_factory.mktemp("rt") / "x.csv"
    ds = LabeledDataset(X, np.array(["a", "b", "a", "b"]))
    save_csv(ds, path)
    back = load_csv(path)
    assert back.features.tobytes() == ds.features.tobytes()
    assert list(back.labels) == list(ds.labels)
