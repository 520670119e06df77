"""Dataset loading, scaling, padding, and subsampling."""

import numpy as np
import pytest

from fedqkernel.datasets import (
    Dataset,
    Preprocessor,
    load_csv,
    load_dataset,
    pad_features,
    subsample,
    subsample_digits,
)
from fedqkernel.encodings import FeatureMapKind, FeatureMapSpec


# =============================================================================
# CSV loading
# =============================================================================

def write_csv(path, text):
    path.write_text(text.strip() + "\n", encoding="utf-8")
    return path


def test_load_csv_basic(tmp_path):
    path = write_csv(tmp_path / "toy.csv", """
a,b,target
1.0,2.0,yes
3.0,4.0,no
5.0,6.0,yes
""")
    ds = load_csv(path, "target")
    assert ds.features.shape == (3, 2)
    assert ds.num_classes == 2
    assert set(ds.labels.tolist()) <= {0, 1}


def test_load_csv_drops_bad_rows_and_warns(tmp_path):
    path = write_csv(tmp_path / "toy.csv", """
a,b,target
1.0,2.0,0
,4.0,1
5.0,6.0,0
""")
    with pytest.warns(UserWarning, match="dropped 1 rows"):
        ds = load_csv(path, "target")
    assert ds.features.shape == (2, 2)
    assert "dropped 1" in ds.provenance


def test_load_csv_drops_identifier_columns(tmp_path):
    path = write_csv(tmp_path / "toy.csv", """
name,a,target
s1,1.0,0
s2,2.0,1
""")
    ds = load_csv(path, "target")
    assert ds.features.shape == (2, 1)


def test_load_csv_missing_label_column(tmp_path):
    path = write_csv(tmp_path / "toy.csv", "a,b\n1,2\n")
    with pytest.raises(ValueError):
        load_csv(path, "target")


def test_load_csv_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_csv(tmp_path / "absent.csv", "target")


def test_load_csv_shape_check_warns(tmp_path):
    path = write_csv(tmp_path / "wine.csv", "a,target\n1,0\n2,1\n")
    with pytest.warns(UserWarning, match="differs from the expected"):
        load_csv(path, "target", name="wine")


# =============================================================================
# Registry datasets
# =============================================================================

def test_wine_shape():
    ds = load_dataset("wine")
    assert ds.features.shape == (178, 13)
    assert ds.num_classes == 3


def test_digits_shape_and_qubits():
    ds = load_dataset("digits")
    assert ds.features.shape == (1797, 64)
    assert FeatureMapSpec(FeatureMapKind.LINEAR, ds.num_features).num_qubits() == 6


def test_loading_is_deterministic():
    a, b = load_dataset("wine"), load_dataset("wine")
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.labels, b.labels)


def test_missing_local_dataset_points_at_fetch_script(tmp_path):
    with pytest.raises(FileNotFoundError, match="fetch_datasets"):
        load_dataset("parkinsons", data_dir=tmp_path)


def test_unknown_dataset():
    with pytest.raises(ValueError):
        load_dataset("nonesuch")


# =============================================================================
# Preprocessing
# =============================================================================

def test_minmax_scaling_example():
    pre = Preprocessor().fit(np.array([[0.0], [5.0], [10.0]]))
    assert np.allclose(pre.transform(np.array([[0.0], [5.0], [10.0]])).ravel(),
                       [0.0, 0.5, 1.0])


def test_constant_column_maps_to_half():
    pre = Preprocessor().fit(np.array([[3.0], [3.0], [3.0]]))
    assert np.allclose(pre.transform(np.array([[3.0], [7.0]])).ravel(), [0.5, 0.5])


def test_out_of_range_test_values_clipped():
    pre = Preprocessor().fit(np.array([[0.0], [10.0]]))
    out = pre.transform(np.array([[-5.0], [15.0]])).ravel()
    assert np.allclose(out, [0.0, 1.0])


def test_scaled_inner_products_nonnegative():
    rng = np.random.default_rng(0)
    raw = rng.normal(size=(30, 6)) * 10 - 3
    scaled = Preprocessor().fit_transform(raw)
    assert scaled.min() >= 0.0 and scaled.max() <= 1.0
    gram = scaled @ scaled.T
    assert gram.min() >= 0.0


def test_transform_before_fit_rejected():
    with pytest.raises(RuntimeError):
        Preprocessor().transform(np.ones((2, 2)))


# =============================================================================
# Padding
# =============================================================================

def test_pad_features_to_qubit_width():
    out = pad_features(np.ones(13), 4)
    assert out.size == 16
    assert np.allclose(out[13:], 0.0)


def test_pad_features_overflow():
    with pytest.raises(ValueError):
        pad_features(np.ones(13), 3)


def test_pad_features_exact_power_of_two():
    x = np.arange(8.0)
    assert np.array_equal(pad_features(x, 3), x)


# =============================================================================
# Subsampling
# =============================================================================

def test_subsample_digits_stratified():
    ds = load_dataset("digits")
    sub = subsample_digits(ds, count=100, seed=3)
    assert sub.num_samples == 100
    counts = np.bincount(sub.labels)
    assert np.all(np.abs(counts - 10) <= 1)


def test_subsample_deterministic():
    ds = load_dataset("digits")
    a = subsample_digits(ds, count=100, seed=3)
    b = subsample_digits(ds, count=100, seed=3)
    assert np.array_equal(a.features, b.features)
    c = subsample_digits(ds, count=100, seed=4)
    assert not np.array_equal(a.features, c.features)


def test_subsample_balanced():
    labels = np.array([0] * 90 + [1] * 10)
    ds = Dataset("skewed", np.arange(100, dtype=float).reshape(100, 1), labels)
    sub = subsample(ds, 16, seed=0, balanced=True)
    counts = np.bincount(sub.labels)
    assert counts[0] == counts[1] == 8


def test_subsample_count_too_large():
    ds = Dataset("tiny", np.ones((4, 1)), np.array([0, 0, 1, 1]))
    with pytest.raises(ValueError):
        subsample(ds, 5, seed=0)
