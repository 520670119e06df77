"""Dataset loading, min-max scaling, and qubit-width padding.

Named datasets resolve as follows: ``wine`` and ``digits`` come from
scikit-learn's bundled copies; ``parkinsons`` and ``framingham`` are read
from local CSV files (see ``scripts/fetch_datasets.py`` for provenance and
download). Features are min-max scaled into [0, 1] before encoding so that
amplitude-encoded overlaps are nonnegative, which is what lets the sign of
an inner product be recovered from a squared-overlap estimate.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd


#: Sample/feature counts the named datasets are expected to have. A
#: mismatch is reported as a warning, not an error; the public copies of
#: parkinsons (195 x 22) differ slightly from the sizes usually quoted.
EXPECTED_SHAPES = {
    "wine": (178, 13),
    "parkinsons": (197, 23),
    "framingham": (4238, 15),
    "digits": (1797, 64),
}

LABEL_COLUMNS = {
    "parkinsons": "status",
    "framingham": "TenYearCHD",
}


@dataclass
class Dataset:
    name: str
    features: np.ndarray   # (samples, input_dim) float64
    labels: np.ndarray     # (samples,) int64, contiguous from 0
    provenance: str = ""

    @property
    def num_samples(self) -> int:
        return self.features.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0


def _contiguous_labels(raw) -> np.ndarray:
    values, labels = np.unique(np.asarray(raw), return_inverse=True)
    del values
    return labels.astype(np.int64)


def load_csv(path, label_column: str, name: str | None = None) -> Dataset:
    """Load a feature/label table from CSV.

    Non-numeric columns other than the label are dropped (identifier
    columns like a sample name). Rows with missing or non-finite values
    are dropped and counted. When ``name`` matches a known dataset the
    shape is checked against the expected one and a mismatch warns.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    frame = pd.read_csv(path)
    if label_column not in frame.columns:
        raise ValueError(f"label column {label_column!r} not in {list(frame.columns)}")
    labels_raw = frame[label_column]
    features = frame.drop(columns=[label_column])
    non_numeric = [c for c in features.columns
                   if not pd.api.types.is_numeric_dtype(features[c])]
    features = features.drop(columns=non_numeric)
    matrix = features.to_numpy(dtype=np.float64)
    keep = np.isfinite(matrix).all(axis=1) & pd.notna(labels_raw).to_numpy()
    dropped = int((~keep).sum())
    if dropped:
        warnings.warn(f"{path.name}: dropped {dropped} rows with missing values")
    matrix = matrix[keep]
    labels = _contiguous_labels(labels_raw.to_numpy()[keep])
    dataset = Dataset(
        name=name or path.stem,
        features=matrix,
        labels=labels,
        provenance=f"csv:{path}" + (f" (dropped {dropped} rows)" if dropped else ""),
    )
    if name in EXPECTED_SHAPES and dataset.features.shape != EXPECTED_SHAPES[name]:
        warnings.warn(
            f"{name}: loaded shape {dataset.features.shape} differs from the "
            f"expected {EXPECTED_SHAPES[name]}")
    return dataset


def load_dataset(ref: str, data_dir="data", label_column: str | None = None) -> Dataset:
    """Resolve a dataset by registry name or CSV path."""
    key = str(ref).lower()
    if key == "wine":
        from sklearn.datasets import load_wine

        raw = load_wine()
        return Dataset("wine", raw.data.astype(np.float64),
                       _contiguous_labels(raw.target), "sklearn:load_wine")
    if key == "digits":
        from sklearn.datasets import load_digits

        raw = load_digits()
        return Dataset("digits", raw.data.astype(np.float64),
                       _contiguous_labels(raw.target), "sklearn:load_digits")
    if key in ("parkinsons", "framingham", "heart"):
        name = "framingham" if key == "heart" else key
        path = Path(data_dir) / f"{name}.csv"
        if not path.exists():
            raise FileNotFoundError(
                f"{name} is not bundled; run scripts/fetch_datasets.py to place it at {path}")
        return load_csv(path, label_column or LABEL_COLUMNS[name], name=name)
    path = Path(ref)
    if path.suffix == ".csv" or path.exists():
        if label_column is None:
            raise ValueError("loading a CSV path requires a label column name")
        return load_csv(path, label_column)
    raise ValueError(f"unknown dataset {ref!r}")


class Preprocessor:
    """Per-feature min-max scaler fit on training data only.

    Transformed training data lies in [0, 1]; test data is clipped into
    [0, 1]. Constant columns map to 0.5 by convention.
    """

    def __init__(self):
        self.minimum = None
        self.span = None

    def fit(self, features) -> "Preprocessor":
        features = np.asarray(features, dtype=np.float64)
        self.minimum = features.min(axis=0)
        self.span = features.max(axis=0) - self.minimum
        return self

    def transform(self, features) -> np.ndarray:
        if self.minimum is None:
            raise RuntimeError("fit before transform")
        features = np.asarray(features, dtype=np.float64)
        constant = self.span == 0.0
        span = np.where(constant, 1.0, self.span)
        scaled = (features - self.minimum) / span
        scaled[:, constant] = 0.5
        return np.clip(scaled, 0.0, 1.0)

    def fit_transform(self, features) -> np.ndarray:
        return self.fit(features).transform(features)


def pad_features(x, num_qubits: int) -> np.ndarray:
    """Zero-pad a feature vector to length ``2**num_qubits``."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    dim = 1 << num_qubits
    if x.size > dim:
        raise ValueError(f"{x.size} features do not fit in {num_qubits} qubits")
    padded = np.zeros(dim, dtype=np.float64)
    padded[: x.size] = x
    return padded


def subsample(dataset: Dataset, count: int, seed: int, balanced: bool = False) -> Dataset:
    """Deterministic class-aware random subset.

    ``balanced=False`` keeps class proportions (stratified); ``balanced=True``
    draws the same number of samples per class, which matters for heavily
    skewed binary sets where accuracy is otherwise dominated by the
    majority class.
    """
    if count > dataset.num_samples:
        raise ValueError(f"cannot subsample {count} of {dataset.num_samples} rows")
    rng = np.random.default_rng(seed)
    classes = np.unique(dataset.labels)
    chosen = []
    if balanced:
        per_class = count // classes.size
        for cls in classes:
            idx = np.flatnonzero(dataset.labels == cls)
            if idx.size < per_class:
                raise ValueError(f"class {cls} has only {idx.size} samples, need {per_class}")
            chosen.append(rng.permutation(idx)[:per_class])
    else:
        # Largest-remainder apportionment keeps proportions within one sample.
        fractions = np.array([np.count_nonzero(dataset.labels == c) for c in classes],
                             dtype=np.float64) * count / dataset.num_samples
        takes = np.floor(fractions).astype(int)
        order = np.argsort(-(fractions - takes))
        for k in range(count - takes.sum()):
            takes[order[k]] += 1
        for cls, take in zip(classes, takes):
            idx = np.flatnonzero(dataset.labels == cls)
            chosen.append(rng.permutation(idx)[:take])
    picked = np.sort(np.concatenate(chosen))
    return Dataset(
        name=dataset.name,
        features=dataset.features[picked],
        labels=_contiguous_labels(dataset.labels[picked]),
        provenance=dataset.provenance + f" (subsample {len(picked)}, seed {seed}"
                   + (", balanced)" if balanced else ")"),
    )


def subsample_digits(dataset: Dataset, count: int = 100, seed: int = 0) -> Dataset:
    """Stratified subset of the digits set used by the shot-sweep runs."""
    return subsample(dataset, count, seed, balanced=False)
