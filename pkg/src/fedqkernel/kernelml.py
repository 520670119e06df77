"""Gram-matrix assembly and the classical models trained on top of it.

Three interchangeable kernel sources feed the same solvers:

* EXACT_CLASSICAL: the closed-form kernel.
* EXACT_QUANTUM: exact overlaps of the encoded states (an ideal,
  infinite-shot swap test at a single site).
* PROTOCOL: finite-shot estimates from full distributed sessions.

Sign recovery: a swap test yields the squared overlap, so the inner
product's sign is lost. Features are min-max scaled to [0, 1] upstream,
making amplitude-encoded overlaps nonnegative, and the protocol kernel is
defined as ``sqrt(clip(estimate, 0, 1))`` rescaled by the classical norm
factors (the SQRT_FIDELITY convention). See ``KernelConvention`` for the
two fidelity-valued alternatives.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .datasets import Preprocessor
from .encodings import (
    FeatureMapKind,
    FeatureMapSpec,
    encode_point,
    sample_rff,
)
from .protocol import CircuitMode, SessionConfig, run_session
from .seeding import derive_seed, rng_for
from .simulator import NoiseModel


class GramSource(Enum):
    EXACT_CLASSICAL = "EXACT_CLASSICAL"
    EXACT_QUANTUM = "EXACT_QUANTUM"
    PROTOCOL = "PROTOCOL"


class KernelConvention(Enum):
    """How a squared-overlap estimate becomes a kernel entry.

    SQRT_FIDELITY recovers the unnormalized classical kernel on
    nonnegative data (sqrt, then norm-factor rescale); FIDELITY keeps the
    squared value, rescaled; RAW_FIDELITY uses the estimate itself with a
    unit diagonal, i.e. the kernel a server that never learns norm
    factors would have to use.
    """

    SQRT_FIDELITY = "SQRT_FIDELITY"
    FIDELITY = "FIDELITY"
    RAW_FIDELITY = "RAW_FIDELITY"


@dataclass
class GramEstimate:
    size: int
    values: np.ndarray
    source: GramSource
    shots: int | None = None
    noise_level: str = "NONE"
    psd_repair: str = "none"     # "none" | "clipped"
    clipped_mass: float = 0.0


def classical_kernel_matrix(xs: np.ndarray, ys: np.ndarray,
                            spec: FeatureMapSpec) -> np.ndarray:
    """Closed-form kernel values between two sample blocks."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if spec.kind is FeatureMapKind.LINEAR:
        return xs @ ys.T
    if spec.kind is FeatureMapKind.COPIES:
        return (xs @ ys.T) ** spec.degree
    if spec.kind is FeatureMapKind.POLY:
        return (spec.scale * (xs @ ys.T) + spec.offset) ** spec.degree
    if spec.kind is FeatureMapKind.RBF:
        sq = (np.sum(xs ** 2, axis=1)[:, None] + np.sum(ys ** 2, axis=1)[None, :]
              - 2.0 * xs @ ys.T)
        return np.exp(-np.maximum(sq, 0.0) / (2.0 * spec.bandwidth ** 2))
    dist = np.abs(xs[:, None, :] - ys[None, :, :]).sum(axis=2)
    return np.exp(-dist / spec.decay)


def _encode_block(xs: np.ndarray, spec: FeatureMapSpec, shared_seed: int):
    draw = None
    if spec.kind in (FeatureMapKind.RBF, FeatureMapKind.LAPLACIAN):
        draw = sample_rff(spec, shared_seed)
    points = [encode_point(x, spec, draw) for x in xs]
    amps = np.stack([p.amplitudes for p in points])
    norms = np.array([p.norm_factor for p in points])
    return amps, norms


def _from_fidelity(fidelity: np.ndarray, norm_prod: np.ndarray,
                   convention: KernelConvention) -> np.ndarray:
    clipped = np.clip(fidelity, 0.0, 1.0)
    if convention is KernelConvention.SQRT_FIDELITY:
        return norm_prod * np.sqrt(clipped)
    if convention is KernelConvention.FIDELITY:
        return norm_prod ** 2 * clipped
    return clipped


def _session_for_pair(base: SessionConfig, master_seed: int, gi: int, gj: int) -> SessionConfig:
    lo, hi = (gi, gj) if gi <= gj else (gj, gi)
    return replace(base, session_seed=derive_seed(master_seed, "pair", lo, hi))


def _estimate_pairs(args):
    """Worker body for protocol-mode assembly; must stay module-level picklable."""
    xs, spec, base_config, master_seed, pairs = args
    out = []
    for i, j, gi, gj in pairs:
        config = _session_for_pair(base_config, master_seed, gi, gj)
        transcript = run_session(xs[i], xs[j], spec, config)
        out.append((i, j, transcript.estimate))
    return out


def _protocol_fidelities(xs, spec, base_config, master_seed, indices, workers=1):
    m = len(xs)
    pairs = [(i, j, indices[i], indices[j]) for i in range(m) for j in range(i + 1, m)]
    fid = np.zeros((m, m))
    if workers > 1 and len(pairs) > 64:
        chunks = [pairs[k::workers] for k in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = pool.map(_estimate_pairs,
                               [(xs, spec, base_config, master_seed, c) for c in chunks])
            for batch in results:
                for i, j, estimate in batch:
                    fid[i, j] = fid[j, i] = estimate
    else:
        for i, j, estimate in _estimate_pairs((xs, spec, base_config, master_seed, pairs)):
            fid[i, j] = fid[j, i] = estimate
    return fid


def assemble_gram(features, spec: FeatureMapSpec, source: GramSource,
                  session: SessionConfig | None = None, master_seed: int = 0,
                  convention: KernelConvention = KernelConvention.SQRT_FIDELITY,
                  indices=None, workers: int = 1,
                  shared_seed: int | None = None) -> GramEstimate:
    """Symmetric kernel matrix over one sample block.

    ``indices`` are the global row ids used for per-pair seed derivation,
    so an entry's estimate does not depend on which subset or fold it is
    computed in. The diagonal is always set analytically. ``shared_seed``
    keys the randomized-encoding draws; it defaults to the session's and
    only matters for the quantum sources.
    """
    xs = np.asarray(features, dtype=np.float64)
    m = xs.shape[0]
    if np.any(np.linalg.norm(xs, axis=1) == 0.0) and spec.kind in (
            FeatureMapKind.LINEAR, FeatureMapKind.COPIES):
        raise ValueError("zero-norm rows cannot be amplitude encoded")
    indices = list(range(m)) if indices is None else list(indices)
    shots = None
    noise_level = "NONE"
    if shared_seed is None:
        shared_seed = session.shared_seed if session is not None else 0
    if source is GramSource.EXACT_CLASSICAL:
        values = classical_kernel_matrix(xs, xs, spec)
    else:
        amps, norms = _encode_block(xs, spec, shared_seed)
        norm_prod = np.outer(norms, norms)
        if source is GramSource.EXACT_QUANTUM:
            fid = (amps @ amps.T) ** 2
        else:
            if session is None:
                raise ValueError("protocol-mode assembly needs a session config")
            shots = session.shots
            noise_level = session.noise.level.value
            fid = _protocol_fidelities(xs, spec, session, master_seed, indices, workers)
        values = _from_fidelity(fid, norm_prod, convention)
        if convention is KernelConvention.SQRT_FIDELITY:
            diag = norms ** 2
        elif convention is KernelConvention.FIDELITY:
            diag = norms ** 4
        else:
            diag = np.ones_like(norms)
        np.fill_diagonal(values, diag)
    values = (values + values.T) / 2.0
    return GramEstimate(size=m, values=values, source=source, shots=shots,
                        noise_level=noise_level)


def assemble_cross(test_features, train_features, spec: FeatureMapSpec,
                   source: GramSource, session: SessionConfig | None = None,
                   master_seed: int = 0,
                   convention: KernelConvention = KernelConvention.SQRT_FIDELITY,
                   test_indices=None, train_indices=None,
                   shared_seed: int | None = None) -> np.ndarray:
    """Kernel rows of test points against the training block."""
    xt = np.asarray(test_features, dtype=np.float64)
    xr = np.asarray(train_features, dtype=np.float64)
    if source is GramSource.EXACT_CLASSICAL:
        return classical_kernel_matrix(xt, xr, spec)
    if shared_seed is None:
        shared_seed = session.shared_seed if session is not None else 0
    amps_t, norms_t = _encode_block(xt, spec, shared_seed)
    amps_r, norms_r = _encode_block(xr, spec, shared_seed)
    norm_prod = np.outer(norms_t, norms_r)
    if source is GramSource.EXACT_QUANTUM:
        fid = (amps_t @ amps_r.T) ** 2
        return _from_fidelity(fid, norm_prod, convention)
    if session is None:
        raise ValueError("protocol-mode assembly needs a session config")
    test_indices = list(range(xt.shape[0])) if test_indices is None else list(test_indices)
    train_indices = list(range(xr.shape[0])) if train_indices is None else list(train_indices)
    fid = np.zeros((xt.shape[0], xr.shape[0]))
    for i in range(xt.shape[0]):
        for j in range(xr.shape[0]):
            config = _session_for_pair(session, master_seed, test_indices[i], train_indices[j])
            fid[i, j] = run_session(xt[i], xr[j], spec, config).estimate
    return _from_fidelity(fid, norm_prod, convention)


def psd_repair(gram: GramEstimate, tol: float = 1e-8, max_sweeps: int = 100) -> GramEstimate:
    """Clip negative eigenvalues while keeping the analytic diagonal.

    Eigenvalue clipping alone raises the diagonal; restoring it can
    reintroduce small negative eigenvalues, so the two steps alternate
    until the spectrum clears the tolerance. The recorded clipped mass is
    the total negative eigenvalue weight of the input.
    """
    values = np.asarray(gram.values, dtype=np.float64)
    eigenvalues = np.linalg.eigvalsh(values)
    if eigenvalues[0] >= -tol:
        return replace(gram, values=values.copy(), psd_repair="none", clipped_mass=0.0)
    clipped_mass = float(-eigenvalues[eigenvalues < 0.0].sum())
    diagonal = np.diag(values).copy()
    repaired = values.copy()
    for _ in range(max_sweeps):
        w, v = np.linalg.eigh(repaired)
        if w[0] >= -tol:
            break
        repaired = (v * np.clip(w, 0.0, None)) @ v.T
        repaired = (repaired + repaired.T) / 2.0
        np.fill_diagonal(repaired, diagonal)
    return replace(gram, values=repaired, psd_repair="clipped", clipped_mass=clipped_mass)


def gram_to_csv(gram: GramEstimate, path) -> None:
    """Write a Gram estimate with its metadata as a headered CSV."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["size", "source", "shots", "noise", "psd_repair", "clipped_mass"])
        writer.writerow([gram.size, gram.source.value,
                         "" if gram.shots is None else gram.shots,
                         gram.noise_level, gram.psd_repair, repr(float(gram.clipped_mass))])
        for row in gram.values:
            writer.writerow([repr(float(v)) for v in row])


def gram_from_csv(path) -> GramEstimate:
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        next(reader)  # field names
        size_s, source_s, shots_s, noise_s, repair_s, clipped_s = next(reader)
        values = np.array([[float(v) for v in row] for row in reader])
    return GramEstimate(size=int(size_s), values=values, source=GramSource(source_s),
                        shots=None if shots_s == "" else int(shots_s),
                        noise_level=noise_s, psd_repair=repair_s,
                        clipped_mass=float(clipped_s))


# ---------------------------------------------------------------------------
# SVM on a precomputed Gram (sequential minimal optimization)
# ---------------------------------------------------------------------------

@dataclass
class BinarySvm:
    alphas: np.ndarray
    labels: np.ndarray
    bias: float = 0.0
    penalty: float = 1.0
    kkt_residual: float = 0.0

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.alphas > 1e-10)

    def decision(self, kernel_rows: np.ndarray) -> np.ndarray:
        return kernel_rows @ (self.alphas * self.labels) + self.bias


@dataclass
class SvmModel:
    classes: np.ndarray
    submodels: list
    penalty: float

    @property
    def kkt_residual(self) -> float:
        return max(sub.kkt_residual for sub in self.submodels)


def _smo_binary(kernel: np.ndarray, y: np.ndarray, penalty: float, tol: float,
                max_passes: int, rng: np.random.Generator) -> BinarySvm:
    m = y.size
    alphas = np.zeros(m)
    bias = 0.0
    # g[i] = sum_j alpha_j y_j K_ij, maintained incrementally.
    g = np.zeros(m)
    diag = np.diag(kernel)
    for _ in range(max_passes):
        changed = 0
        for i in range(m):
            err_i = g[i] + bias - y[i]
            r = err_i * y[i]
            if not ((r < -tol and alphas[i] < penalty) or (r > tol and alphas[i] > 0)):
                continue
            for j in rng.permutation(m):
                if j == i:
                    continue
                err_j = g[j] + bias - y[j]
                if y[i] == y[j]:
                    low = max(0.0, alphas[i] + alphas[j] - penalty)
                    high = min(penalty, alphas[i] + alphas[j])
                else:
                    low = max(0.0, alphas[j] - alphas[i])
                    high = min(penalty, penalty + alphas[j] - alphas[i])
                if high - low < 1e-12:
                    continue
                eta = diag[i] + diag[j] - 2.0 * kernel[i, j]
                if eta <= 1e-12:
                    continue
                a_j = min(max(alphas[j] + y[j] * (err_i - err_j) / eta, low), high)
                if abs(a_j - alphas[j]) < 1e-10:
                    continue
                a_i = alphas[i] + y[i] * y[j] * (alphas[j] - a_j)
                d_i, d_j = a_i - alphas[i], a_j - alphas[j]
                b1 = bias - err_i - y[i] * d_i * kernel[i, i] - y[j] * d_j * kernel[i, j]
                b2 = bias - err_j - y[i] * d_i * kernel[i, j] - y[j] * d_j * kernel[j, j]
                if 0.0 < a_i < penalty:
                    bias = b1
                elif 0.0 < a_j < penalty:
                    bias = b2
                else:
                    bias = (b1 + b2) / 2.0
                g += d_i * y[i] * kernel[:, i] + d_j * y[j] * kernel[:, j]
                alphas[i], alphas[j] = a_i, a_j
                changed += 1
                break
        if changed == 0:
            break
    r = (g + bias - y) * y
    lower_viol = np.where(alphas < penalty - 1e-9, -r, 0.0)
    upper_viol = np.where(alphas > 1e-9, r, 0.0)
    residual = float(max(0.0, lower_viol.max(initial=0.0), upper_viol.max(initial=0.0)))
    return BinarySvm(alphas=alphas, labels=y.astype(np.float64), bias=bias,
                     penalty=penalty, kkt_residual=residual)


def train_svm(gram, labels, penalty: float = 1.0, tol: float = 1e-3,
              max_passes: int = 200, seed: int = 0) -> SvmModel:
    """Fit a (one-vs-rest) SVM on a precomputed kernel matrix.

    The second working-set index is drawn from a seeded permutation, so
    training is deterministic for a given seed.
    """
    kernel = gram.values if isinstance(gram, GramEstimate) else np.asarray(gram, dtype=np.float64)
    if not np.all(np.isfinite(kernel)):
        raise ValueError("kernel matrix contains non-finite entries")
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if classes.size < 2:
        raise ValueError("need at least two classes")
    submodels = []
    if classes.size == 2:
        y = np.where(labels == classes[1], 1.0, -1.0)
        submodels.append(_smo_binary(kernel, y, penalty, tol, max_passes,
                                     rng_for(seed, "svm", 0)))
    else:
        for k, cls in enumerate(classes):
            y = np.where(labels == cls, 1.0, -1.0)
            submodels.append(_smo_binary(kernel, y, penalty, tol, max_passes,
                                         rng_for(seed, "svm", k)))
    return SvmModel(classes=classes, submodels=submodels, penalty=penalty)


def svm_decision_values(model: SvmModel, kernel_rows) -> np.ndarray:
    rows = np.atleast_2d(np.asarray(kernel_rows, dtype=np.float64))
    return np.stack([sub.decision(rows) for sub in model.submodels], axis=1)


def predict_svm(model: SvmModel, kernel_rows) -> np.ndarray:
    """Predict labels from kernel rows against the training samples.

    Binary: the sign of the single decision value. Multiclass: argmax of
    the one-vs-rest decision values, ties broken by the lowest class.
    """
    rows = np.atleast_2d(np.asarray(kernel_rows, dtype=np.float64))
    if rows.shape[1] != model.submodels[0].alphas.size:
        raise ValueError(
            f"kernel rows have {rows.shape[1]} columns, expected {model.submodels[0].alphas.size}")
    scores = svm_decision_values(model, rows)
    if model.classes.size == 2:
        picked = (scores[:, 0] > 0).astype(int)
    else:
        picked = np.argmax(scores, axis=1)
    out = model.classes[picked]
    return out if np.asarray(kernel_rows).ndim > 1 else out[0]


def dual_objective(kernel, labels_pm, alphas) -> float:
    """Dual objective ``sum(a) - (1/2) a^T Q a`` with ``Q = yy^T * K``."""
    q = np.outer(labels_pm, labels_pm) * kernel
    return float(alphas.sum() - 0.5 * alphas @ q @ alphas)


# ---------------------------------------------------------------------------
# Kernel PCA
# ---------------------------------------------------------------------------

@dataclass
class KpcaProjection:
    components: int
    eigenvalues: np.ndarray     # descending
    coefficients: np.ndarray    # (m, components); column l is v_l / sqrt(lambda_l)
    row_means: np.ndarray       # column means of the training Gram
    grand_mean: float


def fit_kpca(gram, components: int) -> KpcaProjection:
    """Top eigenpairs of the double-centered Gram matrix."""
    kernel = gram.values if isinstance(gram, GramEstimate) else np.asarray(gram, dtype=np.float64)
    m = kernel.shape[0]
    if not 1 <= components < m:
        raise ValueError(f"components must be in [1, {m - 1}]")
    row_means = kernel.mean(axis=0)
    grand_mean = float(kernel.mean())
    centered = kernel - row_means[None, :] - row_means[:, None] + grand_mean
    w, v = np.linalg.eigh(centered)
    order = np.argsort(w)[::-1][:components]
    eigenvalues = w[order]
    coeff = np.zeros((m, components))
    positive = eigenvalues > 1e-12
    coeff[:, positive] = v[:, order[positive]] / np.sqrt(eigenvalues[positive])
    return KpcaProjection(components=components, eigenvalues=eigenvalues,
                          coefficients=coeff, row_means=row_means,
                          grand_mean=grand_mean)


def kpca_transform(projection: KpcaProjection, kernel_rows) -> np.ndarray:
    """Map kernel rows (vs the training block) to component coordinates."""
    rows = np.atleast_2d(np.asarray(kernel_rows, dtype=np.float64))
    centered = (rows - rows.mean(axis=1, keepdims=True)
                - projection.row_means[None, :] + projection.grand_mean)
    return centered @ projection.coefficients


# ---------------------------------------------------------------------------
# Stratified cross-validation over the full pipeline
# ---------------------------------------------------------------------------

@dataclass
class PipelineSpec:
    """One model-training recipe: kernel source, solver, and session knobs."""

    feature_map: FeatureMapSpec
    source: GramSource = GramSource.EXACT_CLASSICAL
    model: str = "svm"                    # "svm" | "kpca-svm"
    components: int = 5
    penalty: float = 1.0
    svm_tol: float = 1e-3
    svm_max_passes: int = 200
    shots: int = 1024
    noise: NoiseModel = field(default_factory=NoiseModel.none)
    circuit_mode: CircuitMode = CircuitMode.STREAMING
    convention: KernelConvention = KernelConvention.SQRT_FIDELITY
    obfuscate: bool = True
    workers: int = 1

    def session_config(self, shared_seed: int) -> SessionConfig:
        return SessionConfig(
            num_qubits=self.feature_map.num_qubits(),
            shots=self.shots,
            noise=self.noise,
            shared_seed=shared_seed,
            mode=self.circuit_mode,
            obfuscate=self.obfuscate,
        )


@dataclass
class CvReport:
    fold_accuracies: list
    mean: float
    std: float
    folds: int
    config_digest: str = ""

    def to_record(self) -> dict:
        return {
            "fold_accuracies": [float(a) for a in self.fold_accuracies],
            "mean": self.mean,
            "std": self.std,
            "folds": self.folds,
            "config_digest": self.config_digest,
        }


def stratified_folds(labels, folds: int, seed: int) -> list:
    """Deterministic stratified split; per-fold class counts stay within
    one sample of the proportional share."""
    labels = np.asarray(labels)
    assignments = np.empty(labels.size, dtype=np.int64)
    rng = rng_for(seed, "folds")
    offset = 0
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if idx.size < folds:
            raise ValueError(f"class {cls} has {idx.size} samples, fewer than {folds} folds")
        shuffled = rng.permutation(idx)
        for pos, sample in enumerate(shuffled):
            assignments[sample] = (pos + offset) % folds
        offset += idx.size  # stagger so small classes do not pile into fold 0
    out = []
    for f in range(folds):
        test = np.flatnonzero(assignments == f)
        train = np.flatnonzero(assignments != f)
        out.append((train, test))
    return out


def _fit_fold(train_x, train_y, test_x, pipeline: PipelineSpec, seed: int,
              shared_seed: int, train_idx, test_idx):
    pre = Preprocessor().fit(train_x)
    train_s = pre.transform(train_x)
    test_s = pre.transform(test_x)
    session = None
    if pipeline.source is not GramSource.EXACT_CLASSICAL:
        session = pipeline.session_config(shared_seed=shared_seed)
    gram = assemble_gram(train_s, pipeline.feature_map, pipeline.source,
                         session=session, master_seed=seed,
                         convention=pipeline.convention, indices=train_idx,
                         workers=pipeline.workers)
    gram = psd_repair(gram)
    rows = assemble_cross(test_s, train_s, pipeline.feature_map, pipeline.source,
                          session=session, master_seed=seed,
                          convention=pipeline.convention,
                          test_indices=test_idx, train_indices=train_idx)
    if pipeline.model == "svm":
        model = train_svm(gram, train_y, pipeline.penalty, pipeline.svm_tol,
                          pipeline.svm_max_passes, seed=derive_seed(seed, "svm"))
        return predict_svm(model, rows)
    if pipeline.model != "kpca-svm":
        raise ValueError(f"unknown model {pipeline.model!r}")
    projection = fit_kpca(gram, pipeline.components)
    train_coords = kpca_transform(projection, gram.values)
    model = train_svm(train_coords @ train_coords.T, train_y, pipeline.penalty,
                      pipeline.svm_tol, pipeline.svm_max_passes,
                      seed=derive_seed(seed, "svm"))
    test_coords = kpca_transform(projection, rows)
    return predict_svm(model, test_coords @ train_coords.T)


def stratified_cv(features, labels, pipeline: PipelineSpec, folds: int = 5,
                  seed: int = 0, config_digest: str = "") -> CvReport:
    """Per-fold train/evaluate with preprocessing fit on training folds only."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    accuracies = []
    # The clients' pre-shared randomized-encoding seed is one per experiment.
    shared_seed = derive_seed(seed, "shared")
    for fold, (train, test) in enumerate(stratified_folds(labels, folds, seed)):
        predictions = _fit_fold(features[train], labels[train], features[test],
                                pipeline, derive_seed(seed, "fold", fold),
                                shared_seed,
                                train_idx=train.tolist(), test_idx=test.tolist())
        accuracies.append(float(np.mean(predictions == labels[test])))
    return CvReport(fold_accuracies=accuracies,
                    mean=float(np.mean(accuracies)),
                    std=float(np.std(accuracies)),
                    folds=folds,
                    config_digest=config_digest)
