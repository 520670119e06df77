"""Acceptance suite: one test per release criterion, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v -s``. Criteria touching the
parkinsons/framingham tables skip when the CSV files are absent (run
``scripts/fetch_datasets.py`` to place them under data/). Set
``FEDQKERNEL_FULL_ACCEPTANCE=1`` to run the noise-ordering criterion at
its full sample cap (hours) instead of the reduced smoke variant.
"""

import os
import time
from pathlib import Path

import numpy as np
import pytest
from oracles import bruteforce_dual_optimum, random_psd_kernel

from fedqkernel.cli import ExperimentConfig, run_experiment
from fedqkernel.encodings import (
    FeatureMapKind,
    FeatureMapSpec,
    encode_poly,
    encode_rff,
    sample_rff,
)
from fedqkernel.kernelml import dual_objective, train_svm
from fedqkernel.protocol import (
    CircuitMode,
    SessionConfig,
    prepare_bell_pairs,
    run_decoy_session,
    run_session,
    session_ancilla_probability,
    teleport_register,
)
from fedqkernel.seeding import derive_seed
from fedqkernel.simulator import from_amplitudes, overlap

DATA_DIR = Path(__file__).resolve().parent.parent / "data"
FULL = os.environ.get("FEDQKERNEL_FULL_ACCEPTANCE", "") == "1"


def report(number, name, passed, detail=""):
    tag = "PASS" if passed else "FAIL"
    print(f"[{tag}] criterion {number}: {name} {detail}".rstrip())
    assert passed, f"criterion {number} ({name}) failed: {detail}"


def need_dataset(number, name, filename):
    path = DATA_DIR / filename
    if not path.exists():
        print(f"[SKIP] criterion {number}: {name} "
              f"({filename} not present; run scripts/fetch_datasets.py)")
        pytest.skip(f"{filename} not available in this environment")
    return path


# =============================================================================
# 1. Polynomial feature-map exactness
# =============================================================================

def test_criterion_01_polynomial_feature_map_exactness():
    """Rescaled encoded overlaps reproduce (a x.y + c)^d to 1e-9 relative."""
    rng = np.random.default_rng(derive_seed("acceptance", 1))
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 7))
        d = int(rng.integers(1, 5))
        a = float(rng.uniform(1e-3, 2.0))
        c = float(rng.uniform(0.0, 2.0))
        x, y = rng.uniform(-1.0, 1.0, n), rng.uniform(-1.0, 1.0, n)
        px, py = encode_poly(x, a, c, d), encode_poly(y, a, c, d)
        got = px.norm_factor * py.norm_factor * float(px.amplitudes @ py.amplitudes)
        want = (a * float(x @ y) + c) ** d
        worst = max(worst, abs(got - want) / max(1.0, abs(want)))
    report(1, "polynomial feature-map exactness", worst <= 1e-9,
           f"(max relative error {worst:.2e} over 200 draws)")


# =============================================================================
# 2. Random-feature concentration
# =============================================================================

def _rff_error_profile(kind, seed):
    rng = np.random.default_rng(derive_seed("acceptance", 2, kind.value))
    pairs = []
    while len(pairs) < 100:
        x, y = rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3)
        if np.linalg.norm(x - y) <= 3.0:
            pairs.append((x, y))
    medians = []
    max_err_at_top = None
    for features in (64, 256, 1024, 4096):
        spec = FeatureMapSpec(kind, 3, bandwidth=1.0, decay=1.0,
                              rff_features=features)
        draw = sample_rff(spec, seed)
        errs = []
        for x, y in pairs:
            if kind is FeatureMapKind.RBF:
                exact = np.exp(-float(np.sum((x - y) ** 2)) / 2.0)
            else:
                exact = np.exp(-float(np.abs(x - y).sum()))
            ov = float(encode_rff(x, draw, spec).amplitudes
                       @ encode_rff(y, draw, spec).amplitudes)
            errs.append(abs(ov - exact))
        medians.append(float(np.median(errs)))
        if features == 4096:
            max_err_at_top = float(np.max(errs))
    return medians, max_err_at_top


def test_criterion_02_rff_concentration():
    """4096-feature overlaps sit within 0.1 of the analytic kernels and the
    median error never grows as the feature count quadruples."""
    start = time.perf_counter()
    ok = True
    details = []
    for kind in (FeatureMapKind.RBF, FeatureMapKind.LAPLACIAN):
        medians, max_err = _rff_error_profile(kind, seed=11)
        monotone = all(medians[i + 1] <= medians[i] + 1e-3 for i in range(3))
        ok = ok and (max_err <= 0.1) and monotone
        details.append(f"{kind.value}: max@4096 {max_err:.3f}, medians "
                       + "->".join(f"{m:.3f}" for m in medians))
    elapsed = time.perf_counter() - start
    report(2, "random-feature concentration", ok,
           f"({'; '.join(details)}; {elapsed:.1f}s)")


# =============================================================================
# 3. Teleportation identity
# =============================================================================

def test_criterion_03_teleportation_identity():
    """100 random registers, n <= 5: noiseless teleport is exact every seed."""
    rng = np.random.default_rng(derive_seed("acceptance", 3))
    worst = 1.0
    for trial in range(100):
        n = int(rng.integers(1, 6))
        amps = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
        amps /= np.linalg.norm(amps)
        pairs = prepare_bell_pairs(n)
        out, _ = teleport_register(from_amplitudes(amps), pairs[:n],
                                   np.random.default_rng(derive_seed("c3", trial)))
        worst = min(worst, abs(overlap(out, from_amplitudes(amps))))
    report(3, "teleportation identity", abs(worst - 1.0) < 1e-10,
           f"(min |<in|out>| = {worst:.12f} over 100 registers)")


# =============================================================================
# 4. Execution-mode equivalence
# =============================================================================

def test_criterion_04_mode_equivalence():
    """Streaming and monolithic execution give identical analytic ancilla
    probabilities on 50 random pairs, n <= 3."""
    rng = np.random.default_rng(derive_seed("acceptance", 4))
    worst = 0.0
    for trial in range(50):
        n = int(rng.integers(1, 4))
        dim = 1 << n
        x, y = rng.uniform(0.05, 1.0, dim), rng.uniform(0.05, 1.0, dim)
        spec = FeatureMapSpec(FeatureMapKind.LINEAR, input_dim=dim)
        seed = derive_seed("c4", trial)
        ps = session_ancilla_probability(
            x, y, spec, SessionConfig(num_qubits=n, session_seed=seed))
        pf = session_ancilla_probability(
            x, y, spec, SessionConfig(num_qubits=n, session_seed=seed,
                                      mode=CircuitMode.FULL_CIRCUIT))
        worst = max(worst, abs(ps - pf))
    report(4, "execution-mode equivalence", worst < 1e-9,
           f"(max probability gap {worst:.2e} over 50 pairs)")


# =============================================================================
# 5. Swap-test estimator accuracy
# =============================================================================

def test_criterion_05_swap_test_estimator():
    """At 1024 shots, the session estimate sits within 4 estimator standard
    deviations of the analytic target on at least 19 of 20 pairs."""
    rng = np.random.default_rng(derive_seed("acceptance", 5))
    hits = 0
    for trial in range(20):
        x, y = rng.uniform(0.05, 1.0, 3), rng.uniform(0.05, 1.0, 3)
        spec = FeatureMapSpec(FeatureMapKind.LINEAR, input_dim=3)
        fid = float(x @ y / (np.linalg.norm(x) * np.linalg.norm(y))) ** 2
        p_analytic = 0.5 + fid / 2.0
        cfg = SessionConfig(num_qubits=2, shots=1024,
                            session_seed=derive_seed("c5", trial))
        estimate = run_session(x, y, spec, cfg).estimate
        bound = 4.0 * np.sqrt(p_analytic * (1 - p_analytic) / 1024) * 2.0
        hits += abs(estimate - (2 * p_analytic - 1)) <= bound
    report(5, "swap-test estimator accuracy", hits >= 19,
           f"({hits}/20 pairs within the 4-sigma envelope)")


# =============================================================================
# 6. Desk-scale accuracy bands
# =============================================================================

@pytest.mark.slow
def test_criterion_06a_wine_classical_band(tmp_path):
    row = run_experiment(ExperimentConfig(dataset="wine", mode="classical",
                                          seed=7), out_dir=tmp_path)
    mean = float(row["mean_accuracy"])
    report("6a", "wine classical kernel-SVM accuracy >= 0.93", mean >= 0.93,
           f"(measured {mean:.4f} +/- {float(row['std_accuracy']):.4f})")


@pytest.mark.slow
def test_criterion_06b_wine_protocol_band(tmp_path):
    """Distributed protocol at 1024 shots, no noise, default convention.

    Known red: the default pipeline (min-max scaling, sqrt-fidelity
    kernel with norm-factor rescale) recovers the classical linear kernel
    exactly up to shot noise, so the protocol accuracy tracks the
    classical 0.98 rather than dropping into the quoted band; the
    unrescaled fidelity kernel lands at 0.966. See the reviewer notes for
    the full analysis.
    """
    row = run_experiment(ExperimentConfig(dataset="wine", mode="protocol",
                                          shots=1024, seed=7), out_dir=tmp_path)
    mean = float(row["mean_accuracy"])
    report("6b", "wine distributed-protocol accuracy in [0.80, 0.95]",
           0.80 <= mean <= 0.95,
           f"(measured {mean:.4f} +/- {float(row['std_accuracy']):.4f})")


@pytest.mark.slow
def test_criterion_06c_parkinsons_protocol_band(tmp_path):
    need_dataset("6c", "parkinsons protocol band", "parkinsons.csv")
    row = run_experiment(ExperimentConfig(dataset="parkinsons", mode="protocol",
                                          shots=1024, seed=7,
                                          data_dir=str(DATA_DIR)),
                         out_dir=tmp_path)
    mean = float(row["mean_accuracy"])
    report("6c", "parkinsons protocol kernel-SVM accuracy in [0.70, 0.90]",
           0.70 <= mean <= 0.90,
           f"(measured {mean:.4f} +/- {float(row['std_accuracy']):.4f})")


# =============================================================================
# 7. Shot-sweep trend
# =============================================================================

@pytest.mark.slow
def test_criterion_07_digits_shot_trend(tmp_path):
    """Digits-100 protocol accuracy improves by >= 0.05 from 128 to 1024
    shots and reaches >= 0.70; the classical baseline is reported."""
    accs = {}
    for shots in (128, 1024):
        row = run_experiment(ExperimentConfig(dataset="digits", mode="protocol",
                                              shots=shots, sample_cap=100,
                                              seed=7), out_dir=tmp_path)
        accs[shots] = float(row["mean_accuracy"])
    baseline = run_experiment(ExperimentConfig(dataset="digits", mode="classical",
                                               sample_cap=100, seed=7),
                              out_dir=tmp_path)
    base = float(baseline["mean_accuracy"])
    ok = (accs[1024] >= accs[128] + 0.05) and (accs[1024] >= 0.70)
    report(7, "digits-100 shot-sweep trend", ok,
           f"(128 shots: {accs[128]:.3f}, 1024 shots: {accs[1024]:.3f}, "
           f"classical baseline: {base:.3f})")


# =============================================================================
# 8. Noise ordering
# =============================================================================

@pytest.mark.slow
def test_criterion_08_heart_noise_ordering(tmp_path):
    """Noiseless protocol accuracy beats depolarizing level 2 by >= 0.02 on
    the heart-study set. Full variant (cap 600, 1024 shots) runs only with
    FEDQKERNEL_FULL_ACCEPTANCE=1 and takes hours; the default smoke
    variant caps at 60 balanced samples and 256 shots."""
    need_dataset(8, "heart-study noise ordering", "framingham.csv")
    cap, shots = (600, 1024) if FULL else (60, 256)
    accs = {}
    for noise in ("none", "l2"):
        row = run_experiment(
            ExperimentConfig(dataset="framingham", mode="protocol", noise=noise,
                             shots=shots, sample_cap=cap, balanced=True, seed=7,
                             data_dir=str(DATA_DIR)),
            out_dir=tmp_path)
        accs[noise] = float(row["mean_accuracy"])
    variant = "full" if FULL else "smoke"
    report(8, "heart-study noise ordering",
           accs["none"] >= accs["l2"] + 0.02,
           f"({variant} cap {cap}: no-noise {accs['none']:.4f} vs "
           f"level-2 {accs['l2']:.4f})")


# =============================================================================
# 9. Security properties
# =============================================================================

def test_criterion_09a_obfuscation_invariance():
    """Shared randomized encodings leave the analytic ancilla probability
    bit-identical (within 1e-12) to the unobfuscated run."""
    rng = np.random.default_rng(derive_seed("acceptance", 9))
    worst = 0.0
    spec = FeatureMapSpec(FeatureMapKind.LINEAR, input_dim=4)
    for trial in range(20):
        x, y = rng.uniform(0.05, 1.0, 4), rng.uniform(0.05, 1.0, 4)
        seed = derive_seed("c9", trial)
        p_on = session_ancilla_probability(
            x, y, spec, SessionConfig(num_qubits=2, session_seed=seed,
                                      shared_seed=trial, obfuscate=True))
        p_off = session_ancilla_probability(
            x, y, spec, SessionConfig(num_qubits=2, session_seed=seed,
                                      shared_seed=trial, obfuscate=False))
        worst = max(worst, abs(p_on - p_off))
    report("9a", "obfuscation invariance", worst < 1e-12,
           f"(max probability gap {worst:.2e} over 20 pairs)")


def test_criterion_09b_decoy_detection_rate():
    """Intercept-resend detection by decoy sessions, 500 sessions at n = 4.

    Analytic rate: tampering turns teleportation into a computational-basis
    measure-and-forward channel, so a decoy state phi collapses to basis
    state k with probability |<k|phi>|^2 and then passes the server's check
    with probability |<phi|k>|^2. The expected pass rate over Haar-random
    phi is sum E|<k|phi>|^4 = 2/(D+1) with D = 2^n, giving a detection rate
    of 1 - 2/(D+1) = 15/17 at n = 4. The empirical rate must sit within 4
    binomial sigma of that and above the coarse 1 - (3/4)^n bound.
    """
    n, sessions = 4, 500
    detected = 0
    for trial in range(sessions):
        cfg = SessionConfig(num_qubits=n, shots=1, decoy=True, adversary=True,
                            shared_seed=13, session_seed=derive_seed("c9b", trial))
        detected += not run_decoy_session(cfg)
    rate = detected / sessions
    analytic = 1.0 - 2.0 / (2 ** n + 1)
    sigma = np.sqrt(analytic * (1 - analytic) / sessions)
    ok = abs(rate - analytic) <= 4 * sigma and rate >= 1 - (3 / 4) ** n
    report("9b", "decoy detection of intercept-resend", ok,
           f"(measured {rate:.4f}, analytic {analytic:.4f} +/- {sigma:.4f})")


# =============================================================================
# 10. SVM solver oracle
# =============================================================================

def test_criterion_10_svm_solver_oracle():
    """SMO dual objective matches exhaustive active-set enumeration to 1e-4
    on 20 random 6-point problems."""
    rng = np.random.default_rng(derive_seed("acceptance", 10))
    worst = 0.0
    for trial in range(20):
        kernel = random_psd_kernel(rng, 6)
        labels = np.zeros(6, dtype=int)
        while labels.min() == labels.max():
            labels = rng.integers(0, 2, size=6)
        y = np.where(labels == 1, 1.0, -1.0)
        model = train_svm(kernel, labels, penalty=1.0, tol=1e-6,
                          max_passes=2000, seed=trial)
        ours = dual_objective(kernel, y, model.submodels[0].alphas)
        best = bruteforce_dual_optimum(kernel, y, 1.0)
        worst = max(worst, abs(ours - best))
    report(10, "SVM dual objective vs brute-force oracle", worst < 1e-4,
           f"(max objective gap {worst:.2e} over 20 problems)")
