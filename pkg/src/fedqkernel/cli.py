"""Config-driven experiment runner emitting machine-readable results.

A run is fully determined by its config (including the master seed); every
output row embeds the config digest, so any row can be reproduced from its
own metadata. Result rows contain only deterministic fields; wall-clock
times go to a side file so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

from .datasets import Dataset, load_dataset, subsample
from .encodings import FeatureMapKind, FeatureMapSpec
from .kernelml import (
    GramSource,
    KernelConvention,
    PipelineSpec,
    stratified_cv,
    stratified_folds,
)
from .protocol import CircuitMode, SessionConfig, required_qubits, run_decoy_session
from .seeding import derive_seed
from .simulator import MAX_QUBITS, NoiseModel

_SOURCES = {
    "classical": GramSource.EXACT_CLASSICAL,
    "exact-quantum": GramSource.EXACT_QUANTUM,
    "protocol": GramSource.PROTOCOL,
}
_CONVENTIONS = {
    "sqrt": KernelConvention.SQRT_FIDELITY,
    "fidelity": KernelConvention.FIDELITY,
    "fidelity-raw": KernelConvention.RAW_FIDELITY,
}
_CIRCUIT_MODES = {
    "streaming": CircuitMode.STREAMING,
    "full": CircuitMode.FULL_CIRCUIT,
}

RESULT_FIELDS = [
    "digest", "cell", "dataset", "samples", "kernel", "mode", "model",
    "components", "shots", "noise", "folds", "seed", "sample_cap", "balanced",
    "convention", "penalty", "mean_accuracy", "std_accuracy",
    "fold_accuracies", "decoy_pass_rate",
]


@dataclass
class ExperimentConfig:
    """Everything that determines a run; see README for the key reference."""

    dataset: str = "wine"
    label_column: str | None = None
    data_dir: str = "data"
    kernel: str = "linear"
    degree: int = 2
    scale: float = 1.0
    offset: float = 1.0
    bandwidth: float = 1.0
    decay: float = 1.0
    rff_features: int = 256
    mode: str = "classical"
    shots: int = 1024
    noise: str = "none"
    folds: int = 5
    model: str = "svm"
    components: int = 5
    penalty: float = 1.0
    seed: int = 7
    sample_cap: int | None = None
    balanced: bool = False
    convention: str = "sqrt"
    circuit_mode: str = "streaming"
    obfuscate: bool = True
    decoy_every: int = 0
    adversary: bool = False
    workers: int = 1
    cell: str = ""

    def digest(self) -> str:
        payload = asdict(self)
        payload.pop("cell")
        payload.pop("workers")  # execution detail, not part of the experiment
        canon = json.dumps(payload, sort_keys=True)
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as handle:
            payload = json.load(handle)
        unknown = set(payload) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**payload)


def _feature_map(config: ExperimentConfig, input_dim: int) -> FeatureMapSpec:
    kind = FeatureMapKind(config.kernel.upper())
    return FeatureMapSpec(kind=kind, input_dim=input_dim, degree=config.degree,
                          scale=config.scale, offset=config.offset,
                          bandwidth=config.bandwidth, decay=config.decay,
                          rff_features=config.rff_features)


def _pipeline(config: ExperimentConfig, input_dim: int) -> PipelineSpec:
    return PipelineSpec(
        feature_map=_feature_map(config, input_dim),
        source=_SOURCES[config.mode],
        model=config.model,
        components=config.components,
        penalty=config.penalty,
        shots=config.shots,
        noise=NoiseModel.from_name(config.noise),
        circuit_mode=_CIRCUIT_MODES[config.circuit_mode],
        convention=_CONVENTIONS[config.convention],
        obfuscate=config.obfuscate,
        workers=config.workers,
    )


def _load(config: ExperimentConfig) -> Dataset:
    dataset = load_dataset(config.dataset, config.data_dir, config.label_column)
    if config.sample_cap is not None and config.sample_cap < dataset.num_samples:
        dataset = subsample(dataset, config.sample_cap, seed=derive_seed(config.seed, "cap"),
                            balanced=config.balanced)
    return dataset


def _run_decoy_bank(config: ExperimentConfig, pipeline: PipelineSpec,
                    pair_sessions: int) -> float | None:
    """Interleaved decoy sessions: one per ``decoy_every`` data sessions."""
    if config.decoy_every <= 0 or pipeline.source is not GramSource.PROTOCOL:
        return None
    count = max(1, pair_sessions // config.decoy_every)
    shared = derive_seed(config.seed, "shared")
    passed = 0
    for t in range(count):
        session = SessionConfig(
            num_qubits=pipeline.feature_map.num_qubits(),
            shots=1,
            noise=pipeline.noise,
            shared_seed=shared,
            decoy=True,
            adversary=config.adversary,
            session_seed=derive_seed(config.seed, "decoy", t),
        )
        passed += bool(run_decoy_session(session))
    return passed / count


def _execute_experiment(config: ExperimentConfig):
    """Pure compute half of an experiment: returns (row, elapsed seconds)."""
    digest = config.digest()
    started = time.perf_counter()
    dataset = _load(config)
    pipeline = _pipeline(config, dataset.num_features)
    report = stratified_cv(dataset.features, dataset.labels, pipeline,
                           folds=config.folds, seed=config.seed,
                           config_digest=digest)
    pair_sessions = dataset.num_samples * (dataset.num_samples - 1) // 2
    decoy_rate = _run_decoy_bank(config, pipeline, pair_sessions)
    row = {
        "digest": digest,
        "cell": config.cell,
        "dataset": dataset.name,
        "samples": dataset.num_samples,
        "kernel": config.kernel,
        "mode": config.mode,
        "model": config.model,
        "components": config.components if config.model == "kpca-svm" else "",
        "shots": config.shots if config.mode == "protocol" else "",
        "noise": config.noise,
        "folds": config.folds,
        "seed": config.seed,
        "sample_cap": "" if config.sample_cap is None else config.sample_cap,
        "balanced": config.balanced,
        "convention": config.convention if config.mode != "classical" else "",
        "penalty": config.penalty,
        "mean_accuracy": repr(report.mean),
        "std_accuracy": repr(report.std),
        "fold_accuracies": " ".join(repr(a) for a in report.fold_accuracies),
        "decoy_pass_rate": "" if decoy_rate is None else repr(decoy_rate),
    }
    return row, time.perf_counter() - started


def _record_error(out: Path, config: ExperimentConfig, exc: Exception) -> None:
    with open(out / "errors.jsonl", "a", encoding="utf-8") as handle:
        handle.write(json.dumps({"digest": config.digest(), "cell": config.cell,
                                 "dataset": config.dataset,
                                 "error": type(exc).__name__,
                                 "message": str(exc)}, sort_keys=True) + "\n")


def _record_result(out: Path, row: dict, elapsed: float) -> None:
    _append_rows(out / "results.csv", [row])
    with open(out / "runtimes.csv", "a", encoding="utf-8") as handle:
        handle.write(f"{row['digest']},{elapsed:.3f}\n")


def run_experiment(config: ExperimentConfig, out_dir="results") -> dict:
    """Execute one config; append a result row and return it."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        row, elapsed = _execute_experiment(config)
    except Exception as exc:
        _record_error(out, config, exc)
        raise
    _record_result(out, row, elapsed)
    return row


def _append_rows(path: Path, rows) -> None:
    new_file = not path.exists()
    with open(path, "a", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=RESULT_FIELDS)
        if new_file:
            writer.writeheader()
        for row in rows:
            writer.writerow(row)


def _completed_digests(path: Path) -> set:
    if not path.exists():
        return set()
    with open(path, newline="", encoding="utf-8") as handle:
        return {row["digest"] for row in csv.DictReader(handle)}


def validate(config: ExperimentConfig) -> dict:
    """Capacity and workload report; refuses nothing, flags infeasibility."""
    report = {"digest": config.digest(), "dataset": config.dataset, "mode": config.mode}
    try:
        dataset = _load(config)
    except (FileNotFoundError, ValueError) as exc:
        report["error"] = str(exc)
        return report
    spec = _feature_map(config, dataset.num_features)
    n = spec.num_qubits()
    streaming = required_qubits(n, CircuitMode.STREAMING)
    full = required_qubits(n, CircuitMode.FULL_CIRCUIT)
    m = dataset.num_samples
    folds = stratified_folds(dataset.labels, config.folds, config.seed)
    cv_sessions = sum(len(tr) * (len(tr) - 1) // 2 + len(te) * len(tr)
                      for tr, te in folds)
    report.update({
        "samples": m,
        "features": dataset.num_features,
        "register_qubits": n,
        "streaming_qubits": streaming,
        "full_circuit_qubits": full,
        "capacity": MAX_QUBITS,
        "streaming_feasible": streaming <= MAX_QUBITS,
        "full_circuit_feasible": full <= MAX_QUBITS,
        "pair_sessions": m * (m - 1) // 2,
        "cv_sessions": cv_sessions,
        "total_shots": cv_sessions * config.shots if config.mode == "protocol" else 0,
        "feasible": (_CIRCUIT_MODES[config.circuit_mode] is CircuitMode.STREAMING
                     and streaming <= MAX_QUBITS)
                    or (_CIRCUIT_MODES[config.circuit_mode] is CircuitMode.FULL_CIRCUIT
                        and full <= MAX_QUBITS),
    })
    return report


# ---------------------------------------------------------------------------
# Named suites
# ---------------------------------------------------------------------------

def _suite_cells(name: str, seed: int, smoke: bool, data_dir: str) -> list:
    base = ExperimentConfig(seed=seed, data_dir=data_dir)
    cells = []

    def add(cell, **kw):
        cells.append(replace(base, cell=cell, **kw))

    if name == "table1":
        for mode in ("classical", "exact-quantum", "protocol"):
            add(f"wine-ksvm-{mode}", dataset="wine", mode=mode)
            add(f"parkinsons-ksvm-{mode}", dataset="parkinsons", mode=mode)
            add(f"parkinsons-kpca-{mode}", dataset="parkinsons", mode=mode,
                model="kpca-svm", components=5)
            add(f"heart-ksvm-{mode}", dataset="framingham", mode=mode,
                sample_cap=600, balanced=True)
            add(f"heart-kpca-{mode}", dataset="framingham", mode=mode,
                model="kpca-svm", components=5, sample_cap=600, balanced=True)
    elif name == "figure3":
        cap = 60 if smoke else 600
        shots = 256 if smoke else 1024
        noise_grid = [("classical", "classical", "none")] + [
            (f"protocol-{nz}", "protocol", nz) for nz in ("none", "l1", "l2")]
        for label, mode, nz in noise_grid:
            add(f"heart-ksvm-{label}", dataset="framingham", mode=mode, noise=nz,
                shots=shots, sample_cap=cap, balanced=True)
            add(f"parkinsons-ksvm-{label}", dataset="parkinsons", mode=mode,
                noise=nz, shots=shots,
                sample_cap=60 if smoke else None, balanced=smoke)
            for k in (5, 6, 7):
                add(f"parkinsons-{k}kpca-{label}", dataset="parkinsons", mode=mode,
                    noise=nz, shots=shots, model="kpca-svm", components=k,
                    sample_cap=60 if smoke else None, balanced=smoke)
    elif name == "figure4":
        add("digits100-ksvm-classical", dataset="digits", mode="classical",
            sample_cap=100)
        for shots in (128, 256, 512, 1024):
            add(f"digits100-ksvm-protocol-{shots}", dataset="digits",
                mode="protocol", shots=shots, sample_cap=100)
    else:
        raise ValueError(f"unknown suite {name!r}; pick table1, figure3, or figure4")
    return cells


def _run_cell(config: ExperimentConfig, verbose: bool = False):
    """Compute-only cell execution; safe to run in a worker process (all
    file writes stay with the parent)."""
    if verbose:
        print(f"running {config.cell or config.digest()} "
              f"({config.dataset}/{config.mode})", file=sys.stderr)
    try:
        row, elapsed = _execute_experiment(config)
        return config.cell, row, elapsed, None
    except Exception as exc:  # failures recorded per cell; suite continues
        return config.cell, None, 0.0, exc


def _write_plot_data(name: str, rows: list, out: Path) -> None:
    """Series of (x, y, err) triples for downstream plotting."""
    path = out / f"{name}_plot.csv"
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["series", "x", "y", "err"])
        for row in rows:
            if name == "figure4":
                x = row["shots"] if row["shots"] != "" else 0
                writer.writerow([f"{row['dataset']}-{row['mode']}", x,
                                 row["mean_accuracy"], row["std_accuracy"]])
            else:
                category = row["cell"].rsplit("-", 1)[0]
                writer.writerow([category, row["noise"],
                                 row["mean_accuracy"], row["std_accuracy"]])


def run_suite(name: str, out_dir="results", seed: int = 7, workers: int = 1,
              smoke: bool = False, data_dir: str = "data",
              verbose: bool = False) -> list:
    """Run every cell of a named suite, skipping cells already completed."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = _suite_cells(name, seed, smoke, data_dir)
    done = _completed_digests(out / "results.csv")
    pending = [c for c in cells if c.digest() not in done]
    if verbose and len(pending) < len(cells):
        print(f"{len(cells) - len(pending)} cells already complete",
              file=sys.stderr)
    by_cell = {c.cell: c for c in pending}
    outcomes = {}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for cell, row, elapsed, error in pool.map(
                    _run_cell, pending, [verbose] * len(pending)):
                outcomes[cell] = (row, elapsed, error)
    else:
        for config in pending:
            cell, row, elapsed, error = _run_cell(config, verbose)
            outcomes[cell] = (row, elapsed, error)
    # All writes happen here, in declared cell order, so reruns are
    # byte-identical and concurrent workers never touch the output files.
    completed = []
    for config in pending:
        row, elapsed, error = outcomes[config.cell]
        if error is None:
            _record_result(out, row, elapsed)
            completed.append(row)
        else:
            _record_error(out, by_cell[config.cell], error)
            print(f"cell {config.cell} failed: "
                  f"{type(error).__name__}: {error}", file=sys.stderr)
    all_rows = _read_rows(out / "results.csv")
    suite_digests = {c.digest() for c in cells}
    _write_plot_data(name, [r for r in all_rows if r["digest"] in suite_digests], out)
    return completed


def _read_rows(path: Path) -> list:
    if not path.exists():
        return []
    with open(path, newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fedqkernel",
                                     description="distributed kernel experiment runner")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("--config", required=True, help="path to a JSON config")
    p_run.add_argument("--out", default="results")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")

    p_suite = sub.add_parser("suite", help="run a named suite")
    p_suite.add_argument("name", choices=["table1", "figure3", "figure4"])
    p_suite.add_argument("--out", default="results")
    p_suite.add_argument("--workers", type=int, default=1)
    p_suite.add_argument("--seed", type=int, default=7)
    p_suite.add_argument("--smoke", action="store_true",
                         help="reduced sample caps and shots for a quick pass")
    p_suite.add_argument("--data-dir", default="data")

    p_val = sub.add_parser("validate", help="capacity/feasibility report for a config")
    p_val.add_argument("--config", required=True)

    args = parser.parse_args(argv)
    if args.command == "run":
        config = ExperimentConfig.from_file(args.config)
        if args.seed is not None:
            config = replace(config, seed=args.seed)
        if args.verbose:
            print(f"config digest {config.digest()}: "
                  f"{json.dumps(asdict(config), sort_keys=True)}", file=sys.stderr)
        try:
            row = run_experiment(config, args.out)
        except Exception as exc:
            print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
            return 1
        print(json.dumps(row, sort_keys=True))
        return 0
    if args.command == "suite":
        rows = run_suite(args.name, args.out, seed=args.seed, workers=args.workers,
                         smoke=args.smoke, data_dir=args.data_dir,
                         verbose=args.verbose)
        print(f"{len(rows)} cells completed; results in {args.out}/results.csv")
        return 0
    report = validate(ExperimentConfig.from_file(args.config))
    print(json.dumps(report, sort_keys=True, indent=2))
    return 0 if report.get("feasible", False) or "error" not in report else 1


if __name__ == "__main__":
    sys.exit(main())
