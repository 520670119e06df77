"""Vectorized execution of many independent noise trajectories.

A noisy session re-executes its circuit once per shot. The trajectories
never interact, so this module evolves all of them together as a
``(shots, 2**n)`` amplitude block: every gate is one array operation over
the whole batch, Pauli insertions touch only the sampled rows, and
measurements collapse each row against its own Born probability. The
per-shot distribution is exactly the one the scalar path in
``protocol``/``simulator`` produces; the equivalence is pinned by tests.
"""

from __future__ import annotations

import math

import numpy as np

SQRT_HALF = 1.0 / math.sqrt(2.0)


class Batch:
    """``rows`` independent trajectories over ``num_qubits`` qubits."""

    __slots__ = ("rows", "num_qubits", "amps")

    def __init__(self, rows: int, num_qubits: int, amps: np.ndarray):
        self.rows = rows
        self.num_qubits = num_qubits
        self.amps = amps      # (rows, 2**num_qubits) complex128

    @classmethod
    def ground(cls, rows: int, num_qubits: int) -> "Batch":
        amps = np.zeros((rows, 1 << num_qubits), dtype=np.complex128)
        amps[:, 0] = 1.0
        return cls(rows, num_qubits, amps)

    @classmethod
    def broadcast(cls, rows: int, amplitudes: np.ndarray) -> "Batch":
        amplitudes = np.asarray(amplitudes, dtype=np.complex128).reshape(-1)
        n = amplitudes.size.bit_length() - 1
        return cls(rows, n, np.tile(amplitudes, (rows, 1)))

    def _view(self, *qubits):
        """Tensor view with the requested qubit axes moved to the end."""
        n = self.num_qubits
        t = self.amps.reshape((self.rows,) + (2,) * n)
        src = [1 + (n - 1 - q) for q in qubits]
        dst = list(range(-len(qubits), 0))
        return np.moveaxis(t, src, dst)


def join(low: Batch, high: Batch) -> Batch:
    """Row-wise tensor product; ``high``'s qubits sit above ``low``'s."""
    out = np.einsum("sj,si->sji", high.amps, low.amps)
    return Batch(low.rows, low.num_qubits + high.num_qubits,
                 np.ascontiguousarray(out.reshape(low.rows, -1)))


def append_zero_qubit(batch: Batch) -> Batch:
    out = np.zeros((batch.rows, batch.amps.shape[1] * 2), dtype=np.complex128)
    out[:, : batch.amps.shape[1]] = batch.amps
    return Batch(batch.rows, batch.num_qubits + 1, out)


def gate_h(batch: Batch, qubit: int, rows=None) -> None:
    m = batch._view(qubit)
    sel = slice(None) if rows is None else rows
    a0 = m[sel, ..., 0].copy()
    a1 = m[sel, ..., 1].copy()
    m[sel, ..., 0] = (a0 + a1) * SQRT_HALF
    m[sel, ..., 1] = (a0 - a1) * SQRT_HALF


def gate_x(batch: Batch, qubit: int, rows=None) -> None:
    m = batch._view(qubit)
    sel = slice(None) if rows is None else rows
    a0 = m[sel, ..., 0].copy()
    m[sel, ..., 0] = m[sel, ..., 1]
    m[sel, ..., 1] = a0


def gate_y(batch: Batch, qubit: int, rows=None) -> None:
    m = batch._view(qubit)
    sel = slice(None) if rows is None else rows
    a0 = m[sel, ..., 0].copy()
    m[sel, ..., 0] = -1j * m[sel, ..., 1]
    m[sel, ..., 1] = 1j * a0


def gate_z(batch: Batch, qubit: int, rows=None) -> None:
    m = batch._view(qubit)
    sel = slice(None) if rows is None else rows
    m[sel, ..., 1] *= -1.0


def gate_cx(batch: Batch, control: int, target: int, rows=None) -> None:
    m = batch._view(control, target)
    sel = slice(None) if rows is None else rows
    a10 = m[sel, ..., 1, 0].copy()
    m[sel, ..., 1, 0] = m[sel, ..., 1, 1]
    m[sel, ..., 1, 1] = a10


def gate_cswap(batch: Batch, control: int, first: int, second: int, rows=None) -> None:
    m = batch._view(control, first, second)
    sel = slice(None) if rows is None else rows
    a101 = m[sel, ..., 1, 0, 1].copy()
    m[sel, ..., 1, 0, 1] = m[sel, ..., 1, 1, 0]
    m[sel, ..., 1, 1, 0] = a101


_PAULIS = {1: gate_x, 2: gate_y, 3: gate_z}


def pauli_noise(batch: Batch, targets, probability: float,
                rng: np.random.Generator, rows=None) -> None:
    """Per-row depolarizing step: uniform non-identity Pauli string on the
    sampled rows, identity elsewhere. ``rows`` restricts the candidates,
    for gates that were themselves applied to a subset of trajectories."""
    if probability <= 0.0:
        return
    candidates = np.arange(batch.rows) if rows is None else np.asarray(rows)
    if candidates.size == 0:
        return
    hit = rng.random(candidates.size) < probability
    count = int(hit.sum())
    if count == 0:
        return
    rows = candidates[hit]
    codes = rng.integers(1, 4 ** len(targets), size=count)
    for shift, qubit in enumerate(targets):
        digits = (codes >> (2 * shift)) & 3
        for pauli, fn in _PAULIS.items():
            sel = rows[digits == pauli]
            if sel.size:
                fn(batch, qubit, rows=sel)


def measure(batch: Batch, qubit: int, rng: np.random.Generator) -> np.ndarray:
    """Row-wise Born sampling and collapse; returns the outcome bits."""
    m = batch._view(qubit)
    flat0 = m[..., 0].reshape(batch.rows, -1)
    p0 = np.einsum("ij,ij->i", flat0, flat0.conj()).real
    p0 = np.clip(p0, 0.0, 1.0)
    bits = (rng.random(batch.rows) >= p0).astype(np.int64)
    keep0 = (bits == 0)
    m[..., 1] *= np.where(keep0, 0.0, 1.0).reshape((-1,) + (1,) * (m.ndim - 2))
    m[..., 0] *= np.where(keep0, 1.0, 0.0).reshape((-1,) + (1,) * (m.ndim - 2))
    keep_prob = np.where(keep0, p0, 1.0 - p0)
    batch.amps /= np.sqrt(keep_prob)[:, None]
    return bits


def ancilla_probabilities(batch: Batch, qubit: int) -> np.ndarray:
    """Row-wise P(qubit = 0) without collapsing."""
    m = batch._view(qubit)
    flat0 = m[..., 0].reshape(batch.rows, -1)
    return np.clip(np.einsum("ij,ij->i", flat0, flat0.conj()).real, 0.0, 1.0)


def discard(batch: Batch, qubit: int, bits: np.ndarray) -> Batch:
    """Drop a collapsed qubit, keeping each row's measured branch."""
    n = batch.num_qubits
    t = batch.amps.reshape((batch.rows,) + (2,) * n)
    m = np.moveaxis(t, 1 + (n - 1 - qubit), 1)
    kept = m[np.arange(batch.rows), bits].reshape(batch.rows, -1)
    kept = np.ascontiguousarray(kept)
    norms = np.sqrt(np.einsum("ij,ij->i", kept, kept.conj()).real)
    kept /= norms[:, None]
    return Batch(batch.rows, n - 1, kept)
