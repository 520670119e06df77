"""Dense statevector simulator with the small gate set the protocol needs.

Conventions, fixed here and relied on by every other module:

* Qubit indices are little-endian: qubit 0 is the least significant bit of
  the amplitude index, so basis state ``|q_{n-1} ... q_1 q_0>`` lives at
  index ``sum_k q_k * 2**k``.
* Gate, noise, and measurement functions mutate the amplitude buffer in
  place and return the state for chaining. ``discard_measured`` returns a
  new, smaller state. Snapshot with ``state.copy()`` when needed.
* Registers are prepared by direct amplitude injection
  (``initialize_register``), not by gate decomposition.
* Depolarizing noise is parameterized by the Pauli-insertion probability:
  after a gate, with probability ``p1`` (one target) or ``p2`` (two or
  more targets), a uniformly random non-identity Pauli string is applied
  to the gate's targets. These rates are insertion probabilities, not
  channel depolarization parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

#: Largest simulable register: 2**26 complex128 amplitudes is 1 GiB.
MAX_QUBITS = 26

SQRT_HALF = 1.0 / math.sqrt(2.0)

_NORM_TOL = 1e-9


class CapacityError(Exception):
    """Requested register exceeds the configured qubit budget."""


class GateKind(Enum):
    H = "H"
    X = "X"
    Z = "Z"
    CX = "CX"
    CSWAP = "CSWAP"


_GATE_ARITY = {
    GateKind.H: 1,
    GateKind.X: 1,
    GateKind.Z: 1,
    GateKind.CX: 2,
    GateKind.CSWAP: 3,
}


@dataclass(frozen=True)
class GateOp:
    """A named gate bound to target qubits.

    For CX, targets are (control, target); for CSWAP, (control, a, b).
    """

    kind: GateKind
    targets: tuple[int, ...]

    def __post_init__(self):
        want = _GATE_ARITY[self.kind]
        if len(self.targets) != want:
            raise ValueError(f"{self.kind.value} takes {want} targets, got {len(self.targets)}")
        if len(set(self.targets)) != len(self.targets):
            raise ValueError(f"{self.kind.value} targets must be distinct: {self.targets}")


class NoiseLevel(Enum):
    NONE = "NONE"
    L1 = "L1"
    L2 = "L2"


@dataclass(frozen=True)
class NoiseModel:
    """Per-gate Pauli-insertion probabilities for depolarizing trajectories."""

    level: NoiseLevel
    p1: float
    p2: float

    def __post_init__(self):
        if not (0.0 <= self.p1 <= 1.0 and 0.0 <= self.p2 <= 1.0):
            raise ValueError("noise probabilities must lie in [0, 1]")
        if self.level is NoiseLevel.NONE and (self.p1 != 0.0 or self.p2 != 0.0):
            raise ValueError("NONE noise level requires p1 = p2 = 0")

    @classmethod
    def none(cls) -> "NoiseModel":
        return cls(NoiseLevel.NONE, 0.0, 0.0)

    @classmethod
    def level1(cls) -> "NoiseModel":
        return cls(NoiseLevel.L1, 0.001, 0.001)

    @classmethod
    def level2(cls) -> "NoiseModel":
        return cls(NoiseLevel.L2, 0.01, 0.01)

    @classmethod
    def from_name(cls, name: str) -> "NoiseModel":
        table = {"none": cls.none, "l1": cls.level1, "l2": cls.level2}
        try:
            return table[name.lower()]()
        except KeyError:
            raise ValueError(f"unknown noise level {name!r}") from None

    @property
    def enabled(self) -> bool:
        return self.p1 > 0.0 or self.p2 > 0.0


@dataclass
class StateVector:
    """Dense amplitudes of a pure state over ``num_qubits`` qubits."""

    num_qubits: int
    amplitudes: np.ndarray

    def copy(self) -> "StateVector":
        return StateVector(self.num_qubits, self.amplitudes.copy())

    def norm_error(self) -> float:
        return abs(float(np.sum(np.abs(self.amplitudes) ** 2)) - 1.0)

    @property
    def dim(self) -> int:
        return 1 << self.num_qubits


def new_state(num_qubits: int, max_qubits: int = MAX_QUBITS) -> StateVector:
    """All-zeros basis state ``|0...0>``."""
    if num_qubits < 1:
        raise ValueError("need at least one qubit")
    if num_qubits > max_qubits:
        raise CapacityError(f"{num_qubits} qubits exceeds the maximum of {max_qubits}")
    amps = np.zeros(1 << num_qubits, dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(num_qubits, amps)


def from_amplitudes(amplitudes, max_qubits: int = MAX_QUBITS) -> StateVector:
    """Wrap a normalized amplitude array (length a power of two) as a state."""
    amps = np.asarray(amplitudes, dtype=np.complex128).reshape(-1)
    n = int(amps.size).bit_length() - 1
    if (1 << n) != amps.size or n < 1:
        raise ValueError(f"amplitude length {amps.size} is not a power of two >= 2")
    if n > max_qubits:
        raise CapacityError(f"{n} qubits exceeds the maximum of {max_qubits}")
    if abs(float(np.sum(np.abs(amps) ** 2)) - 1.0) > _NORM_TOL:
        raise ValueError("amplitudes are not normalized")
    return StateVector(n, amps.copy())


def _axis(state: StateVector, qubit: int) -> int:
    if not 0 <= qubit < state.num_qubits:
        raise ValueError(f"qubit {qubit} out of range for {state.num_qubits}-qubit state")
    return state.num_qubits - 1 - qubit


_COLON = slice(None)


def _index(n: int, fixed: dict[int, int]) -> tuple:
    idx = [_COLON] * n
    for axis, value in fixed.items():
        idx[axis] = value
    return tuple(idx)


def _swap_slices(tensor, idx_a, idx_b):
    tmp = tensor[idx_a].copy()
    tensor[idx_a] = tensor[idx_b]
    tensor[idx_b] = tmp


def _apply_x(state: StateVector, qubit: int) -> None:
    n = state.num_qubits
    ax = _axis(state, qubit)
    t = state.amplitudes.reshape([2] * n)
    _swap_slices(t, _index(n, {ax: 0}), _index(n, {ax: 1}))


def _apply_y(state: StateVector, qubit: int) -> None:
    n = state.num_qubits
    ax = _axis(state, qubit)
    t = state.amplitudes.reshape([2] * n)
    lo, hi = _index(n, {ax: 0}), _index(n, {ax: 1})
    a0 = t[lo].copy()
    t[lo] = -1j * t[hi]
    t[hi] = 1j * a0


def _apply_z(state: StateVector, qubit: int) -> None:
    n = state.num_qubits
    ax = _axis(state, qubit)
    t = state.amplitudes.reshape([2] * n)
    t[_index(n, {ax: 1})] *= -1.0


def _apply_h(state: StateVector, qubit: int) -> None:
    n = state.num_qubits
    ax = _axis(state, qubit)
    t = state.amplitudes.reshape([2] * n)
    lo, hi = _index(n, {ax: 0}), _index(n, {ax: 1})
    a0 = t[lo].copy()
    t[lo] = (a0 + t[hi]) * SQRT_HALF
    t[hi] = (a0 - t[hi]) * SQRT_HALF


def _apply_cx(state: StateVector, control: int, target: int) -> None:
    n = state.num_qubits
    c, x = _axis(state, control), _axis(state, target)
    t = state.amplitudes.reshape([2] * n)
    _swap_slices(t, _index(n, {c: 1, x: 0}), _index(n, {c: 1, x: 1}))


def _apply_cswap(state: StateVector, control: int, first: int, second: int) -> None:
    n = state.num_qubits
    c, a, b = _axis(state, control), _axis(state, first), _axis(state, second)
    t = state.amplitudes.reshape([2] * n)
    _swap_slices(t, _index(n, {c: 1, a: 0, b: 1}), _index(n, {c: 1, a: 1, b: 0}))


#: Direct single-call gate appliers, used by protocol inner loops where the
#: GateOp wrapper's construction cost would dominate on small states.
DIRECT_GATES = {
    GateKind.H: _apply_h,
    GateKind.X: _apply_x,
    GateKind.Z: _apply_z,
    GateKind.CX: _apply_cx,
    GateKind.CSWAP: _apply_cswap,
}


def apply_gate(state: StateVector, gate: GateOp) -> StateVector:
    """Apply one gate in place; norm is preserved to float precision."""
    DIRECT_GATES[gate.kind](state, *gate.targets)
    return state


def initialize_register(state: StateVector, qubits, amplitudes) -> StateVector:
    """Inject amplitudes into qubits that are still in ``|0>`` and unentangled.

    ``qubits[0]`` is the least significant bit of the injected register's
    index, matching the global convention.
    """
    qubits = list(qubits)
    r = len(qubits)
    amps = np.asarray(amplitudes, dtype=np.complex128).reshape(-1)
    if amps.size != (1 << r):
        raise ValueError(f"expected {1 << r} amplitudes for {r} qubits, got {amps.size}")
    if abs(float(np.sum(np.abs(amps) ** 2)) - 1.0) > _NORM_TOL:
        raise ValueError("register amplitudes are not normalized")
    n = state.num_qubits
    axes = [_axis(state, q) for q in reversed(qubits)]  # most significant first
    if len(set(axes)) != r:
        raise ValueError("register qubits must be distinct")
    rest = [a for a in range(n) if a not in set(axes)]
    perm = axes + rest
    block = state.amplitudes.reshape([2] * n).transpose(perm).reshape(1 << r, -1)
    # Support outside the register's |0...0> slice means it was already touched.
    if r < n:
        residual = float(np.sum(np.abs(block[1:]) ** 2))
    else:
        residual = float(np.sum(np.abs(block.reshape(-1)[1:]) ** 2))
    if residual > 1e-18:
        raise ValueError("register qubits are not in the ground state")
    if r == n:
        state.amplitudes = amps.copy()
        return state
    new_block = np.multiply.outer(amps, block[0])
    restored = new_block.reshape([2] * n).transpose(np.argsort(perm)).reshape(-1)
    state.amplitudes = np.ascontiguousarray(restored)
    return state


def apply_unitary(state: StateVector, qubits, matrix: np.ndarray) -> StateVector:
    """Apply a dense unitary to the named register (qubits[0] = LSB)."""
    qubits = list(qubits)
    r = len(qubits)
    matrix = np.asarray(matrix, dtype=np.complex128)
    if matrix.shape != (1 << r, 1 << r):
        raise ValueError(f"matrix shape {matrix.shape} does not act on {r} qubits")
    n = state.num_qubits
    axes = [_axis(state, q) for q in reversed(qubits)]
    rest = [a for a in range(n) if a not in set(axes)]
    perm = axes + rest
    block = state.amplitudes.reshape([2] * n).transpose(perm).reshape(1 << r, -1)
    block = matrix @ block
    restored = block.reshape([2] * n).transpose(np.argsort(perm)).reshape(-1)
    state.amplitudes = np.ascontiguousarray(restored)
    return state


def prob_zero(state: StateVector, qubit: int) -> float:
    """Probability of measuring 0 on ``qubit``."""
    n = state.num_qubits
    ax = _axis(state, qubit)
    t = state.amplitudes.reshape([2] * n)
    sl = t[_index(n, {ax: 0})]
    p = float(np.vdot(sl, sl).real)
    return min(max(p, 0.0), 1.0)


def measure_qubit(state: StateVector, qubit: int, rng: np.random.Generator):
    """Sample one computational-basis outcome and collapse in place."""
    p0 = prob_zero(state, qubit)
    bit = 0 if rng.random() < p0 else 1
    n = state.num_qubits
    ax = _axis(state, qubit)
    t = state.amplitudes.reshape([2] * n)
    t[_index(n, {ax: 1 - bit})] = 0.0
    keep = p0 if bit == 0 else 1.0 - p0
    state.amplitudes *= 1.0 / math.sqrt(keep)
    return bit, state


def apply_pauli_noise(state: StateVector, gate_targets, model: NoiseModel,
                      rng: np.random.Generator) -> StateVector:
    """One trajectory step of the depolarizing model on the gate's targets.

    With probability p1 (single target) or p2 (multi target), applies a
    uniformly random non-identity Pauli string to the targets. Draws
    nothing from ``rng`` when the applicable probability is zero, so a
    NONE model leaves downstream sampling untouched.
    """
    targets = list(gate_targets)
    p = model.p1 if len(targets) == 1 else model.p2
    if p <= 0.0:
        return state
    if rng.random() >= p:
        return state
    code = int(rng.integers(1, 4 ** len(targets)))
    for qubit in targets:
        pauli = code & 3
        code >>= 2
        if pauli == 1:
            _apply_x(state, qubit)
        elif pauli == 2:
            _apply_y(state, qubit)
        elif pauli == 3:
            _apply_z(state, qubit)
    return state


def discard_measured(state: StateVector, qubits) -> StateVector:
    """Drop qubits that are already collapsed to a basis state.

    Returns a new state over the remaining qubits with indices compacted
    (each surviving qubit's index drops by the number of discarded qubits
    below it). Raises if a listed qubit still carries superposition,
    which would mean it is unmeasured or entangled.
    """
    remaining = state
    for q in sorted(qubits, reverse=True):
        p0 = prob_zero(remaining, q)
        if min(p0, 1.0 - p0) > 1e-9:
            raise ValueError(f"qubit {q} is not collapsed; measure before discarding")
        bit = 0 if p0 >= 0.5 else 1
        n = remaining.num_qubits
        if n == 1:
            raise ValueError("cannot discard the last qubit")
        ax = _axis(remaining, q)
        t = remaining.amplitudes.reshape([2] * n)
        kept = np.ascontiguousarray(t[_index(n, {ax: bit})]).reshape(-1)
        nrm = math.sqrt(float(np.vdot(kept, kept).real))
        remaining = StateVector(n - 1, kept / nrm)
    return remaining


def overlap(a: StateVector, b: StateVector) -> complex:
    """Inner product ``<a|b>``."""
    if a.num_qubits != b.num_qubits:
        raise ValueError("states have different qubit counts")
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def join(a: StateVector, b: StateVector, max_qubits: int = MAX_QUBITS) -> StateVector:
    """Tensor product with ``b``'s qubits appended above ``a``'s.

    Qubit ``k`` of ``b`` becomes qubit ``a.num_qubits + k`` of the result.
    """
    n = a.num_qubits + b.num_qubits
    if n > max_qubits:
        raise CapacityError(f"joint state of {n} qubits exceeds the maximum of {max_qubits}")
    return StateVector(n, np.multiply.outer(b.amplitudes, a.amplitudes).reshape(-1))
