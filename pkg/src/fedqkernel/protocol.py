"""Two-client kernel-estimation sessions over teleported registers.

One session estimates the squared overlap of two encoded points: a helper
hands out Bell pairs, each client teleports its register to the server
qubit by qubit (sending two classical correction bits per qubit), and the
server runs repeated swap-test shots on the received registers.

Execution modes:

* STREAMING (default): each teleported qubit is measured and discarded
  eagerly, and the two registers are teleported as separate tensor
  factors, so the live width never exceeds ``2n + 3`` qubits. Statistics
  are identical to the monolithic circuit; the equivalence is covered by
  tests.
* FULL_CIRCUIT: the literal ``6n + 1``-qubit system (two data registers,
  2n Bell pairs, one ancilla), feasible only for small ``n``; kept as a
  cross-check of the streaming mode.

Shot accounting: with noise disabled the circuit is executed once and the
``p`` shots are drawn from the exact Bernoulli law of the analytic ancilla
probability, which is statistically identical to re-running the circuit.
With noise enabled every shot re-executes the full circuit so each shot
sees a fresh noise trajectory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .encodings import (
    EncodedPoint,
    FeatureMapKind,
    FeatureMapSpec,
    RffDraw,
    apply_obfuscation,
    encode_point,
    obfuscation_unitary,
    sample_rff,
)
from .seeding import derive_seed, rng_for
from .simulator import (
    DIRECT_GATES,
    MAX_QUBITS,
    SQRT_HALF,
    CapacityError,
    GateKind,
    NoiseModel,
    StateVector,
    apply_pauli_noise,
    apply_unitary,
    discard_measured,
    from_amplitudes,
    initialize_register,
    join,
    measure_qubit,
    new_state,
    prob_zero,
)


class ProtocolError(Exception):
    """A party broke the protocol (reused Bell pair, bad register, ...)."""


class PartyId(Enum):
    HELPER = "HELPER"
    CLIENT_A = "CLIENT_A"
    CLIENT_B = "CLIENT_B"
    SERVER = "SERVER"
    EAVESDROPPER = "EAVESDROPPER"


class CircuitMode(Enum):
    FULL_CIRCUIT = "FULL_CIRCUIT"
    STREAMING = "STREAMING"


def required_qubits(num_qubits: int, mode: CircuitMode) -> int:
    """Peak simulated width for a session over ``num_qubits``-qubit registers."""
    if mode is CircuitMode.FULL_CIRCUIT:
        return 6 * num_qubits + 1
    return 2 * num_qubits + 3


@dataclass
class SessionConfig:
    """Everything that determines one session given the data pair."""

    num_qubits: int
    shots: int = 1024
    noise: NoiseModel = field(default_factory=NoiseModel.none)
    shared_seed: int = 0
    mode: CircuitMode = CircuitMode.STREAMING
    decoy: bool = False
    adversary: bool = False
    obfuscate: bool = True
    encoding_repeats: int = 1
    session_seed: int = 0
    #: Noisy streaming shots run as one vectorized trajectory batch; turn
    #: off to force the scalar per-shot path (same distribution, slower).
    batched_noise: bool = True

    def __post_init__(self):
        if self.num_qubits < 1:
            raise ValueError("num_qubits must be >= 1")
        if self.shots < 1:
            raise ValueError("shots must be >= 1")
        if self.encoding_repeats < 1:
            raise ValueError("encoding_repeats must be >= 1")
        need = required_qubits(self.num_qubits, self.mode)
        if need > MAX_QUBITS:
            raise CapacityError(
                f"{self.mode.value} session over {self.num_qubits}-qubit registers "
                f"needs {need} qubits, exceeding the maximum of {MAX_QUBITS}")


@dataclass(frozen=True)
class ClassicalMessage:
    """Two correction bits for one teleported qubit."""

    sender: PartyId
    receiver: PartyId
    qubit_index: int
    data_bit: int
    pair_bit: int


@dataclass
class ClassicalChannel:
    """In-process message bus standing in for the encrypted classical channel."""

    trace: list = field(default_factory=list)

    def send(self, message: ClassicalMessage) -> None:
        self.trace.append(message)


@dataclass
class BellPair:
    """One entangled pair: qubit 0 is the client half, qubit 1 the server half."""

    state: StateVector
    owner: PartyId
    used: bool = False
    tampered: bool = False


@dataclass
class ProtocolTranscript:
    """Audit record of one session."""

    session_id: str
    num_qubits: int
    shots: int
    mode: str
    noise_level: str
    bits_a: list
    bits_b: list
    shot_outcomes: list
    estimate: float
    norm_factor_a: float
    norm_factor_b: float
    decoy_verdict: bool | None = None
    meta: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        rec = {
            "session_id": self.session_id,
            "num_qubits": self.num_qubits,
            "shots": self.shots,
            "mode": self.mode,
            "noise": self.noise_level,
            "bits_a": "".join(f"{d}{c}" for d, c in self.bits_a),
            "bits_b": "".join(f"{d}{c}" for d, c in self.bits_b),
            "shot_zeros": int(sum(1 for b in self.shot_outcomes if b == 0)),
            "estimate": self.estimate,
            "norm_factor_a": self.norm_factor_a,
            "norm_factor_b": self.norm_factor_b,
            "decoy_verdict": self.decoy_verdict,
        }
        rec.update(self.meta)
        return rec


_BELL_AMPLITUDES = np.array([1.0, 0.0, 0.0, 1.0], dtype=np.complex128) * SQRT_HALF


def _make_pairs(count: int, owner: PartyId, noise: NoiseModel,
                rng: np.random.Generator | None) -> list[BellPair]:
    pairs = []
    for _ in range(count):
        if noise.enabled:
            state = new_state(2)
            _gate(state, GateKind.H, (0,), noise, rng)
            _gate(state, GateKind.CX, (0, 1), noise, rng)
        else:
            # Exactly the H;CX output on |00>, skipping the per-pair gate cost.
            state = StateVector(2, _BELL_AMPLITUDES.copy())
        pairs.append(BellPair(state, owner))
    return pairs


def prepare_bell_pairs(n: int, noise: NoiseModel | None = None,
                       rng: np.random.Generator | None = None) -> list[BellPair]:
    """Helper step: 2n Bell pairs, the first n owned by client A, the rest by B."""
    if n < 1:
        raise ValueError("n must be >= 1")
    noise = noise or NoiseModel.none()
    if noise.enabled and rng is None:
        raise ValueError("noisy pair preparation needs a generator")
    return (_make_pairs(n, PartyId.CLIENT_A, noise, rng)
            + _make_pairs(n, PartyId.CLIENT_B, noise, rng))


def intercept_resend(pair: BellPair, rng: np.random.Generator) -> int:
    """Eavesdropper attack on one in-flight pair.

    Measures the server-bound half in the computational basis and forwards
    a fresh basis state carrying the outcome; after the measurement the
    pair has collapsed to exactly that product state, so the collapse is
    the attack.
    """
    bit, _ = measure_qubit(pair.state, 1, rng)
    pair.tampered = True
    return bit


def _gate(state: StateVector, kind: GateKind, targets: tuple,
          noise: NoiseModel, rng: np.random.Generator | None) -> None:
    DIRECT_GATES[kind](state, *targets)
    if noise.enabled:
        apply_pauli_noise(state, targets, noise, rng)


def teleport_register(register: StateVector, pairs: list[BellPair],
                      rng: np.random.Generator,
                      noise: NoiseModel | None = None,
                      adversary: bool = False,
                      channel: ClassicalChannel | None = None,
                      sender: PartyId = PartyId.CLIENT_A):
    """Teleport an n-qubit register through n fresh Bell pairs.

    Streaming schedule: for each data qubit, entangle it with its Bell
    half (CX with the data qubit as control), apply H to the data qubit,
    measure both, send the two bits, apply X (pair bit) and Z (data bit)
    on the server half, and discard the measured qubits. Returns the
    server's n-qubit register and the classical messages; in the
    noiseless case the output equals the input up to global phase.
    """
    noise = noise or NoiseModel.none()
    n = register.num_qubits
    if len(pairs) != n:
        raise ProtocolError(f"register of {n} qubits needs {n} pairs, got {len(pairs)}")
    work = register.copy()
    messages = []
    for i, pair in enumerate(pairs):
        if pair.used:
            raise ProtocolError(f"Bell pair {i} was already consumed")
        pair.used = True
        if adversary:
            intercept_resend(pair, rng)
        width = work.num_qubits
        work = join(work, pair.state)
        client_half, server_half = width, width + 1
        # The next untraveled data qubit is always index 0: earlier rounds
        # discarded the qubits below it.
        _gate(work, GateKind.CX, (0, client_half), noise, rng)
        _gate(work, GateKind.H, (0,), noise, rng)
        data_bit, _ = measure_qubit(work, 0, rng)
        pair_bit, _ = measure_qubit(work, client_half, rng)
        if pair_bit:
            _gate(work, GateKind.X, (server_half,), noise, rng)
        if data_bit:
            _gate(work, GateKind.Z, (server_half,), noise, rng)
        work = discard_measured(work, [0, client_half])
        message = ClassicalMessage(sender, PartyId.SERVER, i, data_bit, pair_bit)
        messages.append(message)
        if channel is not None:
            channel.send(message)
    return work, messages


def swap_test(server_a: StateVector, server_b: StateVector,
              noise: NoiseModel | None = None,
              rng: np.random.Generator | None = None) -> int:
    """One swap-test shot; returns the measured ancilla bit.

    Noiseless ancilla statistics: P(0) = 1/2 + |<a|b>|**2 / 2.
    """
    noise = noise or NoiseModel.none()
    if server_a.num_qubits != server_b.num_qubits:
        raise ProtocolError("swap test requires registers of equal size")
    n = server_a.num_qubits
    joint = join(join(server_a, server_b), new_state(1))
    ancilla = 2 * n
    _gate(joint, GateKind.H, (ancilla,), noise, rng)
    for i in range(n):
        _gate(joint, GateKind.CSWAP, (ancilla, i, n + i), noise, rng)
    _gate(joint, GateKind.H, (ancilla,), noise, rng)
    bit, _ = measure_qubit(joint, ancilla, rng)
    return bit


def swap_probability(server_a: StateVector, server_b: StateVector) -> float:
    """Analytic P(ancilla = 0) of the noiseless swap test."""
    if server_a.num_qubits != server_b.num_qubits:
        raise ProtocolError("swap test requires registers of equal size")
    n = server_a.num_qubits
    joint = join(join(server_a, server_b), new_state(1))
    ancilla = 2 * n
    quiet = NoiseModel.none()
    _gate(joint, GateKind.H, (ancilla,), quiet, None)
    for i in range(n):
        _gate(joint, GateKind.CSWAP, (ancilla, i, n + i), quiet, None)
    _gate(joint, GateKind.H, (ancilla,), quiet, None)
    return prob_zero(joint, ancilla)


def estimate_overlap(shot_outcomes) -> float:
    """Unbiased squared-overlap estimate ``2 * P_hat(0) - 1``.

    May be negative at finite shots; clipping is the consumer's business.
    """
    outcomes = list(shot_outcomes)
    if not outcomes:
        raise ValueError("cannot estimate from an empty outcome list")
    zeros = sum(1 for b in outcomes if b == 0)
    return 2.0 * zeros / len(outcomes) - 1.0


def _encode_session_pair(x, y, spec: FeatureMapSpec, config: SessionConfig,
                         repeat_index: int) -> tuple[EncodedPoint, EncodedPoint]:
    draw: RffDraw | None = None
    if spec.kind in (FeatureMapKind.RBF, FeatureMapKind.LAPLACIAN):
        draw = sample_rff(spec, config.shared_seed)
    ea = encode_point(x, spec, draw)
    eb = encode_point(y, spec, draw)
    if config.obfuscate:
        round_index = derive_seed(config.session_seed, "round", repeat_index)
        perm, signs = obfuscation_unitary(spec.encoded_dim(), config.shared_seed, round_index)
        ea = apply_obfuscation(ea, perm, signs)
        eb = apply_obfuscation(eb, perm, signs)
    return ea, eb


def _streaming_once(ea: EncodedPoint, eb: EncodedPoint, config: SessionConfig,
                    rng: np.random.Generator, measure_shot: bool):
    n = config.num_qubits
    pairs = prepare_bell_pairs(n, config.noise, rng)
    server_a, msgs_a = teleport_register(
        from_amplitudes(ea.amplitudes), pairs[:n], rng, config.noise,
        config.adversary, sender=PartyId.CLIENT_A)
    server_b, msgs_b = teleport_register(
        from_amplitudes(eb.amplitudes), pairs[n:], rng, config.noise,
        config.adversary, sender=PartyId.CLIENT_B)
    if measure_shot:
        value = swap_test(server_a, server_b, config.noise, rng)
    else:
        value = swap_probability(server_a, server_b)
    return value, msgs_a, msgs_b


def _full_circuit_once(ea: EncodedPoint, eb: EncodedPoint, config: SessionConfig,
                       rng: np.random.Generator, measure_shot: bool):
    """The literal monolithic circuit over 6n+1 qubits.

    Layout: A data 0..n-1, B data n..2n-1, A pair halves (client 2n+i,
    server 3n+i), B pair halves (client 4n+i, server 5n+i), ancilla 6n.
    """
    n = config.num_qubits
    noise = config.noise
    state = new_state(6 * n + 1)
    for i in range(n):  # helper prepares 2n Bell pairs in place
        _gate(state, GateKind.H, (2 * n + i,), noise, rng)
        _gate(state, GateKind.CX, (2 * n + i, 3 * n + i), noise, rng)
        _gate(state, GateKind.H, (4 * n + i,), noise, rng)
        _gate(state, GateKind.CX, (4 * n + i, 5 * n + i), noise, rng)
    if config.adversary:
        for i in range(n):
            measure_qubit(state, 3 * n + i, rng)
            measure_qubit(state, 5 * n + i, rng)
    initialize_register(state, range(0, n), ea.amplitudes)
    initialize_register(state, range(n, 2 * n), eb.amplitudes)
    bits = {PartyId.CLIENT_A: [], PartyId.CLIENT_B: []}
    for party, data0, client0, server0 in (
            (PartyId.CLIENT_A, 0, 2 * n, 3 * n),
            (PartyId.CLIENT_B, n, 4 * n, 5 * n)):
        for i in range(n):
            _gate(state, GateKind.CX, (data0 + i, client0 + i), noise, rng)
            _gate(state, GateKind.H, (data0 + i,), noise, rng)
            data_bit, _ = measure_qubit(state, data0 + i, rng)
            pair_bit, _ = measure_qubit(state, client0 + i, rng)
            if pair_bit:
                _gate(state, GateKind.X, (server0 + i,), noise, rng)
            if data_bit:
                _gate(state, GateKind.Z, (server0 + i,), noise, rng)
            bits[party].append(ClassicalMessage(party, PartyId.SERVER, i, data_bit, pair_bit))
    ancilla = 6 * n
    _gate(state, GateKind.H, (ancilla,), noise, rng)
    for i in range(n):
        _gate(state, GateKind.CSWAP, (ancilla, 3 * n + i, 5 * n + i), noise, rng)
    _gate(state, GateKind.H, (ancilla,), noise, rng)
    if measure_shot:
        value, _ = measure_qubit(state, ancilla, rng)
    else:
        value = prob_zero(state, ancilla)
    return value, bits[PartyId.CLIENT_A], bits[PartyId.CLIENT_B]


def _session_once(ea, eb, config, rng, measure_shot):
    if config.mode is CircuitMode.FULL_CIRCUIT:
        return _full_circuit_once(ea, eb, config, rng, measure_shot)
    return _streaming_once(ea, eb, config, rng, measure_shot)


def _streaming_batch(ea: EncodedPoint, eb: EncodedPoint, config: SessionConfig,
                     rng: np.random.Generator):
    """All noisy shots of a streaming session as one trajectory batch."""
    from . import trajectories as tj

    n = config.num_qubits
    shots = config.shots
    noise = config.noise

    def fresh_pair() -> "tj.Batch":
        pair = tj.Batch.ground(shots, 2)
        tj.gate_h(pair, 0)
        tj.pauli_noise(pair, (0,), noise.p1, rng)
        tj.gate_cx(pair, 0, 1)
        tj.pauli_noise(pair, (0, 1), noise.p2, rng)
        return pair

    def teleport(amplitudes):
        work = tj.Batch.broadcast(shots, amplitudes)
        data_bits = np.empty((shots, n), dtype=np.int64)
        pair_bits = np.empty((shots, n), dtype=np.int64)
        for i in range(n):
            pair = fresh_pair()
            if config.adversary:
                tj.measure(pair, 1, rng)
            width = work.num_qubits
            work = tj.join(work, pair)
            client, server = width, width + 1
            tj.gate_cx(work, 0, client)
            tj.pauli_noise(work, (0, client), noise.p2, rng)
            tj.gate_h(work, 0)
            tj.pauli_noise(work, (0,), noise.p1, rng)
            data_bits[:, i] = tj.measure(work, 0, rng)
            pair_bits[:, i] = tj.measure(work, client, rng)
            rows_x = np.flatnonzero(pair_bits[:, i])
            if rows_x.size:
                tj.gate_x(work, server, rows=rows_x)
                tj.pauli_noise(work, (server,), noise.p1, rng, rows=rows_x)
            rows_z = np.flatnonzero(data_bits[:, i])
            if rows_z.size:
                tj.gate_z(work, server, rows=rows_z)
                tj.pauli_noise(work, (server,), noise.p1, rng, rows=rows_z)
            work = tj.discard(work, client, pair_bits[:, i])
            work = tj.discard(work, 0, data_bits[:, i])
        return work, data_bits, pair_bits

    server_a, da, pa = teleport(ea.amplitudes)
    server_b, db, pb = teleport(eb.amplitudes)
    joint = tj.append_zero_qubit(tj.join(server_a, server_b))
    ancilla = 2 * n
    tj.gate_h(joint, ancilla)
    tj.pauli_noise(joint, (ancilla,), noise.p1, rng)
    for i in range(n):
        tj.gate_cswap(joint, ancilla, i, n + i)
        tj.pauli_noise(joint, (ancilla, i, n + i), noise.p2, rng)
    tj.gate_h(joint, ancilla)
    tj.pauli_noise(joint, (ancilla,), noise.p1, rng)
    outcomes = tj.measure(joint, ancilla, rng)
    bits_a = list(zip(da[0].tolist(), pa[0].tolist()))
    bits_b = list(zip(db[0].tolist(), pb[0].tolist()))
    return outcomes, bits_a, bits_b


def run_session(x, y, spec: FeatureMapSpec, config: SessionConfig) -> ProtocolTranscript:
    """Execute one full kernel-estimation session for the pair (x, y)."""
    n = spec.num_qubits()
    if n != config.num_qubits:
        raise ValueError(f"spec encodes into {n} qubits but config says {config.num_qubits}")
    rng = rng_for(config.session_seed, "trajectory")
    outcomes: list[int] = []
    first_bits = None
    norms = (1.0, 1.0)
    for rep in range(config.encoding_repeats):
        ea, eb = _encode_session_pair(x, y, spec, config, rep)
        norms = (ea.norm_factor, eb.norm_factor)
        if config.noise.enabled:
            if config.batched_noise and config.mode is CircuitMode.STREAMING:
                shot_bits, bits_a, bits_b = _streaming_batch(ea, eb, config, rng)
                outcomes.extend(int(b) for b in shot_bits)
            else:
                bits_a = bits_b = None
                for _ in range(config.shots):
                    bit, msgs_a, msgs_b = _session_once(ea, eb, config, rng, measure_shot=True)
                    outcomes.append(bit)
                    if bits_a is None:
                        bits_a = [(m.data_bit, m.pair_bit) for m in msgs_a]
                        bits_b = [(m.data_bit, m.pair_bit) for m in msgs_b]
        else:
            p0, msgs_a, msgs_b = _session_once(ea, eb, config, rng, measure_shot=False)
            shot_bits = (rng.random(config.shots) >= p0).astype(int)
            outcomes.extend(int(b) for b in shot_bits)
            bits_a = [(m.data_bit, m.pair_bit) for m in msgs_a]
            bits_b = [(m.data_bit, m.pair_bit) for m in msgs_b]
        if first_bits is None:
            first_bits = (bits_a, bits_b)
    bits_a, bits_b = first_bits
    return ProtocolTranscript(
        session_id=f"{config.session_seed & (2**64 - 1):016x}",
        num_qubits=n,
        shots=len(outcomes),
        mode=config.mode.value,
        noise_level=config.noise.level.value,
        bits_a=bits_a,
        bits_b=bits_b,
        shot_outcomes=outcomes,
        estimate=estimate_overlap(outcomes),
        norm_factor_a=norms[0],
        norm_factor_b=norms[1],
    )


def session_ancilla_probability(x, y, spec: FeatureMapSpec, config: SessionConfig) -> float:
    """Analytic P(ancilla = 0) for a noiseless session under ``config``.

    The teleportation corrections make the server registers exact, so the
    value is independent of which measurement outcomes the trajectory
    sampled.
    """
    if config.noise.enabled:
        raise ValueError("analytic ancilla probability is defined for noiseless sessions")
    rng = rng_for(config.session_seed, "trajectory")
    ea, eb = _encode_session_pair(x, y, spec, config, 0)
    value, _, _ = _session_once(ea, eb, config, rng, measure_shot=False)
    return value


def inverse_preparation(amplitudes) -> np.ndarray:
    """Unitary sending the given state to ``|0...0>`` (up to global phase)."""
    amps = np.asarray(amplitudes, dtype=np.complex128).reshape(-1)
    dim = amps.size
    m = np.eye(dim, dtype=np.complex128)
    m[:, 0] = amps
    q, _ = np.linalg.qr(m)
    return q.conj().T


def decoy_state(num_qubits: int, shared_seed: int, session_seed: int) -> np.ndarray:
    """The predetermined random state for a decoy session.

    Both the client and the server derive it from the shared schedule, so
    the server knows the inverse preparation.
    """
    rng = rng_for(shared_seed, "decoy-state", session_seed)
    amps = rng.normal(size=1 << num_qubits) + 1j * rng.normal(size=1 << num_qubits)
    return amps / np.linalg.norm(amps)


def run_decoy_session(config: SessionConfig) -> bool:
    """Teleport a known random state and verify it server-side.

    The server applies the scheduled inverse preparation and measures all
    qubits; the verdict is pass iff every outcome is zero. Noiseless and
    untampered sessions always pass.
    """
    n = config.num_qubits
    rng = rng_for(config.session_seed, "decoy-trajectory")
    amps = decoy_state(n, config.shared_seed, config.session_seed)
    pairs = _make_pairs(n, PartyId.CLIENT_A, config.noise, rng)
    server, _ = teleport_register(from_amplitudes(amps), pairs, rng,
                                  config.noise, config.adversary,
                                  sender=PartyId.CLIENT_A)
    apply_unitary(server, range(n), inverse_preparation(amps))
    return all(measure_qubit(server, q, rng)[0] == 0 for q in range(n))


def write_transcripts(path, transcripts) -> int:
    """Append transcripts to a line-delimited JSON file; returns the count."""
    count = 0
    with open(path, "a", encoding="utf-8") as handle:
        for transcript in transcripts:
            handle.write(json.dumps(transcript.to_record(), sort_keys=True) + "\n")
            count += 1
    return count


def read_transcripts(path) -> list[dict]:
    with open(path, encoding="utf-8") as handle:
        return [json.loads(line) for line in handle if line.strip()]
