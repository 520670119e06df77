"""Feature-map amplitude vectors for the kernels the protocol estimates.

Every map produces a real, unit-norm amplitude vector of power-of-two
length together with a classical ``norm_factor``; the unnormalized kernel
value is recovered as ``norm_factor(x) * norm_factor(y) * <psi_x|psi_y>``.

Reproducibility contract: both clients regenerate identical randomized
draws from the shared seed alone. Gaussian weights come from the
Box-Muller transform on the seeded uniform stream, Cauchy weights from
``tan(pi * (u - 1/2))``, so the draws are pinned to a documented transform
rather than to a library's sampler internals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .seeding import rng_for


class FeatureMapKind(Enum):
    LINEAR = "LINEAR"
    COPIES = "COPIES"
    POLY = "POLY"
    RBF = "RBF"
    LAPLACIAN = "LAPLACIAN"


def next_power_of_two(n: int) -> int:
    if n < 1:
        raise ValueError("dimension must be positive")
    return 1 << (n - 1).bit_length()


@dataclass(frozen=True)
class FeatureMapSpec:
    """Which map to apply and its hyperparameters.

    Fields not used by ``kind`` are ignored: ``degree`` applies to COPIES
    and POLY, ``scale``/``offset`` to POLY, ``bandwidth`` to RBF,
    ``decay`` to LAPLACIAN, ``rff_features`` to RBF and LAPLACIAN.
    """

    kind: FeatureMapKind
    input_dim: int
    degree: int = 1
    scale: float = 1.0
    offset: float = 0.0
    bandwidth: float = 1.0
    decay: float = 1.0
    rff_features: int = 256

    def __post_init__(self):
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if self.degree < 1:
            raise ValueError("degree must be >= 1")
        if self.kind is FeatureMapKind.POLY and self.scale <= 0.0:
            raise ValueError("polynomial scale must be positive")
        if self.kind is FeatureMapKind.POLY and self.offset < 0.0:
            raise ValueError("polynomial offset must be non-negative")
        if self.kind is FeatureMapKind.RBF and self.bandwidth <= 0.0:
            raise ValueError("bandwidth must be positive")
        if self.kind is FeatureMapKind.LAPLACIAN and self.decay <= 0.0:
            raise ValueError("decay must be positive")
        if self.rff_features < 1:
            raise ValueError("rff_features must be >= 1")

    def encoded_dim(self) -> int:
        n = self.input_dim
        if self.kind is FeatureMapKind.LINEAR:
            return next_power_of_two(n)
        if self.kind is FeatureMapKind.COPIES:
            return next_power_of_two(n) ** self.degree
        if self.kind is FeatureMapKind.POLY:
            return next_power_of_two(math.comb(n + self.degree, self.degree))
        return next_power_of_two(2 * self.rff_features)

    def num_qubits(self) -> int:
        return self.encoded_dim().bit_length() - 1


@dataclass(frozen=True)
class RffDraw:
    """Random feature draw; identical on both clients for a given seed."""

    weights: np.ndarray            # (rff_features, input_dim)
    phases: np.ndarray | None      # (rff_features,) for LAPLACIAN, else None


@dataclass(frozen=True)
class EncodedPoint:
    """Unit-norm amplitudes plus the classical rescaling factor."""

    amplitudes: np.ndarray         # float64, length spec.encoded_dim()
    norm_factor: float
    spec: FeatureMapSpec


class EncodingError(ValueError):
    """Input cannot be encoded (zero vector, dimension overflow, ...)."""


def _pad_normalize(values: np.ndarray, dim: int, spec: FeatureMapSpec,
                   norm_factor: float | None = None) -> EncodedPoint:
    nrm = float(np.linalg.norm(values))
    if nrm <= 0.0:
        raise EncodingError("cannot encode a zero vector")
    amps = np.zeros(dim, dtype=np.float64)
    amps[: values.size] = values / nrm
    return EncodedPoint(amps, nrm if norm_factor is None else norm_factor, spec)


def encode_linear(x) -> EncodedPoint:
    """Zero-padded, normalized copy of ``x``; norm_factor is ``||x||``."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    spec = FeatureMapSpec(FeatureMapKind.LINEAR, input_dim=x.size)
    return _pad_normalize(x, spec.encoded_dim(), spec)


def encode_copies(x, degree: int) -> EncodedPoint:
    """``degree``-fold tensor power of the normalized padded input."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    spec = FeatureMapSpec(FeatureMapKind.COPIES, input_dim=x.size, degree=degree)
    nrm = float(np.linalg.norm(x))
    if nrm <= 0.0:
        raise EncodingError("cannot encode a zero vector")
    base = np.zeros(next_power_of_two(x.size), dtype=np.float64)
    base[: x.size] = x / nrm
    amps = base
    for _ in range(degree - 1):
        amps = np.kron(amps, base)
    return EncodedPoint(amps, nrm ** degree, spec)


def multi_indices(total: int, slots: int):
    """All multi-indices with the given sum, lexicographically decreasing.

    The enumeration order is normative: both clients must map the same
    multi-index to the same basis state.
    """
    if slots == 1:
        yield (total,)
        return
    for head in range(total, -1, -1):
        for tail in multi_indices(total - head, slots - 1):
            yield (head,) + tail


def encode_poly(x, scale: float, offset: float, degree: int) -> EncodedPoint:
    """Multinomial feature map whose kernel is ``(scale*x.y + offset)**degree``.

    Component for multi-index ``k = (k_1..k_N, k_c)``:

        sqrt(degree!/(k_1!..k_N!k_c!)) * prod((sqrt(scale)*x_i)**k_i) * sqrt(offset)**k_c

    The sqrt(scale) factor multiplies each data-carrying coordinate (not
    the component as a whole); this is the placement under which the
    pairwise product telescopes to the stated kernel by the multinomial
    theorem, verified in the test suite.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    n = x.size
    spec = FeatureMapSpec(FeatureMapKind.POLY, input_dim=n, degree=degree,
                          scale=scale, offset=offset)
    raw_dim = math.comb(n + degree, degree)
    if raw_dim > (1 << 26):
        raise EncodingError(f"polynomial map dimension {raw_dim} exceeds capacity")
    scaled = math.sqrt(scale) * x
    sqrt_offset = math.sqrt(offset)
    fact_d = math.factorial(degree)
    components = np.empty(raw_dim, dtype=np.float64)
    for row, k in enumerate(multi_indices(degree, n + 1)):
        denom = 1
        for kl in k:
            denom *= math.factorial(kl)
        coeff = math.sqrt(fact_d / denom)
        term = coeff * (sqrt_offset ** k[-1])
        for i in range(n):
            if k[i]:
                term *= scaled[i] ** k[i]
        components[row] = term
    return _pad_normalize(components, spec.encoded_dim(), spec)


@lru_cache(maxsize=16)
def _cached_rff(spec: FeatureMapSpec, shared_seed: int) -> RffDraw:
    rng = rng_for(shared_seed, "rff", spec.kind.value, spec.input_dim,
                  spec.rff_features, spec.bandwidth, spec.decay)
    d, n = spec.rff_features, spec.input_dim
    u1 = rng.random((d, n))
    u2 = rng.random((d, n))
    if spec.kind is FeatureMapKind.RBF:
        # Box-Muller, cosine branch; 1-u1 keeps the log argument in (0, 1].
        weights = np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)
        weights /= spec.bandwidth
        phases = None
    else:
        weights = np.tan(np.pi * (u1 - 0.5)) / spec.decay
        phases = 2.0 * np.pi * rng.random(d)
    weights.setflags(write=False)
    if phases is not None:
        phases.setflags(write=False)
    return RffDraw(weights, phases)


def sample_rff(spec: FeatureMapSpec, shared_seed: int) -> RffDraw:
    """Regenerate the random-feature draw for (seed, spec).

    RBF weights are componentwise Normal(0, bandwidth**-2); LAPLACIAN
    weights are componentwise Cauchy(0, decay**-1) with Uniform[0, 2pi)
    phases. Draw order is fixed (two uniform blocks, then phases), so the
    output is bit-identical for identical inputs.
    """
    if spec.kind not in (FeatureMapKind.RBF, FeatureMapKind.LAPLACIAN):
        raise ValueError(f"{spec.kind.value} map does not use random features")
    return _cached_rff(spec, shared_seed)


def encode_rff(x, draw: RffDraw, spec: FeatureMapSpec) -> EncodedPoint:
    """Interleaved cos/sin features at angles ``w_j . x (+ phase_j)``.

    Feature j (1-based) lands on basis states 2j-2 and 2j-1; the vector is
    exactly unit norm, so norm_factor is 1.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != spec.input_dim:
        raise ValueError(f"input has {x.size} features, spec expects {spec.input_dim}")
    if draw.weights.shape != (spec.rff_features, spec.input_dim):
        raise ValueError("draw does not match spec")
    if (spec.kind is FeatureMapKind.LAPLACIAN) != (draw.phases is not None):
        raise ValueError("draw does not match spec")
    theta = draw.weights @ x
    if draw.phases is not None:
        theta = theta + draw.phases
    scale = 1.0 / math.sqrt(spec.rff_features)
    amps = np.zeros(spec.encoded_dim(), dtype=np.float64)
    amps[0: 2 * spec.rff_features: 2] = np.cos(theta) * scale
    amps[1: 2 * spec.rff_features: 2] = np.sin(theta) * scale
    return EncodedPoint(amps, 1.0, spec)


def encode_point(x, spec: FeatureMapSpec, draw: RffDraw | None = None) -> EncodedPoint:
    """Dispatch to the encoder named by ``spec.kind``."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != spec.input_dim:
        raise ValueError(f"input has {x.size} features, spec expects {spec.input_dim}")
    if spec.kind is FeatureMapKind.LINEAR:
        return encode_linear(x)
    if spec.kind is FeatureMapKind.COPIES:
        return encode_copies(x, spec.degree)
    if spec.kind is FeatureMapKind.POLY:
        return encode_poly(x, spec.scale, spec.offset, spec.degree)
    if draw is None:
        raise ValueError(f"{spec.kind.value} encoding needs a random-feature draw")
    return encode_rff(x, draw, spec)


def self_kernel(x, spec: FeatureMapSpec) -> float:
    """Closed-form K(x, x); equals norm_factor(x)**2 for every map."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    sq = float(x @ x)
    if spec.kind is FeatureMapKind.LINEAR:
        return sq
    if spec.kind is FeatureMapKind.COPIES:
        return sq ** spec.degree
    if spec.kind is FeatureMapKind.POLY:
        return (spec.scale * sq + spec.offset) ** spec.degree
    return 1.0


def obfuscation_unitary(dim: int, shared_seed: int, round_index: int):
    """Seeded signed permutation shared by the two clients.

    Returns ``(perm, signs)``; the randomized encoding is
    ``amps -> signs * amps[perm]``. Applying the same pair to both
    parties' vectors is a shared real unitary, so every pairwise inner
    product is unchanged.
    """
    if dim < 1 or dim & (dim - 1):
        raise ValueError("dimension must be a power of two")
    rng = rng_for(shared_seed, "obfuscation", round_index)
    perm = rng.permutation(dim)
    signs = 1.0 - 2.0 * rng.integers(0, 2, size=dim).astype(np.float64)
    return perm, signs


def apply_obfuscation(point: EncodedPoint, perm: np.ndarray, signs: np.ndarray) -> EncodedPoint:
    return EncodedPoint(signs * point.amplitudes[perm], point.norm_factor, point.spec)
