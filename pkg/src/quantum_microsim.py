"""
Quantum Microsim - exhaustive statevector simulation of the honest prover circuit.

This module provides functionality to:
- Build a toy claw-free pair f_b(x) = x + b*s mod N (optionally with a noise register)
- Enumerate every measurement outcome of the honest prover circuit exactly:
  state preparation, image measurement, oracle phase via a |-> target,
  Hadamard on all remaining qubits, final measurement
- Compute the two-branch measurement law for arbitrary real amplitudes
- Compute Hellinger, total-variation and pure-state trace distances

Amplitudes are real throughout. Registers are little qubit counts only:
the whole state is held in memory.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

from src.ring_core import ProtocolError, is_power_of_two


logger = logging.getLogger(__name__)

MAX_DOMAIN = 1 << 10
MAX_STATE_DIM = 1 << 24
PROB_EPS = 1e-15

_H = np.array([[1.0, 1.0], [1.0, -1.0]]) / math.sqrt(2)
_MINUS = np.array([1.0, -1.0]) / math.sqrt(2)

HashTable = Union[Mapping[int, int], Sequence[int], np.ndarray]


class ResourceError(ProtocolError):
    """Instance too large for exhaustive simulation."""
    pass


@dataclass(frozen=True)
class ToyTcf:
    """Toy injective pair over Z_N with claw relation x0 = x1 + s mod N.

    With K > 1 the range is Z_N x Z_K: every image carries a noise value e
    with weight exp(-pi e^2 / width^2) (e centered mod K); branch 1 shifts
    the noise by skew, which makes the two branch amplitudes unequal.
    """

    N: int
    s: int
    K: int = 1
    width: float = 1.0
    skew: int = 0

    def __post_init__(self):
        if not is_power_of_two(self.N) or self.N < 2:
            raise ValueError(f"N must be a power of two >= 2, got {self.N}")
        if self.N > MAX_DOMAIN:
            raise ResourceError(f"Domain size {self.N} exceeds {MAX_DOMAIN}")
        if not 0 <= self.s < self.N:
            raise ValueError(f"s must lie in [0, {self.N}), got {self.s}")
        if not is_power_of_two(self.K):
            raise ValueError(f"K must be a power of two, got {self.K}")
        if not 0 <= self.skew < self.K:
            raise ValueError(f"skew must lie in [0, {self.K}), got {self.skew}")
        if self.width <= 0:
            raise ValueError("width must be positive")

    @property
    def nbits(self) -> int:
        return self.N.bit_length() - 1

    def f(self, b: int, x: int) -> int:
        return (x + b * self.s) % self.N

    def claw(self, y: int):
        """(x0, x1) with f_0(x0) = f_1(x1) = y."""
        return y % self.N, (y - self.s) % self.N

    def noise_distribution(self, b: int) -> np.ndarray:
        """Normalised noise law of branch b over Z_K."""
        e = np.arange(self.K)
        shifted = (e - b * self.skew) % self.K
        centered = np.where(shifted > self.K // 2, shifted - self.K, shifted)
        weights = np.exp(-math.pi * centered.astype(float) ** 2 / self.width ** 2)
        return weights / weights.sum()


@dataclass
class StateVector:
    """Real amplitudes with labelled register shape; normalised on construction."""

    amplitudes: np.ndarray
    registers: Dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=float)
        norm = float(np.sum(self.amplitudes ** 2))
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"State is not normalised: squared norm {norm}")
        if self.registers and int(np.prod(list(self.registers.values()))) != self.amplitudes.size:
            raise ValueError("Register sizes do not match the amplitude count")

    @property
    def dim(self) -> int:
        return int(self.amplitudes.size)

    def probabilities(self) -> np.ndarray:
        return self.amplitudes.ravel() ** 2

    def inner(self, other: "StateVector") -> float:
        if self.dim != other.dim:
            raise ValueError(f"Dimension mismatch: {self.dim} vs {other.dim}")
        return float(np.dot(self.amplitudes.ravel(), other.amplitudes.ravel()))


@dataclass
class MicrosimResult:
    """Outcome table plus the worst norm drift seen at each circuit stage."""

    table: pd.DataFrame
    norm_drift: Dict[str, float]

    @property
    def total_mass(self) -> float:
        return float(self.table["probability"].sum())

    @property
    def satisfied_mass(self) -> float:
        return float(self.table.loc[self.table["satisfies"], "probability"].sum())

    @property
    def m_prime_one_mass(self) -> float:
        return float(self.table.loc[self.table["m_prime"] == 1, "probability"].sum())

    def d_marginal(self) -> pd.Series:
        return self.table.groupby("d")["probability"].sum()


def _hash_bits(h_table: HashTable, N: int) -> np.ndarray:
    if isinstance(h_table, Mapping):
        bits = np.array([h_table[x] for x in range(N)], dtype=np.int64)
    else:
        bits = np.asarray(h_table, dtype=np.int64)
    if bits.shape != (N,) or ((bits != 0) & (bits != 1)).any():
        raise ValueError(f"Oracle table must give a bit for each of the {N} domain points")
    return bits


def _parity(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.int64)
    out = np.zeros_like(values)
    width = int(values.max(initial=0)).bit_length()
    for shift in range(width):
        out ^= (values >> shift) & 1
    return out


def _apply_hadamard_all(state: np.ndarray, nqubits: int) -> np.ndarray:
    """H on every qubit of the trailing axis (size 2^nqubits), leading axes batched."""
    lead = state.shape[:-1]
    state = state.reshape(lead + (2,) * nqubits)
    offset = len(lead)
    for qubit in range(nqubits):
        axis = offset + qubit
        state = np.moveaxis(np.tensordot(state, _H, axes=([axis], [1])), -1, axis)
    return state.reshape(lead + (-1,))


def _apply_oracle(state: np.ndarray, h_bits: np.ndarray) -> np.ndarray:
    """U_H on (..., b, x, aux): |x>|a> -> |x>|a xor H(x)>."""
    out = state.copy()
    flip = h_bits == 1
    out[..., flip, :] = state[..., flip, ::-1]
    return out


def _drift(norms: np.ndarray) -> float:
    norms = np.atleast_1d(norms)
    return float(np.abs(norms - 1.0).max()) if norms.size else 0.0


def _check_size(dim: int) -> None:
    if dim > MAX_STATE_DIM:
        raise ResourceError(f"State dimension {dim} exceeds {MAX_STATE_DIM}")


def prepare_state(toy: ToyTcf) -> StateVector:
    """1/sqrt(2N) sum_b sum_x |b>|x> sum_e sqrt(f'_b(x)(y, e)) |y, e>."""
    N, K = toy.N, toy.K
    _check_size(4 * N * N * K)
    amps = np.zeros((2, N, N, K))
    xs = np.arange(N)
    for b in (0, 1):
        amps[b, xs, (xs + b * toy.s) % N, :] = np.sqrt(toy.noise_distribution(b))[None, :]
    amps /= math.sqrt(2 * N)
    return StateVector(amps, {"b": 2, "x": N, "y": N, "e": K})


def run_honest_circuit(toy: ToyTcf, h_table: HashTable) -> MicrosimResult:
    """Exact outcome law of the honest prover circuit on a toy instance.

    Args:
        toy: Toy claw-free pair
        h_table: H(x) for every x in Z_N

    Returns:
        MicrosimResult whose table has columns y, e, m, d, m_prime,
        probability and satisfies (m equals the verification bit)
    """
    N, K = toy.N, toy.K
    h_bits = _hash_bits(h_table, N)
    prepared = prepare_state(toy)
    drift = {"prepared": _drift(np.sum(prepared.amplitudes ** 2))}

    # image measurement on (y, e): batch over every outcome
    amps = prepared.amplitudes.transpose(2, 3, 0, 1)          # (y, e, b, x)
    outcome_probs = np.sum(amps ** 2, axis=(2, 3))
    live = outcome_probs > PROB_EPS
    scale = np.where(live, 1.0 / np.sqrt(np.where(live, outcome_probs, 1.0)), 0.0)
    post = amps * scale[:, :, None, None]
    drift["measured"] = _drift(np.sum(post[live] ** 2, axis=(1, 2)))

    state = post[..., None] * _MINUS                          # (y, e, b, x, aux)
    state = _apply_oracle(state, h_bits)
    drift["oracle"] = _drift(np.sum(state[live] ** 2, axis=(1, 2, 3)))

    nqubits = toy.nbits + 2
    state = _apply_hadamard_all(state.reshape(N, K, 4 * N), nqubits)
    drift["hadamard"] = _drift(np.sum(state[live] ** 2, axis=1))

    probs = outcome_probs[:, :, None] * state ** 2
    y_idx, e_idx, z_idx = np.nonzero(probs > PROB_EPS)
    m = z_idx // (2 * N)
    d = (z_idx // 2) % N
    m_prime = z_idx % 2
    x0, x1 = y_idx, (y_idx - toy.s) % N
    expected = _parity(d & (x0 ^ x1)) ^ h_bits[x0] ^ h_bits[x1]
    table = pd.DataFrame({
        "y": y_idx, "e": e_idx, "m": m, "d": d, "m_prime": m_prime,
        "probability": probs[y_idx, e_idx, z_idx],
        "satisfies": m == expected,
    })
    logger.debug("Microsim N=%d s=%d K=%d: %d outcomes", N, toy.s, K, len(table))
    return MicrosimResult(table, drift)


def run_unequal_amplitudes(alpha0: float, alpha1: float, x0: int, x1: int,
                           h_table: HashTable, nbits: Optional[int] = None) -> pd.DataFrame:
    """Measurement law of alpha0 |0, x0> + alpha1 |1, x1> after phase kickback and Hadamards.

    Args:
        alpha0: Amplitude of branch 0
        alpha1: Amplitude of branch 1 (alpha0^2 + alpha1^2 = 1)
        x0: Branch-0 preimage
        x1: Branch-1 preimage
        h_table: Oracle bits, indexable by x0 and x1
        nbits: Width of the x register (defaults to the widest preimage)

    Returns:
        DataFrame with columns m, d, m_prime, probability, satisfies
    """
    if abs(alpha0 * alpha0 + alpha1 * alpha1 - 1.0) > 1e-12:
        raise ValueError("Amplitudes must satisfy alpha0^2 + alpha1^2 = 1")
    if nbits is None:
        nbits = max(1, int(x0).bit_length(), int(x1).bit_length())
    N = 1 << nbits
    if not (0 <= x0 < N and 0 <= x1 < N):
        raise ValueError(f"Preimages must lie in [0, {N})")
    _check_size(4 * N)
    h0, h1 = int(h_table[x0]), int(h_table[x1])

    state = np.zeros((2, N, 2))
    state[0, x0] = alpha0 * _MINUS
    state[1, x1] = alpha1 * _MINUS
    if h0:
        state[0, x0] = state[0, x0, ::-1].copy()
    if h1:
        state[1, x1] = state[1, x1, ::-1].copy()
    amps = _apply_hadamard_all(state.reshape(1, 4 * N), nbits + 2)[0]

    z = np.arange(4 * N)
    m = z // (2 * N)
    d = (z // 2) % N
    expected = _parity(d & (x0 ^ x1)) ^ h0 ^ h1
    return pd.DataFrame({
        "m": m, "d": d, "m_prime": z % 2,
        "probability": amps ** 2,
        "satisfies": m == expected,
    })


def satisfied_probability(table: pd.DataFrame) -> float:
    return float(table.loc[table["satisfies"], "probability"].sum())


def range_superposition(toy: ToyTcf, b: int) -> StateVector:
    """Branch-b state 1/sqrt(N) sum_x |x> sum_{y,e} sqrt(f'_b(x)(y, e)) |y, e>."""
    N, K = toy.N, toy.K
    _check_size(N * N * K)
    amps = np.zeros((N, N, K))
    xs = np.arange(N)
    amps[xs, (xs + b * toy.s) % N, :] = np.sqrt(toy.noise_distribution(b))[None, :]
    return StateVector(amps / math.sqrt(N), {"x": N, "y": N, "e": K})


def _densities(f1, f2):
    f1 = np.asarray(f1, dtype=float)
    f2 = np.asarray(f2, dtype=float)
    if f1.shape != f2.shape:
        raise ValueError(f"Density shapes differ: {f1.shape} vs {f2.shape}")
    if (f1 < 0).any() or (f2 < 0).any():
        raise ValueError("Densities must be non-negative")
    return f1, f2


def hellinger(f1, f2) -> float:
    """Squared Hellinger distance 1 - sum sqrt(f1 f2)."""
    f1, f2 = _densities(f1, f2)
    return max(0.0, 1.0 - float(np.sum(np.sqrt(f1 * f2))))


def tv_distance(f1, f2) -> float:
    f1, f2 = _densities(f1, f2)
    return 0.5 * float(np.sum(np.abs(f1 - f2)))


def trace_distance(psi1: StateVector, psi2: StateVector) -> float:
    """Pure-state trace distance sqrt(1 - <psi1|psi2>^2)."""
    overlap = psi1.inner(psi2)
    return math.sqrt(max(0.0, 1.0 - overlap * overlap))


def trace_bound(h2: float) -> float:
    """sqrt(1 - (1 - H^2)^2): trace distance bound for superpositions of two densities."""
    return math.sqrt(max(0.0, 1.0 - (1.0 - h2) ** 2))


def format_report(table: pd.DataFrame, csv: bool = False) -> str:
    """Plain-text outcome table, or CSV."""
    if csv:
        return table.to_csv(index=False)
    return table.to_string(index=False)
