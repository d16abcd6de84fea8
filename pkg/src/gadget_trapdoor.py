"""
Gadget Trapdoor - Ring-setting trapdoor generation and inversion.

This module provides functionality to:
- Generate a near-uniform vector a with a ternary gadget trapdoor r
- Combine a noisy image c = a*s + e into gadget samples u_j = 2^(j-1) s + noise
- Decode s bit by bit from the gadget samples (q = 2^k_g)
- Invert a*s + e with a residual-norm admissibility check
- Serialize the trapdoor as packed 2-bit codes

Layout: a = (a_bar_1..a_bar_mbar, a_{mbar+1}..a_{mbar+k_g}) with
a_{mbar+j} = g_j - sum_i a_bar_i * r_{i,j} and g_j = 2^(j-1).
"""

import logging
import math
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.ring_core import (
    ParameterMismatchError,
    ParseError,
    RingElement,
    RingVector,
    as_residues,
    centered,
    centered_sq_norm,
    negacyclic_matrix,
    scalar_mul_vec,
)


logger = logging.getLogger(__name__)

# 2-bit codes for ternary coefficients
_CODE_OF = {0: 0b00, 1: 0b01, -1: 0b10}
_VALUE_OF = {0b00: 0, 0b01: 1, 0b10: -1}


@dataclass(frozen=True, eq=False)
class GadgetTrapdoor:
    """Ternary trapdoor r (shape m_bar x k_g x n) together with the public vector a."""

    r: np.ndarray
    a: RingVector

    def __post_init__(self):
        r = as_residues(self.r, self.a.q)
        if r.ndim != 3 or r.shape[2] != self.a.n:
            raise ParameterMismatchError(f"Trapdoor r needs shape (m_bar, k_g, n), got {r.shape}")
        if self.a.m != r.shape[0] + r.shape[1]:
            raise ParameterMismatchError(
                f"Vector a has length {self.a.m}, expected m_bar + k_g = {r.shape[0] + r.shape[1]}")
        if r.shape[1] != self.a.q.bit_length() - 1:
            raise ParameterMismatchError(f"Trapdoor has {r.shape[1]} gadget levels for q = {self.a.q}")
        if np.abs(centered(r, self.a.q)).max(initial=0) > 1:
            raise ParameterMismatchError("Trapdoor coefficients must center to {-1, 0, 1}")
        r.setflags(write=False)
        object.__setattr__(self, "r", r)

    @property
    def m_bar(self) -> int:
        return int(self.r.shape[0])

    @property
    def k_g(self) -> int:
        return int(self.r.shape[1])

    @property
    def n(self) -> int:
        return self.a.n

    @property
    def q(self) -> int:
        return self.a.q

    def r_element(self, i: int, j: int) -> RingElement:
        return RingElement(self.r[i, j], self.q)

    def to_bytes(self) -> bytes:
        """m_bar and k_g as 2-byte LE, then 2-bit codes, four per byte, coefficient-major."""
        codes = np.array([_CODE_OF[v] for v in centered(self.r, self.q).ravel().tolist()], dtype=np.uint8)
        pad = (-codes.size) % 4
        codes = np.concatenate([codes, np.zeros(pad, dtype=np.uint8)]).reshape(-1, 4)
        packed = codes[:, 0] | (codes[:, 1] << 2) | (codes[:, 2] << 4) | (codes[:, 3] << 6)
        return struct.pack("<HH", self.m_bar, self.k_g) + packed.astype(np.uint8).tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, a: RingVector, offset: int = 0) -> "GadgetTrapdoor":
        if len(data) < 4:
            raise ParseError("Trapdoor header truncated", offset)
        m_bar, k_g = struct.unpack_from("<HH", data, 0)
        count = m_bar * k_g * a.n
        expected = 4 + (count + 3) // 4
        if len(data) != expected:
            raise ParseError(f"Trapdoor body needs {expected} bytes, got {len(data)}", offset + 4)
        packed = np.frombuffer(data, dtype=np.uint8, offset=4)
        codes = np.stack([(packed >> shift) & 0b11 for shift in (0, 2, 4, 6)], axis=1).ravel()
        if (codes[count:] != 0).any():
            raise ParseError("Trapdoor padding must be zero", offset + len(data) - 1)
        codes = codes[:count]
        bad = np.flatnonzero(codes == 0b11)
        if bad.size:
            raise ParseError("Invalid trapdoor code 0b11", offset + 4 + int(bad[0]) // 4)
        values = np.array([_VALUE_OF[c] for c in codes.tolist()], dtype=np.int64)
        try:
            return cls(values.reshape(m_bar, k_g, a.n), a)
        except ParameterMismatchError as e:
            raise ParseError(str(e), offset) from e


def gadget_element(j: int, n: int, q: int) -> RingElement:
    """Constant polynomial g_j = 2^(j-1), j counted from 1."""
    return RingElement.constant(1 << (j - 1), n, q)


def build_trapdoor(a_bar: RingVector, r: np.ndarray) -> GadgetTrapdoor:
    """Complete a_bar with the gadget block a_{mbar+j} = g_j - sum_i a_bar_i * r_ij.

    Args:
        a_bar: Uniform part of the public vector, length m_bar
        r: Trapdoor with shape (m_bar, k_g, n), entries in {-1, 0, 1}

    Returns:
        GadgetTrapdoor holding r and the full public vector
    """
    q, n = a_bar.q, a_bar.n
    k_g = q.bit_length() - 1
    r = np.asarray(r, dtype=np.int64).astype(np.uint64)
    if r.shape != (a_bar.m, k_g, n):
        raise ParameterMismatchError(f"Trapdoor r needs shape {(a_bar.m, k_g, n)}, got {r.shape}")
    # (m_bar, n, n) @ (m_bar, n, k_g) summed over i -> (n, k_g)
    mixed = (negacyclic_matrix(a_bar.elems) @ r.transpose(0, 2, 1)).sum(axis=0, dtype=np.uint64).T
    gadget = np.zeros((k_g, n), dtype=np.uint64)
    gadget[:, 0] = np.uint64(1) << np.arange(k_g, dtype=np.uint64)
    tail = gadget - mixed
    return GadgetTrapdoor(r, RingVector(np.concatenate([a_bar.elems, tail]), q))


def gen_trap(params, rng: np.random.Generator):
    """GenTrap: uniform a_bar in R_q^m_bar, ternary r, and the gadget-completed vector a.

    Args:
        params: Any object exposing n, q, k_g and m_bar
        rng: Pseudorandom generator

    Returns:
        Tuple of (a, trapdoor)
    """
    a_bar = RingVector.uniform(params.m_bar, params.n, params.q, rng)
    r = rng.integers(-1, 2, size=(params.m_bar, params.k_g, params.n), dtype=np.int64)
    trapdoor = build_trapdoor(a_bar, r)
    logger.debug("GenTrap produced a with m=%d slots (m_bar=%d, k_g=%d)",
                 trapdoor.a.m, params.m_bar, params.k_g)
    return trapdoor.a, trapdoor


def gadget_combine(c: RingVector, t: GadgetTrapdoor) -> RingVector:
    """u_j = c_{mbar+j} + sum_i c_i * r_ij, returned as a length-k_g RingVector.

    For c = a*s + e this equals g_j * s + e~_j with
    e~_j = e_{mbar+j} + sum_i e_i * r_ij.
    """
    if c.m != t.a.m or c.n != t.n or c.q != t.q:
        raise ParameterMismatchError(
            f"Image shape {c.elems.shape} mod {c.q} does not match trapdoor "
            f"{t.a.elems.shape} mod {t.q}")
    head = c.elems[:t.m_bar]
    mixed = (negacyclic_matrix(head) @ t.r.transpose(0, 2, 1)).sum(axis=0, dtype=np.uint64).T
    return RingVector(c.elems[t.m_bar:] + mixed, c.q)


def decode_gadget_levels(levels: np.ndarray, q: int):
    """Vectorised gadget decoding over any trailing shape.

    Args:
        levels: Array of shape (k_g, ...) where levels[j] ~ 2^j * s + noise mod q
        q: Power-of-two modulus with k_g = log2(q) >= 2

    Returns:
        Tuple (s, ok): recovered residues and a boolean mask that is False where
        some level's residual reaches q/4 in absolute value
    """
    k_g = q.bit_length() - 1
    if k_g < 2:
        raise ParameterMismatchError("Gadget decoding needs q >= 4")
    levels = np.asarray(levels, dtype=np.uint64)
    if levels.shape[0] != k_g:
        raise ParameterMismatchError(f"Expected {k_g} gadget levels, got {levels.shape[0]}")
    mask = np.uint64(q - 1)
    half = np.uint64(q // 2)
    quarter = np.uint64(q // 4)
    s = np.zeros(levels.shape[1:], dtype=np.uint64)
    # uint64 wraparound is reduction mod q after the mask
    with np.errstate(over="ignore"):
        for t in range(k_g):
            level = k_g - 1 - t
            residual = (levels[level] - (s << np.uint64(level))) & mask
            bit = (((residual + quarter) & mask) >= half).astype(np.uint64)
            s |= bit << np.uint64(t)
        shifts = np.arange(k_g, dtype=np.uint64).reshape((k_g,) + (1,) * s.ndim)
        residuals = centered((levels - (s[None, ...] << shifts)) & mask, q)
    ok = (np.abs(residuals) < q // 4).all(axis=0)
    return s, ok


def gadget_decode(u: RingVector, q: int) -> Optional[RingElement]:
    """Recover s from u_j = 2^(j-1) s + e~_j; None when any residual reaches q/4."""
    s, ok = decode_gadget_levels(u.elems, q)
    if not ok.all():
        logger.debug("Gadget decode rejected: %d coefficients out of tolerance", int((~ok).sum()))
        return None
    return RingElement(s, q)


def trap_invert(a: RingVector, t: GadgetTrapdoor, c: RingVector, bound: float) -> Optional[RingElement]:
    """Invert(a, tau, a*s + e) = s, admitted only when ||c - a*s|| <= bound.

    Args:
        a: Public vector (must be the trapdoor's own vector)
        t: Gadget trapdoor for a
        c: Noisy image
        bound: Admissible residual norm

    Returns:
        s, or None when no admissible preimage exists
    """
    if a != t.a:
        raise ParameterMismatchError("Trapdoor does not belong to this public vector")
    s = gadget_decode(gadget_combine(c, t), c.q)
    if s is None:
        return None
    residual_sq = centered_sq_norm(c - scalar_mul_vec(a, s))
    if residual_sq > bound * bound:
        logger.debug("Inversion residual %.1f exceeds bound %.1f", math.sqrt(residual_sq), bound)
        return None
    return s
