"""
Ring Core - Arithmetic in the negacyclic ring R_q = Z_q[X]/(X^n + 1).

This module provides functionality to:
- Add and multiply ring elements (schoolbook negacyclic convolution)
- Scale a vector of ring elements by a single element
- Compute Euclidean norms on centered representatives
- Decompose elements into canonical bit strings (and compose them back)
- Encode elements, vectors and bit strings as canonical bytes

Coefficients are stored reduced in [0, q) as uint64. The modulus is always a
power of two, so uint64 wraparound followed by a mask is exact reduction mod q
for every q up to 2^62.
"""

import math
from dataclasses import dataclass
from typing import Iterator, Sequence, Union

import numpy as np


MAX_MODULUS_BITS = 62
COEFF_BYTES = 8


class ProtocolError(Exception):
    """Base class for every error raised by this project."""
    pass


class ParameterMismatchError(ProtocolError, ValueError):
    """Operands disagree on ring dimension, modulus or length."""
    pass


class ParseError(ProtocolError, ValueError):
    """Malformed canonical encoding.

    Attributes:
        offset: Byte offset in the input where parsing failed
    """

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


def is_power_of_two(value: int) -> bool:
    return value > 0 and value & (value - 1) == 0


def _check_modulus(q: int) -> int:
    if not is_power_of_two(q) or q < 2:
        raise ParameterMismatchError(f"Modulus must be a power of two >= 2, got {q}")
    k_g = q.bit_length() - 1
    if k_g > MAX_MODULUS_BITS:
        raise ParameterMismatchError(f"Modulus 2^{k_g} exceeds 2^{MAX_MODULUS_BITS}")
    return k_g


def as_residues(values, q: int) -> np.ndarray:
    """Reduce an integer array (possibly negative or object-typed) into [0, q).

    Args:
        values: Array-like of integers
        q: Power-of-two modulus

    Returns:
        uint64 array of residues
    """
    arr = np.asarray(values)
    if arr.dtype == object:
        arr = np.array([int(v) % q for v in arr.ravel()], dtype=np.uint64).reshape(arr.shape)
    elif arr.dtype.kind == "u":
        arr = arr.astype(np.uint64)
    elif arr.dtype.kind in "ib":
        # two's complement wraparound keeps negatives correct mod 2^64
        arr = arr.astype(np.int64).astype(np.uint64)
    else:
        raise ParameterMismatchError(f"Coefficients must be integers, got dtype {arr.dtype}")
    return arr & np.uint64(q - 1)


def centered(coeffs: np.ndarray, q: int) -> np.ndarray:
    """Centered representatives in (-q/2, q/2] as int64."""
    values = np.asarray(coeffs, dtype=np.uint64).astype(np.int64)
    return np.where(values > q // 2, values - q, values)


def negacyclic_matrix(coeffs: np.ndarray) -> np.ndarray:
    """Matrix M with M @ b equal to coeffs * b in Z[X]/(X^n + 1), modulo 2^64.

    Works on stacks: an input of shape (..., n) gives (..., n, n).
    """
    coeffs = np.asarray(coeffs, dtype=np.uint64)
    n = coeffs.shape[-1]
    rows = np.arange(n)[:, None]
    cols = np.arange(n)[None, :]
    gathered = coeffs[..., (rows - cols) % n]
    return np.where(rows >= cols, gathered, np.uint64(0) - gathered)


@dataclass(frozen=True, eq=False)
class RingElement:
    """Element of R_q stored as n coefficients in [0, q)."""

    coeffs: np.ndarray
    q: int

    def __post_init__(self):
        _check_modulus(self.q)
        arr = as_residues(self.coeffs, self.q)
        if arr.ndim != 1 or not is_power_of_two(arr.shape[0]):
            raise ParameterMismatchError(
                f"Ring dimension must be a power of two, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "coeffs", arr)

    @property
    def n(self) -> int:
        return int(self.coeffs.shape[0])

    @property
    def k_g(self) -> int:
        return self.q.bit_length() - 1

    @classmethod
    def zero(cls, n: int, q: int) -> "RingElement":
        return cls(np.zeros(n, dtype=np.uint64), q)

    @classmethod
    def constant(cls, value: int, n: int, q: int) -> "RingElement":
        coeffs = np.zeros(n, dtype=object)
        coeffs[0] = value
        return cls(coeffs, q)

    @classmethod
    def one(cls, n: int, q: int) -> "RingElement":
        return cls.constant(1, n, q)

    @classmethod
    def uniform(cls, n: int, q: int, rng: np.random.Generator) -> "RingElement":
        return cls(rng.integers(0, q, size=n, dtype=np.uint64), q)

    def centered(self) -> np.ndarray:
        return centered(self.coeffs, self.q)

    def to_bytes(self) -> bytes:
        """Canonical encoding: n coefficients, 8-byte little-endian each."""
        return self.coeffs.astype("<u8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, n: int, q: int, offset: int = 0) -> "RingElement":
        expected = n * COEFF_BYTES
        if len(data) != expected:
            raise ParseError(f"Ring element needs {expected} bytes, got {len(data)}", offset)
        coeffs = np.frombuffer(data, dtype="<u8").astype(np.uint64)
        bad = np.flatnonzero(coeffs >= np.uint64(q))
        if bad.size:
            raise ParseError(f"Coefficient not reduced mod {q}", offset + int(bad[0]) * COEFF_BYTES)
        return cls(coeffs, q)

    def __eq__(self, other) -> bool:
        if not isinstance(other, RingElement):
            return NotImplemented
        return self.q == other.q and np.array_equal(self.coeffs, other.coeffs)

    def __hash__(self) -> int:
        return hash((self.q, self.to_bytes()))

    def __repr__(self) -> str:
        head = ", ".join(str(int(c)) for c in self.coeffs[:4])
        tail = ", ..." if self.n > 4 else ""
        return f"RingElement(n={self.n}, q=2^{self.k_g}, coeffs=[{head}{tail}])"

    def __add__(self, other: "RingElement") -> "RingElement":
        return ring_add(self, other)

    def __sub__(self, other: "RingElement") -> "RingElement":
        return ring_sub(self, other)

    def __neg__(self) -> "RingElement":
        return RingElement(np.uint64(0) - self.coeffs, self.q)

    def __mul__(self, other: "RingElement") -> "RingElement":
        return ring_mul(self, other)


@dataclass(frozen=True, eq=False)
class RingVector:
    """Length-m vector over R_q, stored as an (m, n) uint64 array."""

    elems: np.ndarray
    q: int

    def __post_init__(self):
        _check_modulus(self.q)
        arr = as_residues(self.elems, self.q)
        if arr.ndim != 2 or arr.shape[0] < 1 or not is_power_of_two(arr.shape[1]):
            raise ParameterMismatchError(f"RingVector needs shape (m, n), got {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "elems", arr)

    @property
    def m(self) -> int:
        return int(self.elems.shape[0])

    @property
    def n(self) -> int:
        return int(self.elems.shape[1])

    @classmethod
    def from_elements(cls, elements: Sequence[RingElement]) -> "RingVector":
        if not elements:
            raise ParameterMismatchError("RingVector needs at least one element")
        q = elements[0].q
        for elem in elements:
            _require_same_ring(elements[0], elem)
        return cls(np.stack([e.coeffs for e in elements]), q)

    @classmethod
    def zeros(cls, m: int, n: int, q: int) -> "RingVector":
        return cls(np.zeros((m, n), dtype=np.uint64), q)

    @classmethod
    def uniform(cls, m: int, n: int, q: int, rng: np.random.Generator) -> "RingVector":
        return cls(rng.integers(0, q, size=(m, n), dtype=np.uint64), q)

    def __len__(self) -> int:
        return self.m

    def __getitem__(self, index: int) -> RingElement:
        return RingElement(self.elems[index], self.q)

    def __iter__(self) -> Iterator[RingElement]:
        for i in range(self.m):
            yield self[i]

    def centered(self) -> np.ndarray:
        return centered(self.elems, self.q)

    def to_bytes(self) -> bytes:
        """Canonical encoding: elements in order, each in RingElement encoding."""
        return self.elems.astype("<u8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, m: int, n: int, q: int, offset: int = 0) -> "RingVector":
        expected = m * n * COEFF_BYTES
        if len(data) != expected:
            raise ParseError(f"RingVector needs {expected} bytes, got {len(data)}", offset)
        elems = np.frombuffer(data, dtype="<u8").astype(np.uint64).reshape(m, n)
        bad = np.flatnonzero(elems.ravel() >= np.uint64(q))
        if bad.size:
            raise ParseError(f"Coefficient not reduced mod {q}", offset + int(bad[0]) * COEFF_BYTES)
        return cls(elems, q)

    def __eq__(self, other) -> bool:
        if not isinstance(other, RingVector):
            return NotImplemented
        return self.q == other.q and np.array_equal(self.elems, other.elems)

    def __hash__(self) -> int:
        return hash((self.q, self.to_bytes()))

    def __repr__(self) -> str:
        return f"RingVector(m={self.m}, n={self.n}, q=2^{self.q.bit_length() - 1})"

    def __add__(self, other: "RingVector") -> "RingVector":
        _require_same_vector_shape(self, other)
        return RingVector(self.elems + other.elems, self.q)

    def __sub__(self, other: "RingVector") -> "RingVector":
        _require_same_vector_shape(self, other)
        return RingVector(self.elems - other.elems, self.q)


@dataclass(frozen=True, eq=False)
class BitString:
    """Fixed-length bit string held unpacked as a uint8 array of 0/1."""

    bits: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.bits, dtype=np.uint8)
        if arr.ndim != 1:
            raise ParameterMismatchError(f"BitString must be one-dimensional, got {arr.shape}")
        if arr.size and arr.max() > 1:
            raise ParameterMismatchError("BitString entries must be 0 or 1")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "bits", arr)

    @property
    def w(self) -> int:
        return int(self.bits.shape[0])

    def __len__(self) -> int:
        return self.w

    @classmethod
    def zeros(cls, w: int) -> "BitString":
        return cls(np.zeros(w, dtype=np.uint8))

    @classmethod
    def random(cls, w: int, rng: np.random.Generator) -> "BitString":
        return cls(rng.integers(0, 2, size=w, dtype=np.uint8))

    def to_bytes(self) -> bytes:
        """Little-endian within bytes; unused high bits of the last byte are zero."""
        return np.packbits(self.bits, bitorder="little").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, w: int, offset: int = 0) -> "BitString":
        expected = (w + 7) // 8
        if len(data) != expected:
            raise ParseError(f"BitString of length {w} needs {expected} bytes, got {len(data)}", offset)
        bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")
        if bits[w:].any():
            raise ParseError("Unused high bits of BitString must be zero", offset + expected - 1)
        return cls(bits[:w])

    def __xor__(self, other: "BitString") -> "BitString":
        _require_same_length(self, other)
        return BitString(self.bits ^ other.bits)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitString):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    def __hash__(self) -> int:
        return hash((self.w, self.to_bytes()))

    def __repr__(self) -> str:
        return f"BitString(w={self.w})"


def _require_same_ring(a: RingElement, b: RingElement) -> None:
    if a.q != b.q or a.n != b.n:
        raise ParameterMismatchError(
            f"Ring mismatch: (n={a.n}, q={a.q}) vs (n={b.n}, q={b.q})")


def _require_same_vector_shape(a: RingVector, b: RingVector) -> None:
    if a.q != b.q or a.elems.shape != b.elems.shape:
        raise ParameterMismatchError(
            f"RingVector mismatch: {a.elems.shape} mod {a.q} vs {b.elems.shape} mod {b.q}")


def _require_same_length(d: BitString, u: BitString) -> None:
    if d.w != u.w:
        raise ParameterMismatchError(f"BitString length mismatch: {d.w} vs {u.w}")


def ring_add(a: RingElement, b: RingElement) -> RingElement:
    _require_same_ring(a, b)
    return RingElement(a.coeffs + b.coeffs, a.q)


def ring_sub(a: RingElement, b: RingElement) -> RingElement:
    _require_same_ring(a, b)
    return RingElement(a.coeffs - b.coeffs, a.q)


def ring_mul(a: RingElement, b: RingElement) -> RingElement:
    """Exact product in R_q via negacyclic convolution (X^n = -1).

    Args:
        a: First factor
        b: Second factor

    Returns:
        a * b reduced mod q

    Raises:
        ParameterMismatchError: If a and b live in different rings
    """
    _require_same_ring(a, b)
    return RingElement(negacyclic_matrix(a.coeffs) @ b.coeffs, a.q)


def scalar_mul_vec(a: RingVector, x: RingElement) -> RingVector:
    """Multiply every slot a_i of a by the same element x."""
    if a.q != x.q or a.n != x.n:
        raise ParameterMismatchError(
            f"Ring mismatch: vector (n={a.n}, q={a.q}) vs element (n={x.n}, q={x.q})")
    return RingVector(a.elems @ negacyclic_matrix(x.coeffs).T, a.q)


def centered_sq_norm(v: Union[RingVector, RingElement, np.ndarray], q: int = None) -> int:
    """Exact squared Euclidean norm of the centered representatives.

    Args:
        v: Ring vector, ring element, or raw residue array (then q is required)
        q: Modulus for raw arrays

    Returns:
        Squared norm as a Python int
    """
    if isinstance(v, (RingVector, RingElement)):
        values = v.centered().ravel()
    else:
        if q is None:
            raise ParameterMismatchError("Modulus required for raw coefficient arrays")
        values = centered(v, q).ravel()
    if values.size == 0:
        return 0
    peak = int(np.abs(values).max())
    if peak * peak * values.size < 2 ** 63:
        return int(np.dot(values, values))
    return sum(c * c for c in values.tolist())


def centered_norm(v: Union[RingVector, RingElement]) -> float:
    """Euclidean norm of the length-(n*m) vector of centered representatives."""
    return math.sqrt(centered_sq_norm(v))


def bit_decomp(x: RingElement) -> BitString:
    """Canonical BitDecomp: coefficient-major, little-endian k_g bits per coefficient."""
    shifts = np.arange(x.k_g, dtype=np.uint64)
    bits = (x.coeffs[:, None] >> shifts) & np.uint64(1)
    return BitString(bits.astype(np.uint8).ravel())


def bit_compose(bits: BitString, n: int, q: int) -> RingElement:
    """Inverse of bit_decomp for strings of length n * log2(q)."""
    k_g = _check_modulus(q)
    if bits.w != n * k_g:
        raise ParameterMismatchError(f"Expected {n * k_g} bits, got {bits.w}")
    grid = bits.bits.reshape(n, k_g).astype(np.uint64)
    weights = np.uint64(1) << np.arange(k_g, dtype=np.uint64)
    return RingElement((grid * weights).sum(axis=1, dtype=np.uint64), q)


def dot_mod2(d: BitString, u: BitString) -> int:
    """Parity of the bitwise AND of two equal-length bit strings."""
    _require_same_length(d, u)
    return int(np.count_nonzero(d.bits & u.bits) & 1)


def encode_for_oracle(x: RingElement) -> bytes:
    """Random-oracle input: packed canonical bytes of BitDecomp(x)."""
    return bit_decomp(x).to_bytes()


def decode_from_oracle(data: bytes, n: int, q: int) -> RingElement:
    k_g = _check_modulus(q)
    return bit_compose(BitString.from_bytes(data, n * k_g), n, q)
