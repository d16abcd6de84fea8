"""
RLWE Noisy Trapdoor Claw-Free Family.

This module provides functionality to:
- Build and validate scheme parameters (n, q = 2^k_g, m, B_V, B_P, C_T, lambda)
- Generate function keys k = (a, a*s + e) with trapdoors (tau, k, s)
- Evaluate branch densities f'_{k,b}(x) at an image y and check support
- Sample images of either branch classically
- Invert images with the trapdoor and recover claws (x0, x1) with x0 = x1 + s
- Bound and estimate the Hellinger distance between f_{k,1} and f'_{k,1}
- Read and write public/secret key files

Branch densities: f'_{k,b}(x)(y) = D_{B_P}(y - a*x - b*v) with v = a*s + e.
A branch-0 preimage x0 and branch-1 preimage x1 of the same y satisfy
x0 = x1 + s (see DESIGN.md for the sign convention).
"""

import logging
import math
import struct
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from src.dgauss import GaussParams, dgauss_log_rho, dgauss_sample, dgauss_sample_batch, in_support, squared_norms
from src.gadget_trapdoor import GadgetTrapdoor, gen_trap, trap_invert
from src.ring_core import (
    MAX_MODULUS_BITS,
    ParseError,
    ProtocolError,
    RingElement,
    RingVector,
    is_power_of_two,
    scalar_mul_vec,
)


logger = logging.getLogger(__name__)

B_P_FACTOR = 320
HELLINGER_LIMIT = 1 / 50
KEY_MAGIC = b"PQNT"
KEY_VERSION = 0x01
PARAMS_FIELDS = ("n", "k_g", "m_bar", "B_V", "B_P", "C_T", "lam")
PARAMS_BLOCK = struct.Struct("<7Q")


class ParameterInfeasibleError(ProtocolError):
    """Scheme parameters violate (or cannot be made to satisfy) the constraints.

    Attributes:
        report: Human-readable list of violated constraints
    """

    def __init__(self, message: str, report: Optional[List[str]] = None):
        super().__init__(message)
        self.report = report or []


@dataclass(frozen=True)
class Params:
    """All scheme parameters.

    Constraints checked by constraint_report():
    - B_P >= 320 * n * m * B_V
    - 2 * B_P * sqrt(n*m) <= q / (C_T * sqrt(n * k_g))
    - 1 - exp(-2 pi m n B_V / B_P) <= 1/50
    """

    n: int
    k_g: int
    m_bar: int
    B_V: int
    B_P: int
    C_T: int
    lam: int

    def __post_init__(self):
        for name in PARAMS_FIELDS:
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
                raise ValueError(f"{name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if not is_power_of_two(self.n):
            raise ValueError(f"n must be a power of two, got {self.n}")
        if not 2 <= self.k_g <= MAX_MODULUS_BITS:
            raise ValueError(f"k_g must lie in [2, {MAX_MODULUS_BITS}], got {self.k_g}")
        if self.m_bar < 1 or self.B_P < 1 or self.C_T < 1 or self.lam < 1:
            raise ValueError("m_bar, B_P, C_T and lambda must be positive")
        if self.B_V < 0:
            raise ValueError(f"B_V must be non-negative, got {self.B_V}")

    @property
    def q(self) -> int:
        return 1 << self.k_g

    @property
    def m(self) -> int:
        return self.m_bar + self.k_g

    @property
    def w(self) -> int:
        return self.n * self.k_g

    @property
    def dim(self) -> int:
        return self.n * self.m

    @property
    def eval_noise(self) -> GaussParams:
        return GaussParams(self.B_P, self.dim)

    @property
    def inversion_bound(self) -> float:
        """Residual bound 2 * B_P * sqrt(n*m) used by Inv_F."""
        return 2 * self.B_P * math.sqrt(self.dim)

    def constraint_report(self) -> List[str]:
        """List every violated constraint (empty when all hold)."""
        violations = []
        if self.B_P < B_P_FACTOR * self.n * self.m * self.B_V:
            violations.append(
                f"B_P = {self.B_P} < {B_P_FACTOR} * n * m * B_V = {B_P_FACTOR * self.n * self.m * self.B_V}")
        # squared form of 2 B_P sqrt(nm) <= q / (C_T sqrt(n k_g)), exact in integers
        lhs = 4 * self.B_P ** 2 * self.dim * self.C_T ** 2 * self.n * self.k_g
        if lhs > self.q ** 2:
            violations.append(
                f"2 * B_P * sqrt(n*m) * C_T * sqrt(n*k_g) = {math.sqrt(lhs):.4g} > q = 2^{self.k_g}")
        bound = hellinger_bound(self)
        if bound > HELLINGER_LIMIT:
            violations.append(f"Hellinger bound {bound:.4f} > 1/50")
        return violations

    def validate(self) -> "Params":
        report = self.constraint_report()
        if report:
            raise ParameterInfeasibleError("Parameters violate scheme constraints", report)
        return self

    def to_dict(self) -> Dict[str, int]:
        return asdict(self)

    def summary(self) -> Dict[str, Union[int, float]]:
        info = {("lambda" if name == "lam" else name): value for name, value in self.to_dict().items()}
        info.update({"q": self.q, "m": self.m, "w": self.w,
                     "hellinger_bound": hellinger_bound(self)})
        return info

    def to_bytes(self) -> bytes:
        return PARAMS_BLOCK.pack(*(getattr(self, name) for name in PARAMS_FIELDS))

    @classmethod
    def from_bytes(cls, data: bytes, offset: int = 0) -> "Params":
        if len(data) - offset < PARAMS_BLOCK.size:
            raise ParseError("Params block truncated", offset)
        values = PARAMS_BLOCK.unpack_from(data, offset)
        try:
            return cls(**dict(zip(PARAMS_FIELDS, values)))
        except ValueError as e:
            raise ParseError(f"Invalid params block: {e}", offset) from e


def _fits(B_P: int, n: int, m: int, C_T: int, k_g: int) -> bool:
    return 4 * B_P ** 2 * n * m * C_T ** 2 * n * k_g <= (1 << k_g) ** 2


def build_params(n: int, m_bar: int = 3, B_V: int = 1, lam: int = 120, C_T: int = 8) -> Params:
    """Derive q and B_P by fixed-point iteration on k_g.

    Each round sets B_P = 320 * n * (m_bar + k_g) * B_V and moves k_g to the
    smallest value with 2^k_g >= 2 B_P sqrt(n m) C_T sqrt(n k_g); the loop
    stops at the least fixed point.

    Args:
        n: Ring dimension (power of two)
        m_bar: Uniform slots of the trapdoor vector
        B_V: Key-noise width
        lam: Number of tuples per protocol run
        C_T: Inversion constant

    Returns:
        Validated Params

    Raises:
        ParameterInfeasibleError: If no k_g <= 62 works
    """
    if not is_power_of_two(n):
        raise ParameterInfeasibleError("Ring dimension must be a power of two", [f"n = {n}"])
    if min(m_bar, B_V, lam, C_T) < 1:
        raise ParameterInfeasibleError("Inputs must be positive",
                                       [f"m_bar={m_bar}, B_V={B_V}, lambda={lam}, C_T={C_T}"])
    k_g = 2
    while True:
        m = m_bar + k_g
        B_P = B_P_FACTOR * n * m * B_V
        candidate = k_g
        while candidate <= MAX_MODULUS_BITS and not _fits(B_P, n, m, C_T, candidate):
            candidate += 1
        if candidate > MAX_MODULUS_BITS:
            raise ParameterInfeasibleError(
                f"No modulus up to 2^{MAX_MODULUS_BITS} satisfies the inversion constraint",
                [f"2 * B_P * sqrt(n*m) <= q / (C_T * sqrt(n*k_g)) fails for n={n}, m_bar={m_bar}, "
                 f"B_V={B_V}, C_T={C_T} at every k_g <= {MAX_MODULUS_BITS}"])
        if candidate == k_g:
            break
        k_g = candidate
    params = Params(n=n, k_g=k_g, m_bar=m_bar, B_V=B_V, B_P=B_P, C_T=C_T, lam=lam)
    logger.info("Built params n=%d k_g=%d m=%d B_P=%d", n, k_g, params.m, B_P)
    return params.validate()


@dataclass(frozen=True)
class NtcfKey:
    """Public function key k = (a, v = a*s + e)."""

    params: Params
    a: RingVector
    v: RingVector

    def __post_init__(self):
        expected = (self.params.m, self.params.n)
        for name in ("a", "v"):
            vec = getattr(self, name)
            if vec.elems.shape != expected or vec.q != self.params.q:
                raise ValueError(f"Key vector {name} has shape {vec.elems.shape}, expected {expected}")

    def to_bytes(self) -> bytes:
        """PQNT, version 0x01, params block, then a and v."""
        return KEY_MAGIC + bytes([KEY_VERSION]) + self.params.to_bytes() + self.a.to_bytes() + self.v.to_bytes()

    @classmethod
    def parse(cls, data: bytes, offset: int = 0) -> Tuple["NtcfKey", int]:
        """Parse a key starting at offset; returns the key and the offset after it."""
        if data[offset:offset + 4] != KEY_MAGIC:
            raise ParseError("Bad key magic", offset)
        if len(data) < offset + 5:
            raise ParseError("Key version missing", offset + 4)
        if data[offset + 4] != KEY_VERSION:
            raise ParseError(f"Unsupported key version {data[offset + 4]}", offset + 4)
        pos = offset + 5
        params = Params.from_bytes(data, pos)
        pos += PARAMS_BLOCK.size
        size = params.m * params.n * 8
        if len(data) < pos + 2 * size:
            raise ParseError("Key vectors truncated", len(data))
        a = RingVector.from_bytes(data[pos:pos + size], params.m, params.n, params.q, pos)
        v = RingVector.from_bytes(data[pos + size:pos + 2 * size], params.m, params.n, params.q, pos + size)
        return cls(params, a, v), pos + 2 * size

    @classmethod
    def from_bytes(cls, data: bytes) -> "NtcfKey":
        key, end = cls.parse(data)
        if end != len(data):
            raise ParseError("Trailing bytes after key", end)
        return key


@dataclass(frozen=True)
class NtcfTrapdoor:
    """Secret kappa = (tau, k, s)."""

    t: GadgetTrapdoor
    key: NtcfKey
    s: RingElement

    @property
    def params(self) -> Params:
        return self.key.params

    def key_noise(self) -> RingVector:
        """e = v - a*s."""
        return self.key.v - scalar_mul_vec(self.key.a, self.s)

    def to_bytes(self) -> bytes:
        """Public key encoding, then s, then the serialized gadget trapdoor."""
        return self.key.to_bytes() + self.s.to_bytes() + self.t.to_bytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "NtcfTrapdoor":
        key, pos = NtcfKey.parse(data)
        params = key.params
        size = params.n * 8
        if len(data) < pos + size:
            raise ParseError("Secret s truncated", len(data))
        s = RingElement.from_bytes(data[pos:pos + size], params.n, params.q, pos)
        t = GadgetTrapdoor.from_bytes(data[pos + size:], key.a, pos + size)
        if t.m_bar != params.m_bar:
            raise ParseError("Trapdoor m_bar disagrees with params", pos + size)
        return cls(t, key, s)


def gen_f(params: Params, rng: np.random.Generator, zero_noise: bool = False) -> Tuple[NtcfKey, NtcfTrapdoor]:
    """Gen_F: (a, tau) <- GenTrap, s <- R_q, e <- chi^m, key = (a, a*s + e).

    Args:
        params: Scheme parameters
        rng: Pseudorandom generator
        zero_noise: Force e = 0 (also implied by B_V = 0)

    Returns:
        Tuple of (key, trapdoor)
    """
    a, tau = gen_trap(params, rng)
    s = RingElement.uniform(params.n, params.q, rng)
    if zero_noise or params.B_V == 0:
        e = RingVector.zeros(params.m, params.n, params.q)
    else:
        noise = dgauss_sample(GaussParams(params.B_V, params.dim), rng)
        e = RingVector(noise.reshape(params.m, params.n), params.q)
    key = NtcfKey(params, a, scalar_mul_vec(a, s) + e)
    logger.debug("Generated NTCF key (n=%d, m=%d, q=2^%d)", params.n, params.m, params.k_g)
    return key, NtcfTrapdoor(tau, key, s)


def branch_residual(key: NtcfKey, b: int, x: RingElement, y: RingVector) -> np.ndarray:
    """Centered y - a*x - b*v flattened to length n*m."""
    shifted = y - scalar_mul_vec(key.a, x)
    if b:
        shifted = shifted - key.v
    return shifted.centered().ravel()


def log_density_fprime(key: NtcfKey, b: int, x: RingElement, y: RingVector) -> float:
    """log of the unnormalised f'_{k,b}(x)(y); -inf outside the support."""
    return dgauss_log_rho(key.params.eval_noise, branch_residual(key, b, x, y))


def density_fprime(key: NtcfKey, b: int, x: RingElement, y: RingVector) -> float:
    """Unnormalised density of f'_{k,b}(x) at y, computed from the public key alone.

    At desk-scale dimensions this underflows to 0.0 inside the support; use
    log_density_fprime for support tests and ratios.
    """
    return math.exp(log_density_fprime(key, b, x, y))


def image_of(key: NtcfKey, b: int, x: RingElement, noise: np.ndarray) -> RingVector:
    """y = a*x + b*v + noise for an explicit noise vector of length n*m."""
    params = key.params
    y = scalar_mul_vec(key.a, x) + RingVector(np.asarray(noise).reshape(params.m, params.n), params.q)
    if b:
        y = y + key.v
    return y


def sample_image(key: NtcfKey, b: int, x: RingElement, rng: np.random.Generator) -> RingVector:
    """Classical Samp_F analog: y = a*x + b*v + e'' with e'' ~ D_{B_P}."""
    return image_of(key, b, x, dgauss_sample(key.params.eval_noise, rng))


def chk_f(key: NtcfKey, b: int, x: RingElement, y: RingVector) -> bool:
    """Chk_F: ||y - a*x - b*v||^2 <= B_P^2 * n * m, exact integers, no trapdoor."""
    return in_support(key.params.eval_noise, branch_residual(key, b, x, y))


def _invert(trapdoor: NtcfTrapdoor, y: RingVector) -> Optional[RingElement]:
    key = trapdoor.key
    return trap_invert(key.a, trapdoor.t, y, key.params.inversion_bound)


def inv_f(trapdoor: NtcfTrapdoor, b: int, y: RingVector) -> Optional[RingElement]:
    """Inv_F: Invert(tau, a, y) - b*s, or None when y has no admissible preimage."""
    t = _invert(trapdoor, y)
    if t is None:
        return None
    return t - trapdoor.s if b else t


def claw_pair(trapdoor: NtcfTrapdoor, y: RingVector) -> Optional[Tuple[RingElement, RingElement]]:
    """(Inv_F(0, y), Inv_F(1, y)); the pair satisfies x0 = x1 + s."""
    t = _invert(trapdoor, y)
    if t is None:
        return None
    return t, t - trapdoor.s


def hellinger_bound(params: Params) -> float:
    """1 - exp(-2 pi m n B_V / B_P)."""
    return -math.expm1(-2 * math.pi * params.m * params.n * params.B_V / params.B_P)


def estimate_hellinger(trapdoor: NtcfTrapdoor, samples: int, rng: np.random.Generator) -> float:
    """Monte Carlo estimate of H^2(f_{k,1}(x), f'_{k,1}(x)).

    Both densities are D_{B_P} shifted against each other by the key noise e,
    so 1 - H^2 = E_{v ~ D_{B_P}}[sqrt(rho(v - e) / rho(v))]; x drops out.
    """
    g = trapdoor.params.eval_noise
    e = trapdoor.key_noise().centered().ravel()
    draws = dgauss_sample_batch(g, samples, rng)
    shifted = draws - e
    base_sq = squared_norms(draws).astype(float)
    shifted_sq = squared_norms(shifted).astype(float)
    half_log_ratio = -math.pi * (shifted_sq - base_sq) / (2 * g.B * g.B)
    weights = np.where(squared_norms(shifted) <= g.bound_sq, np.exp(half_log_ratio), 0.0)
    return float(1.0 - weights.mean())


def save_public_key(key: NtcfKey, path: Path) -> Path:
    path = Path(path)
    path.write_bytes(key.to_bytes())
    return path


def load_public_key(path: Path) -> NtcfKey:
    return NtcfKey.from_bytes(Path(path).read_bytes())


def save_secret_key(trapdoor: NtcfTrapdoor, path: Path) -> Path:
    path = Path(path)
    path.write_bytes(trapdoor.to_bytes())
    return path


def load_secret_key(path: Path) -> NtcfTrapdoor:
    return NtcfTrapdoor.from_bytes(Path(path).read_bytes())
