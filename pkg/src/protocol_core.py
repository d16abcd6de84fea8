"""
Protocol Core - verifier logic and wire messages of the two-message protocol.

This module provides functionality to:
- Issue a challenge (a fresh NTCF key with its trapdoor)
- Verify lambda prover tuples (y, m, d): distinctness, per-tuple equation, threshold
- Encode and decode CHALLENGE / RESPONSE / VERDICT frames
- Read frames from a byte stream and keep session transcripts

Verification equation, all arithmetic over GF(2):
    m = d . (BitDecomp(x0) xor BitDecomp(x1)) xor H(x0) xor H(x1)
where (x0, x1) is the claw recovered from y with the trapdoor.

Frame layout: 4-byte big-endian body length, 1-byte type, body.
"""

import logging
import struct
from dataclasses import dataclass, field
from datetime import datetime
from enum import IntEnum
from pathlib import Path
from typing import BinaryIO, Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.ntcf_rlwe import NtcfKey, NtcfTrapdoor, Params, claw_pair, gen_f
from src.random_oracle import RandomOracle
from src.ring_core import (
    MAX_MODULUS_BITS,
    BitString,
    ParseError,
    ProtocolError,
    RingElement,
    RingVector,
    bit_decomp,
    dot_mod2,
    is_power_of_two,
)


logger = logging.getLogger(__name__)

FRAME_HEADER = struct.Struct(">IB")
RESPONSE_HEADER = struct.Struct("<HHBI")
VERDICT_BODY = struct.Struct("<BIB")
MAX_FRAME_BYTES = 64 * 1024 * 1024

__all__ = [
    "Challenge", "ErrorCode", "MalformedResponseError", "MessageType", "ParseError",
    "ProverTuple", "Response", "Transcript", "Verdict", "acceptance_threshold",
    "check_tuple", "deserialize_msg", "equation_bit", "make_challenge", "read_frame",
    "serialize_msg", "verify",
]


class MalformedResponseError(ProtocolError):
    """Response does not have the shape the challenge demands."""
    pass


class MessageType(IntEnum):
    CHALLENGE = 0x01
    RESPONSE = 0x02
    VERDICT = 0x03


class ErrorCode(IntEnum):
    """Reason byte carried by a VERDICT."""

    NONE = 0
    DUPLICATE_IMAGE = 1
    PARSE = 2
    TIMEOUT = 3
    TUPLE_COUNT = 4
    SHAPE_MISMATCH = 5
    INTERNAL = 6


@dataclass(frozen=True)
class ProverTuple:
    """One response entry (y, m, d)."""

    y: RingVector
    m: int
    d: BitString

    def __post_init__(self):
        if self.m not in (0, 1):
            raise ValueError(f"m must be a bit, got {self.m}")
        object.__setattr__(self, "m", int(self.m))

    def to_bytes(self) -> bytes:
        return self.y.to_bytes() + bytes([self.m]) + self.d.to_bytes()


@dataclass(frozen=True)
class Verdict:
    """Verifier outcome; accepted=False stands for the reject symbol.

    Attributes:
        accepted: True iff count > 0.75 * lambda and all images were distinct
        count: Number of tuples that passed
        per_tuple: Pass flags in tuple order (empty when not evaluated)
        error_code: Why the session ended without evaluation, if it did
    """

    accepted: bool
    count: int
    per_tuple: Tuple[bool, ...] = ()
    error_code: ErrorCode = ErrorCode.NONE

    @property
    def label(self) -> str:
        return "accept" if self.accepted else "reject"

    @classmethod
    def failure(cls, code: ErrorCode) -> "Verdict":
        return cls(False, 0, (), ErrorCode(code))


@dataclass(frozen=True)
class Challenge:
    key: NtcfKey


@dataclass(frozen=True)
class Response:
    """lambda tuples plus the ring shape (n, m, k_g) they are encoded for."""

    n: int
    m: int
    k_g: int
    tuples: Tuple[ProverTuple, ...] = field(default_factory=tuple)

    @classmethod
    def for_params(cls, params: Params, tuples: Sequence[ProverTuple]) -> "Response":
        return cls(params.n, params.m, params.k_g, tuple(tuples))

    @property
    def w(self) -> int:
        return self.n * self.k_g


Message = Union[Challenge, Response, Verdict]


def acceptance_threshold(lam: int) -> int:
    """Smallest count that is > 0.75 * lam."""
    return (3 * lam) // 4 + 1


def make_challenge(params: Params, rng: np.random.Generator) -> Tuple[NtcfKey, NtcfTrapdoor]:
    """Step 1: (k, kappa) <- Gen_F; k is the challenge."""
    key, trapdoor = gen_f(params, rng)
    logger.info("Issued challenge (n=%d, q=2^%d, lambda=%d)", params.n, params.k_g, params.lam)
    return key, trapdoor


def equation_bit(x0: RingElement, x1: RingElement, d: BitString, oracle: RandomOracle) -> int:
    """d . (BitDecomp(x0) xor BitDecomp(x1)) xor H(x0) xor H(x1)."""
    return dot_mod2(d, bit_decomp(x0) ^ bit_decomp(x1)) ^ oracle.query_element(x0) ^ oracle.query_element(x1)


def check_tuple(trapdoor: NtcfTrapdoor, tup: ProverTuple, oracle: RandomOracle) -> bool:
    """Per-tuple check; a failed inversion fails the tuple."""
    claw = claw_pair(trapdoor, tup.y)
    if claw is None:
        return False
    x0, x1 = claw
    return tup.m == equation_bit(x0, x1, tup.d, oracle)


def _check_shape(params: Params, tuples: Sequence[ProverTuple]) -> None:
    if len(tuples) != params.lam:
        raise MalformedResponseError(f"Expected {params.lam} tuples, got {len(tuples)}")
    for i, tup in enumerate(tuples):
        if tup.y.elems.shape != (params.m, params.n) or tup.y.q != params.q:
            raise MalformedResponseError(f"Tuple {i}: image has shape {tup.y.elems.shape} mod {tup.y.q}")
        if tup.d.w != params.w:
            raise MalformedResponseError(f"Tuple {i}: d has length {tup.d.w}, expected {params.w}")


def verify(trapdoor: NtcfTrapdoor, tuples: Sequence[ProverTuple], oracle: RandomOracle) -> Verdict:
    """Step 2: reject on repeated images, else count passing tuples against 0.75 * lambda.

    Args:
        trapdoor: Verifier secret for the issued key
        tuples: Exactly lambda prover tuples
        oracle: Random oracle H

    Returns:
        Verdict

    Raises:
        MalformedResponseError: Wrong tuple count or tuple shape
    """
    params = trapdoor.params
    _check_shape(params, tuples)
    seen = set()
    for tup in tuples:
        encoded = tup.y.to_bytes()
        if encoded in seen:
            logger.info("Rejecting response: repeated image")
            return Verdict.failure(ErrorCode.DUPLICATE_IMAGE)
        seen.add(encoded)
    per_tuple = tuple(check_tuple(trapdoor, tup, oracle) for tup in tuples)
    count = sum(per_tuple)
    accepted = count >= acceptance_threshold(params.lam)
    logger.info("Verdict %s with count %d/%d", "accept" if accepted else "reject", count, params.lam)
    return Verdict(accepted, count, per_tuple)


# ---------------------------------------------------------------------------
# Wire codec
# ---------------------------------------------------------------------------

def _encode_response(msg: Response) -> bytes:
    parts = [RESPONSE_HEADER.pack(msg.n, msg.m, msg.k_g, len(msg.tuples))]
    parts.extend(tup.to_bytes() for tup in msg.tuples)
    return b"".join(parts)


def _decode_response(body: bytes, base: int) -> Response:
    if len(body) < RESPONSE_HEADER.size:
        raise ParseError("RESPONSE header truncated", base + len(body))
    n, m, k_g, count = RESPONSE_HEADER.unpack_from(body, 0)
    if not is_power_of_two(n):
        raise ParseError(f"RESPONSE ring dimension {n} is not a power of two", base)
    if m < 1:
        raise ParseError("RESPONSE vector length must be positive", base + 2)
    if not 1 <= k_g <= MAX_MODULUS_BITS:
        raise ParseError(f"RESPONSE k_g {k_g} out of range", base + 4)
    q = 1 << k_g
    y_size = m * n * 8
    d_size = (n * k_g + 7) // 8
    tuple_size = y_size + 1 + d_size
    pos = RESPONSE_HEADER.size
    if len(body) - pos != count * tuple_size:
        raise ParseError(f"RESPONSE declares {count} tuples of {tuple_size} bytes, body holds {len(body) - pos}",
                         base + 5)
    tuples = []
    for _ in range(count):
        y = RingVector.from_bytes(body[pos:pos + y_size], m, n, q, base + pos)
        pos += y_size
        bit = body[pos]
        if bit > 1:
            raise ParseError(f"Tuple bit m must be 0 or 1, got {bit}", base + pos)
        pos += 1
        d = BitString.from_bytes(body[pos:pos + d_size], n * k_g, base + pos)
        pos += d_size
        tuples.append(ProverTuple(y, bit, d))
    return Response(n, m, k_g, tuple(tuples))


def _decode_verdict(body: bytes, base: int) -> Verdict:
    if len(body) != VERDICT_BODY.size:
        raise ParseError(f"VERDICT body needs {VERDICT_BODY.size} bytes, got {len(body)}", base)
    accepted, count, code = VERDICT_BODY.unpack(body)
    if accepted > 1:
        raise ParseError(f"VERDICT accepted byte must be 0 or 1, got {accepted}", base)
    try:
        code = ErrorCode(code)
    except ValueError:
        raise ParseError(f"Unknown VERDICT error code {code}", base + 5) from None
    return Verdict(bool(accepted), count, (), code)


def serialize_msg(msg: Message) -> bytes:
    """Frame a message: length (4B BE), type (1B), canonical body."""
    if isinstance(msg, Challenge):
        kind, body = MessageType.CHALLENGE, msg.key.to_bytes()
    elif isinstance(msg, Response):
        kind, body = MessageType.RESPONSE, _encode_response(msg)
    elif isinstance(msg, Verdict):
        kind, body = MessageType.VERDICT, VERDICT_BODY.pack(int(msg.accepted), msg.count, int(msg.error_code))
    else:
        raise TypeError(f"Cannot serialize {type(msg).__name__}")
    if len(body) > MAX_FRAME_BYTES:
        raise ValueError(f"Message body of {len(body)} bytes exceeds {MAX_FRAME_BYTES}")
    return FRAME_HEADER.pack(len(body), kind) + body


def parse_msg(data: bytes, offset: int = 0) -> Tuple[Message, int]:
    """Parse one frame at offset; returns the message and the offset after it."""
    if len(data) - offset < FRAME_HEADER.size:
        raise ParseError("Frame header truncated", len(data))
    length, kind = FRAME_HEADER.unpack_from(data, offset)
    if length > MAX_FRAME_BYTES:
        raise ParseError(f"Frame length {length} exceeds {MAX_FRAME_BYTES}", offset)
    start = offset + FRAME_HEADER.size
    end = start + length
    if len(data) < end:
        raise ParseError(f"Frame declares {length} body bytes, {len(data) - start} available", len(data))
    body = data[start:end]
    if kind == MessageType.CHALLENGE:
        key, used = NtcfKey.parse(body)
        if used != len(body):
            raise ParseError("Trailing bytes after CHALLENGE key", start + used)
        return Challenge(key), end
    if kind == MessageType.RESPONSE:
        return _decode_response(body, start), end
    if kind == MessageType.VERDICT:
        return _decode_verdict(body, start), end
    raise ParseError(f"Unknown message type 0x{kind:02x}", offset + 4)


def deserialize_msg(data: bytes) -> Message:
    """Parse exactly one frame; trailing bytes are an error."""
    msg, end = parse_msg(data)
    if end != len(data):
        raise ParseError("Trailing bytes after frame", end)
    return msg


def read_frame(read_exact: Callable[[int], bytes]) -> bytes:
    """Read one raw frame using a function that returns exactly n bytes or fewer at EOF."""
    header = read_exact(FRAME_HEADER.size)
    if len(header) != FRAME_HEADER.size:
        raise ParseError("Connection closed inside frame header", len(header))
    length, _ = FRAME_HEADER.unpack(header)
    if length > MAX_FRAME_BYTES:
        raise ParseError(f"Frame length {length} exceeds {MAX_FRAME_BYTES}", 0)
    body = read_exact(length)
    if len(body) != length:
        raise ParseError(f"Connection closed after {len(body)} of {length} body bytes",
                         FRAME_HEADER.size + len(body))
    return header + body


def stream_reader(stream: BinaryIO) -> Callable[[int], bytes]:
    """Adapt a buffered binary stream (e.g. socket.makefile('rb')) for read_frame."""
    def read_exact(size: int) -> bytes:
        return stream.read(size) or b""
    return read_exact


@dataclass
class Transcript:
    """Raw frames of one session, in order."""

    frames: List[bytes] = field(default_factory=list)
    note: Optional[str] = None

    def add(self, frame: bytes) -> None:
        self.frames.append(bytes(frame))

    def to_bytes(self) -> bytes:
        return b"".join(self.frames)

    def save(self, output_dir: str, label: str) -> Path:
        """Write the concatenated frames as <output_dir>/YYYYMMDD_HHMM_<label>.bin."""
        output_path = Path(output_dir)
        output_path.mkdir(parents=True, exist_ok=True)
        path = output_path / f"{datetime.now().strftime('%Y%m%d_%H%M')}_{label}.bin"
        path.write_bytes(self.to_bytes())
        return path

    @staticmethod
    def parse(data: bytes) -> List[Message]:
        messages, pos = [], 0
        while pos < len(data):
            msg, pos = parse_msg(data, pos)
            messages.append(msg)
        return messages
