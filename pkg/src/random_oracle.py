"""
Random Oracle - the one-bit hash H used by the verifier and the experiments.

Two backends:
- deterministic: H(x) is the least-significant bit of a standard hash
  (SHA-256 by default) of the input bytes; stateless apart from the query log
- lazy: an inspectable table filled with fresh uniform bits on first touch,
  used where the challenger must look into the oracle's database

Inputs are the canonical packed encoding of BitDecomp(x) (see
ring_core.encode_for_oracle).
"""

import hashlib
import logging
import threading
from enum import Enum
from typing import Dict, List, Optional

import numpy as np

from src.ring_core import ProtocolError, RingElement, encode_for_oracle


logger = logging.getLogger(__name__)

DEFAULT_HASH = "sha256"


class UnsupportedOperationError(ProtocolError):
    """Operation not available for this oracle backend."""
    pass


class OracleMode(str, Enum):
    DETERMINISTIC = "deterministic"
    LAZY = "lazy"


class RandomOracle:
    """One-bit random oracle with a query log.

    Attributes:
        mode: Backend in use
        hash_name: hashlib algorithm name (deterministic mode)
        table: Lazily sampled bits keyed by input bytes (lazy mode)
        query_log: Every queried input, in order
    """

    def __init__(self, mode: OracleMode = OracleMode.DETERMINISTIC,
                 rng: Optional[np.random.Generator] = None,
                 hash_name: str = DEFAULT_HASH):
        self.mode = OracleMode(mode)
        if self.mode is OracleMode.LAZY and rng is None:
            raise ValueError("Lazy oracle needs an rng")
        if hash_name not in hashlib.algorithms_available:
            raise ValueError(f"Unknown hash algorithm: {hash_name}")
        self.hash_name = hash_name
        self.rng = rng
        self.table: Dict[bytes, int] = {}
        self.query_log: List[bytes] = []
        self._lock = threading.Lock()

    @classmethod
    def deterministic(cls, hash_name: str = DEFAULT_HASH) -> "RandomOracle":
        return cls(OracleMode.DETERMINISTIC, hash_name=hash_name)

    @classmethod
    def lazy(cls, rng: np.random.Generator) -> "RandomOracle":
        return cls(OracleMode.LAZY, rng=rng)

    @property
    def is_lazy(self) -> bool:
        return self.mode is OracleMode.LAZY

    def _hash_bit(self, data: bytes) -> int:
        return hashlib.new(self.hash_name, data).digest()[-1] & 1

    def query(self, data: bytes) -> int:
        """ro_query: one bit for the input bytes, logged in both modes."""
        data = bytes(data)
        with self._lock:
            self.query_log.append(data)
            if self.mode is OracleMode.DETERMINISTIC:
                return self._hash_bit(data)
            bit = self.table.get(data)
            if bit is None:
                bit = int(self.rng.integers(0, 2))
                self.table[data] = bit
            return bit

    def query_element(self, x: RingElement) -> int:
        """H(x) on the canonical encoding of BitDecomp(x)."""
        return self.query(encode_for_oracle(x))

    def lookup(self, data: bytes) -> Optional[int]:
        """ro_lookup: table entry or None; never creates entries."""
        if self.mode is not OracleMode.LAZY:
            raise UnsupportedOperationError("lookup needs the lazy oracle backend")
        with self._lock:
            return self.table.get(bytes(data))

    def lookup_element(self, x: RingElement) -> Optional[int]:
        return self.lookup(encode_for_oracle(x))

    def database(self) -> List[bytes]:
        """Distinct queried inputs in first-query order (lazy mode)."""
        if self.mode is not OracleMode.LAZY:
            raise UnsupportedOperationError("database inspection needs the lazy oracle backend")
        with self._lock:
            return list(self.table)

    def __len__(self) -> int:
        return len(self.table)

    def __repr__(self) -> str:
        return f"RandomOracle(mode={self.mode.value}, queries={len(self.query_log)}, table={len(self.table)})"


def ro_query(oracle: RandomOracle, data: bytes) -> int:
    return oracle.query(data)


def ro_lookup(oracle: RandomOracle, data: bytes) -> Optional[int]:
    return oracle.lookup(data)
