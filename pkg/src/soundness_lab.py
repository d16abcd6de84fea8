"""
Soundness Lab - executable random-oracle security experiments.

Three challenger variants, run against the bundled prover strategies:
- variant 1: the real verifier; it inverts every y_i and queries H on both preimages
- variant 2: no inversion; the challenger searches the lazy oracle database for
  preimages passing Chk_F on both branches; an incomplete pair scores a fresh
  uniform bit, a complete pair is checked against the database bits
- variant 3: as variant 2, but the run is rejected outright unless some index
  has both preimages in the database

Results are aggregated over independent trials (fresh key, oracle and rng per
trial, seed recorded for replay) with Wilson intervals on the rates.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.config import ConfigurationError, Strategy
from src.ntcf_rlwe import NtcfKey, NtcfTrapdoor, Params, chk_f, claw_pair, gen_f
from src.protocol_core import ErrorCode, ProverTuple, acceptance_threshold, verify
from src.prover_sim import prove
from src.random_oracle import OracleMode, RandomOracle
from src.ring_core import (
    RingElement,
    bit_decomp,
    centered,
    decode_from_oracle,
    dot_mod2,
    encode_for_oracle,
    negacyclic_matrix,
)


logger = logging.getLogger(__name__)

VARIANTS = (1, 2, 3)
Z_95 = 1.959963984540054


@dataclass(frozen=True)
class TrialRecord:
    seed: int
    accepted: bool
    count: int
    passed: int
    distinct: bool
    hits: Tuple[int, ...] = ()


@dataclass
class ExperimentStats:
    """Aggregated outcome of one experiment.

    Attributes:
        variant: Challenger variant (1, 2 or 3)
        strategy: Prover strategy
        trials: Number of protocol runs
        lam: Tuples per run
        accepts: Runs ending in acceptance
        tuples_passed: Tuples that passed, over all runs
        db_hit_profile: Tuples with 0, 1 or 2 claw preimages in the oracle database
        records: Per-trial records (seed first, for replay)
    """

    variant: int
    strategy: Strategy
    trials: int
    lam: int
    accepts: int
    tuples_passed: int
    db_hit_profile: Dict[int, int] = field(default_factory=dict)
    records: List[TrialRecord] = field(default_factory=list)

    @property
    def pass_rate(self) -> float:
        return self.accepts / self.trials if self.trials else 0.0

    @property
    def pass_ci(self) -> Tuple[float, float]:
        return wilson_interval(self.accepts, self.trials)

    @property
    def tuples_total(self) -> int:
        return self.trials * self.lam

    @property
    def per_tuple_rate(self) -> float:
        return self.tuples_passed / self.tuples_total if self.tuples_total else 0.0

    @property
    def per_tuple_ci(self) -> Tuple[float, float]:
        return wilson_interval(self.tuples_passed, self.tuples_total)

    @property
    def seeds(self) -> List[int]:
        return [r.seed for r in self.records]

    def to_frame(self) -> pd.DataFrame:
        """One-row summary."""
        lo, hi = self.pass_ci
        t_lo, t_hi = self.per_tuple_ci
        return pd.DataFrame([{
            "variant": self.variant,
            "strategy": self.strategy.value,
            "trials": self.trials,
            "lambda": self.lam,
            "pass_rate": self.pass_rate,
            "pass_ci_low": lo,
            "pass_ci_high": hi,
            "per_tuple_rate": self.per_tuple_rate,
            "per_tuple_ci_low": t_lo,
            "per_tuple_ci_high": t_hi,
            "db_hits_0": self.db_hit_profile.get(0, 0),
            "db_hits_1": self.db_hit_profile.get(1, 0),
            "db_hits_2": self.db_hit_profile.get(2, 0),
        }])

    def trial_frame(self) -> pd.DataFrame:
        return pd.DataFrame([{
            "seed": r.seed, "accepted": r.accepted, "count": r.count,
            "passed": r.passed, "distinct": r.distinct,
        } for r in self.records])


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------

def wilson_interval(successes: int, n: int, z: float = Z_95) -> Tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        return 0.0, 1.0
    p = successes / n
    denom = 1 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def two_proportion_halfwidth(x1: int, n1: int, x2: int, n2: int, z: float = Z_95) -> float:
    """Half-width of the pooled two-proportion interval for p1 - p2."""
    pooled = (x1 + x2) / (n1 + n2)
    return z * math.sqrt(pooled * (1 - pooled) * (1 / n1 + 1 / n2))


def binomial_tail(lam: int, p: float, threshold: Optional[int] = None) -> float:
    """Exact P(Bin(lam, p) >= threshold); threshold defaults to the acceptance count."""
    threshold = acceptance_threshold(lam) if threshold is None else threshold
    return float(sum(math.comb(lam, k) * p ** k * (1 - p) ** (lam - k)
                     for k in range(max(threshold, 0), lam + 1)))


# ---------------------------------------------------------------------------
# Oracle database search
# ---------------------------------------------------------------------------

class _Database:
    """Decoded oracle entries with a cheap single-coefficient prefilter."""

    def __init__(self, oracle: RandomOracle, key: NtcfKey):
        params = key.params
        self.key = key
        self.oracle = oracle
        self.entries = oracle.database()
        self.elements = [decode_from_oracle(raw, params.n, params.q) for raw in self.entries]
        self.limit = math.isqrt(params.B_P * params.B_P * params.dim)
        if self.elements:
            row = negacyclic_matrix(key.a.elems[0])[0]
            coeffs = np.stack([x.coeffs for x in self.elements])
            self.first_coeff = coeffs @ row
        else:
            self.first_coeff = np.zeros(0, dtype=np.uint64)

    def _candidates(self, b: int, y) -> np.ndarray:
        target = y.elems[0, :1]
        if b:
            target = target - self.key.v.elems[0, :1]
        residual = centered((target - self.first_coeff) & np.uint64(self.key.params.q - 1), self.key.params.q)
        return np.flatnonzero(np.abs(residual) <= self.limit)

    def find(self, b: int, y) -> Optional[Tuple[RingElement, int]]:
        """Earliest-queried entry x with Chk_F(k, b, x, y) = 1, with its oracle bit."""
        for idx in self._candidates(b, y):
            x = self.elements[idx]
            if chk_f(self.key, b, x, y):
                return x, self.oracle.lookup(self.entries[idx])
        return None

    def find_pair(self, y):
        first = self.find(0, y)
        second = self.find(1, y)
        if first is None or second is None:
            return None
        return first, second


def extract_claw_attempt(oracle: RandomOracle, key: NtcfKey,
                         tuples: Sequence[ProverTuple]) -> Optional[Tuple[RingElement, RingElement]]:
    """Search the oracle database for a claw on any submitted image.

    Needs only the public key: Chk_F on both branches identifies the pair.

    Returns:
        (x0, x1) with x0 - x1 = s, or None
    """
    db = _Database(oracle, key)
    for tup in tuples:
        pair = db.find_pair(tup.y)
        if pair is not None:
            (x0, _), (x1, _) = pair
            logger.info("Extracted claw from oracle database")
            return x0, x1
    return None


def _hit_profile(oracle: RandomOracle, trapdoor: NtcfTrapdoor, tuples: Sequence[ProverTuple]) -> Tuple[int, ...]:
    hits = []
    for tup in tuples:
        claw = claw_pair(trapdoor, tup.y)
        if claw is None:
            hits.append(0)
            continue
        hits.append(sum(oracle.lookup(encode_for_oracle(x)) is not None for x in claw))
    return tuple(hits)


def _database_challenger(variant: int, key: NtcfKey, tuples: Sequence[ProverTuple],
                         oracle: RandomOracle, rng: np.random.Generator) -> Tuple[bool, int, bool]:
    """Variants 2 and 3; returns (accepted, count, distinct)."""
    encodings = [tup.y.to_bytes() for tup in tuples]
    if len(set(encodings)) != len(encodings):
        return False, 0, False
    db = _Database(oracle, key)
    count = 0
    complete_pairs = 0
    for tup in tuples:
        pair = db.find_pair(tup.y)
        if pair is None:
            count += int(rng.integers(0, 2))
            continue
        complete_pairs += 1
        (x0, h0), (x1, h1) = pair
        count += int(tup.m == dot_mod2(tup.d, bit_decomp(x0) ^ bit_decomp(x1)) ^ h0 ^ h1)
    if variant == 3 and complete_pairs == 0:
        return False, count, True
    return count >= acceptance_threshold(len(tuples)), count, True


def run_trial(variant: int, strategy: Strategy, params: Params, seed: int,
              oracle_mode: OracleMode = OracleMode.LAZY) -> TrialRecord:
    """One protocol run with fresh key, oracle and rng derived from seed."""
    key_rng, oracle_rng, prover_rng, challenger_rng = (
        np.random.default_rng(child) for child in np.random.SeedSequence(seed).spawn(4))
    key, trapdoor = gen_f(params, key_rng)
    oracle = RandomOracle(oracle_mode, rng=oracle_rng if oracle_mode is OracleMode.LAZY else None)
    tuples = prove(strategy, key, oracle, prover_rng,
                   trapdoor=trapdoor if strategy.needs_trapdoor else None)
    hits = _hit_profile(oracle, trapdoor, tuples) if oracle.is_lazy else ()
    if variant == 1:
        verdict = verify(trapdoor, tuples, oracle)
        passed = sum(verdict.per_tuple)
        distinct = verdict.error_code is not ErrorCode.DUPLICATE_IMAGE
        return TrialRecord(seed, verdict.accepted, verdict.count, passed, distinct, hits)
    accepted, count, distinct = _database_challenger(variant, key, tuples, oracle, challenger_rng)
    return TrialRecord(seed, accepted, count, count, distinct, hits)


def run_experiment(variant: int, strategy: Strategy, params: Params, trials: int,
                   rng: np.random.Generator,
                   oracle_mode: OracleMode = OracleMode.LAZY) -> ExperimentStats:
    """Run one challenger variant against one strategy.

    Args:
        variant: 1, 2 or 3
        strategy: Prover strategy
        params: Scheme parameters
        trials: Number of independent runs
        rng: Source of per-trial seeds
        oracle_mode: Lazy for every variant; deterministic allowed for variant 1

    Returns:
        ExperimentStats

    Raises:
        ConfigurationError: Unknown variant, or database variant without a lazy oracle
    """
    strategy = Strategy(strategy)
    oracle_mode = OracleMode(oracle_mode)
    if variant not in VARIANTS:
        raise ConfigurationError(f"Unknown experiment variant {variant}")
    if variant in (2, 3) and oracle_mode is not OracleMode.LAZY:
        raise ConfigurationError(f"Variant {variant} inspects the oracle database and needs the lazy backend")
    if trials < 1:
        raise ConfigurationError("trials must be positive")

    seeds = rng.integers(0, 2 ** 63, size=trials).tolist()
    records = [run_trial(variant, strategy, params, seed, oracle_mode) for seed in seeds]
    profile = {0: 0, 1: 0, 2: 0}
    for record in records:
        for h in record.hits:
            profile[h] += 1
    stats = ExperimentStats(
        variant=variant,
        strategy=strategy,
        trials=trials,
        lam=params.lam,
        accepts=sum(r.accepted for r in records),
        tuples_passed=sum(r.passed for r in records),
        db_hit_profile=profile if oracle_mode is OracleMode.LAZY else {},
        records=records,
    )
    logger.info("Experiment %d / %s: pass rate %.4f, per-tuple %.4f over %d trials",
                variant, strategy.value, stats.pass_rate, stats.per_tuple_rate, trials)
    return stats
