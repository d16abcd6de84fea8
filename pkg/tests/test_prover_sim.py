"""
Tests for the honest-prover emulator and the classical cheating strategies.

Tests cover:
- Correct-bit probability formula and amplitudes from log densities
- Honest emulation passes verification; d is uniform
- Random guessing and one-branch knowledge are rejected
- The trapdoor cheat passes every tuple
- Strategy dispatch errors
- Per-tuple pass rates at the reference parameters (slow)
"""

import math

import numpy as np
import pytest

from src.config import ConfigurationError, Strategy
from src.ntcf_rlwe import gen_f
from src.protocol_core import check_tuple, verify
from src.prover_sim import (
    EmulationError,
    amplitudes_from_log_densities,
    correct_m_probability,
    honest_tuple,
    prove,
    prove_cheat,
    prove_honest,
)


# ============================================================================
# GOLDEN TESTS - Correct-bit probability
# ============================================================================

class TestCorrectBitProbability:

    @pytest.mark.golden
    def test_equal_amplitudes_always_correct(self):
        assert correct_m_probability(1.0, 1.0) == pytest.approx(1.0)

    @pytest.mark.golden
    def test_single_branch_is_a_coin(self):
        assert correct_m_probability(1.0, 0.0) == pytest.approx(0.5)
        assert correct_m_probability(0.0, 0.3) == pytest.approx(0.5)

    @pytest.mark.golden
    def test_known_value(self):
        """alpha = (0.6, 0.8): (1.4)^2 / 2 = 0.98."""
        assert correct_m_probability(0.6, 0.8) == pytest.approx(0.98)

    @pytest.mark.invariant
    def test_scale_invariant_and_bounded(self, rng):
        for a0, a1 in rng.uniform(0, 5, size=(50, 2)):
            p = correct_m_probability(a0, a1)
            assert 0.5 <= p <= 1.0 + 1e-12
            assert correct_m_probability(3 * a0, 3 * a1) == pytest.approx(p)

    @pytest.mark.unit
    def test_invalid_amplitudes(self):
        with pytest.raises(ValueError, match="non-negative"):
            correct_m_probability(-0.1, 1.0)
        with pytest.raises(ValueError, match="At least one"):
            correct_m_probability(0.0, 0.0)

    @pytest.mark.unit
    def test_amplitudes_from_extreme_log_densities(self):
        """Log densities far below float range still give a usable ratio."""
        a0, a1 = amplitudes_from_log_densities(-5000.0, -5002.0)
        assert a0 == 1.0
        assert a1 == pytest.approx(math.exp(-1.0))
        assert amplitudes_from_log_densities(-10.0, -math.inf) == (1.0, 0.0)
        with pytest.raises(EmulationError, match="outside both"):
            amplitudes_from_log_densities(-math.inf, -math.inf)


# ============================================================================
# HONEST EMULATION
# ============================================================================

class TestHonestEmulation:

    @pytest.mark.deterministic
    def test_honest_run_accepts(self, small_keys, oracle, rng):
        key, trapdoor = small_keys
        tuples = prove(Strategy.HONEST, key, oracle, rng, trapdoor=trapdoor)
        assert len(tuples) == 64
        verdict = verify(trapdoor, tuples, oracle)
        assert verdict.accepted
        assert verdict.count >= 60

    @pytest.mark.invariant
    def test_per_tuple_probability_near_one(self, small_keys, oracle, rng):
        _, trapdoor = small_keys
        probabilities = [honest_tuple(trapdoor, oracle, rng)[1] for _ in range(50)]
        assert min(probabilities) >= 0.5
        assert np.mean(probabilities) > 0.98

    @pytest.mark.deterministic
    def test_d_is_uniform(self, small_keys, oracle, rng):
        _, trapdoor = small_keys
        tuples = prove_honest(trapdoor, oracle, rng, lam=200)
        bits = np.stack([t.d.bits for t in tuples])
        assert bits.shape == (200, trapdoor.params.w)
        assert 0.45 < bits.mean() < 0.55

    @pytest.mark.deterministic
    def test_same_seed_same_tuples(self, small_keys, oracle):
        key, trapdoor = small_keys
        first = prove(Strategy.HONEST, key, oracle, np.random.default_rng(3), trapdoor=trapdoor)
        second = prove(Strategy.HONEST, key, oracle, np.random.default_rng(3), trapdoor=trapdoor)
        assert first == second

    @pytest.mark.unit
    def test_emulation_warns(self, small_keys, oracle, rng, caplog):
        _, trapdoor = small_keys
        with caplog.at_level("WARNING", logger="src.prover_sim"):
            prove_honest(trapdoor, oracle, rng, lam=1)
        assert "Emulation mode" in caplog.text

    @pytest.mark.unit
    def test_honest_needs_matching_trapdoor(self, small_keys, small_params, oracle, rng):
        key, trapdoor = small_keys
        with pytest.raises(ConfigurationError, match="needs the trapdoor"):
            prove(Strategy.HONEST, key, oracle, rng)
        _, other = gen_f(small_params, np.random.default_rng(123))
        with pytest.raises(ConfigurationError, match="does not match"):
            prove(Strategy.HONEST, key, oracle, rng, trapdoor=other)


# ============================================================================
# CHEATING STRATEGIES
# ============================================================================

class TestCheatingStrategies:
    """lambda = 64: a coin-flip prover passes with probability about 1e-5."""

    @pytest.mark.deterministic
    def test_random_guess_rejected(self, small_keys, oracle, rng):
        key, trapdoor = small_keys
        tuples = prove_cheat(Strategy.RANDOM_GUESS, key, oracle, rng=rng)
        verdict = verify(trapdoor, tuples, oracle)
        assert not verdict.accepted
        assert 16 <= verdict.count <= 48

    @pytest.mark.deterministic
    def test_half_claw_rejected(self, small_keys, oracle, rng):
        key, trapdoor = small_keys
        tuples = prove_cheat(Strategy.HALF_CLAW, key, oracle, rng=rng)
        verdict = verify(trapdoor, tuples, oracle)
        assert not verdict.accepted

    @pytest.mark.deterministic
    def test_trapdoor_cheat_passes_every_tuple(self, small_keys, oracle, rng):
        key, trapdoor = small_keys
        tuples = prove(Strategy.TRAPDOOR_CHEAT, key, oracle, rng, trapdoor=trapdoor)
        assert all(check_tuple(trapdoor, t, oracle) for t in tuples)
        assert verify(trapdoor, tuples, oracle).count == 64

    @pytest.mark.invariant
    def test_half_claw_queries_one_preimage_per_tuple(self, small_keys, lazy_oracle, rng):
        key, _ = small_keys
        prove_cheat(Strategy.HALF_CLAW, key, lazy_oracle, rng=rng, lam=10)
        assert len(lazy_oracle) == 10

    @pytest.mark.invariant
    def test_random_guess_never_queries(self, small_keys, lazy_oracle, rng):
        key, _ = small_keys
        prove_cheat(Strategy.RANDOM_GUESS, key, lazy_oracle, rng=rng, lam=10)
        assert len(lazy_oracle) == 0

    @pytest.mark.unit
    def test_dispatch_errors(self, small_keys, oracle, rng):
        key, _ = small_keys
        with pytest.raises(ConfigurationError, match="needs the trapdoor"):
            prove_cheat(Strategy.TRAPDOOR_CHEAT, key, oracle, rng=rng)
        with pytest.raises(ConfigurationError, match="prove_honest"):
            prove_cheat(Strategy.HONEST, key, oracle, rng=rng)
        with pytest.raises(ConfigurationError, match="needs an rng"):
            prove_cheat(Strategy.RANDOM_GUESS, key, oracle)


# ============================================================================
# REFERENCE PARAMETERS - n = 64, lambda = 120
# ============================================================================

def passing_fraction(strategy, key, trapdoor, oracle, rng, total, chunk=1000):
    """Fraction of total tuples passing check_tuple, proved chunk by chunk."""
    passed = 0
    for start in range(0, total, chunk):
        lam = min(chunk, total - start)
        tuples = prove(strategy, key, oracle, rng, trapdoor=trapdoor if strategy.needs_trapdoor else None, lam=lam)
        passed += sum(check_tuple(trapdoor, t, oracle) for t in tuples)
    return passed / total


@pytest.fixture(scope="module")
def golden_keys(golden_params):
    return gen_f(golden_params, np.random.default_rng(64))


class TestReferenceParameters:

    @pytest.mark.slow
    @pytest.mark.golden
    def test_honest_per_tuple_rate(self, golden_keys, oracle):
        key, trapdoor = golden_keys
        rate = passing_fraction(Strategy.HONEST, key, trapdoor, oracle, np.random.default_rng(1), 10_000)
        assert rate >= 0.8

    @pytest.mark.slow
    @pytest.mark.golden
    @pytest.mark.parametrize("strategy", [Strategy.RANDOM_GUESS, Strategy.HALF_CLAW])
    def test_classical_per_tuple_rate_is_a_coin(self, golden_keys, oracle, strategy):
        key, trapdoor = golden_keys
        rate = passing_fraction(strategy, key, trapdoor, oracle, np.random.default_rng(2), 100_000)
        assert rate == pytest.approx(0.5, abs=0.01)
