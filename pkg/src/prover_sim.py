"""
Prover Simulation - classical provers for the protocol.

This module provides functionality to:
- Emulate the honest quantum prover's output law exactly (trapdoor-assisted)
- Run classical cheating strategies: random guessing, one-branch knowledge,
  and a trapdoor cheat that shows soundness rests on claw-freeness

After the image measurement the honest device holds
alpha0 |0, x0> + alpha1 |1, x1>; with the |-> phase kickback and the final
Hadamard layer, d comes out uniform and m satisfies the verification equation
with probability (alpha0 + alpha1)^2 / (2 (alpha0^2 + alpha1^2)).
"""

import logging
import math
from typing import List, Optional, Tuple

import numpy as np

from src.config import ConfigurationError, Strategy
from src.ntcf_rlwe import NtcfKey, NtcfTrapdoor, claw_pair, log_density_fprime, sample_image
from src.protocol_core import ProverTuple, equation_bit
from src.random_oracle import RandomOracle
from src.ring_core import BitString, ProtocolError, RingElement, RingVector, bit_decomp, dot_mod2


logger = logging.getLogger(__name__)


class EmulationError(ProtocolError):
    """The trapdoor could not invert an image the emulator produced itself."""
    pass


def correct_m_probability(alpha0: float, alpha1: float) -> float:
    """(alpha0 + alpha1)^2 / (2 (alpha0^2 + alpha1^2)).

    Raises:
        ValueError: If an amplitude is negative or both are zero
    """
    if alpha0 < 0 or alpha1 < 0:
        raise ValueError("Amplitudes must be non-negative")
    if alpha0 == 0 and alpha1 == 0:
        raise ValueError("At least one amplitude must be positive")
    return (alpha0 + alpha1) ** 2 / (2 * (alpha0 * alpha0 + alpha1 * alpha1))


def amplitudes_from_log_densities(log0: float, log1: float) -> Tuple[float, float]:
    """sqrt of two unnormalised densities, rescaled so the larger is 1."""
    top = max(log0, log1)
    if top == -math.inf:
        raise EmulationError("Image lies outside both branch supports")
    return math.exp((log0 - top) / 2), math.exp((log1 - top) / 2)


def _random_preimage(key: NtcfKey, rng: np.random.Generator) -> Tuple[int, RingElement, RingVector]:
    params = key.params
    b = int(rng.integers(0, 2))
    x = RingElement.uniform(params.n, params.q, rng)
    return b, x, sample_image(key, b, x, rng)


def honest_tuple(trapdoor: NtcfTrapdoor, oracle: RandomOracle,
                 rng: np.random.Generator) -> Tuple[ProverTuple, float]:
    """One emulated tuple and the probability that its m satisfies the equation."""
    key = trapdoor.key
    _, _, y = _random_preimage(key, rng)
    claw = claw_pair(trapdoor, y)
    if claw is None:
        raise EmulationError("Trapdoor failed to invert an honestly sampled image")
    x0, x1 = claw
    alpha0, alpha1 = amplitudes_from_log_densities(log_density_fprime(key, 0, x0, y),
                                                   log_density_fprime(key, 1, x1, y))
    p_correct = correct_m_probability(alpha0, alpha1)
    d = BitString.random(key.params.w, rng)
    correct = equation_bit(x0, x1, d, oracle)
    m = correct if rng.random() < p_correct else 1 - correct
    return ProverTuple(y, m, d), p_correct


def prove_honest(trapdoor: NtcfTrapdoor, oracle: RandomOracle, rng: np.random.Generator,
                 lam: Optional[int] = None) -> List[ProverTuple]:
    """lambda tuples drawn from the honest device's measurement law.

    Args:
        trapdoor: Needed to reproduce the device's output law classically
        oracle: Random oracle H
        rng: Pseudorandom generator
        lam: Tuple count (defaults to params.lam)

    Returns:
        List of ProverTuple
    """
    lam = trapdoor.params.lam if lam is None else lam
    logger.warning("Emulation mode: honest prover output computed with the verifier trapdoor")
    return [honest_tuple(trapdoor, oracle, rng)[0] for _ in range(lam)]


def _random_guess_tuple(key: NtcfKey, oracle: RandomOracle, rng: np.random.Generator) -> ProverTuple:
    _, _, y = _random_preimage(key, rng)
    return ProverTuple(y, int(rng.integers(0, 2)), BitString.random(key.params.w, rng))


def _half_claw_tuple(key: NtcfKey, oracle: RandomOracle, rng: np.random.Generator) -> ProverTuple:
    _, x, y = _random_preimage(key, rng)
    d = BitString.random(key.params.w, rng)
    return ProverTuple(y, dot_mod2(d, bit_decomp(x)) ^ oracle.query_element(x), d)


def _trapdoor_cheat_tuple(trapdoor: NtcfTrapdoor, oracle: RandomOracle,
                          rng: np.random.Generator) -> ProverTuple:
    _, _, y = _random_preimage(trapdoor.key, rng)
    claw = claw_pair(trapdoor, y)
    if claw is None:
        raise EmulationError("Trapdoor failed to invert a sampled image")
    d = BitString.random(trapdoor.params.w, rng)
    return ProverTuple(y, equation_bit(claw[0], claw[1], d, oracle), d)


def prove_cheat(strategy: Strategy, key: NtcfKey, oracle: RandomOracle,
                trapdoor: Optional[NtcfTrapdoor] = None,
                rng: Optional[np.random.Generator] = None,
                lam: Optional[int] = None) -> List[ProverTuple]:
    """lambda tuples from a classical strategy.

    Raises:
        ConfigurationError: Missing trapdoor for trapdoor_cheat, or strategy is honest
    """
    strategy = Strategy(strategy)
    if rng is None:
        raise ConfigurationError("prove_cheat needs an rng")
    if strategy is Strategy.HONEST:
        raise ConfigurationError("Use prove_honest for the honest strategy")
    if strategy.needs_trapdoor and trapdoor is None:
        raise ConfigurationError(f"Strategy {strategy.value} needs the trapdoor")
    lam = key.params.lam if lam is None else lam
    if strategy is Strategy.RANDOM_GUESS:
        return [_random_guess_tuple(key, oracle, rng) for _ in range(lam)]
    if strategy is Strategy.HALF_CLAW:
        return [_half_claw_tuple(key, oracle, rng) for _ in range(lam)]
    logger.warning("Trapdoor cheat: prover holds the verifier secret")
    return [_trapdoor_cheat_tuple(trapdoor, oracle, rng) for _ in range(lam)]


def prove(strategy: Strategy, key: NtcfKey, oracle: RandomOracle, rng: np.random.Generator,
          trapdoor: Optional[NtcfTrapdoor] = None, lam: Optional[int] = None) -> List[ProverTuple]:
    """Dispatch to prove_honest or prove_cheat."""
    strategy = Strategy(strategy)
    if strategy is Strategy.HONEST:
        if trapdoor is None:
            raise ConfigurationError("Honest emulation needs the trapdoor (secret key)")
        if trapdoor.key != key:
            raise ConfigurationError("Secret key does not match the challenge key")
        return prove_honest(trapdoor, oracle, rng, lam)
    return prove_cheat(strategy, key, oracle, trapdoor, rng, lam)
