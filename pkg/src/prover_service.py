"""
TCP prover process: fetch a CHALLENGE, answer it with the configured
strategy, read the VERDICT.

Only the prover side lives here; nothing in this module imports the verifier
server.
"""

import logging
import socket
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from src.config import ConfigurationError, RunConfig, Strategy
from src.ntcf_rlwe import NtcfTrapdoor, load_secret_key
from src.protocol_core import (
    Challenge,
    ParseError,
    Response,
    Transcript,
    Verdict,
    deserialize_msg,
    read_frame,
    serialize_msg,
    stream_reader,
)
from src.prover_sim import prove


logger = logging.getLogger(__name__)

PROVER_STREAM = 1


@dataclass
class ResponderResult:
    verdict: Verdict
    transcript: Transcript = field(default_factory=Transcript)
    path: Optional[Path] = None


def respond(config: RunConfig, trapdoor: Optional[NtcfTrapdoor] = None,
            save: bool = True) -> ResponderResult:
    """Prover side of one session.

    Args:
        config: Run configuration (address, strategy, seed, secret key path)
        trapdoor: Verifier secret for emulation strategies; loaded from
            config.secret_key when the strategy needs it and none is given
        save: Persist the transcript under config.output_dir

    Raises:
        ConfigurationError: Trapdoor missing or not matching the challenge
        ParseError: Malformed frames from the verifier
    """
    strategy = Strategy.parse(config.strategy)
    oracle = config.network_oracle()
    if strategy.needs_trapdoor and trapdoor is None:
        trapdoor = load_secret_key(config.secret_key)
    transcript = Transcript()
    with socket.create_connection((config.host, config.port), timeout=config.timeout) as sock:
        with sock.makefile("rb") as reader:
            read_exact = stream_reader(reader)
            frame = read_frame(read_exact)
            transcript.add(frame)
            challenge = deserialize_msg(frame)
            if not isinstance(challenge, Challenge):
                raise ParseError(f"Expected CHALLENGE, got {type(challenge).__name__}", 4)
            key = challenge.key
            if strategy.needs_trapdoor and trapdoor.key != key:
                raise ConfigurationError("Secret key does not match the verifier's challenge")
            tuples = prove(strategy, key, oracle, config.generator(PROVER_STREAM), trapdoor=trapdoor)
            response = serialize_msg(Response.for_params(key.params, tuples))
            sock.sendall(response)
            transcript.add(response)
            frame = read_frame(read_exact)
            transcript.add(frame)
            verdict = deserialize_msg(frame)
    if not isinstance(verdict, Verdict):
        raise ParseError(f"Expected VERDICT, got {type(verdict).__name__}", 4)
    logger.info("Prover (%s) received verdict %s, count=%d", strategy.value, verdict.label, verdict.count)
    path = transcript.save(config.output_dir, "prover_session") if save else None
    return ResponderResult(verdict, transcript, path)
