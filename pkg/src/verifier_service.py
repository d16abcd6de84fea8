"""
TCP verifier process.

One session per connection:
    verifier -> prover   CHALLENGE (key)
    prover   -> verifier RESPONSE  (lambda tuples)
    verifier -> prover   VERDICT   (accepted, count, error code)

Connections are handled concurrently; every session owns its key material,
rng and transcript. Timeouts and malformed responses end the session with a
reject verdict carrying an error code.

Only the verifier side lives here; nothing in this module imports prover code.
"""

import logging
import socket
import socketserver
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

from src.config import RunConfig
from src.ntcf_rlwe import NtcfTrapdoor, Params
from src.protocol_core import (
    Challenge,
    ErrorCode,
    MalformedResponseError,
    ParseError,
    Response,
    Transcript,
    Verdict,
    deserialize_msg,
    make_challenge,
    read_frame,
    serialize_msg,
    stream_reader,
    verify,
)


logger = logging.getLogger(__name__)

SESSION_STREAM_BASE = 1000


@dataclass
class SessionResult:
    index: int
    verdict: Verdict
    transcript: Transcript
    path: Optional[Path] = None


def run_verifier_session(sock: socket.socket, params: Params, config: RunConfig, index: int,
                         trapdoor: Optional[NtcfTrapdoor] = None, save: bool = True) -> SessionResult:
    """Verifier side of one connection.

    Args:
        sock: Connected socket
        params: Scheme parameters (used when no fixed trapdoor is given)
        config: Run configuration (timeout, oracle, output directory, seed)
        index: Session number; selects the session's rng stream
        trapdoor: Fixed verifier secret, or None for a fresh key per session
        save: Persist the transcript under config.output_dir

    Returns:
        SessionResult
    """
    sock.settimeout(config.timeout)
    if trapdoor is None:
        _, trapdoor = make_challenge(params, config.generator(SESSION_STREAM_BASE + index))
    params = trapdoor.params
    oracle = config.network_oracle()
    transcript = Transcript()
    challenge = serialize_msg(Challenge(trapdoor.key))
    sock.sendall(challenge)
    transcript.add(challenge)
    logger.info("Session %d: challenge sent (%d bytes)", index, len(challenge))

    reader = sock.makefile("rb")
    try:
        frame = read_frame(stream_reader(reader))
        transcript.add(frame)
        msg = deserialize_msg(frame)
        if not isinstance(msg, Response):
            raise ParseError(f"Expected RESPONSE, got {type(msg).__name__}", 4)
        if (msg.n, msg.m, msg.k_g) != (params.n, params.m, params.k_g):
            transcript.note = "response shape mismatch"
            verdict = Verdict.failure(ErrorCode.SHAPE_MISMATCH)
        else:
            verdict = verify(trapdoor, msg.tuples, oracle)
    except socket.timeout:
        transcript.note = "timeout waiting for response"
        verdict = Verdict.failure(ErrorCode.TIMEOUT)
    except ParseError as e:
        transcript.note = f"parse failure: {e}"
        verdict = Verdict.failure(ErrorCode.PARSE)
    except MalformedResponseError as e:
        transcript.note = f"malformed response: {e}"
        verdict = Verdict.failure(ErrorCode.TUPLE_COUNT)
    finally:
        reader.close()
    if transcript.note:
        logger.warning("Session %d: %s", index, transcript.note)

    verdict_frame = serialize_msg(verdict)
    transcript.add(verdict_frame)
    try:
        sock.sendall(verdict_frame)
    except OSError as e:
        logger.warning("Session %d: could not deliver verdict: %s", index, e)
    logger.info("Session %d: %s (count=%d, code=%s)", index, verdict.label, verdict.count,
                verdict.error_code.name)
    path = transcript.save(config.output_dir, f"verifier_session_{index:04d}") if save else None
    return SessionResult(index, verdict, transcript, path)


class _VerifierHandler(socketserver.BaseRequestHandler):
    def handle(self):
        server: VerifierServer = self.server
        index = server.next_session()
        try:
            result = run_verifier_session(self.request, server.params, server.config, index,
                                          server.trapdoor, server.save)
        except OSError as e:
            logger.warning("Session %d aborted: %s", index, e)
            return
        server.record(result)


class VerifierServer(socketserver.ThreadingTCPServer):
    """Threaded verifier; bind to port 0 to let the OS pick a port."""

    allow_reuse_address = True

    def __init__(self, config: RunConfig, params: Params,
                 trapdoor: Optional[NtcfTrapdoor] = None, save: bool = True):
        config.network_oracle()
        self.config = config
        self.params = params
        self.trapdoor = trapdoor
        self.save = save
        self.results: List[SessionResult] = []
        self._lock = threading.Lock()
        self._sessions = 0
        super().__init__((config.host, config.port), _VerifierHandler)

    @property
    def address(self):
        return self.server_address[:2]

    def next_session(self) -> int:
        with self._lock:
            self._sessions += 1
            return self._sessions - 1

    def record(self, result: SessionResult) -> None:
        with self._lock:
            self.results.append(result)


def serve(config: RunConfig, params: Params, trapdoor: Optional[NtcfTrapdoor] = None,
          max_sessions: Optional[int] = None) -> List[SessionResult]:
    """Run the verifier until max_sessions sessions finished (forever when None)."""
    with VerifierServer(config, params, trapdoor) as server:
        host, port = server.address
        logger.info("Verifier listening on %s:%d", host, port)
        if max_sessions is None:
            server.serve_forever()
            return server.results
        for _ in range(max_sessions):
            server.handle_request()
        # joins the session threads
        server.server_close()
        return list(server.results)
