#!/usr/bin/env python3
"""
Command-line front end for the proof-of-quantumness protocol.

Subcommands:
    params      Build and validate scheme parameters, write them as YAML
    keygen      Write public and secret key files
    challenge   Write a CHALLENGE message for the public key
    prove       Answer a CHALLENGE with a strategy, write a RESPONSE
    verify      Check a RESPONSE with the secret key (exit 0 accept, 1 reject)
    serve       Run the TCP verifier
    respond     Run the TCP prover against a verifier
    experiment  Run a soundness experiment and print its statistics
    microsim    Exhaustive statevector checks of the honest circuit
    bench       Timing report for keygen / prove / verify

Usage:
    python -m src.main params --n 64
    python -m src.main keygen
    python -m src.main challenge --out results/challenge.bin
    python -m src.main prove --challenge results/challenge.bin --strategy honest --out results/response.bin
    python -m src.main verify --response results/response.bin

Exit codes: 0 success/accept, 1 reject, 2 parse error, 3 infeasible
parameters, 4 I/O error, 5 configuration error.

Role code is imported inside its subcommand: `serve` never loads the
prover modules and `respond` never loads the verifier server.
"""

import argparse
import logging
import sys
import time
from datetime import datetime
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd

from src.config import ConfigurationError, RunConfig, Strategy, apply_seed_env, load_config, save_params
from src.ntcf_rlwe import (
    ParameterInfeasibleError,
    estimate_hellinger,
    gen_f,
    load_public_key,
    load_secret_key,
    save_public_key,
    save_secret_key,
)
from src.protocol_core import (
    Challenge,
    MalformedResponseError,
    ParseError,
    Response,
    Transcript,
    deserialize_msg,
    serialize_msg,
    verify,
)
from src.random_oracle import OracleMode, RandomOracle


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_REJECT = 1
EXIT_PARSE = 2
EXIT_INFEASIBLE = 3
EXIT_IO = 4
EXIT_CONFIG = 5

KEYGEN_STREAM = 10
EXPERIMENT_STREAM = 20
MICROSIM_STREAM = 30
BENCH_STREAM = 40


def _banner(title: str) -> None:
    print("=" * 60)
    print(title)
    print("=" * 60)
    print()


def _timestamped(output_dir: str, name: str) -> Path:
    path = Path(output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path / f"{datetime.now().strftime('%Y%m%d_%H%M')}_{name}"


def _oracle(config: RunConfig, rng: Optional[np.random.Generator] = None) -> RandomOracle:
    mode = OracleMode(config.oracle_mode)
    if mode is OracleMode.LAZY:
        return RandomOracle.lazy(rng)
    return RandomOracle.deterministic(config.hash_name)


def _emulation_notice(strategy: Strategy) -> None:
    if strategy.needs_trapdoor:
        print("⚠️  EMULATION MODE: this prover reads the verifier's secret key.")
        print("    Its output reproduces a quantum device's law; it is not a classical break.")
        print()


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_params(args, config: RunConfig) -> int:
    _banner("Scheme Parameters")
    params = config.params()
    summary = pd.DataFrame([params.summary()]).T.rename(columns={0: "value"})
    print(summary.to_string())
    print()
    out = Path(args.out) if args.out else _timestamped(config.output_dir, "params.yaml")
    save_params(params, out)
    print(f"✅ Params written to: {out}")
    return EXIT_OK


def cmd_keygen(args, config: RunConfig) -> int:
    _banner("Key Generation")
    params = config.params()
    key, trapdoor = gen_f(params, config.generator(KEYGEN_STREAM))
    for path in (config.public_key, config.secret_key):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
    save_public_key(key, Path(config.public_key))
    save_secret_key(trapdoor, Path(config.secret_key))
    print(f"📁 Public key: {config.public_key}")
    print(f"📁 Secret key: {config.secret_key}")
    print(f"✅ Key generated (n={params.n}, q=2^{params.k_g}, m={params.m})")
    return EXIT_OK


def cmd_challenge(args, config: RunConfig) -> int:
    key = load_public_key(Path(config.public_key))
    out = Path(args.out) if args.out else _timestamped(config.output_dir, "challenge.bin")
    out.write_bytes(serialize_msg(Challenge(key)))
    print(f"✅ CHALLENGE written to: {out}")
    return EXIT_OK


def cmd_prove(args, config: RunConfig) -> int:
    from src.prover_service import PROVER_STREAM
    from src.prover_sim import prove

    strategy = Strategy.parse(config.strategy)
    msg = deserialize_msg(Path(args.challenge).read_bytes())
    if not isinstance(msg, Challenge):
        raise ParseError("Expected a CHALLENGE message", 4)
    _emulation_notice(strategy)
    trapdoor = load_secret_key(Path(config.secret_key)) if strategy.needs_trapdoor else None
    rng = config.generator(PROVER_STREAM)
    tuples = prove(strategy, msg.key, _oracle(config, rng), rng, trapdoor=trapdoor)
    out = Path(args.out) if args.out else _timestamped(config.output_dir, "response.bin")
    out.write_bytes(serialize_msg(Response.for_params(msg.key.params, tuples)))
    print(f"✅ RESPONSE with {len(tuples)} tuples ({strategy.value}) written to: {out}")
    return EXIT_OK


def cmd_verify(args, config: RunConfig) -> int:
    trapdoor = load_secret_key(Path(config.secret_key))
    raw = Path(args.response).read_bytes()
    msg = deserialize_msg(raw)
    if not isinstance(msg, Response):
        raise ParseError("Expected a RESPONSE message", 4)
    verdict = verify(trapdoor, msg.tuples, RandomOracle.deterministic(config.hash_name))
    transcript = Transcript([serialize_msg(Challenge(trapdoor.key)), raw, serialize_msg(verdict)])
    path = transcript.save(config.output_dir, "verify_transcript")
    marker = "✅" if verdict.accepted else "❌"
    print(f"{marker} {verdict.label}, count={verdict.count}")
    logger.info("Transcript saved to %s", path)
    return EXIT_OK if verdict.accepted else EXIT_REJECT


def cmd_serve(args, config: RunConfig) -> int:
    from src.verifier_service import serve

    params = config.params()
    trapdoor = load_secret_key(Path(config.secret_key)) if Path(config.secret_key).exists() else None
    if trapdoor is None:
        print("🔑 No secret key file: a fresh key is generated for every session")
    print(f"🌐 Verifier listening on {config.host}:{config.port}")
    results = serve(config, params, trapdoor, max_sessions=args.sessions)
    for result in results:
        print(f"   session {result.index}: {result.verdict.label}, count={result.verdict.count}")
    return EXIT_OK


def cmd_respond(args, config: RunConfig) -> int:
    from src.prover_service import respond

    strategy = Strategy.parse(config.strategy)
    _emulation_notice(strategy)
    result = respond(config)
    marker = "✅" if result.verdict.accepted else "❌"
    print(f"{marker} {result.verdict.label}, count={result.verdict.count}")
    return EXIT_OK if result.verdict.accepted else EXIT_REJECT


def cmd_experiment(args, config: RunConfig) -> int:
    from src.soundness_lab import run_experiment

    _banner(f"Soundness Experiment {config.variant}")
    strategy = Strategy.parse(config.strategy)
    mode = OracleMode(config.oracle_mode) if config.variant == 1 else OracleMode.LAZY
    stats = run_experiment(config.variant, strategy, config.params(), config.trials,
                           config.generator(EXPERIMENT_STREAM), oracle_mode=mode)
    frame = stats.to_frame()
    print(frame.T.rename(columns={0: "value"}).to_string())
    if config.csv:
        out = _timestamped(config.output_dir, f"experiment_v{config.variant}_{strategy.value}.csv")
        frame.to_csv(out, index=False)
        stats.trial_frame().to_csv(out.with_name(out.stem + "_trials.csv"), index=False)
        print(f"\n📊 Statistics saved to: {out}")
    return EXIT_OK


def cmd_microsim(args, config: RunConfig) -> int:
    from src.prover_sim import correct_m_probability
    from src.quantum_microsim import (
        ToyTcf,
        format_report,
        run_honest_circuit,
        run_unequal_amplitudes,
        satisfied_probability,
    )

    _banner("Exhaustive Microsim")
    rng = config.generator(MICROSIM_STREAM)
    rows = []
    for N in args.sizes:
        for s in sorted({0, 1 % N, N - 1}):
            toy = ToyTcf(N, s)
            worst_mass, worst_m_prime, worst_drift = 1.0, 1.0, 0.0
            for _ in range(args.tables):
                result = run_honest_circuit(toy, rng.integers(0, 2, size=N))
                worst_mass = min(worst_mass, result.satisfied_mass)
                worst_m_prime = min(worst_m_prime, result.m_prime_one_mass)
                worst_drift = max(worst_drift, max(result.norm_drift.values()))
            rows.append({"N": N, "s": s, "tables": args.tables, "min_satisfied_mass": worst_mass,
                         "min_m_prime_mass": worst_m_prime, "max_norm_drift": worst_drift})
    circuit = pd.DataFrame(rows)

    gaps = []
    for _ in range(args.pairs):
        angle = rng.uniform(0, np.pi / 2)
        alpha0, alpha1 = float(np.cos(angle)), float(np.sin(angle))
        x0, x1 = (int(v) for v in rng.integers(0, 8, size=2))
        table = run_unequal_amplitudes(alpha0, alpha1, x0, x1, rng.integers(0, 2, size=8), nbits=3)
        gaps.append(abs(satisfied_probability(table) - correct_m_probability(alpha0, alpha1)))

    print(format_report(circuit, csv=config.csv))
    print()
    print(f"Amplitude formula: max deviation {max(gaps, default=0.0):.3e} over {args.pairs} pairs")
    if args.report:
        N, s = args.report
        result = run_honest_circuit(ToyTcf(N, s), rng.integers(0, 2, size=N))
        print()
        print(format_report(result.table, csv=config.csv))
    ok = (circuit["min_satisfied_mass"] > 1 - 1e-12).all() and max(gaps, default=0.0) < 1e-12
    print(f"\n{'✅' if ok else '❌'} Microsim checks {'passed' if ok else 'FAILED'}")
    return EXIT_OK if ok else EXIT_REJECT


def cmd_bench(args, config: RunConfig) -> int:
    from src.prover_sim import prove

    _banner("Benchmark")
    params = config.params()
    rng = config.generator(BENCH_STREAM)
    oracle = RandomOracle.deterministic(config.hash_name)
    rows = []
    for run in range(args.repeat):
        start = time.perf_counter()
        key, trapdoor = gen_f(params, rng)
        keygen = time.perf_counter() - start
        start = time.perf_counter()
        tuples = prove(Strategy.HONEST, key, oracle, rng, trapdoor=trapdoor)
        proving = time.perf_counter() - start
        start = time.perf_counter()
        verdict = verify(trapdoor, tuples, oracle)
        verifying = time.perf_counter() - start
        rows.append({"run": run, "keygen_s": keygen, "prove_s": proving, "verify_s": verifying,
                     "count": verdict.count, "accepted": verdict.accepted,
                     "hellinger_estimate": estimate_hellinger(trapdoor, args.hellinger_samples, rng)})
    frame = pd.DataFrame(rows)
    print(frame.to_string(index=False))
    if config.csv:
        out = _timestamped(config.output_dir, "bench.csv")
        frame.to_csv(out, index=False)
        print(f"\n📊 Timings saved to: {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', type=str, help='YAML configuration file')
    common.add_argument('--seed', type=int, help='Seed (PQ_SEED overrides)')
    common.add_argument('--verbose', action='store_true', help='Debug logging on stderr')
    common.add_argument('--output-dir', dest='output_dir', type=str, help='Directory for output files')
    common.add_argument('--csv', action='store_true', default=None, help='CSV instead of plain tables')
    common.add_argument('--n', type=int, help='Ring dimension')
    common.add_argument('--m-bar', dest='m_bar', type=int, help='Uniform trapdoor slots')
    common.add_argument('--B-V', dest='B_V', type=int, help='Key-noise width')
    common.add_argument('--lambda', dest='lam', type=int, help='Tuples per run')
    common.add_argument('--C-T', dest='C_T', type=int, help='Inversion constant')
    common.add_argument('--params-file', dest='params_file', type=str, help='Params YAML to use instead')
    common.add_argument('--public-key', dest='public_key', type=str, help='Public key path')
    common.add_argument('--secret-key', dest='secret_key', type=str, help='Secret key path')
    common.add_argument('--strategy', type=str, choices=[s.value for s in Strategy], help='Prover strategy')
    common.add_argument('--oracle-mode', dest='oracle_mode', type=str,
                        choices=[m.value for m in OracleMode], help='Random oracle backend')
    common.add_argument('--host', type=str, help='Verifier host')
    common.add_argument('--port', type=int, help='Verifier port')
    common.add_argument('--timeout', type=float, help='Socket timeout in seconds')

    parser = argparse.ArgumentParser(description='Proof-of-quantumness protocol toolkit (desk-scale, not secure)')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('params', parents=[common], help='Build and write scheme parameters')
    p.add_argument('--out', type=str, help='Output YAML path')
    sub.add_parser('keygen', parents=[common], help='Generate key files')
    p = sub.add_parser('challenge', parents=[common], help='Write a CHALLENGE message')
    p.add_argument('--out', type=str, help='Output path')
    p = sub.add_parser('prove', parents=[common], help='Answer a CHALLENGE')
    p.add_argument('--challenge', type=str, required=True, help='CHALLENGE file')
    p.add_argument('--out', type=str, help='Output path')
    p = sub.add_parser('verify', parents=[common], help='Verify a RESPONSE')
    p.add_argument('--response', type=str, required=True, help='RESPONSE file')
    p = sub.add_parser('serve', parents=[common], help='Run the TCP verifier')
    p.add_argument('--sessions', type=int, help='Stop after this many sessions')
    sub.add_parser('respond', parents=[common], help='Run the TCP prover')
    p = sub.add_parser('experiment', parents=[common], help='Run a soundness experiment')
    p.add_argument('--variant', type=int, choices=[1, 2, 3], help='Challenger variant')
    p.add_argument('--trials', type=int, help='Number of runs')
    p = sub.add_parser('microsim', parents=[common], help='Exhaustive circuit checks')
    p.add_argument('--sizes', type=int, nargs='+', default=[2, 4, 8, 16, 64], help='Toy domain sizes')
    p.add_argument('--tables', type=int, default=20, help='Random oracle tables per instance')
    p.add_argument('--pairs', type=int, default=1000, help='Random amplitude pairs')
    p.add_argument('--report', type=int, nargs=2, metavar=('N', 'S'), help='Print the outcome table of one instance')
    p = sub.add_parser('bench', parents=[common], help='Timing report')
    p.add_argument('--repeat', type=int, default=3, help='Repetitions')
    p.add_argument('--hellinger-samples', dest='hellinger_samples', type=int, default=200,
                   help='Monte Carlo samples for the Hellinger estimate')
    return parser


COMMANDS = {
    'params': cmd_params,
    'keygen': cmd_keygen,
    'challenge': cmd_challenge,
    'prove': cmd_prove,
    'verify': cmd_verify,
    'serve': cmd_serve,
    'respond': cmd_respond,
    'experiment': cmd_experiment,
    'microsim': cmd_microsim,
    'bench': cmd_bench,
}

OVERRIDES = ('seed', 'output_dir', 'csv', 'n', 'm_bar', 'B_V', 'lam', 'C_T', 'params_file',
             'public_key', 'secret_key', 'strategy', 'oracle_mode', 'host', 'port', 'timeout',
             'variant', 'trials')


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point; returns the process exit code."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.DEBUG if args.verbose else logging.WARNING,
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    try:
        base = load_config(args.config)
        overrides = {name: getattr(args, name, None) for name in OVERRIDES}
        config = base.with_overrides(**overrides)
        # PQ_SEED wins over --seed as well as the file
        config = apply_seed_env(config)
        return COMMANDS[args.command](args, config)
    except ParameterInfeasibleError as e:
        print(f"❌ Infeasible parameters: {e}")
        for line in e.report:
            print(f"   - {line}")
        return EXIT_INFEASIBLE
    except (ParseError, MalformedResponseError) as e:
        print(f"❌ Parse error: {e}")
        return EXIT_PARSE
    except ConfigurationError as e:
        print(f"❌ Configuration error: {e}")
        return EXIT_CONFIG
    except OSError as e:
        print(f"❌ I/O error: {e}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
