"""Command-line entry point: ``qsdc-duplex run | replay | check-table``.

Exit codes: 0 success, 1 mismatch (table cell or replayed summary),
2 configuration / output-directory error, 3 transcript schema violation.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path
from typing import Callable, List, Optional

import numpy as np

from . import __version__, harness, protocol
from .harness import ConfigError, ExperimentConfig, TranscriptError
from .quantum_core import BellLabel, PhiOutcomeError, Qubit

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

OUT_DIR_ENV = "QSDC_DUPLEX_OUT_DIR"
EXIT_OK, EXIT_MISMATCH, EXIT_CONFIG, EXIT_SCHEMA = 0, 1, 2, 3

# Flag dest -> ExperimentConfig field.
_OVERRIDES = {
    "seed": "seed",
    "rounds": "rounds",
    "adversary": "adversary",
    "control_prob": "control_prob",
    "announce_fraction": "announce_fraction",
    "loss": "loss_p",
    "bob_target": "bob_encode_target",
    "alice_message": "alice_message",
    "bob_message": "bob_message",
}

_SYMBOL = {
    BellLabel.PHI_PLUS: "Φ+",
    BellLabel.PHI_MINUS: "Φ−",
    BellLabel.PSI_PLUS: "Ψ+",
    BellLabel.PSI_MINUS: "Ψ−",
}


def _err(msg: str) -> None:
    print(f"qsdc-duplex: error: {msg}", file=sys.stderr)


def load_config_file(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid TOML: {exc}") from None
    nested = [k for k, v in data.items() if isinstance(v, (dict, list))]
    if nested:
        raise ConfigError(f"config file must be flat key = value pairs; offending keys: {', '.join(nested)}")
    return data


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    values = load_config_file(args.config) if args.config else {}
    values = ExperimentConfig.from_dict(values).to_dict() if values else ExperimentConfig().to_dict()
    for dest, name in _OVERRIDES.items():
        v = getattr(args, dest, None)
        if v is not None:
            values[name] = v
    return ExperimentConfig(**values).validate()


def cmd_run(args: argparse.Namespace) -> int:
    try:
        config = resolve_config(args)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    out_dir = Path(args.out_dir or os.environ.get(OUT_DIR_ENV) or "out")
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        _err(f"output directory {out_dir} is not writable: {exc.strerror}")
        return EXIT_CONFIG
    stats, records = harness.run_experiment(config, workers=args.workers)
    harness.write_transcript(out_dir / "transcript.jsonl", records)
    harness.write_summary(out_dir / "summary.json", stats, config)
    if not args.quiet:
        print(json.dumps(harness.summary_document(stats, config), indent=2))
    return EXIT_OK


def cmd_replay(args: argparse.Namespace) -> int:
    path = Path(args.transcript)
    try:
        records = harness.read_transcript(path)
    except OSError as exc:
        _err(f"cannot read transcript {path}: {exc.strerror}")
        return EXIT_CONFIG
    except TranscriptError as exc:
        _err(f"{path}: schema violation at {exc}")
        return EXIT_SCHEMA
    stats = harness.replay(records)
    summary_path = Path(args.summary) if args.summary else path.with_name("summary.json")
    existing = None
    config = None
    if summary_path.exists():
        try:
            existing = json.loads(summary_path.read_text(encoding="utf-8"))
            if existing.get("config") is not None:
                config = ExperimentConfig(**existing["config"])
        except (ValueError, TypeError, AttributeError) as exc:
            _err(f"cannot parse existing summary {summary_path}: {exc}")
            return EXIT_CONFIG
    out = Path(args.out) if args.out else path.with_name("summary.replay.json")
    try:
        harness.write_summary(out, stats, config)
    except OSError as exc:
        _err(f"cannot write {out}: {exc.strerror}")
        return EXIT_CONFIG
    if existing is None:
        print(f"replayed {len(records)} rounds -> {out} (no summary to compare)")
        return EXIT_OK
    recomputed = stats.to_dict()
    stored = existing.get("stats", {})
    diffs = sorted(k for k in set(recomputed) | set(stored) if recomputed.get(k) != stored.get(k))
    if diffs:
        for k in diffs:
            print(f"mismatch {k}: summary={stored.get(k)!r} replay={recomputed.get(k)!r}", file=sys.stderr)
        return EXIT_MISMATCH
    print(f"replayed {len(records)} rounds -> {out}: matches {summary_path}")
    return EXIT_OK


def check_table(
    repetitions: int = 10_000,
    bob_target: Qubit = Qubit.TRAVEL,
    seed: int = 0,
    encode_and_measure: Optional[Callable] = None,
) -> List[str]:
    """Verify the four honest (j, k) cells; return a list of failure descriptions.

    Each cell is simulated ``repetitions`` times and must produce the tabled
    outcome every time, with both decodes recovering the peer's bit.
    """
    measure = encode_and_measure or protocol.bob_encode_and_measure
    rng = np.random.Generator(np.random.Philox(key=[seed, 0]))
    failures = []
    for j in (0, 1):
        for k in (0, 1):
            want = protocol.expected_outcome(j, k)
            bad = 0
            seen = set()
            for _ in range(repetitions):
                state = protocol.alice_encode(protocol.bob_prepare(), j)
                got = measure(state, k, rng, bob_target)
                seen.add(got)
                try:
                    ok = got is want and protocol.decode_peer_bit(got, k) == j and protocol.decode_peer_bit(got, j) == k
                except PhiOutcomeError:
                    ok = False
                bad += not ok
            if bad:
                outs = ", ".join(sorted(_SYMBOL[s] for s in seen))
                failures.append(f"cell (j={j}, k={k}): expected {_SYMBOL[want]}, observed {{{outs}}} with {bad}/{repetitions} deviations")
    return failures


def cmd_check_table(args: argparse.Namespace) -> int:
    target = Qubit[args.bob_target.upper()]
    t0 = time.perf_counter()
    failures = check_table(args.repetitions, target, args.seed)
    elapsed = time.perf_counter() - t0
    print(f"Bob encodes on the {target.name.lower()} qubit; {args.repetitions} repetitions per cell")
    print("           k=0 (Z^0)   k=1 (Z^1)")
    for j in (0, 1):
        cells = "   ".join(f"{_SYMBOL[protocol.expected_outcome(j, k)]:<9}" for k in (0, 1))
        print(f"j={j} (Z^{j})   {cells}")
    for f in failures:
        print(f"FAIL {f}", file=sys.stderr)
    print(f"{'OK' if not failures else 'FAILED'} in {elapsed:.3f} s")
    return EXIT_MISMATCH if failures else EXIT_OK


def _probability(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qsdc-duplex", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a Monte Carlo experiment")
    run.add_argument("--config", help="flat TOML file with ExperimentConfig fields")
    run.add_argument("--seed", type=int)
    run.add_argument("--rounds", type=int)
    run.add_argument("--adversary", help="none | loss | intercept-{z,x}:{forward,return,both}")
    run.add_argument("--control-prob", type=_probability)
    run.add_argument("--announce-fraction", type=_probability)
    run.add_argument("--loss", type=_probability, help="per-leg photon loss probability")
    run.add_argument("--bob-target", choices=["travel", "home"])
    run.add_argument("--alice-message", help="'random' or a bitstring, repeated as needed")
    run.add_argument("--bob-message", help="'random' or a bitstring, repeated as needed")
    run.add_argument("--out-dir", help=f"output directory (default ${OUT_DIR_ENV} or ./out)")
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("-q", "--quiet", action="store_true")
    run.set_defaults(func=cmd_run)

    rep = sub.add_parser("replay", help="recompute a summary from transcript.jsonl")
    rep.add_argument("transcript")
    rep.add_argument("--summary", help="summary to compare against (default: summary.json beside the transcript)")
    rep.add_argument("--out", help="where to write the recomputed summary (default: summary.replay.json)")
    rep.set_defaults(func=cmd_replay)

    chk = sub.add_parser("check-table", help="verify the (j, k) -> Bell outcome table")
    chk.add_argument("--bob-target", choices=["travel", "home"], default="travel")
    chk.add_argument("--repetitions", type=int, default=10_000)
    chk.add_argument("--seed", type=int, default=0)
    chk.set_defaults(func=cmd_check_table)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
