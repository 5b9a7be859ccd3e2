"""Seeded Monte Carlo runner, summary statistics and transcript I/O.

Random streams
--------------
All randomness comes from numpy's counter-based Philox generator keyed by
``(seed, stream_id)``:

* stream 0: round uniforms.  Round ``i`` owns the 12 doubles starting at
  draw ``12 * i`` (Philox counter block ``3 * i``).  Slots 0-7 feed
  :func:`run_round`, slots 8-9 break ties in Eve's guess, 10-11 are spare.
* stream 1: the announce-fraction sample.
* streams 2 and 3: seeded-random message bits for Alice and Bob.

Because a round's uniforms depend only on ``(seed, i)``, chunks of rounds
can be simulated in any order or in parallel with identical results.
"""
from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .adversary import AdversarySpec, eve_guess_round
from .protocol import (
    ROUND_DRAWS,
    Flag,
    Mode,
    ProtocolConfig,
    RoundRecord,
    announcement_check,
    round_mismatches,
    run_round,
)
from .quantum_core import Draws, Qubit

ROW_WIDTH = 12
STREAM_ROUNDS, STREAM_CHECK, STREAM_ALICE, STREAM_BOB = 0, 1, 2, 3
CHUNK = 1 << 15
Z95 = 1.959963984540054
SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


class TranscriptError(ValueError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line


@dataclass(frozen=True)
class ExperimentConfig:
    rounds: int = 10_000
    control_prob: float = 0.5
    announce_fraction: float = 0.1
    adversary: str = "none"
    loss_p: float = 0.0
    seed: int = 0
    alice_message: str = "random"
    bob_message: str = "random"
    bob_encode_target: str = "travel"

    def validate(self) -> "ExperimentConfig":
        if isinstance(self.rounds, bool) or not isinstance(self.rounds, int):
            raise ConfigError("rounds must be an integer")
        if self.rounds < 1:
            raise ConfigError("rounds must be ≥ 1")
        for name in ("control_prob", "announce_fraction", "loss_p"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be a probability in [0, 1], got {v!r}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        for name in ("alice_message", "bob_message"):
            v = getattr(self, name)
            if not isinstance(v, str) or not (v == "random" or (v and set(v) <= {"0", "1"})):
                raise ConfigError(f"{name} must be 'random' or a non-empty bitstring, got {v!r}")
        if self.bob_encode_target not in ("travel", "home"):
            raise ConfigError(f"bob_encode_target must be 'travel' or 'home', got {self.bob_encode_target!r}")
        try:
            self.adversary_spec()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self

    def adversary_spec(self) -> AdversarySpec:
        if not isinstance(self.adversary, str):
            raise ValueError(f"adversary must be a string, got {self.adversary!r}")
        return AdversarySpec.parse(self.adversary, float(self.loss_p))

    def protocol_config(self) -> ProtocolConfig:
        return ProtocolConfig(float(self.control_prob), Qubit[self.bob_encode_target.upper()])

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d).validate()


@dataclass(frozen=True)
class SummaryStats:
    rounds: int
    control_rounds: int
    message_rounds: int
    lost_rounds: int
    detected_rounds: int
    detection_rate: Optional[float]
    detection_ci: Optional[Tuple[float, float]]
    phi_rounds: int
    phi_rate: Optional[float]
    ber_alice_to_bob: Optional[float]
    ber_bob_to_alice: Optional[float]
    checked_rounds: int
    mismatches: int
    mismatch_rate: Optional[float]
    eve_accuracy_j: Optional[float]
    eve_accuracy_k: Optional[float]
    payload_bits: int
    throughput: Optional[float]
    would_abort_round: Optional[int]

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, float):
                v = round(v, 12)
            elif isinstance(v, tuple):
                v = [round(x, 12) for x in v]
            out[f.name] = v
        return out


def binomial_interval(successes: int, trials: int) -> Optional[Tuple[float, float]]:
    """95% normal-approximation interval, clamped to [0, 1]; None when trials == 0."""
    if not 0 <= successes <= trials:
        raise ValueError("need 0 <= successes <= trials")
    if trials == 0:
        return None
    p = successes / trials
    half = Z95 * math.sqrt(p * (1.0 - p) / trials)
    return max(0.0, p - half), min(1.0, p + half)


def _ratio(num: int, den: int) -> Optional[float]:
    return num / den if den else None


def summarize(records: Sequence[RoundRecord]) -> SummaryStats:
    """Aggregate a transcript; used by both live runs and replay."""
    control = message = lost = detected = phi = 0
    decoded = err_ab = err_ba = 0
    checked = mism = 0
    eve_n = eve_j = eve_k = 0
    payload = 0
    abort = None
    for r in records:
        bad = False
        if r.lost:
            lost += 1
        elif r.mode is Mode.CONTROL:
            control += 1
            if Flag.DETECTED in r.flags:
                detected += 1
                bad = True
        else:
            message += 1
            tamper = Flag.TAMPER_PHI in r.flags
            if tamper:
                phi += 1
                bad = True
            else:
                decoded += 1
                err_ab += r.j_hat != r.j
                err_ba += r.k_hat != r.k
            if r.checked:
                checked += 1
                if round_mismatches(r):
                    mism += 1
                    bad = True
            elif not tamper:
                payload += 2
            if r.eve_j_guess is not None:
                eve_n += 1
                eve_j += r.eve_j_guess == r.j
                eve_k += r.eve_k_guess == r.k
        if bad and (abort is None or r.round_id < abort):
            abort = r.round_id
    n = len(records)
    return SummaryStats(
        rounds=n,
        control_rounds=control,
        message_rounds=message,
        lost_rounds=lost,
        detected_rounds=detected,
        detection_rate=_ratio(detected, control),
        detection_ci=binomial_interval(detected, control),
        phi_rounds=phi,
        phi_rate=_ratio(phi, message),
        ber_alice_to_bob=_ratio(err_ab, decoded),
        ber_bob_to_alice=_ratio(err_ba, decoded),
        checked_rounds=checked,
        mismatches=mism,
        mismatch_rate=_ratio(mism, checked),
        eve_accuracy_j=_ratio(eve_j, eve_n),
        eve_accuracy_k=_ratio(eve_k, eve_n),
        payload_bits=payload,
        throughput=_ratio(payload, n),
        would_abort_round=abort,
    )


# -- random streams ----------------------------------------------------------

def _generator(seed: int, stream: int, skip_blocks: int = 0) -> np.random.Generator:
    bitgen = np.random.Philox(key=[seed, stream])
    if skip_blocks:
        bitgen.advance(skip_blocks)
    return np.random.Generator(bitgen)


def round_uniforms(seed: int, start: int, stop: int) -> np.ndarray:
    """Uniforms for rounds ``start..stop-1``, one row of ``ROW_WIDTH`` per round."""
    gen = _generator(seed, STREAM_ROUNDS, start * ROW_WIDTH // 4)
    return gen.random((stop - start) * ROW_WIDTH).reshape(stop - start, ROW_WIDTH)


def message_bits(source: str, seed: int, stream: int, n: int) -> List[int]:
    """``n`` message bits: a fixed bitstring repeated cyclically, or seeded coin flips."""
    if source == "random":
        return _generator(seed, stream).integers(0, 2, size=n).tolist()
    bits = [int(c) for c in source]
    return [bits[i % len(bits)] for i in range(n)]


# -- simulation --------------------------------------------------------------

def _simulate(config: ExperimentConfig, start: int, stop: int, queue: Optional[Sequence[int]],
              alice: Sequence[int], bob: Sequence[int]) -> List[RoundRecord]:
    """Simulate rounds ``start..stop-1``.

    With ``queue`` given, round ``i`` sends message index ``queue[i - start]``;
    otherwise the index advances after each delivered message round and lost
    rounds re-send the same bits.
    """
    pconf = config.protocol_config()
    spec = config.adversary_spec()
    target = pconf.bob_target
    out: List[RoundRecord] = []
    q = 0
    for offset, row in enumerate(round_uniforms(config.seed, start, stop).tolist()):
        if queue is not None:
            q = queue[offset]
        rec = run_round(pconf, alice[q], bob[q], spec, Draws(*row[:ROUND_DRAWS]), start + offset)
        if rec.delivered_message:
            events = (rec.forward_event, rec.return_event)
            rec.eve_j_guess, rec.eve_k_guess = eve_guess_round(
                events, rec.bob_bell_announcement, Draws(row[8], row[9]), target
            )
            q += 1
        out.append(rec)
    return out


def plan_queue(config: ExperimentConfig) -> List[int]:
    """Message index each round will send, computed from the round uniforms alone.

    A round consumes its bits iff it is a message round that survives both
    legs; that depends only on slots 0 (forward loss), 2 (mode) and 3
    (return loss), never on the bits themselves.
    """
    c, p = config.control_prob, config.loss_p
    queue: List[int] = []
    q = 0
    for start in range(0, config.rounds, CHUNK):
        u = round_uniforms(config.seed, start, min(config.rounds, start + CHUNK))
        consumes = (u[:, 2] >= c) & (u[:, 0] >= p) & (u[:, 3] >= p)
        idx = q + np.concatenate(([0], np.cumsum(consumes)[:-1]))
        queue.extend(idx.tolist())
        q += int(consumes.sum())
    return queue


def _simulate_task(args):
    cfg_dict, start, stop, queue, alice, bob = args
    return _simulate(ExperimentConfig(**cfg_dict), start, stop, queue, alice, bob)


def run_experiment(config: ExperimentConfig, workers: int = 1) -> Tuple[SummaryStats, List[RoundRecord]]:
    """Run ``config.rounds`` rounds, apply the announce-fraction check, summarize.

    Results are a deterministic function of ``config``; ``workers`` only
    changes wall-clock time.
    """
    config.validate()
    n = config.rounds
    alice = message_bits(config.alice_message, config.seed, STREAM_ALICE, n)
    bob = message_bits(config.bob_message, config.seed, STREAM_BOB, n)
    if workers <= 1:
        records = _simulate(config, 0, n, None, alice, bob)
    else:
        queue = plan_queue(config)
        step = max(1, math.ceil(n / workers))
        tasks = []
        for a in range(0, n, step):
            b = min(n, a + step)
            lo, hi = queue[a], queue[b - 1] + 1
            local = [x - lo for x in queue[a:b]]
            tasks.append((config.to_dict(), a, b, local, alice[lo:hi], bob[lo:hi]))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = [r for chunk in pool.map(_simulate_task, tasks) for r in chunk]
        records.sort(key=lambda r: r.round_id)
    announcement_check(records, config.announce_fraction, _generator(config.seed, STREAM_CHECK))
    return summarize(records), records


def replay(records: Iterable[RoundRecord]) -> SummaryStats:
    return summarize(list(records))


# -- files -------------------------------------------------------------------

def record_line(rec: RoundRecord) -> str:
    return json.dumps(rec.to_dict(), separators=(",", ":"))


def write_transcript(path: os.PathLike, records: Iterable[RoundRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(record_line(rec))
            fh.write("\n")


_RECORD_KEYS = frozenset(RoundRecord(0, Mode.CONTROL).to_dict())
_BIT_FIELDS = ("j", "k", "alice_announcement", "bob_control_bit", "j_hat", "k_hat", "eve_j_guess", "eve_k_guess")


def parse_record(obj) -> RoundRecord:
    """Build a RoundRecord from decoded JSON, enforcing the transcript schema."""
    if not isinstance(obj, dict):
        raise ValueError("record is not an object")
    if set(obj) != _RECORD_KEYS:
        missing, extra = sorted(_RECORD_KEYS - set(obj)), sorted(set(obj) - _RECORD_KEYS)
        raise ValueError(f"bad keys (missing {missing}, unexpected {extra})")
    if isinstance(obj["round_id"], bool) or not isinstance(obj["round_id"], int) or obj["round_id"] < 0:
        raise ValueError("round_id must be a non-negative integer")
    for name in _BIT_FIELDS:
        if obj[name] not in (None, 0, 1) or isinstance(obj[name], bool):
            raise ValueError(f"{name} must be 0, 1 or null")
    if not isinstance(obj["checked"], bool) or not isinstance(obj["flags"], list):
        raise ValueError("checked must be a boolean and flags a list")
    try:
        rec = RoundRecord.from_dict(obj)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"invalid field value: {exc}") from None
    _check_consistency(rec)
    return rec


def _check_consistency(rec: RoundRecord) -> None:
    out = rec.bob_bell_announcement
    if rec.mode is Mode.CONTROL:
        if rec.k is not None or out is not None:
            raise ValueError("control round carries a k bit or Bell announcement")
        if not rec.lost and Flag.DETECTED in rec.flags and rec.alice_announcement != rec.bob_control_bit:
            raise ValueError("detected flag contradicts control bits")
        return
    if rec.j is None or rec.k is None:
        raise ValueError("message round without (j, k)")
    if rec.lost:
        if out is not None or rec.j_hat is not None or rec.k_hat is not None:
            raise ValueError("lost round carries a decode")
        return
    if out is None:
        raise ValueError("delivered message round without Bell announcement")
    if (Flag.TAMPER_PHI in rec.flags) != out.is_phi:
        raise ValueError("tamper_phi flag disagrees with the announced outcome")
    if not out.is_phi and (rec.j_hat != out.psi_parity ^ rec.k or rec.k_hat != out.psi_parity ^ rec.j):
        raise ValueError("decoded bits disagree with the announced outcome")


def read_transcript(path: os.PathLike) -> List[RoundRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                records.append(parse_record(json.loads(line)))
            except json.JSONDecodeError as exc:
                raise TranscriptError(lineno, f"not valid JSON ({exc.msg})") from None
            except ValueError as exc:
                raise TranscriptError(lineno, str(exc)) from None
    return records


def summary_document(stats: SummaryStats, config: Optional[ExperimentConfig]) -> dict:
    from . import __version__

    return {
        "schema_version": SCHEMA_VERSION,
        "tool": "qsdc-duplex",
        "tool_version": __version__,
        "config": None if config is None else config.to_dict(),
        "stats": stats.to_dict(),
    }


def write_summary(path: os.PathLike, stats: SummaryStats, config: Optional[ExperimentConfig]) -> None:
    Path(path).write_text(json.dumps(summary_document(stats, config), indent=2) + "\n", encoding="utf-8")
