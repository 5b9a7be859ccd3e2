"""Honest Alice/Bob behaviour for the two-way ping-pong dialogue.

A message round runs: Bob prepares Psi+, the travel qubit goes to Alice,
Alice applies Z^j and sends it back, Bob applies Z^k and measures the pair
in the Bell basis, then announces the outcome.  Each side recovers the
other's bit as ``psi_parity(outcome) XOR own_bit``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

from .adversary import AdversarySpec, ChannelEvent, Delivery, Leg, transmit
from .quantum_core import (
    BellLabel,
    Draws,
    PhiOutcomeError,
    Qubit,
    RandomStream,
    TwoQubitState,
    apply_local,
    make_bell,
    measure_bell,
    measure_computational,
    op_of,
)

# Draws consumed by one call of run_round, whatever path the round takes.
ROUND_DRAWS = 8


class Mode(str, enum.Enum):
    CONTROL = "control"
    MESSAGE = "message"


class Flag(str, enum.Enum):
    DETECTED = "detected"
    TAMPER_PHI = "tamper_phi"
    LOST = "lost"


@dataclass(frozen=True)
class ProtocolConfig:
    control_prob: float = 0.5
    bob_target: Qubit = Qubit.TRAVEL

    def __post_init__(self):
        if not 0.0 <= self.control_prob <= 1.0:
            raise ValueError(f"control probability must lie in [0, 1], got {self.control_prob}")


@dataclass
class RoundRecord:
    round_id: int
    mode: Mode
    j: Optional[int] = None
    k: Optional[int] = None
    forward_event: Optional[ChannelEvent] = None
    return_event: Optional[ChannelEvent] = None
    alice_announcement: Optional[int] = None
    bob_control_bit: Optional[int] = None
    bob_bell_announcement: Optional[BellLabel] = None
    j_hat: Optional[int] = None
    k_hat: Optional[int] = None
    flags: frozenset = field(default_factory=frozenset)
    checked: bool = False
    eve_j_guess: Optional[int] = None
    eve_k_guess: Optional[int] = None

    @property
    def lost(self) -> bool:
        return Flag.LOST in self.flags

    @property
    def delivered_message(self) -> bool:
        return self.mode is Mode.MESSAGE and not self.lost

    def to_dict(self) -> dict:
        return {
            "round_id": self.round_id,
            "mode": self.mode.value,
            "j": self.j,
            "k": self.k,
            "forward_event": None if self.forward_event is None else self.forward_event.to_dict(),
            "return_event": None if self.return_event is None else self.return_event.to_dict(),
            "alice_announcement": self.alice_announcement,
            "bob_control_bit": self.bob_control_bit,
            "bob_bell_announcement": None if self.bob_bell_announcement is None else self.bob_bell_announcement.value,
            "j_hat": self.j_hat,
            "k_hat": self.k_hat,
            "flags": sorted(f.value for f in self.flags),
            "checked": self.checked,
            "eve_j_guess": self.eve_j_guess,
            "eve_k_guess": self.eve_k_guess,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RoundRecord":
        fe, re_, bell = d["forward_event"], d["return_event"], d["bob_bell_announcement"]
        return cls(
            round_id=d["round_id"],
            mode=Mode(d["mode"]),
            j=d["j"],
            k=d["k"],
            forward_event=None if fe is None else ChannelEvent.from_dict(fe),
            return_event=None if re_ is None else ChannelEvent.from_dict(re_),
            alice_announcement=d["alice_announcement"],
            bob_control_bit=d["bob_control_bit"],
            bob_bell_announcement=None if bell is None else BellLabel(bell),
            j_hat=d["j_hat"],
            k_hat=d["k_hat"],
            flags=frozenset(Flag(f) for f in d["flags"]),
            checked=d["checked"],
            eve_j_guess=d["eve_j_guess"],
            eve_k_guess=d["eve_k_guess"],
        )


@dataclass(frozen=True)
class AnnouncementCheckReport:
    checked_rounds: int
    mismatches: int

    @property
    def mismatch_rate(self) -> Optional[float]:
        if self.checked_rounds == 0:
            return None
        return self.mismatches / self.checked_rounds


def bob_prepare() -> TwoQubitState:
    return make_bell(BellLabel.PSI_PLUS)


def alice_choose_mode(c: float, rng: RandomStream) -> Mode:
    return Mode.CONTROL if rng.random() < c else Mode.MESSAGE


def control_round(state: TwoQubitState, rng: RandomStream) -> Tuple[int, int, bool]:
    """Alice measures the travel qubit and announces; Bob measures home and compares.

    Both measure in the computational basis.  Identical bits mean tampering.
    """
    alice_bit, state = measure_computational(state, Qubit.TRAVEL, rng)
    bob_bit, _ = measure_computational(state, Qubit.HOME, rng)
    return alice_bit, bob_bit, alice_bit == bob_bit


def alice_encode(state: TwoQubitState, j: int) -> TwoQubitState:
    return apply_local(state, op_of(j), Qubit.TRAVEL)


def bob_encode_and_measure(
    state: TwoQubitState, k: int, rng: RandomStream, target: Qubit = Qubit.TRAVEL
) -> BellLabel:
    outcome, _ = measure_bell(apply_local(state, op_of(k), target), rng)
    return outcome


def decode_peer_bit(outcome: BellLabel, own_bit: int) -> int:
    """Recover the other party's bit from the public Bell outcome.

    Serves both directions.  Raises PhiOutcomeError for Phi outcomes, which
    an honest run never produces.
    """
    return outcome.psi_parity ^ own_bit


def expected_outcome(j: int, k: int) -> BellLabel:
    """Honest-run outcome: Psi+ when j == k, Psi- otherwise."""
    return BellLabel.PSI_MINUS if j ^ k else BellLabel.PSI_PLUS


def run_round(
    config: ProtocolConfig,
    j: int,
    k: int,
    adversary: AdversarySpec,
    rng: RandomStream,
    round_id: int = 0,
) -> RoundRecord:
    """Play one round end to end.

    Exactly ``ROUND_DRAWS`` uniforms are read from ``rng`` up front, in the
    order: forward loss, forward intercept, mode, return loss, return
    intercept, Alice control, Bob control, Bell measurement.  Fixed slots
    keep a round's randomness independent of the path it takes.

    ``j`` and ``k`` are recorded only for message rounds; a lost message
    round keeps them so the caller can re-queue.
    """
    u = rng.take(ROUND_DRAWS) if isinstance(rng, Draws) else [rng.random() for _ in range(ROUND_DRAWS)]
    state = bob_prepare()
    mode = alice_choose_mode(config.control_prob, Draws(u[2]))
    state, fwd = transmit(state, Leg.FORWARD, adversary, Draws(u[0], u[1]))
    rec = RoundRecord(round_id, mode, forward_event=fwd)
    if mode is Mode.MESSAGE:
        rec.j, rec.k = j, k
    if state is None:
        rec.flags = frozenset({Flag.LOST})
        return rec

    if mode is Mode.CONTROL:
        a_bit, b_bit, detected = control_round(state, Draws(u[5], u[6]))
        rec.alice_announcement, rec.bob_control_bit = a_bit, b_bit
        if detected:
            rec.flags = frozenset({Flag.DETECTED})
        return rec

    state = alice_encode(state, j)
    state, ret = transmit(state, Leg.RETURN, adversary, Draws(u[3], u[4]))
    rec.return_event = ret
    if state is None:
        rec.flags = frozenset({Flag.LOST})
        return rec
    outcome = bob_encode_and_measure(state, k, Draws(u[7]), config.bob_target)
    rec.bob_bell_announcement = outcome
    try:
        rec.j_hat = decode_peer_bit(outcome, k)
        rec.k_hat = decode_peer_bit(outcome, j)
    except PhiOutcomeError:
        rec.flags = frozenset({Flag.TAMPER_PHI})
    return rec



def round_mismatches(rec: RoundRecord) -> bool:
    """True when the announced outcome disagrees with the revealed (j, k)."""
    out = rec.bob_bell_announcement
    return out is None or out.is_phi or out.psi_parity != (rec.j ^ rec.k)


def announcement_check(
    records: Sequence[RoundRecord], f: float, rng: RandomStream
) -> AnnouncementCheckReport:
    """Reveal both parties' operations on a random ``ceil(f * n)`` subset.

    Only delivered message rounds are eligible.  Sampled records are marked
    ``checked`` in place; their bits are public from then on and leave the
    payload.
    """
    if not 0.0 <= f <= 1.0:
        raise ValueError(f"announce fraction must lie in [0, 1], got {f}")
    eligible: List[RoundRecord] = [r for r in records if r.delivered_message]
    n = len(eligible)
    m = min(n, math.ceil(f * n - 1e-9))
    # partial Fisher-Yates driven by rng.random()
    order = list(range(n))
    for i in range(m):
        r = i + min(int(rng.random() * (n - i)), n - i - 1)
        order[i], order[r] = order[r], order[i]
    mismatches = 0
    for idx in order[:m]:
        rec = eligible[idx]
        rec.checked = True
        mismatches += round_mismatches(rec)
    return AnnouncementCheckReport(m, mismatches)
