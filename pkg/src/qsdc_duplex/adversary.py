"""Quantum channel with per-leg loss and intercept-measure-resend hooks."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from typing import FrozenSet, Iterable, List, Optional, Sequence, Tuple

from .quantum_core import (
    TOL,
    BellLabel,
    BELL_ORDER,
    Draws,
    Qubit,
    RandomStream,
    TwoQubitState,
    apply_hadamard,
    apply_local,
    bell_coefficients,
    make_bell,
    measure_computational,
    op_of,
    project_computational,
)


class Leg(str, enum.Enum):
    FORWARD = "forward"  # Bob -> Alice
    RETURN = "return"  # Alice -> Bob


class Basis(str, enum.Enum):
    Z = "z"
    X = "x"


class Strategy(str, enum.Enum):
    HONEST = "none"
    LOSS_ONLY = "loss"
    INTERCEPT = "intercept"


class Delivery(str, enum.Enum):
    DELIVERED = "delivered"
    LOST = "lost"
    INTERCEPTED = "intercepted"


_LEG_WORDS = {
    "forward": frozenset({Leg.FORWARD}),
    "return": frozenset({Leg.RETURN}),
    "both": frozenset({Leg.FORWARD, Leg.RETURN}),
}


@dataclass(frozen=True)
class AdversarySpec:
    strategy: Strategy = Strategy.HONEST
    basis: Basis = Basis.Z
    legs: FrozenSet[Leg] = frozenset()
    loss_p: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.loss_p <= 1.0:
            raise ValueError(f"loss probability must lie in [0, 1], got {self.loss_p}")

    def intercepts(self, leg: Leg) -> bool:
        return self.strategy is Strategy.INTERCEPT and leg in self.legs

    @property
    def name(self) -> str:
        if self.strategy is not Strategy.INTERCEPT:
            return self.strategy.value
        if not self.legs:
            return "none"
        legs = "both" if len(self.legs) == 2 else next(iter(self.legs)).value
        return f"intercept-{self.basis.value}:{legs}"

    @classmethod
    def parse(cls, text: str, loss_p: float = 0.0) -> "AdversarySpec":
        """Parse the ``strategy[-basis][:legs]`` spelling, e.g. ``intercept-x:both``.

        ``intercept`` without a basis means Z; without legs means forward.
        """
        raw = text.strip().lower()
        head, _, legs_word = raw.partition(":")
        strategy_word, _, basis_word = head.partition("-")
        if strategy_word in ("none", "honest"):
            if basis_word or legs_word:
                raise ValueError(f"unknown adversary {text!r}")
            return cls(Strategy.HONEST, loss_p=loss_p)
        if strategy_word == "loss":
            if basis_word or legs_word:
                raise ValueError(f"unknown adversary {text!r}")
            return cls(Strategy.LOSS_ONLY, loss_p=loss_p)
        if strategy_word != "intercept":
            raise ValueError(f"unknown adversary {text!r}")
        try:
            basis = Basis(basis_word or "z")
        except ValueError:
            raise ValueError(f"unknown basis {basis_word!r} in adversary {text!r}") from None
        if legs_word and legs_word not in _LEG_WORDS:
            raise ValueError(f"unknown legs {legs_word!r} in adversary {text!r}")
        return cls(Strategy.INTERCEPT, basis, _LEG_WORDS[legs_word or "forward"], loss_p)


@dataclass(frozen=True)
class ChannelEvent:
    leg: Leg
    outcome: Delivery
    eve_bit: Optional[int] = None
    basis: Optional[Basis] = None

    def to_dict(self) -> dict:
        return {
            "leg": self.leg.value,
            "outcome": self.outcome.value,
            "eve_bit": self.eve_bit,
            "basis": None if self.basis is None else self.basis.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelEvent":
        basis = d.get("basis")
        ev = cls(Leg(d["leg"]), Delivery(d["outcome"]), d.get("eve_bit"), None if basis is None else Basis(basis))
        if (ev.outcome is Delivery.INTERCEPTED) != (ev.eve_bit in (0, 1)):
            raise ValueError("intercepted events carry exactly one eve bit")
        return ev


def x_basis_measure(state: TwoQubitState, target: Qubit, rng: RandomStream) -> Tuple[int, TwoQubitState]:
    """Measure ``target`` in the |+>/|-> basis; bit 0 is |+>."""
    bit, post = measure_computational(apply_hadamard(state, target), target, rng)
    return bit, apply_hadamard(post, target)


def transmit(
    state: TwoQubitState, leg: Leg, spec: AdversarySpec, rng: RandomStream
) -> Tuple[Optional[TwoQubitState], ChannelEvent]:
    """Send the travel qubit over one leg.

    Loss is drawn first, then interception.  Returns ``None`` for the state
    when the photon is lost.  Always consumes exactly two draws from ``rng``
    so the stream layout does not depend on the strategy.
    """
    u_loss = rng.random()
    u_eve = rng.random()
    if u_loss < spec.loss_p:
        return None, ChannelEvent(leg, Delivery.LOST)
    if not spec.intercepts(leg):
        return state, ChannelEvent(leg, Delivery.DELIVERED)
    draw = Draws(u_eve)
    if spec.basis is Basis.Z:
        bit, post = measure_computational(state, Qubit.TRAVEL, draw)
    else:
        bit, post = x_basis_measure(state, Qubit.TRAVEL, draw)
    return post, ChannelEvent(leg, Delivery.INTERCEPTED, bit, spec.basis)


# -- Eve's inference ---------------------------------------------------------

def _project(state: TwoQubitState, bit: int, basis: Basis) -> TwoQubitState:
    if basis is Basis.Z:
        return project_computational(state, Qubit.TRAVEL, bit)
    return apply_hadamard(project_computational(apply_hadamard(state, Qubit.TRAVEL), Qubit.TRAVEL, bit), Qubit.TRAVEL)


@lru_cache(maxsize=None)
def joint_likelihood(
    forward: Optional[Tuple[Basis, int]],
    returned: Optional[Tuple[Basis, int]],
    outcome: BellLabel,
    bob_target: Qubit,
    j: int,
    k: int,
) -> float:
    """P(Eve's records, announced outcome | j, k), by exact unnormalized projection."""
    s = make_bell(BellLabel.PSI_PLUS)
    if forward is not None:
        s = _project(s, forward[1], forward[0])
    s = apply_local(s, op_of(j), Qubit.TRAVEL)
    if returned is not None:
        s = _project(s, returned[1], returned[0])
    s = apply_local(s, op_of(k), bob_target)
    return abs(bell_coefficients(s)[BELL_ORDER.index(outcome)]) ** 2


def _observation(event: Optional[ChannelEvent]) -> Optional[Tuple[Basis, int]]:
    if event is None or event.outcome is not Delivery.INTERCEPTED:
        return None
    return event.basis, event.eve_bit


def _ml_bit(w0: float, w1: float, rng: RandomStream) -> int:
    u = rng.random()
    if abs(w0 - w1) <= TOL * max(1.0, w0 + w1):
        return 0 if u < 0.5 else 1
    return 0 if w0 > w1 else 1


@lru_cache(maxsize=None)
def _marginals(forward, returned, outcome: BellLabel, bob_target: Qubit) -> Tuple[float, float, float, float]:
    lik = {(j, k): joint_likelihood(forward, returned, outcome, bob_target, j, k) for j in (0, 1) for k in (0, 1)}
    return (
        lik[0, 0] + lik[0, 1],
        lik[1, 0] + lik[1, 1],
        lik[0, 0] + lik[1, 0],
        lik[0, 1] + lik[1, 1],
    )


def eve_guess_round(
    events: Sequence[Optional[ChannelEvent]],
    outcome: BellLabel,
    rng: RandomStream,
    bob_target: Qubit = Qubit.TRAVEL,
) -> Tuple[int, int]:
    """Maximum-likelihood guesses of (j, k) under a uniform prior.

    ``events`` is (forward, return).  Ties are broken with a fair coin;
    exactly two draws are taken from ``rng`` (j first, then k).
    """
    fwd, ret = events
    j0, j1, k0, k1 = _marginals(_observation(fwd), _observation(ret), outcome, bob_target)
    return _ml_bit(j0, j1, rng), _ml_bit(k0, k1, rng)


def eve_guess(
    events: Iterable[Sequence[Optional[ChannelEvent]]],
    announcements: Iterable[BellLabel],
    rng: RandomStream,
    bob_target: Qubit = Qubit.TRAVEL,
) -> List[Tuple[int, int]]:
    """Per-round ML guesses for a sequence of completed message rounds."""
    return [eve_guess_round(ev, out, rng, bob_target) for ev, out in zip(events, announcements)]
