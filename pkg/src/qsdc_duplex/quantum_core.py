"""Exact statevector algebra for a single EPR pair.

Amplitudes are ordered over ``|home, travel>``: ``(a00, a01, a10, a11)``,
so the home qubit is the first tensor factor.  Everything here is plain
Python complex arithmetic; a 4-vector is too small for numpy to pay off
inside the per-round loop.
"""
from __future__ import annotations

import enum
import math
from typing import NamedTuple, Protocol, Tuple

TOL = 1e-12
_R = 1.0 / math.sqrt(2.0)


class RandomStream(Protocol):
    """Anything with ``random() -> float`` in [0, 1): numpy Generator, random.Random, ..."""

    def random(self) -> float: ...


class Draws:
    """RandomStream replaying a fixed sequence of uniforms, in order."""

    __slots__ = ("values", "pos")

    def __init__(self, *values: float):
        self.values = values
        self.pos = 0

    def random(self) -> float:
        v = self.values[self.pos]
        self.pos += 1
        return v

    def take(self, n: int):
        v = self.values[self.pos:self.pos + n]
        self.pos += n
        return v


class PhiOutcomeError(ValueError):
    """Raised when a Psi-parity is requested for a Phi outcome."""


class Qubit(enum.IntEnum):
    HOME = 0
    TRAVEL = 1


class LocalOp(enum.IntEnum):
    """Encoding alphabet: Z^0 (identity) and Z^1 (phase flip)."""

    Z0 = 0
    Z1 = 1

    @property
    def bit(self) -> int:
        return int(self)


_OPS = {0: LocalOp.Z0, 1: LocalOp.Z1}


def op_of(bit: int) -> LocalOp:
    try:
        return _OPS[bit]
    except KeyError:
        raise ValueError(f"bit must be 0 or 1, got {bit!r}") from None


class BellLabel(str, enum.Enum):
    PHI_PLUS = "phi+"
    PHI_MINUS = "phi-"
    PSI_PLUS = "psi+"
    PSI_MINUS = "psi-"

    @property
    def is_phi(self) -> bool:
        return self in (BellLabel.PHI_PLUS, BellLabel.PHI_MINUS)

    @property
    def psi_parity(self) -> int:
        if self is BellLabel.PSI_PLUS:
            return 0
        if self is BellLabel.PSI_MINUS:
            return 1
        raise PhiOutcomeError(f"{self.value} has no psi parity")


# Index order used by bell_coefficients.
BELL_ORDER = (BellLabel.PHI_PLUS, BellLabel.PHI_MINUS, BellLabel.PSI_PLUS, BellLabel.PSI_MINUS)


class TwoQubitState(NamedTuple):
    a00: complex
    a01: complex
    a10: complex
    a11: complex

    def norm_squared(self) -> float:
        return sum(abs(a) ** 2 for a in self)

    def equals(self, other: "TwoQubitState", tol: float = TOL) -> bool:
        """Equality up to a global phase of unit modulus."""
        overlap = sum(a.conjugate() * b for a, b in zip(self, other))
        n1, n2 = self.norm_squared(), other.norm_squared()
        # |<s|o>|^2 == <s|s><o|o> iff the vectors are parallel
        return abs(n1 - n2) <= tol and abs(abs(overlap) ** 2 - n1 * n2) <= tol


def basis_state(home: int, travel: int) -> TwoQubitState:
    amps = [0j, 0j, 0j, 0j]
    amps[2 * home + travel] = 1 + 0j
    return TwoQubitState(*amps)


def product_state(home: Tuple[complex, complex], travel: Tuple[complex, complex]) -> TwoQubitState:
    h0, h1 = home
    t0, t1 = travel
    return TwoQubitState(complex(h0 * t0), complex(h0 * t1), complex(h1 * t0), complex(h1 * t1))


_BELL_STATES = {
    BellLabel.PHI_PLUS: TwoQubitState(_R + 0j, 0j, 0j, _R + 0j),
    BellLabel.PHI_MINUS: TwoQubitState(_R + 0j, 0j, 0j, -_R + 0j),
    BellLabel.PSI_PLUS: TwoQubitState(0j, _R + 0j, _R + 0j, 0j),
    BellLabel.PSI_MINUS: TwoQubitState(0j, _R + 0j, -_R + 0j, 0j),
}


def make_bell(label: BellLabel) -> TwoQubitState:
    return _BELL_STATES[label]


def apply_local(state: TwoQubitState, op: LocalOp, target: Qubit) -> TwoQubitState:
    """Apply ``Z^bit`` to one qubit of the pair."""
    if op is LocalOp.Z0:
        return state
    a00, a01, a10, a11 = state
    if target is Qubit.TRAVEL:
        return TwoQubitState(a00, -a01, a10, -a11)
    return TwoQubitState(a00, a01, -a10, -a11)


def apply_hadamard(state: TwoQubitState, target: Qubit) -> TwoQubitState:
    a00, a01, a10, a11 = state
    if target is Qubit.TRAVEL:
        return TwoQubitState(_R * (a00 + a01), _R * (a00 - a01), _R * (a10 + a11), _R * (a10 - a11))
    return TwoQubitState(_R * (a00 + a10), _R * (a01 + a11), _R * (a00 - a10), _R * (a01 - a11))


def project_computational(state: TwoQubitState, target: Qubit, bit: int) -> TwoQubitState:
    """Unnormalized projection of ``target`` onto ``|bit>``.

    The squared norm of the result is the Born probability of ``bit``.
    """
    a00, a01, a10, a11 = state
    if target is Qubit.TRAVEL:
        if bit == 0:
            return TwoQubitState(a00, 0j, a10, 0j)
        return TwoQubitState(0j, a01, 0j, a11)
    if bit == 0:
        return TwoQubitState(a00, a01, 0j, 0j)
    return TwoQubitState(0j, 0j, a10, a11)


def _normalized(state: TwoQubitState, norm_sq: float) -> TwoQubitState:
    s = 1.0 / math.sqrt(norm_sq)
    return TwoQubitState(state[0] * s, state[1] * s, state[2] * s, state[3] * s)


def measure_computational(
    state: TwoQubitState, target: Qubit, rng: RandomStream
) -> Tuple[int, TwoQubitState]:
    """Projective Z-basis measurement of one qubit; returns (bit, collapsed state)."""
    zero = project_computational(state, target, 0)
    p0 = zero.norm_squared()
    bit = 0 if rng.random() < p0 else 1
    # never land on a branch with vanishing weight
    if bit == 0 and p0 < TOL:
        bit = 1
    elif bit == 1 and 1.0 - p0 < TOL:
        bit = 0
    if bit == 0:
        return 0, _normalized(zero, p0)
    one = project_computational(state, target, 1)
    return 1, _normalized(one, one.norm_squared())


def bell_coefficients(state: TwoQubitState) -> Tuple[complex, complex, complex, complex]:
    """Coefficients in the Bell basis, ordered as ``BELL_ORDER`` (Phi+, Phi-, Psi+, Psi-)."""
    a00, a01, a10, a11 = state
    return (
        _R * (a00 + a11),
        _R * (a00 - a11),
        _R * (a01 + a10),
        _R * (a01 - a10),
    )


def from_bell_coefficients(coeffs) -> TwoQubitState:
    """Inverse of :func:`bell_coefficients`."""
    cpp, cpm, csp, csm = coeffs
    return TwoQubitState(_R * (cpp + cpm), _R * (csp + csm), _R * (csp - csm), _R * (cpp - cpm))


def bell_probabilities(state: TwoQubitState) -> dict:
    return {label: abs(c) ** 2 for label, c in zip(BELL_ORDER, bell_coefficients(state))}


def measure_bell(state: TwoQubitState, rng: RandomStream) -> Tuple[BellLabel, TwoQubitState]:
    a00, a01, a10, a11 = state
    probs = (
        0.5 * abs(a00 + a11) ** 2,
        0.5 * abs(a00 - a11) ** 2,
        0.5 * abs(a01 + a10) ** 2,
        0.5 * abs(a01 - a10) ** 2,
    )
    total = sum(p for p in probs if p >= TOL)
    u = rng.random() * total
    acc = 0.0
    chosen = -1
    for i, p in enumerate(probs):
        if p < TOL:
            continue
        chosen = i
        acc += p
        if u < acc:
            break
    label = BELL_ORDER[chosen]
    return label, _BELL_STATES[label]
