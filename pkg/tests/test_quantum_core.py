import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracle
from conftest import three_sigma
from qsdc_duplex.quantum_core import (
    BELL_ORDER,
    BellLabel,
    Draws,
    LocalOp,
    PhiOutcomeError,
    Qubit,
    TwoQubitState,
    apply_hadamard,
    apply_local,
    basis_state,
    bell_coefficients,
    bell_probabilities,
    from_bell_coefficients,
    make_bell,
    measure_bell,
    measure_computational,
    op_of,
    product_state,
)

R = 1 / math.sqrt(2)
PLUS, MINUS = (R, R), (R, -R)

finite = st.floats(-1, 1, allow_nan=False, allow_infinity=False)


@st.composite
def states(draw):
    raw = [complex(draw(finite), draw(finite)) for _ in range(4)]
    n = math.sqrt(sum(abs(a) ** 2 for a in raw))
    if n < 1e-3:
        return make_bell(BellLabel.PSI_PLUS)
    return TwoQubitState(*(a / n for a in raw))


def approx_state(actual, expected, tol=1e-12):
    return all(abs(a - e) <= tol for a, e in zip(actual, expected))


class TestTypes:
    def test_psi_parity(self):
        assert BellLabel.PSI_PLUS.psi_parity == 0
        assert BellLabel.PSI_MINUS.psi_parity == 1

    @pytest.mark.parametrize("label", [BellLabel.PHI_PLUS, BellLabel.PHI_MINUS])
    def test_psi_parity_undefined_for_phi(self, label):
        with pytest.raises(PhiOutcomeError):
            label.psi_parity

    def test_local_op_bit_bijection(self):
        assert [op.bit for op in LocalOp] == [0, 1]
        assert op_of(0) is LocalOp.Z0 and op_of(1) is LocalOp.Z1

    def test_op_of_rejects_non_bits(self):
        with pytest.raises(ValueError):
            op_of(2)

    def test_home_is_first_factor(self):
        assert basis_state(1, 0) == (0, 0, 1, 0)
        assert Qubit.HOME < Qubit.TRAVEL


class TestMakeBell:
    def test_psi_plus(self):
        assert approx_state(make_bell(BellLabel.PSI_PLUS), (0, R, R, 0))

    def test_psi_minus(self):
        assert approx_state(make_bell(BellLabel.PSI_MINUS), (0, R, -R, 0))

    def test_phi_plus(self):
        assert approx_state(make_bell(BellLabel.PHI_PLUS), (R, 0, 0, R))

    @pytest.mark.parametrize("label", list(BellLabel))
    def test_real_and_normalized(self, label):
        s = make_bell(label)
        assert all(a.imag == 0 for a in s)
        assert s.norm_squared() == pytest.approx(1, abs=1e-12)


class TestApplyLocal:
    def test_z_on_travel_maps_psi_plus_to_psi_minus(self):
        out = apply_local(make_bell(BellLabel.PSI_PLUS), LocalOp.Z1, Qubit.TRAVEL)
        assert out.equals(make_bell(BellLabel.PSI_MINUS))
        # exactly -Psi-, which differs only by a global phase
        assert approx_state(out, tuple(-a for a in make_bell(BellLabel.PSI_MINUS)))

    def test_z_on_home_maps_psi_plus_to_psi_minus(self):
        out = apply_local(make_bell(BellLabel.PSI_PLUS), LocalOp.Z1, Qubit.HOME)
        assert approx_state(out, (0, R, -R, 0))

    @given(states())
    def test_identity_returns_input_exactly(self, s):
        assert apply_local(s, LocalOp.Z0, Qubit.TRAVEL) == s
        assert apply_local(s, LocalOp.Z0, Qubit.HOME) == s

    @given(states(), st.sampled_from(list(Qubit)))
    def test_involution(self, s, target):
        twice = apply_local(apply_local(s, LocalOp.Z1, target), LocalOp.Z1, target)
        assert twice.equals(s)

    @given(states(), st.sampled_from(list(LocalOp)), st.sampled_from(list(LocalOp)))
    def test_home_and_travel_commute(self, s, a, b):
        ht = apply_local(apply_local(s, a, Qubit.HOME), b, Qubit.TRAVEL)
        th = apply_local(apply_local(s, b, Qubit.TRAVEL), a, Qubit.HOME)
        assert ht.equals(th)

    @given(states(), st.sampled_from(list(LocalOp)), st.sampled_from(list(Qubit)))
    def test_matches_matrix_oracle(self, s, op, target):
        want = oracle.on(oracle.zpow(op.bit), target.name.lower()) @ np.array(s)
        assert np.allclose(apply_local(s, op, target), want, atol=1e-12)

    @given(states(), st.sampled_from(list(Qubit)))
    def test_hadamard_matches_matrix_oracle(self, s, target):
        want = oracle.on(oracle.H, target.name.lower()) @ np.array(s)
        assert np.allclose(apply_hadamard(s, target), want, atol=1e-12)


class TestEquals:
    def test_global_phase_ignored(self):
        s = make_bell(BellLabel.PSI_PLUS)
        phase = complex(math.cos(0.7), math.sin(0.7))
        assert s.equals(TwoQubitState(*(phase * a for a in s)))

    def test_distinct_bell_states_differ(self):
        assert not make_bell(BellLabel.PSI_PLUS).equals(make_bell(BellLabel.PSI_MINUS))


class TestMeasureComputational:
    def test_psi_plus_travel_branches(self):
        s = make_bell(BellLabel.PSI_PLUS)
        bit, post = measure_computational(s, Qubit.TRAVEL, Draws(0.25))
        assert bit == 0 and approx_state(post, basis_state(1, 0))
        bit, post = measure_computational(s, Qubit.TRAVEL, Draws(0.75))
        assert bit == 1 and approx_state(post, basis_state(0, 1))

    @pytest.mark.parametrize("u", [0.0, 0.3, 0.999999])
    def test_product_state_is_deterministic(self, u):
        bit, post = measure_computational(basis_state(0, 1), Qubit.TRAVEL, Draws(u))
        assert bit == 1 and post == basis_state(0, 1)

    def test_plus_minus_on_home(self):
        s = product_state(PLUS, MINUS)
        assert approx_state(s, (0.5, -0.5, 0.5, -0.5))
        bit, post = measure_computational(s, Qubit.HOME, Draws(0.1))
        assert bit == 0 and approx_state(post, product_state((1, 0), MINUS))
        bit, post = measure_computational(s, Qubit.HOME, Draws(0.9))
        assert bit == 1 and approx_state(post, product_state((0, 1), MINUS))

    @given(states(), st.sampled_from(list(Qubit)), st.floats(0, 1, exclude_max=True))
    def test_repeat_measurement_agrees(self, s, target, u):
        bit, post = measure_computational(s, target, Draws(u))
        assert post.norm_squared() == pytest.approx(1, abs=1e-12)
        for v in (0.0, 0.5, 0.9999999):
            again, post2 = measure_computational(post, target, Draws(v))
            assert again == bit and post2.equals(post)

    def test_never_picks_zero_weight_branch(self):
        # u very close to 1 with p0 == 1 must still give bit 0
        bit, _ = measure_computational(basis_state(0, 0), Qubit.TRAVEL, Draws(1 - 1e-17))
        assert bit == 0

    def test_statistics(self, rng):
        n = 100_000
        s = make_bell(BellLabel.PSI_PLUS)
        zeros = sum(measure_computational(s, Qubit.TRAVEL, rng)[0] == 0 for _ in range(n))
        assert abs(zeros / n - 0.5) <= three_sigma(n)


class TestBellCoefficients:
    def test_psi_minus(self):
        assert approx_state(bell_coefficients(make_bell(BellLabel.PSI_MINUS)), (0, 0, 0, 1))

    def test_phi_plus(self):
        assert approx_state(bell_coefficients(TwoQubitState(R, 0, 0, R)), (1, 0, 0, 0))

    def test_plus_minus(self):
        # |+->  =  (|Phi-> - |Psi->)/sqrt2
        assert approx_state(bell_coefficients(product_state(PLUS, MINUS)), (0, R, 0, -R))

    @given(states())
    def test_round_trip(self, s):
        assert approx_state(from_bell_coefficients(bell_coefficients(s)), s)

    @given(states())
    def test_squared_moduli_sum_to_one(self, s):
        assert sum(abs(c) ** 2 for c in bell_coefficients(s)) == pytest.approx(1, abs=1e-12)

    @given(states())
    def test_matches_oracle_projection(self, s):
        dist = oracle.bell_distribution(np.array(s))
        probs = bell_probabilities(s)
        for label in BellLabel:
            assert probs[label] == pytest.approx(dist[label.value], abs=1e-12)


def _sampled_distribution(state, grid=20_000):
    counts = dict.fromkeys(BellLabel, 0)
    for i in range(grid):
        counts[measure_bell(state, Draws((i + 0.5) / grid))[0]] += 1
    return {k: v / grid for k, v in counts.items()}


class TestMeasureBell:
    def test_psi_plus_certain(self):
        for u in (0.0, 0.5, 0.99999):
            assert measure_bell(make_bell(BellLabel.PSI_PLUS), Draws(u))[0] is BellLabel.PSI_PLUS

    def test_psi_minus_certain(self):
        out, post = measure_bell(make_bell(BellLabel.PSI_MINUS), Draws(0.3))
        assert out is BellLabel.PSI_MINUS and post.equals(make_bell(BellLabel.PSI_MINUS))

    def test_plus_minus_splits(self):
        dist = _sampled_distribution(product_state(PLUS, MINUS))
        assert dist[BellLabel.PHI_MINUS] == pytest.approx(0.5, abs=1e-3)
        assert dist[BellLabel.PSI_MINUS] == pytest.approx(0.5, abs=1e-3)
        assert dist[BellLabel.PHI_PLUS] == dist[BellLabel.PSI_PLUS] == 0

    @given(states())
    @settings(max_examples=20, deadline=None)
    def test_inverse_cdf_matches_born_rule(self, s):
        probs = bell_probabilities(s)
        dist = _sampled_distribution(s, grid=4000)
        for label in BellLabel:
            assert dist[label] == pytest.approx(probs[label], abs=2e-3)


class TestNorm:
    @given(st.lists(st.tuples(st.sampled_from(["z_home", "z_travel", "m_home", "m_travel", "bell"]),
                              st.floats(0, 1, exclude_max=True)), max_size=12),
           st.sampled_from(list(BellLabel)))
    def test_norm_preserved_through_any_sequence(self, steps, start):
        s = make_bell(start)
        for kind, u in steps:
            if kind == "z_home":
                s = apply_local(s, LocalOp.Z1, Qubit.HOME)
            elif kind == "z_travel":
                s = apply_local(s, LocalOp.Z1, Qubit.TRAVEL)
            elif kind == "m_home":
                s = measure_computational(s, Qubit.HOME, Draws(u))[1]
            elif kind == "m_travel":
                s = measure_computational(s, Qubit.TRAVEL, Draws(u))[1]
            else:
                s = measure_bell(s, Draws(u))[1]
            assert abs(s.norm_squared() - 1) <= 1e-12


@pytest.mark.parametrize(
    "initial, j, k, target",
    list(itertools.product([BellLabel.PSI_PLUS, BellLabel.PSI_MINUS], (0, 1), (0, 1), list(Qubit))),
)
def test_brute_force_oracle_equivalence(initial, j, k, target):
    s = apply_local(make_bell(initial), op_of(j), Qubit.TRAVEL)
    s = apply_local(s, op_of(k), target)
    want = oracle.honest_outcome_distribution(initial.value, j, k, target.name.lower())
    got = bell_probabilities(s)
    for label in BELL_ORDER:
        assert got[label] == pytest.approx(want[label.value], abs=1e-12)
    sampled = _sampled_distribution(s, grid=1000)
    for label in BELL_ORDER:
        assert sampled[label] == want[label.value] or abs(sampled[label] - want[label.value]) < 1e-12
