import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from dualrd.errors import HypothesisError
from dualrd.estimates import (
    conservative_provider,
    duality_prefactor,
    four_species_spread_condition,
    holder_conjugate,
    jsonable,
    lemma33_exponents,
    lemma36_iteration,
    prop4_conditions,
    prop4_zk_sequence,
    prop5_pn_sequence,
    remark_rein_exponent,
    select_2d_exponent,
)
from dualrd.heat import RegularityConstant, analytic_Cm2
from dualrd.reaction import ReactionNetwork, four_species_network


def test_duality_anchor_values():
    rep = duality_prefactor(1.0, 3.0, 2.0, analytic_Cm2(2.0))
    assert rep.condition_lhs == 0.5
    assert rep.D == 1.0
    assert rep.prefactor == 4.0
    assert rep.certified
    assert json.loads(json.dumps(rep.to_dict()))["anchor"] == "duality.forward_lp_bound"


@given(st.floats(0.01, 100.0))
def test_equal_coefficients_give_inverse_a(a):
    # with the q = 2 bound, C = 1/m and the spread vanishes, so D = 1/a
    rep = duality_prefactor(a, a, 2.0, analytic_Cm2(a))
    assert rep.D == pytest.approx(1 / a)
    assert rep.prefactor == pytest.approx(2.0)


@given(st.floats(0.1, 10.0), st.floats(0.0, 50.0))
def test_q2_condition_always_holds(a, spread):
    # C (b - a)/2 = (b - a)/(a + b) < 1 for every a > 0
    b = a + spread
    rep = duality_prefactor(a, b, 2.0, analytic_Cm2(0.5 * (a + b)))
    assert rep.condition_holds and rep.D > 0


def test_duality_failure_and_input_checks():
    c = RegularityConstant(m=2.0, q=1.5, value=1.0, provenance="empirical")
    rep = duality_prefactor(1.0, 3.0, 1.5, c)
    assert not rep.condition_holds and rep.D is None and rep.prefactor is None
    assert "2/C" in rep.message
    plausible = duality_prefactor(1.0, 3.0, 1.5, RegularityConstant(m=2.0, q=1.5, value=0.6, provenance="empirical"))
    assert plausible.condition_holds and not plausible.certified
    with pytest.raises(ValueError):
        duality_prefactor(1.0, 3.0, 2.0, analytic_Cm2(1.0))
    with pytest.raises(ValueError):
        duality_prefactor(3.0, 1.0, 2.0, analytic_Cm2(2.0))
    with pytest.raises(ValueError):
        duality_prefactor(1.0, 3.0, 2.5, analytic_Cm2(2.0))


def test_select_2d_exponent_cases():
    choice = select_2d_exponent(1.0, 3.0, 1.0)
    assert choice.p_prime == pytest.approx(1.55)
    below = select_2d_exponent(1.0, 3.0, 0.4)
    assert below.p_prime == 1.5 and math.isinf(below.margin)
    equal = select_2d_exponent(2.0, 2.0, 5.0)
    assert equal.any_admissible and equal.p_prime == 1.5
    near = select_2d_exponent(1.0, 1.0 + 1e-9, 5.0)
    assert near.p_prime == pytest.approx(1.55) and near.margin > 1
    assert jsonable(below.to_dict())["margin"] == "inf"


@given(st.floats(0.1, 5.0), st.floats(0.01, 5.0), st.floats(0.01, 5.0))
def test_selected_exponent_satisfies_condition(a, spread, C):
    b = a + spread
    choice = select_2d_exponent(a, b, C)
    assert 1.5 <= choice.p_prime < 2
    assert choice.interpolated_lhs < 1


def test_lemma33_examples():
    seq = lemma33_exponents(3, 2.0)
    assert seq.info["p_inf"] == pytest.approx(6.0, abs=1e-12)
    assert seq.terms[0] == 2.0
    # multiplier 3/4, so 30 terms reach the fixed point to within 4 (3/4)^30
    assert abs(seq.terms[-1] - 6.0) <= 4 * 0.75**30
    assert seq.info["r"] == pytest.approx(1 - 2 / 3 + 2 / 6)
    assert seq.info["s"][0] == pytest.approx(6.0)
    edge = lemma33_exponents(3, 2.5)
    assert edge.info["multiplier"] == pytest.approx(1.0)
    assert math.isinf(edge.terminal) and edge.info["regime"] == "diverges"
    two_d = lemma33_exponents(2, 1.5)
    assert math.isinf(two_d.terminal) and two_d.info["regime"] == "arbitrarily large"
    with pytest.raises(ValueError):
        lemma33_exponents(3, 1.0)


@given(st.integers(3, 8), st.floats(1.01, 10.0))
def test_lemma33_sequence_increases(N, q):
    seq = lemma33_exponents(N, q, n_terms=10)
    # strict in exact arithmetic; floating point may land on the fixed point
    assert seq.terms[1] > seq.terms[0]
    assert all(b >= a for a, b in zip(seq.terms, seq.terms[1:]))
    if q < (N + 2) / 2:
        assert all(p < seq.info["p_inf"] * (1 + 1e-12) for p in seq.terms)


def test_lemma36_example():
    seq = lemma36_iteration(2, 2.5)
    assert seq.steps_to_target == 2
    for got, want in zip(seq.terms, (2.5, 10 / 3, 10.0)):
        assert got == pytest.approx(want, abs=1e-12)
    with pytest.raises(HypothesisError):
        lemma36_iteration(2, 2.0)


@given(st.integers(1, 5), st.floats(0.01, 0.99))
def test_lemma36_monotone_with_increasing_ratios(N, frac):
    q0 = (N + 2) / 2 + frac * (N + 2) / 2
    terms = lemma36_iteration(N, q0).terms
    assert terms[-1] >= N + 2
    assert all(b > a for a, b in zip(terms, terms[1:]))
    finite = [t for t in terms if t < N + 2]
    ratios = [b / a for a, b in zip(finite, finite[1:])]
    assert all(r2 >= r1 * (1 - 1e-12) for r1, r2 in zip(ratios, ratios[1:]))


def test_zk_example_and_entry():
    seq = prop4_zk_sequence(2, 3, 4.5)
    assert seq.steps_to_target == 1
    assert seq.terminal == pytest.approx(6.0, abs=1e-12)
    with pytest.raises(HypothesisError):
        prop4_zk_sequence(2, 3, 4.0)


def test_pn_example_and_range():
    seq = prop5_pn_sequence(2.5)
    assert seq.info["N0"] == 1
    assert seq.info["next"] == pytest.approx(10.0, abs=1e-12)
    assert seq.terms[1] == pytest.approx(10 / 3)
    for bad in (2.0, 4.0, 5.0):
        with pytest.raises(HypothesisError):
            prop5_pn_sequence(bad)


@given(st.floats(2.001, 3.999))
def test_pn_sequence_exceeds_four(p0):
    seq = prop5_pn_sequence(p0)
    assert seq.terms[-1] >= 4 and all(t < 4 for t in seq.terms[:-1])


def test_rein_exponent():
    assert remark_rein_exponent(3, 2.0) == pytest.approx(6.0)
    assert math.isinf(remark_rein_exponent(2, 2.0))
    with pytest.raises(ValueError):
        remark_rein_exponent(2, 1.0)


def test_holder_conjugate():
    assert holder_conjugate(3.0) == pytest.approx(1.5)
    assert math.isinf(holder_conjugate(math.inf))
    with pytest.raises(ValueError):
        holder_conjugate(1.0)


def test_prop4_exponents_and_status():
    net = ReactionNetwork((2, 1, 0), (0, 0, 3), 1.0, 1.0, (1.0, 1.2, 1.1))
    cond = prop4_conditions(net, conservative_provider(), 2)
    assert cond.Q == 3 and cond.Q_prime == 1.5
    assert cond.bounded_exponent == pytest.approx(4 / 3)
    # neither exponent has a certified constant without an estimate
    assert cond.weak.status == "unknown" and cond.bounded.status == "unknown"
    with_c = prop4_conditions(net, conservative_provider(C_threehalves=0.9), 2)
    assert with_c.weak.status == "certified" and with_c.weak_ok
    empirical = conservative_provider(empirical=lambda m, q: RegularityConstant(m=m, q=q, value=1 / m, provenance="empirical"))
    assert prop4_conditions(net, empirical, 2).bounded.status == "plausible"
    assert json.loads(json.dumps(with_c.to_dict()))["threshold2"] is None


def test_prop4_preconditions():
    with pytest.raises(HypothesisError):
        prop4_conditions(four_species_network(), conservative_provider(), 2)
    with pytest.raises(HypothesisError):
        prop4_conditions(ReactionNetwork((3, 0), (0, 3), 1.0, 1.0, (1.0, 0.0)), conservative_provider(), 2)


def test_zero_spread_is_certified_without_constant():
    net = ReactionNetwork((2, 1, 0), (0, 0, 3), 1.0, 1.0, (1.0, 1.0, 1.0))
    cond = prop4_conditions(net, conservative_provider(), 3)
    assert cond.weak.status == "certified" and cond.bounded.status == "certified"


@pytest.mark.parametrize("N", [1, 2])
def test_four_species_condition_uses_anchor(N):
    cond = four_species_spread_condition((1.0, 2.0, 0.5, 1.5), N, conservative_provider())
    assert cond.q == 2.0 and cond.status == "certified" and cond.holds
    assert cond.threshold == pytest.approx(2 * 1.25)
