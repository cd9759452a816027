import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dualrd.equilibrium import equilibrium_for_state, four_species_equilibrium, general_equilibrium
from dualrd.errors import BoundaryEquilibriumError, HypothesisError
from dualrd.reaction import ReactionNetwork, four_species_network

from oracles import bisection_equilibrium

positive = st.floats(0.05, 20.0)


def test_symmetric_masses_give_halves():
    res = four_species_equilibrium(1.0, 1.0, 1.0)
    assert np.allclose(res.values, 0.5, atol=1e-12, rtol=0)


def test_initial_data_one_zero_one_zero():
    a0 = np.array([1.0, 0.0, 1.0, 0.0])
    res = equilibrium_for_state(four_species_network(), a0)
    assert np.allclose(res.values, 0.5, atol=1e-12, rtol=0)


def test_inconsistent_masses_are_rejected():
    with pytest.raises(ValueError):
        four_species_equilibrium(1.0, 0.0, 1.0)


@given(positive, positive, positive, st.floats(0.1, 10), st.floats(0.1, 10))
def test_matches_bisection_oracle(a1, a2, a3, k, l):
    a4 = 1.0
    m12, m14, m23 = a1 + a2, a1 + a4, a2 + a3
    res = four_species_equilibrium(m12, m14, m23, k=k, l=l)
    ref = bisection_equilibrium(m12, m14, m23, k=k, l=l)
    assert np.allclose(res.values, ref, rtol=0, atol=1e-12 * max(m12, m14, m23))
    assert np.all(res.values > 0)


@given(st.lists(positive, min_size=4, max_size=4), st.floats(0.2, 5), st.floats(0.2, 5))
def test_newton_agrees_with_closed_form(vals, k, l):
    net = four_species_network(k=k, l=l)
    closed = equilibrium_for_state(net, vals)
    newton = general_equilibrium(net, vals)
    assert np.allclose(newton.values, closed.values, rtol=1e-9)


@given(st.lists(st.floats(0.05, 5.0), min_size=3, max_size=3), st.floats(0.2, 5), st.floats(0.2, 5))
def test_general_equilibrium_balance_and_laws(vals, k, l):
    net = ReactionNetwork((2, 1, 0), (0, 0, 3), k, l, (1.0, 1.0, 1.0))
    res = general_equilibrium(net, vals)
    a = res.values
    W = net.conservation_basis()
    assert np.allclose(W @ a, W @ np.asarray(vals), rtol=1e-10)
    assert l * a[0] ** 2 * a[1] == pytest.approx(k * a[2] ** 3, rel=1e-9)


def test_dimerisation():
    net = ReactionNetwork((2, 0), (0, 1), 1.0, 1.0, (1.0, 1.0))
    res = general_equilibrium(net, [1.0, 1.0])
    assert np.allclose(res.values, [1.0, 1.0])
    assert res.masses.tolist() == [3.0]


def test_boundary_and_hypothesis_errors():
    net = ReactionNetwork((1, 0, 0), (0, 1, 0), 1.0, 1.0, (1.0, 1.0, 1.0))
    with pytest.raises(BoundaryEquilibriumError):
        general_equilibrium(net, [1.0, 1.0, 0.0])
    with pytest.raises(BoundaryEquilibriumError):
        general_equilibrium(four_species_network(k=0.0, l=1.0), [1, 1, 1, 1])
    same_sign = ReactionNetwork((1, 0), (2, 1), 1.0, 1.0, (1.0, 1.0))
    with pytest.raises(HypothesisError):
        general_equilibrium(same_sign, [1.0, 1.0])
