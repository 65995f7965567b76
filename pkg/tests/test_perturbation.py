import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from perturbed_td import ValidationError
from perturbed_td.exact import norm_condition_check, value_iteration
from perturbed_td.mdp import Mdp, infinity_norm_diff, transition_under_policy, validate_stochastic
from perturbed_td.perturbation import (PerturbationSpec, deviation_report, mixture_policy,
                                       perturb_transition)
from perturbed_td.resource import ResourceSpec, build_mdp

from oracles import random_stochastic

seeds = st.integers(0, 2**32 - 1)


def test_fixed_point_when_q_equals_p():
    rng = np.random.default_rng(0)
    P = random_stochastic(rng, 4)
    spec = PerturbationSpec(rng.uniform(0.1, 0.9, 4), P)
    assert np.abs(perturb_transition(P, spec).toarray() - P).max() <= 1e-15


def test_weight_limit():
    rng = np.random.default_rng(1)
    P, Q = random_stochastic(rng, 4), random_stochastic(rng, 4)
    Pb = perturb_transition(P, PerturbationSpec.uniform(1 - 1e-9, Q))
    assert np.abs(Pb.toarray() - P).max() <= 1e-8


def test_two_state_arithmetic():
    Pb = perturb_transition(np.eye(2), PerturbationSpec.uniform(0.9, np.eye(2)[::-1]))
    assert np.allclose(Pb.toarray(), [[0.9, 0.1], [0.1, 0.9]], atol=1e-15)


def test_weights_out_of_range():
    for bad in (0.0, 1.0, -0.1, np.nan):
        with pytest.raises(ValidationError):
            PerturbationSpec.uniform(bad, np.eye(2))
    with pytest.raises(ValidationError):
        PerturbationSpec(np.array([0.5, 0.5, 0.5]), np.eye(2))


@given(seeds)
@settings(max_examples=100, deadline=None)
def test_per_state_rows(seed):
    rng = np.random.default_rng(seed)
    n = 6
    P, Q = random_stochastic(rng, n), random_stochastic(rng, n)
    A = rng.uniform(0.01, 0.99, n)
    Pb = perturb_transition(P, PerturbationSpec(A, Q)).toarray()
    assert validate_stochastic(Pb).passed
    expect = (1 - A)[:, None] * Q + A[:, None] * P
    assert np.abs(Pb - expect).max() <= 1e-14


def test_report_zero_when_identical():
    P = np.array([[0.3, 0.7], [0.1, 0.9]])
    rep = deviation_report(P, PerturbationSpec.uniform(0.9, P))
    assert rep.deviation == 0 and rep.condition


def test_report_disjoint_supports():
    rep = deviation_report(np.eye(2), PerturbationSpec.uniform(0.9, np.eye(2)[::-1]))
    assert rep.explore_distance == 2
    assert rep.deviation == pytest.approx(0.2, abs=1e-15)
    assert rep.bound == pytest.approx(0.2, abs=1e-15)
    assert not rep.condition


@given(seeds, st.integers(2, 8), st.floats(0.01, 0.99))
@settings(max_examples=200, deadline=None)
def test_uniform_identity(seed, n, a):
    rng = np.random.default_rng(seed)
    P, Q = random_stochastic(rng, n), random_stochastic(rng, n)
    rep = deviation_report(P, PerturbationSpec.uniform(a, Q))
    assert abs(rep.deviation - (1 - a) * infinity_norm_diff(P, Q)) <= 1e-12


@given(seeds)
@settings(max_examples=50, deadline=None)
def test_nonuniform_bound(seed):
    rng = np.random.default_rng(seed)
    n = 6
    P, Q = random_stochastic(rng, n), random_stochastic(rng, n)
    rep = deviation_report(P, PerturbationSpec(rng.uniform(0.1, 0.9, n), Q))
    assert not rep.uniform
    assert rep.deviation <= rep.bound + 1e-12


def test_report_on_small_resource_instance():
    spec = ResourceSpec(2, (0.8, 0.9), (0.090596, 0.048632), (0.483723, 0.444019))
    mdp = build_mdp(spec)
    _, pol, _ = value_iteration(mdp)
    P = transition_under_policy(mdp, pol)
    Q = transition_under_policy(mdp, np.full((mdp.n_states, 2), 0.5))
    rep = deviation_report(P, PerturbationSpec.uniform(0.9, Q))
    # Q is the mean of the two action matrices, so its distance to either is half their gap
    assert rep.explore_distance <= 0.5 * norm_condition_check(mdp).value + 1e-15
    assert rep.condition


def test_mixture_limits():
    target = np.array([0, 1, 1])
    explore = np.full((3, 2), 0.5)
    W = mixture_policy(target, explore, 1e-9)
    assert np.abs(W - np.eye(2)[target]).max() <= 1e-9
    assert np.array_equal(mixture_policy(explore, explore, 0.3), explore)
    with pytest.raises(ValidationError):
        mixture_policy(target, explore, 0.0)


@given(seeds)
@settings(max_examples=50, deadline=None)
def test_mixture_induces_convex_combination(seed):
    rng = np.random.default_rng(seed)
    n = 5
    mdp = Mdp((random_stochastic(rng, n), random_stochastic(rng, n)), np.zeros(n), 0.9)
    target = rng.integers(2, size=n)
    explore = rng.random((n, 2))
    explore /= explore.sum(axis=1, keepdims=True)
    lhs = transition_under_policy(mdp, mixture_policy(target, explore, 0.25)).toarray()
    rhs = (0.25 * transition_under_policy(mdp, explore).toarray()
           + 0.75 * transition_under_policy(mdp, target).toarray())
    assert np.abs(lhs - rhs).max() <= 1e-12
