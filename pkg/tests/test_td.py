import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from perturbed_td import NumericalError, ValidationError
from perturbed_td.config import ExperimentConfig
from perturbed_td.experiment import OffPolicySetup
from perturbed_td.resource import ResourceSpec, build_transition
from perturbed_td.td import (Aggregate, TdConfig, TdRunResult, TransitionSampler,
                             aggregate_runs, estimate_projected_system_mc, flattening_ratio,
                             run_algorithm1, run_many, run_stream, sample_next)

from oracles import random_stochastic

seeds = st.integers(0, 2**32 - 1)
ONE = np.array([[1.0]])


def test_sampler_deterministic_row():
    P = np.array([[0.0, 1.0, 0.0], [0.2, 0.3, 0.5], [0.0, 0.0, 1.0]])
    s = TransitionSampler(P)
    u = np.random.default_rng(0).random(1000)
    assert np.all(s.sample(np.zeros(1000, dtype=int), u) == 1)
    assert np.all(s.sample(np.full(1000, 2), u) == 2)
    rng = np.random.default_rng(1)
    assert all(sample_next(P, 0, rng) == 1 for _ in range(50))


def test_sampler_fair_coin():
    s = TransitionSampler(np.array([[0.5, 0.5], [0.5, 0.5]]))
    draws = s.sample(np.zeros(10**6, dtype=int), np.random.default_rng(2).random(10**6))
    assert abs(draws.mean() - 0.5) <= 0.002


def test_sampler_fig1_state():
    l1, m1 = 0.3, 0.4
    P = build_transition(ResourceSpec(2, (0.8, 0.9), (l1, 0.2), (m1, 0.5)), 0)
    # state (1,0) is index 2; it goes to (2,0)=5, (0,0)=0 or stays
    K = 200_000
    draws = TransitionSampler(P).sample(np.full(K, 2), np.random.default_rng(3).random(K))
    for target, p in ((5, l1), (0, m1), (2, 1 - l1 - m1)):
        freq = np.mean(draws == target)
        assert abs(freq - p) <= 3 * np.sqrt(p * (1 - p) / K)
    assert set(np.unique(draws)) == {0, 2, 5}


@given(seeds)
@settings(max_examples=30, deadline=None)
def test_walk_matches_repeated_sample(seed):
    rng = np.random.default_rng(seed)
    P = random_stochastic(rng, 6, density=0.5)
    s = TransitionSampler(P)
    u = rng.random(200)
    path = s.walk(3, u)
    x = 3
    for k, uk in enumerate(u):
        x = int(s.sample(np.array([x]), np.array([uk]))[0])
        assert path[k + 1] == x


@given(seeds)
@settings(max_examples=30, deadline=None)
def test_sampler_only_hits_support(seed):
    rng = np.random.default_rng(seed)
    P = random_stochastic(rng, 8, density=0.3)
    s = TransitionSampler(P)
    x = rng.integers(8, size=5000)
    y = s.sample(x, rng.random(5000))
    assert np.all(P[x, y] > 0)


def test_sample_next_bad_state():
    with pytest.raises(ValidationError):
        sample_next(np.eye(2), 5, np.random.default_rng(0))


def test_streams_independent_of_order():
    a = run_stream(7, 3).random(5)
    run_stream(7, 0).random(100)
    assert np.array_equal(a, run_stream(7, 3).random(5))
    assert not np.array_equal(a, run_stream(7, 4).random(5))


def test_config_validation():
    with pytest.raises(ValidationError):
        TdConfig(step="adam")
    with pytest.raises(ValidationError):
        TdConfig(run_length=0)
    with pytest.raises(ValidationError):
        TdConfig(fidelity="literal")
    assert np.allclose(TdConfig(run_length=3).step_sizes(), [1 / 1000, 1 / 1001, 1 / 1002])


def test_zero_reward_stays_zero():
    rng = np.random.default_rng(0)
    P = random_stochastic(rng, 5)
    cfg = TdConfig(run_length=300, decimation=10)
    res = run_algorithm1(P, P, np.zeros(5), rng.normal(size=(5, 2)), cfg)
    assert np.all(res.snapshots == 0) and np.all(res.norms == 0)


def test_single_state_fixed_point():
    cfg = TdConfig(step="constant", step_constant=0.1, run_length=600, decimation=100)
    res = run_algorithm1(ONE, ONE, np.array([1.0]), ONE, cfg)
    # r <- r + 0.1 (1 - 0.1 r): the error shrinks by 0.99 per step
    assert abs(res.final[0] - 10.0) <= 10 * 0.99**600 + 1e-12
    for fid in ("paper", "default"):
        r = run_algorithm1(ONE, ONE, np.array([1.0]), ONE,
                           TdConfig(step="constant", step_constant=0.1, run_length=3,
                                    fidelity=fid))
        assert r.final[0] == pytest.approx(0.1 + 0.099 + 0.09801 * 1.0)


def test_inputs_not_mutated():
    rng = np.random.default_rng(5)
    P = random_stochastic(rng, 4)
    R, phi = rng.normal(size=4), rng.normal(size=(4, 2))
    R0, phi0 = R.copy(), phi.copy()
    run_algorithm1(P, P, R, phi, TdConfig(run_length=50))
    assert np.array_equal(R, R0) and np.array_equal(phi, phi0)


def test_batching_does_not_change_runs():
    rng = np.random.default_rng(6)
    P, Pb = random_stochastic(rng, 6), random_stochastic(rng, 6)
    R, phi = rng.normal(size=6), rng.normal(size=(6, 3))
    cfg = TdConfig(run_length=5000, num_runs=4, base_seed=11, decimation=7)
    together = run_many(Pb, P, R, phi, cfg)
    for res in together:
        alone = run_algorithm1(Pb, P, R, phi, cfg, run_index=res.run_index)
        assert np.array_equal(alone.snapshots, res.snapshots)
        assert np.array_equal(alone.norms, res.norms)
        assert alone.initial_state == res.initial_state
    again = run_many(Pb, P, R, phi, cfg, run_indices=[3, 1])
    assert np.array_equal(again[0].snapshots, together[3].snapshots)


def test_snapshot_schedule_and_csv():
    cfg = TdConfig(run_length=1, decimation=50)
    res = run_algorithm1(ONE, ONE, np.array([1.0]), ONE, cfg)
    lines = res.to_csv().splitlines()
    assert lines[0] == "iteration,r_1,norm2,td_error_mean"
    assert len(lines) == 2 and lines[1].startswith("1,")
    res = run_algorithm1(ONE, ONE, np.array([1.0]), ONE, TdConfig(run_length=120, decimation=50))
    assert res.iterations.tolist() == [50, 100, 120]
    assert res.norms.shape == (120,)


def test_divergence_is_flagged():
    cfg = TdConfig(step="constant", step_constant=50.0, run_length=200, num_runs=2)
    P = np.array([[0.0, 1.0], [1.0, 0.0]])
    phi = np.array([[1.0], [3.0]])
    results = run_many(P, P, np.array([1.0, 0.0]), phi, cfg)
    assert all(r.diverged for r in results)
    assert all(np.isfinite(r.final).all() for r in results)
    with pytest.raises(NumericalError, match="diverged"):
        aggregate_runs(results)


def test_default_and_paper_fidelity_differ():
    rng = np.random.default_rng(8)
    P, Pb = random_stochastic(rng, 5), random_stochastic(rng, 5)
    R, phi = rng.normal(size=5), rng.normal(size=(5, 2))
    a = run_algorithm1(Pb, P, R, phi, TdConfig(run_length=200))
    b = run_algorithm1(Pb, P, R, phi, TdConfig(run_length=200, fidelity="paper"))
    assert not np.array_equal(a.final, b.final)


def _fake(idx, final, norms=(0.0,)):
    return TdRunResult(idx, 0, 0, np.array([1]), np.array([final], dtype=float),
                       np.zeros(1), np.array(norms, dtype=float))


def test_aggregate_examples():
    agg = aggregate_runs([_fake(0, [1.0, 0.0]), _fake(1, [0.0, 1.0])])
    assert agg.mean_r.tolist() == [0.5, 0.5]
    same = aggregate_runs([_fake(0, [2.0, 3.0])] * 3)
    assert same.mean_r.tolist() == [2.0, 3.0]
    with pytest.raises(ValidationError):
        aggregate_runs([])


def test_aggregate_skips_diverged():
    bad = _fake(1, [9.0, 9.0])
    bad.diverged = True
    agg = aggregate_runs([_fake(0, [1.0, 1.0]), bad])
    assert agg.mean_r.tolist() == [1.0, 1.0] and agg.divergence_count == 1


def test_aggregate_csv_columns():
    agg = Aggregate(np.zeros(2), np.arange(1, 4), np.array([[1.0, 2, 3], [3, 4, 5]]), [0, 4], 0)
    lines = agg.to_csv(decimation=2).splitlines()
    assert lines[0] == "iteration,mean_norm2,run_0,run_4"
    assert lines[1] == "2,3,2,4" and lines[2] == "3,4,3,5"


def test_flattening_ratio():
    k = np.arange(50_000)
    assert flattening_ratio(1 - np.exp(-k / 2000)) < 0.01
    assert flattening_ratio(k.astype(float)) == pytest.approx(1.0)
    with pytest.raises(ValidationError):
        flattening_ratio(np.ones(5))


def test_mc_single_state_exact():
    est = estimate_projected_system_mc(ONE, ONE, np.array([2.0]), ONE, 1,
                                       np.random.default_rng(0), 0.9)
    assert est.Z[0, 0] == pytest.approx(0.1) and est.d[0] == 2.0


def test_mc_three_cycle():
    C = np.roll(np.eye(3), 1, axis=1)
    R = np.array([1.0, 2.0, 4.0])
    est = estimate_projected_system_mc(C, C, R, np.eye(3), 3, np.random.default_rng(0), 0.9,
                                       x0=0)
    assert np.allclose(est.Z, (np.eye(3) - 0.9 * C) / 3, atol=1e-15)
    assert np.allclose(est.d, R / 3, atol=1e-15)


def test_td_reaches_projected_solution_on_small_instance():
    # ten runs of 50000 steps on the six-state instance; the exact projected
    # solution is the oracle and 5% is the per-coordinate budget
    cfg = ExperimentConfig.from_mapping(dict(
        N=2, c=[0.8, 0.9], lam=[0.3, 0.2], mu=[0.4, 0.5], policy="random",
        run_length=50_000, num_runs=10, step_a=10, step_b=1000, seed=1))
    setup = OffPolicySetup(cfg, "random")
    results = run_many(setup.behavior, setup.target, setup.mdp.reward, setup.features,
                       cfg.td_config())
    mean = aggregate_runs(results).mean_r
    assert np.max(np.abs(mean / setup.r_direct - 1)) <= 0.05
