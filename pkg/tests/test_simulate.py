"""Monte Carlo engine: path reproducibility, estimator batches, exact
liquidation oracles, and value cross-checks."""

from __future__ import annotations

import numpy as np
import pytest

from harvseed.chain import Diffusion, HarvestJump, Reflect, SeedJump, build_grid
from harvseed.errors import GridMismatch, InvalidCoefficient, NonFiniteState
from harvseed.model import (
    RateBounds,
    UNBOUNDED,
    competition_model,
    custom_model,
    logistic_model,
)
from harvseed.simulate import (
    NodePolicy,
    SimConfig,
    estimate_performance,
    extinction_policy,
    path_seeds,
    simulate_path,
    verify,
)
from harvseed.solver import SolveParams, solve

INF = UNBOUNDED

A = RateBounds(seed=0.5, harvest=INF)
B = RateBounds(seed=0.5, harvest=3.0)
D = RateBounds(seed=INF, harvest=INF)
ZERO = RateBounds(seed=0.0, harvest=0.0)


def logistic():
    return logistic_model(b1=3.0, b2=2.0, sigma=2.0, price=0.5,
                          seed_cost=2.5, discount=0.05)


def idle(d=1):
    return Diffusion(seed=(0.0,) * d, harvest=(0.0,) * d)


def pump_policy(grid, rate):
    """Regime-B shape: harvest at a constant rate wherever there is
    stock, reflect off the top layer, idle at the origin."""
    actions = []
    for idx in range(grid.n_nodes):
        if idx == 0:
            actions.append(idle())
        elif idx == grid.n_nodes - 1:
            actions.append(Reflect(0))
        else:
            actions.append(Diffusion(seed=(0.0,), harvest=(rate,)))
    return NodePolicy.from_actions(grid, actions)


def idle_policy(grid):
    return NodePolicy.from_actions(grid, [idle(grid.d)] * grid.n_nodes)


# --- configuration and seed plumbing -----------------------------------------


def test_sim_config_rejects_bad_protocol():
    with pytest.raises(InvalidCoefficient):
        SimConfig(dt=0.0)
    with pytest.raises(InvalidCoefficient):
        SimConfig(horizon=-1.0)
    with pytest.raises(InvalidCoefficient):
        SimConfig(paths=0)
    with pytest.raises(InvalidCoefficient):
        SimConfig(lookup="linear")


def test_path_seeds_are_deterministic_and_nested():
    a = path_seeds(7, 6)
    b = path_seeds(7, 6)
    assert a.shape == (6,)
    assert np.array_equal(a, b)
    # a shorter batch is a prefix of a longer one, so path k of an
    # estimator run can be replayed on its own
    assert np.array_equal(path_seeds(7, 3), a[:3])
    assert not np.array_equal(path_seeds(8, 6), a)


def test_from_actions_validates_shape_and_kind():
    grid = build_grid(2.0, 0.5, A.regime, 1)
    with pytest.raises(GridMismatch):
        NodePolicy.from_actions(grid, [idle()] * (grid.n_nodes - 1))
    bad = [idle()] * grid.n_nodes
    bad[2] = "harvest"
    with pytest.raises(GridMismatch):
        NodePolicy.from_actions(grid, bad)


def test_extinction_policy_targets_lowest_stocked_species():
    grid = build_grid(1.0, 0.5, A.regime, 2)
    pol = extinction_policy(grid)
    for idx in range(grid.n_nodes):
        k = np.unravel_index(idx, grid.shape)
        if k[0] >= 1:
            assert pol.kind[idx] == 1 and pol.species[idx] == 0
        elif k[1] >= 1:
            assert pol.kind[idx] == 1 and pol.species[idx] == 1
        else:
            assert pol.kind[idx] == 0
            assert not pol.seed_rates[idx].any()
            assert not pol.harvest_rates[idx].any()


# --- exact-reward oracles -----------------------------------------------------


def test_immediate_liquidation_pays_price_times_stock():
    # Jump-harvesting everything at t=0 collects f * x0 with no noise,
    # no discounting, and certain extinction.
    model = logistic()
    grid = build_grid(4.0, 0.5, A.regime, 1)
    pol = extinction_policy(grid)
    res = estimate_performance(model, A.regime, pol, np.array([2.0]),
                               SimConfig(paths=8, seed=5))
    assert res.mean == 1.0
    assert res.stderr == 0.0
    assert res.extinction_fraction == 1.0
    assert res.cap_hits == 0
    assert res.paths == 8


def test_doing_nothing_earns_nothing():
    model = logistic()
    grid = build_grid(4.0, 0.5, B.regime, 1)
    res = estimate_performance(model, B.regime, idle_policy(grid),
                               np.array([1.5]),
                               SimConfig(dt=0.05, horizon=1.0, paths=16, seed=1))
    assert res.mean == 0.0
    assert res.stderr == 0.0
    assert 0.0 <= res.extinction_fraction <= 1.0


# --- reproducibility ----------------------------------------------------------


def test_same_seed_reproduces_the_estimate_exactly():
    model = logistic()
    grid = build_grid(4.0, 0.5, B.regime, 1)
    pol = pump_policy(grid, 3.0)
    cfg = SimConfig(dt=0.02, horizon=2.0, paths=32, seed=42)
    r1 = estimate_performance(model, B.regime, pol, np.array([1.5]), cfg)
    r2 = estimate_performance(model, B.regime, pol, np.array([1.5]), cfg)
    assert r1.mean == r2.mean
    assert r1.stderr == r2.stderr
    assert r1.extinction_fraction == r2.extinction_fraction

    other = SimConfig(dt=0.02, horizon=2.0, paths=32, seed=43)
    r3 = estimate_performance(model, B.regime, pol, np.array([1.5]), other)
    assert r3.mean != r1.mean


def test_single_path_replays_a_batch_member():
    model = logistic()
    grid = build_grid(4.0, 0.5, B.regime, 1)
    pol = pump_policy(grid, 3.0)
    cfg = SimConfig(dt=0.02, horizon=2.0, paths=3, seed=11)
    batch = estimate_performance(model, B.regime, pol, np.array([1.5]), cfg)
    singles = [
        simulate_path(model, B.regime, pol, np.array([1.5]), cfg, int(s))
        for s in path_seeds(11, 3)
    ]
    assert batch.mean == np.mean(singles)

    one = SimConfig(dt=0.02, horizon=2.0, paths=1, seed=11)
    alone = estimate_performance(model, B.regime, pol, np.array([1.5]), one)
    assert alone.mean == singles[0]
    assert alone.stderr == 0.0


def test_stderr_shrinks_with_the_batch():
    model = logistic()
    grid = build_grid(4.0, 0.5, B.regime, 1)
    pol = pump_policy(grid, 3.0)
    small = estimate_performance(
        model, B.regime, pol, np.array([1.5]),
        SimConfig(dt=0.01, horizon=5.0, paths=200, seed=0))
    large = estimate_performance(
        model, B.regime, pol, np.array([1.5]),
        SimConfig(dt=0.01, horizon=5.0, paths=800, seed=0))
    assert small.stderr > 0.0
    ratio = small.stderr / large.stderr
    # 4x the paths should halve the error, very loosely
    assert 1.2 < ratio < 3.0


def test_tail_bound_tracks_the_horizon():
    model = logistic()
    grid = build_grid(4.0, 0.5, B.regime, 1)
    pol = idle_policy(grid)
    x0 = np.array([1.0])
    short = estimate_performance(model, B.regime, pol, x0,
                                 SimConfig(dt=0.05, horizon=1.0, paths=2, seed=0))
    long = estimate_performance(model, B.regime, pol, x0,
                                SimConfig(dt=0.05, horizon=10.0, paths=2, seed=0))
    assert short.tail_bound > long.tail_bound > 0.0

    # the default horizon pushes the truncation error below 0.1% of the
    # reward scale
    auto = estimate_performance(model, B.regime, pol, x0,
                                SimConfig(dt=0.05, paths=2, seed=0))
    scale = max(1.0, 0.5 * grid.extent)
    assert auto.tail_bound <= 1e-3 * scale * (1.0 + 1e-9)


# --- engine parity ------------------------------------------------------------


def mixed_policy_1d(grid):
    """Rates, a seeding band, and an interior jump node, so both
    engines exercise every reward branch."""
    actions = []
    for idx in range(grid.n_nodes):
        x = grid.nodes[idx, 0]
        if idx == 0:
            actions.append(idle())
        elif x <= 0.5:
            actions.append(Diffusion(seed=(0.5,), harvest=(0.0,)))
        elif x >= grid.extent - 0.25 or abs(x - 3.0) < 0.25:
            actions.append(HarvestJump(0))
        else:
            actions.append(Diffusion(seed=(0.0,), harvest=(1.0,)))
    return NodePolicy.from_actions(grid, actions)


def test_reference_engine_matches_the_kernel_1d():
    model = logistic()
    grid = build_grid(4.0, 0.5, A.regime, 1)
    pol = mixed_policy_1d(grid)
    cfg = SimConfig(dt=0.01, horizon=2.0, paths=1, seed=9)
    for s in path_seeds(9, 3):
        fast = simulate_path(model, A.regime, pol, np.array([1.5]), cfg, int(s))
        trace = []
        slow = simulate_path(model, A.regime, pol, np.array([1.5]), cfg, int(s),
                             trace=trace)
        assert slow == pytest.approx(fast, abs=1e-9)
        assert len(trace) == 200


def test_reference_engine_matches_the_kernel_2d():
    model = competition_model(b1=3.0, b2=2.0, a11=2.0, a12=1.5, a21=2.0,
                              a22=2.0, sigma1=3.0, sigma2=4.0,
                              price=(1.0, 1.5), seed_cost=(4.0, 3.0),
                              discount=0.05)
    grid = build_grid(1.5, 0.5, A.regime, 2)
    actions = []
    for idx in range(grid.n_nodes):
        k = np.unravel_index(idx, grid.shape)
        at_cap = [i for i in range(2) if k[i] == grid.shape[i] - 1]
        if at_cap:
            actions.append(HarvestJump(at_cap[0]))
        elif k == (0, 0):
            actions.append(idle(2))
        else:
            actions.append(Diffusion(seed=(0.2, 0.0), harvest=(0.0, 0.5)))
    pol = NodePolicy.from_actions(grid, actions)
    cfg = SimConfig(dt=0.02, horizon=1.0, paths=1, seed=21)
    for s in path_seeds(21, 2):
        fast = simulate_path(model, A.regime, pol, np.array([1.0, 0.5]), cfg,
                             int(s))
        trace = []
        slow = simulate_path(model, A.regime, pol, np.array([1.0, 0.5]), cfg,
                             int(s), trace=trace)
        assert slow == pytest.approx(fast, abs=1e-9)


def test_trace_records_every_step():
    model = logistic()
    grid = build_grid(2.0, 0.5, D.regime, 1)
    pol = NodePolicy.from_actions(grid, [SeedJump(0)] * grid.n_nodes)
    cfg = SimConfig(dt=0.1, horizon=0.5, paths=1, seed=3)
    trace = []
    simulate_path(model, D.regime, pol, np.array([1.0]), cfg,
                  int(path_seeds(3, 1)[0]), trace=trace)
    assert len(trace) == 5
    t0, x0, code0, total0 = trace[0]
    assert t0 == 0.0
    assert code0 == -1  # resting on a seed-jump node, species 1
    assert total0 < 0.0
    totals = [row[3] for row in trace]
    assert all(b <= a for a, b in zip(totals, totals[1:]))  # costs only
    for _, x, _, _ in trace:
        assert 0.0 <= x[0] <= grid.extent


# --- guard rails --------------------------------------------------------------


def test_start_state_is_validated():
    model = logistic()
    grid = build_grid(4.0, 0.5, A.regime, 1)
    pol = extinction_policy(grid)
    cfg = SimConfig(paths=1)
    with pytest.raises(GridMismatch):
        simulate_path(model, A.regime, pol, np.array([1.0, 1.0]), cfg, 0)
    with pytest.raises(GridMismatch):
        simulate_path(model, A.regime, pol, np.array([-0.5]), cfg, 0)
    with pytest.raises(GridMismatch):
        estimate_performance(model, A.regime, pol, np.array([4.6]), cfg)


def test_regime_and_grid_extent_must_agree():
    model = logistic()
    grid_b = build_grid(4.0, 0.5, B.regime, 1)  # carries a reflecting layer
    pol = idle_policy(grid_b)
    with pytest.raises(GridMismatch):
        simulate_path(model, A.regime, pol, np.array([1.0]),
                      SimConfig(paths=1), 0)


def test_exploding_dynamics_raise_with_the_failure_time():
    model = custom_model(
        d=1,
        drift=lambda x: np.full_like(np.asarray(x, dtype=float), np.nan),
        diff_cov=lambda x: np.array([[1.0]]),
        price=0.5, seed_cost=2.5, discount=0.05)
    grid = build_grid(2.0, 0.5, ZERO.regime, 1)
    pol = idle_policy(grid)
    cfg = SimConfig(dt=0.1, horizon=0.5, paths=1)
    with pytest.raises(NonFiniteState) as err:
        simulate_path(model, ZERO.regime, pol, np.array([1.0]), cfg, 0)
    assert err.value.time == pytest.approx(0.1)

    batch = SimConfig(dt=0.1, horizon=0.5, paths=3)
    with pytest.raises(NonFiniteState) as err:
        estimate_performance(model, ZERO.regime, pol, np.array([1.0]), batch)
    assert "3 paths" in str(err.value)


def test_jump_livelock_is_capped_and_flagged():
    # Seeding by jumps everywhere never reaches a rate node; the chain
    # gives up after one sweep of the grid and flags the path instead
    # of spinning.
    model = logistic()
    grid = build_grid(2.0, 0.5, D.regime, 1)
    pol = NodePolicy.from_actions(grid, [SeedJump(0)] * grid.n_nodes)
    res = estimate_performance(model, D.regime, pol, np.array([1.0]),
                               SimConfig(dt=0.1, horizon=0.5, paths=4, seed=3))
    assert res.cap_hits == 4
    assert res.mean < 0.0
    # constant seeding cost and a fixed jump count make every path pay
    # the same bill no matter where the noise sends it
    assert res.stderr == 0.0


# --- cross-checking a solved value function -----------------------------------


def zero_bound_solution():
    model = logistic()
    grid = build_grid(2.0, 0.5, ZERO.regime, 1)
    return solve(model, ZERO, grid, SolveParams(tolerance=1e-10))


def test_verify_accepts_its_own_policy():
    sol = zero_bound_solution()
    report = verify(sol, [[0.5], [1.0], [2.0]],
                    SimConfig(dt=0.05, horizon=1.0, paths=32, seed=2))
    assert report.all_passed
    rows = list(report.rows())
    assert len(rows) == 3
    state, solved, mean, stderr, diff, slack, passed = rows[1]
    assert state == (1.0,)
    assert solved == 0.0 and mean == 0.0 and diff == 0.0
    assert slack == pytest.approx(0.05)
    assert passed


def test_verify_flags_a_corrupted_value_function():
    sol = zero_bound_solution()
    sol.V = sol.V + 10.0
    report = verify(sol, [[1.0]],
                    SimConfig(dt=0.05, horizon=1.0, paths=32, seed=2))
    assert not report.all_passed
    assert report.differences[0] == pytest.approx(10.0)


def test_verify_requires_grid_nodes():
    sol = zero_bound_solution()
    with pytest.raises(GridMismatch):
        verify(sol, [[1.05]], SimConfig(paths=4, seed=0))
