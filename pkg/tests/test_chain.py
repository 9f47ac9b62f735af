"""Lattice construction, control actions, and transition stencils."""

from __future__ import annotations

import numpy as np
import pytest

from harvseed.chain import (
    Diffusion,
    HarvestJump,
    Reflect,
    SeedJump,
    action_priority,
    admissible_actions,
    build_grid,
    diffusion_stencil,
    jump_stencil,
    rate_levels,
)
from harvseed.errors import (
    GridMismatch,
    JumpOutOfGrid,
    NegativeProbability,
    NeighborOutOfGrid,
)
from harvseed.model import RateBounds, UNBOUNDED, custom_model, logistic_model

INF = UNBOUNDED


def logistic(sigma=2.0):
    return logistic_model(b1=3.0, b2=2.0, sigma=sigma, price=0.5,
                          seed_cost=2.5, discount=0.05)


REGIME_A = RateBounds(seed=0.5, harvest=INF)     # seeding by rates
REGIME_B = RateBounds(seed=0.5, harvest=3.0)     # both by rates
REGIME_C = RateBounds(seed=INF, harvest=3.0)     # harvesting by rates
REGIME_D = RateBounds(seed=INF, harvest=INF)     # both by jumps


# --- grids -----------------------------------------------------------------


def test_grid_node_count_1d():
    grid = build_grid(4.0, 0.01, REGIME_A.regime, 1)
    assert grid.n_nodes == 401
    assert grid.extent == pytest.approx(4.0)
    assert grid.upper == pytest.approx(4.0)


def test_reflecting_regime_adds_one_layer():
    grid = build_grid(4.0, 0.1, RateBounds(seed=0.5, harvest=3.0).regime, 2)
    assert grid.shape == (42, 42)
    assert grid.extent == pytest.approx(4.1)
    assert grid.upper == pytest.approx(4.0)


def test_grid_rounds_up_with_warning():
    with pytest.warns(UserWarning, match="rounded up"):
        grid = build_grid(4.0, 0.03, REGIME_A.regime, 1)
    assert grid.upper == pytest.approx(4.02)
    assert grid.n_nodes == 135


def test_node_coordinate_round_trip():
    grid = build_grid(2.0, 0.25, REGIME_A.regime, 2)
    for idx in [0, 1, 17, grid.n_nodes - 1]:
        x = grid.node_coords(idx)
        assert grid.coords_index(x) == idx


def test_off_lattice_state_rejected():
    grid = build_grid(4.0, 0.1, REGIME_A.regime, 1)
    with pytest.raises(GridMismatch):
        grid.multi_index(np.array([0.05]))
    with pytest.raises(GridMismatch):
        grid.multi_index(np.array([4.2]))
    with pytest.raises(GridMismatch):
        grid.multi_index(np.array([1.0, 1.0]))


def test_nodes_enumerate_lexicographically():
    grid = build_grid(1.0, 0.5, REGIME_A.regime, 2)
    assert grid.nodes[0] == pytest.approx([0.0, 0.0])
    assert grid.nodes[1] == pytest.approx([0.0, 0.5])
    assert grid.nodes[3] == pytest.approx([0.5, 0.0])


# --- actions -----------------------------------------------------------------


def test_diffusion_rejects_simultaneous_rates():
    with pytest.raises(ValueError):
        Diffusion(seed=(0.5,), harvest=(1.0,))


def test_diffusion_from_net_splits_sign():
    action = Diffusion.from_net((-2.0, 0.25))
    assert action.harvest == (2.0, 0.0)
    assert action.seed == (0.0, 0.25)
    assert action.net == (-2.0, 0.25)


def test_idle_action_sorts_first():
    actions = [HarvestJump(0), Diffusion(seed=(0.5,), harvest=(0.0,)),
               Diffusion(seed=(0.0,), harvest=(0.0,)), Reflect(0)]
    actions.sort(key=action_priority)
    assert actions[0].is_idle
    assert isinstance(actions[-1], Reflect)


def test_rate_levels_shapes():
    assert rate_levels(3.0, 2) == pytest.approx([0.0, 3.0])
    assert rate_levels(3.0, 4) == pytest.approx([0.0, 1.0, 2.0, 3.0])
    assert rate_levels(INF, 2) == pytest.approx([0.0])
    assert rate_levels(0.0, 5) == pytest.approx([0.0])


def test_admissible_actions_interior_by_regime():
    grid = build_grid(4.0, 0.1, REGIME_A.regime, 1)
    x = np.array([1.0])
    acts_a = admissible_actions(grid, x, REGIME_A)
    assert sum(isinstance(a, Diffusion) for a in acts_a) == 2
    assert sum(isinstance(a, HarvestJump) for a in acts_a) == 1

    grid_b = build_grid(4.0, 0.1, REGIME_B.regime, 1)
    acts_b = admissible_actions(grid_b, x, REGIME_B)
    assert all(isinstance(a, Diffusion) for a in acts_b)
    assert len(acts_b) == 3  # idle, seed at 0.5, harvest at 3

    grid_d = build_grid(4.0, 0.1, REGIME_D.regime, 1)
    acts_d = admissible_actions(grid_d, x, REGIME_D)
    assert [type(a).__name__ for a in acts_d] == [
        "Diffusion", "HarvestJump", "SeedJump"]


def test_no_harvesting_of_extinct_species():
    grid = build_grid(4.0, 0.1, REGIME_B.regime, 1)
    acts = admissible_actions(grid, np.array([0.0]), REGIME_B)
    assert all(a.harvest == (0.0,) for a in acts)
    assert any(a.seed == (0.5,) for a in acts)


def test_forced_action_on_upper_boundary():
    grid_a = build_grid(4.0, 0.1, REGIME_A.regime, 1)
    only = admissible_actions(grid_a, np.array([4.0]), REGIME_A)
    assert only == [HarvestJump(0)]

    grid_b = build_grid(4.0, 0.1, REGIME_B.regime, 1)
    only = admissible_actions(grid_b, np.array([4.1]), REGIME_B)
    assert only == [Reflect(0)]


def test_forced_action_picks_lowest_saturated_species():
    grid = build_grid(4.0, 0.1, REGIME_D.regime, 2)
    only = admissible_actions(grid, np.array([4.0, 4.0]), REGIME_D)
    assert only == [HarvestJump(0)]
    only = admissible_actions(grid, np.array([1.0, 4.0]), REGIME_D)
    assert only == [HarvestJump(1)]


# --- stencil oracles --------------------------------------------------------


def test_idle_stencil_at_one():
    # a = 4, v = 1: Q = 4 + 0.1 + 0.1, neighbours split (a/2 + h v^+-)/Q
    model = logistic()
    grid = build_grid(4.0, 0.1, REGIME_A.regime, 1)
    st = diffusion_stencil(model, grid, np.array([1.0]),
                           Diffusion(seed=(0.0,), harvest=(0.0,)),
                           REGIME_A.regime)
    probs = dict(st.entries)
    k = grid.coords_index(np.array([1.0]))
    assert st.dt == pytest.approx(0.01 / 4.2)
    assert probs[k + 1] == pytest.approx(2.1 / 4.2)
    assert probs[k - 1] == pytest.approx(2.0 / 4.2)
    assert probs[k] == pytest.approx(0.1 / 4.2)
    assert st.reward_rate == 0.0
    assert st.reward_jump == 0.0


def test_seeding_rate_shifts_probabilities_and_costs():
    model = logistic()
    grid = build_grid(4.0, 0.1, REGIME_A.regime, 1)
    st = diffusion_stencil(model, grid, np.array([1.0]),
                           Diffusion(seed=(0.5,), harvest=(0.0,)),
                           REGIME_A.regime)
    probs = dict(st.entries)
    k = grid.coords_index(np.array([1.0]))
    assert probs[k + 1] == pytest.approx(2.15 / 4.25)
    assert probs[k - 1] == pytest.approx(2.0 / 4.25)
    assert st.reward_rate == pytest.approx(-1.25)


def test_harvest_rate_earns_reward():
    model = logistic()
    grid = build_grid(4.0, 0.1, REGIME_B.regime, 1)
    st = diffusion_stencil(model, grid, np.array([1.0]),
                           Diffusion(seed=(0.0,), harvest=(3.0,)),
                           REGIME_B.regime)
    assert st.reward_rate == pytest.approx(1.5)


def test_origin_stencil_degenerates_to_self_loop():
    model = logistic()
    grid = build_grid(4.0, 0.1, REGIME_A.regime, 1)
    st = diffusion_stencil(model, grid, np.zeros(1),
                           Diffusion(seed=(0.0,), harvest=(0.0,)),
                           REGIME_A.regime)
    assert st.entries == [(0, 1.0)]
    assert st.dt == pytest.approx(0.1)


def test_diffusion_stencil_refuses_boundary_node():
    model = logistic()
    grid = build_grid(4.0, 0.1, REGIME_A.regime, 1)
    with pytest.raises(NeighborOutOfGrid):
        diffusion_stencil(model, grid, np.array([4.0]),
                          Diffusion(seed=(0.0,), harvest=(0.0,)),
                          REGIME_A.regime)


def test_rate_kind_must_match_regime():
    model = logistic()
    grid = build_grid(4.0, 0.1, REGIME_A.regime, 1)
    with pytest.raises(ValueError):
        diffusion_stencil(model, grid, np.array([1.0]),
                          Diffusion(seed=(0.0,), harvest=(1.0,)),
                          REGIME_A.regime)


def test_dominance_violation_raises():
    def drift(x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def cov(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = 1.0
        out[..., 1, 1] = 1.0
        out[..., 0, 1] = 3.0
        out[..., 1, 0] = 3.0
        return out

    model = custom_model(d=2, drift=drift, diff_cov=cov, price=(1.0, 1.0),
                         seed_cost=(2.0, 2.0), discount=0.05)
    grid = build_grid(4.0, 0.5, REGIME_D.regime, 2)
    with pytest.raises(NegativeProbability):
        diffusion_stencil(model, grid, np.array([1.0, 1.0]),
                          Diffusion(seed=(0.0, 0.0), harvest=(0.0, 0.0)),
                          REGIME_D.regime)


def test_correlated_noise_uses_diagonal_moves():
    def drift(x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def cov(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = 2.0
        out[..., 1, 1] = 2.0
        out[..., 0, 1] = 1.0
        out[..., 1, 0] = 1.0
        return out

    model = custom_model(d=2, drift=drift, diff_cov=cov, price=(1.0, 1.0),
                         seed_cost=(2.0, 2.0), discount=0.05)
    grid = build_grid(4.0, 0.5, REGIME_D.regime, 2)
    st = diffusion_stencil(model, grid, np.array([1.0, 1.0]),
                           Diffusion(seed=(0.0, 0.0), harvest=(0.0, 0.0)),
                           REGIME_D.regime)
    assert st.probs.sum() == pytest.approx(1.0, abs=1e-14)
    # positive correlation: the ++ and -- corners carry a_12/(2Q) each
    k = np.array(grid.multi_index(np.array([1.0, 1.0])))
    plus = int(np.ravel_multi_index(tuple(k + 1), grid.shape))
    probs = dict(st.entries)
    Q = 2.0 + 2.0 - 1.0 + 0.5
    assert probs[plus] == pytest.approx(1.0 / (2 * Q))


# --- jump stencils ------------------------------------------------------


def test_harvest_jump_reward_and_target():
    model = logistic()
    grid = build_grid(4.0, 0.1, REGIME_A.regime, 1)
    st = jump_stencil(model, grid, np.array([0.5]), HarvestJump(0))
    assert st.dt == 0.0
    assert st.reward_jump == pytest.approx(0.05)
    assert st.entries == [(grid.coords_index(np.array([0.4])), 1.0)]


def test_seed_jump_costs_and_target():
    model = logistic()
    grid = build_grid(4.0, 0.1, REGIME_D.regime, 1)
    st = jump_stencil(model, grid, np.array([0.5]), SeedJump(0))
    assert st.reward_jump == pytest.approx(-0.25)
    assert st.entries == [(grid.coords_index(np.array([0.6])), 1.0)]


def test_reflection_is_free():
    model = logistic()
    grid = build_grid(4.0, 0.1, REGIME_B.regime, 1)
    st = jump_stencil(model, grid, np.array([4.1]), Reflect(0))
    assert st.reward_jump == 0.0
    assert st.entries == [(grid.coords_index(np.array([4.0])), 1.0)]


def test_jumps_cannot_leave_lattice():
    model = logistic()
    grid = build_grid(4.0, 0.1, REGIME_D.regime, 1)
    with pytest.raises(JumpOutOfGrid):
        jump_stencil(model, grid, np.zeros(1), HarvestJump(0))
    with pytest.raises(JumpOutOfGrid):
        jump_stencil(model, grid, np.array([4.0]), SeedJump(0))


# --- local consistency (randomized) ---------------------------------------


def random_case(rng):
    """Random (model, grid, node, action, regime) across all regimes."""
    bounds = rng.choice([REGIME_A, REGIME_B, REGIME_C, REGIME_D])
    d = int(rng.integers(1, 3))
    if d == 2:
        bounds = RateBounds(seed=(bounds.seed[0],) * 2,
                            harvest=(bounds.harvest[0],) * 2)
    h = float(rng.choice([0.05, 0.1, 0.2]))
    if d == 1:
        model = logistic(sigma=float(rng.uniform(0.5, 3.0)))
    else:
        from harvseed.model import competition_model
        model = competition_model(
            b1=3.0, b2=2.0, a11=2.0, a12=1.5, a21=2.0, a22=2.0,
            sigma1=float(rng.uniform(1.0, 4.0)),
            sigma2=float(rng.uniform(1.0, 4.0)),
            price=(1.0, 1.5), seed_cost=(4.0, 3.0), discount=0.05)
    grid = build_grid(4.0, h, bounds.regime, d)
    # interior node, one cell clear of both boundaries
    k = rng.integers(1, np.array(grid.shape) - 1)
    x = k * h
    actions = [a for a in admissible_actions(grid, x, bounds)
               if isinstance(a, Diffusion)]
    action = actions[int(rng.integers(len(actions)))]
    return model, grid, x, action, bounds.regime


def test_local_consistency_randomized():
    rng = np.random.default_rng(20240817)
    for _ in range(250):
        model, grid, x, action, regime = random_case(rng)
        st = diffusion_stencil(model, grid, x, action, regime)

        assert np.all(st.probs >= 0.0)
        assert np.all(st.probs <= 1.0)
        assert st.probs.sum() == pytest.approx(1.0, abs=1e-12)

        moves = grid.nodes[st.targets] - x
        v = (np.atleast_1d(model.drift(x)) + np.asarray(action.seed)
             - np.asarray(action.harvest))
        mean = st.probs @ moves
        assert mean == pytest.approx(v * st.dt, abs=1e-12)

        a = np.atleast_2d(model.diff_cov(x))
        cov = (moves.T * st.probs) @ moves - np.outer(mean, mean)
        c_bound = 2.0 * max(1.0, np.max(np.abs(v)))
        assert np.max(np.abs(cov - a * st.dt)) <= c_bound * grid.h * st.dt
