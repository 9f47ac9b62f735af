"""Value iteration: Bellman updates, convergence, and fixed-point
properties on small grids."""

from __future__ import annotations

import numpy as np
import pytest

from harvseed.chain import Diffusion, HarvestJump, build_grid
from harvseed.errors import AssumptionViolation, GridMismatch
from harvseed.model import RateBounds, UNBOUNDED, logistic_model
from harvseed.solver import (
    SolveParams,
    Solution,
    bellman_value,
    initial_value,
    residual,
    solve,
)

INF = UNBOUNDED


def logistic(price=0.5, price_slope=None):
    return logistic_model(b1=3.0, b2=2.0, sigma=2.0, price=price,
                          seed_cost=2.5, discount=0.05,
                          price_slope=price_slope)


def shell(bounds, h=0.1, V=None):
    """A Solution wrapper with a hand-set V, for bellman_value tests."""
    model = logistic()
    grid = build_grid(4.0, h, bounds.regime, 1)
    vals = np.zeros(grid.n_nodes) if V is None else np.asarray(V, dtype=float)
    return Solution(model=model, bounds=bounds, grid=grid,
                    params=SolveParams(), V=vals)


A = RateBounds(seed=0.5, harvest=INF)
B = RateBounds(seed=0.5, harvest=3.0)
C = RateBounds(seed=INF, harvest=3.0)
D = RateBounds(seed=INF, harvest=INF)


# --- single Bellman updates -------------------------------------------------


def test_harvest_jump_value_on_zero_v():
    sol = shell(A)
    got = bellman_value(sol, np.array([0.5]), HarvestJump(0))
    assert got == pytest.approx(0.05, abs=1e-15)


def test_harvest_jump_leaves_linear_value_invariant():
    # V = f x prices a unit of stock exactly at the jump reward
    sol = shell(A)
    sol.V = 0.5 * sol.grid.nodes[:, 0]
    got = bellman_value(sol, np.array([0.5]), HarvestJump(0))
    assert got == pytest.approx(sol.V[sol.grid.coords_index(np.array([0.5]))])


def test_seeding_diffusion_value_on_zero_v():
    sol = shell(A)
    got = bellman_value(sol, np.array([1.0]),
                        Diffusion(seed=(0.5,), harvest=(0.0,)))
    assert got == pytest.approx(-0.0029408304701803545, abs=1e-15)


def test_idle_update_discounts_a_constant():
    sol = shell(A)
    sol.V = np.full(sol.grid.n_nodes, 7.0)
    got = bellman_value(sol, np.array([1.0]),
                        Diffusion(seed=(0.0,), harvest=(0.0,)))
    assert got == pytest.approx(6.999166716267872, abs=1e-12)
    assert got < 7.0


def test_residual_is_sup_norm():
    assert residual(np.zeros(3), np.array([0.0, -2.0, 1.0])) == 2.0
    with pytest.raises(GridMismatch):
        residual(np.zeros(3), np.zeros(4))


# --- initial iterate ---------------------------------------------------------


def test_initial_value_by_regime():
    model = logistic()
    grid = build_grid(4.0, 0.5, A.regime, 1)
    v0 = initial_value(model, grid, A.regime)
    assert v0 == pytest.approx(0.5 * grid.nodes[:, 0])

    grid_b = build_grid(4.0, 0.5, B.regime, 1)
    assert initial_value(model, grid_b, B.regime) == pytest.approx(
        np.zeros(grid_b.n_nodes))


# --- solve: convergence and flags -------------------------------------------


def solve_small(bounds, h=0.2, tolerance=1e-9, **kw):
    model = logistic()
    grid = build_grid(4.0, h, bounds.regime, 1)
    params = SolveParams(tolerance=tolerance, **kw)
    return solve(model, bounds, grid, params)


def test_converged_run_is_flagged_and_bounded():
    sol = solve_small(A)
    assert sol.converged
    assert sol.residual_history[-1] < sol.params.tolerance
    assert sol.iterations == len(sol.residual_history)
    assert np.all(np.isfinite(sol.V))


def test_value_dominates_initial_iterate():
    for bounds in (A, B, C, D):
        sol = solve_small(bounds)
        v0 = initial_value(sol.model, sol.grid, bounds.regime)
        assert np.all(sol.V >= v0 - 1e-12), bounds.regime


def test_no_sweep_decreases_values_from_linear_start():
    sol = solve_small(A)
    assert sol.min_increment >= -1e-12


def test_value_monotone_in_population():
    for bounds in (A, B, C, D):
        sol = solve_small(bounds)
        assert np.all(np.diff(sol.V) >= -1e-9), bounds.regime


def test_iteration_cap_flags_instead_of_raising():
    sol = solve_small(A, max_iterations=5)
    assert not sol.converged
    assert sol.iterations == 5
    assert sol.policy is not None
    assert sol.bellman_residual > 0.0


def test_policy_is_a_fixed_point_of_reconvergence():
    sol = solve_small(B)
    again = solve(sol.model, sol.bounds, sol.grid, sol.params, v0=sol.V)
    assert again.iterations <= 2
    assert again.policy == sol.policy
    assert again.V == pytest.approx(sol.V, abs=1e-8)


def test_jacobi_and_gauss_seidel_agree():
    gs = solve_small(B, h=0.4)
    jac = solve_small(B, h=0.4, update_scheme="jacobi")
    assert jac.converged
    assert jac.V == pytest.approx(gs.V, abs=1e-6)
    assert jac.policy == gs.policy


def test_sweep_orders_reach_the_same_fixed_point():
    base = solve_small(A, h=0.4)
    for order in ("lexicographic-ascending", "lexicographic-descending"):
        other = solve_small(A, h=0.4, sweep_order=order)
        assert other.V == pytest.approx(base.V, abs=1e-6)


def test_residual_history_decays():
    sol = solve_small(B, h=0.4, update_scheme="jacobi")
    hist = sol.residual_history
    assert hist[-1] < hist[0]
    # discounted value iteration contracts; allow slack for early swings
    assert np.all(hist[20:] <= hist[:-20] + 1e-15)


def test_zero_bounds_give_zero_value():
    model = logistic()
    bounds = RateBounds(seed=0.0, harvest=0.0)
    grid = build_grid(4.0, 0.2, bounds.regime, 1)
    sol = solve(model, bounds, grid)
    assert sol.converged
    assert sol.iterations == 1
    assert np.all(sol.V == 0.0)
    assert all(a.is_idle for a in sol.policy[:-1] if isinstance(a, Diffusion))


def test_value_nondecreasing_in_harvest_cap():
    lo = solve_small(RateBounds(seed=0.5, harvest=1.0))
    hi = solve_small(RateBounds(seed=0.5, harvest=3.0))
    assert np.all(hi.V >= lo.V - 1e-9)


def test_larger_seeding_cap_never_hurts():
    lo = solve_small(RateBounds(seed=0.25, harvest=3.0))
    hi = solve_small(RateBounds(seed=0.5, harvest=3.0))
    assert np.all(hi.V >= lo.V - 1e-9)


# --- preflight rejections ---------------------------------------------------


def test_dimension_mismatch_rejected():
    model = logistic()
    grid = build_grid(4.0, 0.5, A.regime, 2)
    with pytest.raises(GridMismatch):
        solve(model, A, grid)


def test_grid_regime_layer_mismatch_rejected():
    model = logistic()
    grid_plain = build_grid(4.0, 0.5, A.regime, 1)
    with pytest.raises(GridMismatch):
        solve(model, B, grid_plain)


def test_price_above_cost_rejected_before_iterating():
    model = logistic(price=3.0)
    grid = build_grid(4.0, 0.5, A.regime, 1)
    with pytest.raises(AssumptionViolation):
        solve(model, A, grid)


def test_singular_harvesting_needs_constant_price():
    model = logistic(price_slope=-0.05)
    grid = build_grid(4.0, 0.5, A.regime, 1)
    with pytest.raises(AssumptionViolation):
        solve(model, A, grid)
    # with both rates bounded the same model is fine
    grid_b = build_grid(4.0, 0.5, B.regime, 1)
    assert solve(model, B, grid_b).converged


def test_forced_boundary_actions_in_policy():
    sol_a = solve_small(A)
    assert isinstance(sol_a.policy[-1], HarvestJump)
    sol_b = solve_small(B)
    assert type(sol_b.policy[-1]).__name__ == "Reflect"
