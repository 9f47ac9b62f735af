"""Value iteration on the chain: discrete value function and policy.

The dynamic programming recursion maximizes, at every node, over the
admissible actions:

    jump action:      value = V(target) + reward_jump
    regular control:  value = exp(-delta dt) [ sum_y p(x -> y) V(y)
                                               + reward_rate dt ]

Sweeps repeat until the sup norm of successive iterates drops below the
tolerance.  Gauss-Seidel (in-place, alternating direction by default)
is the default scheme; Jacobi is available for its cleaner contraction
structure.  Starting from the value of an admissible strategy (the
immediate-total-harvest value f.x when harvesting is singular, zero
otherwise) the iterates increase monotonically, which the solver tracks
and reports.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .chain import (
    ControlAction,
    Diffusion,
    Grid,
    admissible_actions,
    diffusion_stencil,
    jump_stencil,
)
from .errors import AssumptionViolation, GridMismatch
from .model import ModelSpec, RateBounds, Regime, run_structure_checks

SWEEP_ORDERS = ("lexicographic-ascending", "lexicographic-descending", "alternating")
UPDATE_SCHEMES = ("gauss_seidel", "jacobi")

#: Relative tolerance for "equal value" in the deterministic tie-break.
TIE_TOL = 1e-12


@dataclass(frozen=True)
class SolveParams:
    """Iteration controls for :func:`solve`."""

    tolerance: float = 1e-7
    max_iterations: int = 1_000_000
    sweep_order: str = "alternating"
    update_scheme: str = "gauss_seidel"
    control_levels: int = 2

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError(f"tolerance must be > 0, got {self.tolerance}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.sweep_order not in SWEEP_ORDERS:
            raise ValueError(f"sweep_order must be one of {SWEEP_ORDERS}")
        if self.update_scheme not in UPDATE_SCHEMES:
            raise ValueError(f"update_scheme must be one of {UPDATE_SCHEMES}")
        if self.control_levels < 2:
            raise ValueError("control_levels must be >= 2")


@dataclass(eq=False)
class Solution:
    """Solved (or partially solved) problem state.

    ``policy`` holds the chosen action per node once extracted; ``V``
    may be inspected mid-iteration through :func:`bellman_value`.
    """

    model: ModelSpec
    bounds: RateBounds
    grid: Grid
    params: SolveParams
    V: np.ndarray
    policy: list[ControlAction] | None = None
    iterations: int = 0
    residual_history: np.ndarray = field(default_factory=lambda: np.zeros(0))
    converged: bool = False
    bellman_residual: float = math.nan
    min_increment: float = 0.0
    wall_time: float = 0.0

    @property
    def regime(self) -> Regime:
        return self.bounds.regime

    def rate_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-node (seeding, harvesting) rate matrices, shape (n, d)."""
        n, d = self.grid.n_nodes, self.grid.d
        seed = np.zeros((n, d))
        harvest = np.zeros((n, d))
        for idx, action in enumerate(self.policy):
            if isinstance(action, Diffusion):
                seed[idx] = action.seed
                harvest[idx] = action.harvest
        return seed, harvest

    def action_codes(self) -> np.ndarray:
        """Integer action code per node: 0 regular control, +i harvest
        jump of species i, -i seed jump, 100+i reflection (1-based i)."""
        from .chain import HarvestJump, Reflect, SeedJump

        codes = np.zeros(self.grid.n_nodes, dtype=np.int64)
        for idx, action in enumerate(self.policy):
            if isinstance(action, HarvestJump):
                codes[idx] = action.species + 1
            elif isinstance(action, SeedJump):
                codes[idx] = -(action.species + 1)
            elif isinstance(action, Reflect):
                codes[idx] = 100 + action.species + 1
        return codes


def residual(v_prev: np.ndarray, v_next: np.ndarray) -> float:
    """Sup-norm distance between successive value iterates."""
    v_prev = np.asarray(v_prev, dtype=float)
    v_next = np.asarray(v_next, dtype=float)
    if v_prev.shape != v_next.shape:
        raise GridMismatch(f"shape {v_prev.shape} != {v_next.shape}")
    if v_prev.size == 0:
        return 0.0
    return float(np.max(np.abs(v_next - v_prev)))


def bellman_value(solution: Solution, x, action: ControlAction) -> float:
    """One-step lookahead value of ``action`` at node ``x`` under the
    solution's current V."""
    model, grid = solution.model, solution.grid
    if isinstance(action, Diffusion):
        st = diffusion_stencil(model, grid, x, action, solution.regime)
        disc = math.exp(-model.discount * st.dt)
        cont = float(st.probs @ solution.V[st.targets])
        return disc * (cont + st.reward_rate * st.dt)
    st = jump_stencil(model, grid, x, action)
    return float(solution.V[st.targets[0]]) + st.reward_jump


# ---------------------------------------------------------------------------
# packed problem assembly

@dataclass(eq=False)
class _Packed:
    offsets: np.ndarray        # (n+1,) int64
    weights: np.ndarray        # (P, K) float64
    targets: np.ndarray        # (P, K) int64
    base: np.ndarray           # (P,) float64
    pair_action: list          # (P,) ControlAction refs


def _assemble(model: ModelSpec, grid: Grid, bounds: RateBounds,
              control_levels: int) -> _Packed:
    regime = bounds.regime
    nodes = grid.nodes
    n = grid.n_nodes

    node_stencils: list[list] = []
    width = 1
    total = 0
    for idx in range(n):
        x = nodes[idx]
        pairs = []
        for action in admissible_actions(grid, x, bounds, control_levels):
            if isinstance(action, Diffusion):
                st = diffusion_stencil(model, grid, x, action, regime)
            else:
                st = jump_stencil(model, grid, x, action)
            pairs.append((action, st))
            width = max(width, len(st.targets))
        node_stencils.append(pairs)
        total += len(pairs)

    offsets = np.zeros(n + 1, dtype=np.int64)
    weights = np.zeros((total, width))
    targets = np.zeros((total, width), dtype=np.int64)
    base = np.zeros(total)
    pair_action: list[ControlAction] = []

    p = 0
    delta = model.discount
    for idx in range(n):
        offsets[idx] = p
        for action, st in node_stencils[idx]:
            k = len(st.targets)
            targets[p, :] = idx          # padding targets point home
            targets[p, :k] = st.targets
            if st.dt > 0.0:
                disc = math.exp(-delta * st.dt)
                weights[p, :k] = disc * st.probs
                base[p] = disc * st.reward_rate * st.dt
            else:
                weights[p, :k] = st.probs
                base[p] = st.reward_jump
            pair_action.append(action)
            p += 1
    offsets[n] = p
    return _Packed(offsets=offsets, weights=weights, targets=targets,
                   base=base, pair_action=pair_action)


def _preflight(model: ModelSpec, bounds: RateBounds, grid: Grid):
    if model.d != grid.d or bounds.d != grid.d:
        raise GridMismatch(
            f"dimension mismatch: model d={model.d}, bounds d={bounds.d}, "
            f"grid d={grid.d}")
    regime = bounds.regime
    layers = round((grid.extent - grid.upper) / grid.h)
    if layers != (1 if regime.reflecting else 0):
        raise GridMismatch(
            f"grid extent {grid.extent} does not match regime {regime.value} "
            f"(upper bound {grid.upper})")
    if regime is Regime.BOUNDED_SEEDING and not model.price_is_constant:
        raise AssumptionViolation(
            "singular harvesting with bounded seeding requires constant prices")
    if regime is Regime.BOUNDED_HARVESTING and not model.cost_is_constant:
        raise AssumptionViolation(
            "singular seeding with bounded harvesting requires constant seeding costs")
    failed = [r for r in run_structure_checks(model, grid.nodes, grid.shape)
              if not r.passed]
    if failed:
        raise AssumptionViolation("; ".join(str(r) for r in failed))


def initial_value(model: ModelSpec, grid: Grid, regime: Regime) -> np.ndarray:
    """Starting iterate: the immediate-total-harvest value f.x when
    harvesting is singular (achievable by draining the state at t=0),
    zero otherwise (bounded rates cannot realize that value)."""
    if regime.harvest_by_jumps:
        nodes = grid.nodes
        return np.sum(model.price(nodes) * nodes, axis=1)
    return np.zeros(grid.n_nodes)


def solve(model: ModelSpec, bounds: RateBounds, grid: Grid,
          params: SolveParams | None = None,
          v0: np.ndarray | Sequence[float] | None = None) -> Solution:
    """Run the value iteration to convergence.

    Returns a Solution carrying V, the policy, and iteration
    diagnostics.  A run that hits max_iterations returns flagged
    (``converged=False``) rather than raising, so callers can inspect
    the partial value.
    """
    params = params or SolveParams()
    _preflight(model, bounds, grid)
    packed = _assemble(model, grid, bounds, params.control_levels)

    regime = bounds.regime
    if v0 is None:
        V = initial_value(model, grid, regime)
    else:
        V = np.array(v0, dtype=float).reshape(grid.n_nodes).copy()

    n = grid.n_nodes
    ascending = np.arange(n, dtype=np.int64)
    descending = ascending[::-1].copy()
    history = []
    min_increment = 0.0
    converged = False
    t0 = time.perf_counter()

    if params.update_scheme == "gauss_seidel":
        for it in range(params.max_iterations):
            if params.sweep_order == "lexicographic-ascending":
                order = ascending
            elif params.sweep_order == "lexicographic-descending":
                order = descending
            else:
                order = ascending if it % 2 == 0 else descending
            sup, min_delta = _kernels.gauss_seidel_sweep(
                V, order, packed.offsets, packed.weights, packed.targets,
                packed.base)
            history.append(sup)
            min_increment = min(min_increment, min_delta)
            if sup < params.tolerance:
                converged = True
                break
    else:
        scratch = np.empty_like(V)
        for it in range(params.max_iterations):
            sup, min_delta = _kernels.jacobi_sweep(
                V, scratch, packed.offsets, packed.weights, packed.targets,
                packed.base)
            V, scratch = scratch, V
            history.append(sup)
            min_increment = min(min_increment, min_delta)
            if sup < params.tolerance:
                converged = True
                break

    choice, bellman_res = _kernels.select_actions(
        V, packed.offsets, packed.weights, packed.targets, packed.base,
        TIE_TOL)
    policy = [packed.pair_action[c] for c in choice]

    return Solution(
        model=model, bounds=bounds, grid=grid, params=params, V=V,
        policy=policy, iterations=len(history),
        residual_history=np.asarray(history), converged=converged,
        bellman_residual=float(bellman_res), min_increment=float(min_increment),
        wall_time=time.perf_counter() - t0,
    )
