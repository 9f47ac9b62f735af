"""Optimal harvesting and seeding of stochastic populations.

The package approximates a controlled diffusion on [0, U]^d by a
locally consistent Markov chain on a uniform lattice, solves the
resulting dynamic program by value iteration, and turns the fixed
point into threshold policies, parameter sweeps, and Monte Carlo
cross-checks.

Typical use::

    from harvseed import build_model, RateBounds, build_grid, solve

    model = build_model("logistic", {"b1": 3, "b2": 2, "sigma": 2},
                        price=0.5, seed_cost=2.5, discount=0.05)
    bounds = RateBounds(seed=0.5, harvest=float("inf"))
    grid = build_grid(U=4.0, h=0.01, regime=bounds.regime, d=1)
    solution = solve(model, bounds, grid)
"""

from .analysis import (
    SweepResult,
    SweepSpec,
    ThresholdReport,
    classify_regions,
    extract_threshold_curves_2d,
    extract_thresholds_1d,
    sweep,
    sweep_regime,
)
from .chain import (
    Diffusion,
    Grid,
    HarvestJump,
    Reflect,
    SeedJump,
    Stencil,
    admissible_actions,
    build_grid,
    diffusion_stencil,
    jump_stencil,
    rate_levels,
)
from .config import RunConfig, parse_config, parse_config_text
from .errors import (
    AssumptionViolation,
    ConfigParseError,
    DimensionTooLarge,
    GridMismatch,
    HarvseedError,
    InvalidCoefficient,
    JumpOutOfGrid,
    NegativeProbability,
    NeighborOutOfGrid,
    NonConstantPrice,
    NonFiniteState,
    NonPositiveDiscount,
    NotConverged,
)
from .io import (
    read_solution,
    write_manifest,
    write_solution,
    write_sweep,
    write_verify_report,
)
from .model import (
    GrowthScan,
    ModelSpec,
    RateBounds,
    Regime,
    UNBOUNDED,
    build_model,
    check_growth_condition,
    competition_model,
    logistic_model,
    predator_prey_model,
    run_structure_checks,
)
from .simulate import (
    NodePolicy,
    SimConfig,
    SimResult,
    VerifyReport,
    estimate_performance,
    extinction_policy,
    simulate_path,
    verify,
)
from .solver import SolveParams, Solution, bellman_value, initial_value, solve

__version__ = "0.1.0"

__all__ = [
    "AssumptionViolation",
    "ConfigParseError",
    "Diffusion",
    "DimensionTooLarge",
    "Grid",
    "GridMismatch",
    "GrowthScan",
    "HarvestJump",
    "HarvseedError",
    "InvalidCoefficient",
    "JumpOutOfGrid",
    "ModelSpec",
    "NegativeProbability",
    "NeighborOutOfGrid",
    "NodePolicy",
    "NonConstantPrice",
    "NonFiniteState",
    "NonPositiveDiscount",
    "NotConverged",
    "RateBounds",
    "Reflect",
    "Regime",
    "RunConfig",
    "SeedJump",
    "SimConfig",
    "SimResult",
    "SolveParams",
    "Solution",
    "Stencil",
    "SweepResult",
    "SweepSpec",
    "ThresholdReport",
    "UNBOUNDED",
    "VerifyReport",
    "admissible_actions",
    "bellman_value",
    "build_grid",
    "build_model",
    "check_growth_condition",
    "classify_regions",
    "competition_model",
    "diffusion_stencil",
    "estimate_performance",
    "extinction_policy",
    "extract_threshold_curves_2d",
    "extract_thresholds_1d",
    "initial_value",
    "jump_stencil",
    "logistic_model",
    "parse_config",
    "parse_config_text",
    "predator_prey_model",
    "rate_levels",
    "read_solution",
    "run_structure_checks",
    "simulate_path",
    "solve",
    "sweep",
    "sweep_regime",
    "verify",
    "write_manifest",
    "write_solution",
    "write_sweep",
    "write_verify_report",
]
