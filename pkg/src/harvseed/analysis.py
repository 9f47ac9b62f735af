"""Policy structure extraction and parameter sweeps.

Solved policies on these problems organize into a seeding region near
extinction, a no-control band, and a harvesting region near capacity.
This module turns the raw per-node actions into that description: 1D
threshold pairs (L1, L2), per-line threshold curves in 2D, coarse
region labels, and threshold tables swept over a model or bound
parameter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chain import Diffusion, Grid, HarvestJump, Reflect, SeedJump
from .errors import GridMismatch, HarvseedError, InvalidCoefficient
from .model import ModelSpec, RateBounds, Regime, build_model
from .solver import Solution, SolveParams, solve

__all__ = [
    "ThresholdReport",
    "SweepSpec",
    "SweepResult",
    "extract_thresholds_1d",
    "extract_threshold_curves_2d",
    "classify_regions",
    "sweep",
    "sweep_regime",
]


@dataclass(frozen=True)
class ThresholdReport:
    """Barrier description of a policy.

    ``L1`` is the top of the seeding region (0.0 when node 0 does not
    seed), ``L2`` the bottom of the harvesting region (the grid extent
    when no interior node harvests).  In 2D both are arrays indexed by
    the other species' lattice coordinate.  ``contiguity_warnings``
    lists node coordinates whose action breaks the three-region
    structure; such nodes are excluded from the threshold values.
    """

    L1: float | np.ndarray
    L2: float | np.ndarray
    contiguity_warnings: tuple[tuple[float, ...], ...] = ()

    @property
    def clean(self) -> bool:
        return not self.contiguity_warnings


def _node_flags(solution: Solution, species: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-node (seeding, harvesting) booleans for one species."""
    n = solution.grid.n_nodes
    seeding = np.zeros(n, dtype=bool)
    harvesting = np.zeros(n, dtype=bool)
    for idx, action in enumerate(solution.policy):
        if isinstance(action, Diffusion):
            seeding[idx] = action.seed[species] > 0
            harvesting[idx] = action.harvest[species] > 0
        elif isinstance(action, SeedJump):
            seeding[idx] = action.species == species
        elif isinstance(action, HarvestJump):
            harvesting[idx] = action.species == species
        # Reflect is a boundary device, neither seeding nor harvesting.
    return seeding, harvesting


def _line_thresholds(seeding: np.ndarray, harvesting: np.ndarray, h: float,
                     extent: float) -> tuple[float, float, list[int]]:
    """Threshold pair for one grid line.

    The last node carries the forced boundary action and is ignored
    throughout; on reflecting grids this also restricts the harvesting
    block to the economic domain [0, U].
    """
    m = len(seeding) - 1  # number of free nodes
    seeding = seeding[:m]
    harvesting = harvesting[:m]
    bad: list[int] = []

    if seeding[0]:
        k = 0
        while k + 1 < m and seeding[k + 1]:
            k += 1
    else:
        k = -1
    # Seeding happens strictly below L1, so the threshold sits on the
    # first node that does not seed; k = -1 collapses it to zero.
    L1 = (k + 1) * h
    bad.extend(np.flatnonzero(seeding[k + 1:]) + k + 1)

    if harvesting[m - 1]:
        j = m - 1
        while j > 0 and harvesting[j - 1]:
            j -= 1
        L2 = j * h
    else:
        j = m
        L2 = extent
    bad.extend(np.flatnonzero(harvesting[:j]))

    return L1, L2, sorted(set(int(b) for b in bad))


def extract_thresholds_1d(solution: Solution) -> ThresholdReport:
    """Scalar (L1, L2) for a one-dimensional solution."""
    grid = solution.grid
    if grid.d != 1:
        raise GridMismatch(f"expected a 1-dimensional solution, got d={grid.d}")
    seeding, harvesting = _node_flags(solution, 0)
    L1, L2, bad = _line_thresholds(seeding, harvesting, grid.h, grid.extent)
    warnings = tuple((grid.node_coords(i)[0],) for i in bad)
    return ThresholdReport(L1=L1, L2=L2, contiguity_warnings=warnings)


def extract_threshold_curves_2d(solution: Solution, species: int) -> ThresholdReport:
    """Per-line thresholds L1(x_other), L2(x_other) along one species axis.

    Entry t of each returned array is the threshold on the line where
    the other species sits at coordinate t*h.
    """
    grid = solution.grid
    if grid.d != 2:
        raise GridMismatch(f"expected a 2-dimensional solution, got d={grid.d}")
    if species not in (0, 1):
        raise GridMismatch(f"species must be 0 or 1, got {species}")
    other = 1 - species

    seeding, harvesting = _node_flags(solution, species)
    seeding = seeding.reshape(grid.shape)
    harvesting = harvesting.reshape(grid.shape)
    if species == 0:
        seeding, harvesting = seeding.T, harvesting.T
    # now rows are indexed by the other species' lattice coordinate

    n_lines = grid.shape[other]
    L1 = np.empty(n_lines)
    L2 = np.empty(n_lines)
    warnings: list[tuple[float, ...]] = []
    for t in range(n_lines):
        l1, l2, bad = _line_thresholds(seeding[t], harvesting[t], grid.h, grid.extent)
        L1[t] = l1
        L2[t] = l2
        for b in bad:
            coords = [0.0, 0.0]
            coords[species] = b * grid.h
            coords[other] = t * grid.h
            warnings.append(tuple(coords))
    return ThresholdReport(L1=L1, L2=L2, contiguity_warnings=tuple(warnings))


def classify_regions(solution: Solution) -> np.ndarray:
    """Per-node label: "none", or "+"-joined species terms like "s1"
    (seeding species 1) and "h2" (harvesting species 2), 1-based."""
    labels = np.empty(solution.grid.n_nodes, dtype=object)
    for idx, action in enumerate(solution.policy):
        parts = []
        if isinstance(action, Diffusion):
            for i in range(solution.grid.d):
                if action.seed[i] > 0:
                    parts.append(f"s{i + 1}")
                elif action.harvest[i] > 0:
                    parts.append(f"h{i + 1}")
        elif isinstance(action, SeedJump):
            parts.append(f"s{action.species + 1}")
        elif isinstance(action, HarvestJump):
            parts.append(f"h{action.species + 1}")
        labels[idx] = "+".join(parts) if parts else "none"
    return labels


# ---------------------------------------------------------------------------
# parameter sweeps

_SWEEP_PARAMETERS = ("lambda", "mu", "sigma")


@dataclass(frozen=True)
class SweepSpec:
    """One swept scalar parameter and the states to probe.

    ``parameter`` is "lambda" or "mu" (rate bound, applied to every
    species) or "sigma" (model coefficient; the model kind must have a
    coefficient of that name).  Values must be strictly increasing so
    warm starts walk the family monotonically.
    """

    parameter: str
    values: tuple[float, ...]
    probes: tuple[tuple[float, ...], ...] = ()

    def __post_init__(self):
        if self.parameter not in _SWEEP_PARAMETERS:
            raise InvalidCoefficient(
                "parameter",
                f"sweep parameter must be one of {_SWEEP_PARAMETERS}, got {self.parameter!r}")
        values = tuple(float(v) for v in self.values)
        if not values:
            raise InvalidCoefficient("values", "sweep needs at least one value")
        if any(b <= a for a, b in zip(values, values[1:])):
            raise InvalidCoefficient("values", f"values must be strictly increasing: {values}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probes", tuple(tuple(float(c) for c in p)
                                                 for p in self.probes))


@dataclass(frozen=True)
class SweepResult:
    """Thresholds and probe values per swept parameter value.

    ``errors[i]`` is None on clean solves; entries are filled (and the
    sweep continues) when a point fails or stops before converging.
    Failed points carry None in ``reports`` and ``probe_values``.
    """

    parameter: str
    values: tuple[float, ...]
    reports: tuple[ThresholdReport | None, ...]
    probe_values: tuple[tuple[float, ...] | None, ...]
    errors: tuple[str | None, ...]
    probes: tuple[tuple[float, ...], ...] = ()


def _substitute(model: ModelSpec, bounds: RateBounds, spec: SweepSpec,
                value: float) -> tuple[ModelSpec, RateBounds]:
    if spec.parameter == "lambda":
        return model, RateBounds(seed=(value,) * bounds.d, harvest=bounds.harvest)
    if spec.parameter == "mu":
        return model, RateBounds(seed=bounds.seed, harvest=(value,) * bounds.d)
    if "sigma" not in model.coefficients:
        raise InvalidCoefficient(
            "sigma", f"model kind {model.kind!r} has no coefficient named 'sigma'")
    rebuilt = build_model(model.kind, {**model.coefficients, "sigma": value},
                          price=model.price_affine[0], seed_cost=model.cost_affine[0],
                          discount=model.discount,
                          price_slope=model.price_affine[1],
                          cost_slope=model.cost_affine[1])
    return rebuilt, bounds


def sweep_regime(model: ModelSpec, bounds: RateBounds,
                 spec: SweepSpec) -> Regime:
    """Regime shared by every point of the swept family.

    The solve grid must be built for this regime, which can differ
    from the base bounds' regime (a finite mu range under an unbounded
    base, say).  Raises GridMismatch when the values straddle regimes,
    since no single grid extent fits such a family.
    """
    regimes = {_substitute(model, bounds, spec, v)[1].regime
               for v in spec.values}
    if len(regimes) > 1:
        raise GridMismatch(
            f"sweep values straddle regimes {sorted(r.value for r in regimes)}; "
            "split the sweep so one grid extent fits all points")
    return next(iter(regimes))


def sweep(model: ModelSpec, bounds: RateBounds, grid: Grid,
          params: SolveParams | None, spec: SweepSpec) -> SweepResult:
    """Solve the problem family over ``spec.values``, warm-starting each
    point from the previous value function.

    Per-point failures are recorded and the sweep moves on, so a bad
    corner of a parameter range does not discard the rest of the table.
    """
    if spec.parameter == "sigma" and "sigma" not in model.coefficients:
        raise InvalidCoefficient(
            "sigma", f"model kind {model.kind!r} has no coefficient named 'sigma'")
    sweep_regime(model, bounds, spec)
    probe_idx = [grid.coords_index(p) for p in spec.probes]

    reports: list[ThresholdReport | None] = []
    probe_values: list[tuple[float, ...] | None] = []
    errors: list[str | None] = []
    v0 = None
    for value in spec.values:
        try:
            point_model, point_bounds = _substitute(model, bounds, spec, value)
            sol = solve(point_model, point_bounds, grid, params, v0=v0)
        except HarvseedError as exc:
            reports.append(None)
            probe_values.append(None)
            errors.append(f"{type(exc).__name__}: {exc}")
            continue
        v0 = sol.V
        reports.append(extract_thresholds_1d(sol) if grid.d == 1
                       else extract_threshold_curves_2d(sol, 0))
        probe_values.append(tuple(float(sol.V[i]) for i in probe_idx))
        errors.append(None if sol.converged else
                      f"not converged after {sol.iterations} sweeps "
                      f"(residual {sol.residual_history[-1]:.3e})")
    return SweepResult(parameter=spec.parameter, values=spec.values,
                       reports=tuple(reports), probe_values=tuple(probe_values),
                       errors=tuple(errors), probes=spec.probes)
