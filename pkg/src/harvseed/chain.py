"""Lattice state space and locally consistent transition stencils.

The controlled diffusion is approximated by a Markov chain on the
lattice {0, h, 2h, ...}^d.  For a state x and an effective drift
v = b(x) + c - r (seeding rate c, harvesting rate r), one discrete step
follows the transition probabilities

    p(x -> x +/- h e_i)        = (a_ii/2 - sum_{j!=i} |a_ij|/2 + h v_i^{+/-}) / Q_h
    p(x -> x + h e_i + h e_j)  = a_ij^+ / (2 Q_h)    (same-sign diagonal moves)
    p(x -> x + h e_i - h e_j)  = a_ij^- / (2 Q_h)    (opposite-sign diagonal moves)
    p(x -> x)                  = h / Q_h

with the normalizer Q_h = sum_i a_ii - sum_{i != j} |a_ij|/2 + h sum_i |v_i| + h
and the interpolation interval dt = h^2 / Q_h.  The +h term keeps Q_h
positive even at the degenerate origin; diagonal dominance of a(x)
keeps every probability nonnegative.  One such step represents dt units
of continuous time; jump steps (harvest, seed, reflect) move the state
by exactly h in one coordinate and represent zero time.

Regimes with singular harvesting truncate the lattice at U and force a
harvest jump on the upper boundary; regimes with bounded harvesting
keep one overshoot layer at U+h and force a costless reflection there.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import (
    DimensionTooLarge,
    GridMismatch,
    JumpOutOfGrid,
    NegativeProbability,
    NeighborOutOfGrid,
)
from .model import ModelSpec, RateBounds, Regime

_COORD_RTOL = 1e-9


@dataclass(frozen=True)
class Grid:
    """Uniform lattice over [0, extent]^d with spacing h.

    ``upper`` is the economic domain bound U; ``extent`` equals U, or
    U+h when the regime keeps a reflecting overshoot layer.  Nodes are
    indexed lexicographically over multi-indices (k_1, ..., k_d), the
    first coordinate most significant.
    """

    h: float
    upper: float
    d: int
    extent: float
    shape: tuple[int, ...]

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))

    @cached_property
    def nodes(self) -> np.ndarray:
        """All node coordinates, shape (n_nodes, d), in index order."""
        axes = [np.arange(m) * self.h for m in self.shape]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1).reshape(-1, self.d)

    def multi_index(self, x) -> tuple[int, ...]:
        """Multi-index of a node, validating that x lies on the lattice."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d,):
            raise GridMismatch(f"state {x!r} does not have dimension {self.d}")
        k = np.rint(x / self.h).astype(int)
        if np.any(np.abs(k * self.h - x) > _COORD_RTOL * max(1.0, self.extent)):
            raise GridMismatch(f"state {x} is not a grid node (h={self.h})")
        if np.any(k < 0) or np.any(k >= np.asarray(self.shape)):
            raise GridMismatch(f"state {x} lies outside [0, {self.extent}]^{self.d}")
        return tuple(int(v) for v in k)

    def coords_index(self, x) -> int:
        """Flat node index of a lattice point."""
        return int(np.ravel_multi_index(self.multi_index(x), self.shape))

    def node_coords(self, index: int) -> np.ndarray:
        """Coordinates of the node with the given flat index."""
        return np.array(np.unravel_index(index, self.shape), dtype=float) * self.h


def build_grid(U: float, h: float, regime: Regime, d: int,
               max_nodes: int = 10_000_000) -> Grid:
    """Build the lattice for a domain bound U and spacing h.

    U is rounded up to the next multiple of h (with a warning) when it
    is not one already.
    """
    if h <= 0 or U <= 0 or d < 1:
        raise ValueError(f"need U>0, h>0, d>=1; got U={U}, h={h}, d={d}")
    cells = U / h
    if abs(cells - round(cells)) <= _COORD_RTOL * max(1.0, cells):
        n_up = int(round(cells))
    else:
        n_up = int(math.ceil(cells))
        warnings.warn(
            f"U={U} is not a multiple of h={h}; domain bound rounded up to {n_up * h:g}",
            stacklevel=2,
        )
    n_extent = n_up + (1 if regime.reflecting else 0)
    m = n_extent + 1
    if m ** d > max_nodes:
        raise DimensionTooLarge(
            f"grid would have {m ** d} nodes, above the cap of {max_nodes}")
    return Grid(h=float(h), upper=n_up * h, d=int(d), extent=n_extent * h,
                shape=(m,) * d)


# ---------------------------------------------------------------------------
# control actions

def _as_rates(values, d: int) -> tuple[float, ...]:
    rates = tuple(float(v) for v in np.broadcast_to(np.asarray(values, float), (d,)))
    if any(not math.isfinite(v) or v < 0 for v in rates):
        raise ValueError(f"rates must be finite and >= 0, got {rates}")
    return rates


@dataclass(frozen=True)
class Diffusion:
    """A regular-control step: seed at rates ``seed``, harvest at
    ``harvest``.  Per species at most one of the two is nonzero (running
    both simultaneously burns money and is never optimal)."""

    seed: tuple[float, ...]
    harvest: tuple[float, ...]

    def __post_init__(self):
        seed_arr = np.atleast_1d(np.asarray(self.seed, dtype=float))
        harvest_arr = np.atleast_1d(np.asarray(self.harvest, dtype=float))
        d = max(seed_arr.shape[0], harvest_arr.shape[0])
        seed = _as_rates(seed_arr, d)
        harvest = _as_rates(harvest_arr, d)
        if any(c > 0 and r > 0 for c, r in zip(seed, harvest)):
            raise ValueError(
                f"simultaneous seeding and harvesting of one species: {seed}, {harvest}")
        object.__setattr__(self, "seed", seed)
        object.__setattr__(self, "harvest", harvest)

    @classmethod
    def from_net(cls, net) -> "Diffusion":
        """Build from a signed rate vector q = seed - harvest."""
        q = np.atleast_1d(np.asarray(net, dtype=float))
        return cls(seed=tuple(np.maximum(q, 0.0)), harvest=tuple(np.maximum(-q, 0.0)))

    @property
    def net(self) -> tuple[float, ...]:
        return tuple(c - r for c, r in zip(self.seed, self.harvest))

    @property
    def is_idle(self) -> bool:
        return not any(self.seed) and not any(self.harvest)


@dataclass(frozen=True)
class HarvestJump:
    """Instantly harvest one lattice unit of a species (zero-based index)."""
    species: int


@dataclass(frozen=True)
class SeedJump:
    """Instantly seed one lattice unit of a species (zero-based index)."""
    species: int


@dataclass(frozen=True)
class Reflect:
    """Costless push-back from the overshoot layer (zero-based index)."""
    species: int


ControlAction = Diffusion | HarvestJump | SeedJump | Reflect


def action_priority(action: ControlAction):
    """Sort key implementing the deterministic tie-break order.

    Idle diffusion first, then diffusions with fewer active species,
    preferring lower species indices and harvesting over seeding, then
    jumps in the same species/type order.  Ties in the Bellman
    maximization resolve to the earliest action under this key, which
    biases indifferent nodes toward inaction.
    """
    if isinstance(action, Diffusion):
        q = action.net
        nnz = sum(1 for v in q if v != 0.0)
        if nnz == 0:
            return (0,)
        codes = tuple(0 if v < 0 else (1 if v > 0 else 2) for v in q)
        return (1, nnz, codes, action.harvest, action.seed)
    if isinstance(action, HarvestJump):
        return (2, action.species, 0)
    if isinstance(action, SeedJump):
        return (2, action.species, 1)
    return (3, action.species, 0)


# ---------------------------------------------------------------------------
# stencils

@dataclass(eq=False)
class Stencil:
    """One (state, action) transition: targets, probabilities, the time
    interval the step represents, and its rewards.

    ``reward_rate`` is the running reward density f.r - g.c (harvesting
    earns, seeding costs) and applies over ``dt``; ``reward_jump`` is
    the lump reward of a jump step.
    """

    targets: np.ndarray
    probs: np.ndarray
    dt: float
    reward_rate: float = 0.0
    reward_jump: float = 0.0

    @property
    def entries(self) -> list[tuple[int, float]]:
        return list(zip(self.targets.tolist(), self.probs.tolist()))


def diffusion_stencil(model: ModelSpec, grid: Grid, x, action: Diffusion,
                      regime: Regime) -> Stencil:
    """Transition stencil of a regular-control step at an interior node.

    Raises NegativeProbability where the covariance is not diagonally
    dominant, and NeighborOutOfGrid if called on the forced-action
    boundary.  A target that would cross the lower boundary (possible
    only for models whose drift or covariance does not vanish for an
    extinct species) is projected onto it, merging probabilities.
    """
    x = np.asarray(x, dtype=float)
    k = np.array(grid.multi_index(x))
    m = np.asarray(grid.shape)
    if np.any(k == m - 1):
        raise NeighborOutOfGrid(
            f"diffusion step at boundary node {x}; the forced action applies there")

    c = np.asarray(_as_rates(action.seed, grid.d))
    r = np.asarray(_as_rates(action.harvest, grid.d))
    if regime.harvest_by_jumps and np.any(r > 0):
        raise ValueError(f"harvest rates are not regular controls in {regime}")
    if regime.seed_by_jumps and np.any(c > 0):
        raise ValueError(f"seeding rates are not regular controls in {regime}")

    h = grid.h
    a = np.atleast_2d(model.diff_cov(x))
    diag = np.diagonal(a).astype(float).copy()
    off_row = np.sum(np.abs(a), axis=1) - np.abs(diag)
    v = np.atleast_1d(model.drift(x)).astype(float) + c - r
    Q = diag.sum() - off_row.sum() / 2.0 + h * np.abs(v).sum() + h

    acc: dict[int, float] = {}

    def add(kvec: np.ndarray, p: float, what: str):
        if p < -1e-12:
            raise NegativeProbability(
                f"{what} at x={x}, action {action}: p={p:.3g}")
        if p <= 0.0:
            return
        if np.any(kvec > m - 1):
            raise NeighborOutOfGrid(
                f"{what} at x={x} leaves the grid upward; forced rule missing")
        kk = np.maximum(kvec, 0)  # project lower-boundary crossings
        idx = int(np.ravel_multi_index(tuple(kk), grid.shape))
        acc[idx] = acc.get(idx, 0.0) + p

    eye = np.eye(grid.d, dtype=int)
    for i in range(grid.d):
        base = diag[i] / 2.0 - off_row[i] / 2.0
        add(k + eye[i], (base + h * max(v[i], 0.0)) / Q, f"up move {i}")
        add(k - eye[i], (base + h * max(-v[i], 0.0)) / Q, f"down move {i}")
    for i in range(grid.d):
        for j in range(i + 1, grid.d):
            if a[i, j] == 0.0:
                continue
            p = abs(a[i, j]) / (2.0 * Q)
            if a[i, j] > 0.0:
                add(k + eye[i] + eye[j], p, f"diag move +{i}+{j}")
                add(k - eye[i] - eye[j], p, f"diag move -{i}-{j}")
            else:
                add(k + eye[i] - eye[j], p, f"diag move +{i}-{j}")
                add(k - eye[i] + eye[j], p, f"diag move -{i}+{j}")
    add(k, h / Q, "self transition")

    f = np.atleast_1d(model.price(x))
    g = np.atleast_1d(model.seed_cost(x))
    return Stencil(
        targets=np.fromiter(acc.keys(), dtype=np.int64, count=len(acc)),
        probs=np.fromiter(acc.values(), dtype=float, count=len(acc)),
        dt=h * h / Q,
        reward_rate=float(f @ r - g @ c),
    )


def jump_stencil(model: ModelSpec, grid: Grid, x,
                 action: HarvestJump | SeedJump | Reflect) -> Stencil:
    """Deterministic one-unit jump stencil (dt = 0).

    Harvest jumps earn f_i(x) h, seed jumps cost g_i(x) h, reflections
    are free; f and g are evaluated at the pre-jump state.
    """
    x = np.asarray(x, dtype=float)
    k = np.array(grid.multi_index(x))
    i = action.species
    if not 0 <= i < grid.d:
        raise ValueError(f"species index {i} out of range for d={grid.d}")
    if isinstance(action, SeedJump):
        if k[i] + 1 >= grid.shape[i]:
            raise JumpOutOfGrid(f"seed jump at x={x} would leave [0, {grid.extent}]")
        k[i] += 1
        reward = -float(np.atleast_1d(model.seed_cost(x))[i]) * grid.h
    else:
        if k[i] < 1:
            raise JumpOutOfGrid(f"jump down at x={x} would leave the lattice")
        k[i] -= 1
        reward = (float(np.atleast_1d(model.price(x))[i]) * grid.h
                  if isinstance(action, HarvestJump) else 0.0)
    idx = int(np.ravel_multi_index(tuple(k), grid.shape))
    return Stencil(targets=np.array([idx], dtype=np.int64),
                   probs=np.array([1.0]), dt=0.0, reward_jump=reward)


# ---------------------------------------------------------------------------
# admissible action sets

def rate_levels(bound: float, control_levels: int) -> np.ndarray:
    """Admissible rate levels for one species: 0, the bound, and any
    requested equispaced interior levels."""
    if not math.isfinite(bound) or bound == 0.0:
        return np.zeros(1)
    return np.linspace(0.0, bound, max(control_levels, 2))


def admissible_actions(grid: Grid, x, bounds: RateBounds,
                       control_levels: int = 2) -> list[ControlAction]:
    """All actions available at a node, in tie-break priority order.

    On the upper boundary (any coordinate at the extent) exactly one
    forced action is returned: a harvest jump when harvesting is
    singular, a reflection otherwise, on the lowest saturated species.
    Elsewhere: the Cartesian product of per-species rate levels, plus
    whichever jumps the regime admits.  Positive harvest rates are
    dropped for a species sitting at zero, where a down move would leave
    the lattice (an extinct species cannot be harvested).
    """
    regime = bounds.regime
    k = grid.multi_index(x)
    m = grid.shape
    saturated = [j for j in range(grid.d) if k[j] == m[j] - 1]
    if saturated:
        j = min(saturated)
        return [HarvestJump(j) if regime.harvest_by_jumps else Reflect(j)]

    per_species = []
    for i in range(grid.d):
        levels = {0.0}
        if bounds.seed_bounded:
            levels.update(rate_levels(bounds.seed[i], control_levels).tolist())
        if bounds.harvest_bounded and k[i] > 0:
            levels.update((-rate_levels(bounds.harvest[i], control_levels)).tolist())
        per_species.append(sorted(levels))

    actions: list[ControlAction] = [
        Diffusion.from_net(q) for q in itertools.product(*per_species)
    ]
    if regime.harvest_by_jumps:
        actions.extend(HarvestJump(i) for i in range(grid.d) if k[i] >= 1)
    if regime.seed_by_jumps:
        actions.extend(SeedJump(i) for i in range(grid.d) if k[i] + 1 < m[i])
    actions.sort(key=action_priority)
    return actions
