"""Monte Carlo verification of solved policies.

Simulates the controlled population SDE under a node policy with
Euler-Maruyama stepping and estimates the discounted reward functional,
so a solved value function can be cross-checked against an estimator
that shares none of the lattice machinery.

Built-in model families run through a compiled lockstep kernel; custom
models fall back to a plain-Python path loop that obtains the noise
coefficient as the symmetric PSD square root of the covariance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._kernels import P_DIFFUSION, P_HARVEST, P_REFLECT, P_SEED
from .chain import ControlAction, Diffusion, Grid, HarvestJump, Reflect, SeedJump
from .errors import GridMismatch, InvalidCoefficient, NonFiniteState
from .model import MODEL_COEFFICIENTS, ModelSpec, Regime
from .solver import Solution

__all__ = [
    "SimConfig",
    "SimResult",
    "NodePolicy",
    "extinction_policy",
    "path_seeds",
    "simulate_path",
    "estimate_performance",
    "verify",
    "VerifyReport",
]

_KIND_CODES = {
    "logistic": _kernels.KIND_LOGISTIC,
    "competition": _kernels.KIND_COMPETITION,
    "predator_prey": _kernels.KIND_PREDATOR_PREY,
}

#: default relative size of the agreement slack in :func:`verify`
DEFAULT_SLACK_REL = 0.05


@dataclass(frozen=True)
class SimConfig:
    """Simulation protocol.

    ``dt`` defaults to h^2 (matching the chain's interpolation-interval
    scale) and ``horizon`` to the smallest T whose truncation-tail
    bound is under 0.1% of the reward scale; both are resolved against
    the policy's grid when a run starts.  ``lookup`` names the policy
    lookup rule; only nearest-node lookup is defined.
    """

    dt: float | None = None
    horizon: float | None = None
    paths: int = 10_000
    seed: int = 0
    lookup: str = "nearest"

    def __post_init__(self):
        if self.dt is not None and not (self.dt > 0 and math.isfinite(self.dt)):
            raise InvalidCoefficient("dt", f"must be a finite positive step, got {self.dt}")
        if self.horizon is not None and not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise InvalidCoefficient("horizon", f"must be finite and > 0, got {self.horizon}")
        if self.paths < 1:
            raise InvalidCoefficient("paths", f"need at least one path, got {self.paths}")
        if self.lookup != "nearest":
            raise InvalidCoefficient("lookup", f"unknown policy lookup rule {self.lookup!r}")


@dataclass(frozen=True)
class SimResult:
    """Estimate of the discounted reward functional.

    ``tail_bound`` bounds what the horizon truncation can have cut off
    (recomputed from the actual run configuration).  ``extinction_
    fraction`` counts paths that entered [0, h)^d and never left it.
    ``cap_hits`` counts paths whose jump chain hit the livelock cap at
    least once; nonzero values mean the policy or grid is suspect.
    """

    mean: float
    stderr: float
    tail_bound: float
    extinction_fraction: float
    paths: int
    cap_hits: int = 0


@dataclass(eq=False)
class NodePolicy:
    """Per-node control choice in flat arrays, the form the simulation
    engines consume.  ``kind`` holds the policy codes 0 (rates), 1
    (harvest jump), 2 (seed jump), 3 (reflect); ``species`` is -1 where
    unused."""

    grid: Grid
    kind: np.ndarray
    species: np.ndarray
    seed_rates: np.ndarray
    harvest_rates: np.ndarray

    @classmethod
    def from_actions(cls, grid: Grid, actions) -> "NodePolicy":
        n, d = grid.n_nodes, grid.d
        if len(actions) != n:
            raise GridMismatch(f"policy has {len(actions)} entries for {n} nodes")
        kind = np.zeros(n, dtype=np.int8)
        species = np.full(n, -1, dtype=np.int16)
        seed_rates = np.zeros((n, d))
        harvest_rates = np.zeros((n, d))
        for idx, action in enumerate(actions):
            if isinstance(action, Diffusion):
                seed_rates[idx] = action.seed
                harvest_rates[idx] = action.harvest
            elif isinstance(action, HarvestJump):
                kind[idx] = P_HARVEST
                species[idx] = action.species
            elif isinstance(action, SeedJump):
                kind[idx] = P_SEED
                species[idx] = action.species
            elif isinstance(action, Reflect):
                kind[idx] = P_REFLECT
                species[idx] = action.species
            else:
                raise GridMismatch(f"unknown action {action!r} at node {idx}")
        return cls(grid=grid, kind=kind, species=species,
                   seed_rates=seed_rates, harvest_rates=harvest_rates)

    @classmethod
    def from_solution(cls, solution: Solution) -> "NodePolicy":
        return cls.from_actions(solution.grid, solution.policy)


def extinction_policy(grid: Grid) -> NodePolicy:
    """Harvest-everything policy: jump-harvest the first species that
    still has stock; do nothing at the origin."""
    actions: list[ControlAction] = []
    for idx in range(grid.n_nodes):
        k = np.unravel_index(idx, grid.shape)
        sp = next((i for i in range(grid.d) if k[i] >= 1), None)
        if sp is None:
            actions.append(Diffusion(seed=(0.0,) * grid.d, harvest=(0.0,) * grid.d))
        else:
            actions.append(HarvestJump(sp))
    return NodePolicy.from_actions(grid, actions)


def path_seeds(seed: int, n: int) -> np.ndarray:
    """Deterministic per-path sub-seeds spawned from one master seed."""
    children = np.random.SeedSequence(seed).spawn(n)
    return np.array([c.generate_state(1, np.uint32)[0] for c in children],
                    dtype=np.int64)


# ---------------------------------------------------------------------------
# protocol resolution and tail accounting

def _econ_arrays(model: ModelSpec):
    if model.price_affine is None or model.cost_affine is None:
        return None
    f_level = np.asarray(model.price_affine[0], dtype=float)
    f_slope = np.asarray(model.price_affine[1], dtype=float)
    g_level = np.asarray(model.cost_affine[0], dtype=float)
    g_slope = np.asarray(model.cost_affine[1], dtype=float)
    return f_level, f_slope, g_level, g_slope


def _reward_caps(model: ModelSpec, policy: NodePolicy) -> tuple[float, float]:
    """(stock term, sustainable-flux cap) of the truncation-tail bound.

    The flux cap combines the policy's largest running harvest reward
    with the largest price-weighted inflow (growth plus seeding), which
    also bounds what repeated jump harvesting can extract per unit
    time.
    """
    grid = policy.grid
    nodes = grid.nodes
    prices = np.asarray(model.price(nodes), dtype=float)
    f_max = float(prices.max())
    stock = f_max * grid.extent * grid.d
    run_cap = float((prices * policy.harvest_rates).sum(axis=1).max())
    inflow = np.maximum(np.asarray(model.drift(nodes), dtype=float)
                        + policy.seed_rates, 0.0)
    flux = run_cap + f_max * float(inflow.sum(axis=1).max())
    return stock, flux


def _tail_bound(model: ModelSpec, stock: float, flux: float, T: float) -> float:
    return math.exp(-model.discount * T) * (stock + flux / model.discount)


def _resolve_protocol(model: ModelSpec, policy: NodePolicy,
                      config: SimConfig) -> tuple[float, int, float]:
    """Concrete (dt, n_steps, tail bound) for a run."""
    h = policy.grid.h
    dt = config.dt if config.dt is not None else h * h
    stock, flux = _reward_caps(model, policy)
    if config.horizon is not None:
        T = config.horizon
    else:
        scale = max(1.0, stock)
        total = stock + flux / model.discount
        T = math.log(max(total / (1e-3 * scale), 2.0)) / model.discount
    n_steps = max(1, math.ceil(T / dt - 1e-9))
    bound = _tail_bound(model, stock, flux, n_steps * dt)
    return dt, n_steps, bound


# ---------------------------------------------------------------------------
# engines

#: Euler steps per kernel chunk; sized so the normals buffer stays in
#: the tens of megabytes at the default path count.
_CHUNK_STEPS = 1024


def _path_generators(seeds: np.ndarray) -> list[np.random.Generator]:
    return [np.random.Generator(np.random.SFC64(int(s))) for s in seeds]


def _run_kernel(model: ModelSpec, policy: NodePolicy, x0: np.ndarray,
                dt: float, n_steps: int, seeds: np.ndarray):
    """Chunked lockstep driver: numpy fills per-path normal buffers, the
    compiled kernel advances all paths through each chunk."""
    grid = policy.grid
    d = grid.d
    econ = _econ_arrays(model)
    coeffs = np.array([model.coefficients[k] for k in MODEL_COEFFICIENTS[model.kind]],
                      dtype=float)
    shape = np.asarray(grid.shape, dtype=np.int64)
    strides = np.ones(d, dtype=np.int64)
    for i in range(d - 2, -1, -1):
        strides[i] = strides[i + 1] * shape[i + 1]

    n = seeds.shape[0]
    rngs = _path_generators(seeds)
    chunk = min(_CHUNK_STEPS, n_steps)
    normals = np.empty((n, chunk * d))
    X = np.tile(x0, (n, 1))
    disc = np.ones(n)
    total = np.zeros(n)
    in_box_step = np.full(n, -1, dtype=np.int64)
    status = np.zeros(n, dtype=np.uint8)
    cap_hits = np.zeros(n, dtype=np.uint8)
    fail_step = np.full(n, -1, dtype=np.int64)

    gamma = math.exp(-model.discount * dt)
    sqrt_dt = math.sqrt(dt)
    jump_cap = int(round(grid.extent / grid.h))

    done = 0
    while done < n_steps:
        m = min(chunk, n_steps - done)
        view = normals[:, :m * d]
        for p in range(n):
            rngs[p].standard_normal(out=view[p])
        _kernels.simulate_chunk(
            _KIND_CODES[model.kind], coeffs, d, econ[0], econ[1], econ[2], econ[3],
            gamma, dt, sqrt_dt, grid.h, grid.extent, shape, strides,
            policy.kind, policy.species, policy.seed_rates, policy.harvest_rates,
            jump_cap, view, done, m,
            X, disc, total, in_box_step, status, cap_hits, fail_step)
        done += m

    failed = status != 0
    rewards = np.where(failed, np.nan, total)
    extinct = ((~failed) & (in_box_step >= 0)).astype(np.uint8)
    fail_times = np.where(failed, (fail_step + 1) * dt, np.nan)
    return rewards, extinct, cap_hits, fail_times


def _psd_sqrt(a: np.ndarray) -> np.ndarray:
    w, q = np.linalg.eigh(a)
    w = np.where(w > 1e-12, w, 0.0)
    return (q * np.sqrt(w)) @ q.T

def _run_python(model: ModelSpec, policy: NodePolicy, x0: np.ndarray,
                dt: float, n_steps: int, seeds: np.ndarray,
                trace: list | None = None):
    """Reference engine: one numpy Generator per path, callback dynamics,
    PSD square root of the covariance each step.  Slow but general."""
    grid = policy.grid
    d = grid.d
    h = grid.h
    extent = grid.extent
    gamma = math.exp(-model.discount * dt)
    sqrt_dt = math.sqrt(dt)
    jump_cap = int(round(extent / h))

    n = seeds.shape[0]
    rewards = np.empty(n)
    extinct = np.zeros(n, dtype=np.uint8)
    cap_hits = np.zeros(n, dtype=np.uint8)
    fail_times = np.full(n, np.nan)

    for p in range(n):
        rng = np.random.Generator(np.random.SFC64(int(seeds[p])))
        x = x0.astype(float).copy()
        disc = 1.0
        total = 0.0
        in_box_since = -1.0
        failed = False
        t = 0.0
        for step in range(n_steps):
            loops = 0
            while loops < jump_cap:
                node = _nearest(x, grid)
                code = policy.kind[node]
                if code == P_DIFFUSION:
                    break
                sp = policy.species[node]
                if code == P_HARVEST:
                    total += disc * float(model.price(x)[sp]) * h
                    x[sp] -= h
                elif code == P_SEED:
                    total -= disc * float(model.seed_cost(x)[sp]) * h
                    x[sp] += h
                else:
                    x[sp] -= h
                x[sp] = min(max(x[sp], 0.0), extent)
                loops += 1
            if loops >= jump_cap:
                cap_hits[p] = 1

            node = _nearest(x, grid)
            c = policy.seed_rates[node]
            r = policy.harvest_rates[node]
            total += disc * float(model.price(x) @ r - model.seed_cost(x) @ c) * dt
            if trace is not None:
                trace.append((t, x.copy(), _policy_code(policy, node), total))

            drift = np.asarray(model.drift(x), dtype=float)
            noise = _psd_sqrt(np.asarray(model.diff_cov(x), dtype=float))
            x = x + (drift + c - r) * dt + noise @ rng.standard_normal(d) * sqrt_dt
            t = (step + 1) * dt
            if not np.all(np.isfinite(x)):
                failed = True
                fail_times[p] = t
                break
            np.clip(x, 0.0, extent, out=x)

            if np.all(x < h):
                if in_box_since < 0.0:
                    in_box_since = t
            else:
                in_box_since = -1.0
            disc *= gamma

        rewards[p] = np.nan if failed else total
        extinct[p] = 0 if failed else int(in_box_since >= 0.0)
    return rewards, extinct, cap_hits, fail_times


def _nearest(x: np.ndarray, grid: Grid) -> int:
    # same half-up rounding as the compiled kernel (states are >= 0)
    k = np.minimum((x / grid.h + 0.5).astype(int), np.asarray(grid.shape) - 1)
    return int(np.ravel_multi_index(tuple(k), grid.shape))


def _policy_code(policy: NodePolicy, node: int) -> int:
    code = int(policy.kind[node])
    sp = int(policy.species[node]) + 1
    if code == P_HARVEST:
        return sp
    if code == P_SEED:
        return -sp
    if code == P_REFLECT:
        return 100 + sp
    return 0


def _check_regime(regime: Regime, policy: NodePolicy):
    reflecting = policy.grid.extent > policy.grid.upper
    if regime.reflecting != reflecting:
        raise GridMismatch(
            f"regime {regime.value} expects extent "
            f"{'U+h' if regime.reflecting else 'U'}, but the policy grid has "
            f"extent {policy.grid.extent} over U={policy.grid.upper}")


def _run_paths(model, policy, x0, dt, n_steps, seeds, trace=None):
    if trace is None and model.kind in _KIND_CODES and _econ_arrays(model) is not None:
        return _run_kernel(model, policy, x0, dt, n_steps, seeds)
    return _run_python(model, policy, x0, dt, n_steps, seeds, trace)


# ---------------------------------------------------------------------------
# public operations

def simulate_path(model: ModelSpec, regime: Regime, policy: NodePolicy, x0,
                  config: SimConfig, path_seed: int,
                  trace: list | None = None) -> float:
    """Discounted reward of one Euler path.

    ``path_seed`` should come from :func:`path_seeds` so single paths
    reproduce the corresponding member of an estimator batch.  Passing
    ``trace`` (a list) records (time, state, action code, cumulative
    reward) at every step through the reference engine.
    """
    _check_regime(regime, policy)
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (policy.grid.d,):
        raise GridMismatch(f"x0 {x0!r} does not have dimension {policy.grid.d}")
    if np.any(x0 < 0) or np.any(x0 > policy.grid.extent):
        raise GridMismatch(f"x0 {x0} outside [0, {policy.grid.extent}]^{policy.grid.d}")
    dt, n_steps, _ = _resolve_protocol(model, policy, config)
    seeds = np.array([path_seed], dtype=np.int64)
    rewards, _, _, fail_times = _run_paths(model, policy, x0, dt, n_steps, seeds, trace)
    if not math.isfinite(rewards[0]):
        raise NonFiniteState(float(fail_times[0]))
    return float(rewards[0])


def estimate_performance(model: ModelSpec, regime: Regime, policy: NodePolicy,
                         x0, config: SimConfig) -> SimResult:
    """Mean and standard error of the discounted reward over
    ``config.paths`` independent paths."""
    _check_regime(regime, policy)
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (policy.grid.d,):
        raise GridMismatch(f"x0 {x0!r} does not have dimension {policy.grid.d}")
    if np.any(x0 < 0) or np.any(x0 > policy.grid.extent):
        raise GridMismatch(f"x0 {x0} outside [0, {policy.grid.extent}]^{policy.grid.d}")
    dt, n_steps, bound = _resolve_protocol(model, policy, config)
    seeds = path_seeds(config.seed, config.paths)
    rewards, extinct, cap_hits, fail_times = _run_paths(
        model, policy, x0, dt, n_steps, seeds)
    failed = ~np.isfinite(rewards)
    if failed.any():
        first = float(np.nanmin(fail_times[failed]))
        raise NonFiniteState(
            first, f"{int(failed.sum())} of {config.paths} paths left the finite "
                   f"range (earliest at t={first:.6g})")
    mean = float(np.mean(rewards))
    stderr = (float(np.std(rewards, ddof=1) / math.sqrt(config.paths))
              if config.paths > 1 else 0.0)
    return SimResult(mean=mean, stderr=stderr, tail_bound=bound,
                     extinction_fraction=float(np.mean(extinct)),
                     paths=config.paths, cap_hits=int(cap_hits.sum()))


@dataclass(frozen=True)
class VerifyReport:
    """Per-state agreement between a solved value function and the
    Monte Carlo estimate of its own policy."""

    states: tuple[tuple[float, ...], ...]
    solved: tuple[float, ...]
    estimates: tuple[SimResult, ...]
    differences: tuple[float, ...]
    slacks: tuple[float, ...]
    passed: tuple[bool, ...]

    @property
    def all_passed(self) -> bool:
        return all(self.passed)

    def rows(self):
        for i, state in enumerate(self.states):
            yield (state, self.solved[i], self.estimates[i].mean,
                   self.estimates[i].stderr, self.differences[i],
                   self.slacks[i], self.passed[i])


def verify(solution: Solution, sample_states, config: SimConfig,
           slack_rel: float = DEFAULT_SLACK_REL) -> VerifyReport:
    """Check |V^h - MC| <= 3·stderr + slack at each sample state, with
    slack = ``slack_rel``·max(|V^h|, 1).

    Sample states must be grid nodes; each state gets an independent
    estimator batch sub-seeded from ``config.seed`` and the state index.
    """
    policy = NodePolicy.from_solution(solution)
    grid = solution.grid
    states = [np.asarray(s, dtype=float).reshape(grid.d) for s in sample_states]
    indices = [grid.coords_index(s) for s in states]

    solved, estimates, diffs, slacks, passed = [], [], [], [], []
    for j, (state, idx) in enumerate(zip(states, indices)):
        vh = float(solution.V[idx])
        sub = np.random.SeedSequence((config.seed, j)).generate_state(1, np.uint32)[0]
        result = estimate_performance(
            solution.model, solution.regime, policy, state,
            SimConfig(dt=config.dt, horizon=config.horizon, paths=config.paths,
                      seed=int(sub), lookup=config.lookup))
        diff = abs(result.mean - vh)
        slack = slack_rel * max(abs(vh), 1.0)
        solved.append(vh)
        estimates.append(result)
        diffs.append(diff)
        slacks.append(slack)
        passed.append(bool(diff <= 3.0 * result.stderr + slack))
    return VerifyReport(states=tuple(tuple(s) for s in states),
                        solved=tuple(solved), estimates=tuple(estimates),
                        differences=tuple(diffs), slacks=tuple(slacks),
                        passed=tuple(passed))
