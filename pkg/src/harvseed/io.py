"""CSV export and import.

All files are plain CSV with metadata as '#'-prefixed comment lines
before the data.  Numbers are written with repr, which round-trips
every float exactly, so a solution file read back reconstructs the
grid, value function, and policy bit for bit.
"""

from __future__ import annotations

import math

import numpy as np

from .chain import Diffusion, Grid, HarvestJump, Reflect, SeedJump
from .errors import ConfigParseError, GridMismatch
from .model import MODEL_COEFFICIENTS, ModelSpec, RateBounds, UNBOUNDED, build_model
from .solver import SolveParams, Solution

__all__ = [
    "write_solution", "read_solution", "check_solution_matches",
    "write_sweep", "write_verify_report", "write_manifest",
]


def _num(value: float) -> str:
    if math.isinf(value):
        return "inf"
    return repr(float(value))


def _vec(values) -> str:
    return " ".join(_num(v) for v in values)


def _parse_vec(text: str) -> tuple[float, ...]:
    return tuple(UNBOUNDED if tok == "inf" else float(tok)
                 for tok in text.split())


def write_solution(path: str, solution: Solution) -> None:
    """Write one row per node: coordinates, V, action code, per-species
    seeding and harvesting rates.

    The header carries the full problem description, so the file can be
    re-read standalone.  Only the built-in model kinds serialize; a
    custom drift callable has no text form.
    """
    model = solution.model
    if model.kind not in MODEL_COEFFICIENTS:
        raise ConfigParseError(
            f"cannot serialize a model of kind {model.kind!r}; "
            "only built-in kinds have a text form")
    grid = solution.grid
    params = solution.params
    d = grid.d
    lines = ["# harvseed solution"]

    def meta(key, value):
        lines.append(f"# {key} = {value}")

    meta("kind", model.kind)
    for key in MODEL_COEFFICIENTS[model.kind]:
        meta(key, _num(model.coefficients[key]))
    meta("f", _vec(model.price_affine[0]))
    meta("f_slope", _vec(model.price_affine[1]))
    meta("g", _vec(model.cost_affine[0]))
    meta("g_slope", _vec(model.cost_affine[1]))
    meta("delta", _num(model.discount))
    meta("lambda", _vec(solution.bounds.seed))
    meta("mu", _vec(solution.bounds.harvest))
    meta("regime", solution.regime.name)
    meta("U", _num(grid.upper))
    meta("h", _num(grid.h))
    meta("extent", _num(grid.extent))
    meta("d", d)
    meta("tolerance", _num(params.tolerance))
    meta("max_iterations", params.max_iterations)
    meta("sweep_order", params.sweep_order)
    meta("update_scheme", params.update_scheme)
    meta("control_levels", params.control_levels)
    meta("iterations", solution.iterations)
    meta("converged", solution.converged)
    # wall time is a measurement, not a result; leaving it out keeps
    # the file deterministic for a given configuration
    meta("bellman_residual", _num(solution.bellman_residual)
         if not math.isnan(solution.bellman_residual) else "nan")
    meta("min_increment", _num(solution.min_increment))

    cols = [f"x{i + 1}" for i in range(d)] + ["V", "action"]
    cols += [f"seed_rate{i + 1}" for i in range(d)]
    cols += [f"harvest_rate{i + 1}" for i in range(d)]
    lines.append("# columns: " + ",".join(cols))

    codes = solution.action_codes()
    seed, harvest = solution.rate_arrays()
    nodes = grid.nodes
    for idx in range(grid.n_nodes):
        row = [_num(c) for c in nodes[idx]]
        row.append(_num(solution.V[idx]))
        row.append(str(int(codes[idx])))
        row.extend(_num(v) for v in seed[idx])
        row.extend(_num(v) for v in harvest[idx])
        lines.append(",".join(row))

    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _action_from_row(code: int, seed_rates, harvest_rates):
    if code == 0:
        return Diffusion(seed=tuple(seed_rates), harvest=tuple(harvest_rates))
    if code > 100:
        return Reflect(species=code - 101)
    if code > 0:
        return HarvestJump(species=code - 1)
    return SeedJump(species=-code - 1)


def read_solution(path: str) -> Solution:
    """Rebuild a Solution from its CSV form.

    Raises GridMismatch when the header is internally inconsistent with
    the data rows, ConfigParseError when the header is malformed.
    """
    meta: dict[str, str] = {}
    rows: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, _, value = body.partition("=")
                    meta[key.strip()] = value.strip()
                continue
            rows.append(line)

    def need(key: str) -> str:
        if key not in meta:
            raise ConfigParseError(f"{path}: missing header field {key!r}")
        return meta[key]

    kind = need("kind")
    if kind not in MODEL_COEFFICIENTS:
        raise ConfigParseError(f"{path}: unknown model kind {kind!r}")
    coefficients = {key: float(need(key)) for key in MODEL_COEFFICIENTS[kind]}
    model = build_model(
        kind, coefficients,
        price=_parse_vec(need("f")),
        seed_cost=_parse_vec(need("g")),
        discount=float(need("delta")),
        price_slope=_parse_vec(need("f_slope")),
        cost_slope=_parse_vec(need("g_slope")),
    )
    bounds = RateBounds(seed=_parse_vec(need("lambda")),
                        harvest=_parse_vec(need("mu")))
    d = int(need("d"))
    h = float(need("h"))
    extent = float(need("extent"))
    m = int(round(extent / h)) + 1
    grid = Grid(h=h, upper=float(need("U")), d=d, extent=extent, shape=(m,) * d)
    params = SolveParams(
        tolerance=float(need("tolerance")),
        max_iterations=int(need("max_iterations")),
        sweep_order=need("sweep_order"),
        update_scheme=need("update_scheme"),
        control_levels=int(need("control_levels")),
    )

    n = grid.n_nodes
    if len(rows) != n:
        raise GridMismatch(
            f"{path}: grid header implies {n} nodes but file has {len(rows)} rows")
    V = np.zeros(n)
    policy: list = [None] * n
    width = 2 * d + 2 + d
    for row in rows:
        parts = row.split(",")
        if len(parts) != width:
            raise ConfigParseError(
                f"{path}: row has {len(parts)} fields, expected {width}: {row!r}")
        coords = tuple(float(p) for p in parts[:d])
        idx = grid.coords_index(coords)
        V[idx] = float(parts[d])
        code = int(parts[d + 1])
        seed_rates = [float(p) for p in parts[d + 2:2 * d + 2]]
        harvest_rates = [float(p) for p in parts[2 * d + 2:]]
        policy[idx] = _action_from_row(code, seed_rates, harvest_rates)
    if any(a is None for a in policy):
        raise GridMismatch(f"{path}: duplicate rows leave some nodes unset")

    return Solution(
        model=model, bounds=bounds, grid=grid, params=params, V=V,
        policy=policy, iterations=int(need("iterations")),
        converged=need("converged") == "True",
        bellman_residual=float(need("bellman_residual")),
        min_increment=float(need("min_increment")),
    )


def check_solution_matches(solution: Solution, model: ModelSpec,
                           bounds: RateBounds, U: float, h: float) -> None:
    """Raise GridMismatch unless the solution was produced by the same
    problem the configuration describes."""
    def bad(field, got, want):
        raise GridMismatch(
            f"solution file does not match config: {field} is {got}, "
            f"config says {want}")

    if solution.model.kind != model.kind:
        bad("model kind", solution.model.kind, model.kind)
    for key, value in model.coefficients.items():
        if solution.model.coefficients.get(key) != value:
            bad(f"coefficient {key}", solution.model.coefficients.get(key), value)
    if solution.model.price_affine != model.price_affine:
        bad("price f", solution.model.price_affine, model.price_affine)
    if solution.model.cost_affine != model.cost_affine:
        bad("seeding cost g", solution.model.cost_affine, model.cost_affine)
    if solution.model.discount != model.discount:
        bad("discount", solution.model.discount, model.discount)
    if solution.bounds != bounds:
        bad("rate bounds", solution.bounds, bounds)
    if solution.grid.h != h:
        bad("h", solution.grid.h, h)
    if solution.grid.upper != U:
        bad("U", solution.grid.upper, U)


def write_sweep(path: str, result) -> None:
    """One row per swept value: value, L1, L2, probe values, error."""
    for report in result.reports:
        if report is not None and np.ndim(report.L1) > 0:
            raise GridMismatch(
                "sweep export needs scalar thresholds (1D problems); "
                "2D sweeps carry whole threshold curves")
    probes = result.probes
    lines = ["# harvseed sweep", f"# parameter = {result.parameter}"]
    cols = [result.parameter, "L1", "L2"]
    cols += ["V(" + " ".join(_num(c) for c in p) + ")" for p in probes]
    cols.append("error")
    lines.append("# columns: " + ",".join(cols))
    for i, value in enumerate(result.values):
        report = result.reports[i]
        row = [_num(value)]
        if report is None:
            row += ["", ""]
        else:
            row += [_num(report.L1), _num(report.L2)]
        pv = result.probe_values[i]
        for j in range(len(probes)):
            row.append("" if pv is None else _num(pv[j]))
        error = result.errors[i]
        row.append("" if error is None else error.replace(",", ";"))
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def write_verify_report(path: str, report) -> None:
    """One row per sample state: solved value, estimate, stderr,
    difference, slack, pass flag.  A state passes when the difference
    is at most 3*stderr + slack."""
    d = len(report.states[0]) if report.states else 0
    cols = [f"x{i + 1}" for i in range(d)]
    cols += ["V_solved", "estimate", "stderr", "difference", "slack", "pass"]
    lines = ["# harvseed verify report",
             f"# passed = {report.passed}",
             "# columns: " + ",".join(cols)]
    for state, solved, mean, stderr, diff, slack, ok in report.rows():
        cells = [_num(c) for c in state]
        cells += [_num(solved), _num(mean), _num(stderr),
                  _num(diff), _num(slack), str(ok)]
        lines.append(",".join(cells))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def write_manifest(path: str, materialized: dict[str, dict[str, str]],
                   stats: dict[str, object] | None = None) -> None:
    """Write the fully materialized run configuration.

    The output is itself a valid configuration file; parsing it back
    and re-running reproduces the run.  Run statistics go in as
    comments so they do not participate in the round trip.
    """
    lines = ["# harvseed run manifest"]
    for key, value in (stats or {}).items():
        lines.append(f"# {key} = {value}")
    for section, entries in materialized.items():
        lines.append("")
        lines.append(f"[{section}]")
        for key, value in entries.items():
            lines.append(f"{key} = {value}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
