"""Run configuration: a sectioned key=value file parsed into the
package's domain objects.

The format is INI-style with sections [model], [bounds], [grid],
[solver], [sweep], [simulate], [output].  Every key is validated
against the schema below; unknown sections or keys are errors so a
typo cannot silently fall back to a default.  "inf" is the only
accepted spelling of an unbounded rate.  Vectors are comma-separated;
lists of states are semicolon-separated (commas inside a state).

A manifest is the same format with every default materialized, so a
run can be reproduced from the manifest alone.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass

from .analysis import SweepSpec
from .errors import ConfigParseError
from .model import (
    MODEL_COEFFICIENTS,
    MODEL_DIMENSION,
    ModelSpec,
    RateBounds,
    UNBOUNDED,
    build_model,
)
from .simulate import DEFAULT_SLACK_REL, SimConfig
from .solver import SolveParams

__all__ = ["RunConfig", "parse_config", "parse_config_text", "materialize"]

_MODEL_ECON_KEYS = ("kind", "f", "g", "delta", "f_slope", "g_slope")
_SOLVER_KEYS = ("tolerance", "max_iterations", "sweep_order", "update_scheme",
                "control_levels")
_SWEEP_KEYS = ("parameter", "values", "probes")
_SIM_KEYS = ("dt", "horizon", "paths", "seed", "samples", "slack_rel")
_SECTIONS = ("model", "bounds", "grid", "solver", "sweep", "simulate", "output")


@dataclass(frozen=True)
class RunConfig:
    """Everything a command needs, plus the materialized key=value map
    the manifest writer serializes."""

    model: ModelSpec
    bounds: RateBounds
    U: float
    h: float
    solver: SolveParams
    sweep: SweepSpec | None
    simulate: SimConfig | None
    samples: tuple[tuple[float, ...], ...]
    slack_rel: float
    outdir: str | None
    materialized: dict[str, dict[str, str]]


def _fail(section: str, key: str, msg: str):
    raise ConfigParseError(f"[{section}] {key}: {msg}")


def _float(section: str, key: str, text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        _fail(section, key, f"not a number: {text!r}")
    if not math.isfinite(value):
        _fail(section, key, f"must be finite, got {text!r}")
    return value


def _int(section: str, key: str, text: str) -> int:
    try:
        return int(text)
    except ValueError:
        _fail(section, key, f"not an integer: {text!r}")


def _vector(section: str, key: str, text: str, d: int) -> tuple[float, ...]:
    parts = [p.strip() for p in text.split(",")]
    values = tuple(_float(section, key, p) for p in parts)
    if len(values) == 1:
        return values * d
    if len(values) != d:
        _fail(section, key, f"expected 1 or {d} entries, got {len(values)}")
    return values


def _rate_vector(section: str, key: str, text: str, d: int) -> tuple[float, ...]:
    parts = [p.strip() for p in text.split(",")]
    values = []
    for p in parts:
        if p == "inf":
            values.append(UNBOUNDED)
            continue
        values.append(_float(section, key, p))
    if len(values) == 1:
        values = values * d
    elif len(values) != d:
        _fail(section, key, f"expected 1 or {d} entries, got {len(values)}")
    return tuple(values)


def _states(section: str, key: str, text: str, d: int) -> tuple[tuple[float, ...], ...]:
    states = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        coords = tuple(_float(section, key, c.strip()) for c in part.split(","))
        if len(coords) != d:
            _fail(section, key, f"state {part!r} has {len(coords)} coordinates, need {d}")
        states.append(coords)
    if not states:
        _fail(section, key, "no states given")
    return tuple(states)


def _section(parser: configparser.ConfigParser, name: str) -> dict[str, str]:
    return {k: v.strip() for k, v in parser.items(name)} if parser.has_section(name) else {}


def _check_keys(section: str, present: dict[str, str], allowed):
    for key in present:
        if key not in allowed:
            _fail(section, key, f"unknown key (allowed: {', '.join(sorted(allowed))})")


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, strict=True)
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigParseError(str(exc)) from exc

    for name in parser.sections():
        if name not in _SECTIONS:
            raise ConfigParseError(
                f"unknown section [{name}] (allowed: {', '.join(_SECTIONS)})")
    for name in ("model", "bounds", "grid"):
        if not parser.has_section(name):
            raise ConfigParseError(f"missing required section [{name}]")

    # --- model ---------------------------------------------------------
    msec = _section(parser, "model")
    if "kind" not in msec:
        _fail("model", "kind", "required")
    kind = msec["kind"]
    if kind not in MODEL_COEFFICIENTS:
        _fail("model", "kind", f"unknown kind {kind!r}; "
              f"expected one of {sorted(MODEL_COEFFICIENTS)}")
    d = MODEL_DIMENSION[kind]
    allowed = set(_MODEL_ECON_KEYS) | set(MODEL_COEFFICIENTS[kind])
    _check_keys("model", msec, allowed)
    for key in ("f", "g", "delta"):
        if key not in msec:
            _fail("model", key, "required")
    coefficients = {}
    for key in MODEL_COEFFICIENTS[kind]:
        if key not in msec:
            _fail("model", key, f"required coefficient for kind {kind!r}")
        coefficients[key] = _float("model", key, msec[key])
    model = build_model(
        kind, coefficients,
        price=_vector("model", "f", msec["f"], d),
        seed_cost=_vector("model", "g", msec["g"], d),
        discount=_float("model", "delta", msec["delta"]),
        price_slope=_vector("model", "f_slope", msec["f_slope"], d)
        if "f_slope" in msec else None,
        cost_slope=_vector("model", "g_slope", msec["g_slope"], d)
        if "g_slope" in msec else None,
    )

    # --- bounds --------------------------------------------------------
    bsec = _section(parser, "bounds")
    _check_keys("bounds", bsec, ("lambda", "mu"))
    for key in ("lambda", "mu"):
        if key not in bsec:
            _fail("bounds", key, "required")
    bounds = RateBounds(seed=_rate_vector("bounds", "lambda", bsec["lambda"], d),
                        harvest=_rate_vector("bounds", "mu", bsec["mu"], d))

    # --- grid ----------------------------------------------------------
    gsec = _section(parser, "grid")
    _check_keys("grid", gsec, ("U", "h"))
    for key in ("U", "h"):
        if key not in gsec:
            _fail("grid", key, "required")
    U = _float("grid", "U", gsec["U"])
    h = _float("grid", "h", gsec["h"])
    if U <= 0 or h <= 0:
        _fail("grid", "U" if U <= 0 else "h", "must be positive")

    # --- solver --------------------------------------------------------
    ssec = _section(parser, "solver")
    _check_keys("solver", ssec, _SOLVER_KEYS)
    defaults = SolveParams()
    solver = SolveParams(
        tolerance=_float("solver", "tolerance", ssec["tolerance"])
        if "tolerance" in ssec else defaults.tolerance,
        max_iterations=_int("solver", "max_iterations", ssec["max_iterations"])
        if "max_iterations" in ssec else defaults.max_iterations,
        sweep_order=ssec.get("sweep_order", defaults.sweep_order),
        update_scheme=ssec.get("update_scheme", defaults.update_scheme),
        control_levels=_int("solver", "control_levels", ssec["control_levels"])
        if "control_levels" in ssec else defaults.control_levels,
    )

    # --- sweep ---------------------------------------------------------
    sweep = None
    if parser.has_section("sweep"):
        wsec = _section(parser, "sweep")
        _check_keys("sweep", wsec, _SWEEP_KEYS)
        for key in ("parameter", "values"):
            if key not in wsec:
                _fail("sweep", key, "required")
        values = tuple(_float("sweep", "values", p.strip())
                       for p in wsec["values"].split(","))
        probes = _states("sweep", "probes", wsec["probes"], d) \
            if "probes" in wsec else ()
        sweep = SweepSpec(parameter=wsec["parameter"], values=values, probes=probes)

    # --- simulate ------------------------------------------------------
    simulate = None
    samples: tuple[tuple[float, ...], ...] = ()
    slack_rel = DEFAULT_SLACK_REL
    if parser.has_section("simulate"):
        csec = _section(parser, "simulate")
        _check_keys("simulate", csec, _SIM_KEYS)
        simulate = SimConfig(
            dt=_float("simulate", "dt", csec["dt"]) if "dt" in csec else None,
            horizon=_float("simulate", "horizon", csec["horizon"])
            if "horizon" in csec else None,
            paths=_int("simulate", "paths", csec["paths"]) if "paths" in csec else 10_000,
            seed=_int("simulate", "seed", csec["seed"]) if "seed" in csec else 0,
        )
        if "samples" in csec:
            samples = _states("simulate", "samples", csec["samples"], d)
        if "slack_rel" in csec:
            slack_rel = _float("simulate", "slack_rel", csec["slack_rel"])

    # --- output --------------------------------------------------------
    osec = _section(parser, "output")
    _check_keys("output", osec, ("dir",))
    outdir = osec.get("dir")

    return RunConfig(model=model, bounds=bounds, U=U, h=h, solver=solver,
                     sweep=sweep, simulate=simulate, samples=samples,
                     slack_rel=slack_rel, outdir=outdir,
                     materialized=materialize(model, bounds, U, h, solver,
                                              sweep, simulate, samples,
                                              slack_rel, outdir))


def parse_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigParseError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, source=path)


def _fmt(value: float) -> str:
    return "inf" if math.isinf(value) else repr(float(value))


def _fmt_states(states) -> str:
    return "; ".join(",".join(repr(float(c)) for c in s) for s in states)


def materialize(model: ModelSpec, bounds: RateBounds, U: float, h: float,
                solver: SolveParams, sweep: SweepSpec | None,
                simulate: SimConfig | None, samples, slack_rel: float,
                outdir: str | None) -> dict[str, dict[str, str]]:
    """Flatten a run into the section->key->string map that both the
    manifest writer and parse_config round-trip losslessly."""
    msec = {"kind": model.kind}
    for key in MODEL_COEFFICIENTS[model.kind]:
        msec[key] = repr(float(model.coefficients[key]))
    msec["f"] = ", ".join(repr(float(v)) for v in model.price_affine[0])
    msec["g"] = ", ".join(repr(float(v)) for v in model.cost_affine[0])
    if any(model.price_affine[1]):
        msec["f_slope"] = ", ".join(repr(float(v)) for v in model.price_affine[1])
    if any(model.cost_affine[1]):
        msec["g_slope"] = ", ".join(repr(float(v)) for v in model.cost_affine[1])
    msec["delta"] = repr(float(model.discount))

    out = {
        "model": msec,
        "bounds": {"lambda": ", ".join(_fmt(v) for v in bounds.seed),
                   "mu": ", ".join(_fmt(v) for v in bounds.harvest)},
        "grid": {"U": repr(float(U)), "h": repr(float(h))},
        "solver": {"tolerance": repr(solver.tolerance),
                   "max_iterations": str(solver.max_iterations),
                   "sweep_order": solver.sweep_order,
                   "update_scheme": solver.update_scheme,
                   "control_levels": str(solver.control_levels)},
    }
    if sweep is not None:
        wsec = {"parameter": sweep.parameter,
                "values": ", ".join(repr(v) for v in sweep.values)}
        if sweep.probes:
            wsec["probes"] = _fmt_states(sweep.probes)
        out["sweep"] = wsec
    if simulate is not None:
        csec = {"paths": str(simulate.paths), "seed": str(simulate.seed)}
        if simulate.dt is not None:
            csec["dt"] = repr(simulate.dt)
        if simulate.horizon is not None:
            csec["horizon"] = repr(simulate.horizon)
        if samples:
            csec["samples"] = _fmt_states(samples)
        csec["slack_rel"] = repr(float(slack_rel))
        out["simulate"] = csec
    if outdir is not None:
        out["output"] = {"dir": outdir}
    return out
