"""Population model specification and structural checks.

A model describes the uncontrolled dynamics of d interacting species,

    dX_i = b_i(X) dt + (sigma(X) dw)_i,      X in [0, inf)^d,

together with the economic data of the harvesting-seeding problem:
per-species unit harvest price f, unit seeding cost g, and a discount
rate delta.  The noise enters only through its covariance rate
a(x) = sigma(x) sigma(x)'.

Structural requirements (checked on the grid before any solve):

* b(0) = 0 and a(0) = 0: an extinct population stays extinct unless
  seeded, and more generally species i contributes no drift or noise
  where x_i = 0 for the built-in families;
* a(x) symmetric with nonnegative diagonal, and diagonally dominant
  (a_ii >= sum_{j != i} |a_ij|) so the chain probabilities are well
  defined;
* 0 < f_i(x) < g_i(x) everywhere, with f and g non-increasing in every
  coordinate: seeding a unit always costs more than harvesting one
  earns, and marginal prices do not rise with abundance.

Prices and costs are constants or per-species affine non-increasing
functions f_i(x) = p_i + s_i x_i with s_i <= 0.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import InvalidCoefficient, NonConstantPrice, NonPositiveDiscount

#: Distinguished value marking a control rate with no upper bound.
#: IEEE infinity, so any accidental arithmetic use fails loudly rather
#: than passing as a large-but-finite rate.
UNBOUNDED = math.inf


class Regime(enum.Enum):
    """Which of the two controls is a bounded rate and which is singular.

    A control with a finite maximum rate acts continuously in time; an
    unbounded one degenerates to instantaneous jumps of the state.  The
    two singular-harvesting regimes truncate the state space at U with a
    forced harvest; the two bounded-harvesting regimes instead keep an
    overshoot layer at U+h from which the chain reflects back.
    """

    BOUNDED_SEEDING = "bounded_seeding"        # finite seeding rates, harvest by jumps
    BOTH_BOUNDED = "both_bounded"              # both controls are bounded rates
    BOUNDED_HARVESTING = "bounded_harvesting"  # finite harvesting rates, seeding by jumps
    BOTH_UNBOUNDED = "both_unbounded"          # both controls act by jumps

    @property
    def harvest_by_jumps(self) -> bool:
        return self in (Regime.BOUNDED_SEEDING, Regime.BOTH_UNBOUNDED)

    @property
    def seed_by_jumps(self) -> bool:
        return self in (Regime.BOUNDED_HARVESTING, Regime.BOTH_UNBOUNDED)

    @property
    def reflecting(self) -> bool:
        """True when the grid carries the extra reflecting layer at U+h."""
        return not self.harvest_by_jumps


def _as_rate_tuple(values, name: str) -> tuple[float, ...]:
    try:
        entries = tuple(float(v) for v in np.atleast_1d(values))
    except (TypeError, ValueError) as exc:
        raise InvalidCoefficient(name, f"not numeric: {values!r}") from exc
    for v in entries:
        if math.isnan(v) or v < 0:
            raise InvalidCoefficient(name, f"rates must be >= 0 or UNBOUNDED, got {v}")
    return entries


@dataclass(frozen=True)
class RateBounds:
    """Per-species maximum control rates.

    ``seed[i]`` is the largest admissible seeding rate of species i and
    ``harvest[i]`` the largest harvesting rate.  An entry of UNBOUNDED
    switches that control to singular (jump) form.  Finiteness must be
    uniform across species within each control: mixing finite and
    unbounded entries in one vector leaves the regime undefined and is
    rejected.
    """

    seed: tuple[float, ...]
    harvest: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "seed", _as_rate_tuple(self.seed, "seed"))
        object.__setattr__(self, "harvest", _as_rate_tuple(self.harvest, "harvest"))
        if len(self.seed) != len(self.harvest):
            raise InvalidCoefficient(
                "harvest", f"length {len(self.harvest)} != seed length {len(self.seed)}"
            )
        for name, rates in (("seed", self.seed), ("harvest", self.harvest)):
            finite = [math.isfinite(v) for v in rates]
            if any(finite) and not all(finite):
                raise InvalidCoefficient(
                    name,
                    "mixed finite/unbounded rates across species; "
                    "bound all species or none",
                )

    @property
    def d(self) -> int:
        return len(self.seed)

    @property
    def seed_bounded(self) -> bool:
        return math.isfinite(self.seed[0])

    @property
    def harvest_bounded(self) -> bool:
        return math.isfinite(self.harvest[0])

    @property
    def regime(self) -> Regime:
        if self.seed_bounded:
            return Regime.BOTH_BOUNDED if self.harvest_bounded else Regime.BOUNDED_SEEDING
        return Regime.BOUNDED_HARVESTING if self.harvest_bounded else Regime.BOTH_UNBOUNDED


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Immutable bundle of dynamics and economics.

    ``drift``, ``diff_cov``, ``price`` and ``seed_cost`` are vectorized:
    they accept arrays of shape (..., d) and return (..., d) except
    ``diff_cov`` which returns (..., d, d).

    ``kind`` and ``coefficients`` identify a built-in family so the
    model can be reconstructed (manifests, parameter sweeps) and so the
    fast simulation kernel can evaluate the drift without callbacks;
    custom models carry kind="custom" and lose those two conveniences.
    """

    d: int
    drift: Callable[[np.ndarray], np.ndarray]
    diff_cov: Callable[[np.ndarray], np.ndarray]
    price: Callable[[np.ndarray], np.ndarray]
    seed_cost: Callable[[np.ndarray], np.ndarray]
    discount: float
    kind: str = "custom"
    coefficients: dict = field(default_factory=dict)
    # (intercept, slope) arrays when the economics are affine; None for
    # custom callables.
    price_affine: tuple | None = None
    cost_affine: tuple | None = None

    def __post_init__(self):
        if self.d < 1:
            raise InvalidCoefficient("d", f"dimension must be >= 1, got {self.d}")
        if not (math.isfinite(self.discount) and self.discount > 0):
            raise NonPositiveDiscount(f"discount must be > 0, got {self.discount}")

    @property
    def price_is_constant(self) -> bool:
        return self.price_affine is not None and not np.any(self.price_affine[1])

    @property
    def cost_is_constant(self) -> bool:
        return self.cost_affine is not None and not np.any(self.cost_affine[1])


# ---------------------------------------------------------------------------
# economics helpers

def _affine_econ(level, slope, d: int, name: str):
    """Build f_i(x) = level_i + slope_i * x_i with slope_i <= 0."""
    level = np.broadcast_to(np.asarray(level, dtype=float), (d,)).copy()
    if slope is None:
        slope = np.zeros(d)
    slope = np.broadcast_to(np.asarray(slope, dtype=float), (d,)).copy()
    if not np.all(np.isfinite(level)) or np.any(level <= 0):
        raise InvalidCoefficient(name, f"levels must be positive and finite, got {level}")
    if not np.all(np.isfinite(slope)) or np.any(slope > 0):
        raise InvalidCoefficient(f"{name}_slope", f"slopes must be <= 0, got {slope}")

    def econ(x, _a=level, _b=slope):
        x = np.asarray(x, dtype=float)
        return _a + _b * x

    return econ, (level, slope)


# ---------------------------------------------------------------------------
# built-in model families

#: Coefficient names per built-in kind, in canonical order.
MODEL_COEFFICIENTS = {
    "logistic": ("b1", "b2", "sigma"),
    "competition": ("b1", "b2", "a11", "a12", "a21", "a22", "sigma1", "sigma2"),
    "predator_prey": ("b1", "b2", "b3", "a11", "a12", "a21", "a22", "sigma1", "sigma2"),
}

MODEL_DIMENSION = {"logistic": 1, "competition": 2, "predator_prey": 2}


def _require(cond: bool, name: str, msg: str):
    if not cond:
        raise InvalidCoefficient(name, msg)


def _finite(value, name: str) -> float:
    value = float(value)
    _require(math.isfinite(value), name, f"must be finite, got {value}")
    return value


def logistic_model(b1, b2, sigma, price, seed_cost, discount,
                   price_slope=None, cost_slope=None) -> ModelSpec:
    """Single-species logistic growth with proportional noise.

    Drift x (b1 - b2 x), covariance (sigma x)^2.
    """
    b1 = _finite(b1, "b1")
    b2 = _finite(b2, "b2")
    _require(b2 >= 0, "b2", f"self-limitation must be >= 0, got {b2}")
    sigma = _finite(sigma, "sigma")
    _require(sigma > 0, "sigma", f"must be strictly positive, got {sigma}")

    def drift(x, _b1=b1, _b2=b2):
        x = np.asarray(x, dtype=float)
        p = x[..., 0]
        return (p * (_b1 - _b2 * p))[..., None]

    def diff_cov(x, _s2=sigma * sigma):
        x = np.asarray(x, dtype=float)
        return (_s2 * x[..., 0] ** 2)[..., None, None]

    price_fn, price_affine = _affine_econ(price, price_slope, 1, "price")
    cost_fn, cost_affine = _affine_econ(seed_cost, cost_slope, 1, "seed_cost")
    return ModelSpec(
        d=1, drift=drift, diff_cov=diff_cov, price=price_fn, seed_cost=cost_fn,
        discount=float(discount), kind="logistic",
        coefficients={"b1": b1, "b2": b2, "sigma": sigma},
        price_affine=price_affine, cost_affine=cost_affine,
    )


def _diag_cov_2d(sigma1: float, sigma2: float):
    def diff_cov(x, _s1=sigma1 * sigma1, _s2=sigma2 * sigma2):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = _s1 * x[..., 0] ** 2
        out[..., 1, 1] = _s2 * x[..., 1] ** 2
        return out

    return diff_cov


def competition_model(b1, b2, a11, a12, a21, a22, sigma1, sigma2,
                      price, seed_cost, discount,
                      price_slope=None, cost_slope=None) -> ModelSpec:
    """Two species competing for a shared resource.

    Drift (x1 (b1 - a11 x1 - a12 x2), x2 (b2 - a21 x1 - a22 x2)) with
    independent proportional noise per species.
    """
    coeffs = {}
    for name, val in (("b1", b1), ("b2", b2), ("a11", a11), ("a12", a12),
                      ("a21", a21), ("a22", a22)):
        coeffs[name] = _finite(val, name)
    for name in ("a11", "a12", "a21", "a22"):
        _require(coeffs[name] >= 0, name, f"interaction must be >= 0, got {coeffs[name]}")
    for name, val in (("sigma1", sigma1), ("sigma2", sigma2)):
        coeffs[name] = _finite(val, name)
        _require(coeffs[name] > 0, name, f"must be strictly positive, got {coeffs[name]}")

    def drift(x, _c=coeffs):
        x = np.asarray(x, dtype=float)
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack(
            [x1 * (_c["b1"] - _c["a11"] * x1 - _c["a12"] * x2),
             x2 * (_c["b2"] - _c["a21"] * x1 - _c["a22"] * x2)],
            axis=-1,
        )

    price_fn, price_affine = _affine_econ(price, price_slope, 2, "price")
    cost_fn, cost_affine = _affine_econ(seed_cost, cost_slope, 2, "seed_cost")
    return ModelSpec(
        d=2, drift=drift, diff_cov=_diag_cov_2d(coeffs["sigma1"], coeffs["sigma2"]),
        price=price_fn, seed_cost=cost_fn, discount=float(discount),
        kind="competition", coefficients=coeffs,
        price_affine=price_affine, cost_affine=cost_affine,
    )


def predator_prey_model(b1, b2, b3, a11, a12, a21, a22, sigma1, sigma2,
                        price, seed_cost, discount,
                        price_slope=None, cost_slope=None) -> ModelSpec:
    """Prey (species 1) and predator (species 2) with a saturating
    functional response.

    Drift:
        x1 (b1 - a11 x1 - a12 x1 / (b3 + x1)),
        x2 (-b2 + a21 x1 / (b3 + x1) - a22 x2),
    with independent proportional noise per species.
    """
    coeffs = {}
    for name, val in (("b1", b1), ("b2", b2), ("b3", b3), ("a11", a11),
                      ("a12", a12), ("a21", a21), ("a22", a22)):
        coeffs[name] = _finite(val, name)
    _require(coeffs["b3"] > 0, "b3", f"half-saturation must be > 0, got {coeffs['b3']}")
    for name in ("a11", "a12", "a21", "a22"):
        _require(coeffs[name] >= 0, name, f"interaction must be >= 0, got {coeffs[name]}")
    for name, val in (("sigma1", sigma1), ("sigma2", sigma2)):
        coeffs[name] = _finite(val, name)
        _require(coeffs[name] > 0, name, f"must be strictly positive, got {coeffs[name]}")

    def drift(x, _c=coeffs):
        x = np.asarray(x, dtype=float)
        x1, x2 = x[..., 0], x[..., 1]
        response = x1 / (_c["b3"] + x1)
        return np.stack(
            [x1 * (_c["b1"] - _c["a11"] * x1 - _c["a12"] * response),
             x2 * (-_c["b2"] + _c["a21"] * response - _c["a22"] * x2)],
            axis=-1,
        )

    price_fn, price_affine = _affine_econ(price, price_slope, 2, "price")
    cost_fn, cost_affine = _affine_econ(seed_cost, cost_slope, 2, "seed_cost")
    return ModelSpec(
        d=2, drift=drift, diff_cov=_diag_cov_2d(coeffs["sigma1"], coeffs["sigma2"]),
        price=price_fn, seed_cost=cost_fn, discount=float(discount),
        kind="predator_prey", coefficients=coeffs,
        price_affine=price_affine, cost_affine=cost_affine,
    )


_BUILDERS = {
    "logistic": logistic_model,
    "competition": competition_model,
    "predator_prey": predator_prey_model,
}


def build_model(kind: str, coefficients: Mapping[str, float], price, seed_cost,
                discount, price_slope=None, cost_slope=None) -> ModelSpec:
    """Construct a built-in model from a named coefficient map.

    Rejects unknown kinds and any missing or extra coefficient key, so
    config typos cannot silently fall back to defaults.
    """
    if kind not in MODEL_COEFFICIENTS:
        raise InvalidCoefficient(
            "kind", f"unknown model kind {kind!r}; expected one of {sorted(MODEL_COEFFICIENTS)}"
        )
    expected = MODEL_COEFFICIENTS[kind]
    for key in coefficients:
        if key not in expected:
            raise InvalidCoefficient(key, f"unknown coefficient for kind {kind!r}")
    for key in expected:
        if key not in coefficients:
            raise InvalidCoefficient(key, f"missing coefficient for kind {kind!r}")
    args = [coefficients[key] for key in expected]
    return _BUILDERS[kind](*args, price=price, seed_cost=seed_cost, discount=discount,
                           price_slope=price_slope, cost_slope=cost_slope)


def custom_model(d: int, drift, diff_cov, price, seed_cost, discount,
                 price_slope=None, cost_slope=None) -> ModelSpec:
    """Wrap user callables into a ModelSpec.

    ``drift`` and ``diff_cov`` must follow the vectorized conventions of
    ModelSpec.  ``price``/``seed_cost`` may be numbers (with optional
    slopes) or vectorized callables; callables disable the affine fast
    paths but are otherwise fully supported.
    """
    if callable(price):
        price_fn, price_affine = price, None
    else:
        price_fn, price_affine = _affine_econ(price, price_slope, d, "price")
    if callable(seed_cost):
        cost_fn, cost_affine = seed_cost, None
    else:
        cost_fn, cost_affine = _affine_econ(seed_cost, cost_slope, d, "seed_cost")
    return ModelSpec(d=d, drift=drift, diff_cov=diff_cov, price=price_fn,
                     seed_cost=cost_fn, discount=float(discount),
                     price_affine=price_affine, cost_affine=cost_affine)


# ---------------------------------------------------------------------------
# structural checks

@dataclass
class CheckReport:
    """Outcome of one structural check; detail explains a failure."""

    name: str
    passed: bool
    detail: str = ""

    def __str__(self):
        status = "pass" if self.passed else "FAIL"
        return f"[{status}] {self.name}" + (f": {self.detail}" if self.detail else "")


def check_diagonal_dominance(model: ModelSpec, nodes: np.ndarray) -> CheckReport:
    """Require a_ii(x) >= sum_{j != i} |a_ij(x)| at every node.

    This is what keeps every stencil probability nonnegative.  Reports
    the first failing (node, species) pair.
    """
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    a = model.diff_cov(nodes)
    off = np.sum(np.abs(a), axis=-1) - np.abs(np.diagonal(a, axis1=-2, axis2=-1))
    margin = np.diagonal(a, axis1=-2, axis2=-1) - off
    bad = margin < 0
    if not bad.any():
        return CheckReport("diagonal-dominance", True)
    flat = np.argwhere(bad)[0]
    node, species = int(flat[0]), int(flat[1])
    return CheckReport(
        "diagonal-dominance", False,
        f"fails at x={nodes[node]} species {species + 1} "
        f"(margin {margin[node, species]:.3g})",
    )


def check_covariance_symmetry(model: ModelSpec, nodes: np.ndarray) -> CheckReport:
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    a = model.diff_cov(nodes)
    skew = np.max(np.abs(a - np.swapaxes(a, -1, -2)))
    scale = max(1.0, float(np.max(np.abs(a))))
    if skew <= 1e-12 * scale:
        return CheckReport("covariance-symmetry", True)
    return CheckReport("covariance-symmetry", False, f"max |a - a'| = {skew:.3g}")


def check_origin_equilibrium(model: ModelSpec) -> CheckReport:
    """b(0) = 0 and a(0) = 0: the origin must be an equilibrium."""
    zero = np.zeros(model.d)
    b0 = np.max(np.abs(model.drift(zero)))
    a0 = np.max(np.abs(model.diff_cov(zero)))
    if b0 <= 1e-12 and a0 <= 1e-12:
        return CheckReport("origin-equilibrium", True)
    return CheckReport("origin-equilibrium", False,
                       f"|b(0)|={b0:.3g}, |a(0)|={a0:.3g}")


def check_economics(model: ModelSpec, nodes: np.ndarray,
                    shape: tuple | None = None) -> list[CheckReport]:
    """Price/cost positivity, f < g, and monotonicity on the grid.

    Monotonicity along each coordinate needs the lattice shape to take
    axis-wise differences; without it only the pointwise checks run.
    """
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    f = model.price(nodes)
    g = model.seed_cost(nodes)
    reports = []

    def first_bad(mask):
        return nodes[np.argwhere(mask)[0][0]]

    bad = ~(f > 0)
    reports.append(CheckReport("price-positive", not bad.any(),
                               "" if not bad.any() else f"f <= 0 at x={first_bad(bad)}"))
    bad = ~(g > 0)
    reports.append(CheckReport("cost-positive", not bad.any(),
                               "" if not bad.any() else f"g <= 0 at x={first_bad(bad)}"))
    bad = ~(f < g)
    reports.append(CheckReport(
        "price-below-cost", not bad.any(),
        "" if not bad.any() else
        f"price must be below seeding cost; f >= g at x={first_bad(bad)}"))

    if shape is not None:
        ok = True
        detail = ""
        for arr, label in ((f, "price"), (g, "seed_cost")):
            lattice = arr.reshape(tuple(shape) + (model.d,))
            for axis in range(model.d):
                if np.any(np.diff(lattice, axis=axis) > 1e-12):
                    ok = False
                    detail = f"{label} increases along coordinate {axis + 1}"
                    break
            if not ok:
                break
        reports.append(CheckReport("economics-nonincreasing", ok, detail))
    return reports


@dataclass(frozen=True)
class GrowthScan:
    """Sample layout for the sustainability (growth) condition scan.

    A finite scan of the shell outside [0, U]^d: lattice points of the
    given spacing inside [0, multiplier*U]^d with Euclidean norm above
    U, plus ``radial_points`` equispaced points along the main diagonal
    ray out to multiplier*U.  Evidence, not proof.
    """

    spacing: float | None = None   # defaults to U/50
    multiplier: float = 3.0
    radial_points: int = 100


def check_growth_condition(model: ModelSpec, U: float,
                           scan: GrowthScan | None = None) -> CheckReport:
    """Scan sum_i (b_i(x) - delta (x_i - U)) f_i < 0 over |x| > U.

    The condition guarantees that beyond U the discounted biomass value
    shrinks, so truncating the domain at U with forced harvesting loses
    nothing.  Only meaningful with constant prices.
    """
    if not model.price_is_constant:
        raise NonConstantPrice(
            "growth condition requires constant per-species prices")
    scan = scan or GrowthScan()
    U = float(U)
    spacing = scan.spacing if scan.spacing is not None else U / 50.0

    axes = [np.arange(0.0, scan.multiplier * U + spacing / 2, spacing)] * model.d
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, model.d)
    mesh = mesh[np.linalg.norm(mesh, axis=1) > U]

    direction = np.ones(model.d) / math.sqrt(model.d)
    radii = U * (1.0 + (scan.multiplier - 1.0)
                 * np.arange(1, scan.radial_points + 1) / scan.radial_points)
    rays = radii[:, None] * direction[None, :]

    points = np.vstack([mesh, rays])
    f = model.price(np.zeros(model.d))
    s = np.sum((model.drift(points) - model.discount * (points - U)) * f, axis=-1)
    bad = s >= 0
    if not bad.any():
        return CheckReport("growth-condition", True,
                           f"{len(points)} sample points, all negative")
    worst = int(np.argmax(s))
    return CheckReport("growth-condition", False,
                       f"fails at x={points[worst]} (value {s[worst]:.3g})")


def run_structure_checks(model: ModelSpec, nodes: np.ndarray,
                         shape: tuple | None = None) -> list[CheckReport]:
    """All grid-level structural checks in one list."""
    reports = [
        check_origin_equilibrium(model),
        check_covariance_symmetry(model, nodes),
        check_diagonal_dominance(model, nodes),
    ]
    reports.extend(check_economics(model, nodes, shape))
    return reports
