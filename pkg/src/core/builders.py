from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial.distance import cdist

from src.enums import NodeStrategy
from src.static import Activations, Constants
from .activation import Activation, KLPoint, find_kl_point, lipschitz_on, parse_activation
from .domain import FunctionClassV, SampledCompactSet, image_interval, sup_seminorm
from .errors import InjectivityFailure, ZeroDerivative
from .features import (
    FeatureMap,
    FeatureVectorMap,
    PointEvalFeature,
    QuadratureFeature,
    check_injectivity,
    make_exponential_dictionary,
    trapezoid_weights,
)
from .network import DeepTFNN, ShallowTFNN
from .piecewise import TabulatedFunction, fit_additive, knot_grid
from .univariate import RidgeExpansion, fit_univariate, node_schedule, ridge_lstsq

logger = logging.getLogger("tfnn.builders")

__all__ = (
    "Decomposition",
    "BuildReport",
    "decompose",
    "build_shallow_universal",
    "build_lcs_shallow",
    "build_functional_net",
    "TabulatedMap",
    "compose_via_embedding",
    "IdentityBlock",
    "make_identity_block",
    "tune_identity_step",
    "EuclideanRidgeNet",
    "fit_euclidean_ridge",
    "build_deep_narrow",
    "target_matrix",
)


def target_matrix(g, size: int) -> np.ndarray:
    values = np.asarray(g, dtype=float)
    if values.ndim <= 1:
        values = values.reshape(-1, 1)
    if values.shape[0] != size:
        raise ValueError(f"target has {values.shape[0]} rows, the set has {size} points")
    return values


@dataclass
class Decomposition:
    """g ~ sum_i u_i(f_i(x)) on K with tabulated u_i."""
    terms: list[tuple[FeatureMap, TabulatedFunction]]
    residual: float

    @property
    def M(self) -> int:
        return len(self.terms)

    def evaluate(self, points) -> np.ndarray:
        total = np.zeros(np.atleast_2d(np.asarray(points, dtype=float)).shape[0])
        for f, u in self.terms:
            total = total + u(f.evaluate(points))
        return total

    def to_dict(self) -> dict:
        return {
            "residual": self.residual,
            "terms": [{"feature": f.to_dict(), "table": u.to_dict()} for f, u in self.terms],
        }


@dataclass
class BuildReport:
    requested_eps: float
    achieved_error: float
    width: int
    depth: int
    term_count: int
    budgets: dict = field(default_factory=dict)
    budget_exceeded: bool = False
    n: int = 0
    m: int = 1
    M: int = 0
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "requested_eps": self.requested_eps,
            "achieved_error": self.achieved_error,
            "width": self.width,
            "depth": self.depth,
            "term_count": self.term_count,
            "budgets": self.budgets,
            "budget_exceeded": self.budget_exceeded,
            "n": self.n,
            "m": self.m,
            "M": self.M,
            "extras": self.extras,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> BuildReport:
        return cls(**{k: data[k] for k in cls.__dataclass_fields__ if k in data})


def _decomposition_from_fit(
        g: np.ndarray, points: np.ndarray, chosen: Sequence[FeatureMap], tables: Sequence[TabulatedFunction]
) -> Decomposition:
    dec = Decomposition(list(zip(chosen, tables)), 0.0)
    dec.residual = float(np.max(np.abs(dec.evaluate(points) - g)))
    return dec


def decompose(
        g,
        K: SampledCompactSet,
        family: Sequence[FeatureMap],
        knots: Optional[int | str] = None,
        tolerance: Optional[float] = None,
) -> Decomposition:
    """
    Summary:
        Least-squares fit of g by sum_i u_i(f_i(x)) with piecewise-linear u_i on `knots`
        equispaced knots over image_interval(f_i, K) ("data" knots at the sample images).

        Without a tolerance every feature is fitted jointly and identically zero tables are
        dropped. With a tolerance features are added one at a time, each step taking the one
        that lowers the sup residual most (lowest index on ties), until the residual is within
        the tolerance.

    Args:
        g: Scalar target values on K.
        K: The sample.
        family: Candidate features, nonempty.
        knots: Knots per feature, or "data".
        tolerance: Stopping residual for forward selection.

    Returns:
        The decomposition with its re-measured sup residual.
    """
    knots = Constants.default_knots if knots is None else knots
    if not family:
        raise ValueError("family must not be empty")
    g = np.asarray(g, dtype=float).ravel()
    if g.size != K.size:
        raise ValueError(f"target has {g.size} values, the set has {K.size} points")

    if np.all(g == g[0]):
        lo, hi = image_interval(family[0], K)
        return _decomposition_from_fit(
            g, K.points, [family[0]], [TabulatedFunction.constant(float(g[0]), 0.5 * (lo + hi))]
        )

    columns = [f.evaluate(K.points) for f in family]
    knot_vectors = []
    for f, t in zip(family, columns):
        lo, hi = image_interval(f, K)
        knot_vectors.append(knot_grid(lo, hi, knots, samples=t))

    if tolerance is None:
        fit = fit_additive(columns, g, knot_vectors)
        threshold = Constants.prune_tol * max(1.0, float(np.max(np.abs(g))))
        kept = [i for i, u in enumerate(fit.tables) if float(np.max(np.abs(u.values))) > threshold]
        if not kept:
            kept = [0]
        return _decomposition_from_fit(g, K.points, [family[i] for i in kept], [fit.tables[i] for i in kept])

    selected: list[int] = []
    best: Optional[Decomposition] = None
    remaining = list(range(len(family)))
    while remaining:
        step_best: Optional[tuple[int, Decomposition]] = None
        for i in remaining:
            trial = selected + [i]
            fit = fit_additive([columns[j] for j in trial], g, [knot_vectors[j] for j in trial])
            dec = _decomposition_from_fit(g, K.points, [family[j] for j in trial], fit.tables)
            if step_best is None or dec.residual < step_best[1].residual:
                step_best = (i, dec)
        index, best = step_best
        selected.append(index)
        remaining.remove(index)
        logger.debug(f"decompose: added feature #{index}, residual {best.residual:.3e}")
        if best.residual <= tolerance:
            break
    return best


def _decompose_escalating(
        g: np.ndarray,
        K: SampledCompactSet,
        family: Sequence[FeatureMap],
        knots: int | str,
        knot_cap: int,
        tolerance: float,
) -> Decomposition:
    if knots == "data":
        return decompose(g, K, family, "data", tolerance)

    k = int(knots)
    best: Optional[Decomposition] = None
    while True:
        dec = decompose(g, K, family, k, tolerance)
        if best is None or dec.residual < best.residual:
            best = dec
        if best.residual <= tolerance or k >= knot_cap:
            break
        k = min(2 * k - 1, knot_cap)
        logger.debug(f"decompose: residual {best.residual:.3e} > {tolerance:.3e}, escalating to {k} knots")

    if best.residual > tolerance:
        dec = decompose(g, K, family, "data", tolerance)
        if dec.residual < best.residual:
            best = dec
    return best


def _fit_term(
        f: FeatureMap,
        u: TabulatedFunction,
        K: SampledCompactSet,
        sigma: Activation,
        tolerance: float,
        terms_schedule: Sequence[int],
        strategy: NodeStrategy,
        seed: int,
) -> RidgeExpansion:
    values = f.evaluate(K.points)
    lo, hi = image_interval(f, K)
    best: Optional[RidgeExpansion] = None
    for n_terms in terms_schedule:
        ridge = fit_univariate(u, sigma, n_terms, strategy, seed, grid=values, interval=(lo, hi))
        if best is None or ridge.sup_error < best.sup_error:
            best = ridge
        if best.sup_error <= tolerance:
            break
        logger.debug(f"ridge fit of {f.describe()}: {n_terms} terms leave {ridge.sup_error:.3e} > {tolerance:.3e}")
    return best


def build_shallow_universal(
        g,
        K: SampledCompactSet,
        family: Sequence[FeatureMap],
        sigma: Activation | str,
        eps: float,
        knots: Optional[int | str] = None,
        terms_schedule: Optional[Sequence[int]] = None,
        seed: int = 0,
        *,
        knot_cap: Optional[int] = None,
        strategy: NodeStrategy | str = NodeStrategy.NESTED,
) -> tuple[ShallowTFNN, BuildReport]:
    """
    Summary:
        Shallow universality pipeline. Each component g_k is decomposed over the family to
        eps / (2 sqrt(m)), then every table u_{k,i} is replaced by a ridge expansion within
        eps / (2 sqrt(m) M_k). All ridge terms of all components share one hidden layer.

    Args:
        g: Target values on K, shape (N,) or (N, m).
        K: The sample.
        family: Feature family.
        sigma: Activation.
        eps: Requested sup error, > 0.
        knots: Initial knots per feature (escalates k -> 2k - 1 up to knot_cap, then "data").
        terms_schedule: Ridge sizes tried in order.
        seed: Seed for random node strategies.
        knot_cap: Upper bound of the knot escalation.
        strategy: Ridge node strategy.

    Returns:
        The network and its report; budget_exceeded is set when a stage cap was hit.
    """
    knots = Constants.default_knots if knots is None else knots
    terms_schedule = Constants.terms_schedule if terms_schedule is None else terms_schedule
    knot_cap = Constants.knot_cap if knot_cap is None else knot_cap
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not family:
        raise ValueError("family must not be empty")
    sigma = parse_activation(sigma)
    strategy = NodeStrategy(strategy)
    targets = target_matrix(g, K.size)
    m = targets.shape[1]

    budget_decomp = eps / (2.0 * math.sqrt(m))
    features: list[FeatureMap] = []
    weights: list[float] = []
    biases: list[float] = []
    coef_rows: list[tuple[int, float]] = []
    exceeded = False
    decomp_residuals, ridge_budgets, M_k = [], [], []

    for k in range(m):
        dec = _decompose_escalating(targets[:, k], K, family, knots, knot_cap, budget_decomp)
        exceeded |= dec.residual > budget_decomp
        budget_ridge = eps / (2.0 * math.sqrt(m) * dec.M)
        decomp_residuals.append(dec.residual)
        ridge_budgets.append(budget_ridge)
        M_k.append(dec.M)

        for f, u in dec.terms:
            ridge = _fit_term(f, u, K, sigma, budget_ridge, terms_schedule, strategy, seed)
            exceeded |= ridge.sup_error > budget_ridge
            for c, w, theta in ridge.terms:
                features.append(f)
                weights.append(w)
                biases.append(theta)
                coef_rows.append((k, c))

    out_matrix = np.zeros((m, len(features)))
    for i, (k, c) in enumerate(coef_rows):
        out_matrix[k, i] = c
    net = ShallowTFNN(features, weights, biases, out_matrix, np.zeros(m), sigma)

    achieved = sup_seminorm(net.evaluate(K.points), targets)
    report = BuildReport(
        requested_eps=eps,
        achieved_error=achieved,
        width=net.r,
        depth=0,
        term_count=net.r,
        budgets={
            "total": eps,
            "decomposition": budget_decomp,
            "ridge": ridge_budgets,
        },
        budget_exceeded=bool(exceeded or achieved > eps),
        n=len(family),
        m=m,
        M=max(M_k),
        extras={"M_k": M_k, "decomposition_residuals": decomp_residuals},
    )
    logger.info(
        f"build_shallow_universal: {net.r} hidden term(s), achieved {achieved:.3e} (eps {eps:g})"
        + (" [budget exceeded]" if report.budget_exceeded else "")
    )
    return net, report


def build_lcs_shallow(
        g,
        K: SampledCompactSet,
        base: Sequence[FeatureMap],
        scales: Sequence[float],
        sigma: Activation | str,
        eps: float,
        *,
        include_base: bool = False,
        knots: Optional[int | str] = None,
        terms_schedule: Optional[Sequence[int]] = None,
        seed: int = 0,
        knot_cap: Optional[int] = None,
) -> tuple[ShallowTFNN, BuildReport]:
    """The shallow pipeline over the exponential dictionary {1} u {exp(s * l) : l in base, s in scales}."""
    family = make_exponential_dictionary(base, scales, include_base=include_base)
    net, report = build_shallow_universal(
        g, K, family, sigma, eps, knots, terms_schedule, seed, knot_cap=knot_cap
    )
    report.extras["dictionary_size"] = len(family)
    report.extras["scales"] = [float(s) for s in scales]
    return net, report


def _functional_weights(f: FeatureMap, size: int) -> np.ndarray:
    if isinstance(f, PointEvalFeature):
        weights = np.zeros(size)
        weights[f.index] = 1.0
        return weights
    if isinstance(f, QuadratureFeature):
        return f.weights
    raise TypeError(f"{f!r} is not a linear functional on sampled functions")


def _spline_operator(grid: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """S with (S @ u[nodes]) = cubic spline through the node values, on the full grid."""
    basis = np.eye(nodes.size)
    if nodes.size == 1:
        return np.ones((grid.size, 1))
    spline = CubicSpline(grid[nodes], basis, axis=0, bc_type="not-a-knot")
    return spline(grid)


def build_functional_net(
        target,
        V: FunctionClassV,
        sigma: Activation | str,
        eps: float,
        k_nodes: int = 9,
        seed: int = 0,
        *,
        knots: Optional[int | str] = None,
        terms_schedule: Optional[Sequence[int]] = None,
        knot_cap: Optional[int] = None,
) -> tuple[ShallowTFNN, BuildReport]:
    """
    Summary:
        Approximates a functional on V by a net whose first layer only reads the values u(y_j)
        at k_nodes shared grid nodes.

        Stage 1 builds a shallow net over the moments int u(t) t^r dt (r = 0, 1, 2) and the
        node evaluations within eps / 2. Stage 2 replaces every functional l by
        u -> l(S u), S the cubic spline through the node values, and checks the output change
        against sum_i |A[:, i]| |w_i| Lip(sigma) delta_i, delta_i = sup_V |l_i - l_i o S|.

    Args:
        target: Target values on V.sample(), shape (N,) or (N, m).
        V: The function class.
        sigma: Activation.
        eps: Requested sup error.
        k_nodes: Number of shared evaluation nodes.
        seed: Seed for random node strategies.

    Returns:
        The network over point-evaluation functionals and its report.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if k_nodes < 1:
        raise ValueError("k_nodes must be >= 1")
    sigma = parse_activation(sigma)
    K = V.sample()
    grid = V.domain_grid
    nodes = np.unique(np.round(np.linspace(0, grid.size - 1, min(k_nodes, grid.size))).astype(int))

    family: list[FeatureMap] = [
        QuadratureFeature(trapezoid_weights(grid, r), label=f"int u(t) t^{r} dt") for r in range(Constants.moment_count)
    ]
    family.extend(PointEvalFeature(int(j)) for j in nodes)
    stage1, report1 = build_shallow_universal(
        target, K, family, sigma, eps / 2.0, knots, terms_schedule, seed, knot_cap=knot_cap
    )

    S = _spline_operator(grid, nodes)
    substituted: dict[int, FeatureMap] = {}
    deltas: dict[int, float] = {}
    for f in stage1.features:
        if id(f) in substituted:
            continue
        ell = _functional_weights(f, grid.size)
        xi = np.zeros(grid.size)
        xi[nodes] = ell @ S
        substituted[id(f)] = QuadratureFeature(xi, label=f"{f.describe()} at {nodes.size} nodes")
        deltas[id(f)] = float(np.max(np.abs(K.points @ (ell - xi))))

    features = [substituted[id(f)] for f in stage1.features]
    delta = np.array([deltas[id(f)] for f in stage1.features])
    net = ShallowTFNN(features, stage1.in_weights, stage1.in_biases, stage1.out_matrix, stage1.out_bias, sigma)

    pre = stage1.pre_activations(K.points)
    shift = np.abs(stage1.in_weights) * delta
    pad = float(np.max(shift)) if shift.size else 0.0
    lo, hi = (float(np.min(pre)) - pad, float(np.max(pre)) + pad) if pre.size else (0.0, 0.0)
    lip = 1.01 * lipschitz_on(sigma, lo, hi)
    column_norms = np.linalg.norm(stage1.out_matrix, axis=0)
    bound = float(np.sum(column_norms * shift) * lip)

    targets = target_matrix(target, K.size)
    change = sup_seminorm(net.evaluate(K.points), stage1.evaluate(K.points))
    achieved = sup_seminorm(net.evaluate(K.points), targets)
    report = BuildReport(
        requested_eps=eps,
        achieved_error=achieved,
        width=net.r,
        depth=0,
        term_count=net.r,
        budgets={"total": eps, "stage1": eps / 2.0, "substitution": eps / 2.0, **{
            f"stage1_{k}": v for k, v in report1.budgets.items() if k != "total"
        }},
        budget_exceeded=bool(report1.budget_exceeded or achieved > eps),
        n=len(family),
        m=targets.shape[1],
        M=report1.M,
        extras={
            "nodes": nodes.tolist(),
            "stage1_error": report1.achieved_error,
            "max_delta": float(np.max(delta)) if delta.size else 0.0,
            "lipschitz": lip,
            "perturbation": change,
            "perturbation_bound": bound,
            "perturbation_ok": bool(change <= bound + 1e-12),
        },
    )
    logger.info(
        f"build_functional_net: {nodes.size} node(s), stage 1 {report1.achieved_error:.3e}, "
        f"substitution {change:.3e} (bound {bound:.3e}), achieved {achieved:.3e}"
    )
    return net, report


class TabulatedMap:
    """u on F(K) given by its table; other queries take the value of the nearest image point."""

    def __init__(self, images, values):
        images = np.asarray(images, dtype=float)
        values = np.asarray(values, dtype=float)
        images = images.reshape(images.shape[0], -1)
        values = values.reshape(values.shape[0], -1)
        if images.shape[0] != values.shape[0] or images.shape[0] == 0:
            raise ValueError("images and values must be nonempty and aligned")
        order = np.lexsort(images.T[::-1])
        self.images = images[order]
        self.values = values[order]

    @property
    def n(self) -> int:
        return int(self.images.shape[1])

    @property
    def m(self) -> int:
        return int(self.values.shape[1])

    def __call__(self, y) -> np.ndarray:
        queries = np.asarray(y, dtype=float).reshape(-1, self.n)
        nearest = np.empty(queries.shape[0], dtype=int)
        for start in range(0, queries.shape[0], 1024):
            block = queries[start:start + 1024]
            # argmin returns the first minimum, the lexicographically smallest image
            nearest[start:start + len(block)] = np.argmin(cdist(block, self.images), axis=1)
        return self.values[nearest]

    def to_dict(self) -> dict:
        return {"images": self.images.tolist(), "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> TabulatedMap:
        return cls(np.array(data["images"], dtype=float), np.array(data["values"], dtype=float))


def compose_via_embedding(g, K: SampledCompactSet, F: FeatureVectorMap) -> tuple[TabulatedMap, dict]:
    """Builds u with u(F(x)) = g(x) on K; raises InjectivityFailure if F identifies two points."""
    check = check_injectivity(F, K)
    if not check.injective:
        raise InjectivityFailure(check.witness, check.indices)
    targets = target_matrix(g, K.size)
    u = TabulatedMap(F.evaluate(K.points), targets)
    return u, {"injectivity": check.to_dict(), "size": K.size, "n": F.n, "m": u.m}


@dataclass
class IdentityBlock:
    """t -> post_scale * sigma(pre_scale * t + pre_shift) + post_shift, channelwise."""
    activation: Activation
    pre_scale: np.ndarray
    pre_shift: np.ndarray
    post_scale: np.ndarray
    post_shift: np.ndarray

    @property
    def width(self) -> int:
        return int(self.pre_scale.size)

    def encode(self, t) -> np.ndarray:
        return self.activation(self.pre_scale * np.asarray(t, dtype=float) + self.pre_shift)

    def decode(self, z) -> np.ndarray:
        return self.post_scale * np.asarray(z, dtype=float) + self.post_shift

    def apply(self, t) -> np.ndarray:
        return self.decode(self.encode(t))

    def deviation(self, t) -> float:
        t = np.asarray(t, dtype=float)
        if t.ndim == 1:
            t = np.repeat(t[:, None], self.width, axis=1)
        return float(np.max(np.abs(self.apply(t) - t)))


def make_identity_block(
        sigma: Activation | str,
        kl: Optional[KLPoint],
        h: Optional[float],
        width: int,
        *,
        bound=1.0,
        center=0.0,
) -> IdentityBlock:
    """
    Summary:
        One affine / sigma / affine block close to the identity on [center - bound, center + bound].
        relu-family activations use the exact shift form relu(t + B) - B; any other sigma uses
        (sigma(t0 + h s) - sigma(t0)) / (h sigma'(t0)) on the rescaled input s.

    Args:
        sigma: Activation.
        kl: Point of differentiability, unused for relu-family activations.
        h: Step of the differentiable form.
        width: Number of channels.
        bound: Radius of the operating range, scalar or per channel.
        center: Centre of the operating range, scalar or per channel.

    Returns:
        The block.
    """
    sigma = parse_activation(sigma)
    if width < 1:
        raise ValueError("width must be >= 1")
    radius = np.broadcast_to(np.asarray(bound, dtype=float), (width,)).copy()
    centre = np.broadcast_to(np.asarray(center, dtype=float), (width,)).copy()
    if np.any(radius <= 0):
        raise ValueError("bound must be positive")
    ones = np.ones(width)

    if sigma.name == "identity":
        return IdentityBlock(sigma, ones, np.zeros(width), ones.copy(), np.zeros(width))
    if sigma.name in Activations.relu_family:
        shift = np.maximum(0.0, radius - centre)
        return IdentityBlock(sigma, ones, shift, ones.copy(), -shift)

    if kl is None:
        raise ValueError(f"{sigma.spec} needs a KL point for identity blocks")
    if kl.derivative == 0.0:
        raise ZeroDerivative(sigma.spec, kl.t0)
    if h is None or h <= 0:
        raise ValueError("h must be positive")
    level = float(sigma(kl.t0))
    pre_scale = h / radius
    pre_shift = kl.t0 - h * centre / radius
    post_scale = radius / (h * kl.derivative)
    post_shift = centre - radius * level / (h * kl.derivative)
    return IdentityBlock(sigma, pre_scale, pre_shift, post_scale, post_shift)


def tune_identity_step(
        sigma: Activation | str,
        kl: Optional[KLPoint],
        target: float,
        h: Optional[float] = None,
) -> Optional[float]:
    """Halves h until the unit block deviates from the identity by at most `target` on [-1, 1]."""
    h = Constants.identity_h if h is None else h
    sigma = parse_activation(sigma)
    if sigma.is_relu_family:
        return None
    grid = np.linspace(-1.0, 1.0, 201)
    dev = make_identity_block(sigma, kl, h, 1).deviation(grid)
    while dev > target and h / 2.0 >= Constants.identity_h_floor:
        trial = make_identity_block(sigma, kl, h / 2.0, 1).deviation(grid)
        if trial >= dev:
            # rounding dominates from here on
            break
        h, dev = h / 2.0, trial
        logger.debug(f"identity block: h={h:.3e}, deviation {dev:.3e}")
    return h


@dataclass
class EuclideanRidgeNet:
    """Psi(y) = C sigma(A y - theta) - b on R^n."""
    activation: Activation
    directions: np.ndarray
    biases: np.ndarray
    coefficients: np.ndarray
    out_bias: np.ndarray

    def __post_init__(self):
        self.activation = parse_activation(self.activation)
        self.out_bias = np.asarray(self.out_bias, dtype=float).ravel()
        self.biases = np.asarray(self.biases, dtype=float).ravel()
        self.directions = np.asarray(self.directions, dtype=float).reshape(self.biases.size, -1)
        self.coefficients = np.asarray(self.coefficients, dtype=float).reshape(self.out_bias.size, self.biases.size)

    @property
    def N(self) -> int:
        return int(self.biases.size)

    @property
    def n(self) -> int:
        return int(self.directions.shape[1])

    @property
    def m(self) -> int:
        return int(self.out_bias.size)

    def neurons(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float).reshape(-1, self.n)
        return self.activation(y @ self.directions.T - self.biases)

    def evaluate(self, y) -> np.ndarray:
        return self.neurons(y) @ self.coefficients.T - self.out_bias

    def to_dict(self) -> dict:
        return {
            "activation": self.activation.spec,
            "directions": self.directions.tolist(),
            "biases": self.biases.tolist(),
            "coefficients": self.coefficients.tolist(),
            "out_bias": self.out_bias.tolist(),
        }


def _direction_dictionary(n: int, seed: int) -> np.ndarray:
    # the node schedule pairs every centre with both signs, so +e_i also covers -e_i
    rng = np.random.default_rng(seed)
    random = rng.standard_normal((4 * n, n))
    random /= np.linalg.norm(random, axis=1, keepdims=True)
    return np.vstack([np.eye(n), random])


def fit_euclidean_ridge(
        Y: np.ndarray,
        G: np.ndarray,
        sigma: Activation | str,
        tolerance: float,
        seed: int = 0,
        schedule: Optional[Sequence[int]] = None,
) -> tuple[EuclideanRidgeNet, float]:
    """Least-squares ridge net on the directions dictionary, growing the nodes per direction until within tolerance."""
    schedule = Constants.direction_nodes_schedule if schedule is None else schedule
    sigma = parse_activation(sigma)
    Y = np.asarray(Y, dtype=float).reshape(G.shape[0], -1)
    directions = _direction_dictionary(Y.shape[1], seed)

    best: Optional[tuple[EuclideanRidgeNet, float]] = None
    for T in schedule:
        rows, thetas = [], []
        for a in directions:
            proj = Y @ a
            lo, hi = float(np.min(proj)), float(np.max(proj))
            w, theta = node_schedule(lo, hi, T, NodeStrategy.NESTED)
            rows.extend(a * wi for wi in w)
            thetas.extend(theta)
        A = np.array(rows).reshape(-1, Y.shape[1])
        theta = np.array(thetas)
        columns = sigma(Y @ A.T - theta) if A.shape[0] else np.zeros((Y.shape[0], 0))
        design = np.hstack([columns, np.ones((Y.shape[0], 1))])
        coef = np.column_stack([ridge_lstsq(design, G[:, k], Constants.ridge_damping) for k in range(G.shape[1])])

        C, bias = coef[:-1].T, -coef[-1]
        if A.shape[0]:
            threshold = Constants.prune_tol * max(1.0, float(np.max(np.abs(G))))
            contribution = np.max(np.abs(C), axis=0) * np.max(np.abs(columns), axis=0)
            keep = contribution > threshold
            A, theta, C = A[keep], theta[keep], C[:, keep]
        psi = EuclideanRidgeNet(sigma, A, theta, C, bias)
        error = sup_seminorm(psi.evaluate(Y), G)
        logger.debug(f"euclidean ridge fit: {T} node(s) per direction, {psi.N} neuron(s), error {error:.3e}")
        if best is None or error < best[1]:
            best = (psi, error)
        if best[1] <= tolerance:
            break
    return best


def _padded(lo: float, hi: float) -> tuple[float, float]:
    """(centre, radius) of [lo, hi] widened by 1 + half its length on each side."""
    pad = 1.0 + 0.5 * (hi - lo)
    return 0.5 * (lo + hi), 0.5 * (hi - lo) + pad


class _Layer:
    """Affine rows over the previous layer's channels, one per named channel."""

    def __init__(self, prev_width: int):
        self.prev_width = prev_width
        self.names: list[str] = []
        self.rows: list[np.ndarray] = []
        self.biases: list[float] = []

    def add(self, name: str, row: np.ndarray, const: float) -> None:
        # pre-activation = row . z + const, stored as A z - b
        self.names.append(name)
        self.rows.append(row)
        self.biases.append(-const)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def matrix(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array(self.rows).reshape(len(self.rows), self.prev_width), np.array(self.biases)


def build_deep_narrow(
        g,
        K: SampledCompactSet,
        F: FeatureVectorMap,
        sigma: Activation | str,
        eps: float,
        seed: int = 0,
        *,
        psi: Optional[EuclideanRidgeNet] = None,
        h: Optional[float] = None,
) -> tuple[DeepTFNN, BuildReport]:
    """
    Summary:
        Deep narrow pipeline of width at most n + m + 2: u on F(K) by table lookup, a Euclidean
        ridge net Psi ~ u within eps / 2, then a register network that computes one neuron of
        Psi per layer.

        Channels: n registers carrying F(x), m accumulators carrying partial sums, one compute
        channel holding sigma(a_j . y - theta_j) raw and one carry channel passing the previous
        compute value on. Neuron j is added to the accumulators two layers after it is computed,
        so depth is N + 2.

    Args:
        g: Target values on K, shape (N,) or (N, m).
        K: The sample.
        F: Feature vector map of arity n, injective on K.
        sigma: Activation, relu-family or with a KL point.
        eps: Requested sup error.
        seed: Seed of the random direction dictionary.
        psi: Replaces the fitted Euclidean net when given.
        h: Identity block step; tuned from eps when omitted.

    Returns:
        The deep network and its report.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    sigma = parse_activation(sigma)
    u, compose_info = compose_via_embedding(g, K, F)
    targets = target_matrix(g, K.size)
    Y = F.evaluate(K.points)
    n, m = F.n, targets.shape[1]

    kl = None
    if not sigma.is_relu_family:
        kl = find_kl_point(sigma, np.linspace(-2.0, 2.0, 17))

    if psi is None:
        psi, stage2_error = fit_euclidean_ridge(Y, targets, sigma, eps / 2.0, seed)
    else:
        stage2_error = sup_seminorm(psi.evaluate(Y), targets)
    N = psi.N

    # channel ranges from the data
    neuron_values = psi.neurons(Y)
    partial = np.concatenate([np.zeros((Y.shape[0], 1, m)),
                              np.cumsum(neuron_values[:, :, None] * psi.coefficients.T[None, :, :], axis=1)], axis=1)
    reg_c, reg_r = zip(*(_padded(float(Y[:, i].min()), float(Y[:, i].max())) for i in range(n)))
    acc_c, acc_r = zip(*(_padded(float(partial[:, :, k].min()), float(partial[:, :, k].max())) for k in range(m)))
    if N:
        car_c, car_r = _padded(float(neuron_values.min()), float(neuron_values.max()))
    else:
        car_c, car_r = 0.0, 1.0

    depth = N + 2 if N else 0
    if h is None and kl is not None:
        dynamic_range = max(max(reg_r), max(acc_r), car_r)
        h = tune_identity_step(sigma, kl, eps / (4.0 * max(depth, 1) * dynamic_range))

    reg = make_identity_block(sigma, kl, h, n, bound=np.array(reg_r), center=np.array(reg_c))
    acc = make_identity_block(sigma, kl, h, m, bound=np.array(acc_r), center=np.array(acc_c))
    car = make_identity_block(sigma, kl, h, 1, bound=car_r, center=car_c)

    # layer 0: registers hold F(x), accumulators hold 0
    features: list[FeatureMap] = []
    weights, biases, names = [], [], []
    for i in range(n):
        features.append(F.components[i])
        weights.append(reg.pre_scale[i])
        biases.append(-reg.pre_shift[i])
        names.append(f"R{i}")
    for k in range(m):
        features.append(F.components[0])
        weights.append(0.0)
        biases.append(-acc.pre_shift[k])
        names.append(f"A{k}")

    hidden: list[tuple[np.ndarray, np.ndarray]] = []
    prev = names
    for j in range(1, depth + 1):
        layer = _Layer(len(prev))
        col = {name: idx for idx, name in enumerate(prev)}

        if j <= N - 1:
            for i in range(n):
                row = np.zeros(len(prev))
                row[col[f"R{i}"]] = reg.pre_scale[i] * reg.post_scale[i]
                layer.add(f"R{i}", row, reg.pre_scale[i] * reg.post_shift[i] + reg.pre_shift[i])
        if j <= N:
            a, theta = psi.directions[j - 1], psi.biases[j - 1]
            row = np.zeros(len(prev))
            for i in range(n):
                row[col[f"R{i}"]] = a[i] * reg.post_scale[i]
            layer.add("compute", row, float(np.dot(a, reg.post_shift)) - theta)
        if "compute" in col:
            row = np.zeros(len(prev))
            row[col["compute"]] = car.pre_scale[0]
            layer.add("carry", row, car.pre_shift[0])
        for k in range(m):
            row = np.zeros(len(prev))
            row[col[f"A{k}"]] = acc.post_scale[k]
            const = acc.post_shift[k]
            if "carry" in col:
                # the carry channel of layer j - 1 holds neuron j - 2
                c = psi.coefficients[k, j - 3]
                row[col["carry"]] += c * car.post_scale[0]
                const += c * car.post_shift[0]
            layer.add(f"A{k}", acc.pre_scale[k] * row, acc.pre_scale[k] * const + acc.pre_shift[k])

        hidden.append(layer.matrix())
        prev = layer.names

    col = {name: idx for idx, name in enumerate(prev)}
    out_A = np.zeros((m, len(prev)))
    out_b = np.array(psi.out_bias, dtype=float)
    for k in range(m):
        if depth:
            out_A[k, col[f"A{k}"]] = acc.post_scale[k]
            out_b[k] -= acc.post_shift[k]
    net = DeepTFNN(features, weights, biases, hidden, (out_A, out_b), sigma)

    if net.width > n + m + 2:
        raise AssertionError(f"register network has width {net.width} > n + m + 2 = {n + m + 2}")

    achieved = sup_seminorm(net.evaluate(K.points), targets)
    register_deviation = sup_seminorm(net.evaluate(K.points), psi.evaluate(Y))
    report = BuildReport(
        requested_eps=eps,
        achieved_error=achieved,
        width=net.width,
        depth=net.depth,
        term_count=N,
        budgets={"total": eps, "stage1": 0.0, "stage2": eps / 2.0, "stage3": eps / 2.0},
        budget_exceeded=bool(stage2_error > eps / 2.0 or achieved > eps),
        n=n,
        m=m,
        extras={
            "width_bound": n + m + 2,
            "stage2_error": stage2_error,
            "register_deviation": register_deviation,
            "identity_step": h,
            "psi": psi.to_dict(),
            "embedding": compose_info,
        },
    )
    logger.info(
        f"build_deep_narrow: N={N}, width {net.width} <= {n + m + 2}, depth {net.depth}, achieved {achieved:.3e}"
        + (" [budget exceeded]" if report.budget_exceeded else "")
    )
    return net, report
