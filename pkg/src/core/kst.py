from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from src.enums import PsiKind
from src.static import Constants
from .activation import Activation
from .builders import build_deep_narrow, target_matrix
from .domain import ProductSpace, SampledCompactSet, image_interval
from .errors import InjectivityFailure, UnsupportedSpace
from .features import FeatureVectorMap, OstrandSumFeature, check_injectivity
from .piecewise import TabulatedFunction, fit_additive, knot_grid

logger = logging.getLogger("tfnn.kst")

__all__ = (
    "InnerPsi",
    "OstrandFeatureSet",
    "OuterFunction",
    "sprecher_psi",
    "ostrand_features_finite",
    "kolmogorov_features",
    "ostrand_features",
    "fit_outer_functions",
    "build_ostrand_deep_narrow",
)


def _beta(k: int, n: int) -> int:
    return (n ** k - 1) // (n - 1) if n > 1 else k


@lru_cache(maxsize=None)
def _psi_k(D: int, k: int, gamma: int, n: int) -> float:
    """Koppen's inner function at the depth-k rational D / gamma**k."""
    if k == 1:
        return D / gamma
    digit = D % gamma
    if digit < gamma - 1:
        return _psi_k(D // gamma, k - 1, gamma, n) + digit * float(gamma) ** (-_beta(k, n))
    return 0.5 * (_psi_k(D - 1, k, gamma, n) + _psi_k(D // gamma + 1, k - 1, gamma, n))


def _sprecher_unit(x: float, gamma: int, depth: int, n: int) -> float:
    scaled = x * gamma ** depth
    D = int(np.floor(scaled + 1e-9))
    D = min(max(D, 0), gamma ** depth)
    frac = min(max(scaled - D, 0.0), 1.0)
    value = _psi_k(D, depth, gamma, n)
    if frac > 0.0 and D < gamma ** depth:
        value = (1.0 - frac) * value + frac * _psi_k(D + 1, depth, gamma, n)
    return value


def sprecher_psi(x, gamma: Optional[int] = None, depth: Optional[int] = None, *, n: int = 2):
    """
    Summary:
        Koppen-corrected Sprecher inner function on [0, 1]: exact on depth-k gamma-adic
        rationals, linear between consecutive ones. Beyond 1 it continues as 1 + psi(x - 1).

    Args:
        x: Point or array of points in [0, 2].
        gamma: Base, >= 10.
        depth: Truncation depth, 1..8.
        n: Dimension entering the exponents beta(k) = (n**k - 1) / (n - 1).

    Returns:
        psi(x), float for scalars.
    """
    gamma = Constants.sprecher_gamma if gamma is None else gamma
    depth = Constants.sprecher_depth if depth is None else depth
    if gamma < 10:
        raise ValueError("gamma must be >= 10")
    if not 1 <= depth <= 8:
        raise ValueError("depth must be in 1..8")
    arr = np.asarray(x, dtype=float)
    out = np.empty(arr.shape)
    for idx, value in np.ndenumerate(arr):
        value = min(max(value, 0.0), 2.0)
        if value > 1.0:
            out[idx] = 1.0 + _sprecher_unit(value - 1.0, gamma, depth, n)
        else:
            out[idx] = _sprecher_unit(value, gamma, depth, n)
    return float(out) if out.ndim == 0 else out


@dataclass
class InnerPsi:
    """
    One inner function psi_pq on a factor, with values in [0, 1].

    finite_table: ``values[label]``; monotone_pl: interpolation through (knots, values);
    sprecher: ``weight * sprecher_psi(x + shift) / scale`` with x rescaled from [lo, hi] to [0, 1].
    """
    kind: PsiKind
    knots: np.ndarray = field(default_factory=lambda: np.zeros(0))
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    lo: float = 0.0
    hi: float = 1.0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.kind = PsiKind(self.kind)
        self.knots = np.asarray(self.knots, dtype=float).ravel()
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.kind is not PsiKind.SPRECHER:
            if self.knots.size == 0 or self.knots.size != self.values.size:
                raise ValueError("table inner functions need aligned knots and values")
            if np.any(self.values < 0.0) or np.any(self.values > 1.0):
                raise ValueError("inner function values must lie in [0, 1]")

    def evaluate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind is PsiKind.FINITE_TABLE:
            return np.interp(x, self.knots, self.values)
        unit = (x - self.lo) / (self.hi - self.lo)
        if self.kind is PsiKind.MONOTONE_PL:
            return np.interp(unit, self.knots, self.values)
        p = self.params
        raw = sprecher_psi(unit + p["shift"], p["gamma"], p["depth"], n=p["n"])
        return p["weight"] * np.asarray(raw) / p["scale"]

    def to_dict(self) -> dict:
        data = {"kind": self.kind.value}
        if self.kind is not PsiKind.SPRECHER:
            data["knots"] = self.knots.tolist()
            data["values"] = self.values.tolist()
        if self.kind is not PsiKind.FINITE_TABLE:
            data["lo"], data["hi"] = self.lo, self.hi
        if self.params:
            data["params"] = dict(self.params)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> InnerPsi:
        return cls(
            PsiKind(data["kind"]),
            np.array(data.get("knots", []), dtype=float),
            np.array(data.get("values", []), dtype=float),
            float(data.get("lo", 0.0)),
            float(data.get("hi", 1.0)),
            dict(data.get("params", {})),
        )


@dataclass
class OstrandFeatureSet:
    """2M + 1 sum-form features s_q(x) = sum_p psi_pq(x_p) on a product space."""
    space: ProductSpace
    psis: list[list[InnerPsi]]
    mode: PsiKind
    weighting: str = "unweighted"
    seed: Optional[int] = None
    features: list[OstrandSumFeature] = field(default_factory=list)

    def __post_init__(self):
        if not self.features:
            self.features = [
                OstrandSumFeature([row[q] for row in self.psis], q) for q in range(2 * self.space.M + 1)
            ]
        if len(self.features) != 2 * self.space.M + 1:
            raise ValueError(f"expected {2 * self.space.M + 1} features, got {len(self.features)}")

    @property
    def M(self) -> int:
        return self.space.M

    @property
    def n(self) -> int:
        return len(self.features)

    def feature_map(self) -> FeatureVectorMap:
        return FeatureVectorMap(self.features)

    def to_dict(self) -> dict:
        return {
            "space": self.space.to_dict(),
            "mode": self.mode.value,
            "weighting": self.weighting,
            "seed": self.seed,
            "feature_count": self.n,
            "psis": [[psi.to_dict() for psi in row] for row in self.psis],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> OstrandFeatureSet:
        return cls(
            ProductSpace.from_dict(data["space"]),
            [[InnerPsi.from_dict(p) for p in row] for row in data["psis"]],
            PsiKind(data["mode"]),
            data.get("weighting", "unweighted"),
            data.get("seed"),
        )

    @classmethod
    def from_json(cls, raw: str) -> OstrandFeatureSet:
        return cls.from_dict(json.loads(raw))


@dataclass
class OuterFunction:
    """h_q for every feature, piecewise linear."""
    tables: list[TabulatedFunction]
    residual: float

    def evaluate(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float).reshape(-1, len(self.tables))
        return sum(h(s[:, q]) for q, h in enumerate(self.tables))

    def to_dict(self) -> dict:
        return {"residual": self.residual, "tables": [h.to_dict() for h in self.tables]}

    @classmethod
    def from_dict(cls, data: dict) -> OuterFunction:
        return cls([TabulatedFunction.from_dict(h) for h in data["tables"]], float(data["residual"]))


def ostrand_features_finite(space: ProductSpace) -> OstrandFeatureSet:
    """
    One injective feature on a product of finite spaces: factor p contributes
    label_index * stride_p, strides being mixed-radix place values (first factor least
    significant), scaled by 1 / (N - 1) into [0, 1].
    """
    if not space.is_finite:
        raise UnsupportedSpace("with interval factors (finite tables need all-finite factors)")
    sizes = [f.size for f in space.factors]
    total = int(np.prod(sizes))
    norm = float(total - 1) if total > 1 else 1.0

    psis, stride = [], 1
    for size in sizes:
        labels = np.arange(size, dtype=float)
        psis.append([InnerPsi(PsiKind.FINITE_TABLE, labels, labels * stride / norm, params={"stride": stride})])
        stride *= size

    features = OstrandFeatureSet(space, psis, PsiKind.FINITE_TABLE)
    K = space.grid(2)
    check = check_injectivity(features.feature_map(), K)
    if not check.injective:
        raise InjectivityFailure(check.witness, check.indices)
    logger.debug(f"finite Ostrand feature on {total} point(s), strides {[p[0].params['stride'] for p in psis]}")
    return features


def _sprecher_psis(d: int, lo: float, hi: float, gamma: int, depth: int) -> list[list[InnerPsi]]:
    a = 1.0 / (gamma * (gamma - 1))
    lambdas = [1.0]
    for p in range(2, d + 1):
        lambdas.append(sum(float(gamma) ** (-(p - 1) * _beta(r, d)) for r in range(1, 12)))
    # largest raw value over all (p, q) keeps every psi_pq within [0, 1]
    scale = max(lambdas) * sprecher_psi(min(1.0 + 2 * d * a, 2.0), gamma, depth, n=d)
    return [
        [
            InnerPsi(
                PsiKind.SPRECHER,
                lo=lo,
                hi=hi,
                params={"gamma": gamma, "depth": depth, "n": d, "shift": q * a, "weight": lambdas[p], "scale": scale},
            )
            for q in range(2 * d + 1)
        ]
        for p in range(d)
    ]


def _monotone_pl_psis(d: int, lo: float, hi: float, seed: int) -> list[list[InnerPsi]]:
    rng = np.random.default_rng(seed)
    segments = Constants.monotone_pl_segments
    knots = np.linspace(0.0, 1.0, segments + 1)
    rows = []
    for _p in range(d):
        row = []
        for _q in range(2 * d + 1):
            slopes = 1.0 + Constants.monotone_pl_roughness * rng.uniform(-1.0, 1.0, size=segments)
            values = np.concatenate([[0.0], np.cumsum(slopes)])
            target = rng.uniform(0.2, 1.0)
            row.append(InnerPsi(PsiKind.MONOTONE_PL, knots, values * (target / values[-1]), lo, hi))
        rows.append(row)
    return rows


def kolmogorov_features(
        d: int,
        mode: PsiKind | str = PsiKind.MONOTONE_PL,
        seed: int = 0,
        *,
        grid: int = 33,
        gamma: Optional[int] = None,
        depth: Optional[int] = None,
        lo: float = 0.0,
        hi: float = 1.0,
        K: Optional[SampledCompactSet] = None,
) -> OstrandFeatureSet:
    """
    Summary:
        2d + 1 sum-form features on [lo, hi]^d whose joint injectivity is verified on the
        working grid. monotone_pl draws fresh inner functions with seed + 1 on failure, up
        to 8 redraws.

    Args:
        d: Dimension, >= 2.
        mode: sprecher or monotone_pl.
        seed: Seed of the monotone_pl draws.
        grid: Points per axis of the working grid.
        gamma: Sprecher base.
        depth: Sprecher depth.
        lo: Lower end of every axis.
        hi: Upper end of every axis.
        K: Working sample; replaces the grid when given.

    Returns:
        The feature set.
    """
    if d < 2:
        raise ValueError("d must be >= 2")
    gamma = Constants.sprecher_gamma if gamma is None else gamma
    depth = Constants.sprecher_depth if depth is None else depth
    mode = PsiKind(mode)
    if mode is PsiKind.FINITE_TABLE:
        raise ValueError("finite tables need a finite product space, use ostrand_features_finite")
    space = ProductSpace.cube(d, lo, hi)
    K = K if K is not None else space.grid(grid)

    if mode is PsiKind.SPRECHER:
        features = OstrandFeatureSet(space, _sprecher_psis(d, lo, hi, gamma, depth), mode, weighting="sprecher-lambda")
        check = check_injectivity(features.feature_map(), K)
        if not check.injective:
            raise InjectivityFailure(check.witness, check.indices)
        return features

    check = None
    for attempt in range(Constants.max_redraws + 1):
        current = seed + attempt
        features = OstrandFeatureSet(space, _monotone_pl_psis(d, lo, hi, current), mode, seed=current)
        check = check_injectivity(features.feature_map(), K)
        if check.injective:
            return features
        logger.debug(f"monotone_pl draw with seed {current} is not injective, redrawing")
    raise InjectivityFailure(check.witness, check.indices)


def ostrand_features(
        space: ProductSpace,
        mode: PsiKind | str = PsiKind.MONOTONE_PL,
        seed: int = 0,
        *,
        grid: int = 33,
        gamma: Optional[int] = None,
        depth: Optional[int] = None,
        K: Optional[SampledCompactSet] = None,
) -> OstrandFeatureSet:
    """Finite tables for all-finite products, cube constructions for products of equal intervals."""
    if space.is_finite:
        return ostrand_features_finite(space)
    if space.is_cube and len(space.factors) >= 2:
        bounds = {(f.lo, f.hi) for f in space.factors}
        if len(bounds) == 1:
            lo, hi = bounds.pop()
            return kolmogorov_features(
                len(space.factors), mode, seed, grid=grid, gamma=gamma, depth=depth, lo=lo, hi=hi, K=K
            )
    kinds = "*".join(f.kind.value for f in space.factors)
    raise UnsupportedSpace(kinds)


def fit_outer_functions(
        f,
        K: SampledCompactSet,
        features: OstrandFeatureSet,
        knots: int | str = 64,
) -> tuple[OuterFunction, float]:
    """Least-squares fit of f by sum_q h_q(s_q(x)) with piecewise-linear h_q; returns the sup residual on K."""
    f = np.asarray(f, dtype=float).ravel()
    if f.size != K.size:
        raise ValueError(f"target has {f.size} values, the set has {K.size} points")

    if np.all(f == f[0]):
        tables = [TabulatedFunction.constant(float(f[0]))]
        tables.extend(TabulatedFunction.constant(0.0) for _ in range(features.n - 1))
        outer = OuterFunction(tables, 0.0)
        return outer, 0.0

    columns = [s.evaluate(K.points) for s in features.features]
    knot_vectors = []
    for s, t in zip(features.features, columns):
        lo, hi = image_interval(s, K)
        knot_vectors.append(knot_grid(lo, hi, knots, samples=t))
    fit = fit_additive(columns, f, knot_vectors)
    outer = OuterFunction(fit.tables, 0.0)
    outer.residual = float(np.max(np.abs(outer.evaluate(np.column_stack(columns)) - f)))
    logger.debug(f"fit_outer_functions: {features.n} outer function(s), residual {outer.residual:.3e}")
    return outer, outer.residual


def build_ostrand_deep_narrow(
        g,
        space: ProductSpace,
        sigma: Activation | str,
        eps: float,
        mode: PsiKind | str = PsiKind.MONOTONE_PL,
        seed: int = 0,
        *,
        K: Optional[SampledCompactSet] = None,
        grid: int = 33,
        features: Optional[OstrandFeatureSet] = None,
        outer_knots: int = 64,
):
    """
    Deep narrow net over the 2M + 1 Ostrand features, width at most 2M + m + 3.
    The report also carries the outer-function residual of every output component.
    """
    K = K if K is not None else space.grid(grid)
    if features is None:
        features = ostrand_features(space, mode, seed, grid=grid, K=K)
    targets = target_matrix(g, K.size)
    m = targets.shape[1]

    net, report = build_deep_narrow(targets, K, features.feature_map(), sigma, eps, seed)
    bound = 2 * features.M + m + 3
    if report.width > bound:
        raise AssertionError(f"Ostrand network has width {report.width} > 2M + m + 3 = {bound}")

    outers = [fit_outer_functions(targets[:, k], K, features, outer_knots)[0] for k in range(m)]
    report.M = features.M
    report.extras.update({
        "ostrand_width_bound": bound,
        "mode": features.mode.value,
        "outer_residuals": [h.residual for h in outers],
        "outer_functions": [h.to_dict() for h in outers],
    })
    logger.info(f"build_ostrand_deep_narrow: M={features.M}, n={features.n}, width {report.width} <= {bound}")
    return net, report
