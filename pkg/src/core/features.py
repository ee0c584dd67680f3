from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from src.enums import FeatureKind
from src.static import Constants
from .domain import SampledCompactSet, image_interval
from .errors import IncompatiblePoint, ZeroDirection
from .piecewise import fit_additive, knot_grid

logger = logging.getLogger("tfnn.features")

__all__ = (
    "FeatureMap",
    "CoordinateFeature",
    "QuadratureFeature",
    "PointEvalFeature",
    "ExponentialFeature",
    "OstrandSumFeature",
    "CustomFeature",
    "FeatureVectorMap",
    "InjectivityReport",
    "eval_feature",
    "make_coordinate_family",
    "make_direction_family",
    "make_exponential_dictionary",
    "make_custom_feature",
    "trapezoid_weights",
    "check_injectivity",
    "d_property_residual",
)


def _as_points(points) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 0:
        return arr.reshape(1, 1)
    if arr.ndim == 1:
        return arr.reshape(1, -1)
    return arr


class FeatureMap(ABC):
    """A scalar feature map f in the admissible family A(X)."""
    kind: FeatureKind

    def __init__(self, lip: Optional[float] = None):
        self.lip: Optional[float] = lip

    @abstractmethod
    def _evaluate(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @abstractmethod
    def _params(self) -> dict:
        raise NotImplementedError

    def evaluate(self, points) -> np.ndarray:
        """Values on every row of `points`, shape (N,)."""
        return np.asarray(self._evaluate(_as_points(points)), dtype=float)

    def to_dict(self) -> dict:
        data = {"kind": self.kind.value, **self._params()}
        if self.lip is not None:
            data["lip"] = self.lip
        return data

    @classmethod
    def from_dict(cls, data: dict) -> FeatureMap:
        kind = FeatureKind(data["kind"])
        return _FEATURE_CLASSES[kind]._from_params(data)

    @classmethod
    @abstractmethod
    def _from_params(cls, data: dict) -> FeatureMap:
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.describe()})"

    def describe(self) -> str:
        return self.kind.value


class CoordinateFeature(FeatureMap):
    kind = FeatureKind.COORDINATE

    def __init__(self, index: int):
        super().__init__(lip=1.0)
        self.index = int(index)

    def _evaluate(self, points: np.ndarray) -> np.ndarray:
        if not 0 <= self.index < points.shape[1]:
            raise IncompatiblePoint(repr(self), f"point has {points.shape[1]} coordinate(s)")
        return points[:, self.index]

    def _params(self) -> dict:
        return {"index": self.index}

    @classmethod
    def _from_params(cls, data: dict) -> CoordinateFeature:
        return cls(int(data["index"]))

    def describe(self) -> str:
        return f"x[{self.index}]"


class PointEvalFeature(CoordinateFeature):
    """u -> u(y_j) for a function sampled on a grid."""
    kind = FeatureKind.POINT_EVAL

    def describe(self) -> str:
        return f"u(y[{self.index}])"


class QuadratureFeature(FeatureMap):
    """x -> sum_j weights_j x_j; directions on R^d and discretized integrals on C(Y)."""
    kind = FeatureKind.QUADRATURE

    def __init__(self, weights: Sequence[float], label: Optional[str] = None):
        weights = np.asarray(weights, dtype=float).ravel()
        if weights.size == 0 or not np.all(np.isfinite(weights)):
            raise ValueError("quadrature weights must be finite and nonempty")
        super().__init__(lip=float(np.sum(np.abs(weights))))
        self.weights = weights
        self.label = label

    def _evaluate(self, points: np.ndarray) -> np.ndarray:
        if points.shape[1] != self.weights.size:
            raise IncompatiblePoint(repr(self), f"expected {self.weights.size} values per point, got {points.shape[1]}")
        return points @ self.weights

    def _params(self) -> dict:
        data: dict[str, Any] = {"weights": self.weights.tolist()}
        if self.label:
            data["label"] = self.label
        return data

    @classmethod
    def _from_params(cls, data: dict) -> QuadratureFeature:
        return cls(data["weights"], data.get("label"))

    def describe(self) -> str:
        return self.label or f"<w, x> ({self.weights.size} weights)"


class ExponentialFeature(FeatureMap):
    """x -> exp(scale * base(x)); scale 0 is the constant 1."""
    kind = FeatureKind.EXPONENTIAL

    def __init__(self, base: FeatureMap, scale: float):
        super().__init__(lip=0.0 if scale == 0 else None)
        self.base = base
        self.scale = float(scale)

    def _evaluate(self, points: np.ndarray) -> np.ndarray:
        if self.scale == 0.0:
            return np.ones(points.shape[0])
        return np.exp(self.scale * self.base.evaluate(points))

    def _params(self) -> dict:
        return {"base": self.base.to_dict(), "scale": self.scale}

    @classmethod
    def _from_params(cls, data: dict) -> ExponentialFeature:
        return cls(FeatureMap.from_dict(data["base"]), float(data["scale"]))

    def describe(self) -> str:
        return "1" if self.scale == 0 else f"exp({self.scale:g}*{self.base.describe()})"


class OstrandSumFeature(FeatureMap):
    """s(x) = sum_p psi_p(x_p) over the factors of a product space."""
    kind = FeatureKind.OSTRAND_SUM

    def __init__(self, psis: Sequence[Any], q: int = 0):
        super().__init__(lip=None)
        self.psis = list(psis)
        self.q = int(q)

    def _evaluate(self, points: np.ndarray) -> np.ndarray:
        if points.shape[1] != len(self.psis):
            raise IncompatiblePoint(repr(self), f"expected {len(self.psis)} factor(s), got {points.shape[1]}")
        total = np.zeros(points.shape[0])
        for p, psi in enumerate(self.psis):
            total = total + psi.evaluate(points[:, p])
        return total

    def _params(self) -> dict:
        return {"q": self.q, "psis": [psi.to_dict() for psi in self.psis]}

    @classmethod
    def _from_params(cls, data: dict) -> OstrandSumFeature:
        from .kst import InnerPsi

        return cls([InnerPsi.from_dict(p) for p in data["psis"]], int(data.get("q", 0)))

    def describe(self) -> str:
        return f"s_{self.q}"


class CustomFeature(FeatureMap):
    """A value table aligned with the points of a sampled set."""
    kind = FeatureKind.CUSTOM

    def __init__(self, points, values, lip: Optional[float] = None):
        super().__init__(lip=lip)
        self.points = _as_points(points).reshape(len(np.ravel(values)), -1)
        self.values = np.asarray(values, dtype=float).ravel()
        self._lookup = {row.tobytes(): v for row, v in zip(self.points, self.values)}

    def _evaluate(self, points: np.ndarray) -> np.ndarray:
        out = np.empty(points.shape[0])
        for i, row in enumerate(np.ascontiguousarray(points, dtype=float)):
            try:
                out[i] = self._lookup[row.tobytes()]
            except KeyError:
                raise IncompatiblePoint(repr(self), f"point {tuple(row)} is not in the table") from None
        return out

    def _params(self) -> dict:
        return {"points": self.points.tolist(), "values": self.values.tolist()}

    @classmethod
    def _from_params(cls, data: dict) -> CustomFeature:
        return cls(np.array(data["points"], dtype=float), np.array(data["values"], dtype=float), data.get("lip"))


_FEATURE_CLASSES: dict[FeatureKind, type[FeatureMap]] = {
    FeatureKind.COORDINATE: CoordinateFeature,
    FeatureKind.POINT_EVAL: PointEvalFeature,
    FeatureKind.QUADRATURE: QuadratureFeature,
    FeatureKind.EXPONENTIAL: ExponentialFeature,
    FeatureKind.OSTRAND_SUM: OstrandSumFeature,
    FeatureKind.CUSTOM: CustomFeature,
}


class FeatureVectorMap:
    """F = (f_1, ..., f_n)."""

    def __init__(self, components: Sequence[FeatureMap]):
        if not components:
            raise ValueError("a feature vector map needs at least one component")
        self.components: list[FeatureMap] = list(components)

    @property
    def n(self) -> int:
        return len(self.components)

    def evaluate(self, points) -> np.ndarray:
        """Images F(x) for every row, shape (N, n)."""
        return np.column_stack([f.evaluate(points) for f in self.components])

    def to_dict(self) -> dict:
        return {"components": [f.to_dict() for f in self.components]}

    @classmethod
    def from_dict(cls, data: dict) -> FeatureVectorMap:
        return cls([FeatureMap.from_dict(f) for f in data["components"]])

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        return f"FeatureVectorMap({', '.join(f.describe() for f in self.components)})"


@dataclass
class InjectivityReport:
    injective: bool
    witness: Optional[tuple[np.ndarray, np.ndarray]]
    min_separation: float
    indices: Optional[tuple[int, int]] = None

    def to_dict(self) -> dict:
        return {
            "injective": self.injective,
            "witness": None if self.witness is None else [w.tolist() for w in self.witness],
            "indices": None if self.indices is None else list(self.indices),
            "min_separation": self.min_separation,
        }


def eval_feature(f: FeatureMap, x) -> float:
    return float(f.evaluate(_as_points(x))[0])


def make_coordinate_family(d: int) -> list[FeatureMap]:
    if d < 1:
        raise ValueError("d must be >= 1")
    return [CoordinateFeature(i) for i in range(d)]


def make_direction_family(d: int, directions: Sequence[Sequence[float]]) -> list[FeatureMap]:
    if not directions:
        raise ValueError("at least one direction is required")
    family: list[FeatureMap] = []
    for i, direction in enumerate(directions):
        a = np.asarray(direction, dtype=float).ravel()
        if a.size != d or not np.any(a != 0.0):
            raise ZeroDirection(i, a)
        family.append(QuadratureFeature(a, label="<(" + ",".join(f"{v:g}" for v in a) + "), x>"))
    return family


def make_exponential_dictionary(
        base: Sequence[FeatureMap], scales: Sequence[float], *, include_base: bool = False) -> list[FeatureMap]:
    """The constant 1 first, then exp(s * f) for each base f and nonzero scale s (optionally the bases too)."""
    if not base:
        raise ValueError("base family must not be empty")
    scales = [float(s) for s in scales]
    if not all(np.isfinite(scales)):
        raise ValueError("scales must be finite")
    family: list[FeatureMap] = [ExponentialFeature(base[0], 0.0)]
    for f in base:
        if include_base:
            family.append(f)
        family.extend(ExponentialFeature(f, s) for s in scales if s != 0.0)
    return family


def make_custom_feature(set_: SampledCompactSet, values) -> CustomFeature:
    return CustomFeature(set_.points, values)


def trapezoid_weights(grid, moment: int = 0) -> np.ndarray:
    """Weights w with sum_j w_j u(t_j) = trapezoid rule for the integral of u(t) * t**moment."""
    t = np.asarray(grid, dtype=float).ravel()
    w = np.zeros_like(t)
    if t.size > 1:
        gaps = np.diff(t)
        w[:-1] += gaps / 2.0
        w[1:] += gaps / 2.0
    return w * t ** moment


def check_injectivity(F: FeatureVectorMap, K: SampledCompactSet, tol: Optional[float] = None) -> InjectivityReport:
    """
    Summary:
        Decides whether F separates the sampled points. Images closer than `tol` (Euclidean)
        count as equal; the witness is the lexicographically first such index pair.

    Args:
        F: The feature vector map.
        K: The sample.
        tol: Image-space tolerance, the configured injectivity tolerance by default.

    Returns:
        The report, with min_separation the smallest image distance between distinct points.
    """
    tol = Constants.injectivity_tol if tol is None else tol
    images = F.evaluate(K.points)
    if K.size == 1:
        return InjectivityReport(True, None, float("inf"))

    tree = cKDTree(images)
    dist, _ = tree.query(images, k=2)
    min_separation = float(np.min(dist[:, 1]))
    pairs = tree.query_pairs(r=tol, output_type="ndarray")
    if len(pairs) == 0:
        return InjectivityReport(True, None, min_separation)

    pairs = np.sort(pairs, axis=1)
    first = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))[0]]
    i, j = int(first[0]), int(first[1])
    logger.debug(f"check_injectivity: points #{i} and #{j} share an image")
    return InjectivityReport(False, (K.points[i].copy(), K.points[j].copy()), min_separation, (i, j))


def d_property_residual(
        family: Sequence[FeatureMap],
        K: SampledCompactSet,
        g,
        basis_size: int | str,
        *,
        quadratic: bool = False,
) -> float:
    """
    Summary:
        Evidence for the D-property on K: sup residual of the best least-squares fit of g by
        sum_i u_i(f_i(x)) with piecewise-linear u_i on `basis_size` equispaced knots over
        image_interval(f_i, K) ("data" puts the knots at the sample images).

    Args:
        family: The feature family.
        K: The sample.
        g: Target values on K.
        basis_size: Knots per feature (>= 2) or "data".
        quadratic: Adds a quadratic term per feature.

    Returns:
        The sup residual over K.
    """
    if basis_size != "data" and int(basis_size) < 2:
        raise ValueError("basis_size must be >= 2")
    columns = [f.evaluate(K.points) for f in family]
    knots = [knot_grid(*image_interval(f, K), basis_size, samples=t) for f, t in zip(family, columns)]
    return fit_additive(columns, np.asarray(g, dtype=float).ravel(), knots, quadratic=quadratic).residual
