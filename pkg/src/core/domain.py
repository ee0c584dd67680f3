from __future__ import annotations

import itertools
import logging
import os
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, TYPE_CHECKING

import numpy as np

from src.enums import FactorKind, MetricKind
from src.utils import fmt_float
from .errors import LengthMismatch, ParseError

if TYPE_CHECKING:
    from .features import FeatureMap

logger = logging.getLogger("tfnn.domain")

__all__ = (
    "SampledCompactSet",
    "Factor",
    "ProductSpace",
    "FunctionClassV",
    "sup_seminorm",
    "epsilon_net",
    "image_interval",
    "load_set",
    "dump_set",
    "save_set",
)


def _as_matrix(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        return arr.reshape(1, 1)
    if arr.ndim == 1:
        return arr.reshape(-1, 1)
    return arr


class SampledCompactSet:
    """
    A compact set K represented by finitely many points, a metric rule and a declared mesh
    (the radius within which every point of the idealized set has a sample).

    Real coordinate tuples, finite-space labels (stored as label indices) and sampled
    functions (stored as their values on ``grid``) are all rows of ``points``.
    """

    def __init__(
            self,
            points,
            metric: MetricKind | str = MetricKind.EUCLIDEAN,
            mesh: float = 0.0,
            *,
            labels: Optional[list[list[str]]] = None,
            grid: Optional[np.ndarray] = None,
            params: Optional[np.ndarray] = None,
    ):
        self.points: np.ndarray = _as_matrix(points)
        self.metric: MetricKind = MetricKind(metric)
        self.mesh: float = float(mesh)
        self.labels = labels
        self.grid = None if grid is None else np.asarray(grid, dtype=float)
        self.params = None if params is None else np.asarray(params, dtype=float)

        if self.points.shape[0] == 0:
            raise ValueError("a sampled compact set needs at least one point")
        if self.mesh < 0:
            raise ValueError("mesh must be >= 0")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("points must be finite")
        if np.unique(self.points, axis=0).shape[0] != self.points.shape[0]:
            raise ValueError("points must be pairwise distinct")

    @property
    def size(self) -> int:
        return int(self.points.shape[0])

    @property
    def dim(self) -> int:
        return int(self.points.shape[1])

    def distances_from(self, point) -> np.ndarray:
        diff = self.points - np.asarray(point, dtype=float).reshape(1, -1)
        if self.metric is MetricKind.EUCLIDEAN:
            return np.sqrt(np.sum(diff * diff, axis=1))
        if self.metric is MetricKind.DISCRETE:
            return np.any(diff != 0.0, axis=1).astype(float)
        return np.max(np.abs(diff), axis=1)

    def subset(self, indices: Sequence[int], mesh: Optional[float] = None) -> SampledCompactSet:
        idx = np.asarray(indices, dtype=int)
        return SampledCompactSet(
            self.points[idx],
            self.metric,
            self.mesh if mesh is None else mesh,
            labels=self.labels,
            grid=self.grid,
            params=None if self.params is None else self.params[idx],
        )

    def __len__(self) -> int:
        return self.size

    def __repr__(self) -> str:
        return f"SampledCompactSet(size={self.size}, dim={self.dim}, metric={self.metric.value}, mesh={self.mesh:.3g})"


def sup_seminorm(values, reference) -> float:
    """
    Summary:
        Sample estimate of the sup-seminorm ||g - H||_K.

    Args:
        values: (N, m) or (N,) array of network outputs.
        reference: Array of the same shape with target values.

    Returns:
        The maximum over points of the Euclidean norm of the difference.
    """
    left, right = _as_matrix(values), _as_matrix(reference)
    if left.shape != right.shape or left.shape[0] == 0:
        raise LengthMismatch(left.shape, right.shape)
    diff = left - right
    return float(np.max(np.sqrt(np.sum(diff * diff, axis=1))))


def epsilon_net(set_: SampledCompactSet, eps: float) -> SampledCompactSet:
    """Greedy farthest-point subsample, seeded with the first point, whose covering radius is <= eps."""
    if eps < 0:
        raise ValueError("eps must be >= 0")
    if eps == 0 or set_.size == 1:
        return set_.subset(range(set_.size))

    selected = [0]
    nearest = set_.distances_from(set_.points[0])
    while float(nearest.max()) > eps:
        far = int(np.argmax(nearest))
        selected.append(far)
        nearest = np.minimum(nearest, set_.distances_from(set_.points[far]))

    covering = float(nearest.max())
    logger.debug(f"epsilon_net: kept {len(selected)}/{set_.size} points, covering radius {covering:.3g}")
    return set_.subset(selected, mesh=set_.mesh + covering)


def image_interval(f: FeatureMap, set_: SampledCompactSet) -> tuple[float, float]:
    """[min, max] of f over the sample, padded by mesh * lip(f) when f declares a Lipschitz bound."""
    values = f.evaluate(set_.points)
    lo, hi = float(np.min(values)), float(np.max(values))
    if f.lip is not None:
        pad = set_.mesh * float(f.lip)
        lo, hi = lo - pad, hi + pad
    return lo, hi


@dataclass(frozen=True)
class Factor:
    kind: FactorKind
    lo: float = 0.0
    hi: float = 1.0
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind is FactorKind.INTERVAL and not self.lo < self.hi:
            raise ValueError(f"interval factor needs lo < hi, got [{self.lo}, {self.hi}]")
        if self.kind is FactorKind.FINITE and not self.labels:
            raise ValueError("finite factor needs at least one label")

    @property
    def dim(self) -> int:
        return 1 if self.kind is FactorKind.INTERVAL else 0

    @property
    def size(self) -> int:
        return len(self.labels)

    def to_dict(self) -> dict:
        if self.kind is FactorKind.INTERVAL:
            return {"kind": self.kind.value, "lo": self.lo, "hi": self.hi}
        return {"kind": self.kind.value, "labels": list(self.labels)}

    @classmethod
    def from_dict(cls, data: dict) -> Factor:
        kind = FactorKind(data["kind"])
        if kind is FactorKind.INTERVAL:
            return cls(kind, float(data["lo"]), float(data["hi"]))
        return cls(kind, labels=tuple(str(x) for x in data["labels"]))


@dataclass(frozen=True)
class ProductSpace:
    factors: tuple[Factor, ...]

    def __post_init__(self):
        if not self.factors:
            raise ValueError("a product space needs at least one factor")

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(f.dim for f in self.factors)

    @property
    def M(self) -> int:
        return sum(self.dims)

    @property
    def is_finite(self) -> bool:
        return all(f.kind is FactorKind.FINITE for f in self.factors)

    @property
    def is_cube(self) -> bool:
        return all(f.kind is FactorKind.INTERVAL for f in self.factors)

    def grid(self, samples: int) -> SampledCompactSet:
        """Working grid: `samples` points per interval, every label of every finite factor."""
        axes, mesh = [], 0.0
        for factor in self.factors:
            if factor.kind is FactorKind.INTERVAL:
                if samples < 2:
                    raise ValueError("interval factors need at least 2 samples")
                axes.append(np.linspace(factor.lo, factor.hi, samples))
                mesh = max(mesh, (factor.hi - factor.lo) / (samples - 1) / 2.0)
            else:
                axes.append(np.arange(factor.size, dtype=float))
        points = np.array(list(itertools.product(*axes)), dtype=float)
        labels = [list(f.labels) if f.kind is FactorKind.FINITE else [] for f in self.factors]
        has_labels = any(f.kind is FactorKind.FINITE for f in self.factors)
        return SampledCompactSet(points, MetricKind.MAX, mesh, labels=labels if has_labels else None)

    @classmethod
    def cube(cls, d: int, lo: float = 0.0, hi: float = 1.0) -> ProductSpace:
        return cls(tuple(Factor(FactorKind.INTERVAL, lo, hi) for _ in range(d)))

    @classmethod
    def from_spec(cls, spec: str) -> ProductSpace:
        """Parses "interval:-1,1*finite:3", "finite:a,b,c*finite:2" or "cube:2"."""
        factors: list[Factor] = []
        for part in str(spec).split("*"):
            kind, _, raw = part.strip().partition(":")
            kind = kind.strip().lower()
            try:
                if kind == "cube":
                    factors.extend(cls.cube(int(raw)).factors)
                elif kind == "interval":
                    lo, hi = (float(x) for x in raw.split(","))
                    factors.append(Factor(FactorKind.INTERVAL, lo, hi))
                elif kind == "finite":
                    items = [x.strip() for x in raw.split(",") if x.strip()]
                    if len(items) == 1 and items[0].isdigit():
                        items = [str(i) for i in range(int(items[0]))]
                    factors.append(Factor(FactorKind.FINITE, labels=tuple(items)))
                else:
                    raise ValueError(f"unknown factor kind '{kind}'")
            except ValueError as e:
                raise ParseError(spec, str(e)) from None
        return cls(tuple(factors))

    def to_dict(self) -> dict:
        return {"factors": [f.to_dict() for f in self.factors], "dims": list(self.dims), "M": self.M}

    @classmethod
    def from_dict(cls, data: dict) -> ProductSpace:
        return cls(tuple(Factor.from_dict(f) for f in data["factors"]))


def _linear(params: np.ndarray, t: np.ndarray) -> np.ndarray:
    return params[:, :1] * t[None, :]


def _sine(params: np.ndarray, t: np.ndarray) -> np.ndarray:
    return np.sin(params[:, :1] * t[None, :])


def _affine(params: np.ndarray, t: np.ndarray) -> np.ndarray:
    return params[:, :1] + params[:, 1:2] * t[None, :]


# name -> (evaluation rule, parameter count, Lipschitz bound in t from the parameter box)
_FAMILIES: dict[str, tuple[Callable, int, Callable[[list[tuple[float, float]]], float]]] = {
    "linear": (_linear, 1, lambda box: max(abs(box[0][0]), abs(box[0][1]))),
    "sine": (_sine, 1, lambda box: max(abs(box[0][0]), abs(box[0][1]))),
    "affine": (_affine, 2, lambda box: max(abs(box[1][0]), abs(box[1][1]))),
}


@dataclass
class FunctionClassV:
    """A compact parametric family V of continuous functions on a finite grid of Y."""
    domain_grid: np.ndarray
    family: str
    param_box: list[tuple[float, float]]
    samples: int = 33
    lipschitz_bound: Optional[float] = None
    _params: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown function family '{self.family}'")
        rule, n_params, lip = _FAMILIES[self.family]
        self.domain_grid = np.asarray(self.domain_grid, dtype=float).ravel()
        self.param_box = [(float(lo), float(hi)) for lo, hi in self.param_box]
        if len(self.param_box) != n_params:
            raise ValueError(f"family '{self.family}' takes {n_params} parameter(s)")
        if self.lipschitz_bound is None:
            self.lipschitz_bound = float(lip(self.param_box))

    @property
    def params(self) -> np.ndarray:
        if self._params is None:
            axes = [np.linspace(lo, hi, self.samples) for lo, hi in self.param_box]
            self._params = np.array(list(itertools.product(*axes)), dtype=float)
        return self._params

    def evaluate(self, params=None) -> np.ndarray:
        rule = _FAMILIES[self.family][0]
        p = self.params if params is None else np.atleast_2d(np.asarray(params, dtype=float))
        return rule(p, self.domain_grid)

    def sample(self) -> SampledCompactSet:
        """The members on the grid as a sup-metric set; mesh bounds the parameter-neighbour distance."""
        values = self.evaluate()
        if not np.all(np.isfinite(values)):
            raise ValueError("family produced non-finite values on the domain grid")
        mesh = 0.0
        shape = [self.samples] * len(self.param_box)
        grid_values = values.reshape(*shape, -1)
        for axis in range(len(shape)):
            if shape[axis] > 1:
                step = np.abs(np.diff(grid_values, axis=axis))
                mesh += float(step.max()) / 2.0
        return SampledCompactSet(values, MetricKind.SUP, mesh, grid=self.domain_grid, params=self.params)

    def check_equicontinuity(self) -> bool:
        values = self.evaluate()
        t = self.domain_grid
        gaps = np.abs(t[:, None] - t[None, :])
        bound = self.lipschitz_bound * gaps + 1e-12
        for row in values:
            if np.any(np.abs(row[:, None] - row[None, :]) > bound):
                return False
        return True


def load_set(path: str) -> SampledCompactSet:
    """
    Reads a set file: a header line ``metric=<name> mesh=<real>`` (optionally prefixed by '#'),
    then one point per line with comma-separated coordinates or labels.
    """
    if not os.path.exists(path):
        raise ParseError(path, "file not found")
    with open(path, "r", encoding="utf-8") as f:
        lines = [ln.strip() for ln in f if ln.strip()]
    if not lines:
        raise ParseError(path, "empty set file")

    header: dict[str, str] = {}
    for token in lines[0].lstrip("#").replace(",", " ").split():
        key, _, value = token.partition("=")
        header[key.strip().lower()] = value.strip()
    try:
        metric = MetricKind(header.get("metric", "euclidean"))
        mesh = float(header.get("mesh", 0.0))
        domain = [float(v) for v in header["domain"].split(":")] if "domain" in header else None
    except (ValueError, IndexError) as e:
        raise ParseError(path, f"bad header: {e}") from None

    rows = [[cell.strip() for cell in ln.split(",")] for ln in lines[1:]]
    if not rows:
        raise ParseError(path, "no points")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ParseError(path, "rows have different lengths")

    columns, labels, any_labels = [], [], False
    for j in range(width):
        raw = [r[j] for r in rows]
        try:
            columns.append([float(x) for x in raw])
            labels.append([])
        except ValueError:
            names = list(dict.fromkeys(raw))
            columns.append([float(names.index(x)) for x in raw])
            labels.append(names)
            any_labels = True
    try:
        grid = np.linspace(domain[0], domain[1], width) if domain else None
        return SampledCompactSet(
            np.array(columns, dtype=float).T, metric, mesh, labels=labels if any_labels else None, grid=grid
        )
    except ValueError as e:
        raise ParseError(path, str(e)) from None


def dump_set(set_: SampledCompactSet) -> str:
    """The set file text of `set_`, readable by load_set."""
    header = f"# metric={set_.metric.value} mesh={fmt_float(set_.mesh)}"
    if set_.grid is not None:
        # sampled functions live on a uniform grid of their domain
        header += f" domain={fmt_float(set_.grid[0])}:{fmt_float(set_.grid[-1])}"
    lines = [header]
    for row in set_.points:
        cells = []
        for j, value in enumerate(row):
            names = set_.labels[j] if set_.labels and j < len(set_.labels) else []
            cells.append(names[int(value)] if names else fmt_float(value))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def save_set(set_: SampledCompactSet, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(dump_set(set_))
