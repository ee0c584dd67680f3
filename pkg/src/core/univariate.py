from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import linalg

from src.enums import NodeStrategy
from src.static import Constants
from .activation import Activation, eval_activation, parse_activation

logger = logging.getLogger("tfnn.univariate")

__all__ = (
    "RidgeExpansion",
    "node_schedule",
    "ridge_lstsq",
    "fit_univariate",
)

_OMEGAS = (1.0, 2.0, 4.0)
_BIAS_THETAS = (-1.0, 1.0, -0.5, 0.5, -2.0, 2.0)


@dataclass
class RidgeExpansion:
    """u(t) ~ sum_j c_j sigma(w_j t - theta_j) on [a, b]."""
    activation: Activation
    coefficients: np.ndarray
    weights: np.ndarray
    biases: np.ndarray
    interval: tuple[float, float]
    sup_error: float = 0.0
    strategy: str = NodeStrategy.NESTED.value

    def __post_init__(self):
        self.activation = parse_activation(self.activation)
        self.coefficients = np.asarray(self.coefficients, dtype=float).ravel()
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        self.biases = np.asarray(self.biases, dtype=float).ravel()
        if not (self.coefficients.size == self.weights.size == self.biases.size):
            raise ValueError("coefficients, weights and biases must have equal length")
        for arr in (self.coefficients, self.weights, self.biases):
            if not np.all(np.isfinite(arr)):
                raise ValueError("ridge terms must be finite")
        self.interval = (float(self.interval[0]), float(self.interval[1]))
        if self.interval[0] > self.interval[1]:
            raise ValueError("interval must satisfy a <= b")

    @property
    def n_terms(self) -> int:
        return int(self.coefficients.size)

    @property
    def terms(self) -> list[tuple[float, float, float]]:
        return [(float(c), float(w), float(t)) for c, w, t in zip(self.coefficients, self.weights, self.biases)]

    def evaluate(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float).ravel()
        if self.n_terms == 0:
            return np.zeros(t.size)
        return self.activation(np.outer(t, self.weights) - self.biases) @ self.coefficients

    def to_dict(self) -> dict:
        return {
            "activation": self.activation.spec,
            "interval": list(self.interval),
            "strategy": self.strategy,
            "sup_error": self.sup_error,
            "terms": [list(term) for term in self.terms],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> RidgeExpansion:
        terms = np.array(data["terms"], dtype=float).reshape(-1, 3)
        return cls(
            parse_activation(data["activation"]),
            terms[:, 0],
            terms[:, 1],
            terms[:, 2],
            tuple(data["interval"]),
            float(data.get("sup_error", 0.0)),
            data.get("strategy", NodeStrategy.NESTED.value),
        )

    @classmethod
    def from_json(cls, raw: str) -> RidgeExpansion:
        return cls.from_dict(json.loads(raw))


def _nested_nodes(a: float, b: float, count: int) -> tuple[np.ndarray, np.ndarray]:
    scale = 2.0 / (b - a)
    w, c = [], []
    level = 0
    while len(w) < count:
        omega = min(2.0 ** level, 4.0)
        pieces = 2 ** (level + 1)
        for j in range(2 ** level):
            centre = a + (b - a) * (2 * j + 1) / pieces
            for sign in (1.0, -1.0):
                w.append(sign * omega * scale)
                c.append(centre)
        level += 1
    w_arr, c_arr = np.array(w[:count]), np.array(c[:count])
    return w_arr, w_arr * c_arr


def _equispaced_nodes(a: float, b: float, count: int) -> tuple[np.ndarray, np.ndarray]:
    scale = 2.0 / (b - a)
    j = np.arange(count)
    centres = a + (b - a) * (j + 0.5) / count
    signs = np.where(j % 2 == 0, 1.0, -1.0)
    omegas = np.array([_OMEGAS[(k // 2) % 3] for k in j], dtype=float)
    w = signs * omegas * scale
    return w, w * centres


def _random_nodes(a: float, b: float, count: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    centres = rng.uniform(a, b, size=count)
    omegas = rng.choice(np.array([-4.0, -2.0, -1.0, 1.0, 2.0, 4.0]), size=count)
    w = omegas * (2.0 / (b - a))
    return w, w * centres


def node_schedule(
        a: float, b: float, count: int, strategy: NodeStrategy | str = NodeStrategy.NESTED, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """
    Summary:
        (w, theta) nodes of sigma(w t - theta) on [a, b], excluding the constant node.

    Args:
        a: Left end.
        b: Right end, > a.
        count: Number of nodes.
        strategy: equispaced, nested (dyadic centres, a prefix of every larger schedule) or random.
        seed: Seed of the random strategy.

    Returns:
        Arrays of weights and biases.
    """
    strategy = NodeStrategy(strategy)
    if count <= 0 or not b > a:
        return np.zeros(0), np.zeros(0)
    if strategy is NodeStrategy.NESTED:
        return _nested_nodes(a, b, count)
    if strategy is NodeStrategy.EQUISPACED:
        return _equispaced_nodes(a, b, count)
    return _random_nodes(a, b, count, seed)


def _bias_theta(sigma: Activation) -> Optional[float]:
    for theta in _BIAS_THETAS:
        if abs(eval_activation(sigma, -theta)) > Constants.fd_min_derivative:
            return theta
    return None


def _prefix_sizes(n_terms: int) -> list[int]:
    """0, the powers of two below n_terms and every n_terms // 2**k; the sizes for 2n contain those for n."""
    sizes = {0, n_terms}
    k = 1
    while k < n_terms:
        sizes.add(k)
        sizes.add(n_terms // k)
        k *= 2
    return sorted(sizes)


def ridge_lstsq(design: np.ndarray, target: np.ndarray, damping: float) -> np.ndarray:
    # normal equations with damping, solved through the augmented system
    cols = design.shape[1]
    augmented = np.vstack([design, math.sqrt(damping) * np.eye(cols)])
    rhs = np.concatenate([target, np.zeros(cols)])
    coef, *_ = linalg.lstsq(augmented, rhs, lapack_driver="gelsd")
    return coef


def _pruned(ridge: RidgeExpansion, grid: np.ndarray, values: np.ndarray) -> RidgeExpansion:
    if ridge.n_terms:
        threshold = Constants.prune_tol * max(1.0, float(np.max(np.abs(values))))
        columns = ridge.activation(np.outer(grid, ridge.weights) - ridge.biases)
        contribution = np.abs(ridge.coefficients) * np.max(np.abs(columns), axis=0)
        keep = contribution > threshold
        ridge = RidgeExpansion(
            ridge.activation,
            ridge.coefficients[keep],
            ridge.weights[keep],
            ridge.biases[keep],
            ridge.interval,
            strategy=ridge.strategy,
        )
    ridge.sup_error = float(np.max(np.abs(ridge.evaluate(grid) - values)))
    return ridge


def fit_univariate(
        target: Callable | np.ndarray,
        a: Activation | str,
        n_terms: int,
        strategy: NodeStrategy | str = NodeStrategy.NESTED,
        seed: int = 0,
        *,
        grid: Optional[np.ndarray] = None,
        interval: Optional[tuple[float, float]] = None,
        damping: Optional[float] = None,
) -> RidgeExpansion:
    """
    Summary:
        Fits u on [a, b] by a constant node plus `n_terms` nodes of the chosen strategy,
        with damped minimum-norm least squares. The nested strategy keeps the best dyadic
        prefix, so doubling n_terms never increases the sup error. The best constant fit is
        always a candidate.

    Args:
        target: Values of u on `grid`, or a callable evaluated on the fit grid.
        a: The activation.
        n_terms: Number of non-constant nodes, >= 1.
        strategy: Node placement.
        seed: Seed of the random strategy.
        grid: Sample points of u; with a callable target these are added to the fit grid.
        interval: [a, b]; defaults to the range of the grid.
        damping: Ridge damping on the normal equations, the configured damping by default.

    Returns:
        The ridge expansion with its sup error on the fit grid.
    """
    sigma = parse_activation(a)
    strategy = NodeStrategy(strategy)
    damping = Constants.ridge_damping if damping is None else damping
    if n_terms < 1:
        raise ValueError("n_terms must be >= 1")

    if callable(target):
        if interval is None:
            if grid is None:
                raise ValueError("a callable target needs a grid or an interval")
            interval = (float(np.min(grid)), float(np.max(grid)))
        lo, hi = float(interval[0]), float(interval[1])
        points = np.linspace(lo, hi, Constants.fit_grid) if hi > lo else np.array([lo])
        if grid is not None:
            points = np.union1d(points, np.asarray(grid, dtype=float).ravel())
        values = np.asarray(target(points), dtype=float).ravel()
    else:
        if grid is None:
            raise ValueError("tabulated targets need their grid")
        points = np.asarray(grid, dtype=float).ravel()
        values = np.asarray(target, dtype=float).ravel()
        if points.size != values.size or points.size == 0:
            raise ValueError("grid and target values must be nonempty and of equal length")
        if interval is None:
            interval = (float(np.min(points)), float(np.max(points)))
        lo, hi = float(interval[0]), float(interval[1])

    theta_star = _bias_theta(sigma)
    w_all, theta_all = node_schedule(lo, hi, n_terms, strategy, seed)

    def candidate(k: int) -> RidgeExpansion:
        w = w_all[:k]
        theta = theta_all[:k]
        if theta_star is not None:
            w = np.concatenate([[0.0], w])
            theta = np.concatenate([[theta_star], theta])
        if w.size == 0:
            return _pruned(RidgeExpansion(sigma, [], [], [], (lo, hi), strategy=strategy.value), points, values)
        design = sigma(np.outer(points, w) - theta)
        coef = ridge_lstsq(design, values, damping)
        return _pruned(RidgeExpansion(sigma, coef, w, theta, (lo, hi), strategy=strategy.value), points, values)

    candidates: list[RidgeExpansion] = []
    if theta_star is not None:
        midrange = 0.5 * (float(np.max(values)) + float(np.min(values)))
        level = eval_activation(sigma, -theta_star)
        candidates.append(
            _pruned(RidgeExpansion(sigma, [midrange / level], [0.0], [theta_star], (lo, hi),
                                   strategy=strategy.value), points, values)
        )

    if strategy is NodeStrategy.NESTED:
        sizes = _prefix_sizes(min(n_terms, w_all.size))
    else:
        sizes = [0, w_all.size]
    candidates.extend(candidate(k) for k in sizes)

    best = candidates[0]
    for ridge in candidates[1:]:
        if ridge.sup_error < best.sup_error:
            best = ridge

    logger.debug(
        f"fit_univariate: {sigma.spec}, strategy={strategy.value}, n_terms={n_terms} "
        f"-> kept {best.n_terms} term(s), sup_error={best.sup_error:.3e}"
    )
    return best
