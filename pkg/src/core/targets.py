from __future__ import annotations

import logging
import os
from typing import Callable

import numpy as np
import pandas as pd

from src.utils import closest_match
from .domain import SampledCompactSet
from .errors import MissingInput, ParseError, ShapeMismatch, UnknownTarget
from .features import trapezoid_weights

logger = logging.getLogger("tfnn.targets")

__all__ = (
    "TARGETS",
    "UNIVARIATE_TARGETS",
    "resolve_univariate",
    "resolve_target",
    "target_names",
)


def _function_grid(K: SampledCompactSet) -> np.ndarray:
    if K.grid is not None:
        return K.grid
    return np.linspace(0.0, 1.0, K.dim)


def _integral(K: SampledCompactSet, power: int = 1) -> np.ndarray:
    return (K.points ** power) @ trapezoid_weights(_function_grid(K))


def _two_coordinates(K: SampledCompactSet) -> tuple[np.ndarray, np.ndarray]:
    if K.dim < 2:
        raise ShapeMismatch(K.dim, 2)
    return K.points[:, 0], K.points[:, 1]


TARGETS: dict[str, Callable[[SampledCompactSet], np.ndarray]] = {
    "sum": lambda K: K.points.sum(axis=1),
    "abs_sum": lambda K: np.abs(K.points).sum(axis=1),
    "xy": lambda K: np.prod(_two_coordinates(K), axis=0),
    "sin_cos": lambda K: np.sin(3.0 * _two_coordinates(K)[0]) + np.cos(2.0 * _two_coordinates(K)[1]),
    "integral": lambda K: _integral(K),
    "integral_sq": lambda K: _integral(K, 2),
    "max": lambda K: K.points.max(axis=1),
    "exp_integral": lambda K: np.exp(_integral(K)),
}

# names taking an argument after ':'
_PARAMETRIC = ("const", "table", "point", "boolean")


def target_names() -> list[str]:
    return list(TARGETS) + [f"{name}:" for name in _PARAMETRIC]


def _const(K: SampledCompactSet, raw: str) -> np.ndarray:
    try:
        values = [float(v) for v in raw.split(",") if v.strip()]
    except ValueError:
        raise UnknownTarget(f"const:{raw}", "const:1.0") from None
    if not values:
        raise UnknownTarget(f"const:{raw}", "const:1.0")
    return np.tile(np.array(values), (K.size, 1))


def _table(K: SampledCompactSet, path: str) -> np.ndarray:
    if not os.path.exists(path):
        raise MissingInput("target", path)
    try:
        frame = pd.read_csv(path, header=None, comment="#")
        values = frame.to_numpy(dtype=float)
    except (ValueError, pd.errors.ParserError) as e:
        raise ParseError(path, str(e)) from None
    if values.shape[0] != K.size:
        raise ShapeMismatch(values.shape[0], K.size)
    return values


def _point(K: SampledCompactSet, raw: str) -> np.ndarray:
    try:
        j = int(raw)
    except ValueError:
        raise UnknownTarget(f"point:{raw}", "point:0") from None
    if not 0 <= j < K.dim:
        raise ShapeMismatch(j, K.dim)
    return K.points[:, j]


def _boolean(K: SampledCompactSet, bits: str) -> np.ndarray:
    """Truth table indexed by the mixed-radix label index, first factor least significant."""
    if not bits or set(bits) - {"0", "1"}:
        raise UnknownTarget(f"boolean:{bits}", "boolean:0110")
    sizes = [int(K.points[:, p].max()) + 1 for p in range(K.dim)]
    index = np.zeros(K.size, dtype=int)
    stride = 1
    for p, size in enumerate(sizes):
        index += K.points[:, p].astype(int) * stride
        stride *= size
    if len(bits) != stride:
        raise ShapeMismatch(len(bits), stride)
    table = np.array([float(b) for b in bits])
    return table[index]


def resolve_target(name: str, K: SampledCompactSet) -> np.ndarray:
    """
    Summary:
        Target values of a built-in or parametric target on K.

    Args:
        name: e.g. "xy", "const:1,2", "table:values.csv", "point:5" or "boolean:0110".
        K: The sample.

    Returns:
        Values of shape (N, m).
    """
    key, sep, raw = str(name).partition(":")
    key = key.strip().lower()
    if key in TARGETS and not sep:
        values = TARGETS[key](K)
    elif key == "const":
        values = _const(K, raw)
    elif key == "table":
        values = _table(K, raw)
    elif key == "point":
        values = _point(K, raw)
    elif key == "boolean":
        values = _boolean(K, raw.strip())
    else:
        raise UnknownTarget(name, closest_match(key, list(TARGETS) + list(_PARAMETRIC)))

    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values.reshape(-1, 1)
    logger.debug(f"target '{name}': {values.shape[0]} point(s), {values.shape[1]} output(s)")
    return values


UNIVARIATE_TARGETS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "abs": np.abs,
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "square": np.square,
    "step": lambda t: (np.asarray(t) >= 0.0).astype(float),
}


def resolve_univariate(name: str) -> Callable[[np.ndarray], np.ndarray] | tuple[np.ndarray, np.ndarray]:
    """A built-in u by name, or (grid, values) from the two-column csv of "table:<path>"."""
    key, sep, raw = str(name).partition(":")
    key = key.strip().lower()
    if key in UNIVARIATE_TARGETS and not sep:
        return UNIVARIATE_TARGETS[key]
    if key != "table":
        raise UnknownTarget(name, closest_match(key, list(UNIVARIATE_TARGETS) + ["table"]))
    if not os.path.exists(raw):
        raise MissingInput("target", raw)
    try:
        values = pd.read_csv(raw, header=None, comment="#").to_numpy(dtype=float)
    except (ValueError, pd.errors.ParserError) as e:
        raise ParseError(raw, str(e)) from None
    if values.ndim != 2 or values.shape[1] != 2:
        raise ParseError(raw, "expected two columns t,u")
    return values[:, 0], values[:, 1]
