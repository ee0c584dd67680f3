from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.special import expit

from src.static import Activations, Constants
from src.utils import closest_match, fmt_float
from .errors import NoKLPoint, UnknownActivation

logger = logging.getLogger("tfnn.activation")

__all__ = (
    "Activation",
    "KLPoint",
    "parse_activation",
    "eval_activation",
    "find_kl_point",
    "is_polynomial_on_interval",
    "lipschitz_on",
)


def _relu(t: np.ndarray, _params: tuple[float, ...]) -> np.ndarray:
    return np.maximum(t, 0.0)


def _leaky_relu(t: np.ndarray, params: tuple[float, ...]) -> np.ndarray:
    return np.where(t >= 0.0, t, params[0] * t)


def _softplus(t: np.ndarray, _params: tuple[float, ...]) -> np.ndarray:
    return np.logaddexp(0.0, t)


def _poly(t: np.ndarray, params: tuple[float, ...]) -> np.ndarray:
    return np.polynomial.polynomial.polyval(t, np.asarray(params, dtype=float))


_RULES: dict[str, Callable[[np.ndarray, tuple[float, ...]], np.ndarray]] = {
    "relu": _relu,
    "leaky_relu": _leaky_relu,
    "tanh": lambda t, _p: np.tanh(t),
    "sigmoid": lambda t, _p: expit(t),
    "softplus": _softplus,
    "sin": lambda t, _p: np.sin(t),
    "identity": lambda t, _p: t * 1.0,
    "poly": _poly,
}


@dataclass(frozen=True)
class Activation:
    name: str
    params: tuple[float, ...] = ()

    def __post_init__(self):
        if self.name not in _RULES:
            raise UnknownActivation(self.name, closest_match(self.name, _RULES))

    def __call__(self, t):
        return _RULES[self.name](np.asarray(t, dtype=float), self.params)

    @property
    def spec(self) -> str:
        """The identifier string this activation was parsed from."""
        if not self.params:
            return self.name
        return self.name + ":" + ",".join(fmt_float(p) for p in self.params)

    @property
    def is_relu_family(self) -> bool:
        return self.name in Activations.relu_family

    @property
    def is_affine(self) -> bool:
        if self.name == "identity":
            return True
        return self.name == "poly" and len(self.params) <= 2

    def __repr__(self) -> str:
        return f"Activation({self.spec})"


@dataclass(frozen=True)
class KLPoint:
    t0: float
    derivative: float
    radius: float

    def __post_init__(self):
        if self.derivative == 0.0:
            raise ValueError("KLPoint derivative must be nonzero")
        if self.radius <= 0.0:
            raise ValueError("KLPoint radius must be positive")


def parse_activation(spec: str | Activation) -> Activation:
    """
    Summary:
        Parses identifiers such as "relu", "leaky_relu:0.1" or "poly:1,0,-2".

    Args:
        spec: The identifier, or an already parsed activation.

    Returns:
        The activation.
    """
    if isinstance(spec, Activation):
        return spec
    name, _, raw_params = str(spec).strip().partition(":")
    name = name.strip().lower().replace("-", "_")
    if name not in _RULES:
        raise UnknownActivation(spec, closest_match(name, Activations.names))
    try:
        params = tuple(float(p) for p in raw_params.split(",") if p.strip()) if raw_params else ()
    except ValueError:
        raise UnknownActivation(spec) from None

    if name == "leaky_relu" and not params:
        params = (0.01,)
    elif name == "poly" and not params:
        raise UnknownActivation(spec, "poly:0,1")
    elif name not in ("leaky_relu", "poly") and params:
        raise UnknownActivation(spec, name)
    return Activation(name, params)


def eval_activation(a: Activation, t):
    """Evaluates sigma at a scalar (returns float) or elementwise on an array."""
    value = a(t)
    if np.ndim(value) == 0:
        return float(value)
    return value


def find_kl_point(a: Activation, grid: Iterable[float], fd_step: float = 1e-4) -> KLPoint:
    """
    Summary:
        Locates a point t0 where sigma is differentiable with a nonzero derivative.
        Grid points are scanned by increasing |t|, then by value.

    Args:
        a: The activation.
        grid: Candidate points.
        fd_step: Step of the coarse central difference; the fine one uses fd_step / 2.

    Returns:
        The first qualifying point with its fine derivative estimate.
    """
    if fd_step <= 0:
        raise ValueError("fd_step must be positive")
    candidates = sorted({float(t) for t in grid}, key=lambda t: (abs(t), t))
    if not candidates:
        raise ValueError("grid must not be empty")

    tol = Constants.fd_agreement
    h = float(fd_step)
    for t in candidates:
        s0 = eval_activation(a, t)
        sp, sm = eval_activation(a, t + h), eval_activation(a, t - h)
        coarse = (sp - sm) / (2.0 * h)
        fine = (eval_activation(a, t + h / 2.0) - eval_activation(a, t - h / 2.0)) / h
        if not math.isfinite(fine) or abs(fine) <= Constants.fd_min_derivative:
            continue
        if abs(coarse - fine) > tol * abs(fine):
            continue
        # one-sided quotients must agree as well, which rules out kinks
        forward, backward = (sp - s0) / h, (s0 - sm) / h
        if abs(forward - fine) > tol * abs(fine) or abs(backward - fine) > tol * abs(fine):
            continue
        logger.debug(f"KL point for {a.spec}: t0={t!r}, derivative={fine!r}")
        return KLPoint(t0=t, derivative=fine, radius=h)

    raise NoKLPoint(a.spec, len(candidates))


def is_polynomial_on_interval(a: Activation, interval: Sequence[float], max_degree: int, tol: float) -> bool:
    """
    Summary:
        Divided-difference test: sigma agrees with a polynomial of degree <= max_degree on
        [lo, hi] iff every (max_degree + 1)-th divided difference over an equispaced stencil
        of the 64-point grid vanishes. Differences below the rounding level of the grid
        values count as zero.

    Args:
        a: The activation.
        interval: [lo, hi] with lo < hi.
        max_degree: Degree bound, >= 0.
        tol: Magnitude threshold on the divided differences.

    Returns:
        True if all stencils pass.
    """
    lo, hi = float(interval[0]), float(interval[1])
    if not lo < hi:
        raise ValueError("interval must satisfy lo < hi")
    if max_degree < 0 or tol <= 0:
        raise ValueError("max_degree must be >= 0 and tol > 0")

    n_grid = Constants.polynomial_grid_size
    grid = np.linspace(lo, hi, n_grid)
    values = np.asarray(a(grid), dtype=float)
    order = max_degree + 1
    spacing = (hi - lo) / (n_grid - 1)
    scale = float(np.max(np.abs(values))) + 1.0
    eps = np.finfo(float).eps

    for stride in range(1, (n_grid - 1) // order + 1):
        h = spacing * stride
        denom = math.factorial(order) * h ** order
        floor = 64.0 * 2.0 ** order * eps * scale / denom
        for offset in range(stride):
            sub = values[offset::stride]
            if sub.size < order + 1:
                continue
            divided = np.diff(sub, n=order) / denom
            if np.any(np.abs(divided) > tol + floor):
                return False
    return True


def lipschitz_on(a: Activation, lo: float, hi: float, step: Optional[float] = None) -> float:
    """Largest difference quotient of sigma on [lo, hi] at the given scanning step."""
    step = Constants.lipschitz_scan_step if step is None else step
    lo, hi = float(min(lo, hi)), float(max(lo, hi))
    step = max(step, (hi - lo) / 2_000_000) if hi > lo else step
    grid = np.arange(lo, hi + step, step)
    if grid.size < 2:
        grid = np.array([lo, lo + step])
    values = np.asarray(a(grid), dtype=float)
    return float(np.max(np.abs(np.diff(values)) / np.diff(grid)))
