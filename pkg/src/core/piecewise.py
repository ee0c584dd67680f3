from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from src.static import Constants

__all__ = (
    "TabulatedFunction",
    "knot_grid",
    "hat_design",
    "AdditiveFit",
    "fit_additive",
)


@dataclass
class TabulatedFunction:
    """Piecewise-linear function through (knots, values), constant beyond the end knots."""
    knots: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.knots = np.asarray(self.knots, dtype=float).ravel()
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.knots.size == 0 or self.knots.size != self.values.size:
            raise ValueError("knots and values must be nonempty and of equal length")
        if self.knots.size > 1 and np.any(np.diff(self.knots) <= 0):
            raise ValueError("knots must be strictly increasing")

    def __call__(self, t) -> np.ndarray:
        return np.interp(np.asarray(t, dtype=float), self.knots, self.values)

    @property
    def interval(self) -> tuple[float, float]:
        return float(self.knots[0]), float(self.knots[-1])

    @property
    def is_zero(self) -> bool:
        return bool(np.all(self.values == 0.0))

    def to_dict(self) -> dict:
        return {"knots": self.knots.tolist(), "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> TabulatedFunction:
        return cls(np.array(data["knots"], dtype=float), np.array(data["values"], dtype=float))

    @classmethod
    def constant(cls, value: float, at: float = 0.0) -> TabulatedFunction:
        return cls(np.array([at]), np.array([value]))


def knot_grid(lo: float, hi: float, count: int | str, samples: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Equispaced knots on [lo, hi], or the distinct sample values when count == "data".
    A degenerate interval collapses to a single knot.
    """
    if count == "data":
        if samples is None:
            raise ValueError("data knots need the sample values")
        return np.unique(np.asarray(samples, dtype=float))
    count = int(count)
    if count < 1:
        raise ValueError("knot count must be positive")
    if hi - lo <= 1e-15 * max(1.0, abs(lo), abs(hi)) or count == 1:
        return np.array([0.5 * (lo + hi)])
    return np.linspace(lo, hi, count)


def hat_design(t: np.ndarray, knots: np.ndarray) -> np.ndarray:
    """Design matrix of the hat basis on `knots`; rows reproduce np.interp for any coefficient vector."""
    t = np.asarray(t, dtype=float).ravel()
    k = knots.size
    if k == 1:
        return np.ones((t.size, 1))
    idx = np.clip(np.searchsorted(knots, t, side="right") - 1, 0, k - 2)
    left, right = knots[idx], knots[idx + 1]
    frac = np.clip((t - left) / (right - left), 0.0, 1.0)
    design = np.zeros((t.size, k))
    rows = np.arange(t.size)
    design[rows, idx] = 1.0 - frac
    design[rows, idx + 1] += frac
    return design


@dataclass
class AdditiveFit:
    tables: list[TabulatedFunction]
    fitted: np.ndarray
    residual: float
    quadratic: Optional[np.ndarray] = None


def fit_additive(
        columns: Sequence[np.ndarray],
        target: np.ndarray,
        knots: Sequence[np.ndarray],
        *,
        quadratic: bool = False,
        cond: Optional[float] = None,
) -> AdditiveFit:
    """
    Summary:
        Minimum-norm least squares for target ~ sum_i u_i(t_i) with piecewise-linear u_i.
        With `quadratic` each u_i also carries a (t_i - mid_i)^2 term.

    Args:
        columns: Feature values t_i on the sample, one array per feature.
        target: Target values on the sample.
        knots: Knot vector per feature.
        quadratic: Enables the quadratic-capable basis.
        cond: Relative singular value cutoff for rank decisions.

    Returns:
        The fitted tables, the fitted values and the sup residual.
    """
    target = np.asarray(target, dtype=float).ravel()
    blocks, sizes, mids = [], [], []
    for t, kn in zip(columns, knots):
        blocks.append(hat_design(t, kn))
        sizes.append(kn.size)
        if quadratic:
            mid = 0.5 * (float(np.min(t)) + float(np.max(t)))
            mids.append(mid)
            blocks.append(((np.asarray(t, dtype=float) - mid) ** 2).reshape(-1, 1))
    design = np.hstack(blocks)
    cond = Constants.lstsq_cond if cond is None else cond
    coef, *_ = linalg.lstsq(design, target, cond=cond, lapack_driver="gelsd")
    fitted = design @ coef

    tables, quad, pos = [], [], 0
    for kn, size in zip(knots, sizes):
        tables.append(TabulatedFunction(kn, coef[pos:pos + size]))
        pos += size
        if quadratic:
            quad.append(coef[pos])
            pos += 1
    residual = float(np.max(np.abs(fitted - target))) if target.size else 0.0
    return AdditiveFit(tables, fitted, residual, np.array(quad) if quadratic else None)
