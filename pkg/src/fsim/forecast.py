"""Point forecasts for new curves and CDF-inversion prediction intervals."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .error_model import KernelErrorDensity
from .fda import CurveSet, inner_product
from .regression import ExtrapolationWarning, NwModel, SindexFit, nw_predict

__all__ = [
    "PredictionInterval",
    "point_forecast",
    "point_forecasts",
    "error_cdf",
    "error_cdf_quantile",
    "prediction_interval",
    "prediction_intervals",
    "empirical_coverage",
]

GRID_POINTS = 1001
HALF_WIDTH = 5.0


@dataclass(frozen=True)
class PredictionInterval:
    point: float
    lo: float
    hi: float
    level: float

    def __post_init__(self):
        if not 0 < self.level < 1:
            raise ValueError("level must lie in (0, 1)")
        if self.lo > self.hi:
            raise ValueError("interval lower end exceeds upper end")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def covers(self, y: float) -> bool:
        return self.lo <= y <= self.hi


def point_forecast(fit: SindexFit, model: NwModel, new_curve: ArrayLike) -> float:
    """NW forecast at the index of a new curve given on the training grid."""
    new_curve = np.asarray(new_curve, dtype=float)
    x_new = inner_product(new_curve, fit.beta_curve, fit.basis.grid)
    val, flag = nw_predict(model, [x_new])
    if flag[0]:
        warnings.warn("new curve lies far outside the training index range", ExtrapolationWarning, stacklevel=2)
    return float(val[0])


def point_forecasts(fit: SindexFit, model: NwModel, curves: CurveSet) -> Tuple[NDArray, NDArray]:
    """Vectorised :func:`point_forecast`; returns ``(values, extrapolation_flags)``."""
    if curves.T != fit.basis.grid.size or not np.allclose(curves.grid, fit.basis.grid):
        raise ValueError("new curves must be observed on the training grid")
    return nw_predict(model, fit.index_of(curves))


def error_cdf(d: KernelErrorDensity, fixed_range: bool = False, n_grid: int = GRID_POINTS) -> Tuple[NDArray, NDArray]:
    """Trapezoid CDF of the error density on an evaluation grid.

    The grid spans ``center +- 5 * spread`` of the mixture, or ``[-5, 5]``
    when ``fixed_range`` is set.
    """
    if fixed_range:
        lo, hi = -HALF_WIDTH, HALF_WIDTH
    else:
        lo = d.center - HALF_WIDTH * d.spread
        hi = d.center + HALF_WIDTH * d.spread
    grid = np.linspace(lo, hi, n_grid)
    dens = d.pdf(grid)
    cdf = np.concatenate([[0.0], np.cumsum((dens[1:] + dens[:-1]) / 2 * np.diff(grid))])
    return grid, cdf


def _invert(grid: NDArray, cdf: NDArray, q: float) -> float:
    # argmin returns the lower index on exact ties
    return float(grid[np.argmin(np.abs(cdf - q))])


def error_cdf_quantile(d: KernelErrorDensity, q: float, fixed_range: bool = False) -> float:
    """Grid point whose CDF value is closest to ``q``."""
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    grid, cdf = error_cdf(d, fixed_range)
    return _invert(grid, cdf, q)


def prediction_interval(
    point: float, d: KernelErrorDensity, level: float = 0.95, fixed_range: bool = False
) -> PredictionInterval:
    """``point`` plus the lower and upper ``(1 - level)/2`` error quantiles."""
    return prediction_intervals([point], d, level, fixed_range)[0]


def prediction_intervals(
    points: Iterable[float], d: KernelErrorDensity, level: float = 0.95, fixed_range: bool = False
) -> List[PredictionInterval]:
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    grid, cdf = error_cdf(d, fixed_range)
    alpha = (1 - level) / 2
    qlo, qhi = _invert(grid, cdf, alpha), _invert(grid, cdf, 1 - alpha)
    return [PredictionInterval(float(p), float(p) + qlo, float(p) + qhi, level) for p in points]


def empirical_coverage(intervals: Sequence[PredictionInterval], y_holdout: ArrayLike) -> float:
    """Fraction of holdout responses that fall inside their intervals."""
    y = np.asarray(y_holdout, dtype=float).ravel()
    if len(intervals) != y.size:
        raise ValueError("need one interval per holdout response")
    if y.size == 0:
        raise ValueError("no holdout responses")
    return sum(iv.covers(v) for iv, v in zip(intervals, y)) / y.size
