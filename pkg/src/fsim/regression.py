"""Single-index estimation and Nadaraya-Watson smoothing."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .fda import CurveSet, FpcaBasis, fpca, n_components_for_variance

__all__ = [
    "SingularFitError",
    "ExtrapolationWarning",
    "SindexFit",
    "NwModel",
    "kernel_smooth",
    "nw_estimate",
    "nw_predict",
    "default_index_K",
    "select_index_K",
    "estimate_index",
    "index_sqdist",
    "loo_fitted",
    "residuals",
    "nfr_estimate",
    "nfr_predict",
]

# exp(-u) is subnormal or zero beyond this exponent
_UNDERFLOW = -np.log(np.finfo(float).tiny)


class SingularFitError(ValueError):
    """The functional linear regression for the index direction is degenerate."""


class ExtrapolationWarning(RuntimeWarning):
    """All kernel weights underflowed; the nearest-neighbour response was used."""


@dataclass(frozen=True)
class SindexFit:
    """Estimated single-index direction.

    Attributes
    ----------
    beta_coeffs : ndarray (K,)
        Unit-norm coefficients of the direction on the FPCA eigenfunctions.
    beta_curve : ndarray (T,)
        The direction evaluated on the grid; unit L2 norm.
    index : ndarray (n,)
        ``<curve_i, beta_curve>`` for the training curves.
    basis : FpcaBasis
    h : float or None
        Regression bandwidth, set once it has been estimated.
    """

    beta_coeffs: NDArray
    beta_curve: NDArray
    index: NDArray
    basis: FpcaBasis
    h: Optional[float] = None

    def with_bandwidth(self, h: float) -> "SindexFit":
        if not h > 0:
            raise ValueError("bandwidth must be positive")
        return replace(self, h=float(h))

    def index_of(self, curves: CurveSet) -> NDArray:
        return curves.inner(self.beta_curve)


@dataclass(frozen=True)
class NwModel:
    x: NDArray
    y: NDArray
    h: float

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).ravel()
        y = np.asarray(self.y, dtype=float).ravel()
        if x.size != y.size:
            raise ValueError("x and y must have the same length")
        if x.size < 1:
            raise ValueError("NwModel needs at least one observation")
        if not self.h > 0:
            raise ValueError("bandwidth h must be positive")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "h", float(self.h))


def kernel_smooth(
    sqdist: ArrayLike, y: ArrayLike, h: float, leave_one_out: bool = False
) -> Tuple[NDArray, NDArray]:
    """Gaussian-kernel weighted means of ``y``.

    Parameters
    ----------
    sqdist : array (m, n)
        Squared distances from each evaluation point to the n data points.
    y : array (n,)
    h : float
        Bandwidth.
    leave_one_out : bool
        Exclude the diagonal (requires m == n).

    Returns
    -------
    values : ndarray (m,)
    flags : ndarray of bool (m,)
        True where every raw weight underflowed and the nearest-neighbour
        response was returned instead.
    """
    y = np.asarray(y, dtype=float)
    u = np.array(sqdist, dtype=float, ndmin=2) / (2.0 * h * h)
    if leave_one_out:
        if u.shape[0] != u.shape[1]:
            raise ValueError("leave-one-out needs a square distance matrix")
        np.fill_diagonal(u, np.inf)
    umin = u.min(axis=1)
    wts = np.exp(-(u - umin[:, None]))
    values = (wts @ y) / wts.sum(axis=1)
    flags = umin > _UNDERFLOW
    if flags.any():
        nearest = np.argmin(u[flags], axis=1)
        values[flags] = y[nearest]
    return values, flags


def nw_predict(model: NwModel, x0: ArrayLike) -> Tuple[NDArray, NDArray]:
    """Vectorised NW estimate at ``x0``; returns ``(values, flags)``."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    return kernel_smooth((x0[:, None] - model.x[None, :]) ** 2, model.y, model.h)


def nw_estimate(model: NwModel, x0: float) -> float:
    """Gaussian-kernel Nadaraya-Watson estimate of the regression at ``x0``."""
    val, flag = nw_predict(model, [x0])
    if flag[0]:
        warnings.warn(
            f"all kernel weights vanish at x0={x0}; using nearest-neighbour response",
            ExtrapolationWarning,
            stacklevel=2,
        )
    return float(val[0])


def default_index_K(basis_or_evals, fraction: float = 0.95, cap: int = 10) -> int:
    """Smallest K explaining ``fraction`` of the curve variance, at most ``cap``."""
    return n_components_for_variance(basis_or_evals, fraction, cap)


def select_index_K(
    curves: CurveSet, y: ArrayLike, method: str = "press", cap: int = 10, fraction: float = 0.95
) -> int:
    """Number of FPCA scores used to estimate the index direction.

    ``"press"`` minimises the leave-one-out prediction error of the linear
    regression of ``y`` on the leading scores; ``"variance"`` takes the
    smallest K explaining ``fraction`` of the curve variance.
    """
    y = np.asarray(y, dtype=float).ravel()
    n = curves.n
    kmax = min(cap, n - 3, curves.T)
    if kmax < 1:
        raise ValueError("too few curves to estimate an index")
    full = fpca(curves, min(n - 1, curves.T))
    if method == "variance":
        return min(default_index_K(full, fraction, cap), kmax)
    if method != "press":
        raise ValueError(f"unknown K selection method {method!r}")
    evals = full.eigenvalues
    best_k, best = 1, np.inf
    for k in range(1, kmax + 1):
        if evals[k - 1] <= 0:
            break
        design = np.column_stack([np.ones(n), full.scores[:, :k]])
        q, _ = np.linalg.qr(design)
        lev = (q * q).sum(axis=1)
        resid = y - q @ (q.T @ y)
        press = np.sum((resid / np.clip(1 - lev, 1e-12, None)) ** 2)
        if press < best * (1 - 1e-10):
            best_k, best = k, press
    return best_k


def estimate_index(curves: CurveSet, y: ArrayLike, K: Optional[int] = None) -> SindexFit:
    """Estimate the index direction by functional principal component regression.

    ``y`` is regressed on the first ``K`` FPCA scores (with intercept); the
    coefficient function is normalised to unit L2 norm with its
    largest-magnitude coefficient positive.
    """
    y = np.asarray(y, dtype=float).ravel()
    n = curves.n
    if y.size != n:
        raise ValueError("y must have one response per curve")
    if K is None:
        K = select_index_K(curves, y)
    if n < K + 2:
        raise ValueError(f"need n >= K + 2 curves; got n={n}, K={K}")
    basis = fpca(curves, K)
    design = np.column_stack([np.ones(n), basis.scores])
    if np.linalg.matrix_rank(design) < K + 1:
        raise SingularFitError("FPCA score matrix is rank deficient")
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    s = coef[1:]
    signal = basis.scores @ s
    scale = max(float(np.abs(y).max()), np.finfo(float).tiny)
    if np.linalg.norm(signal) <= 1e-12 * np.sqrt(n) * scale:
        raise SingularFitError("response carries no linear signal on the scores")
    s = s / np.linalg.norm(s)
    if s[np.argmax(np.abs(s))] < 0:
        s = -s
    beta_curve = s @ basis.eigenfunctions
    return SindexFit(
        beta_coeffs=s,
        beta_curve=beta_curve,
        index=curves.inner(beta_curve),
        basis=basis,
    )


def index_sqdist(a: ArrayLike, b: Optional[ArrayLike] = None) -> NDArray:
    """Squared differences between index values."""
    a = np.asarray(a, dtype=float).ravel()
    b = a if b is None else np.asarray(b, dtype=float).ravel()
    return (a[:, None] - b[None, :]) ** 2


def loo_fitted(sqdist: ArrayLike, y: ArrayLike, h: float) -> NDArray:
    """Leave-one-out NW fits at the training points."""
    values, _ = kernel_smooth(sqdist, y, h, leave_one_out=True)
    return values


def residuals(curves: CurveSet, y: ArrayLike, fit: SindexFit) -> NDArray:
    """Leave-one-out residuals ``y_i - m_hat_{-i}(X_i)``."""
    y = np.asarray(y, dtype=float).ravel()
    if fit.h is None:
        raise ValueError("fit has no bandwidth; use fit.with_bandwidth(h)")
    if y.size < 3:
        raise ValueError("residuals need at least 3 observations")
    X = fit.index_of(curves)
    return y - loo_fitted(index_sqdist(X), y, fit.h)


def nfr_estimate(dist: ArrayLike, y: ArrayLike, h: float, i: int) -> float:
    """Leave-one-out NW estimate for training curve ``i`` from a distance matrix."""
    dist = np.asarray(dist, dtype=float)
    y = np.asarray(y, dtype=float)
    if not h > 0:
        raise ValueError("bandwidth h must be positive")
    row = dist[i] ** 2
    keep = np.arange(y.size) != i
    val, flag = kernel_smooth(row[keep][None, :], y[keep], h)
    if flag[0]:
        warnings.warn(
            f"all kernel weights vanish for curve {i}; using nearest-neighbour response",
            ExtrapolationWarning,
            stacklevel=2,
        )
    return float(val[0])


def nfr_predict(dist_rows: ArrayLike, y: ArrayLike, h: float) -> Tuple[NDArray, NDArray]:
    """Full-sample NW estimates for new curves given their distances to the data."""
    d = np.atleast_2d(np.asarray(dist_rows, dtype=float))
    return kernel_smooth(d**2, y, h)
