"""Functional-data containers, quadrature, FPCA and curve semi-metrics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.typing import ArrayLike, NDArray

__all__ = [
    "CurveSet",
    "FpcaBasis",
    "trapezoid_weights",
    "inner_product",
    "fpca",
    "project",
    "impute_sparse",
    "semimetric_pca",
    "pca_distances",
    "smooth_derivatives",
    "semimetric_deriv",
    "l2_distances",
    "n_components_for_variance",
]

EIGEN_CUTOFF = 1e-12


def _frozen(a: ArrayLike, dtype=float) -> NDArray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CurveSet:
    """n curves evaluated on a common grid over [0, 1].

    Parameters
    ----------
    grid : array of shape (T,)
        Strictly increasing abscissae.
    values : array of shape (n, T)
        Curve evaluations. Entries outside ``mask`` are ignored and may be NaN.
    mask : array of shape (n, T), optional
        Boolean matrix of observed grid points (sparse curves). ``None`` means
        every curve is fully observed.
    """

    grid: NDArray
    values: NDArray
    mask: Optional[NDArray] = None

    def __post_init__(self):
        grid = _frozen(self.grid)
        values = _frozen(np.atleast_2d(self.values))
        if grid.ndim != 1 or grid.size < 2:
            raise ValueError("grid must be a 1-D array with at least 2 points")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if values.ndim != 2 or values.shape[1] != grid.size:
            raise ValueError(
                f"values must have shape (n, {grid.size}); got {values.shape}"
            )
        mask = self.mask
        if mask is not None:
            mask = _frozen(mask, dtype=bool)
            if mask.shape != values.shape:
                raise ValueError("mask must have the same shape as values")
            if np.any(mask.sum(axis=1) < 2):
                raise ValueError("every sparse curve needs at least 2 observed points")
            if not np.all(np.isfinite(values[mask])):
                raise ValueError("observed curve values must be finite")
        elif not np.all(np.isfinite(values)):
            raise ValueError("dense curve values must be finite")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.grid.size

    @property
    def is_sparse(self) -> bool:
        return self.mask is not None and not bool(self.mask.all())

    def subset(self, idx) -> "CurveSet":
        idx = np.asarray(idx)
        mask = None if self.mask is None else self.mask[idx]
        return CurveSet(self.grid, self.values[idx], mask)

    def inner(self, g: ArrayLike) -> NDArray:
        """Quadrature inner product of every curve with ``g``.

        For sparse curves only the observed points of each curve enter the
        trapezoid rule.
        """
        g = np.asarray(g, dtype=float)
        if g.shape != self.grid.shape:
            raise ValueError("g must be evaluated on the curve grid")
        if self.mask is None:
            return self.values @ (trapezoid_weights(self.grid) * g)
        out = np.empty(self.n)
        for i in range(self.n):
            m = self.mask[i]
            out[i] = inner_product(self.values[i, m], g[m], self.grid[m])
        return out


@dataclass(frozen=True)
class FpcaBasis:
    """Result of a functional principal component decomposition.

    ``eigenfunctions`` are orthonormal under the trapezoid inner product on
    ``grid``; ``scores[i, k]`` is the inner product of centered curve ``i``
    with eigenfunction ``k``.
    """

    grid: NDArray
    mean: NDArray
    eigenfunctions: NDArray
    eigenvalues: NDArray
    scores: NDArray
    total_variance: float

    @property
    def K(self) -> int:
        return self.eigenvalues.size

    def reconstruct(self) -> NDArray:
        return self.mean + self.scores @ self.eigenfunctions


def trapezoid_weights(grid: ArrayLike) -> NDArray:
    """Weights ``w`` such that ``w @ f`` is the trapezoid rule for ``f`` on ``grid``."""
    grid = np.asarray(grid, dtype=float)
    dt = np.diff(grid)
    w = np.zeros(grid.size)
    w[:-1] += dt / 2
    w[1:] += dt / 2
    return w


def inner_product(f: ArrayLike, g: ArrayLike, grid: ArrayLike) -> float:
    """Trapezoid approximation of the integral of ``f * g`` over ``grid``."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    grid = np.asarray(grid, dtype=float)
    if not (f.shape == g.shape == grid.shape) or grid.ndim != 1:
        raise ValueError(
            f"f, g and grid must be 1-D with equal length; got {f.shape}, {g.shape}, {grid.shape}"
        )
    if grid.size >= 2 and np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    return float(trapezoid_weights(grid) @ (f * g))


def fpca(curves: CurveSet, K: int) -> FpcaBasis:
    """Functional principal components of dense curves.

    Solves the quadrature-weighted eigenproblem of the sample covariance
    surface, ``C W phi = lambda phi``, through the symmetric form
    ``W^1/2 C W^1/2``.
    """
    if curves.is_sparse:
        raise ValueError("fpca needs dense curves; run impute_sparse first")
    n, T = curves.values.shape
    if n < 2:
        raise ValueError("fpca needs at least 2 curves")
    if not 1 <= K <= min(n - 1, T):
        raise ValueError(f"K must be in [1, {min(n - 1, T)}]; got {K}")

    w = trapezoid_weights(curves.grid)
    sw = np.sqrt(w)
    mean = curves.values.mean(axis=0)
    centered = curves.values - mean
    cov = centered.T @ centered / (n - 1)
    sym = sw[:, None] * cov * sw[None, :]
    sym = (sym + sym.T) / 2
    evals, evecs = np.linalg.eigh(sym)
    order = np.argsort(evals)[::-1]
    evals = evals[order]
    evecs = evecs[:, order]

    # spectra at rounding level of the raw curves (e.g. identical curves) count as zero
    scale = float(w @ np.mean(curves.values**2, axis=0))
    top = evals[0] if evals[0] > 1e3 * np.finfo(float).eps ** 2 * max(scale, np.finfo(float).tiny) else 0.0
    evals = np.where(evals < EIGEN_CUTOFF * top, 0.0, evals)
    if top == 0.0:
        evals = np.zeros_like(evals)

    phi = (evecs[:, :K] / sw[:, None]).T
    # phi_k = u_k / sqrt(w) is unit-norm under trapezoid weights.
    scores = centered @ (w[:, None] * phi.T)
    return FpcaBasis(
        grid=_frozen(curves.grid),
        mean=_frozen(mean),
        eigenfunctions=_frozen(phi),
        eigenvalues=_frozen(evals[:K]),
        scores=_frozen(scores),
        total_variance=float(w @ np.diag(cov)),
    )


def project(basis: FpcaBasis, values: ArrayLike) -> NDArray:
    """Scores of (dense) ``values`` on the basis eigenfunctions."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    w = trapezoid_weights(basis.grid)
    return (values - basis.mean) @ (w[:, None] * basis.eigenfunctions.T)


def n_components_for_variance(basis_or_evals, fraction: float = 0.95, cap: int = 10) -> int:
    """Smallest K whose leading eigenvalues explain ``fraction`` of the variance."""
    evals = getattr(basis_or_evals, "eigenvalues", basis_or_evals)
    evals = np.clip(np.asarray(evals, dtype=float), 0, None)
    total = evals.sum()
    if total <= 0:
        return 1
    k = int(np.searchsorted(np.cumsum(evals) / total, fraction - 1e-12) + 1)
    return max(1, min(k, cap, evals.size))


def impute_sparse(curves: CurveSet) -> CurveSet:
    """Densify sparse curves by per-curve linear interpolation.

    Beyond the first/last observed point the boundary value is held constant.
    """
    if curves.mask is None:
        return curves
    if np.any(curves.mask.sum(axis=1) < 2):
        raise ValueError("every sparse curve needs at least 2 observed points")
    dense = np.empty(curves.values.shape)
    for i in range(curves.n):
        m = curves.mask[i]
        dense[i] = np.interp(curves.grid, curves.grid[m], curves.values[i, m])
    return CurveSet(curves.grid, dense)


def pca_distances(scores_a: ArrayLike, scores_b: Optional[ArrayLike] = None) -> NDArray:
    """Euclidean distances between rows of two score matrices."""
    a = np.atleast_2d(np.asarray(scores_a, dtype=float))
    b = a if scores_b is None else np.atleast_2d(np.asarray(scores_b, dtype=float))
    d = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1))
    if scores_b is None:
        d = (d + d.T) / 2
        np.fill_diagonal(d, 0.0)
    return d


def semimetric_pca(curves: CurveSet, K: int) -> NDArray:
    """Distance matrix between the first ``K`` FPCA score vectors."""
    basis = fpca(curves, K)
    return pca_distances(basis.scores)


def l2_distances(a: ArrayLike, b: Optional[ArrayLike], grid: ArrayLike) -> NDArray:
    """Trapezoid L2 distances between rows of ``a`` and rows of ``b``."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    sym = b is None
    b = a if sym else np.atleast_2d(np.asarray(b, dtype=float))
    w = trapezoid_weights(grid)
    diff2 = (a[:, None, :] - b[None, :, :]) ** 2
    d = np.sqrt(np.clip(diff2 @ w, 0.0, None))
    if sym:
        d = (d + d.T) / 2
        np.fill_diagonal(d, 0.0)
    return d


# --- cubic smoothing spline (Reinsch form) --------------------------------

_LAMBDA_GRID = np.logspace(-12, 2, 43)
_SPLINE_CACHE: dict = {}


def _reinsch_operators(grid: NDArray):
    """Hat, first- and second-derivative matrices for every lambda on the GCV grid.

    The natural cubic spline minimising ``sum (y - g)^2 + lam * int g''^2``
    has knot values ``g = (I + lam Q R^-1 Q^T)^-1 y`` and knot second
    derivatives ``gamma = R^-1 Q^T g`` (zero at both ends).
    """
    key = grid.tobytes()
    hit = _SPLINE_CACHE.get(key)
    if hit is not None:
        return hit
    T = grid.size
    h = np.diff(grid)
    Q = np.zeros((T, T - 2))
    R = np.zeros((T - 2, T - 2))
    for j in range(T - 2):
        Q[j, j] = 1 / h[j]
        Q[j + 1, j] = -1 / h[j] - 1 / h[j + 1]
        Q[j + 2, j] = 1 / h[j + 1]
        R[j, j] = (h[j] + h[j + 1]) / 3
        if j + 1 < T - 2:
            R[j, j + 1] = R[j + 1, j] = h[j + 1] / 6
    RinvQt = np.linalg.solve(R, Q.T)
    penalty = Q @ RinvQt
    penalty = (penalty + penalty.T) / 2

    # knot first derivatives as a linear map of (g, gamma)
    dg = np.zeros((T, T))
    dgam = np.zeros((T, T))
    for i in range(T - 1):
        dg[i, i] = -1 / h[i]
        dg[i, i + 1] = 1 / h[i]
        dgam[i, i] = -h[i] / 3
        dgam[i, i + 1] = -h[i] / 6
    dg[T - 1, T - 2] = -1 / h[-1]
    dg[T - 1, T - 1] = 1 / h[-1]
    dgam[T - 1, T - 2] = h[-1] / 6
    dgam[T - 1, T - 1] = h[-1] / 3

    hats, d1s, d2s, traces = [], [], [], []
    eye = np.eye(T)
    for lam in _LAMBDA_GRID:
        S = np.linalg.solve(eye + lam * penalty, eye)
        gamma = np.zeros((T, T))
        gamma[1:-1] = RinvQt @ S
        hats.append(S)
        d1s.append(dg @ S + dgam @ gamma)
        d2s.append(gamma)
        traces.append(np.trace(S))
    ops = (np.array(hats), np.array(d1s), np.array(d2s), np.array(traces))
    _SPLINE_CACHE[key] = ops
    return ops


def smooth_derivatives(curves: CurveSet, order: int) -> NDArray:
    """Derivatives of GCV-tuned cubic smoothing splines, evaluated on the grid.

    Parameters
    ----------
    curves : CurveSet
        Dense curves.
    order : {0, 1, 2}
        Derivative order (0 returns the smoothed curves).

    Returns
    -------
    ndarray of shape (n, T)
    """
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    if curves.is_sparse:
        raise ValueError("smooth_derivatives needs dense curves")
    T = curves.T
    if T < max(order + 2, 3):
        raise ValueError(f"need at least {max(order + 2, 3)} grid points for order {order}")
    hats, d1s, d2s, traces = _reinsch_operators(np.ascontiguousarray(curves.grid))
    Y = curves.values
    fitted = np.einsum("lst,nt->lns", hats, Y)
    rss = ((fitted - Y[None]) ** 2).sum(axis=-1)
    denom = np.clip(T - traces, 1e-12, None) ** 2
    gcv = T * rss / denom[:, None]
    best = np.argmin(gcv, axis=0)
    ops = {0: hats, 1: d1s, 2: d2s}[order]
    return np.einsum("nst,nt->ns", ops[best], Y)


def semimetric_deriv(curves: CurveSet, order: int) -> NDArray:
    """L2 distances between ``order``-th derivatives of smoothed curves."""
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    deriv = smooth_derivatives(curves, order)
    return l2_distances(deriv, None, curves.grid)
