"""Fitted FSIM and NFR models: the full Bayesian bandwidth pipeline and persistence."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import List, Optional, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .error_model import ArParams, KernelErrorDensity, select_ar_order
from .fda import CurveSet, FpcaBasis
from .forecast import PredictionInterval, prediction_intervals
from .mcmc import ChainSummary, KernelRegressionData, McmcConfig, PriorSpec, run_chain
from .regression import NwModel, SindexFit, estimate_index, kernel_smooth, nw_predict, select_index_K

__all__ = ["FsimModel", "NfrModel", "fit_fsim", "fit_nfr", "cv_bandwidth", "MODEL_FORMAT"]

MODEL_FORMAT = "fsim-model/1"


def _rule_of_thumb(x: NDArray) -> float:
    sd = float(np.std(x, ddof=1))
    return 1.06 * (sd if sd > 0 else 1.0) * x.size ** (-0.2)


@dataclass(frozen=True)
class FsimModel:
    """Functional single index model with Bayesian bandwidths and kernel error density."""

    fit: SindexFit
    y: NDArray
    h: float
    b: float
    rho: NDArray
    residuals: NDArray
    chain: Optional[ChainSummary] = None
    prior: PriorSpec = PriorSpec()

    @property
    def nw(self) -> NwModel:
        return NwModel(self.fit.index, self.y, self.h)

    @property
    def density(self) -> KernelErrorDensity:
        """Kernel density of the AR-filtered residuals."""
        return KernelErrorDensity.from_residuals(self.residuals, self.b, ArParams(self.rho))

    @property
    def marginal_density(self) -> KernelErrorDensity:
        return self.density.marginal()

    def fitted(self) -> NDArray:
        """Full-sample NW fit at the training indices."""
        return nw_predict(self.nw, self.fit.index)[0]

    def predict(self, curves: CurveSet) -> Tuple[NDArray, NDArray]:
        if curves.T != self.fit.basis.grid.size or not np.array_equal(curves.grid, self.fit.basis.grid):
            raise ValueError("curves are not on the model grid")
        return nw_predict(self.nw, self.fit.index_of(curves))

    def intervals(self, curves: CurveSet, level: float = 0.95, fixed_range: bool = False) -> List[PredictionInterval]:
        points, _ = self.predict(curves)
        return prediction_intervals(points, self.marginal_density, level, fixed_range)

    def to_dict(self) -> dict:
        basis = self.fit.basis
        return {
            "format": MODEL_FORMAT,
            "grid": basis.grid.tolist(),
            "mean_curve": basis.mean.tolist(),
            "eigenfunctions": basis.eigenfunctions.tolist(),
            "eigenvalues": basis.eigenvalues.tolist(),
            "scores": basis.scores.tolist(),
            "total_variance": basis.total_variance,
            "K": basis.K,
            "beta_coeffs": self.fit.beta_coeffs.tolist(),
            "beta": self.fit.beta_curve.tolist(),
            "index": self.fit.index.tolist(),
            "y": self.y.tolist(),
            "h": self.h,
            "b": self.b,
            "rho": self.rho.tolist(),
            "residuals": self.residuals.tolist(),
            "prior": asdict(self.prior),
            "chain": None if self.chain is None else self.chain.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FsimModel":
        if d.get("format") != MODEL_FORMAT:
            raise ValueError(f"not an {MODEL_FORMAT} model file")
        arr = lambda key: np.asarray(d[key], dtype=float)  # noqa: E731
        basis = FpcaBasis(
            grid=arr("grid"),
            mean=arr("mean_curve"),
            eigenfunctions=arr("eigenfunctions").reshape(int(d["K"]), -1),
            eigenvalues=arr("eigenvalues"),
            scores=arr("scores").reshape(-1, int(d["K"])),
            total_variance=float(d["total_variance"]),
        )
        h = float(d["h"])
        fit = SindexFit(arr("beta_coeffs"), arr("beta"), arr("index"), basis, h)
        return cls(
            fit=fit,
            y=arr("y"),
            h=h,
            b=float(d["b"]),
            rho=arr("rho"),
            residuals=arr("residuals"),
            chain=None,
            prior=PriorSpec(**d["prior"]),
        )


def fit_fsim(
    curves: CurveSet,
    y: ArrayLike,
    K: Optional[int] = None,
    ar_order: Union[int, str] = 0,
    prior: PriorSpec = PriorSpec(),
    mcmc: McmcConfig = McmcConfig(),
    rng: Optional[np.random.Generator] = None,
) -> FsimModel:
    """Estimate the index, then sample ``(h^2, b^2, rho)`` from the bandwidth posterior.

    ``ar_order="aicc"`` picks p in 0..3 by AICc on leave-one-out residuals at a
    rule-of-thumb bandwidth. Bandwidths are the square roots of the posterior
    means of ``h^2`` and ``b^2``.
    """
    y = np.asarray(y, dtype=float).ravel()
    if K is None:
        K = select_index_K(curves, y)
    fit = estimate_index(curves, y, K)
    data = KernelRegressionData.from_index(fit.index, y)
    if ar_order == "aicc":
        p = select_ar_order(data.residuals(_rule_of_thumb(fit.index)), max_order=3)
    else:
        p = int(ar_order)
    chain = run_chain(data, prior, mcmc, p=p, rng=rng)
    h = chain.h
    return FsimModel(
        fit=fit.with_bandwidth(h),
        y=y,
        h=h,
        b=chain.b,
        rho=chain.rho,
        residuals=data.residuals(h),
        chain=chain,
        prior=prior,
    )


def cv_bandwidth(sqdist: ArrayLike, y: ArrayLike, n_grid: int = 60) -> float:
    """Leave-one-out cross-validated NW bandwidth over a log grid of distance quantiles."""
    sq = np.asarray(sqdist, dtype=float)
    y = np.asarray(y, dtype=float)
    d = np.sqrt(sq[np.triu_indices_from(sq, 1)])
    d = d[d > 0]
    if d.size == 0:
        raise ValueError("all distances are zero")
    hs = np.geomspace(np.quantile(d, 0.01) / 4, d.max() * 2, n_grid)
    errs = [np.mean((y - kernel_smooth(sq, y, h, leave_one_out=True)[0]) ** 2) for h in hs]
    return float(hs[int(np.argmin(errs))])


@dataclass(frozen=True)
class NfrModel:
    """Semi-metric NW regression with a Bayesian (iid kernel likelihood) bandwidth."""

    y: NDArray
    h: float
    b: float
    residuals: NDArray
    chain: Optional[ChainSummary] = None

    @property
    def density(self) -> KernelErrorDensity:
        return KernelErrorDensity(self.residuals, self.b)

    def fitted(self, dist: ArrayLike) -> NDArray:
        return kernel_smooth(np.asarray(dist, dtype=float) ** 2, self.y, self.h)[0]

    def predict(self, dist_rows: ArrayLike) -> Tuple[NDArray, NDArray]:
        return kernel_smooth(np.atleast_2d(np.asarray(dist_rows, dtype=float)) ** 2, self.y, self.h)


def fit_nfr(
    dist: ArrayLike,
    y: ArrayLike,
    prior: PriorSpec = PriorSpec(),
    mcmc: McmcConfig = McmcConfig(),
    rng: Optional[np.random.Generator] = None,
    bandwidth: str = "bayes",
) -> NfrModel:
    """Fit a semi-metric NW regression from a training distance matrix.

    ``bandwidth="bayes"`` samples ``(h^2, b^2)`` with iid errors;
    ``bandwidth="cv"`` takes h by leave-one-out CV and b by the normal
    reference rule on the residuals.
    """
    y = np.asarray(y, dtype=float).ravel()
    data = KernelRegressionData.from_distances(dist, y)
    if bandwidth == "bayes":
        chain = run_chain(data, prior, mcmc, p=0, rng=rng)
        h, b = chain.h, chain.b
    elif bandwidth == "cv":
        chain = None
        h = cv_bandwidth(data.sqdist, y)
        b = _rule_of_thumb(data.residuals(h))
    else:
        raise ValueError(f"unknown bandwidth method {bandwidth!r}")
    return NfrModel(y=y, h=h, b=b, residuals=data.residuals(h), chain=chain)
