"""AR(p) error filtering, kernel-form error density and kernel likelihood."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

__all__ = [
    "ArParams",
    "KernelErrorDensity",
    "is_stationary",
    "ar_filter",
    "ar_unfilter",
    "density_eval",
    "log_kernel_likelihood",
    "pairwise_sqdiff",
    "loo_log_mixture",
    "ar1_covariance",
    "simulate_ar",
    "marginal_scale",
    "select_ar_order",
]

_LOG_SQRT_2PI = 0.5 * np.log(2 * np.pi)


def is_stationary(rho: ArrayLike) -> bool:
    """True when every root of ``1 - rho_1 z - ... - rho_p z^p`` lies outside the unit circle."""
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    if rho.size == 0:
        return True
    if not np.all(np.isfinite(rho)):
        return False
    if rho.size == 1:
        return abs(rho[0]) < 1
    companion = np.zeros((rho.size, rho.size))
    companion[0] = rho
    companion[1:, :-1] = np.eye(rho.size - 1)
    return bool(np.max(np.abs(np.linalg.eigvals(companion))) < 1)


@dataclass(frozen=True)
class ArParams:
    """Autoregression coefficients ``rho_1..rho_p`` of a stationary AR(p) model."""

    rho: NDArray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        rho = np.atleast_1d(np.asarray(self.rho, dtype=float)).copy()
        if rho.ndim != 1:
            raise ValueError("rho must be a vector")
        if not is_stationary(rho):
            raise ValueError(f"AR coefficients {rho.tolist()} are not stationary")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    @property
    def p(self) -> int:
        return self.rho.size


RhoLike = Union[ArParams, Sequence[float], NDArray, float]


def _as_ar(rho: RhoLike) -> ArParams:
    return rho if isinstance(rho, ArParams) else ArParams(rho)


def ar_filter(eps: ArrayLike, rho: RhoLike) -> NDArray:
    """Innovations ``eta_j = eps_j - sum_w rho_w eps_{j-w}`` for ``j = p+1..n``."""
    ar = _as_ar(rho)
    eps = np.asarray(eps, dtype=float).ravel()
    p, n = ar.p, eps.size
    if n <= p:
        raise ValueError(f"need more than p={p} residuals; got {n}")
    eta = eps[p:].copy()
    for w in range(1, p + 1):
        eta -= ar.rho[w - 1] * eps[p - w : n - w]
    return eta


def ar_unfilter(eta: ArrayLike, init: ArrayLike, rho: RhoLike) -> NDArray:
    """Invert :func:`ar_filter` given the first ``p`` values of the series."""
    ar = _as_ar(rho)
    eta = np.asarray(eta, dtype=float).ravel()
    init = np.atleast_1d(np.asarray(init, dtype=float)).ravel()
    if init.size != ar.p:
        raise ValueError("init must hold exactly p starting values")
    eps = np.concatenate([init, np.empty(eta.size)])
    for j in range(ar.p, eps.size):
        eps[j] = eta[j - ar.p] + sum(ar.rho[w - 1] * eps[j - w] for w in range(1, ar.p + 1))
    return eps


@dataclass(frozen=True)
class KernelErrorDensity:
    """Location mixture of Gaussians centred at the innovations with common sd ``b``."""

    eta: NDArray
    b: float
    rho: ArParams = field(default_factory=ArParams)

    def __post_init__(self):
        eta = np.asarray(self.eta, dtype=float).ravel().copy()
        if eta.size < 1 or not np.all(np.isfinite(eta)):
            raise ValueError("eta must be a non-empty finite vector")
        if not (np.isfinite(self.b) and self.b > 0):
            raise ValueError("density bandwidth b must be positive")
        eta.setflags(write=False)
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "rho", _as_ar(self.rho))

    @classmethod
    def from_residuals(cls, eps: ArrayLike, b: float, rho: RhoLike = ()) -> "KernelErrorDensity":
        ar = _as_ar(rho)
        return cls(ar_filter(eps, ar), b, ar)

    @property
    def center(self) -> float:
        return float(self.eta.mean())

    @property
    def spread(self) -> float:
        """Standard deviation of the mixture."""
        return float(np.sqrt(self.eta.var() + self.b**2))

    def pdf(self, points: ArrayLike) -> NDArray:
        x = np.asarray(points, dtype=float)
        z = (x.ravel()[:, None] - self.eta[None, :]) / self.b
        dens = np.exp(-0.5 * z * z).mean(axis=1) / (self.b * np.sqrt(2 * np.pi))
        return dens.reshape(x.shape)

    def __call__(self, points: ArrayLike) -> NDArray:
        return self.pdf(points)

    def scaled(self, factor: float) -> "KernelErrorDensity":
        """Density of ``factor * e`` when ``e`` follows this density."""
        return KernelErrorDensity(self.eta * factor, self.b * factor, self.rho)

    def marginal(self) -> "KernelErrorDensity":
        """Innovation density rescaled to the stationary error variance.

        Exact in scale (not in shape) for non-Gaussian innovations; the
        identity when ``p = 0``.
        """
        if self.rho.p == 0:
            return self
        return KernelErrorDensity(
            self.eta * marginal_scale(self.rho), self.b * marginal_scale(self.rho)
        )


def density_eval(d: KernelErrorDensity, point: float) -> float:
    return float(d.pdf(point))


def pairwise_sqdiff(eta: NDArray) -> Tuple[NDArray, NDArray]:
    """Squared innovation differences with an infinite diagonal, and their row minima."""
    d2 = (eta[:, None] - eta[None, :]) ** 2
    np.fill_diagonal(d2, np.inf)
    return d2, d2.min(axis=1)


def loo_log_mixture(d2: NDArray, dmin: NDArray, b: float) -> float:
    """Sum over i of the log leave-one-out mixture density, from :func:`pairwise_sqdiff`."""
    m = dmin.size
    scale = 0.5 / (b * b)
    s = np.exp((dmin[:, None] - d2) * scale).sum(axis=1)
    per_point = np.log(s) - dmin * scale
    return float(per_point.sum() - m * (np.log(m - 1) + np.log(b) + _LOG_SQRT_2PI))


def log_kernel_likelihood(eps_hat: ArrayLike, b: float, rho: RhoLike = ()) -> float:
    """Log of the leave-one-out kernel likelihood of the filtered residuals.

    ``sum_i log[ 1/(m-1) sum_{j != i} phi((eta_i - eta_j)/b) / b ]`` with
    ``eta = ar_filter(eps_hat, rho)`` and ``m = n - p``. Each inner mixture
    is evaluated relative to its largest term, so tiny ``b`` cannot underflow.
    """
    if not b > 0:
        raise ValueError("density bandwidth b must be positive")
    eta = ar_filter(eps_hat, rho)
    if eta.size < 2:
        raise ValueError("need at least 2 innovations")
    return loo_log_mixture(*pairwise_sqdiff(eta), b)


def ar1_covariance(rho: float, sigma2: float, n: int) -> NDArray:
    """Covariance ``sigma2 * rho^|j-k| / (1 - rho^2)`` of a stationary AR(1) path."""
    if not abs(rho) < 1:
        raise ValueError("AR(1) coefficient must satisfy |rho| < 1")
    if not sigma2 > 0:
        raise ValueError("innovation variance must be positive")
    lag = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    return sigma2 * np.power(float(rho), lag) / (1 - rho**2)


def marginal_scale(rho: RhoLike) -> float:
    """Ratio sd(eps) / sd(eta) of a stationary AR(p) process."""
    ar = _as_ar(rho)
    if ar.p == 0:
        return 1.0
    # MA(infinity) weights psi_j by the AR recursion
    psi = [1.0]
    for j in range(1, 2000):
        val = sum(ar.rho[w - 1] * psi[j - w] for w in range(1, min(ar.p, j) + 1))
        psi.append(val)
        if abs(val) < 1e-14 and j > ar.p:
            break
    return float(np.sqrt(np.sum(np.square(psi))))


def simulate_ar(n: int, rho: RhoLike, sigma2_eta: float, rng: np.random.Generator) -> NDArray:
    """Simulate a stationary AR(p) path of length ``n`` with Gaussian innovations.

    AR(1) starts from its stationary marginal; higher orders run a burn-in of
    ``50 * p + 200`` steps that is discarded.
    """
    ar = _as_ar(rho)
    sd = np.sqrt(sigma2_eta)
    if ar.p == 0:
        return sd * rng.standard_normal(n)
    if ar.p == 1:
        r = ar.rho[0]
        eta = sd * rng.standard_normal(n)
        eps = np.empty(n)
        eps[0] = eta[0] / np.sqrt(1 - r * r)
        for j in range(1, n):
            eps[j] = r * eps[j - 1] + eta[j]
        return eps
    burn = 50 * ar.p + 200
    eta = sd * rng.standard_normal(n + burn)
    eps = ar_unfilter(eta[ar.p :], eta[: ar.p], ar)
    return eps[burn:]


def _ar_ls_variance(eps: NDArray, p: int, start: int) -> float:
    y = eps[start:]
    if p == 0:
        return float(np.mean((y - y.mean()) ** 2))
    X = np.column_stack([eps[start - w : eps.size - w] for w in range(1, p + 1)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    return float(np.mean((y - X @ coef) ** 2))


def select_ar_order(eps: ArrayLike, max_order: int = 3) -> int:
    """AR order in ``0..max_order`` minimising AICc on a common effective sample."""
    eps = np.asarray(eps, dtype=float).ravel()
    m = eps.size - max_order
    if m < max_order + 3:
        raise ValueError("series too short for AR order selection")
    best, best_aicc = 0, np.inf
    for p in range(max_order + 1):
        s2 = max(_ar_ls_variance(eps, p, max_order), np.finfo(float).tiny)
        k = p + 1
        aicc = m * np.log(s2) + 2 * k + 2 * k * (k + 1) / (m - k - 1)
        if aicc < best_aicc - 1e-12:
            best, best_aicc = p, aicc
    return best
