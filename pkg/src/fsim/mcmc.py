"""Bayesian bandwidth posterior, adaptive random-walk Metropolis and chain diagnostics.

The parameter vector is ``theta = (h^2, b^2, rho_1, ..., rho_p)``: the squared
regression bandwidth, the squared error-density bandwidth and the AR
coefficients of the errors.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import gammaln

from .error_model import ar_filter, is_stationary, log_kernel_likelihood, loo_log_mixture, pairwise_sqdiff
from .regression import _UNDERFLOW

__all__ = [
    "ChainFailure",
    "PriorSpec",
    "McmcConfig",
    "ChainSummary",
    "KernelRegressionData",
    "BandwidthPosterior",
    "param_names",
    "log_prior",
    "log_posterior",
    "rwm_step",
    "robbins_monro_update",
    "run_chain",
    "run_sampler",
    "chain_diagnostics",
    "geweke_z",
    "autocorrelation",
    "read_chain_csv",
]


class ChainFailure(RuntimeError):
    """The sampler could not start or produced an unusable chain."""


@dataclass(frozen=True)
class PriorSpec:
    """Priors on ``h^2`` and ``b^2`` plus the uniform AR-coefficient prior.

    ``kind="ig"`` uses inverse-gamma ``IG(alpha, beta)`` densities, ``kind="cauchy"``
    uses ``Cauchy(x0, gamma)`` densities restricted to the positive half-line.
    The AR prior is ``(1/2)^p`` on ``(-1, 1)^p`` with non-stationary points removed.
    """

    kind: str = "ig"
    alpha: float = 1.0
    beta: float = 0.05
    x0: float = 0.0
    gamma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("ig", "cauchy"):
            raise ValueError(f"unknown prior kind {self.kind!r}; use 'ig' or 'cauchy'")
        if self.kind == "ig" and not (self.alpha > 0 and self.beta > 0):
            raise ValueError("inverse-gamma hyperparameters must be positive")
        if self.kind == "cauchy" and not self.gamma > 0:
            raise ValueError("Cauchy scale must be positive")

    def log_density(self, x: float) -> float:
        """Log of the IG or Cauchy density at ``x`` (the IG density vanishes for ``x <= 0``)."""
        if self.kind == "ig":
            if not x > 0:
                return -math.inf
            a, b = self.alpha, self.beta
            return a * math.log(b) - gammaln(a) - (a + 1) * math.log(x) - b / x
        z = (x - self.x0) / self.gamma
        return -math.log(math.pi * self.gamma) - math.log1p(z * z)


@dataclass(frozen=True)
class McmcConfig:
    """Sampler settings.

    ``rm_offset`` is added to the iteration number in the Robbins-Monro
    denominator. With the default ``round(5 / (p (1 - p)))`` the first
    rejection shrinks a step by about 8% instead of driving it to the floor;
    ``rm_offset=0`` gives the unshifted ``1/k`` schedule.
    """

    burn_in: int = 1000
    keep: int = 10000
    tau0: Union[float, Sequence[float]] = 0.1
    p_target: float = 0.44
    seed: Optional[int] = None
    tau_floor: float = 1e-8
    rm_offset: Optional[int] = None

    def __post_init__(self):
        if self.burn_in < 0 or self.keep < 1:
            raise ValueError("burn_in must be >= 0 and keep >= 1")
        if self.rm_offset is not None and self.rm_offset < 0:
            raise ValueError("rm_offset must be non-negative")
        if np.any(np.asarray(self.tau0, dtype=float) <= 0):
            raise ValueError("initial step sizes must be positive")
        if not 0 < self.p_target < 1:
            raise ValueError("target acceptance probability must lie in (0, 1)")

    @property
    def offset(self) -> int:
        if self.rm_offset is not None:
            return int(self.rm_offset)
        return int(round(5 / (self.p_target * (1 - self.p_target))))


def param_names(p: int) -> List[str]:
    return ["h2", "b2"] + [f"rho{w}" for w in range(1, p + 1)]


def log_prior(theta: ArrayLike, spec: PriorSpec) -> float:
    """Log prior density of ``theta = (h^2, b^2, rho...)``; ``-inf`` off the support."""
    theta = np.asarray(theta, dtype=float)
    rho = theta[2:]
    if not (theta[0] > 0 and theta[1] > 0):
        return -math.inf
    if rho.size and (np.any(np.abs(rho) >= 1) or not is_stationary(rho)):
        return -math.inf
    lp_h = spec.log_density(theta[0])
    if lp_h == -math.inf:
        return -math.inf
    lp_b = spec.log_density(theta[1])
    if lp_b == -math.inf:
        return -math.inf
    return lp_h + lp_b - rho.size * math.log(2.0)


@dataclass(frozen=True)
class KernelRegressionData:
    """Responses plus squared predictor distances for leave-one-out NW residuals.

    With an index model ``sqdist[i, j] = (X_i - X_j)^2``; for semi-metric
    regression it holds squared curve distances.
    """

    sqdist: NDArray
    y: NDArray

    def __post_init__(self):
        sq = np.array(self.sqdist, dtype=float)
        y = np.array(self.y, dtype=float).ravel()
        if sq.shape != (y.size, y.size):
            raise ValueError("sqdist must be an n x n matrix matching y")
        if y.size < 2:
            raise ValueError("need at least 2 observations")
        off = sq.copy()
        np.fill_diagonal(off, np.inf)
        for a in (sq, y, off):
            a.setflags(write=False)
        object.__setattr__(self, "sqdist", sq)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "_off", off)
        object.__setattr__(self, "_dmin", off.min(axis=1))
        object.__setattr__(self, "_nearest", off.argmin(axis=1))

    @classmethod
    def from_index(cls, index: ArrayLike, y: ArrayLike) -> "KernelRegressionData":
        x = np.asarray(index, dtype=float).ravel()
        return cls((x[:, None] - x[None, :]) ** 2, y)

    @classmethod
    def from_distances(cls, dist: ArrayLike, y: ArrayLike) -> "KernelRegressionData":
        return cls(np.asarray(dist, dtype=float) ** 2, y)

    @property
    def n(self) -> int:
        return self.y.size

    def loo_fitted(self, h: float) -> NDArray:
        """Leave-one-out NW fits; same values as :func:`fsim.regression.loo_fitted`."""
        scale = 0.5 / (h * h)
        w = np.exp((self._dmin[:, None] - self._off) * scale)
        fitted = (w @ self.y) / w.sum(axis=1)
        flags = self._dmin * scale > _UNDERFLOW
        if flags.any():
            fitted[flags] = self.y[self._nearest[flags]]
        return fitted

    def residuals(self, h: float) -> NDArray:
        return self.y - self.loo_fitted(h)


def log_posterior(theta: ArrayLike, data: KernelRegressionData, spec: PriorSpec) -> float:
    """Unnormalised log posterior: kernel log likelihood plus log prior."""
    theta = np.asarray(theta, dtype=float)
    lp = log_prior(theta, spec)
    if lp == -math.inf:
        return lp
    eps = data.residuals(math.sqrt(theta[0]))
    return lp + log_kernel_likelihood(eps, math.sqrt(theta[1]), theta[2:])


class BandwidthPosterior:
    """Log posterior callable with small caches for the component-wise sweep.

    A ``b^2`` update leaves the residuals and innovations unchanged and a
    ``rho`` update leaves the residuals unchanged, so both are cached for the
    last two parameter values that produced them.
    """

    def __init__(self, data: KernelRegressionData, spec: PriorSpec, p: int = 0):
        if data.n - p < 3:
            raise ValueError("need at least 3 filtered residuals")
        self.data = data
        self.spec = spec
        self.p = p
        self._resid: Dict[float, NDArray] = {}
        self._pairs: Dict[tuple, Tuple[NDArray, NDArray]] = {}

    @property
    def dim(self) -> int:
        return 2 + self.p

    @staticmethod
    def _remember(cache: dict, key, value):
        if len(cache) >= 2:
            cache.pop(next(iter(cache)))
        cache[key] = value

    def residuals(self, h2: float) -> NDArray:
        eps = self._resid.get(h2)
        if eps is None:
            eps = self.data.residuals(math.sqrt(h2))
            self._remember(self._resid, h2, eps)
        return eps

    def log_likelihood(self, theta: NDArray) -> float:
        h2 = float(theta[0])
        key = (h2,) + tuple(float(r) for r in theta[2:])
        pairs = self._pairs.get(key)
        if pairs is None:
            eta = ar_filter(self.residuals(h2), theta[2:])
            pairs = pairwise_sqdiff(eta)
            self._remember(self._pairs, key, pairs)
        return loo_log_mixture(*pairs, math.sqrt(theta[1]))

    def __call__(self, theta: NDArray) -> float:
        lp = log_prior(theta, self.spec)
        if lp == -math.inf:
            return lp
        return lp + self.log_likelihood(theta)


def rwm_step(
    current: NDArray,
    current_logp: float,
    tau: float,
    component: int,
    log_target: Callable[[NDArray], float],
    rng: np.random.Generator,
) -> Tuple[NDArray, float, bool]:
    """One Gaussian random-walk Metropolis update of a single component.

    Returns the new state, its log target value and whether the move was accepted.
    """
    proposal = np.array(current, dtype=float)
    proposal[component] += tau * rng.standard_normal()
    logp = log_target(proposal)
    log_u = math.log(rng.random()) if logp > -math.inf else 0.0
    if logp > -math.inf and log_u < logp - current_logp:
        return proposal, logp, True
    return np.array(current, dtype=float), current_logp, False


def robbins_monro_update(
    tau: float, accepted: bool, k: int, p_target: float = 0.44, floor: float = 1e-8
) -> float:
    """Stochastic-approximation update of a random-walk step size.

    With ``c = tau / (p (1 - p))`` the step grows by ``c (1 - p) / k`` after an
    acceptance and shrinks by ``c p / k`` after a rejection; the result is
    floored at ``floor``.
    """
    c = tau / (p_target * (1 - p_target))
    new = tau + c * (1 - p_target) / k if accepted else tau - c * p_target / k
    return max(new, floor)


def _batch_means(x: NDArray) -> NDArray:
    nb = max(int(math.isqrt(x.shape[0])), 2)
    bs = x.shape[0] // nb
    return x[: nb * bs].reshape(nb, bs, *x.shape[1:]).mean(axis=1)


def _mean_variance(x: NDArray) -> NDArray:
    """Batch-means estimate of the variance of the sample mean (spectral density at zero / n)."""
    bm = _batch_means(x)
    return bm.var(axis=0, ddof=1) / bm.shape[0]


def geweke_z(draws: ArrayLike, first: float = 0.1, last: float = 0.5) -> NDArray:
    """Geweke z-scores comparing the first 10% with the last 50% of each column."""
    x = np.asarray(draws, dtype=float)
    squeeze = x.ndim == 1
    x = x.reshape(x.shape[0], -1)
    N = x.shape[0]
    na, nb = int(first * N), int(last * N)
    a, b = x[:na], x[N - nb :]
    diff = a.mean(axis=0) - b.mean(axis=0)
    var = _mean_variance(a) + _mean_variance(b)
    z = np.zeros(x.shape[1])
    pos = var > 0
    z[pos] = diff[pos] / np.sqrt(var[pos])
    # zero-variance windows: equal means give 0; otherwise the gap is infinite
    z[~pos & (diff != 0)] = np.sign(diff[~pos & (diff != 0)]) * np.inf
    return z[0] if squeeze else z


def chain_diagnostics(draws: ArrayLike) -> Tuple[NDArray, NDArray, NDArray, NDArray]:
    """Per-column ``(se, batch_se, sif, geweke_z)`` of an MCMC sample.

    ``se`` is the naive standard error sd/sqrt(N); ``batch_se`` uses sqrt(N)
    batches of size sqrt(N); ``sif = (batch_se / se)^2``.
    """
    x = np.asarray(draws, dtype=float)
    x = x.reshape(x.shape[0], -1)
    N = x.shape[0]
    if N < 100:
        raise ValueError(f"diagnostics need at least 100 draws; got {N}")
    se = x.std(axis=0, ddof=1) / math.sqrt(N)
    bm = _batch_means(x)
    batch_se = bm.std(axis=0, ddof=1) / math.sqrt(bm.shape[0])
    with np.errstate(divide="ignore", invalid="ignore"):
        sif = np.where(se > 0, (batch_se / se) ** 2, np.nan)
    return se, batch_se, sif, geweke_z(x)


def autocorrelation(x: ArrayLike, max_lag: int = 50) -> NDArray:
    """Sample autocorrelation function at lags ``0..max_lag``."""
    x = np.asarray(x, dtype=float).ravel()
    xc = x - x.mean()
    denom = xc @ xc
    lags = min(max_lag, x.size - 1)
    if denom == 0:
        acf = np.zeros(lags + 1)
        acf[0] = 1.0
        return acf
    return np.array([1.0] + [(xc[:-k] @ xc[k:]) / denom for k in range(1, lags + 1)])


@dataclass
class ChainSummary:
    """Kept draws of an adaptive RWM run with their summaries and diagnostics."""

    names: List[str]
    draws: NDArray
    means: NDArray
    ci95: NDArray
    se: NDArray
    batch_se: NDArray
    sif: NDArray
    geweke_z: NDArray
    accept_rate: NDArray
    tau_final: NDArray
    tau_min: float
    burn_in: int
    seed: Optional[int] = None
    logpost: NDArray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def from_draws(cls, names, draws, accept_rate, tau_final, tau_min, burn_in, seed=None, logpost=None):
        draws = np.asarray(draws, dtype=float)
        se, batch_se, sif, gz = chain_diagnostics(draws)
        return cls(
            names=list(names),
            draws=draws,
            means=draws.mean(axis=0),
            ci95=np.quantile(draws, [0.025, 0.975], axis=0),
            se=se,
            batch_se=batch_se,
            sif=sif,
            geweke_z=gz,
            accept_rate=np.asarray(accept_rate, dtype=float),
            tau_final=np.asarray(tau_final, dtype=float),
            tau_min=float(tau_min),
            burn_in=int(burn_in),
            seed=seed,
            logpost=np.zeros(0) if logpost is None else np.asarray(logpost, dtype=float),
        )

    @property
    def p(self) -> int:
        return len(self.names) - 2

    @property
    def h(self) -> float:
        """Regression bandwidth from the posterior mean of ``h^2``."""
        return math.sqrt(self.means[0])

    @property
    def b(self) -> float:
        """Error-density bandwidth from the posterior mean of ``b^2``."""
        return math.sqrt(self.means[1])

    @property
    def rho(self) -> NDArray:
        return self.means[2:].copy()

    def bandwidth_table(self) -> List[dict]:
        """Mean, 95% interval, SE, batch SE and SIF of ``h``, ``b`` and each ``rho``."""
        cols = np.column_stack([np.sqrt(self.draws[:, :2]), self.draws[:, 2:]])
        se, batch_se, sif, _ = chain_diagnostics(cols)
        lo, hi = np.quantile(cols, [0.025, 0.975], axis=0)
        labels = ["h", "b"] + self.names[2:]
        return [
            dict(parameter=lab, mean=float(cols[:, j].mean()), ci_lo=float(lo[j]), ci_hi=float(hi[j]),
                 se=float(se[j]), batch_se=float(batch_se[j]), sif=float(sif[j]))
            for j, lab in enumerate(labels)
        ]

    def to_dict(self, include_draws: bool = False) -> dict:
        out = {
            "names": self.names,
            "means": self.means.tolist(),
            "ci95_lo": self.ci95[0].tolist(),
            "ci95_hi": self.ci95[1].tolist(),
            "se": self.se.tolist(),
            "batch_se": self.batch_se.tolist(),
            "sif": [None if not np.isfinite(v) else float(v) for v in self.sif],
            "geweke_z": [None if not np.isfinite(v) else float(v) for v in self.geweke_z],
            "accept_rate": self.accept_rate.tolist(),
            "tau_final": self.tau_final.tolist(),
            "burn_in": self.burn_in,
            "keep": int(self.draws.shape[0]),
            "seed": self.seed,
            "h": self.h,
            "b": self.b,
        }
        if include_draws:
            out["draws"] = self.draws.tolist()
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.names)
            for row in self.draws:
                w.writerow([repr(float(v)) for v in row])


def read_chain_csv(path) -> Tuple[List[str], NDArray]:
    """Read a chain dump: a header row of parameter names, then one draw per row."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty chain file")
    header, body = rows[0], rows[1:]
    out = np.empty((len(body), len(header)))
    for r, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise ValueError(f"{path}: row {r} has {len(row)} fields, expected {len(header)}")
        for c, cell in enumerate(row, start=1):
            try:
                out[r - 2, c - 1] = float(cell)
            except ValueError:
                raise ValueError(f"{path}: row {r}, column {c}: not a number: {cell!r}") from None
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{path}: chain contains non-finite values")
    return header, out


def run_sampler(
    log_target: Callable[[NDArray], float],
    dim: int,
    cfg: McmcConfig,
    sweep: Optional[Sequence[int]] = None,
    init: Optional[ArrayLike] = None,
    rng: Optional[np.random.Generator] = None,
    names: Optional[Sequence[str]] = None,
) -> ChainSummary:
    """Component-wise adaptive random-walk Metropolis on an arbitrary log target.

    Each of the ``burn_in + keep`` iterations updates every component in
    ``sweep`` order and applies the Robbins-Monro step-size update with
    iteration number ``k + cfg.offset``; the first ``burn_in`` iterations are
    discarded.
    """
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    sweep = list(range(dim)) if sweep is None else list(sweep)
    tau = np.broadcast_to(np.asarray(cfg.tau0, dtype=float), (dim,)).copy()

    if init is None:
        for _ in range(100):
            state = rng.uniform(0.0, 1.0, size=dim)
            logp = log_target(state)
            if logp > -math.inf:
                break
        else:
            raise ChainFailure("log posterior is -inf at every starting point tried")
    else:
        state = np.array(init, dtype=float)
        logp = log_target(state)
        if logp == -math.inf:
            raise ChainFailure("log posterior is -inf at the supplied starting point")

    total = cfg.burn_in + cfg.keep
    draws = np.empty((cfg.keep, dim))
    logposts = np.empty(cfg.keep)
    accepts = np.zeros(dim)
    tau_min = float(tau.min())
    offset = cfg.offset
    for k in range(1, total + 1):
        kept = k > cfg.burn_in
        for c in sweep:
            state, logp, acc = rwm_step(state, logp, tau[c], c, log_target, rng)
            tau[c] = robbins_monro_update(tau[c], acc, k + offset, cfg.p_target, cfg.tau_floor)
            if kept and acc:
                accepts[c] += 1
        tau_min = min(tau_min, float(tau.min()))
        if kept:
            draws[k - cfg.burn_in - 1] = state
            logposts[k - cfg.burn_in - 1] = logp

    if not np.isfinite(logposts).all():
        raise ChainFailure("chain visited a state with non-finite log posterior")
    names = list(names) if names is not None else [f"x{j}" for j in range(dim)]
    return ChainSummary.from_draws(
        names, draws, accepts / cfg.keep, tau, tau_min, cfg.burn_in, cfg.seed, logposts
    )


def run_chain(
    data: KernelRegressionData,
    spec: PriorSpec,
    cfg: McmcConfig,
    p: int = 0,
    rng: Optional[np.random.Generator] = None,
) -> ChainSummary:
    """Sample ``(h^2, b^2, rho)`` from the bandwidth posterior.

    Starting values are drawn from U(0, 1); each iteration updates ``b^2``,
    then ``h^2``, then ``rho_1..rho_p``.
    """
    target = BandwidthPosterior(data, spec, p)
    sweep = [1, 0] + list(range(2, 2 + p))
    return run_sampler(target, 2 + p, cfg, sweep=sweep, rng=rng, names=param_names(p))
