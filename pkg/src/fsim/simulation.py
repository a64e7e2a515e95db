"""Simulation designs and the Monte Carlo harness for FSIM versus NFR comparisons."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .error_model import simulate_ar
from .fda import (
    CurveSet,
    fpca,
    impute_sparse,
    l2_distances,
    pca_distances,
    project,
    smooth_derivatives,
)
from .forecast import empirical_coverage
from .mcmc import ChainFailure, McmcConfig, PriorSpec
from .model import fit_fsim, fit_nfr
from .regression import SingularFitError

__all__ = [
    "CURVE_KINDS",
    "ERROR_STRUCTURES",
    "NFR_METHODS",
    "METHODS",
    "DgpConfig",
    "Replication",
    "ExperimentReport",
    "design_grid",
    "design_curve",
    "gen_curves",
    "sparsify",
    "gen_response",
    "mise_grid",
    "normal_pdf",
    "replication_rng",
    "run_replication",
    "run_experiment",
]

CURVE_KINDS = ("smooth", "rough", "sparse-smooth", "sparse-rough")
ERROR_STRUCTURES = ("iid", "ar1")
NFR_METHODS = ("deriv1", "deriv2", "pca1", "pca2", "pca3")
METHODS = ("FSIM",) + tuple(f"NFR-{m}" for m in NFR_METHODS)
N_GRID = 100
N_SPARSE = 30
MISE_GRID = -5 + np.arange(1001) / 100

AR1_MISE_NOTE = (
    "AR(1) errors: MISE compares the stationary N(0, sigma2_noise) density with the "
    "estimated innovation density rescaled to the stationary error variance."
)


def design_grid() -> NDArray:
    return np.linspace(0.0, 1.0, N_GRID)


def _true_beta(grid: NDArray) -> NDArray:
    return np.sin(np.pi * grid)


def _true_link(x: NDArray) -> NDArray:
    return 100.0 * (x - 0.15) ** 3


def sparsify(curves: CurveSet, rng: np.random.Generator, keep: int = N_SPARSE) -> CurveSet:
    """Keep ``keep`` grid points per curve, chosen uniformly without replacement."""
    mask = np.zeros((curves.n, curves.T), dtype=bool)
    for i in range(curves.n):
        mask[i, rng.choice(curves.T, size=keep, replace=False)] = True
    return CurveSet(curves.grid, np.where(mask, curves.values, np.nan), mask)


def design_curve(a, b, c, t: ArrayLike) -> NDArray:
    t = np.asarray(t, dtype=float)
    return a * np.cos(2 * np.pi * t) + b * np.sin(4 * np.pi * t) + 2 * c * (t - 0.25) * (t - 0.5)


def gen_curves(n: int, kind: str, rng: np.random.Generator) -> CurveSet:
    """Draw ``n`` curves ``a cos(2 pi t) + b sin(4 pi t) + 2c (t - 1/4)(t - 1/2)`` on 100 points.

    ``rough`` adds independent U(-0.1, 0.1) noise at every grid point;
    the ``sparse-*`` kinds then keep 30 of the 100 points per curve.
    """
    if kind not in CURVE_KINDS:
        raise ValueError(f"unknown curve kind {kind!r}; choose from {CURVE_KINDS}")
    t = design_grid()
    a, b, c = (rng.uniform(0, 1, size=(n, 1)) for _ in range(3))
    values = design_curve(a, b, c, t)
    if kind.endswith("rough"):
        values = values + rng.uniform(-0.1, 0.1, size=values.shape)
    curves = CurveSet(t, values)
    return sparsify(curves, rng) if kind.startswith("sparse") else curves


def gen_response(
    curves: CurveSet,
    xi: float,
    error_structure: str,
    rng: np.random.Generator,
    rho: float = 0.8,
) -> Tuple[NDArray, NDArray, NDArray]:
    """Responses ``y = m(X) + eps`` with ``m = 100 (X - 0.15)^3`` and ``X = <curve, sin(pi t)>``.

    The noise variance is ``xi`` times the sample variance of ``m``; AR(1)
    innovations are scaled so the stationary error variance matches it.
    Returns ``(y, m, eps)``.
    """
    if error_structure not in ERROR_STRUCTURES:
        raise ValueError(f"unknown error structure {error_structure!r}")
    if xi < 0:
        raise ValueError("xi must be non-negative")
    m = _true_link(curves.inner(_true_beta(curves.grid)))
    signal = float(np.var(m, ddof=1)) if m.size > 1 else 0.0
    if not signal > 0:
        raise ValueError("regression signal has zero variance")
    sigma2 = xi * signal
    if sigma2 == 0:
        eps = np.zeros_like(m)
    elif error_structure == "iid":
        eps = math.sqrt(sigma2) * rng.standard_normal(m.size)
    else:
        eps = simulate_ar(m.size, [rho], sigma2 * (1 - rho * rho), rng)
    return m + eps, m, eps


def normal_pdf(sigma2: float) -> Callable[[NDArray], NDArray]:
    sd = math.sqrt(sigma2)
    return lambda x: np.exp(-0.5 * (np.asarray(x) / sd) ** 2) / (sd * math.sqrt(2 * math.pi))


def mise_grid(f_true: Callable, f_hat: Callable) -> float:
    """``(1/100) sum_i (f_true(x_i) - f_hat(x_i))^2`` on ``x_i = -5 + (i-1)/100``, i = 1..1001."""
    diff = np.asarray(f_true(MISE_GRID), dtype=float) - np.asarray(f_hat(MISE_GRID), dtype=float)
    if not np.all(np.isfinite(diff)):
        raise ValueError("densities must be finite on the MISE grid")
    return float(np.sum(diff**2) / 100)


@dataclass(frozen=True)
class DgpConfig:
    """One simulation cell plus the fitting settings used in each replication.

    ``n_test`` defaults to ``n // 2``. ``ar_order=None`` fits AR(1) errors for
    the ``ar1`` design and iid errors otherwise; ``"aicc"`` selects it.
    ``nfr_bandwidth`` is ``"bayes"`` (iid kernel-likelihood sampler) or ``"cv"``.
    """

    n: int = 60
    curve_kind: str = "smooth"
    xi: float = 0.1
    error_structure: str = "iid"
    rho: float = 0.8
    n_test: Optional[int] = None
    B: int = 20
    seed: int = 0
    K: Optional[int] = None
    ar_order: Optional[Union[int, str]] = None
    burn_in: int = 1000
    keep: int = 10000
    prior: str = "ig"
    nfr_bandwidth: str = "bayes"
    nfr_mise: bool = False
    level: float = 0.95
    workers: int = 1

    def __post_init__(self):
        if self.curve_kind not in CURVE_KINDS:
            raise ValueError(f"curve_kind must be one of {CURVE_KINDS}")
        if self.error_structure not in ERROR_STRUCTURES:
            raise ValueError(f"error_structure must be one of {ERROR_STRUCTURES}")
        if not self.xi > 0:
            raise ValueError("xi must be positive; zero noise leaves the error density undefined")
        if self.n < 10:
            raise ValueError("n must be at least 10")
        if self.B < 1:
            raise ValueError("B must be at least 1")
        if not abs(self.rho) < 1:
            raise ValueError("rho must satisfy |rho| < 1")
        if self.n_test is not None and self.n_test < 1:
            raise ValueError("n_test must be positive")
        if self.nfr_bandwidth not in ("bayes", "cv"):
            raise ValueError("nfr_bandwidth must be 'bayes' or 'cv'")
        if not 0 < self.level < 1:
            raise ValueError("level must lie in (0, 1)")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        PriorSpec(kind=self.prior)
        McmcConfig(burn_in=self.burn_in, keep=self.keep)

    @property
    def test_size(self) -> int:
        return self.n_test if self.n_test is not None else self.n // 2

    @property
    def fsim_ar_order(self) -> Union[int, str]:
        if self.ar_order is None:
            return 1 if self.error_structure == "ar1" else 0
        return self.ar_order

    @property
    def noise_variance_note(self) -> Optional[str]:
        return AR1_MISE_NOTE if self.error_structure == "ar1" else None


@dataclass
class Replication:
    """Per-method MSE, MSPE and MISE for one replication, or the reason it failed."""

    rep: int
    mse: Dict[str, float] = field(default_factory=dict)
    mspe: Dict[str, float] = field(default_factory=dict)
    mise: Dict[str, float] = field(default_factory=dict)
    coverage: Optional[float] = None
    h: Optional[float] = None
    b: Optional[float] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


def replication_rng(seed: int, rep: int) -> np.random.Generator:
    """Independent stream for replication ``rep``; depends only on ``(seed, rep)``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(rep,)))


def _nfr_distances(kind: str, train: CurveSet, test: CurveSet) -> Tuple[NDArray, NDArray]:
    """Train-train and test-train semi-metric matrices."""
    if kind.startswith("deriv"):
        order = int(kind[-1])
        dtr, dte = smooth_derivatives(train, order), smooth_derivatives(test, order)
        return l2_distances(dtr, None, train.grid), l2_distances(dte, dtr, train.grid)
    q = int(kind[-1])
    basis = fpca(train, q)
    return pca_distances(basis.scores), pca_distances(project(basis, test.values), basis.scores)


def _chain_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(2**63 - 1))


def run_replication(cfg: DgpConfig, rep: int) -> Replication:
    """Simulate one train/test pair and score FSIM and every NFR variant.

    MSE uses the full-sample NW fit at the training curves and MSPE the
    holdout curves, both against the true regression function. Sparse curves
    are linearly interpolated onto the full grid before fitting.
    """
    rng = replication_rng(cfg.seed, rep)
    out = Replication(rep)
    try:
        n_all = cfg.n + cfg.test_size
        curves = gen_curves(n_all, cfg.curve_kind, rng)
        y, m, _ = gen_response(curves, cfg.xi, cfg.error_structure, rng, cfg.rho)
        sigma2 = cfg.xi * float(np.var(m, ddof=1))
        if curves.is_sparse:
            curves = impute_sparse(curves)
        tr, te = np.arange(cfg.n), np.arange(cfg.n, n_all)
        train, test = curves.subset(tr), curves.subset(te)
        prior = PriorSpec(kind=cfg.prior)
        true_density = normal_pdf(sigma2)

        mc = McmcConfig(burn_in=cfg.burn_in, keep=cfg.keep, seed=_chain_seed(rng))
        model = fit_fsim(train, y[tr], K=cfg.K, ar_order=cfg.fsim_ar_order, prior=prior, mcmc=mc)
        pred, _ = model.predict(test)
        out.mse["FSIM"] = float(np.mean((m[tr] - model.fitted()) ** 2))
        out.mspe["FSIM"] = float(np.mean((m[te] - pred) ** 2))
        out.mise["FSIM"] = mise_grid(true_density, model.marginal_density)
        out.coverage = empirical_coverage(model.intervals(test, cfg.level), y[te])
        out.h, out.b = model.h, model.b

        for kind in NFR_METHODS:
            name = f"NFR-{kind}"
            d_train, d_test = _nfr_distances(kind, train, test)
            mc = McmcConfig(burn_in=cfg.burn_in, keep=cfg.keep, seed=_chain_seed(rng))
            nfr = fit_nfr(d_train, y[tr], prior=prior, mcmc=mc, bandwidth=cfg.nfr_bandwidth)
            out.mse[name] = float(np.mean((m[tr] - nfr.fitted(d_train)) ** 2))
            out.mspe[name] = float(np.mean((m[te] - nfr.predict(d_test)[0]) ** 2))
            if cfg.nfr_mise:
                out.mise[name] = mise_grid(true_density, nfr.density)
    except (ChainFailure, SingularFitError, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        out = Replication(rep, error=f"{type(exc).__name__}: {exc}")
    return out


def _run_one(args) -> Replication:
    return run_replication(*args)


def _mean_sd(values: List[float]) -> Tuple[Optional[float], Optional[float]]:
    if not values:
        return None, None
    arr = np.asarray(values, dtype=float)
    return float(arr.mean()), float(arr.std(ddof=1)) if arr.size > 1 else 0.0


@dataclass
class ExperimentReport:
    """Averages and standard deviations of MSE, MISE and MSPE across replications."""

    config: DgpConfig
    replications: List[Replication]
    notes: List[str] = field(default_factory=list)

    @property
    def successes(self) -> List[Replication]:
        return [r for r in self.replications if r.ok]

    @property
    def n_failed(self) -> int:
        return len(self.replications) - len(self.successes)

    @property
    def failure_rate(self) -> float:
        return self.n_failed / len(self.replications)

    def _stat(self, attr: str, method: str) -> Tuple[Optional[float], Optional[float]]:
        return _mean_sd([getattr(r, attr)[method] for r in self.successes if method in getattr(r, attr)])

    def amse(self, method: str) -> Optional[float]:
        return self._stat("mse", method)[0]

    def amspe(self, method: str) -> Optional[float]:
        return self._stat("mspe", method)[0]

    def amise(self, method: str = "FSIM") -> Optional[float]:
        return self._stat("mise", method)[0]

    @property
    def mean_coverage(self) -> Optional[float]:
        return _mean_sd([r.coverage for r in self.successes if r.coverage is not None])[0]

    def table(self) -> Dict[str, Dict[str, Optional[float]]]:
        rows = {}
        for method in METHODS:
            row = {}
            for label, attr in (("AMSE", "mse"), ("AMISE", "mise"), ("AMSPE", "mspe")):
                mean, sd = self._stat(attr, method)
                row[label], row[label + "_sd"] = mean, sd
            rows[method] = row
        return rows

    def to_dict(self) -> dict:
        return {
            "config": asdict(self.config),
            "replications_total": len(self.replications),
            "replications_failed": self.n_failed,
            "failures": [{"rep": r.rep, "error": r.error} for r in self.replications if not r.ok],
            "methods": self.table(),
            "fsim_mean_coverage": self.mean_coverage,
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        c = self.config
        head = (
            f"n={c.n} n_test={c.test_size} curves={c.curve_kind} xi={c.xi} errors={c.error_structure}"
            + (f"(rho={c.rho})" if c.error_structure == "ar1" else "")
            + f" B={c.B} seed={c.seed} failed={self.n_failed}"
        )
        fmt = lambda v: "-" if v is None else f"{v:.4f}"  # noqa: E731
        cell = lambda m, s: "-" if m is None else f"{fmt(m)} ({fmt(s)})"  # noqa: E731
        lines = [head, f"{'Method':<12}{'AMSE':>22}{'AMISE':>22}{'AMSPE':>22}"]
        for method, row in self.table().items():
            lines.append(
                f"{method:<12}"
                + "".join(f"{cell(row[k], row[k + '_sd']):>22}" for k in ("AMSE", "AMISE", "AMSPE"))
            )
        cov = self.mean_coverage
        if cov is not None:
            lines.append(f"FSIM {c.level:.0%} interval coverage: {cov:.4f}")
        lines.extend(f"note: {n}" for n in self.notes)
        return "\n".join(lines) + "\n"

    def write_replications_csv(self, path) -> None:
        cols = [f"{kind}_{m}" for m in METHODS for kind in ("mse", "mspe", "mise")]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rep"] + cols + ["coverage", "h", "b", "error"])
            for r in self.replications:
                vals = []
                for col in cols:
                    kind, method = col.split("_", 1)
                    v = getattr(r, kind).get(method)
                    vals.append("" if v is None else repr(v))
                extras = [r.coverage, r.h, r.b]
                w.writerow([r.rep] + vals + ["" if v is None else repr(v) for v in extras] + [r.error or ""])


def run_experiment(cfg: DgpConfig) -> ExperimentReport:
    """Run ``cfg.B`` replications, in a process pool when ``cfg.workers > 1``.

    Results come back in replication order, so the report does not depend on
    the number of workers.
    """
    jobs = [(cfg, rep) for rep in range(cfg.B)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            reps = list(pool.map(_run_one, jobs))
    else:
        reps = [_run_one(j) for j in jobs]
    notes = []
    if cfg.noise_variance_note:
        notes.append(cfg.noise_variance_note)
    if cfg.curve_kind.startswith("sparse"):
        notes.append("sparse curves are linearly interpolated onto the full grid before fitting")
    return ExperimentReport(cfg, reps, notes)
