"""Command-line interface: ``fsim simulate | fit | predict | diagnose``.

Exit codes: 0 success, 1 completed with warnings, 2 usage or input error.
Options may also come from ``--config FILE`` (``key = value`` lines); flags
win over the file, and ``FSIM_SEED`` is the fallback seed. Every command
writes ``config.json`` with the resolved settings to its output directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from .fda import CurveSet, impute_sparse
from .forecast import empirical_coverage
from .io import InputError, read_config, read_curves_csv, read_index_csv, read_response_csv
from .mcmc import ChainFailure, McmcConfig, PriorSpec, autocorrelation, chain_diagnostics, read_chain_csv
from .model import FsimModel, fit_fsim
from .regression import ExtrapolationWarning, SingularFitError
from .simulation import CURVE_KINDS, ERROR_STRUCTURES, DgpConfig, run_experiment

EXIT_OK, EXIT_WARN, EXIT_USAGE = 0, 1, 2
GEWEKE_LIMIT = 3.0


class UsageError(Exception):
    pass


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int_or(word: str) -> Callable[[str], Any]:
    def convert(text):
        return word if str(text) == word else int(text)

    convert.__name__ = f"int_or_{word}"
    return convert


@dataclass(frozen=True)
class Opt:
    name: str
    type: Callable = str
    default: Any = None
    help: str = ""
    choices: Optional[Sequence[str]] = None
    flag: bool = False

    @property
    def dest(self) -> str:
        return self.name.replace("-", "_")


MCMC_OPTS = [
    Opt("prior", str, "ig", "prior family for h^2 and b^2", ("ig", "cauchy")),
    Opt("burnin", int, 1000, "burn-in iterations"),
    Opt("keep", int, 10000, "kept iterations (at least 100)"),
    Opt("seed", int, None, "master seed (fallback: FSIM_SEED, then 0)"),
]

COMMANDS: Dict[str, List[Opt]] = {
    "simulate": [
        Opt("n", int, 60, "training sample size"),
        Opt("curves", str, "smooth", "curve design", CURVE_KINDS),
        Opt("xi", float, 0.1, "inverse signal-to-noise ratio (> 0)"),
        Opt("errors", str, "iid", "error structure", ERROR_STRUCTURES),
        Opt("rho", float, 0.8, "AR(1) coefficient for --errors ar1"),
        Opt("reps", int, 20, "number of replications"),
        Opt("n-test", int, None, "holdout size (default n/2)"),
        Opt("K", _int_or("auto"), "auto", "FPC count for the index, or 'auto'"),
        Opt("ar-order", _int_or("aicc"), None, "FSIM AR order, 'aicc', or unset to match --errors"),
        Opt("nfr-bandwidth", str, "bayes", "NFR bandwidth selector", ("bayes", "cv")),
        Opt("nfr-mise", _bool, False, "also report NFR error-density MISE", flag=True),
        Opt("level", float, 0.95, "prediction-interval level for the coverage column"),
        Opt("workers", int, 1, "worker processes"),
        Opt("replications-csv", _bool, False, "write per-replication values", flag=True),
    ]
    + MCMC_OPTS,
    "fit": [
        Opt("curves", Path, None, "curve CSV (first row is the grid)"),
        Opt("response", Path, None, "response CSV, one value per line"),
        Opt("train-frac", float, None, "use the first fraction of rows for training"),
        Opt("train-index", Path, None, "CSV of zero-based training row indices"),
        Opt("K", _int_or("auto"), "auto", "FPC count for the index, or 'auto'"),
        Opt("ar-order", _int_or("aicc"), 0, "AR order of the errors, or 'aicc'"),
    ]
    + MCMC_OPTS,
    "predict": [
        Opt("model", Path, None, "model JSON written by 'fsim fit'"),
        Opt("curves", Path, None, "new curves on the model grid"),
        Opt("level", float, 0.95, "nominal coverage in (0, 1)"),
        Opt("truth", Path, None, "optional true responses for coverage"),
        Opt("fixed-range", _bool, False, "invert the error CDF on [-5, 5]", flag=True),
    ],
    "diagnose": [
        Opt("chain", Path, None, "chain CSV written by 'fsim fit'"),
        Opt("max-lag", int, 50, "largest ACF lag"),
    ],
}
REQUIRED = {"fit": ("curves", "response"), "predict": ("model", "curves"), "diagnose": ("chain",)}


SUMMARIES = {
    "simulate": "run a Monte Carlo cell and report AMSE, AMISE and AMSPE",
    "fit": "fit the FSIM with Bayesian bandwidths to curve and response files",
    "predict": "point forecasts and prediction intervals from a saved model",
    "diagnose": "convergence diagnostics and autocorrelations for a chain file",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd, opts in COMMANDS.items():
        p = sub.add_parser(cmd, help=SUMMARIES[cmd], description=SUMMARIES[cmd])
        p.add_argument("--config", type=Path, help="key = value settings file")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        for o in opts:
            extra = {"choices": o.choices} if o.choices else {}
            if o.flag:
                p.add_argument(f"--{o.name}", dest=o.dest, action="store_const", const=True, default=None, help=o.help)
            else:
                p.add_argument(f"--{o.name}", dest=o.dest, type=o.type, default=None, help=o.help, **extra)
    return parser


def resolve(command: str, args: argparse.Namespace) -> Dict[str, Any]:
    """Merge flags over config-file values over defaults."""
    file_vals = read_config(args.config) if args.config else {}
    opts = {o.dest: o for o in COMMANDS[command]}
    unknown = sorted(set(file_vals) - set(opts))
    if unknown:
        raise UsageError(f"{args.config}: unknown setting(s) {', '.join(unknown)}")
    cfg: Dict[str, Any] = {}
    for dest, o in opts.items():
        val = getattr(args, dest)
        if val is None and dest in file_vals:
            try:
                val = o.type(file_vals[dest])
            except ValueError:
                raise UsageError(f"{args.config}: invalid value for {dest}: {file_vals[dest]!r}") from None
            if o.choices and val not in o.choices:
                raise UsageError(f"{args.config}: {dest} must be one of {', '.join(o.choices)}")
        cfg[dest] = o.default if val is None else val
    if "seed" in cfg and cfg["seed"] is None:
        env = os.environ.get("FSIM_SEED")
        try:
            cfg["seed"] = int(env) if env else 0
        except ValueError:
            raise UsageError(f"FSIM_SEED must be an integer, got {env!r}") from None
    for dest in REQUIRED.get(command, ()):
        if cfg[dest] is None:
            raise UsageError(f"--{dest.replace('_', '-')} is required")
    return cfg


def _jsonable(v):
    if isinstance(v, Path):
        return str(v)
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        return float(v) if np.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    return v


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n")


def _write_table(path: Path, header: Sequence[str], rows, sep: str = "\t") -> None:
    fmt = lambda v: repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)  # noqa: E731
    lines = [sep.join(header)] + [sep.join(fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def _warn(msg: str) -> None:
    print(f"fsim: warning: {msg}", file=sys.stderr)


def _mcmc(cfg) -> McmcConfig:
    if cfg["keep"] < 100:
        raise UsageError("--keep must be at least 100 for chain diagnostics")
    if cfg["burnin"] < 0:
        raise UsageError("--burnin must be non-negative")
    return McmcConfig(burn_in=cfg["burnin"], keep=cfg["keep"], seed=cfg["seed"])


def cmd_simulate(cfg: Dict[str, Any], out: Path) -> int:
    try:
        _mcmc(cfg)
        dgp = DgpConfig(
            n=cfg["n"], curve_kind=cfg["curves"], xi=cfg["xi"], error_structure=cfg["errors"],
            rho=cfg["rho"], n_test=cfg["n_test"], B=cfg["reps"], seed=cfg["seed"],
            K=None if cfg["K"] == "auto" else cfg["K"], ar_order=cfg["ar_order"],
            burn_in=cfg["burnin"], keep=cfg["keep"], prior=cfg["prior"],
            nfr_bandwidth=cfg["nfr_bandwidth"], nfr_mise=cfg["nfr_mise"], level=cfg["level"],
            workers=cfg["workers"],
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    report = run_experiment(dgp)
    (out / "report.json").write_text(report.to_json())
    (out / "report.txt").write_text(report.to_text())
    if cfg["replications_csv"]:
        report.write_replications_csv(out / "replications.csv")
    sys.stdout.write(report.to_text())
    if report.failure_rate > 0.2:
        _warn(f"{report.n_failed} of {dgp.B} replications failed")
        return EXIT_WARN
    return EXIT_OK


def _train_rows(cfg, n: int) -> np.ndarray:
    if cfg["train_frac"] is not None and cfg["train_index"] is not None:
        raise UsageError("use only one of --train-frac and --train-index")
    if cfg["train_index"] is not None:
        idx = read_index_csv(cfg["train_index"])
        if idx.min() < 0 or idx.max() >= n or np.unique(idx).size != idx.size:
            raise InputError(f"{cfg['train_index']}: indices must be distinct and within 0..{n - 1}")
        return idx
    frac = 1.0 if cfg["train_frac"] is None else cfg["train_frac"]
    if not 0 < frac <= 1:
        raise UsageError("--train-frac must lie in (0, 1]")
    return np.arange(max(int(round(frac * n)), 1))


def cmd_fit(cfg: Dict[str, Any], out: Path) -> int:
    mc = _mcmc(cfg)
    curves = read_curves_csv(cfg["curves"])
    y = read_response_csv(cfg["response"])
    if y.size != curves.n:
        raise InputError(f"{cfg['response']}: {y.size} responses for {curves.n} curves")
    if curves.is_sparse:
        curves = impute_sparse(curves)
    tr = _train_rows(cfg, curves.n)
    te = np.setdiff1d(np.arange(curves.n), tr)
    train = curves.subset(tr)
    try:
        model = fit_fsim(
            train, y[tr], K=None if cfg["K"] == "auto" else cfg["K"], ar_order=cfg["ar_order"],
            prior=PriorSpec(kind=cfg["prior"]), mcmc=mc,
        )
    except (SingularFitError, ChainFailure, ValueError) as exc:
        raise InputError(f"fit failed: {exc}") from None

    chain = model.chain
    model_dict = model.to_dict()
    _dump_json(out / "model.json", model_dict)
    chain.write_csv(out / "chain.csv")
    table = chain.bandwidth_table()
    _write_table(
        out / "diagnostics.tsv",
        ["parameter", "mean", "ci_lo", "ci_hi", "se", "batch_se", "sif", "geweke_z", "accept_rate"],
        [[r["parameter"], r["mean"], r["ci_lo"], r["ci_hi"], r["se"], r["batch_se"], r["sif"], z, a]
         for r, z, a in zip(table, chain.geweke_z, chain.accept_rate)],
    )
    summary = {
        "n_train": int(tr.size),
        "n_test": int(te.size),
        "K": model.fit.basis.K,
        "ar_order": chain.p,
        "h": model.h,
        "b": model.b,
        "rho": model.rho.tolist(),
        "mse_train": float(np.mean((y[tr] - model.fitted()) ** 2)),
        "warnings": [],
    }
    if te.size:
        pred, _ = model.predict(curves.subset(te))
        summary["mspe_test"] = float(np.mean((y[te] - pred) ** 2))
    bad = [n for n, z in zip(chain.names, chain.geweke_z) if not abs(z) <= GEWEKE_LIMIT]
    if bad:
        summary["warnings"].append(f"Geweke |z| > {GEWEKE_LIMIT:g} for {', '.join(bad)}")
    _dump_json(out / "fit_summary.json", summary)
    print(f"h={model.h:.6g} b={model.b:.6g} rho={model.rho.tolist()} mse_train={summary['mse_train']:.6g}")
    for w in summary["warnings"]:
        _warn(w + "; chain may not have converged")
    return EXIT_WARN if bad else EXIT_OK


def _on_grid(curves: CurveSet, grid: np.ndarray, path) -> CurveSet:
    if curves.T != grid.size or not np.allclose(curves.grid, grid, rtol=1e-9, atol=1e-12):
        raise InputError(f"{path}: curve grid does not match the model grid")
    if curves.is_sparse:
        curves = impute_sparse(curves)
    return CurveSet(grid, curves.values)


def cmd_predict(cfg: Dict[str, Any], out: Path) -> int:
    level = cfg["level"]
    if not 0 < level < 1:
        raise UsageError("--level must lie strictly between 0 and 1")
    try:
        model = FsimModel.from_dict(json.loads(Path(cfg["model"]).read_text()))
    except FileNotFoundError:
        raise InputError(f"{cfg['model']}: no such file") from None
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise InputError(f"{cfg['model']}: not a valid model file ({exc})") from None
    curves = _on_grid(read_curves_csv(cfg["curves"]), model.fit.basis.grid, cfg["curves"])
    truth = None
    if cfg["truth"] is not None:
        truth = read_response_csv(cfg["truth"])
        if truth.size != curves.n:
            raise InputError(f"{cfg['truth']}: {truth.size} values for {curves.n} curves")

    _, flags = model.predict(curves)
    intervals = model.intervals(curves, level, cfg["fixed_range"])
    header = ["index", "point", "lo", "hi"]
    rows = [[i, iv.point, iv.lo, iv.hi] for i, iv in enumerate(intervals)]
    plot_rows = [list(r) for r in rows]
    if truth is not None:
        rows = [r + [float(t), int(iv.covers(t))] for r, t, iv in zip(rows, truth, intervals)]
        plot_rows = [r + [float(t)] for r, t in zip(plot_rows, truth)]
    _write_table(out / "intervals.csv", header + (["y_true", "covered"] if truth is not None else []), rows, ",")
    _write_table(out / "plot.tsv", header + (["truth"] if truth is not None else []), plot_rows)
    summary = {"n": curves.n, "level": level, "fixed_range": cfg["fixed_range"],
               "n_extrapolated": int(flags.sum())}
    if truth is not None:
        summary["coverage"] = empirical_coverage(intervals, truth)
        print(f"coverage={summary['coverage']:.4f} at level {level:g}")
    _dump_json(out / "predict_summary.json", summary)
    if flags.any():
        _warn(f"{int(flags.sum())} curve(s) lie far outside the training index range")
    return EXIT_OK


def cmd_diagnose(cfg: Dict[str, Any], out: Path) -> int:
    try:
        names, draws = read_chain_csv(cfg["chain"])
    except FileNotFoundError:
        raise InputError(f"{cfg['chain']}: no such file") from None
    except ValueError as exc:
        raise InputError(str(exc)) from None
    if draws.shape[0] < 100:
        raise InputError(f"{cfg['chain']}: {draws.shape[0]} draws; diagnostics need at least 100")
    if cfg["max_lag"] < 0:
        raise UsageError("--max-lag must be non-negative")
    se, batch_se, sif, gz = chain_diagnostics(draws)
    _write_table(
        out / "diagnostics.tsv",
        ["parameter", "mean", "se", "batch_se", "sif", "geweke_z"],
        [[n, float(draws[:, j].mean()), se[j], batch_se[j], sif[j], gz[j]] for j, n in enumerate(names)],
    )
    acfs = np.column_stack([autocorrelation(draws[:, j], cfg["max_lag"]) for j in range(len(names))])
    _write_table(out / "acf.tsv", ["lag"] + names, [[k] + list(row) for k, row in enumerate(acfs)])
    return EXIT_OK


HANDLERS = {"simulate": cmd_simulate, "fit": cmd_fit, "predict": cmd_predict, "diagnose": cmd_diagnose}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args.command, args)
        out: Path = args.out
        out.mkdir(parents=True, exist_ok=True)
        _dump_json(out / "config.json", {"command": args.command, **cfg})
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ExtrapolationWarning)
            return HANDLERS[args.command](cfg, out)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"fsim {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InputError as exc:
        print(f"fsim {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
