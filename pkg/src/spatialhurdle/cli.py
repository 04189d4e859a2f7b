"""Command-line entry point.

Subcommands: fit, predict, diagnose, simulate, aggregate, derive-rh.
Exit codes: 0 success, 1 input error, 2 non-convergence (outputs still written).

Every subcommand accepts ``--config FILE`` holding ``key = value`` lines
(keys are the long option names with dashes or underscores); command-line
flags take precedence over file values.
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .climate import relative_humidity
from .diagnostics import pearson_residuals, prediction_surfaces, roc_curve
from .gmrf import Hyperparams
from .grid import aggregate_monthly
from .hurdle import Dataset, linear_predictors, link_pi
from .inference import (NelderMeadSettings, NewtonSettings, coefficient_covariance,
                        confidence_intervals, maximize_marginal, normal_intervals)
from .simulate import SimConfig, simulate

logger = logging.getLogger("spatialhurdle")

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED = 0, 1, 2

# applied after merging flags and config file
DEFAULTS = {
    "tol": 1e-7,
    "newton_tol": 1e-7,
    "max_iter": 1000,
    "max_newton_iter": 100,
    "init": "1,1,1,1",
    "alpha": 0.05,
    "standardize": False,
    "strict": False,
    "seed": 0,
    "rows": 10,
    "cols": 10,
    "beta0": "0.5,1.0",
    "betaP": "0.2,0.5",
    "theta": "0.5,0.5,0.5,0.5",
    "covariates": "uniform",
    "factor": 5,
}


def _floats(text, n=None, what="value"):
    try:
        vals = [float(v) for v in str(text).split(",")]
    except ValueError:
        raise io.InputError(f"{what}: cannot parse {text!r} as comma-separated numbers") from None
    if n is not None and len(vals) != n:
        raise io.InputError(f"{what}: expected {n} numbers, got {len(vals)}")
    return vals


def read_config(path):
    """Parse a ``key = value`` file; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise io.InputError(f"{path} line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value.strip("\"'")
    return out


def _merge(args):
    cfg = read_config(args.config) if getattr(args, "config", None) else {}
    for key, default in DEFAULTS.items():
        if not hasattr(args, key):
            continue
        if getattr(args, key) is None:
            raw = cfg.get(key, default)
            if isinstance(default, bool):
                raw = raw if isinstance(raw, bool) else str(raw).lower() in ("1", "true", "yes", "on")
            elif isinstance(default, int):
                raw = int(raw)
            elif isinstance(default, float):
                raw = float(raw)
            setattr(args, key, raw)
    for key, value in cfg.items():
        if hasattr(args, key) and getattr(args, key) is None:
            setattr(args, key, value)
    return args


def _require_file(path, what):
    if path is None:
        raise io.InputError(f"{what} path is required")
    if not Path(path).is_file():
        raise io.InputError(f"{what} {path} does not exist")
    return Path(path)


def _standardize(data):
    Z = data.covariates
    mean = Z[:, 1:].mean(axis=0)
    scale = Z[:, 1:].std(axis=0)
    scale[scale == 0] = 1.0
    Zs = np.column_stack([Z[:, 0], (Z[:, 1:] - mean) / scale])
    # beta_original = T @ beta_standardized, per part
    k1 = data.n_coef
    T = np.eye(k1)
    T[0, 1:] = -mean / scale
    T[1:, 1:] = np.diag(1.0 / scale)
    return Dataset(data.counts, Zs, data.grid, data.names), T


def cmd_fit(args):
    data = io.load_dataset(_require_file(args.data, "dataset"))
    if args.out is None:
        raise io.InputError("--out is required")
    work, T = _standardize(data) if args.standardize else (data, None)
    newton = NewtonSettings(tolerance=args.newton_tol, max_iterations=args.max_newton_iter,
                            check_gradient=not args.strict)
    simplex = NelderMeadSettings(tolerance=args.tol, max_iterations=args.max_iter,
                                 warm_start=not args.strict)
    init = Hyperparams(*_floats(args.init, 4, "--init"))
    fit = maximize_marginal(work, init, simplex, newton)
    if T is not None:
        k1 = data.n_coef
        B = np.zeros((2 * k1, 2 * k1))
        B[:k1, :k1] = T
        B[k1:, k1:] = T
        beta = B @ fit.x_hat[: 2 * k1]
        cov = B @ coefficient_covariance(fit) @ B.T
        fit.x_hat = fit.x_hat.copy()
        fit.x_hat[: 2 * k1] = beta
        fit.std_errors = fit.std_errors.copy()
        fit.std_errors[: 2 * k1] = np.sqrt(np.diag(cov))
    intervals = confidence_intervals(fit, args.alpha)
    io.write_fit_bundle(args.out, fit, data, intervals)
    print(io.format_report(fit, intervals, data.n_coef), end="")
    return EXIT_OK if fit.converged else EXIT_NONCONVERGED


def _load_fit(args):
    data = io.load_dataset(_require_file(args.data, "dataset"))
    if args.fit is None or not Path(args.fit).is_dir():
        raise io.InputError(f"fit bundle {args.fit} does not exist")
    _, x = io.read_fit_bundle(args.fit, data)
    return data, x


def cmd_predict(args):
    data, x = _load_fit(args)
    out = Path(args.out or ".")
    target = out / "surfaces.csv" if out.suffix != ".csv" else out
    target.parent.mkdir(parents=True, exist_ok=True)
    io.write_surfaces(target, prediction_surfaces(x, data))
    return EXIT_OK


def cmd_diagnose(args):
    data, x = _load_fit(args)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    surfaces = prediction_surfaces(x, data)
    residuals = pearson_residuals(x, data)
    eta0, _ = linear_predictors(x, data)
    roc = roc_curve(link_pi(eta0), data.counts)
    io.write_roc(out / "roc.csv", roc)
    io.write_residuals(out / "residuals.csv", data, surfaces, residuals)
    io.write_surfaces(out / "surfaces.csv", surfaces)
    pos = data.counts > 0
    undefined = int(np.ma.getmaskarray(residuals).sum())
    print(f"AUC = {roc.auc:.3f}")
    if pos.any() and residuals[pos].count():
        print(f"mean Pearson residual (y > 0) = {float(residuals[pos].mean()):.4f}")
    print(f"undefined residuals = {undefined}")
    return EXIT_OK


def cmd_simulate(args):
    if args.out is None:
        raise io.InputError("--out is required")
    beta0 = _floats(args.beta0, what="--beta0")
    betaP = _floats(args.betaP, len(beta0), "--betaP")
    theta = Hyperparams(*_floats(args.theta, 4, "--theta"))
    config = SimConfig(int(args.rows), int(args.cols), beta0, betaP, theta,
                       covariates=args.covariates, seed=int(args.seed))
    data, x = simulate(config)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    io.write_dataset(args.out, data)
    if args.truth:
        with open(args.truth, "w") as fh:
            fh.write("index,value\n")
            for i, v in enumerate(x):
                fh.write(f"{i},{io.fmt(v)}\n")
    return EXIT_OK


def cmd_aggregate(args):
    if args.input is None or not Path(args.input).is_dir():
        raise io.InputError(f"raster directory {args.input} does not exist")
    if args.out is None:
        raise io.InputError("--out is required")
    stack = io.read_raster_dir(args.input)
    counts = aggregate_monthly(stack, int(args.factor))
    io.write_raster_csv(args.out, counts, integer=True)
    print(f"aggregated {stack.n_days} day(s) to a {counts.shape[0]}x{counts.shape[1]} grid")
    return EXIT_OK


def cmd_derive_rh(args):
    dew = io.read_raster_csv(_require_file(args.dew, "dew-point raster"))
    air = io.read_raster_csv(_require_file(args.air, "air-temperature raster"), dew.shape)
    if args.out is None:
        raise io.InputError("--out is required")
    n_super = int(np.sum(dew > air))
    rh = relative_humidity(dew, air)
    io.write_raster_csv(args.out, np.asarray(rh, dtype=float))
    if n_super:
        print(f"clamped {n_super} supersaturated cell(s) to RH = 1")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="spatialhurdle", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", help="key = value file; flags override it")
        p.set_defaults(func=func)
        return p

    p = add("fit", cmd_fit, "fit the model and write a result bundle")
    p.add_argument("--data", help="dataset CSV")
    p.add_argument("--out", help="output bundle directory")
    p.add_argument("--tol", type=float, help="Nelder-Mead objective-spread tolerance (default 1e-7)")
    p.add_argument("--newton-tol", type=float, help="Newton norm-difference tolerance (default 1e-7)")
    p.add_argument("--max-iter", type=int, help="Nelder-Mead iteration cap")
    p.add_argument("--max-newton-iter", type=int, help="Newton iteration cap")
    p.add_argument("--init", help="initial kappa0,tau0,kappaP,tauP")
    p.add_argument("--alpha", type=float, help="interval level is 1 - alpha")
    p.add_argument("--standardize", action="store_const", const=True,
                   help="standardize covariates for fitting; report original-scale coefficients")
    p.add_argument("--strict", action="store_const", const=True,
                   help="cold-start Newton searches and use only the norm-difference stopping rule")

    for name, func, text in (("predict", cmd_predict, "write surfaces.csv from a fit bundle"),
                             ("diagnose", cmd_diagnose, "ROC, Pearson residuals and surfaces")):
        p = add(name, func, text)
        p.add_argument("--data", help="dataset CSV")
        p.add_argument("--fit", help="fit bundle directory")
        p.add_argument("--out", help="output directory (default: current directory)")

    p = add("simulate", cmd_simulate, "draw a synthetic dataset")
    p.add_argument("--out", help="dataset CSV to write")
    p.add_argument("--truth", help="optional CSV for the true latent vector")
    p.add_argument("--rows", type=int)
    p.add_argument("--cols", type=int)
    p.add_argument("--beta0", help="hurdle coefficients, intercept first")
    p.add_argument("--betaP", help="count coefficients, intercept first")
    p.add_argument("--theta", help="kappa0,tau0,kappaP,tauP")
    p.add_argument("--covariates", choices=("uniform", "constant"))
    p.add_argument("--seed", type=int)

    p = add("aggregate", cmd_aggregate, "aggregate daily FRP rasters into monthly counts")
    p.add_argument("--input", help="directory of per-day row,col,value CSV rasters")
    p.add_argument("--factor", type=int, help="down-sampling factor (default 5)")
    p.add_argument("--out", help="monthly count raster CSV to write")

    p = add("derive-rh", cmd_derive_rh, "relative humidity from dew-point and air temperature")
    p.add_argument("--dew", help="dew-point temperature raster (K)")
    p.add_argument("--air", help="air temperature raster (K)")
    p.add_argument("--out", help="RH raster CSV to write")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse reports usage errors with status 2, which is reserved for non-convergence
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        args = _merge(args)
        return args.func(args)
    except (io.InputError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
