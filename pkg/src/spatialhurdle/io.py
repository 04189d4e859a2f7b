"""CSV formats: datasets, per-day rasters, fit bundles and diagnostic tables.

Dataset CSV
    header ``row,col,count,<cov1>,...,<covk>``; one line per cell.  A cell
    with any missing covariate (empty, ``NA`` or ``nan``) or a missing count
    is masked.  Cells absent from the file are masked too.  The intercept
    column is added on load.

Raster CSV
    header ``row,col,value``; absent cells are missing (NaN).

All floats are written with 17 significant digits so files round-trip exactly.
"""

import csv
import math
from pathlib import Path

import numpy as np

from .gmrf import Hyperparams
from .grid import GridSpec, RasterStack
from .hurdle import Dataset, LatentLayout

BUNDLE_VERSION = 1
_MISSING = {"", "na", "nan", "null"}


class InputError(ValueError):
    """Malformed or out-of-domain input file."""


def fmt(v):
    return format(float(v), ".17g")


def _is_missing(s):
    return s.strip().lower() in _MISSING


def _parse_int(s, what, line):
    try:
        v = float(s)
    except ValueError:
        raise InputError(f"line {line}: {what} {s!r} is not numeric") from None
    if not math.isfinite(v) or v != int(v):
        raise InputError(f"line {line}: {what} {s!r} is not an integer")
    return int(v)


def _parse_float(s, what, line):
    try:
        v = float(s)
    except ValueError:
        raise InputError(f"line {line}: {what} {s!r} is not numeric") from None
    if not math.isfinite(v):
        raise InputError(f"line {line}: {what} {s!r} is not finite")
    return v


def load_dataset(path, n_rows=None, n_cols=None):
    """Read a dataset CSV.  Grid extent defaults to the largest row/col present."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        if header[:3] != ["row", "col", "count"]:
            raise InputError(f"{path}: header must start with row,col,count, got {header[:3]}")
        names = header[3:]
        records = {}
        masked = set()
        for line, fields in enumerate(reader, start=2):
            if not fields or all(not f.strip() for f in fields):
                continue
            if len(fields) != len(header):
                raise InputError(f"line {line}: expected {len(header)} fields, got {len(fields)}")
            r = _parse_int(fields[0], "row", line)
            c = _parse_int(fields[1], "col", line)
            if r < 0 or c < 0:
                raise InputError(f"line {line}: negative cell coordinate ({r}, {c})")
            if (r, c) in records or (r, c) in masked:
                raise InputError(f"line {line}: duplicate cell ({r}, {c})")
            if _is_missing(fields[2]) or any(_is_missing(f) for f in fields[3:]):
                masked.add((r, c))
                continue
            y = _parse_int(fields[2], "count", line)
            if y < 0:
                raise InputError(f"line {line}: negative count {y}")
            covs = [_parse_float(f, f"covariate {nm!r}", line) for f, nm in zip(fields[3:], names)]
            records[(r, c)] = (y, covs)
    if not records:
        raise InputError(f"{path}: no usable cells")
    cells = list(records) + list(masked)
    rows = n_rows if n_rows is not None else max(r for r, _ in cells) + 1
    cols = n_cols if n_cols is not None else max(c for _, c in cells) + 1
    mask = np.zeros((rows, cols), dtype=bool)
    for r, c in records:
        if r >= rows or c >= cols:
            raise InputError(f"cell ({r}, {c}) outside a {rows}x{cols} grid")
        mask[r, c] = True
    grid = GridSpec(rows, cols, mask)
    order = [tuple(rc) for rc in grid.cells]
    y = np.array([records[rc][0] for rc in order], dtype=np.int64)
    X = np.array([records[rc][1] for rc in order], dtype=float).reshape(len(order), len(names))
    Z = np.column_stack([np.ones(len(order)), X])
    try:
        return Dataset(y, Z, grid, ("intercept", *names))
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None


def write_dataset(path, data):
    """Write ``data`` in the format :func:`load_dataset` reads (intercept dropped)."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "col", "count", *data.names[1:]])
        for (r, c), y, z in zip(data.grid.cells, data.counts, data.covariates):
            w.writerow([int(r), int(c), int(y), *(fmt(v) for v in z[1:])])


def read_raster_csv(path, shape=None):
    path = Path(path)
    entries = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header != ["row", "col", "value"]:
            raise InputError(f"{path}: raster header must be row,col,value, got {header}")
        for line, f in enumerate(reader, start=2):
            if not f:
                continue
            if len(f) != 3:
                raise InputError(f"{path} line {line}: expected 3 fields")
            r = _parse_int(f[0], "row", line)
            c = _parse_int(f[1], "col", line)
            v = np.nan if _is_missing(f[2]) else _parse_float(f[2], "value", line)
            entries.append((r, c, v))
    if not entries:
        raise InputError(f"{path}: empty raster")
    if shape is None:
        shape = (max(e[0] for e in entries) + 1, max(e[1] for e in entries) + 1)
    out = np.full(shape, np.nan)
    for r, c, v in entries:
        if not (0 <= r < shape[0] and 0 <= c < shape[1]):
            raise InputError(f"{path}: cell ({r}, {c}) outside {shape}")
        out[r, c] = v
    return out


def write_raster_csv(path, values, integer=False):
    values = np.asarray(values)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "col", "value"])
        for (r, c), v in np.ndenumerate(values):
            if integer:
                w.writerow([r, c, int(v)])
            else:
                w.writerow([r, c, "NA" if np.isnan(v) else fmt(v)])


def read_raster_dir(directory):
    """Stack every ``*.csv`` raster in ``directory`` (sorted by name) as days."""
    files = sorted(Path(directory).glob("*.csv"))
    if not files:
        raise InputError(f"{directory}: no .csv rasters found")
    first = read_raster_csv(files[0])
    days = [first] + [read_raster_csv(f, first.shape) for f in files[1:]]
    try:
        return RasterStack(np.stack(days))
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _bool(v):
    return "TRUE" if v else "FALSE"


def write_fit_bundle(directory, fit, data, intervals):
    """Write theta.csv, coefficients.csv, latent_fields.csv, report.txt and manifest.txt."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with (d / "manifest.txt").open("w") as fh:
        fh.write(f"format_version={BUNDLE_VERSION}\n")
        fh.write(f"n_cells={data.n}\nn_coef={data.n_coef}\n")
        fh.write(f"grid={data.grid.n_rows}x{data.grid.n_cols}\n")
    with (d / "theta.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["parameter", "value"])
        for name, v in zip(("kappa0", "tau0", "kappaP", "tauP"), fit.theta_hat.as_array()):
            w.writerow([name, fmt(v)])
    k1 = data.n_coef
    with (d / "coefficients.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["parameter", "estimate", "lower", "upper", "significant"])
        sig = intervals.significant
        for j, label in enumerate(fit.coefficient_labels()):
            w.writerow([label, fmt(intervals.estimate[j]), fmt(intervals.lower[j]),
                        fmt(intervals.upper[j]), _bool(sig[j])])
    lay = fit.layout
    with (d / "latent_fields.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell", "row", "col", "U0", "UP"])
        for i, ((r, c), u0, up) in enumerate(zip(data.grid.cells, fit.x_hat[lay.U0], fit.x_hat[lay.UP])):
            w.writerow([i, int(r), int(c), fmt(u0), fmt(up)])
    (d / "report.txt").write_text(format_report(fit, intervals, k1))


def format_report(fit, intervals, n_coef):
    th = fit.theta_hat
    r = fit.convergence_report
    lines = [
        "spatial Poisson hurdle fit",
        "",
        f"theta_hat: kappa0={th.kappa0:.4g} tau0={th.tau0:.4g} kappaP={th.kappaP:.4g} tauP={th.tauP:.4g}",
        f"log marginal posterior: {fit.log_marginal_posterior:.4f}",
        f"converged: {fit.converged}",
        f"simplex iterations: {r['simplex_iterations']}  objective evaluations: {r['objective_evaluations']}",
        f"simplex spread: {r['simplex_spread']:.3g}  diameter: {r['simplex_diameter']:.3g}",
        f"Newton iterations (final / total): {r['newton_iterations_final']} / {r['newton_iterations_total']}",
        f"gradient max-norm at mode: {r['gradient_norm']:.3g}",
        "",
        f"{'parameter':<24}{'estimate':>12}{'lower':>12}{'upper':>12}  significant",
    ]
    sig = intervals.significant
    for j, label in enumerate(fit.coefficient_labels()):
        lines.append(f"{label:<24}{intervals.estimate[j]:>12.4g}{intervals.lower[j]:>12.4g}"
                     f"{intervals.upper[j]:>12.4g}  {_bool(sig[j])}")
    return "\n".join(lines) + "\n"


def read_fit_bundle(directory, data):
    """Recover ``(theta, x_hat)`` from a bundle for the cells of ``data``."""
    d = Path(directory)
    for name in ("theta.csv", "coefficients.csv", "latent_fields.csv"):
        if not (d / name).is_file():
            raise InputError(f"{d}: missing {name}")
    with (d / "theta.csv").open(newline="") as fh:
        vals = {row["parameter"]: float(row["value"]) for row in csv.DictReader(fh)}
    theta = Hyperparams(vals["kappa0"], vals["tau0"], vals["kappaP"], vals["tauP"])
    with (d / "coefficients.csv").open(newline="") as fh:
        beta = np.array([float(row["estimate"]) for row in csv.DictReader(fh)])
    if beta.size != 2 * data.n_coef:
        raise InputError(f"bundle has {beta.size} coefficients, dataset needs {2 * data.n_coef}")
    with (d / "latent_fields.csv").open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    fields = {(int(r["row"]), int(r["col"])): (float(r["U0"]), float(r["UP"])) for r in rows}
    try:
        U = np.array([fields[(int(r), int(c))] for r, c in data.grid.cells]).reshape(-1, 2)
    except KeyError as exc:
        raise InputError(f"bundle has no latent field value for cell {exc.args[0]}") from None
    lay = LatentLayout(data.n, data.n_coef)
    x = np.empty(lay.p)
    x[: 2 * data.n_coef] = beta
    x[lay.U0] = U[:, 0]
    x[lay.UP] = U[:, 1]
    return theta, x


def write_roc(path, roc):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["threshold", "fpr", "tpr"])
        for t, f, p in zip(roc.thresholds, roc.fpr, roc.tpr):
            w.writerow([fmt(t), fmt(f), fmt(p)])


def write_residuals(path, data, surfaces, residuals):
    mask = np.ma.getmaskarray(residuals)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "col", "y", "yhat", "pearson"])
        for i in range(data.n):
            r = "NA" if mask[i] else fmt(residuals.data[i])
            w.writerow([int(surfaces.rows[i]), int(surfaces.cols[i]), int(data.counts[i]),
                        fmt(surfaces.expected[i]), r])


def write_surfaces(path, surfaces):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "col", "pi", "lambda", "expected"])
        for r, c, a, b, e in zip(surfaces.rows, surfaces.cols, surfaces.pi, surfaces.lam, surfaces.expected):
            w.writerow([int(r), int(c), fmt(a), fmt(b), fmt(e)])
