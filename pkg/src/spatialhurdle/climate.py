"""Relative humidity from dew point (Buck saturation vapour pressure) and design-matrix assembly."""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .grid import GridSpec

logger = logging.getLogger(__name__)

# singularity of the Buck formula sits at a4 = 32.19 K
MIN_TEMPERATURE = 150.0
DESIGN_NAMES = ("intercept", "temp", "RH", "elev", "PTC", "temp_RH")


@dataclass(frozen=True)
class BuckConstants:
    T0: float = 273.16
    a1: float = 611.21
    a3: float = 17.502
    a4: float = 32.19


BUCK = BuckConstants()


def _check_temperature(T, what="temperature"):
    T = np.asarray(T, dtype=float)
    bad = T[~np.isnan(T)]
    if bad.size and bad.min() < MIN_TEMPERATURE:
        raise ValueError(f"{what} {bad.min():.2f} K below physical floor {MIN_TEMPERATURE} K")
    return T


def saturation_vapor_pressure(T, constants=BUCK):
    """Saturation vapour pressure in Pa at temperature ``T`` (kelvin)."""
    T = _check_temperature(T)
    c = constants
    out = c.a1 * np.exp(c.a3 * (T - c.T0) / (T - c.a4))
    return float(out) if out.ndim == 0 else out


def relative_humidity(T_dew, T_air, constants=BUCK):
    """``e_sat(T_dew) / e_sat(T_air)`` as a fraction.

    Dew points above the air temperature (reanalysis rounding) are clamped to
    RH = 1 and logged.
    """
    T_dew = _check_temperature(T_dew, "dew-point temperature")
    T_air = _check_temperature(T_air, "air temperature")
    rh = np.asarray(saturation_vapor_pressure(T_dew, constants)) / np.asarray(
        saturation_vapor_pressure(T_air, constants))
    over = rh > 1.0
    if np.any(over):
        logger.warning("clamped %d supersaturated cell(s) to RH = 1", int(np.sum(over)))
        rh = np.where(over, 1.0, rh)
    return float(rh) if np.ndim(rh) == 0 else rh


def kelvin_to_celsius(T):
    return np.asarray(T, dtype=float) - 273.15


def bilinear_resample(values, out_shape):
    """Resample a raster onto a coarser or finer grid covering the same extent.

    Cell centres are matched in normalized coordinates; targets beyond the
    outermost source centres are linearly extrapolated.  NaNs propagate.
    """
    values = np.asarray(values, dtype=float)
    rows, cols = values.shape
    out_rows, out_cols = out_shape
    src_r = (np.arange(rows) + 0.5) / rows
    src_c = (np.arange(cols) + 0.5) / cols
    dst_r = (np.arange(out_rows) + 0.5) / out_rows
    dst_c = (np.arange(out_cols) + 0.5) / out_cols
    if rows == 1 or cols == 1:
        raise ValueError("bilinear resampling needs at least 2 rows and 2 columns")
    interp = RegularGridInterpolator((src_r, src_c), values, method="linear",
                                     bounds_error=False, fill_value=None)
    rr, cc = np.meshgrid(dst_r, dst_c, indexing="ij")
    return interp(np.column_stack([rr.ravel(), cc.ravel()])).reshape(out_rows, out_cols)


def build_design(temp, rh, elev, ptc, temp_in_kelvin=True):
    """Stack covariate rasters into ``[1, temp, RH, elev, PTC, temp*RH]``.

    Cells with a missing (NaN) value in any covariate are masked out.

    Returns
    -------
    grid : GridSpec
    Z : ndarray, shape (n, 6)
    names : tuple of str
    """
    arrays = [np.asarray(a, dtype=float) for a in (temp, rh, elev, ptc)]
    shape = arrays[0].shape
    if len(shape) != 2 or any(a.shape != shape for a in arrays):
        raise ValueError(f"covariate rasters must share one 2-d shape, got {[a.shape for a in arrays]}")
    t, r, e, c = arrays
    if temp_in_kelvin:
        t = kelvin_to_celsius(t)
    mask = ~(np.isnan(t) | np.isnan(r) | np.isnan(e) | np.isnan(c))
    grid = GridSpec(shape[0], shape[1], mask)
    tt, rr = t[mask], r[mask]
    Z = np.column_stack([np.ones(grid.n), tt, rr, e[mask], c[mask], tt * rr])
    return grid, Z, DESIGN_NAMES
