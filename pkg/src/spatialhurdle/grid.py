"""Masked rectangular grids, the rook-adjacency Laplacian, and monthly raster aggregation."""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

_ROOK = ((-1, 0), (1, 0), (0, -1), (0, 1))


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Rectangular raster with a participation mask.

    ``mask[r, c]`` is True when cell ``(r, c)`` takes part in the model.
    Unmasked cells are numbered ``0..n-1`` in row-major order.
    """

    n_rows: int
    n_cols: int
    mask: np.ndarray = None
    cell_index: np.ndarray = field(init=False, repr=False)
    cells: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if int(self.n_rows) < 1 or int(self.n_cols) < 1:
            raise ValueError(f"grid shape must be positive, got ({self.n_rows}, {self.n_cols})")
        mask = self.mask
        if mask is None:
            mask = np.ones((self.n_rows, self.n_cols), dtype=bool)
        mask = np.array(mask, dtype=bool)
        if mask.shape != (self.n_rows, self.n_cols):
            raise ValueError(f"mask shape {mask.shape} does not match grid ({self.n_rows}, {self.n_cols})")
        if not mask.any():
            raise ValueError("grid has no unmasked cells")
        mask.setflags(write=False)
        index = np.full(mask.shape, -1, dtype=np.int64)
        rows, cols = np.nonzero(mask)
        index[rows, cols] = np.arange(rows.size)
        index.setflags(write=False)
        cells = np.column_stack([rows, cols]).astype(np.int64)
        cells.setflags(write=False)
        object.__setattr__(self, "n_rows", int(self.n_rows))
        object.__setattr__(self, "n_cols", int(self.n_cols))
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "cell_index", index)
        object.__setattr__(self, "cells", cells)

    @property
    def n(self):
        """Number of unmasked cells."""
        return self.cells.shape[0]

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    def index_of(self, row, col):
        if not (0 <= row < self.n_rows and 0 <= col < self.n_cols) or not self.mask[row, col]:
            raise KeyError(f"cell ({row}, {col}) is masked or outside the grid")
        return int(self.cell_index[row, col])

    def neighbors(self, i):
        """Indices of the unmasked rook neighbours of cell ``i``."""
        if not 0 <= i < self.n:
            raise IndexError(f"cell index {i} out of range for n={self.n}")
        r, c = self.cells[i]
        out = []
        for dr, dc in _ROOK:
            rr, cc = r + dr, c + dc
            if 0 <= rr < self.n_rows and 0 <= cc < self.n_cols and self.mask[rr, cc]:
                out.append(int(self.cell_index[rr, cc]))
        return sorted(out)

    def degrees(self):
        return np.array([len(self.neighbors(i)) for i in range(self.n)], dtype=np.int64)

    def edges(self):
        """Array of index pairs ``(i, j)`` with ``i < j`` that are rook neighbours."""
        idx = self.cell_index
        m = self.mask
        right = m[:, :-1] & m[:, 1:]
        down = m[:-1, :] & m[1:, :]
        pairs = np.concatenate([
            np.column_stack([idx[:, :-1][right], idx[:, 1:][right]]),
            np.column_stack([idx[:-1, :][down], idx[1:, :][down]]),
        ])
        return pairs.reshape(-1, 2)

    def to_raster(self, values, fill=np.nan):
        """Scatter a length-``n`` vector back onto the full raster."""
        values = np.asarray(values, dtype=float)
        if values.shape != (self.n,):
            raise ValueError(f"expected {self.n} values, got shape {values.shape}")
        out = np.full(self.shape, fill, dtype=float)
        out[self.mask] = values
        return out

    def __eq__(self, other):
        if not isinstance(other, GridSpec):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.mask, other.mask)

    def __hash__(self):
        return hash((self.shape, self.mask.tobytes()))


def build_laplacian(grid):
    """Graph Laplacian ``G = D - A`` of the rook neighbourhood, as CSC."""
    n = grid.n
    e = grid.edges()
    i, j = e[:, 0], e[:, 1]
    adj = sp.coo_matrix((np.ones(i.size), (i, j)), shape=(n, n))
    adj = adj + adj.T
    deg = np.asarray(adj.sum(axis=1)).ravel()
    return sp.csc_matrix(sp.diags(deg) - adj)


@dataclass
class RasterStack:
    """Daily fine-resolution rasters, shape ``(n_days, fine_rows, fine_cols)``.

    NaN marks a missing observation and is treated as "no fire" on that day.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 2:
            v = v[None]
        if v.ndim != 3 or 0 in v.shape:
            raise ValueError(f"raster stack must be (days, rows, cols), got shape {v.shape}")
        if np.isinf(v).any():
            raise ValueError("raster stack contains infinite values")
        if (v[~np.isnan(v)] < 0).any():
            raise ValueError("raster stack contains negative values")
        self.values = v

    @property
    def n_days(self):
        return self.values.shape[0]

    @property
    def fine_shape(self):
        return self.values.shape[1:]


def block_sum(a, factor):
    """Sum non-overlapping ``factor x factor`` blocks of the last two axes.

    Trailing rows/columns that do not fill a whole block are dropped.
    """
    factor = int(factor)
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    *lead, rows, cols = a.shape
    r, c = rows // factor, cols // factor
    if r == 0 or c == 0:
        raise ValueError(f"raster {rows}x{cols} smaller than one {factor}x{factor} block")
    a = a[..., : r * factor, : c * factor]
    return a.reshape(*lead, r, factor, c, factor).sum(axis=(-3, -1))


def aggregate_monthly(stack, factor):
    """Down-sample by block sums, binarize each day, and count fire days per coarse cell."""
    if not isinstance(stack, RasterStack):
        stack = RasterStack(stack)
    if int(factor) < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    daily = block_sum(np.nan_to_num(stack.values, nan=0.0), factor)
    return (daily > 0).sum(axis=0).astype(np.int64)
