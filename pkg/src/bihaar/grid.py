"""Finite bi-parameter dyadic grids on the unit square.

The domain is [0,1)^2 partitioned into 2**N1 x 2**N2 congruent cells.  Dyadic
intervals in parameter m form a complete binary tree of depth N_m rooted at
[0,1); dyadic rectangles are products of one interval per parameter.  Grid
functions are step functions constant on the finest cells, stored as arrays
of shape (2**N1, 2**N2) with axis 0 indexing the first variable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

__all__ = [
    "Grid",
    "DyadicInterval",
    "DyadicRectangle",
    "GridFunction",
    "GridMismatchError",
    "haar",
    "haar_rectangle",
    "average",
    "slice_average",
    "slice_pairing",
    "martingale_difference",
    "martingale_block",
    "biparameter_block",
    "level_layer",
    "bilevel_layer",
    "inner_product",
    "lp_norm",
    "mixed_norm",
    "dyadic_tables",
    "expand_table",
    "HaarTransform",
    "haar_expand",
    "gridfunction_payload",
    "gridfunction_from_payload",
]


class GridMismatchError(ValueError):
    """Two grid functions live on different grids."""


@dataclass(frozen=True)
class Grid:
    """Dyadic grid on [0,1)^2 with 2**depth1 * 2**depth2 finest cells."""

    depth1: int
    depth2: int

    def __post_init__(self) -> None:
        if self.depth1 < 0 or self.depth2 < 0:
            raise ValueError("grid depths must be non-negative")

    @property
    def shape(self) -> tuple[int, int]:
        return (1 << self.depth1, 1 << self.depth2)

    @property
    def cell_count(self) -> int:
        return 1 << (self.depth1 + self.depth2)

    @property
    def cell_measure(self) -> float:
        return 2.0 ** (-self.depth1 - self.depth2)

    def depth(self, param: int) -> int:
        if param == 1:
            return self.depth1
        if param == 2:
            return self.depth2
        raise ValueError(f"parameter index must be 1 or 2, got {param}")

    def intervals(self, param: int, level: int | None = None) -> Iterator["DyadicInterval"]:
        """All dyadic intervals of one parameter, or those at a single level."""
        levels = range(self.depth(param) + 1) if level is None else [level]
        for lev in levels:
            for pos in range(1 << lev):
                yield DyadicInterval(param, lev, pos)

    def rectangles(
        self, max_level1: int | None = None, max_level2: int | None = None
    ) -> Iterator["DyadicRectangle"]:
        m1 = self.depth1 if max_level1 is None else max_level1
        m2 = self.depth2 if max_level2 is None else max_level2
        for l1 in range(m1 + 1):
            for q1 in range(1 << l1):
                for l2 in range(m2 + 1):
                    for q2 in range(1 << l2):
                        yield DyadicRectangle(
                            DyadicInterval(1, l1, q1), DyadicInterval(2, l2, q2)
                        )


@dataclass(frozen=True)
class DyadicInterval:
    """Dyadic interval [pos * 2**-level, (pos+1) * 2**-level) in one parameter."""

    param: int
    level: int
    pos: int

    def __post_init__(self) -> None:
        if self.param not in (1, 2):
            raise ValueError(f"parameter index must be 1 or 2, got {self.param}")
        if self.level < 0 or not 0 <= self.pos < (1 << self.level):
            raise ValueError(f"invalid interval coordinates level={self.level} pos={self.pos}")

    @property
    def length(self) -> float:
        return 2.0**-self.level

    def parent(self, k: int = 1) -> "DyadicInterval":
        if k < 0 or k > self.level:
            raise ValueError(f"{k}-th parent does not exist at level {self.level}")
        return DyadicInterval(self.param, self.level - k, self.pos >> k)

    def children(self) -> tuple["DyadicInterval", "DyadicInterval"]:
        return (
            DyadicInterval(self.param, self.level + 1, 2 * self.pos),
            DyadicInterval(self.param, self.level + 1, 2 * self.pos + 1),
        )

    def descendants(self, k: int) -> list["DyadicInterval"]:
        """The 2**k intervals k levels below whose k-th parent is this one."""
        return [
            DyadicInterval(self.param, self.level + k, (self.pos << k) + d)
            for d in range(1 << k)
        ]

    def contains(self, other: "DyadicInterval") -> bool:
        if self.param != other.param or other.level < self.level:
            return False
        return (other.pos >> (other.level - self.level)) == self.pos

    def cell_slice(self, grid: Grid) -> slice:
        depth = grid.depth(self.param)
        if self.level > depth:
            raise ValueError(f"interval level {self.level} exceeds grid depth {depth}")
        width = 1 << (depth - self.level)
        return slice(self.pos * width, (self.pos + 1) * width)


@dataclass(frozen=True)
class DyadicRectangle:
    """Product of one dyadic interval per parameter."""

    x1: DyadicInterval
    x2: DyadicInterval

    def __post_init__(self) -> None:
        if self.x1.param != 1 or self.x2.param != 2:
            raise ValueError("rectangle components must be (parameter-1, parameter-2) intervals")

    @property
    def measure(self) -> float:
        return self.x1.length * self.x2.length

    def contains(self, other: "DyadicRectangle") -> bool:
        return self.x1.contains(other.x1) and self.x2.contains(other.x2)

    def cell_slices(self, grid: Grid) -> tuple[slice, slice]:
        return (self.x1.cell_slice(grid), self.x2.cell_slice(grid))


class GridFunction:
    """Step function constant on the finest cells of a grid.

    Arithmetic combines two functions only when their grids coincide.  Values
    may be real or complex; accumulations use numpy's pairwise reductions so
    results are deterministic.
    """

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid, values: np.ndarray):
        values = np.asarray(values)
        if values.shape != grid.shape:
            raise ValueError(f"value table shape {values.shape} does not match grid {grid.shape}")
        if not np.issubdtype(values.dtype, np.complexfloating):
            values = values.astype(np.float64, copy=False)
        self.grid = grid
        self.values = values

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "GridFunction":
        return cls(grid, np.full(grid.shape, value, dtype=np.float64))

    @classmethod
    def zeros(cls, grid: Grid) -> "GridFunction":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def indicator(cls, grid: Grid, rect: DyadicRectangle) -> "GridFunction":
        values = np.zeros(grid.shape)
        values[rect.cell_slices(grid)] = 1.0
        return cls(grid, values)

    def copy(self) -> "GridFunction":
        return GridFunction(self.grid, self.values.copy())

    def _coerce(self, other):
        if isinstance(other, GridFunction):
            if other.grid != self.grid:
                raise GridMismatchError(f"grids differ: {self.grid} vs {other.grid}")
            return other.values
        return other

    def __add__(self, other):
        return GridFunction(self.grid, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return GridFunction(self.grid, self.values - self._coerce(other))

    def __rsub__(self, other):
        return GridFunction(self.grid, self._coerce(other) - self.values)

    def __mul__(self, other):
        return GridFunction(self.grid, self.values * self._coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return GridFunction(self.grid, self.values / self._coerce(other))

    def __neg__(self):
        return GridFunction(self.grid, -self.values)

    def __abs__(self):
        return GridFunction(self.grid, np.abs(self.values))

    def integral(self) -> float | complex:
        return self.values.sum() * self.grid.cell_measure

    def __repr__(self) -> str:
        return f"GridFunction(depths=({self.grid.depth1}, {self.grid.depth2}))"


def _same_grid(*fs: GridFunction) -> Grid:
    grid = fs[0].grid
    for f in fs[1:]:
        if f.grid != grid:
            raise GridMismatchError(f"grids differ: {grid} vs {f.grid}")
    return grid


def _axis_for(param: int) -> int:
    return 0 if param == 1 else 1


def _half_signs(depth: int, level: int) -> np.ndarray:
    """Cellwise +1/-1 pattern: + on the left half, - on the right half of each
    level-`level` interval (cells indexed at resolution 2**depth)."""
    idx = np.arange(1 << depth)
    bit = (idx >> (depth - level - 1)) & 1
    return np.where(bit == 0, 1.0, -1.0)


def haar(grid: Grid, interval: DyadicInterval, eta: int) -> GridFunction:
    """Haar function of one interval as a grid function, constant in the
    other parameter.

    eta = 0 gives |I|**-1/2 1_I; eta = 1 gives the L2-normalized difference of
    the two halves, which requires the interval to have children on the grid.
    """
    if eta not in (0, 1):
        raise ValueError(f"Haar exponent must be 0 or 1, got {eta}")
    depth = grid.depth(interval.param)
    if eta == 1 and interval.level >= depth:
        raise ValueError(
            f"cancellative Haar needs children: level {interval.level} at depth {depth}"
        )
    scale = 2.0 ** (interval.level / 2.0)
    n = 1 << depth
    line = np.zeros(n)
    sl = interval.cell_slice(grid)
    if eta == 0:
        line[sl] = scale
    else:
        line[sl] = scale * _half_signs(depth, interval.level)[sl]
    if interval.param == 1:
        values = np.broadcast_to(line[:, None], grid.shape).copy()
    else:
        values = np.broadcast_to(line[None, :], grid.shape).copy()
    return GridFunction(grid, values)


def haar_rectangle(
    grid: Grid, rect: DyadicRectangle, eta1: int = 1, eta2: int = 1
) -> GridFunction:
    """Tensor product of the per-parameter Haar functions of a rectangle."""
    return haar(grid, rect.x1, eta1) * haar(grid, rect.x2, eta2)


def average(f: GridFunction, rect: DyadicRectangle) -> float | complex:
    """Mean of f over a dyadic rectangle."""
    block = f.values[rect.cell_slices(f.grid)]
    return block.mean()


def slice_average(f: GridFunction, interval: DyadicInterval) -> np.ndarray:
    """Average in one parameter only; returns one value per cell of the other
    parameter."""
    axis = _axis_for(interval.param)
    sl = interval.cell_slice(f.grid)
    block = f.values[sl, :] if axis == 0 else f.values[:, sl]
    return block.mean(axis=axis)


def slice_pairing(f: GridFunction, interval: DyadicInterval, eta: int) -> np.ndarray:
    """Pairing with a Haar function in one parameter only (integral over that
    variable); returns one value per cell of the other parameter."""
    depth = f.grid.depth(interval.param)
    if eta == 0:
        return slice_average(f, interval) * interval.length * 2.0 ** (interval.level / 2.0)
    if interval.level >= depth:
        raise ValueError("cancellative slice pairing needs children")
    left, right = interval.children()
    diff = slice_average(f, left) - slice_average(f, right)
    # child averages carry measure |I|/2 each
    return diff * (interval.length / 2.0) * 2.0 ** (interval.level / 2.0)


def _expand_axis(arr: np.ndarray, axis: int, factor: int) -> np.ndarray:
    return np.repeat(arr, factor, axis=axis)


def _axis_mean_pyramid(values: np.ndarray, axis: int, depth: int) -> list[np.ndarray]:
    """tables[l] = level-l interval means along `axis`, l = 0..depth."""
    tables = [None] * (depth + 1)
    tables[depth] = values
    cur = values
    for lev in range(depth - 1, -1, -1):
        if axis == 0:
            cur = 0.5 * (cur[0::2, :] + cur[1::2, :])
        else:
            cur = 0.5 * (cur[:, 0::2] + cur[:, 1::2])
        tables[lev] = cur
    return tables


def _axis_reduce_pyramid(values, axis, depth, op) -> list[np.ndarray]:
    tables = [None] * (depth + 1)
    tables[depth] = values
    cur = values
    for lev in range(depth - 1, -1, -1):
        if axis == 0:
            cur = op(cur[0::2, :], cur[1::2, :])
        else:
            cur = op(cur[:, 0::2], cur[:, 1::2])
        tables[lev] = cur
    return tables


def dyadic_tables(f: GridFunction | np.ndarray, grid: Grid | None = None, reduce: str = "mean"):
    """Per-rectangle reductions over every dyadic rectangle.

    Returns nested lists t[l1][l2], an array of shape (2**l1, 2**l2) whose
    entries are the reduction of f over the rectangle at that level/position.
    reduce is one of "mean", "max", "min".
    """
    if isinstance(f, GridFunction):
        grid = f.grid
        values = f.values
    else:
        if grid is None:
            raise ValueError("grid required when passing a bare array")
        values = np.asarray(f)
    if reduce == "mean":
        rows = _axis_mean_pyramid(values, 0, grid.depth1)
        return [_axis_mean_pyramid(r, 1, grid.depth2) for r in rows]
    op = {"max": np.maximum, "min": np.minimum}[reduce]
    rows = _axis_reduce_pyramid(values, 0, grid.depth1, op)
    return [_axis_reduce_pyramid(r, 1, grid.depth2, op) for r in rows]


def expand_table(table: np.ndarray, grid: Grid) -> np.ndarray:
    """Broadcast a level-(l1,l2) rectangle table back to cell resolution."""
    n1, n2 = grid.shape
    out = _expand_axis(table, 0, n1 // table.shape[0])
    return _expand_axis(out, 1, n2 // table.shape[1])


def martingale_difference(f: GridFunction, interval: DyadicInterval) -> GridFunction:
    """Difference of child averages and the parent average in one parameter,
    acting as the identity in the other; zero outside the interval."""
    grid = f.grid
    depth = grid.depth(interval.param)
    if interval.level >= depth:
        raise ValueError(
            f"martingale difference needs children: level {interval.level} at depth {depth}"
        )
    axis = _axis_for(interval.param)
    out = np.zeros(grid.shape, dtype=f.values.dtype)
    parent_avg = slice_average(f, interval)
    sl = interval.cell_slice(grid)
    for child in interval.children():
        csl = child.cell_slice(grid)
        child_avg = slice_average(f, child)
        if axis == 0:
            out[csl, :] = child_avg[None, :]
        else:
            out[:, csl] = child_avg[:, None]
    if axis == 0:
        out[sl, :] -= parent_avg[None, :]
    else:
        out[:, sl] -= parent_avg[:, None]
    return GridFunction(grid, out)


def level_layer(f: GridFunction, param: int, level: int) -> GridFunction:
    """Sum of all martingale differences of one parameter at a single level
    (conditional expectation at level+1 minus at level)."""
    grid = f.grid
    depth = grid.depth(param)
    if not 0 <= level < depth:
        raise ValueError(f"level {level} has no children at depth {depth}")
    axis = _axis_for(param)
    pyr = _axis_mean_pyramid(f.values, axis, depth)
    n = grid.shape[axis]
    fine = _expand_axis(pyr[level + 1], axis, n >> (level + 1))
    coarse = _expand_axis(pyr[level], axis, n >> level)
    return GridFunction(grid, fine - coarse)


def bilevel_layer(f: GridFunction, level1: int, level2: int) -> GridFunction:
    """Composition of the two per-parameter level layers."""
    return level_layer(level_layer(f, 1, level1), 2, level2)


def martingale_block(f: GridFunction, interval: DyadicInterval, k: int) -> GridFunction:
    """Sum of martingale differences over the descendants k levels below the
    interval (k = 0 reproduces the plain martingale difference)."""
    grid = f.grid
    depth = grid.depth(interval.param)
    if k < 0 or interval.level + k >= depth:
        raise ValueError(f"block depth exhausted: level {interval.level} + k {k} at depth {depth}")
    layer = level_layer(f, interval.param, interval.level + k)
    out = np.zeros(grid.shape, dtype=f.values.dtype)
    sl = interval.cell_slice(grid)
    if interval.param == 1:
        out[sl, :] = layer.values[sl, :]
    else:
        out[:, sl] = layer.values[:, sl]
    return GridFunction(grid, out)


def biparameter_block(f: GridFunction, rect: DyadicRectangle, k1: int, k2: int) -> GridFunction:
    """Two-parameter martingale block: the parameter-1 block composed with the
    parameter-2 block."""
    return martingale_block(martingale_block(f, rect.x1, k1), rect.x2, k2)


def inner_product(f: GridFunction, g: GridFunction) -> float | complex:
    """Bilinear pairing: integral of f*g over the unit square (no conjugation)."""
    grid = _same_grid(f, g)
    return (f.values * g.values).sum() * grid.cell_measure


def lp_norm(f: GridFunction, p: float, weight: GridFunction | None = None) -> float:
    """Weighted norm (integral of |f w|^p)^{1/p}; p = inf takes the cell max."""
    if weight is not None:
        _same_grid(f, weight)
        if weight.values.min() <= 0:
            raise ValueError("weight must be strictly positive")
        g = np.abs(f.values * weight.values)
    else:
        g = np.abs(f.values)
    if p == math.inf:
        return float(g.max())
    if not p > 0:
        raise ValueError(f"exponent must be positive or inf, got {p}")
    return float((g**p).sum() * f.grid.cell_measure) ** (1.0 / p)


def mixed_norm(f: GridFunction, p1: float, p2: float) -> float:
    """Iterated norm: inner norm over the second variable per first-variable
    cell, outer norm over the first variable."""
    for p in (p1, p2):
        if p != math.inf and not p > 0:
            raise ValueError(f"exponent must be positive or inf, got {p}")
    g = np.abs(f.values)
    n1, n2 = f.grid.shape
    if p2 == math.inf:
        inner = g.max(axis=1)
    else:
        inner = ((g**p2).sum(axis=1) / n2) ** (1.0 / p2)
    if p1 == math.inf:
        return float(inner.max())
    return float(((inner**p1).sum() / n1) ** (1.0 / p1))


class HaarTransform:
    """Cached Haar analysis of one grid function.

    table(l1, e1, l2, e2)[q1, q2] is the pairing of f with the tensor Haar
    function of the rectangle (l1, q1) x (l2, q2) with per-parameter exponents
    (e1, e2).  slice_table(param, l, e)[q] is the one-parameter pairing, an
    array over the cells of the other parameter.
    """

    def __init__(self, f: GridFunction):
        self.grid = f.grid
        self._sum1 = self._sum_pyramid(f.values, 0, f.grid.depth1)
        self._slice_cache: dict[tuple[int, int, int], np.ndarray] = {}
        self._table_cache: dict[tuple[int, int, int, int], np.ndarray] = {}

    @staticmethod
    def _sum_pyramid(values, axis, depth):
        tables = [None] * (depth + 1)
        tables[depth] = values
        cur = values
        for lev in range(depth - 1, -1, -1):
            if axis == 0:
                cur = cur[0::2, :] + cur[1::2, :]
            else:
                cur = cur[:, 0::2] + cur[:, 1::2]
            tables[lev] = cur
        return tables

    def _pair_from_sums(self, sums, axis, depth, level, eta):
        # cell sums -> integrals carry the factor 2**-depth
        scale = 2.0 ** (level / 2.0 - depth)
        if eta == 0:
            return sums[level] * scale
        if level >= depth:
            raise ValueError("cancellative Haar requested at the finest level")
        nxt = sums[level + 1]
        if axis == 0:
            return (nxt[0::2, :] - nxt[1::2, :]) * scale
        return (nxt[:, 0::2] - nxt[:, 1::2]) * scale

    def slice_table(self, param: int, level: int, eta: int) -> np.ndarray:
        key = (param, level, eta)
        if key not in self._slice_cache:
            if param == 1:
                arr = self._pair_from_sums(self._sum1, 0, self.grid.depth1, level, eta)
            else:
                base = self._sum1[self.grid.depth1]
                sums = self._sum_pyramid(base, 1, self.grid.depth2)
                arr = self._pair_from_sums(sums, 1, self.grid.depth2, level, eta)
            self._slice_cache[key] = arr
        return self._slice_cache[key]

    def table(self, l1: int, e1: int, l2: int, e2: int) -> np.ndarray:
        key = (l1, e1, l2, e2)
        if key not in self._table_cache:
            rows = self.slice_table(1, l1, e1)
            sums = self._sum_pyramid(rows, 1, self.grid.depth2)
            # rows already carry the x1 integration; only x2 remains
            self._table_cache[key] = self._pair_from_sums(sums, 1, self.grid.depth2, l2, e2)
        return self._table_cache[key]


def gridfunction_payload(f: GridFunction) -> dict:
    """JSON-ready form: header depths plus the flat row-major value list."""
    if np.iscomplexobj(f.values):
        raise ValueError("serialization supports real-valued functions")
    return {
        "depths": [f.grid.depth1, f.grid.depth2],
        "values": [float(v) for v in f.values.ravel(order="C")],
    }


def gridfunction_from_payload(payload: dict) -> GridFunction:
    grid = Grid(int(payload["depths"][0]), int(payload["depths"][1]))
    values = np.asarray(payload["values"], dtype=float)
    if values.size != grid.cell_count:
        raise ValueError(
            f"expected {grid.cell_count} values for depths {payload['depths']}, "
            f"got {values.size}"
        )
    return GridFunction(grid, values.reshape(grid.shape, order="C"))


def haar_expand(grid: Grid, tables: dict[tuple[int, int, int, int], np.ndarray]) -> GridFunction:
    """Synthesize a grid function from tensor-Haar coefficient tables keyed by
    (l1, e1, l2, e2)."""
    n1, n2 = grid.shape
    complex_any = any(np.iscomplexobj(t) for t in tables.values())
    out = np.zeros(grid.shape, dtype=np.complex128 if complex_any else np.float64)
    for (l1, e1, l2, e2), coef in tables.items():
        scaled = np.asarray(coef) * 2.0 ** ((l1 + l2) / 2.0)
        arr = _expand_axis(scaled, 0, n1 >> l1)
        arr = _expand_axis(arr, 1, n2 >> l2)
        if e1:
            arr = arr * _half_signs(grid.depth1, l1)[:, None]
        if e2:
            arr = arr * _half_signs(grid.depth2, l2)[None, :]
        out += arr
    return GridFunction(grid, out)
