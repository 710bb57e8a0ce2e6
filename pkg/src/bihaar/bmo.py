"""Oscillation norms: dyadic BMO of coefficient sequences, product BMO of
rectangle sequences, little bmo of functions, and the square-pairing ratio.

Test sets for the product norm are unions of finest cells; exhaustive
enumeration of all unions is exact and allowed up to 16 cells, larger grids
fall back to a sampled certified lower bound (flagged by the caller-facing
strategy result).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import Grid, DyadicInterval, DyadicRectangle, GridFunction, dyadic_tables

__all__ = [
    "IntervalCoeffs",
    "RectangleCoeffs",
    "seq_bmo",
    "product_bmo",
    "ProductBMOResult",
    "little_bmo",
    "slice_oscillation",
    "h1_pairing_ratio",
    "EXHAUSTIVE_CELL_LIMIT",
]

EXHAUSTIVE_CELL_LIMIT = 16


@dataclass(frozen=True)
class IntervalCoeffs:
    """Sparse map from the dyadic intervals of one parameter to scalars.

    Keys are (level, pos) pairs; absent keys are zero.  depth bounds the
    interval tree the coefficients live in.
    """

    param: int
    depth: int
    values: dict[tuple[int, int], float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for level, pos in self.values:
            if not 0 <= level <= self.depth or not 0 <= pos < (1 << level):
                raise ValueError(f"key ({level}, {pos}) outside depth-{self.depth} tree")

    def get(self, level: int, pos: int) -> float:
        return self.values.get((level, pos), 0.0)

    def intervals(self):
        for (level, pos), v in self.values.items():
            yield DyadicInterval(self.param, level, pos), v


@dataclass(frozen=True)
class RectangleCoeffs:
    """Sparse map from dyadic rectangles to scalars; keys are
    (level1, pos1, level2, pos2), absent keys are zero."""

    depth1: int
    depth2: int
    values: dict[tuple[int, int, int, int], float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for l1, q1, l2, q2 in self.values:
            ok = 0 <= l1 <= self.depth1 and 0 <= q1 < (1 << l1)
            ok = ok and 0 <= l2 <= self.depth2 and 0 <= q2 < (1 << l2)
            if not ok:
                raise ValueError(f"key ({l1}, {q1}, {l2}, {q2}) outside the rectangle tree")

    @property
    def grid(self) -> Grid:
        return Grid(self.depth1, self.depth2)

    def rectangles(self):
        for (l1, q1, l2, q2), v in self.values.items():
            yield DyadicRectangle(DyadicInterval(1, l1, q1), DyadicInterval(2, l2, q2)), v

    def scaled(self, factor: float) -> "RectangleCoeffs":
        return RectangleCoeffs(
            self.depth1, self.depth2, {k: v * factor for k, v in self.values.items()}
        )


def seq_bmo(coeffs: IntervalCoeffs) -> float:
    """Square-sum oscillation norm of an interval-indexed sequence: sup over
    test intervals of (|K0|^-1 sum over subintervals of squares)^(1/2)."""
    depth = coeffs.depth
    # subtree[level][pos] = sum of |a|^2 over intervals contained in (level, pos)
    subtree = [np.zeros(1 << level) for level in range(depth + 1)]
    for (level, pos), v in coeffs.values.items():
        subtree[level][pos] += abs(v) ** 2
    for level in range(depth, 0, -1):
        subtree[level - 1] += subtree[level][0::2] + subtree[level][1::2]
    best = 0.0
    for level in range(depth + 1):
        best = max(best, float(subtree[level].max()) * float(2.0**level))
    return math.sqrt(best)


@dataclass(frozen=True)
class ProductBMOResult:
    value: float
    strategy: str
    exact: bool

    def __float__(self) -> float:
        return self.value


def _rect_masks_and_weights(coeffs: RectangleCoeffs, grid: Grid):
    masks = []
    squares = []
    n2 = grid.shape[1]
    for rect, v in coeffs.rectangles():
        sl1, sl2 = rect.cell_slices(grid)
        mask = 0
        for i in range(sl1.start, sl1.stop):
            for j in range(sl2.start, sl2.stop):
                mask |= 1 << (i * n2 + j)
        masks.append(mask)
        squares.append(abs(v) ** 2)
    return masks, squares


def _bmo_over_cell_sets(coeffs: RectangleCoeffs, grid: Grid, cell_sets) -> float:
    """Max over the given cell-index sets of the normalized subordinate sum."""
    cell_measure = grid.cell_measure
    rect_cells = []
    squares = []
    for rect, v in coeffs.rectangles():
        sl1, sl2 = rect.cell_slices(grid)
        cells = frozenset(
            (i, j) for i in range(sl1.start, sl1.stop) for j in range(sl2.start, sl2.stop)
        )
        rect_cells.append(cells)
        squares.append(abs(v) ** 2)
    best = 0.0
    for cells in cell_sets:
        if not cells:
            continue
        total = sum(s for rc, s in zip(rect_cells, squares) if rc <= cells)
        if total:
            best = max(best, total / (len(cells) * cell_measure))
    return math.sqrt(best)


def product_bmo(
    coeffs: RectangleCoeffs,
    strategy: str = "exhaustive",
    samples: int = 256,
    seed: int = 0,
) -> ProductBMOResult:
    """Oscillation norm of a rectangle-indexed sequence over open test sets
    realized as unions of finest cells.

    strategy "exhaustive" enumerates every nonempty cell union (exact; the
    grid must have at most EXHAUSTIVE_CELL_LIMIT cells).  strategy "sampled"
    scans all dyadic rectangles plus `samples` random cell unions and returns
    a certified lower bound.
    """
    grid = coeffs.grid
    n_cells = grid.cell_count
    if strategy == "exhaustive":
        if n_cells > EXHAUSTIVE_CELL_LIMIT:
            raise ValueError(
                f"exhaustive enumeration limited to {EXHAUSTIVE_CELL_LIMIT} cells, "
                f"grid has {n_cells}"
            )
        masks, squares = _rect_masks_and_weights(coeffs, grid)
        all_sets = np.arange(1, 1 << n_cells, dtype=np.uint64)
        totals = np.zeros(all_sets.shape)
        for mask, sq in zip(masks, squares):
            m = np.uint64(mask)
            totals[(all_sets & m) == m] += sq
        sizes = np.zeros(all_sets.shape)
        for bit in range(n_cells):
            sizes += (all_sets >> np.uint64(bit)) & np.uint64(1)
        value = math.sqrt(float((totals / (sizes * grid.cell_measure)).max()))
        return ProductBMOResult(value, "exhaustive", True)
    if strategy == "sampled":
        n1, n2 = grid.shape
        cell_sets = []
        for rect in grid.rectangles():
            sl1, sl2 = rect.cell_slices(grid)
            cell_sets.append(frozenset(
                (i, j) for i in range(sl1.start, sl1.stop) for j in range(sl2.start, sl2.stop)
            ))
        rng = np.random.default_rng(seed)
        all_cells = [(i, j) for i in range(n1) for j in range(n2)]
        for _ in range(samples):
            keep = rng.random(n_cells) < rng.uniform(0.1, 0.9)
            chosen = frozenset(c for c, k in zip(all_cells, keep) if k)
            if chosen:
                cell_sets.append(chosen)
        value = _bmo_over_cell_sets(coeffs, grid, cell_sets)
        return ProductBMOResult(value, "sampled", False)
    raise ValueError(f"unknown strategy {strategy!r}")


def little_bmo(b: GridFunction) -> float:
    """Sup over dyadic rectangles of the mean oscillation of b."""
    grid = b.grid
    if np.iscomplexobj(b.values):
        raise ValueError("oscillation norm defined for real functions")
    best = 0.0
    v = b.values
    n1, n2 = grid.shape
    for l1 in range(grid.depth1 + 1):
        for l2 in range(grid.depth2 + 1):
            blocks = v.reshape(1 << l1, n1 >> l1, 1 << l2, n2 >> l2)
            means = blocks.mean(axis=(1, 3), keepdims=True)
            osc = np.abs(blocks - means).mean(axis=(1, 3))
            best = max(best, float(osc.max()))
    return best


def slice_oscillation(b: GridFunction) -> tuple[float, float]:
    """Diagnostic: max over coordinate slices of the one-parameter dyadic
    oscillation norm in the other variable."""
    if np.iscomplexobj(b.values):
        raise ValueError("oscillation norm defined for real functions")

    def one_param(vals: np.ndarray, depth: int) -> float:
        best = 0.0
        for lev in range(depth + 1):
            blocks = vals.reshape(1 << lev, len(vals) >> lev)
            means = blocks.mean(axis=1, keepdims=True)
            best = max(best, float(np.abs(blocks - means).mean(axis=1).max()))
        return best

    grid = b.grid
    n1, n2 = grid.shape
    by_x1 = max(one_param(b.values[i, :], grid.depth2) for i in range(n1))
    by_x2 = max(one_param(b.values[:, j], grid.depth1) for j in range(n2))
    return by_x1, by_x2


def _square_density_l1(coeffs) -> float:
    """L1 norm of (sum over keys of |b|^2 1_K / |K|)^(1/2)."""
    if isinstance(coeffs, IntervalCoeffs):
        n = 1 << coeffs.depth
        dens = np.zeros(n)
        for (level, pos), v in coeffs.values.items():
            width = n >> level
            dens[pos * width:(pos + 1) * width] += abs(v) ** 2 * 2.0**level
        return float(np.sqrt(dens).mean())
    grid = coeffs.grid
    dens = np.zeros(grid.shape)
    for rect, v in coeffs.rectangles():
        sl = rect.cell_slices(grid)
        dens[sl] += abs(v) ** 2 / rect.measure
    return float(np.sqrt(dens).mean())


def h1_pairing_ratio(a, b, strategy: str = "exhaustive") -> float:
    """Empirical constant of the pairing bound: the absolute coefficient
    pairing sum over the oscillation norm of `a` times the L1 norm of the
    square density of `b`.

    Both arguments are IntervalCoeffs over the same tree or RectangleCoeffs
    over the same grid; `strategy` selects the product-norm evaluation for
    the rectangle case (sampled gives a lower-bound denominator, hence an
    upper estimate of the ratio).
    """
    if isinstance(a, IntervalCoeffs) != isinstance(b, IntervalCoeffs):
        raise TypeError("both sequences must be interval- or rectangle-indexed")
    if isinstance(a, IntervalCoeffs):
        if (a.param, a.depth) != (b.param, b.depth):
            raise ValueError("sequences must share one interval tree")
        if not b.values:
            raise ValueError("the square-density sequence must not vanish")
        numerator = sum(abs(v) * abs(b.get(*key)) for key, v in a.values.items())
        norm_a = seq_bmo(a)
    else:
        if (a.depth1, a.depth2) != (b.depth1, b.depth2):
            raise ValueError("sequences must share one grid")
        if not b.values:
            raise ValueError("the square-density sequence must not vanish")
        numerator = sum(abs(v) * abs(b.values.get(key, 0.0)) for key, v in a.values.items())
        norm_a = product_bmo(a, strategy=strategy).value
    if numerator == 0.0:
        return 0.0
    return numerator / (norm_a * _square_density_l1(b))
