"""Maximal functions and the square-function family.

The pointwise suprema descend the tower of dyadic rectangles containing each
cell (one candidate per level pair), which matches brute-force enumeration
exactly on a finite grid.  Square-function aggregations are organised per
level pair through the martingale level layers: differences of one level have
pairwise disjoint supports, so per-block absolute values and squares can be
read off the layer functions without enumerating individual rectangles.
"""

from __future__ import annotations

import math

import numpy as np

from .grid import (
    Grid,
    GridFunction,
    GridMismatchError,
    bilevel_layer,
    dyadic_tables,
    expand_table,
    level_layer,
    lp_norm,
)

__all__ = [
    "maximal",
    "weighted_maximal",
    "square_full",
    "square_param",
    "square_block",
    "a1k",
    "a2k",
    "a3k",
    "vv_block_square_ratio",
]


def _common_grid(fs) -> Grid:
    if not fs:
        raise ValueError("at least one function required")
    grid = fs[0].grid
    for f in fs[1:]:
        if f.grid != grid:
            raise GridMismatchError("all inputs must share one grid")
    return grid


def maximal(fs: list[GridFunction]) -> GridFunction:
    """Pointwise sup over containing dyadic rectangles of the product of
    absolute averages, one factor per input."""
    grid = _common_grid(fs)
    tables = [dyadic_tables(abs(f)) for f in fs]
    out = np.full(grid.shape, -math.inf)
    for l1 in range(grid.depth1 + 1):
        for l2 in range(grid.depth2 + 1):
            prod = tables[0][l1][l2].copy()
            for t in tables[1:]:
                prod = prod * t[l1][l2]
            np.maximum(out, expand_table(prod, grid), out=out)
    return GridFunction(grid, out)


def weighted_maximal(f: GridFunction, mu: GridFunction) -> GridFunction:
    """Pointwise sup over containing dyadic rectangles of the mu-average of |f|."""
    if f.grid != mu.grid:
        raise GridMismatchError("function and measure must share one grid")
    if mu.values.min() <= 0:
        raise ValueError("measure density must be strictly positive")
    grid = f.grid
    num = dyadic_tables(GridFunction(grid, np.abs(f.values) * mu.values))
    den = dyadic_tables(mu)
    out = np.full(grid.shape, -math.inf)
    for l1 in range(grid.depth1 + 1):
        for l2 in range(grid.depth2 + 1):
            np.maximum(out, expand_table(num[l1][l2] / den[l1][l2], grid), out=out)
    return GridFunction(grid, out)


def square_full(f: GridFunction) -> GridFunction:
    """Pointwise l2 aggregation of all bi-parameter martingale differences."""
    grid = f.grid
    acc = np.zeros(grid.shape)
    for l1 in range(grid.depth1):
        for l2 in range(grid.depth2):
            acc += np.abs(bilevel_layer(f, l1, l2).values) ** 2
    return GridFunction(grid, np.sqrt(acc))


def square_param(f: GridFunction, param: int) -> GridFunction:
    """One-parameter square function: l2 aggregation of the martingale
    differences of a single parameter."""
    grid = f.grid
    acc = np.zeros(grid.shape)
    for lev in range(grid.depth(param)):
        acc += np.abs(level_layer(f, param, lev).values) ** 2
    return GridFunction(grid, np.sqrt(acc))


def _block_groups(depth: int, k: int):
    """Groups of same-level intervals sharing a k-fold ancestor.

    Yields (source_level, cell_slice).  Ancestors inside the grid give one
    group per ancestor position; levels coarser than k have their ancestor
    above the unit interval, so each such level forms a single group.
    """
    n = 1 << depth
    for anc_level in range(depth - k):
        src = anc_level + k
        width = n >> anc_level
        for pos in range(1 << anc_level):
            yield src, slice(pos * width, (pos + 1) * width)
    for src in range(min(k, depth)):
        yield src, slice(0, n)


def square_block(f: GridFunction, k: tuple[int, int]) -> GridFunction:
    """Square function regrouped into martingale blocks of complexity k.

    Each block sums the differences whose k-fold ancestor is a common
    rectangle; the group sums are formed first and squared afterwards.  By
    disjointness of supports this coincides pointwise with the ungrouped
    square function.
    """
    k1, k2 = k
    grid = f.grid
    if k1 < 0 or k2 < 0 or k1 > grid.depth1 - 1 or k2 > grid.depth2 - 1:
        raise ValueError(f"block complexity {k} too large for depths "
                         f"({grid.depth1}, {grid.depth2})")
    layers: dict[tuple[int, int], np.ndarray] = {}
    acc = np.zeros(grid.shape)
    for l1, sl1 in _block_groups(grid.depth1, k1):
        for l2, sl2 in _block_groups(grid.depth2, k2):
            if (l1, l2) not in layers:
                layers[(l1, l2)] = bilevel_layer(f, l1, l2).values
            block = layers[(l1, l2)][sl1, sl2]
            acc[sl1, sl2] += np.abs(block) ** 2
    return GridFunction(grid, np.sqrt(acc))


# ---------------------------------------------------------------------------
# n-linear square-function family


def _abs_layer_tables(f: GridFunction, blocks: list[tuple[int, int]], cache: dict):
    """Mean tables of |layer| for a slot; blocks is a list of (param, k).

    Per level pair the blocked factor of a slot is the absolute value of the
    corresponding level layer(s), valid because same-level differences have
    disjoint supports.
    """
    key = (id(f), tuple(sorted(blocks)))
    if key in cache:
        return cache[key]
    grid = f.grid
    params = [b[0] for b in blocks]
    if len(params) != len(set(params)):
        raise ValueError("at most one block per parameter on a single slot")
    n_levels = (grid.depth1 + 1, grid.depth2 + 1)
    tables: dict[tuple[int, int], np.ndarray] = {}
    if not blocks:
        t = dyadic_tables(abs(f))
        for l1 in range(n_levels[0]):
            for l2 in range(n_levels[1]):
                tables[(l1, l2)] = t[l1][l2]
    elif len(blocks) == 1:
        param, k = blocks[0]
        depth = grid.depth(param)
        for lev in range(depth - k):
            layer = dyadic_tables(abs(level_layer(f, param, lev + k)))
            other = grid.depth2 if param == 1 else grid.depth1
            for lo in range(other + 1):
                if param == 1:
                    tables[(lev, lo)] = layer[lev][lo]
                else:
                    tables[(lo, lev)] = layer[lo][lev]
    else:
        ks = dict(blocks)
        for l1 in range(grid.depth1 - ks[1]):
            for l2 in range(grid.depth2 - ks[2]):
                layer = abs(bilevel_layer(f, l1 + ks[1], l2 + ks[2]))
                tables[(l1, l2)] = dyadic_tables(layer)[l1][l2]
    cache[key] = tables
    return tables


def _slot_blocks(n: int, block_specs: list[tuple[int, int, int]]):
    """block_specs entries are (param, slot, k); returns per-slot block lists."""
    per_slot: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for param, slot, k in block_specs:
        if param not in (1, 2):
            raise ValueError(f"parameter index must be 1 or 2, got {param}")
        if not 1 <= slot <= n:
            raise ValueError(f"slot {slot} out of range for {n} inputs")
        if k < 0:
            raise ValueError("block complexity must be non-negative")
        per_slot[slot - 1].append((param, k))
    return per_slot


def _product_tables(fs, per_slot, grid):
    """Per level pair, the product over slots of the blocked-average tables;
    level pairs where some block does not fit are skipped."""
    cache: dict = {}
    slot_tables = [_abs_layer_tables(f, blocks, cache) for f, blocks in zip(fs, per_slot)]
    for l1 in range(grid.depth1 + 1):
        for l2 in range(grid.depth2 + 1):
            if any((l1, l2) not in t for t in slot_tables):
                continue
            prod = slot_tables[0][(l1, l2)].copy()
            for t in slot_tables[1:]:
                prod = prod * t[(l1, l2)]
            yield (l1, l2), prod


def a1k(fs: list[GridFunction], k: tuple[int, int], assignment: tuple[int, int] = (1, 1)) -> GridFunction:
    """First square-function family member: l2 over rectangles of the product
    of blocked averages, the parameter-m block (complexity k[m-1]) sitting on
    slot assignment[m-1] (both may share a slot)."""
    grid = _common_grid(fs)
    n = len(fs)
    specs = [(1, assignment[0], k[0]), (2, assignment[1], k[1])]
    per_slot = _slot_blocks(n, specs)
    acc = np.zeros(grid.shape)
    for _, prod in _product_tables(fs, per_slot, grid):
        acc += expand_table(prod, grid) ** 2
    return GridFunction(grid, np.sqrt(acc))


def a2k(
    fs: list[GridFunction],
    k: tuple[int, int, int],
    assignment: tuple[int, int, int] = (1, 2, 3),
    orientation: int = 2,
) -> GridFunction:
    """Second family member: outer l2 over the `orientation` parameter, inner
    absolute sum over the other.

    The single block (complexity k[0]) lives in the outer parameter on slot
    assignment[0]; the two blocks (k[1], k[2]) live in the inner parameter on
    the distinct slots assignment[1], assignment[2].
    """
    grid = _common_grid(fs)
    n = len(fs)
    if orientation not in (1, 2):
        raise ValueError("orientation selects the outer parameter, 1 or 2")
    if len(set(assignment)) != 3:
        raise ValueError("the three blocks must sit on three distinct slots")
    outer, inner = orientation, 3 - orientation
    specs = [
        (outer, assignment[0], k[0]),
        (inner, assignment[1], k[1]),
        (inner, assignment[2], k[2]),
    ]
    per_slot = _slot_blocks(n, specs)
    products: dict[tuple[int, int], np.ndarray] = {
        key: prod for key, prod in _product_tables(fs, per_slot, grid)
    }
    outer_levels = sorted({key[outer - 1] for key in products})
    acc = np.zeros(grid.shape)
    for lo in outer_levels:
        inner_sum = np.zeros(grid.shape)
        for (l1, l2), prod in products.items():
            if (l1, l2)[outer - 1] != lo:
                continue
            inner_sum += expand_table(prod, grid)
        acc += inner_sum**2
    return GridFunction(grid, np.sqrt(acc))


def a3k(
    fs: list[GridFunction],
    k: tuple[int, int, int, int],
    assignment: tuple[tuple[int, int], tuple[int, int]] = ((1, 2), (1, 2)),
) -> GridFunction:
    """Third family member: absolute sum over rectangles with two blocks per
    parameter.

    Parameter 1 carries blocks of complexities (k[0], k[2]) on the distinct
    slots assignment[0]; parameter 2 carries (k[1], k[3]) on assignment[1].
    The canonical layout ((1, 2), (1, 2)) puts a full bi-parameter block on
    each of the first two slots.
    """
    grid = _common_grid(fs)
    n = len(fs)
    (s1a, s1b), (s2a, s2b) = assignment
    if s1a == s1b or s2a == s2b:
        raise ValueError("same-parameter blocks must sit on distinct slots")
    specs = [
        (1, s1a, k[0]),
        (2, s2a, k[1]),
        (1, s1b, k[2]),
        (2, s2b, k[3]),
    ]
    per_slot = _slot_blocks(n, specs)
    acc = np.zeros(grid.shape)
    for _, prod in _product_tables(fs, per_slot, grid):
        acc += expand_table(prod, grid)
    return GridFunction(grid, acc)


def vv_block_square_ratio(
    fs: list[GridFunction],
    u: GridFunction,
    p: float,
    s: float,
    k: tuple[int, int],
) -> float:
    """Ratio of the weighted vector-valued blocked square-function norm to the
    weighted vector norm.

    Left side: lp norm, with weight u^{1/p}, of the l^s aggregate over the
    family of the per-member square expression whose rectangle averages are
    damped by the u-average of the rectangle.  Right side: lp norm of the l^s
    aggregate of the family itself with weight u^{-1/p'}.  Returns 0 when the
    family vanishes; a vanishing right side with a non-vanishing left side is
    impossible and raises.
    """
    grid = _common_grid(list(fs) + [u])
    if not (1.0 < p < math.inf and 1.0 < s < math.inf):
        raise ValueError("exponents must lie in (1, inf)")
    if u.values.min() <= 0:
        raise ValueError("weight must be strictly positive")
    k1, k2 = k
    if k1 > grid.depth1 - 1 or k2 > grid.depth2 - 1:
        raise ValueError("block complexity too large for the grid depths")
    u_tables = dyadic_tables(u)
    inner = np.zeros(grid.shape)
    right_stack = np.zeros(grid.shape)
    for f in fs:
        acc = np.zeros(grid.shape)
        for l1 in range(grid.depth1 - k1):
            for l2 in range(grid.depth2 - k2):
                layer = abs(bilevel_layer(f, l1 + k1, l2 + k2))
                t = dyadic_tables(layer)[l1][l2] / u_tables[l1][l2]
                acc += expand_table(t, grid) ** 2
        inner += acc ** (s / 2.0)
        right_stack += np.abs(f.values) ** s
    left = lp_norm(
        GridFunction(grid, inner ** (1.0 / s) * u.values ** (1.0 / p)), p
    )
    pdual = p / (p - 1.0)
    right = lp_norm(
        GridFunction(grid, right_stack ** (1.0 / s) * u.values ** (-1.0 / pdual)), p
    )
    if right == 0.0:
        if left > 0.0:
            raise RuntimeError("square expression positive on vanishing input")
        return 0.0
    return left / right
