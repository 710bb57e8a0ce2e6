"""Dyadic model operators: shifts, partial paraproducts, full paraproducts,
their adjoints, and commutators.

Every operator is presented through its form against a final slot n+1: a sum
over ancestor rectangles K of coefficient-weighted products of Haar pairings.
Coefficients come from providers (callables keyed by K and the descendant
choices), not materialized tables; the default providers saturate the
admissible normalization with independent random signs so that norm-ratio
sweeps stress the inequalities.  Applications synthesize the slot-(n+1)
factor; forms contract every slot, giving an independent evaluation path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .bmo import RectangleCoeffs, product_bmo, EXHAUSTIVE_CELL_LIMIT
from .grid import (
    Grid,
    GridFunction,
    GridMismatchError,
    HaarTransform,
    haar_expand,
    _half_signs,
)

__all__ = [
    "ShiftSpec",
    "PartialParaproductSpec",
    "FullParaproductSpec",
    "SaturatingSignCoefficients",
    "TensorCoefficients",
    "BMOSaturatingSequences",
    "make_shift",
    "apply_shift",
    "shift_form",
    "shift_adjoint",
    "make_partial_paraproduct",
    "apply_partial_paraproduct",
    "partial_paraproduct_form",
    "partial_paraproduct_adjoint",
    "make_full_paraproduct",
    "apply_full_paraproduct",
    "full_paraproduct_form",
    "full_paraproduct_adjoint",
    "as_operator",
    "commutator",
    "commutator_operator",
    "commutator_contour",
    "operator_payload",
    "operator_from_payload",
]

_SHIFT_TAG = 101
_PARTIAL_TAG = 202
_FULL_TAG = 303


def _check_inputs(grid: Grid, fs, n: int):
    if len(fs) != n:
        raise ValueError(f"operator is {n}-linear, got {len(fs)} inputs")
    for f in fs:
        if f.grid != grid:
            raise GridMismatchError("inputs must live on the operator's grid")


def _result_dtype(fs) -> np.dtype:
    return np.result_type(np.float64, *(f.values.dtype for f in fs))


# ---------------------------------------------------------------------------
# shifts


def _shift_bound(complexity, n: int, l1: int, l2: int) -> float:
    """Admissible coefficient magnitude: product of the square roots of the
    descendant rectangle measures over the K measure to the n-th power."""
    log2 = n * (l1 + l2)
    for k1, k2 in complexity:
        log2 -= 0.5 * (l1 + k1 + l2 + k2)
    return 2.0**log2


@dataclass(frozen=True)
class SaturatingSignCoefficients:
    """Independent Rademacher signs times the saturating admissible bound,
    drawn from a per-K substream so evaluation order is irrelevant."""

    complexity: tuple[tuple[int, int], ...]
    n: int
    seed: int
    tag: int = _SHIFT_TAG

    def shape(self) -> tuple[int, ...]:
        out = []
        for k1, k2 in self.complexity:
            out.extend((1 << k1, 1 << k2))
        return tuple(out)

    def tensor(self, key: tuple[int, int, int, int]) -> np.ndarray:
        l1, q1, l2, q2 = key
        rng = np.random.default_rng(
            np.random.SeedSequence([self.seed, self.tag, l1, q1, l2, q2])
        )
        signs = rng.integers(0, 2, size=self.shape()) * 2.0 - 1.0
        return signs * _shift_bound(self.complexity, self.n, l1, l2)


@dataclass(frozen=True)
class TensorCoefficients:
    """User-supplied coefficient tensors clamped entrywise to the admissible
    bound (magnitudes above it are reduced, signs kept)."""

    fn: object  # callable key -> array broadcastable to the descendant shape
    complexity: tuple[tuple[int, int], ...]
    n: int

    def shape(self) -> tuple[int, ...]:
        out = []
        for k1, k2 in self.complexity:
            out.extend((1 << k1, 1 << k2))
        return tuple(out)

    def tensor(self, key: tuple[int, int, int, int]) -> np.ndarray:
        l1, q1, l2, q2 = key
        raw = np.broadcast_to(np.asarray(self.fn(key), dtype=float), self.shape())
        bound = _shift_bound(self.complexity, self.n, l1, l2)
        return np.sign(raw) * np.minimum(np.abs(raw), bound)


@dataclass(frozen=True)
class _PermutedShiftCoefficients:
    base: object
    axis1: tuple[int, int]  # swapped axes for the first-parameter exchange
    axis2: tuple[int, int]

    def tensor(self, key) -> np.ndarray:
        t = self.base.tensor(key)
        if self.axis1[0] != self.axis1[1]:
            t = np.swapaxes(t, *self.axis1)
        if self.axis2[0] != self.axis2[1]:
            t = np.swapaxes(t, *self.axis2)
        return t


@dataclass(frozen=True)
class ShiftSpec:
    """n-linear bi-parameter shift: complexity pairs per slot, per-parameter
    cancellative slot sets (at least two each), and a coefficient provider."""

    grid: Grid
    n: int
    complexity: tuple[tuple[int, int], ...]
    cancellative: tuple[frozenset[int], frozenset[int]]
    coefficients: object
    seed: int | None = None
    mode: str = "custom"

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("shift must be at least 1-linear")
        if len(self.complexity) != self.n + 1:
            raise ValueError("one complexity pair per slot including the output slot")
        for c in self.cancellative:
            if len(c) < 2:
                raise ValueError("each parameter needs at least two cancellative slots")
            if not all(1 <= j <= self.n + 1 for j in c):
                raise ValueError("cancellative slot indices out of range")
        k1 = max(k for k, _ in self.complexity)
        k2 = max(k for _, k in self.complexity)
        if self.grid.depth1 - 1 - k1 < 0 or self.grid.depth2 - 1 - k2 < 0:
            raise ValueError(
                f"complexity {self.complexity} exceeds grid depths "
                f"({self.grid.depth1}, {self.grid.depth2})"
            )

    def eta(self, slot: int, param: int) -> int:
        return 1 if slot in self.cancellative[param - 1] else 0

    def ancestor_keys(self):
        k1 = max(k for k, _ in self.complexity)
        k2 = max(k for _, k in self.complexity)
        for l1 in range(self.grid.depth1 - k1):
            for q1 in range(1 << l1):
                for l2 in range(self.grid.depth2 - k2):
                    for q2 in range(1 << l2):
                        yield (l1, q1, l2, q2)

    def term_count(self) -> int:
        per_k = 1
        for k1, k2 in self.complexity:
            per_k *= 1 << (k1 + k2)
        return sum(1 for _ in self.ancestor_keys()) * per_k


def make_shift(
    grid: Grid,
    n: int,
    complexity,
    seed: int = 0,
    cancellative=None,
    coefficients=None,
) -> ShiftSpec:
    """Build a shift; a single (k1, k2) pair applies to every slot, and the
    default pattern makes every slot cancellative in both parameters."""
    complexity = _normalize_complexity(complexity, n)
    if cancellative is None:
        allslots = frozenset(range(1, n + 2))
        cancellative = (allslots, allslots)
    else:
        cancellative = (frozenset(cancellative[0]), frozenset(cancellative[1]))
    mode = "custom"
    if coefficients is None:
        coefficients = SaturatingSignCoefficients(complexity, n, seed)
        mode = "saturating_signs"
    return ShiftSpec(grid, n, complexity, cancellative, coefficients, seed, mode)


def _normalize_complexity(complexity, n: int) -> tuple[tuple[int, int], ...]:
    complexity = tuple(complexity) if not isinstance(complexity, tuple) else complexity
    if len(complexity) == 2 and all(isinstance(c, int) for c in complexity):
        return ((int(complexity[0]), int(complexity[1])),) * (n + 1)
    out = tuple((int(a), int(b)) for a, b in complexity)
    if len(out) != n + 1:
        raise ValueError(f"expected one pair or {n + 1} pairs, got {len(out)}")
    return out


def _descendant_block(table: np.ndarray, q1: int, k1: int, q2: int, k2: int) -> np.ndarray:
    rows = slice(q1 << k1, (q1 + 1) << k1)
    cols = slice(q2 << k2, (q2 + 1) << k2)
    return table[rows, cols]


def _shift_accumulate(spec: ShiftSpec, fs, out_slot_fn):
    """Shared K-loop: contract the first n slots against the coefficient
    tensor and hand the resulting slot-(n+1) block to out_slot_fn."""
    transforms = [HaarTransform(f) for f in fs]
    kn1, kn2 = spec.complexity[spec.n]
    e_out = (spec.eta(spec.n + 1, 1), spec.eta(spec.n + 1, 2))
    for key in spec.ancestor_keys():
        l1, q1, l2, q2 = key
        t = np.asarray(spec.coefficients.tensor(key))
        for j in range(spec.n):
            kj1, kj2 = spec.complexity[j]
            table = transforms[j].table(
                l1 + kj1, spec.eta(j + 1, 1), l2 + kj2, spec.eta(j + 1, 2)
            )
            block = _descendant_block(table, q1, kj1, q2, kj2)
            t = np.tensordot(block, t, axes=([0, 1], [0, 1]))
        out_slot_fn(key, (l1 + kn1, e_out[0], l2 + kn2, e_out[1]), t)


def apply_shift(spec: ShiftSpec, fs) -> GridFunction:
    """Evaluate the shift against the first n slots and synthesize the output."""
    _check_inputs(spec.grid, fs, spec.n)
    dtype = _result_dtype(fs)
    tables: dict[tuple[int, int, int, int], np.ndarray] = {}

    def accumulate(key, out_key, block):
        l1, q1, l2, q2 = key
        lo1, e1, lo2, e2 = out_key
        if out_key not in tables:
            tables[out_key] = np.zeros((1 << lo1, 1 << lo2), dtype=dtype)
        kn1, kn2 = spec.complexity[spec.n]
        rows = slice(q1 << kn1, (q1 + 1) << kn1)
        cols = slice(q2 << kn2, (q2 + 1) << kn2)
        tables[out_key][rows, cols] += block

    _shift_accumulate(spec, fs, accumulate)
    if not tables:
        return GridFunction(spec.grid, np.zeros(spec.grid.shape, dtype=dtype))
    return haar_expand(spec.grid, tables)


def shift_form(spec: ShiftSpec, fs, g: GridFunction) -> float | complex:
    """Coefficient-side evaluation of the (n+1)-linear form; agrees with the
    pairing of apply_shift against the last argument."""
    _check_inputs(spec.grid, list(fs) + [g], spec.n + 1)
    gt = HaarTransform(g)
    kn1, kn2 = spec.complexity[spec.n]
    total = 0.0

    def accumulate(key, out_key, block):
        nonlocal total
        l1, q1, l2, q2 = key
        lo1, e1, lo2, e2 = out_key
        gblock = _descendant_block(gt.table(lo1, e1, lo2, e2), q1, kn1, q2, kn2)
        total += (block * gblock).sum()

    _shift_accumulate(spec, fs, accumulate)
    return total


def shift_adjoint(spec: ShiftSpec, j1: int, j2: int) -> ShiftSpec:
    """Adjoint exchanging slot j1 with n+1 in the first parameter and slot j2
    with n+1 in the second (0 leaves a parameter untouched)."""
    n = spec.n
    for j in (j1, j2):
        if not 0 <= j <= n:
            raise ValueError(f"adjoint slot must lie in 0..{n}, got {j}")

    def slot_swap(j):
        perm = list(range(n + 1))
        if j != 0:
            perm[j - 1], perm[n] = perm[n], perm[j - 1]
        return perm

    perm1, perm2 = slot_swap(j1), slot_swap(j2)
    complexity = tuple(
        (spec.complexity[perm1[j]][0], spec.complexity[perm2[j]][1]) for j in range(n + 1)
    )

    def swap_set(slots, j):
        if j == 0:
            return slots
        out = set()
        for s in slots:
            if s == j:
                out.add(n + 1)
            elif s == n + 1:
                out.add(j)
            else:
                out.add(s)
        return frozenset(out)

    cancellative = (
        swap_set(spec.cancellative[0], j1),
        swap_set(spec.cancellative[1], j2),
    )
    axis1 = (2 * (j1 - 1), 2 * n) if j1 else (0, 0)
    axis2 = (2 * (j2 - 1) + 1, 2 * n + 1) if j2 else (0, 0)
    coefficients = _PermutedShiftCoefficients(spec.coefficients, axis1, axis2)
    return replace(
        spec, complexity=complexity, cancellative=cancellative,
        coefficients=coefficients, mode="adjoint",
    )


# ---------------------------------------------------------------------------
# partial paraproducts


def _dense_seq_bmo(level_arrays: list[np.ndarray]) -> float:
    """Oscillation norm of a sequence stored as one array per level (levels
    run from the root down; test intervals of every level are scanned)."""
    if not level_arrays:
        return 0.0
    best = 0.0
    cum = np.abs(level_arrays[-1]) ** 2
    depth = len(level_arrays)
    best = max(best, float(cum.max()) * 2.0 ** (depth - 1))
    for level in range(depth - 2, -1, -1):
        cum = np.abs(level_arrays[level]) ** 2 + cum[0::2] + cum[1::2]
        best = max(best, float(cum.max()) * 2.0**level)
    return math.sqrt(best)


def _pp_bound(complexity, n: int, l1: int) -> float:
    log2 = n * l1
    for k in complexity:
        log2 -= 0.5 * (l1 + k)
    return 2.0**log2


@dataclass(frozen=True)
class BMOSaturatingSequences:
    """Per-(ancestor, descendants) random coefficient sequences over the
    paraproduct parameter, rescaled so the oscillation norm saturates the
    admissible bound.  Values at level l are damped by 2**(-l/2) so every
    scale contributes comparably before rescaling."""

    complexity: tuple[int, ...]
    n: int
    para_depth: int
    seed: int
    tag: int = _PARTIAL_TAG

    def level_arrays(self, anc: tuple[int, int], combo: tuple[int, ...]) -> list[np.ndarray]:
        l1, q1 = anc
        rng = np.random.default_rng(
            np.random.SeedSequence([self.seed, self.tag, l1, q1, *combo])
        )
        arrs = [
            rng.normal(size=1 << lev) * 2.0 ** (-lev / 2.0)
            for lev in range(self.para_depth)
        ]
        norm = _dense_seq_bmo(arrs)
        scale = _pp_bound(self.complexity, self.n, l1) / norm
        return [a * scale for a in arrs]


@dataclass(frozen=True)
class SequenceCoefficients:
    """User-supplied sequences rescaled down when they exceed the bound."""

    fn: object  # callable (anc, combo) -> list of per-level arrays
    complexity: tuple[int, ...]
    n: int
    para_depth: int

    def level_arrays(self, anc, combo) -> list[np.ndarray]:
        arrs = [np.asarray(a, dtype=float) for a in self.fn(anc, combo)]
        if len(arrs) != self.para_depth or any(
            len(a) != 1 << lev for lev, a in enumerate(arrs)
        ):
            raise ValueError("sequence arrays must cover levels 0..para_depth-1")
        norm = _dense_seq_bmo(arrs)
        bound = _pp_bound(self.complexity, self.n, anc[0])
        if norm > bound > 0:
            arrs = [a * (bound / norm) for a in arrs]
        return arrs


@dataclass(frozen=True)
class _PermutedSequences:
    base: object
    perm: tuple[int, ...]

    def level_arrays(self, anc, combo):
        return self.base.level_arrays(anc, tuple(combo[p] for p in self.perm))


@dataclass(frozen=True)
class PartialParaproductSpec:
    """Shift structure in one parameter, paraproduct structure in the other.

    complexity holds one scalar per slot (shift parameter only); cancellative
    is the shift-parameter pattern; para_slot carries the cancellative Haar
    of the paraproduct parameter, every other slot the normalized indicator.
    """

    grid: Grid
    n: int
    shift_param: int
    complexity: tuple[int, ...]
    cancellative: frozenset[int]
    para_slot: int
    coefficients: object
    seed: int | None = None
    mode: str = "custom"

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("operator must be at least 1-linear")
        if self.shift_param not in (1, 2):
            raise ValueError("shift parameter must be 1 or 2")
        if len(self.complexity) != self.n + 1:
            raise ValueError("one complexity entry per slot including the output slot")
        if len(self.cancellative) < 2:
            raise ValueError("the shift parameter needs at least two cancellative slots")
        if not 1 <= self.para_slot <= self.n + 1:
            raise ValueError("paraproduct slot out of range")
        shift_depth = self.grid.depth(self.shift_param)
        para_depth = self.grid.depth(3 - self.shift_param)
        if shift_depth - 1 - max(self.complexity) < 0:
            raise ValueError("complexity exceeds the shift-parameter depth")
        if para_depth < 1:
            raise ValueError("paraproduct parameter needs depth at least 1")

    def eta(self, slot: int) -> int:
        return 1 if slot in self.cancellative else 0

    @property
    def para_depth(self) -> int:
        return self.grid.depth(3 - self.shift_param)

    def ancestor_keys(self):
        kmax = max(self.complexity)
        for l1 in range(self.grid.depth(self.shift_param) - kmax):
            for q1 in range(1 << l1):
                yield (l1, q1)

    def term_count(self) -> int:
        per_anc = 1
        for k in self.complexity:
            per_anc *= 1 << k
        n_anc = sum(1 for _ in self.ancestor_keys())
        return n_anc * per_anc * ((1 << self.para_depth) - 1)


def make_partial_paraproduct(
    grid: Grid,
    n: int,
    shift_param: int,
    complexity,
    seed: int = 0,
    cancellative=None,
    para_slot: int | None = None,
    coefficients=None,
) -> PartialParaproductSpec:
    """Build a partial paraproduct; a single integer complexity applies to
    every slot, the default pattern is all-cancellative in the shift
    parameter, and the default paraproduct slot is the output slot."""
    if isinstance(complexity, int):
        complexity = (complexity,) * (n + 1)
    complexity = tuple(int(k) for k in complexity)
    if cancellative is None:
        cancellative = frozenset(range(1, n + 2))
    else:
        cancellative = frozenset(cancellative)
    if para_slot is None:
        para_slot = n + 1
    para_depth = grid.depth(3 - shift_param)
    mode = "custom"
    if coefficients is None:
        coefficients = BMOSaturatingSequences(complexity, n, para_depth, seed)
        mode = "bmo_saturating"
    return PartialParaproductSpec(
        grid, n, shift_param, complexity, cancellative, para_slot, coefficients, seed, mode
    )


def _flip_grid(grid: Grid) -> Grid:
    return Grid(grid.depth2, grid.depth1)


def _flip_function(f: GridFunction) -> GridFunction:
    return GridFunction(_flip_grid(f.grid), f.values.T)


def _mean_pyramid_1d(arr: np.ndarray, depth: int) -> list[np.ndarray]:
    out = [None] * (depth + 1)
    out[depth] = arr
    cur = arr
    for lev in range(depth - 1, -1, -1):
        cur = 0.5 * (cur[0::2] + cur[1::2])
        out[lev] = cur
    return out


def _haar_levels_1d(arr: np.ndarray, depth: int) -> list[np.ndarray]:
    """Cancellative Haar pairings of a cell profile, one array per level."""
    sums = [None] * (depth + 1)
    sums[depth] = arr
    cur = arr
    for lev in range(depth - 1, -1, -1):
        cur = cur[0::2] + cur[1::2]
        sums[lev] = cur
    out = []
    for lev in range(depth):
        nxt = sums[lev + 1]
        out.append((nxt[0::2] - nxt[1::2]) * 2.0 ** (lev / 2.0 - depth))
    return out


def _pp_accumulate(spec: PartialParaproductSpec, fs, consume):
    """Shared loop for a shift-parameter-1 operator.

    consume(anc, d_out, coeff_levels) receives, per ancestor and output
    descendant offset, the per-level output coefficients against the
    paraproduct parameter (already multiplied through slots 1..n).
    """
    grid = spec.grid
    n = spec.n
    depth2 = spec.para_depth
    transforms = [HaarTransform(f) for f in fs]
    combos = _combo_iter(spec.complexity[:n])
    for anc in spec.ancestor_keys():
        l1, q1 = anc
        slot_levels: list[list[np.ndarray]] = []
        for j in range(n):
            kj = spec.complexity[j]
            stable = transforms[j].slice_table(1, l1 + kj, spec.eta(j + 1))
            rows = [stable[(q1 << kj) + d] for d in range(1 << kj)]
            if j + 1 == spec.para_slot:
                slot_levels.append([_haar_levels_1d(r, depth2) for r in rows])
            else:
                pyramids = [_mean_pyramid_1d(r, depth2) for r in rows]
                slot_levels.append([p[:depth2] for p in pyramids])
        kn = spec.complexity[n]
        for combo in combos:
            for d_out in range(1 << kn):
                key_combo = combo + (d_out,)
                coeff = list(spec.coefficients.level_arrays(anc, key_combo))
                for j in range(n):
                    levels_j = slot_levels[j][combo[j]]
                    for lev in range(depth2):
                        coeff[lev] = coeff[lev] * levels_j[lev]
                consume(anc, d_out, coeff)


def _combo_iter(ks):
    combos = [()]
    for k in ks:
        combos = [c + (d,) for c in combos for d in range(1 << k)]
    return combos


def _apply_pp_param1(spec: PartialParaproductSpec, fs) -> GridFunction:
    grid = spec.grid
    n = spec.n
    n1, n2 = grid.shape
    depth2 = spec.para_depth
    dtype = _result_dtype(fs)
    out = np.zeros(grid.shape, dtype=dtype)
    kn = spec.complexity[n]
    e_out = spec.eta(n + 1)
    sign_cache: dict[int, np.ndarray] = {}

    def consume(anc, d_out, coeff_levels):
        l1, q1 = anc
        lev_out = l1 + kn
        # paraproduct-parameter profile of the output slot
        t = np.zeros(n2, dtype=dtype)
        for lev in range(depth2):
            c = coeff_levels[lev]
            if spec.para_slot == n + 1:
                expanded = np.repeat(c * 2.0 ** (lev / 2.0), n2 >> lev)
                expanded = expanded * _half_signs(grid.depth2, lev)
            else:
                expanded = np.repeat(c * 2.0**lev, n2 >> lev)
            t += expanded
        pos = (q1 << kn) + d_out
        width = n1 >> lev_out
        rows = slice(pos * width, (pos + 1) * width)
        scale = 2.0 ** (lev_out / 2.0)
        if e_out:
            if lev_out not in sign_cache:
                sign_cache[lev_out] = _half_signs(grid.depth1, lev_out)
            pattern = sign_cache[lev_out][rows] * scale
        else:
            pattern = np.full(width, scale)
        out[rows, :] += pattern[:, None] * t[None, :]

    _pp_accumulate(spec, fs, consume)
    return GridFunction(grid, out)


def apply_partial_paraproduct(spec: PartialParaproductSpec, fs) -> GridFunction:
    _check_inputs(spec.grid, fs, spec.n)
    if spec.shift_param == 1:
        return _apply_pp_param1(spec, fs)
    flipped = replace(spec, grid=_flip_grid(spec.grid), shift_param=1)
    out = _apply_pp_param1(flipped, [_flip_function(f) for f in fs])
    return _flip_function(out)


def _pp_form_param1(spec: PartialParaproductSpec, fs, g) -> float | complex:
    depth2 = spec.para_depth
    gt = HaarTransform(g)
    n = spec.n
    kn = spec.complexity[n]
    total = 0.0

    def consume(anc, d_out, coeff_levels):
        nonlocal total
        l1, q1 = anc
        row = gt.slice_table(1, l1 + kn, spec.eta(n + 1))[(q1 << kn) + d_out]
        if spec.para_slot == n + 1:
            glevels = _haar_levels_1d(row, depth2)
        else:
            glevels = _mean_pyramid_1d(row, depth2)[:depth2]
        for lev in range(depth2):
            total += (coeff_levels[lev] * glevels[lev]).sum()

    _pp_accumulate(spec, fs, consume)
    return total


def partial_paraproduct_form(spec: PartialParaproductSpec, fs, g) -> float | complex:
    _check_inputs(spec.grid, list(fs) + [g], spec.n + 1)
    if spec.shift_param == 1:
        return _pp_form_param1(spec, fs, g)
    flipped = replace(spec, grid=_flip_grid(spec.grid), shift_param=1)
    return _pp_form_param1(
        flipped, [_flip_function(f) for f in fs], _flip_function(g)
    )


def partial_paraproduct_adjoint(spec: PartialParaproductSpec, j: int) -> PartialParaproductSpec:
    """Full adjoint exchanging slot j with the output slot in both parameters."""
    n = spec.n
    if not 1 <= j <= n:
        raise ValueError(f"adjoint slot must lie in 1..{n}, got {j}")
    perm = list(range(n + 1))
    perm[j - 1], perm[n] = perm[n], perm[j - 1]
    complexity = tuple(spec.complexity[p] for p in perm)
    cancellative = set()
    for s in spec.cancellative:
        if s == j:
            cancellative.add(n + 1)
        elif s == n + 1:
            cancellative.add(j)
        else:
            cancellative.add(s)
    para_slot = spec.para_slot
    if para_slot == j:
        para_slot = n + 1
    elif para_slot == n + 1:
        para_slot = j
    coefficients = _PermutedSequences(spec.coefficients, tuple(perm))
    return replace(
        spec, complexity=complexity, cancellative=frozenset(cancellative),
        para_slot=para_slot, coefficients=coefficients, mode="adjoint",
    )


# ---------------------------------------------------------------------------
# full paraproducts


@dataclass(frozen=True)
class FullParaproductSpec:
    """Paraproduct structure in both parameters: one slot per parameter pairs
    with the cancellative Haar of K, all others with the normalized
    indicator; coefficients are a rectangle sequence of product oscillation
    norm at most one (strategy and exactness recorded)."""

    grid: Grid
    n: int
    para_slots: tuple[int, int]
    coefficients: RectangleCoeffs
    bmo_strategy: str
    bmo_exact: bool
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("operator must be at least 1-linear")
        for js in self.para_slots:
            if not 1 <= js <= self.n + 1:
                raise ValueError("paraproduct slot out of range")
        if self.grid.depth1 < 1 or self.grid.depth2 < 1:
            raise ValueError("both parameters need depth at least 1")
        if (self.coefficients.depth1, self.coefficients.depth2) != (
            self.grid.depth1, self.grid.depth2,
        ):
            raise ValueError("coefficient tree does not match the grid")
        for l1, _, l2, _ in self.coefficients.values:
            if l1 >= self.grid.depth1 or l2 >= self.grid.depth2:
                raise ValueError("coefficients must sit on rectangles with children")

    def term_count(self) -> int:
        return len(self.coefficients.values)


def make_full_paraproduct(
    grid: Grid,
    n: int,
    seed: int = 0,
    para_slots: tuple[int, int] | None = None,
    coefficients: RectangleCoeffs | None = None,
    support_size: int = 24,
    bmo_samples: int = 512,
) -> FullParaproductSpec:
    """Build a full paraproduct; default coefficients are random signs on a
    random sparse support, rescaled to unit product oscillation norm
    (exhaustively when the grid has at most 16 cells, sampled otherwise)."""
    if para_slots is None:
        para_slots = (n + 1, n + 1)
    rng = np.random.default_rng(np.random.SeedSequence([seed, _FULL_TAG]))
    if coefficients is None:
        keys = [
            (l1, q1, l2, q2)
            for l1 in range(grid.depth1)
            for q1 in range(1 << l1)
            for l2 in range(grid.depth2)
            for q2 in range(1 << l2)
        ]
        size = min(support_size, len(keys))
        chosen = rng.choice(len(keys), size=size, replace=False)
        values = {keys[i]: float(rng.integers(0, 2) * 2 - 1) for i in chosen}
        coefficients = RectangleCoeffs(grid.depth1, grid.depth2, values)
    strategy = "exhaustive" if grid.cell_count <= EXHAUSTIVE_CELL_LIMIT else "sampled"
    res = product_bmo(coefficients, strategy=strategy, samples=bmo_samples, seed=seed)
    if res.value > 0:
        coefficients = coefficients.scaled(1.0 / res.value)
    return FullParaproductSpec(
        grid, n, para_slots, coefficients, res.strategy, res.exact, seed
    )


def _fp_slot_pairing(transform: HaarTransform, key, slot: int, para_slots) -> float | complex:
    l1, q1, l2, q2 = key
    e1 = 1 if slot == para_slots[0] else 0
    e2 = 1 if slot == para_slots[1] else 0
    value = transform.table(l1, e1, l2, e2)[q1, q2]
    # indicator factors are |K^m|**-1/2 times the non-cancellative Haar
    scale = 2.0 ** ((0 if e1 else l1) / 2.0) * 2.0 ** ((0 if e2 else l2) / 2.0)
    return value * scale


def apply_full_paraproduct(spec: FullParaproductSpec, fs) -> GridFunction:
    _check_inputs(spec.grid, fs, spec.n)
    dtype = _result_dtype(fs)
    transforms = [HaarTransform(f) for f in fs]
    out_slot = spec.n + 1
    e1 = 1 if out_slot == spec.para_slots[0] else 0
    e2 = 1 if out_slot == spec.para_slots[1] else 0
    tables: dict[tuple[int, int, int, int], np.ndarray] = {}
    for (l1, q1, l2, q2), a in sorted(spec.coefficients.values.items()):
        term = complex(a) if np.issubdtype(dtype, np.complexfloating) else float(a)
        for j in range(spec.n):
            term = term * _fp_slot_pairing(transforms[j], (l1, q1, l2, q2), j + 1, spec.para_slots)
        term = term * 2.0 ** ((0 if e1 else l1) / 2.0) * 2.0 ** ((0 if e2 else l2) / 2.0)
        out_key = (l1, e1, l2, e2)
        if out_key not in tables:
            tables[out_key] = np.zeros((1 << l1, 1 << l2), dtype=dtype)
        tables[out_key][q1, q2] += term
    if not tables:
        return GridFunction(spec.grid, np.zeros(spec.grid.shape, dtype=dtype))
    return haar_expand(spec.grid, tables)


def full_paraproduct_form(spec: FullParaproductSpec, fs, g) -> float | complex:
    _check_inputs(spec.grid, list(fs) + [g], spec.n + 1)
    transforms = [HaarTransform(f) for f in fs] + [HaarTransform(g)]
    total = 0.0
    for key, a in sorted(spec.coefficients.values.items()):
        term = a
        for j in range(spec.n + 1):
            term = term * _fp_slot_pairing(transforms[j], key, j + 1, spec.para_slots)
        total += term
    return total


def full_paraproduct_adjoint(spec: FullParaproductSpec, j: int) -> FullParaproductSpec:
    """Full adjoint exchanging slot j with the output slot."""
    n = spec.n
    if not 1 <= j <= n:
        raise ValueError(f"adjoint slot must lie in 1..{n}, got {j}")

    def swap(slot):
        if slot == j:
            return n + 1
        if slot == n + 1:
            return j
        return slot

    return replace(spec, para_slots=(swap(spec.para_slots[0]), swap(spec.para_slots[1])))


# ---------------------------------------------------------------------------
# generic application, commutators


def as_operator(op):
    """Normalize a spec or callable into a callable fs -> GridFunction."""
    if isinstance(op, ShiftSpec):
        return lambda fs: apply_shift(op, fs)
    if isinstance(op, PartialParaproductSpec):
        return lambda fs: apply_partial_paraproduct(op, fs)
    if isinstance(op, FullParaproductSpec):
        return lambda fs: apply_full_paraproduct(op, fs)
    if callable(op):
        return op
    raise TypeError(f"not an operator: {type(op)!r}")


def commutator_operator(op, b: GridFunction, slot: int):
    """The commutator with multiplication by b in the given slot, as an
    operator; iterate for higher-order commutators."""
    apply = as_operator(op)

    def commuted(fs):
        fs = list(fs)
        if not 1 <= slot <= len(fs):
            raise ValueError(f"slot {slot} out of range for {len(fs)} inputs")
        direct = apply(fs)
        moved = list(fs)
        moved[slot - 1] = b * moved[slot - 1]
        return b * direct - apply(moved)

    return commuted


def commutator(op, b: GridFunction, slot: int, fs) -> GridFunction:
    """b T(f) minus T with b multiplied into the given slot."""
    return commutator_operator(op, b, slot)(fs)


def commutator_contour(
    op,
    b: GridFunction,
    slot: int,
    fs,
    delta: float,
    nodes: int = 64,
) -> GridFunction:
    """Commutator via trapezoidal contour quadrature of the conjugated family
    around a circle of radius delta.

    Conjugating the operator by exp(z b) in one slot gives a family entire in
    z whose derivative at zero is the commutator; the derivative is recovered
    by the Cauchy integral over |z| = delta, and the trapezoidal rule on the
    circle converges geometrically in the node count.  Too large a delta
    relative to max |b| overflows the exponentials; shrink it.
    """
    if delta <= 0:
        raise ValueError("contour radius must be positive")
    if nodes < 8:
        raise ValueError("at least 8 quadrature nodes required")
    apply = as_operator(op)
    fs = list(fs)
    if not 1 <= slot <= len(fs):
        raise ValueError(f"slot {slot} out of range for {len(fs)} inputs")
    grid = fs[0].grid
    acc = np.zeros(grid.shape, dtype=np.complex128)
    for t in range(nodes):
        z = delta * np.exp(2j * np.pi * t / nodes)
        damped = GridFunction(grid, np.exp(-z * b.values) * fs[slot - 1].values)
        args = list(fs)
        args[slot - 1] = damped
        tz = apply(args)
        acc += np.exp(z * b.values) * tz.values / z
    return GridFunction(grid, acc / nodes)


# ---------------------------------------------------------------------------
# serialization of seeded specs


def operator_payload(spec) -> dict:
    """JSON-ready description of a seeded default-provider operator."""
    if isinstance(spec, ShiftSpec):
        if spec.mode != "saturating_signs":
            raise ValueError("only default-provider shifts are serializable")
        return {
            "kind": "shift",
            "n": spec.n,
            "complexity": [list(c) for c in spec.complexity],
            "cancellative": [sorted(spec.cancellative[0]), sorted(spec.cancellative[1])],
            "coefficient_mode": spec.mode,
            "seed": spec.seed,
        }
    if isinstance(spec, PartialParaproductSpec):
        if spec.mode != "bmo_saturating":
            raise ValueError("only default-provider partial paraproducts are serializable")
        return {
            "kind": "partial_paraproduct",
            "n": spec.n,
            "shift_param": spec.shift_param,
            "complexity": list(spec.complexity),
            "cancellative": sorted(spec.cancellative),
            "para_slot": spec.para_slot,
            "coefficient_mode": spec.mode,
            "seed": spec.seed,
        }
    if isinstance(spec, FullParaproductSpec):
        return {
            "kind": "full_paraproduct",
            "n": spec.n,
            "para_slots": list(spec.para_slots),
            "coefficient_mode": "random_sparse",
            "seed": spec.seed,
            "bmo_strategy": spec.bmo_strategy,
        }
    raise TypeError(f"not a serializable operator spec: {type(spec)!r}")


def operator_from_payload(grid: Grid, payload: dict):
    kind = payload.get("kind")
    seed = int(payload.get("seed", 0))
    n = int(payload.get("n", 2))
    if kind == "shift":
        complexity = payload.get("complexity", (0, 0))
        if isinstance(complexity, list):
            complexity = (
                tuple(tuple(int(x) for x in c) for c in complexity)
                if complexity and isinstance(complexity[0], list)
                else tuple(int(x) for x in complexity)
            )
        cancellative = payload.get("cancellative")
        return make_shift(grid, n, complexity, seed, cancellative)
    if kind == "partial_paraproduct":
        complexity = payload.get("complexity", 0)
        if isinstance(complexity, list):
            complexity = tuple(int(x) for x in complexity)
        cancellative = payload.get("cancellative")
        para_slot = payload.get("para_slot")
        return make_partial_paraproduct(
            grid, n, int(payload.get("shift_param", 1)), complexity, seed,
            cancellative, para_slot,
        )
    if kind == "full_paraproduct":
        para_slots = payload.get("para_slots")
        return make_full_paraproduct(
            grid, n, seed,
            tuple(para_slots) if para_slots else None,
            support_size=int(payload.get("support_size", 24)),
        )
    raise ValueError(f"unknown operator kind {kind!r}")
