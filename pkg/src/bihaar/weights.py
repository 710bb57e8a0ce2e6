"""Weight classes and characteristics over dyadic rectangles.

All suprema run over the dyadic rectangles of the grid's fixed lattice, and
esssup/essinf are the exact cell max/min.  Exponents are stored as
reciprocals so that p = inf is the exact value 0 and formulas can branch on
it without floating-infinity arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import Grid, GridFunction, GridMismatchError, dyadic_tables

__all__ = [
    "ExponentTuple",
    "WeightTuple",
    "ap_constant",
    "multilinear_constant",
    "multilinear_term_range",
    "dual_tuple",
    "component_margins",
    "MarginRecord",
    "ap_mu_constant",
    "rubio_de_francia",
    "slice_characteristics",
    "sample_weight",
    "sample_tuple",
    "check_weight",
]


def check_weight(w: GridFunction) -> GridFunction:
    if np.iscomplexobj(w.values):
        raise ValueError("weights must be real")
    if w.values.min() <= 0:
        raise ValueError("weights must be strictly positive on every cell")
    return w


def _as_reciprocal(p) -> float:
    """Map an exponent in [1, inf] to its reciprocal in [0, 1]."""
    if p == math.inf:
        return 0.0
    p = float(p)
    if p < 1:
        raise ValueError(f"exponent must lie in [1, inf], got {p}")
    return 1.0 / p


@dataclass(frozen=True)
class ExponentTuple:
    """Exponents p_i in (1, inf] stored as reciprocals (0 encodes inf)."""

    reciprocals: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.reciprocals:
            raise ValueError("at least one exponent required")
        for r in self.reciprocals:
            if not 0.0 <= r < 1.0:
                raise ValueError(f"reciprocal {r} outside [0, 1): exponents must be in (1, inf]")

    @classmethod
    def of(cls, *exponents) -> "ExponentTuple":
        return cls(tuple(_as_reciprocal(p) for p in exponents))

    @property
    def n(self) -> int:
        return len(self.reciprocals)

    @property
    def target_reciprocal(self) -> float:
        return sum(self.reciprocals)

    @property
    def target(self) -> float:
        r = self.target_reciprocal
        return math.inf if r == 0.0 else 1.0 / r

    def exponents(self) -> tuple[float, ...]:
        return tuple(math.inf if r == 0.0 else 1.0 / r for r in self.reciprocals)


@dataclass(frozen=True)
class WeightTuple:
    """Tuple of strictly positive weights on a common grid."""

    weights: tuple[GridFunction, ...]

    def __post_init__(self) -> None:
        if not self.weights:
            raise ValueError("at least one weight required")
        grid = self.weights[0].grid
        for w in self.weights:
            check_weight(w)
            if w.grid != grid:
                raise GridMismatchError("all weights must share one grid")

    @property
    def grid(self) -> Grid:
        return self.weights[0].grid

    @property
    def n(self) -> int:
        return len(self.weights)

    def product(self) -> GridFunction:
        values = self.weights[0].values.copy()
        for w in self.weights[1:]:
            values = values * w.values
        return GridFunction(self.grid, values)


def _level_pairs(grid: Grid):
    for l1 in range(grid.depth1 + 1):
        for l2 in range(grid.depth2 + 1):
            yield l1, l2


def ap_constant(w: GridFunction, p: float) -> float:
    """Muckenhoupt characteristic over dyadic rectangles.

    p in (1, inf) uses the mean/dual-mean form, p = 1 the mean times the cell
    max of 1/w, and p = inf the exponential-logarithmic form.
    """
    check_weight(w)
    grid = w.grid
    mean_w = dyadic_tables(w)
    if p == 1:
        max_inv = dyadic_tables(GridFunction(grid, 1.0 / w.values), grid, reduce="max")
        return float(max(
            (mean_w[l1][l2] * max_inv[l1][l2]).max() for l1, l2 in _level_pairs(grid)
        ))
    if p == math.inf:
        mean_log_inv = dyadic_tables(GridFunction(grid, -np.log(w.values)))
        return float(max(
            (mean_w[l1][l2] * np.exp(mean_log_inv[l1][l2])).max()
            for l1, l2 in _level_pairs(grid)
        ))
    if not p > 1:
        raise ValueError(f"exponent must be 1, inf or in (1, inf), got {p}")
    dual = dyadic_tables(GridFunction(grid, w.values ** (-1.0 / (p - 1.0))))
    return float(max(
        (mean_w[l1][l2] * dual[l1][l2] ** (p - 1.0)).max() for l1, l2 in _level_pairs(grid)
    ))


def _normalize_exponents(exponents, n: int) -> tuple[float, ...]:
    """Accept an ExponentTuple or raw exponents in [1, inf]; return reciprocals.

    Raw input may include p_i = 1 (reciprocal 1), which the joint
    characteristic supports even though ExponentTuple excludes it.
    """
    if isinstance(exponents, ExponentTuple):
        recips = exponents.reciprocals
    else:
        recips = tuple(_as_reciprocal(p) for p in exponents)
    if len(recips) != n:
        raise ValueError(f"{n} weights but {len(recips)} exponents")
    return recips


def _multilinear_term_tables(wt: WeightTuple, recips: tuple[float, ...]):
    """Per-rectangle joint-characteristic terms, one table per level pair."""
    grid = wt.grid
    rp = sum(recips)
    w = wt.product()
    if rp == 0.0:
        prod_factor = dyadic_tables(w, reduce="max")
        combine_prod = lambda t: t  # noqa: E731
    else:
        p = 1.0 / rp
        prod_factor = dyadic_tables(GridFunction(grid, w.values**p))
        combine_prod = lambda t: t**rp  # noqa: E731
    slot_factors = []
    for wi, r in zip(wt.weights, recips):
        if r == 1.0:  # p_i = 1: dual factor degenerates to the cell max of 1/w_i
            tables = dyadic_tables(GridFunction(grid, 1.0 / wi.values), grid, reduce="max")
            slot_factors.append((tables, None))
        else:
            rdual = 1.0 - r
            pdual = 1.0 / rdual
            tables = dyadic_tables(GridFunction(grid, wi.values ** (-pdual)))
            slot_factors.append((tables, rdual))
    for l1, l2 in _level_pairs(grid):
        term = combine_prod(prod_factor[l1][l2])
        for tables, rdual in slot_factors:
            t = tables[l1][l2]
            term = term * (t if rdual is None else t**rdual)
        yield term


def _constant_from_recips(wt: WeightTuple, recips: tuple[float, ...]) -> float:
    return float(max(t.max() for t in _multilinear_term_tables(wt, recips)))


def multilinear_constant(wt: WeightTuple, exponents) -> float:
    """Joint characteristic of a weight tuple over dyadic rectangles."""
    return _constant_from_recips(wt, _normalize_exponents(exponents, wt.n))


def multilinear_term_range(wt: WeightTuple, exponents) -> tuple[float, float]:
    """(min, max) of the per-rectangle joint-characteristic term."""
    recips = _normalize_exponents(exponents, wt.n)
    lo = math.inf
    hi = -math.inf
    for t in _multilinear_term_tables(wt, recips):
        lo = min(lo, float(t.min()))
        hi = max(hi, float(t.max()))
    return lo, hi


def dual_tuple(wt: WeightTuple, pt: ExponentTuple, i: int) -> tuple[WeightTuple, ExponentTuple]:
    """Replace slot i by the reciprocal product weight and the dual target
    exponent; the joint characteristic is invariant under this transform.

    Requires every p_i finite (reciprocals in (0,1)) and target reciprocal in
    (0, 1]; the boundary value 1 uses the infinity convention in the dualized
    slot, under which the per-rectangle factor identity still holds exactly.
    """
    if not 0 <= i < wt.n:
        raise ValueError(f"slot index {i} out of range for n={wt.n}")
    recips = _normalize_exponents(pt, wt.n)
    rp = sum(recips)
    if not 0.0 < rp <= 1.0:
        raise ValueError("duality requires the target reciprocal in (0, 1]")
    if any(r == 0.0 or r == 1.0 for r in recips):
        raise ValueError("duality requires every exponent in (1, inf)")
    w = wt.product()
    new_weights = list(wt.weights)
    new_weights[i] = GridFunction(wt.grid, 1.0 / w.values)
    new_recips = list(recips)
    new_recips[i] = 1.0 - rp  # reciprocal of the conjugate target exponent
    return WeightTuple(tuple(new_weights)), ExponentTuple(tuple(new_recips))


@dataclass(frozen=True)
class MarginRecord:
    name: str
    lhs: float
    rhs: float

    @property
    def margin(self) -> float:
        """Relative slack (rhs - lhs) / rhs; nonnegative when lhs <= rhs."""
        return (self.rhs - self.lhs) / self.rhs


def component_margins(wt: WeightTuple, exponents) -> list[MarginRecord]:
    """Margins between the joint characteristic and the per-component
    characteristics it controls.

    For each slot the dual-power weight lies in the rectangle class of
    exponent n*p_i' with characteristic at most the joint one to the power
    p_i'; the product weight w^p lies in the class of exponent n*p with
    characteristic at most the joint one to the power p.  Conversely the
    joint characteristic is at most the product of the component ones.  Edge
    conventions: p_i = 1 compares the A_1 characteristic of w_i^{1/n} (to the
    n-th power) against the joint value, and p = inf does the same with
    w^{-1/n}.
    """
    recips = _normalize_exponents(exponents, wt.n)
    n = wt.n
    grid = wt.grid
    joint = _constant_from_recips(wt, recips)
    rp = sum(recips)
    w = wt.product()
    records = []
    slot_constants: list[float | None] = []
    for idx, (wi, r) in enumerate(zip(wt.weights, recips)):
        if r == 1.0:  # p_i = 1
            lhs = ap_constant(GridFunction(grid, wi.values ** (1.0 / n)), 1) ** n
            records.append(MarginRecord(f"slot{idx + 1}_a1", lhs, joint))
            slot_constants.append(None)
        else:
            pdual = 1.0 / (1.0 - r)
            const = ap_constant(GridFunction(grid, wi.values ** (-pdual)), n * pdual)
            records.append(MarginRecord(f"slot{idx + 1}_dual", const, joint**pdual))
            slot_constants.append(const)
    if rp == 0.0:  # p = inf
        lhs = ap_constant(GridFunction(grid, w.values ** (-1.0 / n)), 1) ** n
        records.append(MarginRecord("product_a1", lhs, joint))
        prod_constant = None
    else:
        p = 1.0 / rp
        prod_constant = ap_constant(GridFunction(grid, w.values**p), n * p)
        records.append(MarginRecord("product", prod_constant, joint**p))
    if prod_constant is not None and all(c is not None for c in slot_constants):
        rhs = prod_constant**rp
        for c, r in zip(slot_constants, recips):
            rhs *= c ** (1.0 - r)
        records.append(MarginRecord("joint_vs_components", joint, rhs))
    return records


def _mu_mean_tables(g: np.ndarray, mu: GridFunction):
    grid = mu.grid
    num = dyadic_tables(GridFunction(grid, g * mu.values))
    den = dyadic_tables(mu)
    return [[num[l1][l2] / den[l1][l2] for l2 in range(grid.depth2 + 1)]
            for l1 in range(grid.depth1 + 1)]


def ap_mu_constant(w: GridFunction, p: float, mu: GridFunction) -> float:
    """Muckenhoupt characteristic with averages taken against the measure
    mu(x) dx; mu = 1 reduces to the Lebesgue characteristic."""
    check_weight(w)
    check_weight(mu)
    if w.grid != mu.grid:
        raise GridMismatchError("weight and measure must share one grid")
    grid = w.grid
    mean_w = _mu_mean_tables(w.values, mu)
    if p == 1:
        max_inv = dyadic_tables(GridFunction(grid, 1.0 / w.values), grid, reduce="max")
        return float(max(
            (mean_w[l1][l2] * max_inv[l1][l2]).max() for l1, l2 in _level_pairs(grid)
        ))
    if not (1.0 < p < math.inf):
        raise ValueError(f"exponent must be 1 or in (1, inf), got {p}")
    dual = _mu_mean_tables(w.values ** (-1.0 / (p - 1.0)), mu)
    return float(max(
        (mean_w[l1][l2] * dual[l1][l2] ** (p - 1.0)).max() for l1, l2 in _level_pairs(grid)
    ))


def rubio_de_francia(
    f: GridFunction, mu: GridFunction, lam: float, k_max: int
) -> GridFunction:
    """Truncated geometric series of iterated mu-weighted maximal functions.

    With lam at least the operator norm of the maximal function the result
    majorizes f, has norm at most twice that of f up to the truncation tail,
    and is an A_1-type weight for the measure mu.
    """
    from .sqmax import weighted_maximal

    if lam <= 0:
        raise ValueError("series parameter must be positive")
    if k_max < 0:
        raise ValueError("truncation order must be non-negative")
    if np.any(f.values < 0):
        raise ValueError("input must be non-negative")
    term = f
    acc = f.values.copy()
    for k in range(1, k_max + 1):
        term = weighted_maximal(term, mu)
        acc = acc + term.values / (2.0 * lam) ** k
    return GridFunction(f.grid, acc)


def slice_characteristics(w: GridFunction, p: float) -> tuple[float, float]:
    """Diagnostic: max over coordinate slices of the one-parameter
    characteristic in the other variable (no quantitative relation to the
    rectangle characteristic is asserted)."""
    check_weight(w)
    if not (1.0 < p < math.inf):
        raise ValueError("slice characteristic implemented for p in (1, inf)")

    def one_param(vals: np.ndarray, depth: int) -> float:
        best = 0.0
        dual = vals ** (-1.0 / (p - 1.0))
        for lev in range(depth + 1):
            width = 1 << (depth - lev)
            m = vals.reshape(1 << lev, width).mean(axis=1)
            d = dual.reshape(1 << lev, width).mean(axis=1)
            best = max(best, float((m * d ** (p - 1.0)).max()))
        return best

    n1, n2 = w.grid.shape
    by_x1 = max(one_param(w.values[i, :], w.grid.depth2) for i in range(n1))
    by_x2 = max(one_param(w.values[:, j], w.grid.depth1) for j in range(n2))
    return by_x1, by_x2


# ---------------------------------------------------------------------------
# samplers

DEFAULT_AMPLITUDE = 0.4
DEFAULT_DECAY = 0.8


def _seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def _sign_series_1d(rng, depth: int, amplitude: float, decay: float) -> np.ndarray:
    """Random +-amplitude*decay**level left/right sign series on one axis."""
    n = 1 << depth
    out = np.zeros(n)
    idx = np.arange(n)
    for lev in range(depth):
        signs = rng.choice([-1.0, 1.0], size=1 << lev)
        pattern = np.where((idx >> (depth - lev - 1)) & 1 == 0, 1.0, -1.0)
        out += amplitude * decay**lev * signs[idx >> (depth - lev)] * pattern
    return out


def _exp_haar_log(rng, grid: Grid, amplitude: float, decay: float) -> np.ndarray:
    """Log-weight built from sign series on intervals of each parameter and on
    rectangles; amplitude bounds the oscillation, decay damps fine levels."""
    n1, n2 = grid.shape
    out = np.zeros(grid.shape)
    out += _sign_series_1d(rng, grid.depth1, amplitude, decay)[:, None]
    out += _sign_series_1d(rng, grid.depth2, amplitude, decay)[None, :]
    i1 = np.arange(n1)
    i2 = np.arange(n2)
    for l1 in range(grid.depth1):
        pat1 = np.where((i1 >> (grid.depth1 - l1 - 1)) & 1 == 0, 1.0, -1.0)
        anc1 = i1 >> (grid.depth1 - l1)
        for l2 in range(grid.depth2):
            pat2 = np.where((i2 >> (grid.depth2 - l2 - 1)) & 1 == 0, 1.0, -1.0)
            anc2 = i2 >> (grid.depth2 - l2)
            signs = rng.choice([-1.0, 1.0], size=(1 << l1, 1 << l2))
            out += (
                amplitude
                * decay ** (l1 + l2)
                * signs[np.ix_(anc1, anc2)]
                * pat1[:, None]
                * pat2[None, :]
            )
    return out


def _cell_midpoints(grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    n1, n2 = grid.shape
    return (np.arange(n1) + 0.5) / n1, (np.arange(n2) + 0.5) / n2


def sample_weight(grid: Grid, spec: dict, seed) -> GridFunction:
    """Deterministic weight sampler.

    spec kinds: "constant" (value), "tensor_power" (a, b: power of each cell
    midpoint coordinate), "exp_haar" (amplitude, decay), "tensor" (product of
    two independent one-parameter exp-Haar factors), "cells" (explicit value
    table, row-major).
    """
    kind = spec.get("kind")
    rng = np.random.default_rng(_seed_sequence(seed))
    if kind == "constant":
        value = float(spec.get("value", 1.0))
        if value <= 0:
            raise ValueError("constant weight must be positive")
        return GridFunction.constant(grid, value)
    if kind == "tensor_power":
        a = float(spec.get("a", 0.0))
        b = float(spec.get("b", 0.0))
        x1, x2 = _cell_midpoints(grid)
        return GridFunction(grid, np.outer(x1**a, x2**b))
    if kind == "exp_haar":
        amplitude = float(spec.get("amplitude", DEFAULT_AMPLITUDE))
        decay = float(spec.get("decay", DEFAULT_DECAY))
        if amplitude < 0:
            raise ValueError("amplitude must be non-negative")
        return GridFunction(grid, np.exp(_exp_haar_log(rng, grid, amplitude, decay)))
    if kind == "tensor":
        amplitude = float(spec.get("amplitude", DEFAULT_AMPLITUDE))
        decay = float(spec.get("decay", DEFAULT_DECAY))
        u = np.exp(_sign_series_1d(rng, grid.depth1, amplitude, decay))
        v = np.exp(_sign_series_1d(rng, grid.depth2, amplitude, decay))
        return GridFunction(grid, np.outer(u, v))
    if kind == "cells":
        values = np.asarray(spec["values"], dtype=float)
        if values.ndim == 1:  # flat row-major serialization form
            values = values.reshape(grid.shape)
        return check_weight(GridFunction(grid, values))
    raise ValueError(f"unknown weight spec kind: {kind!r}")


def sample_tuple(grid: Grid, specs, seed) -> WeightTuple:
    """Sample one weight per spec with independent substreams of the seed."""
    children = _seed_sequence(seed).spawn(len(specs))
    return WeightTuple(tuple(
        sample_weight(grid, spec, child) for spec, child in zip(specs, children)
    ))
