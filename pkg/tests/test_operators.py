import math

import numpy as np
import pytest

from bihaar.bmo import RectangleCoeffs, product_bmo, seq_bmo, IntervalCoeffs
from bihaar.grid import (
    Grid,
    DyadicInterval,
    DyadicRectangle,
    GridFunction,
    haar,
    haar_rectangle,
    inner_product,
    lp_norm,
    martingale_difference,
)
from bihaar.operators import (
    BMOSaturatingSequences,
    SaturatingSignCoefficients,
    SequenceCoefficients,
    TensorCoefficients,
    apply_full_paraproduct,
    apply_partial_paraproduct,
    apply_shift,
    as_operator,
    commutator,
    commutator_contour,
    commutator_operator,
    full_paraproduct_adjoint,
    full_paraproduct_form,
    make_full_paraproduct,
    make_partial_paraproduct,
    make_shift,
    operator_from_payload,
    operator_payload,
    partial_paraproduct_adjoint,
    partial_paraproduct_form,
    shift_adjoint,
    shift_form,
)


def random_function(grid, seed):
    rng = np.random.default_rng(seed)
    return GridFunction(grid, rng.normal(size=grid.shape))


def tensor_function(grid, seed):
    rng = np.random.default_rng(seed)
    return GridFunction(
        grid, np.outer(rng.normal(size=grid.shape[0]), rng.normal(size=grid.shape[1]))
    )


def rel_scalar(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


from oracles import oracle_fp_form, oracle_pp_form, oracle_shift_form  # noqa: E402


class TestShift:
    def test_zero_slot(self):
        grid = Grid(2, 2)
        spec = make_shift(grid, 2, (1, 1), seed=1)
        out = apply_shift(spec, [GridFunction.zeros(grid), random_function(grid, 1)])
        assert np.abs(out.values).max() == 0.0

    def test_haar_multiplier_case(self):
        # unit coefficients at complexity zero act as the identity on the
        # fully cancellative part
        grid = Grid(2, 2)
        coeffs = TensorCoefficients(lambda key: 1.0, ((0, 0), (0, 0)), 1)
        spec = make_shift(grid, 1, (0, 0), coefficients=coeffs)
        f = random_function(grid, 2)
        out = apply_shift(spec, [f])
        direct = np.zeros(grid.shape)
        for rect in grid.rectangles(grid.depth1 - 1, grid.depth2 - 1):
            direct += martingale_difference(
                martingale_difference(f, rect.x1), rect.x2
            ).values
        assert np.abs(out.values - direct).max() < 1e-12
        assert lp_norm(out, 2) == pytest.approx(
            math.sqrt(sum(inner_product(f, haar_rectangle(grid, r, 1, 1)) ** 2
                          for r in grid.rectangles(grid.depth1 - 1, grid.depth2 - 1))),
            rel=1e-12,
        )

    def test_form_apply_consistency(self):
        grid = Grid(2, 2)
        spec = make_shift(grid, 2, ((1, 0), (0, 1), (1, 1)), seed=3)
        fs = [random_function(grid, 10 + i) for i in range(2)]
        g = random_function(grid, 20)
        form = shift_form(spec, fs, g)
        paired = inner_product(apply_shift(spec, fs), g)
        assert rel_scalar(paired, form) < 1e-12

    def test_form_matches_oracle(self):
        grid = Grid(2, 2)
        spec = make_shift(
            grid, 2, ((1, 1), (0, 1), (1, 0)), seed=4,
            cancellative=([1, 3], [2, 3]),
        )
        fs = [random_function(grid, 30 + i) for i in range(2)]
        g = random_function(grid, 40)
        assert rel_scalar(shift_form(spec, fs, g), oracle_shift_form(spec, fs, g)) < 1e-12

    def test_multilinearity(self):
        grid = Grid(2, 2)
        spec = make_shift(grid, 2, (1, 1), seed=5)
        f1, f1b, f2 = (random_function(grid, 50 + i) for i in range(3))
        lhs = apply_shift(spec, [2.0 * f1 - 0.5 * f1b, f2])
        rhs = 2.0 * apply_shift(spec, [f1, f2]) - 0.5 * apply_shift(spec, [f1b, f2])
        assert np.abs(lhs.values - rhs.values).max() < 1e-12

    def test_support_restriction(self):
        # coefficients supported on a single ancestor confine the output
        grid = Grid(3, 3)
        target = (1, 1, 1, 0)  # K = [1/2,1) x [0,1/2) at level (1,1)

        def fn(key):
            return 1.0 if key == target else 0.0

        coeffs = TensorCoefficients(fn, ((1, 1),) * 3, 2)
        spec = make_shift(grid, 2, (1, 1), coefficients=coeffs)
        fs = [random_function(grid, 60 + i) for i in range(2)]
        out = apply_shift(spec, fs).values
        n1, n2 = grid.shape
        mask = np.zeros(grid.shape, dtype=bool)
        mask[n1 // 2:, : n2 // 2] = True
        assert np.abs(out[~mask]).max() == 0.0
        assert np.abs(out[mask]).max() > 0.0

    def test_coefficient_normalization(self):
        grid = Grid(3, 3)
        spec = make_shift(grid, 2, (1, 2), seed=6)
        for key in spec.ancestor_keys():
            t = spec.coefficients.tensor(key)
            l1, _, l2, _ = key
            bound = 2.0 ** (2 * (l1 + l2)) * np.prod(
                [2.0 ** (-(l1 + k1 + l2 + k2) / 2.0) for k1, k2 in spec.complexity]
            )
            assert np.abs(t).max() <= bound * (1 + 1e-12)
            assert np.abs(np.abs(t) - bound).max() < 1e-12 * bound  # saturating

    def test_clamping_of_wild_coefficients(self):
        grid = Grid(2, 2)
        coeffs = TensorCoefficients(lambda key: 1e6, ((0, 0),) * 3, 2)
        spec = make_shift(grid, 2, (0, 0), coefficients=coeffs)
        for key in spec.ancestor_keys():
            l1, _, l2, _ = key
            bound = 2.0 ** (2 * (l1 + l2)) * 2.0 ** (-3 * (l1 + l2) / 2.0)
            assert np.abs(spec.coefficients.tensor(key)).max() <= bound * (1 + 1e-12)

    def test_pattern_guard(self):
        grid = Grid(2, 2)
        with pytest.raises(ValueError):
            make_shift(grid, 2, (0, 0), cancellative=([1], [1, 2]))

    def test_depth_guard(self):
        with pytest.raises(ValueError):
            make_shift(Grid(2, 2), 2, (2, 0))


class TestShiftAdjoint:
    def test_zero_slots_identity(self):
        grid = Grid(2, 2)
        spec = make_shift(grid, 2, (1, 1), seed=7)
        adj = shift_adjoint(spec, 0, 0)
        fs = [random_function(grid, 70 + i) for i in range(2)]
        g = random_function(grid, 80)
        assert rel_scalar(shift_form(adj, fs, g), shift_form(spec, fs, g)) < 1e-12

    def test_involution(self):
        grid = Grid(2, 2)
        spec = make_shift(grid, 2, ((1, 0), (0, 1), (1, 1)), seed=8)
        adj2 = shift_adjoint(shift_adjoint(spec, 1, 2), 1, 2)
        fs = [random_function(grid, 90 + i) for i in range(2)]
        g = random_function(grid, 99)
        assert rel_scalar(shift_form(adj2, fs, g), shift_form(spec, fs, g)) < 1e-12

    def test_full_adjoint_general_inputs(self):
        grid = Grid(2, 2)
        spec = make_shift(grid, 2, (1, 1), seed=9)
        fs = [random_function(grid, 100 + i) for i in range(2)]
        g = random_function(grid, 110)
        adj = shift_adjoint(spec, 1, 1)
        lhs = shift_form(spec, fs, g)
        rhs = shift_form(adj, [g, fs[1]], fs[0])
        assert rel_scalar(rhs, lhs) < 1e-12

    @pytest.mark.parametrize("j1", [0, 1, 2])
    @pytest.mark.parametrize("j2", [0, 1, 2])
    def test_partial_adjoints_on_tensor_inputs(self, j1, j2):
        grid = Grid(2, 2)
        spec = make_shift(grid, 2, ((1, 0), (1, 1), (0, 1)), seed=11,
                          cancellative=([1, 2], [2, 3]))
        parts1 = [np.random.default_rng(200 + i).normal(size=grid.shape[0]) for i in range(3)]
        parts2 = [np.random.default_rng(300 + i).normal(size=grid.shape[1]) for i in range(3)]
        funcs = [GridFunction(grid, np.outer(u, v)) for u, v in zip(parts1, parts2)]
        adj = shift_adjoint(spec, j1, j2)
        perm1 = list(range(3))
        if j1:
            perm1[j1 - 1], perm1[2] = perm1[2], perm1[j1 - 1]
        perm2 = list(range(3))
        if j2:
            perm2[j2 - 1], perm2[2] = perm2[2], perm2[j2 - 1]
        swapped = [
            GridFunction(grid, np.outer(parts1[perm1[i]], parts2[perm2[i]]))
            for i in range(3)
        ]
        lhs = shift_form(spec, funcs[:2], funcs[2])
        rhs = shift_form(adj, swapped[:2], swapped[2])
        assert rel_scalar(rhs, lhs) < 1e-11


class TestPartialParaproduct:
    def test_zero_slot(self):
        grid = Grid(2, 2)
        spec = make_partial_paraproduct(grid, 2, 1, 1, seed=1)
        out = apply_partial_paraproduct(
            spec, [GridFunction.zeros(grid), random_function(grid, 1)]
        )
        assert np.abs(out.values).max() == 0.0

    @pytest.mark.parametrize("shift_param", [1, 2])
    @pytest.mark.parametrize("para_slot", [1, 3])
    def test_form_apply_and_oracle(self, shift_param, para_slot):
        grid = Grid(2, 2)
        spec = make_partial_paraproduct(
            grid, 2, shift_param, (1, 0, 1), seed=2, para_slot=para_slot
        )
        fs = [random_function(grid, 10 + i) for i in range(2)]
        g = random_function(grid, 20)
        form = partial_paraproduct_form(spec, fs, g)
        paired = inner_product(apply_partial_paraproduct(spec, fs), g)
        assert rel_scalar(paired, form) < 1e-12
        assert rel_scalar(form, oracle_pp_form(spec, fs, g)) < 1e-12

    def test_single_key_rank_one(self):
        # coefficients on a single (ancestor, combo) key produce an explicit
        # rank-one output
        grid = Grid(2, 2)
        lev_hit = 1

        def fn(anc, combo):
            arrs = [np.zeros(1 << lev) for lev in range(2)]
            if anc == (0, 0) and combo == (0, 1, 1):
                arrs[lev_hit][0] = 1.0
            return arrs

        coeffs = SequenceCoefficients(fn, (1, 1, 1), 2, 2)
        spec = make_partial_paraproduct(grid, 2, 1, (1, 1, 1), coefficients=coeffs)
        fs = [random_function(grid, 30 + i) for i in range(2)]
        out = apply_partial_paraproduct(spec, fs)
        k2 = DyadicInterval(2, lev_hit, 0)
        i1 = DyadicInterval(1, 1, 0)
        i2 = DyadicInterval(1, 1, 1)
        i3 = DyadicInterval(1, 1, 1)
        a = coeffs.level_arrays((0, 0), (0, 1, 1))[lev_hit][0]
        c1 = inner_product(fs[0], haar(grid, i1, 1) * haar(grid, k2, 0) * k2.length**-0.5)
        c2 = inner_product(fs[1], haar(grid, i2, 1) * haar(grid, k2, 0) * k2.length**-0.5)
        expected = a * c1 * c2 * haar(grid, i3, 1).values * haar(grid, k2, 1).values
        assert np.abs(out.values - expected).max() < 1e-12

    def test_bmo_normalization_saturates(self):
        grid = Grid(2, 3)
        spec = make_partial_paraproduct(grid, 2, 1, (1, 0, 1), seed=3)
        for anc in spec.ancestor_keys():
            l1, _ = anc
            arrs = spec.coefficients.level_arrays(anc, (0, 0, 0))
            seq = IntervalCoeffs(2, 3, {
                (lev, pos): float(arr[pos])
                for lev, arr in enumerate(arrs)
                for pos in range(len(arr))
            })
            bound = 2.0 ** (2 * l1) * np.prod([
                2.0 ** (-(l1 + k) / 2.0) for k in spec.complexity
            ])
            assert seq_bmo(seq) == pytest.approx(bound, rel=1e-10)

    def test_full_adjoint_via_form(self):
        grid = Grid(2, 2)
        spec = make_partial_paraproduct(grid, 2, 1, (1, 1, 0), seed=4, para_slot=2)
        fs = [random_function(grid, 40 + i) for i in range(2)]
        g = random_function(grid, 50)
        for j in (1, 2):
            adj = partial_paraproduct_adjoint(spec, j)
            args = list(fs)
            args[j - 1] = g
            assert rel_scalar(
                partial_paraproduct_form(adj, args, fs[j - 1]),
                partial_paraproduct_form(spec, fs, g),
            ) < 1e-12

    def test_depth_guard(self):
        with pytest.raises(ValueError):
            make_partial_paraproduct(Grid(2, 2), 2, 1, 2)


class TestFullParaproduct:
    def test_zero_slot(self):
        grid = Grid(2, 2)
        spec = make_full_paraproduct(grid, 2, seed=1)
        out = apply_full_paraproduct(
            spec, [random_function(grid, 1), GridFunction.zeros(grid)]
        )
        assert np.abs(out.values).max() == 0.0

    def test_unit_bmo_after_rescale(self):
        grid = Grid(2, 2)
        spec = make_full_paraproduct(grid, 2, seed=2)
        assert spec.bmo_strategy == "exhaustive" and spec.bmo_exact
        assert product_bmo(spec.coefficients).value == pytest.approx(1.0, rel=1e-10)

    def test_sampled_strategy_recorded(self):
        grid = Grid(3, 2)
        spec = make_full_paraproduct(grid, 2, seed=3)
        assert spec.bmo_strategy == "sampled" and not spec.bmo_exact

    def test_single_top_rectangle(self):
        grid = Grid(1, 1)
        coeffs = RectangleCoeffs(1, 1, {(0, 0, 0, 0): 1.0})
        spec = make_full_paraproduct(grid, 2, para_slots=(1, 3), coefficients=coeffs)
        one = GridFunction.constant(grid, 1.0)
        f1 = random_function(grid, 4)
        out = apply_full_paraproduct(spec, [f1, one])
        # slot 1 pairs with h in x1, indicator in x2; slot 2 averages; the
        # output pairs with indicator in x1 and h in x2
        k = DyadicRectangle(DyadicInterval(1, 0, 0), DyadicInterval(2, 0, 0))
        c1 = inner_product(f1, haar_rectangle(grid, k, 1, 0))
        expected = c1 * haar_rectangle(grid, k, 0, 1).values
        assert np.abs(out.values - expected).max() < 1e-12

    def test_form_apply_and_oracle(self):
        grid = Grid(2, 2)
        spec = make_full_paraproduct(grid, 2, seed=5, para_slots=(2, 3))
        fs = [random_function(grid, 60 + i) for i in range(2)]
        g = random_function(grid, 70)
        form = full_paraproduct_form(spec, fs, g)
        paired = inner_product(apply_full_paraproduct(spec, fs), g)
        assert rel_scalar(paired, form) < 1e-12
        assert rel_scalar(form, oracle_fp_form(spec, fs, g)) < 1e-12

    def test_full_adjoint_via_form(self):
        grid = Grid(2, 2)
        spec = make_full_paraproduct(grid, 2, seed=6, para_slots=(1, 2))
        fs = [random_function(grid, 80 + i) for i in range(2)]
        g = random_function(grid, 90)
        for j in (1, 2):
            adj = full_paraproduct_adjoint(spec, j)
            args = list(fs)
            args[j - 1] = g
            assert rel_scalar(
                full_paraproduct_form(adj, args, fs[j - 1]),
                full_paraproduct_form(spec, fs, g),
            ) < 1e-12


class TestCommutator:
    def test_constant_symbol_vanishes(self):
        grid = Grid(2, 2)
        spec = make_shift(grid, 2, (1, 1), seed=1)
        fs = [random_function(grid, 1), random_function(grid, 2)]
        b = GridFunction.constant(grid, 3.0)
        out = commutator(spec, b, 1, fs)
        assert np.abs(out.values).max() < 1e-12

    def test_linear_in_symbol(self):
        grid = Grid(2, 2)
        spec = make_shift(grid, 2, (0, 0), seed=2)
        fs = [random_function(grid, 3), random_function(grid, 4)]
        b1 = random_function(grid, 5)
        b2 = random_function(grid, 6)
        lhs = commutator(spec, GridFunction(grid, 2.0 * b1.values - b2.values), 2, fs)
        rhs = 2.0 * commutator(spec, b1, 2, fs) - commutator(spec, b2, 2, fs)
        assert np.abs(lhs.values - rhs.values).max() < 1e-12

    @pytest.mark.parametrize("make", [
        lambda grid: make_shift(grid, 2, (1, 0), seed=7),
        lambda grid: make_partial_paraproduct(grid, 2, 2, (0, 1, 0), seed=8),
        lambda grid: make_full_paraproduct(grid, 2, seed=9),
    ])
    def test_contour_agreement(self, make):
        grid = Grid(2, 2)
        spec = make(grid)
        fs = [random_function(grid, 10), random_function(grid, 11)]
        b = random_function(grid, 12)
        direct = commutator(spec, b, 1, fs)
        delta = 0.5 / np.abs(b.values).max()
        quad = commutator_contour(spec, b, 1, fs, delta, nodes=64)
        scale = max(np.abs(direct.values).max(), 1e-300)
        assert np.abs(quad.values - direct.values).max() / scale < 1e-6
        half = commutator_contour(spec, b, 1, fs, delta / 2.0, nodes=64)
        assert np.abs(half.values - quad.values).max() / scale < 1e-6

    def test_iterated_commutator(self):
        grid = Grid(2, 2)
        spec = make_shift(grid, 2, (0, 0), seed=13)
        fs = [random_function(grid, 14), random_function(grid, 15)]
        b1 = random_function(grid, 16)
        b2 = random_function(grid, 17)
        inner = commutator_operator(spec, b1, 1)
        nested = commutator(inner, b2, 2, fs)
        direct = (
            b2 * commutator(spec, b1, 1, fs)
            - commutator(spec, b1, 1, [fs[0], b2 * fs[1]])
        )
        assert np.abs(nested.values - direct.values).max() < 1e-12

    def test_contour_guards(self):
        grid = Grid(1, 1)
        spec = make_shift(grid, 1, (0, 0), seed=18)
        f = [random_function(grid, 19)]
        b = random_function(grid, 20)
        with pytest.raises(ValueError):
            commutator_contour(spec, b, 1, f, 0.0)
        with pytest.raises(ValueError):
            commutator_contour(spec, b, 1, f, 0.5, nodes=4)


class TestSerialization:
    def test_shift_roundtrip(self):
        grid = Grid(3, 3)
        spec = make_shift(grid, 2, ((1, 0), (0, 1), (1, 1)), seed=21,
                          cancellative=([1, 2], [2, 3]))
        clone = operator_from_payload(grid, operator_payload(spec))
        fs = [random_function(grid, 22 + i) for i in range(2)]
        g = random_function(grid, 25)
        assert shift_form(clone, fs, g) == shift_form(spec, fs, g)

    def test_pp_roundtrip(self):
        grid = Grid(2, 2)
        spec = make_partial_paraproduct(grid, 2, 2, (1, 0, 1), seed=23, para_slot=2)
        clone = operator_from_payload(grid, operator_payload(spec))
        fs = [random_function(grid, 26 + i) for i in range(2)]
        g = random_function(grid, 29)
        assert partial_paraproduct_form(clone, fs, g) == partial_paraproduct_form(spec, fs, g)

    def test_fp_roundtrip(self):
        grid = Grid(2, 2)
        spec = make_full_paraproduct(grid, 2, seed=24, para_slots=(1, 3))
        clone = operator_from_payload(grid, operator_payload(spec))
        assert clone.coefficients.values == spec.coefficients.values

    def test_custom_not_serializable(self):
        grid = Grid(2, 2)
        coeffs = TensorCoefficients(lambda key: 1.0, ((0, 0),) * 3, 2)
        spec = make_shift(grid, 2, (0, 0), coefficients=coeffs)
        with pytest.raises(ValueError):
            operator_payload(spec)

    def test_as_operator_rejects_junk(self):
        with pytest.raises(TypeError):
            as_operator(42)
