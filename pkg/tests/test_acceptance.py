"""Acceptance criteria, one test per criterion.

Each test prints a single pass/fail line with its headline metric; the
statistical criteria (10-12) pin their seeds and sampling regimes and use the
documented artifact thresholds (factor-4 median envelope, 0.1 log-slope per
sweep step, non-increasing normalized trend for the paraproduct envelope).
"""

import math
import time

import numpy as np
import pytest

from bihaar.grid import Grid, GridFunction, inner_product, lp_norm
from bihaar.harness import (
    ExperimentConfig,
    config_hash,
    norm_ratio,
    oracle_suite,
    run_sweep,
    sample_function,
)
from bihaar.operators import (
    apply_full_paraproduct,
    apply_partial_paraproduct,
    apply_shift,
    commutator,
    commutator_contour,
    make_full_paraproduct,
    make_partial_paraproduct,
    make_shift,
    partial_paraproduct_form,
    full_paraproduct_form,
    shift_adjoint,
    shift_form,
)
from bihaar.sqmax import maximal, square_block, square_full
from bihaar.weights import (
    ExponentTuple,
    WeightTuple,
    component_margins,
    dual_tuple,
    multilinear_constant,
    multilinear_term_range,
    sample_tuple,
)

from oracles import oracle_fp_form, oracle_pp_form, oracle_shift_form


def report(number, passed, detail):
    status = "PASS" if passed else "FAIL"
    print(f"[acceptance {number:2d}] {status}: {detail}")
    assert passed, detail


def random_recips(rng, n):
    # reciprocals in (0, 0.9/n) keep every p_i finite and 1/p in (0, 1)
    return tuple(float(r) for r in rng.uniform(0.05, 0.9 / n, size=n))


def exp_haar_tuple(grid, n, seed):
    return sample_tuple(grid, [{"kind": "exp_haar"}] * n, seed)


def test_criterion_1_duality_equality():
    start = time.time()
    grid = Grid(3, 3)
    rng = np.random.default_rng(101)
    worst = 0.0
    for trial in range(50):
        n = 2 if trial % 2 == 0 else 3
        wt = exp_haar_tuple(grid, n, 1000 + trial)
        pt = ExponentTuple(random_recips(rng, n))
        base = multilinear_constant(wt, pt)
        for slot in range(n):
            dual_wt, dual_pt = dual_tuple(wt, pt, slot)
            got = multilinear_constant(dual_wt, dual_pt)
            worst = max(worst, abs(got - base) / base)
    elapsed = time.time() - start
    report(1, worst <= 1e-10 and elapsed < 10,
           f"duality equality worst rel err {worst:.2e} in {elapsed:.1f}s")


def test_criterion_2_per_rectangle_lower_bound():
    start = time.time()
    grid = Grid(3, 3)
    rng = np.random.default_rng(102)
    lowest = math.inf
    for trial in range(50):
        n = 2 if trial % 2 == 0 else 3
        wt = exp_haar_tuple(grid, n, 2000 + trial)
        pt = ExponentTuple(random_recips(rng, n))
        lo, _ = multilinear_term_range(wt, pt)
        lowest = min(lowest, lo)
    elapsed = time.time() - start
    report(2, lowest >= 1.0 - 1e-12 and elapsed < 10,
           f"per-rectangle term minimum {lowest:.12f} in {elapsed:.1f}s")


def test_criterion_3_component_margins():
    start = time.time()
    grid = Grid(2, 2)
    rng = np.random.default_rng(103)
    worst = math.inf
    for trial in range(50):
        n = 2 if trial % 2 == 0 else 3
        wt = exp_haar_tuple(grid, n, 3000 + trial)
        if trial % 3 == 0:
            exponents = [math.inf] * n  # target exponent infinity
        elif trial % 3 == 1:
            exponents = [1.0] + [1.0 / r for r in random_recips(rng, n - 1)]
        else:
            exponents = [1.0 / r for r in random_recips(rng, n)]
        for rec in component_margins(wt, exponents):
            worst = min(worst, rec.margin)
    elapsed = time.time() - start
    report(3, worst >= -1e-9 and elapsed < 30,
           f"embedding margin minimum {worst:.2e} in {elapsed:.1f}s")


def test_criterion_4_exact_dyadic_identities():
    start = time.time()
    rep = oracle_suite((2, 2), seed=4)
    wanted = {
        "reconstruction",
        "energy_split_param1",
        "energy_split_param2",
        "haar_orthonormality",
        "haar_basis_energy",
        "martingale_haar_pairing",
    }
    items = {i["name"]: i for i in rep.summary["items"]}
    worst = max(items[name]["error"] for name in wanted)
    ok = all(items[name]["error"] <= 1e-12 for name in wanted)
    elapsed = time.time() - start
    report(4, ok and elapsed < 5,
           f"exact identities worst rel err {worst:.2e} in {elapsed:.1f}s")


def test_criterion_5_block_regrouping():
    start = time.time()
    grid = Grid(4, 4)
    worst = 0.0
    for s in range(10):
        f = sample_function(grid, np.random.default_rng(500 + s))
        base = square_full(f)
        scale = np.abs(base.values).max()
        for k1 in range(grid.depth1):
            for k2 in range(grid.depth2):
                got = square_block(f, (k1, k2))
                worst = max(worst, np.abs(got.values - base.values).max() / scale)
    elapsed = time.time() - start
    report(5, worst <= 1e-12 and elapsed < 10,
           f"block regrouping worst pointwise rel err {worst:.2e} in {elapsed:.1f}s")


def test_criterion_6_maximal_sup_bound():
    start = time.time()
    grid = Grid(4, 4)
    worst = -math.inf
    for s in range(30):
        rng = np.random.default_rng(600 + s)
        wt = exp_haar_tuple(grid, 2, 6000 + s)
        fs = [sample_function(grid, rng) for _ in range(2)]
        char = multilinear_constant(wt, ExponentTuple.of(math.inf, math.inf))
        lhs = lp_norm(maximal(fs), math.inf, wt.product())
        rhs = char * lp_norm(fs[0], math.inf, wt.weights[0]) * lp_norm(
            fs[1], math.inf, wt.weights[1]
        )
        worst = max(worst, lhs - rhs)
    elapsed = time.time() - start
    report(6, worst <= 1e-9 and elapsed < 30,
           f"sup-exponent bound worst excess {worst:.2e} in {elapsed:.1f}s")


def test_criterion_7_shift_adjoint_duality():
    start = time.time()
    grid = Grid(3, 3)
    worst = 0.0
    for s in range(10):
        rng = np.random.default_rng(700 + s)
        spec = make_shift(grid, 2, (1, 1), seed=7000 + s)
        parts1 = [rng.normal(size=grid.shape[0]) for _ in range(3)]
        parts2 = [rng.normal(size=grid.shape[1]) for _ in range(3)]
        funcs = [GridFunction(grid, np.outer(u, v)) for u, v in zip(parts1, parts2)]
        base = shift_form(spec, funcs[:2], funcs[2])
        for j1 in range(3):
            for j2 in range(3):
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
                got = shift_form(adj, swapped[:2], swapped[2])
                worst = max(worst, abs(got - base) / max(abs(base), 1e-300))
    elapsed = time.time() - start
    report(7, worst <= 1e-11 and elapsed < 60,
           f"adjoint duality worst rel err {worst:.2e} over 9 slot pairs x 10 samples "
           f"in {elapsed:.1f}s")


def test_criterion_8_form_apply_vs_bruteforce():
    start = time.time()
    grid = Grid(2, 2)
    rng = np.random.default_rng(800)
    worst = 0.0
    for s in range(3):
        fs = [sample_function(grid, rng) for _ in range(2)]
        g = sample_function(grid, rng)

        shift = make_shift(grid, 2, ((1, 0), (0, 1), (1, 1)), seed=8000 + s)
        oracle = oracle_shift_form(shift, fs, g)
        for got in (shift_form(shift, fs, g), inner_product(apply_shift(shift, fs), g)):
            worst = max(worst, abs(got - oracle) / max(abs(oracle), 1e-300))

        for shift_param in (1, 2):
            pp = make_partial_paraproduct(
                grid, 2, shift_param, (1, 0, 1), seed=8100 + s, para_slot=1 + s % 3
            )
            oracle = oracle_pp_form(pp, fs, g)
            for got in (
                partial_paraproduct_form(pp, fs, g),
                inner_product(apply_partial_paraproduct(pp, fs), g),
            ):
                worst = max(worst, abs(got - oracle) / max(abs(oracle), 1e-300))

        fp = make_full_paraproduct(grid, 2, seed=8200 + s, para_slots=(1 + s % 3, 3))
        oracle = oracle_fp_form(fp, fs, g)
        for got in (
            full_paraproduct_form(fp, fs, g),
            inner_product(apply_full_paraproduct(fp, fs), g),
        ):
            worst = max(worst, abs(got - oracle) / max(abs(oracle), 1e-300))
    elapsed = time.time() - start
    report(8, worst <= 1e-12 and elapsed < 60,
           f"form/apply vs quadruple loop worst rel err {worst:.2e} in {elapsed:.1f}s")


def test_criterion_9_commutator_contour():
    start = time.time()
    grid = Grid(2, 2)
    worst = 0.0
    for s in range(10):
        rng = np.random.default_rng(900 + s)
        spec = make_shift(grid, 2, (1, 1), seed=9000 + s)
        fs = [sample_function(grid, rng) for _ in range(2)]
        b = sample_function(grid, rng)
        direct = commutator(spec, b, 1, fs)
        delta = 0.5 / float(np.abs(b.values).max())
        quad = commutator_contour(spec, b, 1, fs, delta, nodes=64)
        half = commutator_contour(spec, b, 1, fs, delta / 2.0, nodes=64)
        scale = max(float(np.abs(direct.values).max()), 1e-300)
        worst = max(worst, float(np.abs(quad.values - direct.values).max()) / scale)
        worst = max(worst, float(np.abs(half.values - quad.values).max()) / scale)
    elapsed = time.time() - start
    report(9, worst <= 1e-6 and elapsed < 30,
           f"contour agreement and radius stability worst rel err {worst:.2e} "
           f"in {elapsed:.1f}s")


def test_criterion_10_shift_complexity_uniformity():
    start = time.time()
    cfg = ExperimentConfig(
        kind="shift_complexity", depths=(5, 5), n=2, exponents=("2", "2"),
        complexity_range=(0, 2), samples=20, seed=10,
    )
    rep = run_sweep(cfg)
    checks = {c["name"]: c for c in rep.summary["checks"]}
    envelope = checks["median_envelope"]
    slope = checks["trend_slope"]
    elapsed = time.time() - start
    report(10, envelope["passed"] and slope["passed"] and elapsed < 600,
           f"complexity sweep envelope {envelope['value']:.3f} (<=4), "
           f"slope {slope['value']:+.3f} (<=0.1) in {elapsed:.1f}s")


def test_criterion_11_paraproduct_growth_envelope():
    start = time.time()
    cfg = ExperimentConfig(
        kind="paraproduct_complexity", depths=(5, 5), n=2, exponents=("2", "2"),
        complexity_range=(0, 3), samples=20, seed=11, beta=0.25,
    )
    rep = run_sweep(cfg)
    check = {c["name"]: c for c in rep.summary["checks"]}["normalized_trend_slope"]
    elapsed = time.time() - start
    report(11, check["passed"] and elapsed < 600,
           f"normalized paraproduct trend slope {check['value']:+.3f} (<=0) "
           f"in {elapsed:.1f}s")


@pytest.mark.parametrize("family,n,exponents", [
    ("a1", 2, ("2", "2")),
    ("a2", 3, ("3", "3", "3")),
    ("a3", 2, ("2", "2")),
    ("lower_square", 1, ("2",)),
    ("vv_square", 1, ("2",)),
])
def test_criterion_12_square_function_depth_trends(family, n, exponents):
    start = time.time()
    cfg = ExperimentConfig(
        kind="depth_ratio", family=family, n=n, exponents=exponents,
        depth_range=(2, 5), samples=20, seed=12,
    )
    rep = run_sweep(cfg)
    check = {c["name"]: c for c in rep.summary["checks"]}["trend_slope"]
    elapsed = time.time() - start
    report(12, check["passed"] and elapsed < 600,
           f"{family} depth trend slope {check['value']:+.3f} (<=0.1) in {elapsed:.1f}s")


def test_criterion_13_determinism_across_threads(tmp_path):
    start = time.time()
    cfg = ExperimentConfig(
        kind="shift_complexity", depths=(4, 4), n=2, exponents=("2", "2"),
        complexity_range=(0, 1), samples=6, seed=13,
    )
    csv1 = run_sweep(cfg, threads=1).to_csv()
    csv4 = run_sweep(cfg, threads=4).to_csv()
    json1 = run_sweep(cfg, threads=1).to_json()
    json4 = run_sweep(cfg, threads=4).to_json()
    same = csv1 == csv4 and json1 == json4
    elapsed = time.time() - start
    report(13, same and elapsed < 60,
           f"1-thread and 4-thread reports byte-identical "
           f"({len(csv1)} CSV bytes, hash {config_hash(cfg)}) in {elapsed:.1f}s")
