"""Numerical workbench for multilinear bi-parameter dyadic harmonic analysis.

Finite dyadic grids on the unit square carry Haar functions, martingale
differences, maximal and square functions, Muckenhoupt-type weight classes
with their multilinear joint characteristic, oscillation norms, and the three
dyadic model operators (shifts, partial paraproducts, full paraproducts) with
adjoints and commutators.  A harness verifies exact identities and records
statistical weighted-norm-ratio sweeps; the `bihaar` CLI exposes it with
reproducible configs.
"""

__version__ = "0.1.0"

from .grid import (  # noqa: F401
    Grid,
    DyadicInterval,
    DyadicRectangle,
    GridFunction,
    GridMismatchError,
    haar,
    haar_rectangle,
    average,
    slice_average,
    martingale_difference,
    martingale_block,
    biparameter_block,
    inner_product,
    lp_norm,
    mixed_norm,
    gridfunction_payload,
    gridfunction_from_payload,
)
from .weights import (  # noqa: F401
    ExponentTuple,
    WeightTuple,
    ap_constant,
    ap_mu_constant,
    multilinear_constant,
    dual_tuple,
    component_margins,
    rubio_de_francia,
    sample_weight,
    sample_tuple,
)
from .sqmax import (  # noqa: F401
    maximal,
    weighted_maximal,
    square_full,
    square_param,
    square_block,
    a1k,
    a2k,
    a3k,
    vv_block_square_ratio,
)
from .bmo import (  # noqa: F401
    IntervalCoeffs,
    RectangleCoeffs,
    seq_bmo,
    product_bmo,
    little_bmo,
    h1_pairing_ratio,
)
from .operators import (  # noqa: F401
    make_shift,
    apply_shift,
    shift_form,
    shift_adjoint,
    make_partial_paraproduct,
    apply_partial_paraproduct,
    partial_paraproduct_form,
    make_full_paraproduct,
    apply_full_paraproduct,
    full_paraproduct_form,
    commutator,
    commutator_contour,
)
from .harness import (  # noqa: F401
    ExperimentConfig,
    ExperimentReport,
    BudgetExceededError,
    norm_ratio,
    run_sweep,
    extrapolation_consistency,
    oracle_suite,
)
