"""Matrix-valued martingales on finite filtered trace spaces.

Substrate: M = l_inf(S; M_n(C)) with a normalized trace and a refining
partition filtration.  On top of it: Schatten-type Lp norms, martingale
square functions, Hardy and bmo/BMO norms, John-Nirenberg functionals
with certified lower-bound witnesses, martingale atoms, and the named
extremal constructions wired into the ``ncmart`` verification CLI.
"""

from .core import (
    MartingaleDiffs,
    NegativeSpectrum,
    NonHermitianInput,
    Operator,
    ProjectionWitness,
    TraceSpace,
    abs2,
    cond_exp,
    herm_calculus,
    identity,
    is_level_measurable,
    make_dyadic_space,
    martingale_diffs,
    operator_from_json,
    operator_norm,
    operator_to_json,
    partial_sum,
    singular_values,
    space_from_json,
    space_to_json,
    supports,
    trace,
    zero,
)
from .norms import (
    BMO_FAMILIES,
    HARDY_FAMILIES,
    NormReport,
    bmo_norm,
    h1_upper,
    hardy_norm,
    lp_norm,
    square_functions,
)
from .jn import (
    DIRECTION_FUNCTIONALS,
    FUNCTIONALS,
    JNEstimate,
    TailCurve,
    ViolationFound,
    bmo_c2_exact,
    check_constant_free_directions,
    deflator_value,
    distribution_tail,
    evaluate_estimate,
    fixed_term,
    holder_witness,
    jn_lower_bound,
)
from .atoms import (
    AssertionFailure,
    AtomCertificate,
    DecompositionPiece,
    InvalidInput,
    MalformedCertificate,
    crude_atom_h1_bound,
    pairing_bound_check,
    plain_atom_h1_ratio,
    pr_to_crude,
    random_crude_atom,
    random_plain_atom,
    random_pr_atom,
    two_atom_decompose,
    validate_atom,
)
from .constructions import (
    InequalityFailure,
    NamedInstance,
    bmo_p_blowup_instance,
    conditional_cauchy_schwarz_check,
    operator_convexity_checks,
    rademacher_row,
    random_martingale,
    random_projection,
    sweep,
    sweep_growth_experiment,
)
from .seeds import split_rng

__version__ = "0.1.0"
