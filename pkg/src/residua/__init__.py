"""Exact and numerical Coleff-Herrera products for monomial current data."""

ENGINE_VERSION = "0.1.0"

from .exactcore import (  # noqa: E402,F401
    AffineForm,
    EngineError,
    ExactScalar,
    GaussRational,
    MellinExpr,
    MellinProduct,
    ScalarSum,
    UniRat,
    unirat_limit_at_zero,
)
from .testforms import (  # noqa: E402,F401
    CutoffProfile,
    DerivativeOfIndicator,
    RadialProfile,
    TestForm,
    beta_mellin_moment,
    moment,
)
from .currents import (  # noqa: E402,F401
    CurrentSum,
    DimensionMismatch,
    OverlapError,
    ProductStep,
    ZeroResidueStep,
    dbar,
    normalize,
    orientation_sign,
    pair_with_testform,
    pv_step,
    res_step,
    sequential_product,
    unit_current,
    zero_current,
)
from .mellin import (  # noqa: E402,F401
    DegenerateLine,
    LineRestriction,
    NonBetaProfile,
    PoleHit,
    PoleLine,
    PoleReport,
    aswy_limit,
    build_gamma,
    diagonal_limit,
    eval_at_point,
    iterated_limit,
    pole_lines_near_orthant,
    render_closed_form,
    substitute_line,
)
from .mellin import NonMonomialStep  # noqa: E402,F401
from .wedge import Grassmann, wedge_sign  # noqa: E402,F401
from .quadrature import (  # noqa: E402,F401
    DegenerateFit,
    EpsilonSchedule,
    GridSpec,
    NonPositiveWeight,
    NotReducible,
    NumericalResult,
    ReducedIntegrand,
    RegStep,
    RegularizedSpec,
    Weight,
    angular_reduce,
    eval_lambda_integral,
    eval_regularized_integral,
    eval_tube_integral,
    iterated_limit_estimate,
    rate_fit,
)
from .cfl import (  # noqa: E402,F401
    CFLFactorSpec,
    DegreeMismatch,
    FrameForm,
    OnZeroSet,
    RankTooLarge,
    VectorSection,
    ZeroSection,
    cfl_factor_eval,
    cfl_product_eval,
    cfl_regularized_eval,
    minimal_section_eval,
)
from .catalog import (  # noqa: E402,F401
    CatalogEntry,
    disjoint_entries,
    quad_subcatalog,
    triangle_catalog,
    tube_entries,
)
from .checks import CheckResult, check_suite  # noqa: E402,F401
from .experiments import (  # noqa: E402,F401
    RunResult,
    SchemaError,
    canonical_json,
    emit_report,
    payload_hash,
    run_experiment,
    validate_doc,
)
