"""Numerical toolkit for quantized metrics on the invariant model curve.

Layer map: ``hermgeo`` is the finite-dimensional symmetric space of
positive Hermitian matrices; ``toric_cp1`` reduces invariant potentials to
convex functions of the log coordinate with exact piecewise-linear density
bookkeeping; ``quantmaps`` moves between potentials and section metrics;
``mabuchi`` builds weak geodesics and distance functionals; ``ladder``
chains regularization, smoothing, and quantization; ``harness`` wraps the
named experiments behind deterministic configs and reports.
"""

from .errors import (
    CapExhaustedError,
    ConvergenceError,
    DimensionMismatchError,
    HermitianDefectError,
    KquantError,
    NotPositiveDefiniteError,
    NotPshError,
)
from .hermgeo import (
    MatrixGeodesic,
    PosDefMetric,
    geodesic_eval,
    geodesic_speed,
    geodesic_through,
    hat_distance,
    metric_inner,
    sym_exp,
    sym_log,
    sym_sqrt,
)
from .toric_cp1 import (
    BackgroundForm,
    InvariantPotential,
    LineBundleModel,
    ProductPotential,
    QuadratureGrid,
    TwoDGrid,
    build_grid,
    build_model,
    build_product_grid,
    density_defect,
    fubini_study,
    in_positive_class,
    integrate,
    integrate_2d,
    load_potential,
    ma_density,
    ma_density_2d,
    promote,
    quantizing_model,
    save_potential,
    semipositive_big,
    sup_diff,
    total_mass,
    zero_potential,
)
from .quantmaps import (
    GramMatrix,
    bergman_roundtrip,
    fs,
    fs_along_geodesic,
    fs_from_log_diag,
    hilb,
    hilb_log_diag,
    load_gram,
    save_gram,
)
from .mabuchi import (
    GeodesicSurface,
    boundary_gaps,
    compare_with_sweep,
    convexity_defect,
    dp_endpoint,
    dp_endpoint_detail,
    dp_proxy,
    envelope_sweep,
    ma_residual,
    save_surface,
    smooth_decreasing,
    surface_summary,
    time_lipschitz,
    weak_geodesic,
)
from .ladder import (
    LadderConfig,
    LadderReport,
    LadderRung,
    budget_defect,
    run_ladder,
    save_report as save_ladder_report,
    select_indices,
    verify_replay,
)
from .harness import (
    EXPERIMENTS,
    ExperimentConfig,
    ExperimentReport,
    SeriesTable,
    Verdict,
    emit_report,
    fit_branch,
    haar_unitary,
    rate_band,
    parse_report,
    run_experiment,
    seeded_rng,
    spectrum,
)

__version__ = "0.1.0"
