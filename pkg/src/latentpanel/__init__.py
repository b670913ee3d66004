"""Two-stage estimation for heterogeneous panels with latent common risk.

Stage 1 fits unit-level exposures to observed covariates and common factors
by IV with defactored instruments; stage 2 maps the residual common
component to low-frequency observable proxies through high-dimensional
selection; Mean Group aggregation summarizes the heterogeneous coefficients.
A seeded Monte Carlo harness benchmarks the selection methods.
"""

__version__ = "0.1.0"

from .features import (
    FeaturePanel,
    OhlcvSeries,
    amihud,
    build_feature_panel,
    capweighted_market_vol,
    garman_klass,
    log_returns,
)
from .linalg import (
    FactorEstimate,
    Projector,
    annihilator,
    eigenvalue_ratio_count,
    extract_factors,
)
from .meangroup import MeanGroupResult, group_difference, mean_group
from .montecarlo import (
    DgpConfig,
    GridResult,
    MetricReport,
    generate_dgp,
    run_grid,
    score_selection,
)
from .panel import (
    GroupMap,
    ObservedFactors,
    PanelDataset,
    SemiEndogenousSet,
    aggregate_to_months,
    lag,
    trim_common,
)
from .selection import (
    CandidatePool,
    MtbConfig,
    SelectionResult,
    coordinate_descent_lasso,
    individual_lasso,
    mtb_select,
    pooled_lasso,
)
from .stage1 import (
    InstrumentMatrix,
    Stage1Config,
    Stage1Result,
    UnitIVFit,
    build_instruments,
    defactor_regressors,
    fit_unit_iv,
    stage1_run,
)
from .stage2 import (
    ExposureFit,
    LatentComponent,
    ShapleyReport,
    exposure_regressions,
    pca_mtb,
    residual_leading_component,
    shapley_owen,
)

__all__ = [name for name in dir() if not name.startswith("_")]
