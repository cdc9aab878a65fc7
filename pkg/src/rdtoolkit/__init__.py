"""Regression discontinuity analysis toolkit.

Continuity-based estimation (local polynomial point estimators with
conventional and robust bias-corrected inference), local randomization
inference (window selection, Fisherian and large-sample tests), a
falsification battery, RD plots, and power/simulation utilities, all
behind a reproducible CLI.
"""

__version__ = "0.1.0"

from .bandwidth import (
    BandwidthSelection,
    OracleBandwidth,
    kernel_constants,
    mse_constant,
    oracle_mse_bandwidth,
    select_ce_bandwidth,
    select_mse_bandwidth,
)
from .continuity import (
    CutoffEstimate,
    DiscreteEstimate,
    PooledEstimate,
    RbcResult,
    RdEstimate,
    discrete_estimate,
    fuzzy_estimate,
    kink_estimate,
    normalize_and_pool,
    rbc_inference,
    sharp_estimate,
)
from .dgps import (
    DgpSpec,
    curved_benchmark,
    linear_dgp,
    piecewise_balance_dgp,
    simulate_sample,
    step_dgp,
)
from .locrand import (
    Bernoulli,
    FisherCi,
    FisherResult,
    FixedMargins,
    LocRandEstimate,
    NeymanResult,
    Window,
    WindowSelection,
    diff_in_means,
    fisher_ci,
    fisher_pvalue,
    fuzzy_locrand,
    make_window,
    neyman_ci,
    select_window,
)
from .lpoly import FitSpec, LocalFit, fit_one_side, fit_values, kernel_weight
from .plotting import PlotBin, RdPlotData, build_rdplot, render_svg
from .powersim import (
    CoverageResult,
    PowerResult,
    mde,
    power_at,
    power_curve,
    required_n,
    simulate_coverage,
)
from .reports import canonical_json, make_report, sha256_file, write_report
from .rng import substream
from .sample import (
    AssignmentView,
    MassPointSummary,
    RdSample,
    assignment,
    ingest_csv,
    mass_points,
)
from .validation import (
    BalanceRecord,
    BinomialRecord,
    DensityRecord,
    DonutRecord,
    PlaceboRecord,
    SensitivityRecord,
    ValidationReport,
    bandwidth_sensitivity,
    binomial_test,
    covariate_balance,
    density_test,
    donut_hole,
    placebo_cutoffs,
    run_battery,
)

__all__ = [
    "AssignmentView",
    "BalanceRecord",
    "BandwidthSelection",
    "Bernoulli",
    "BinomialRecord",
    "CoverageResult",
    "CutoffEstimate",
    "DensityRecord",
    "DgpSpec",
    "DiscreteEstimate",
    "DonutRecord",
    "FisherCi",
    "FisherResult",
    "FitSpec",
    "FixedMargins",
    "LocRandEstimate",
    "LocalFit",
    "MassPointSummary",
    "NeymanResult",
    "OracleBandwidth",
    "PlaceboRecord",
    "PlotBin",
    "PooledEstimate",
    "PowerResult",
    "RbcResult",
    "RdEstimate",
    "RdPlotData",
    "RdSample",
    "SensitivityRecord",
    "ValidationReport",
    "Window",
    "WindowSelection",
    "assignment",
    "bandwidth_sensitivity",
    "binomial_test",
    "build_rdplot",
    "canonical_json",
    "covariate_balance",
    "curved_benchmark",
    "density_test",
    "diff_in_means",
    "discrete_estimate",
    "donut_hole",
    "fisher_ci",
    "fisher_pvalue",
    "fit_one_side",
    "fit_values",
    "fuzzy_estimate",
    "fuzzy_locrand",
    "ingest_csv",
    "kernel_constants",
    "kernel_weight",
    "kink_estimate",
    "linear_dgp",
    "make_report",
    "make_window",
    "mass_points",
    "mde",
    "mse_constant",
    "neyman_ci",
    "normalize_and_pool",
    "oracle_mse_bandwidth",
    "piecewise_balance_dgp",
    "placebo_cutoffs",
    "power_at",
    "power_curve",
    "rbc_inference",
    "render_svg",
    "required_n",
    "run_battery",
    "select_ce_bandwidth",
    "select_mse_bandwidth",
    "select_window",
    "sha256_file",
    "sharp_estimate",
    "simulate_coverage",
    "simulate_sample",
    "step_dgp",
    "substream",
    "write_report",
    "__version__",
]
