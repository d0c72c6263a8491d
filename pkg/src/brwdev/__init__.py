"""Deviation rates and small-ball exponents for branching random walks.

The package splits into five layers:

* :mod:`brwdev.model` - offspring/displacement laws and derived constants,
* :mod:`brwdev.rates` - analytic rate functions and variational exponents,
* :mod:`brwdev.oracle` - exact log-domain recursions for the maximum's law,
* :mod:`brwdev.simulate` - seeded Monte Carlo, schedules, strategy bounds,
* :mod:`brwdev.cli` - artifact-writing command line front end.
"""

from .errors import (
    AtomRequired,
    CapExceeded,
    DegenerateBoundary,
    EmptyFeasible,
    EmptySupport,
    FormulaMismatch,
    GridOverflow,
    InsufficientTail,
    NonZeroMean,
    NoRoot,
    NotSchroeder,
    OutOfRange,
    RequiresBoettcher,
    ResourceError,
    SubcriticalModel,
    ToolkitError,
    ValidationError,
)
from .model import (
    GumbelTail,
    LatticePMF,
    Model,
    ModelConstants,
    OffspringLaw,
    StepLaw,
    WeibullTail,
    extinction_probability,
    load_model_file,
    model_from_config,
    schroder_gamma,
    validate_model,
)
from .rates import (
    EnergyBound,
    RateReport,
    beta_moderate,
    large_dev_rate,
    log_mgf,
    m_n,
    min_energy_bound,
    rate_I,
    rate_bounded,
    rate_gumbel,
    rate_weibull,
    schroder_H,
    schroder_linear_rate,
    schroder_t_star,
    smallball_bounded_exponent,
    smallball_gumbel,
    smallball_weibull,
    speed_x_star,
    theta_star,
)
from .oracle import (
    DiscretizedStep,
    LogCdfGrid,
    PgfSeries,
    WalkPmf,
    conditioned_cdf,
    derivative_martingale_mean,
    discretize_step,
    gw_pmf,
    log_cdf_csv_lines,
    max_cdf_recursion,
    walk_pmf,
)
from .simulate import (
    EstimateRecord,
    ForwardResult,
    LinearTarget,
    ModerateTarget,
    StrategySchedule,
    constant_schedule,
    d_tail_slope,
    gumbel_schedule,
    oracle_tail,
    replica_stream,
    simulate_forward,
    smallball_strategy_bound,
    strategy_lower_bound,
    weibull_schedule,
)
from .report import (
    EllSchedule,
    LinearReport,
    ModerateReport,
    build_linear_report,
    build_moderate_report,
    parse_ell_schedule,
    render_linear_figure,
    render_moderate_figure,
)

__version__ = "0.1.0"
