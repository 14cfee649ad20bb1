"""Uniform tail bounds for parametric U-statistic deviation fields.

The library splits into five layers: envelope calculus (``envelopes``),
empirical moment and tail estimation (``empirics``), covering numbers and
entropy integrals on finite semi-metric spaces (``entropy``), the seeded
U-statistic simulation engine (``engine``), and the bound pipeline tying
them together (``bounds``).  The ``ustattails`` command drives the same
pipeline from config files.
"""

from .envelopes import (
    MomentEnvelope,
    MomentTable,
    constant_envelope,
    envelope_norm,
    exp_power_envelope,
    fenchel_exponent,
    log_maximum_bound,
    make_envelope,
    power_log_envelope,
    rosenthal_lift,
    tabulated_envelope,
    tail_bound,
)
from .empirics import (
    FieldSamples,
    TailCurve,
    column_moments,
    empirical_moments,
    empirical_tail,
    envelope_distance,
    natural_envelope,
)
from .entropy import (
    EntropyIntegral,
    FiniteMetricSpace,
    covering_bounds,
    covering_number,
    entropy,
    entropy_dimension,
    entropy_integral,
    integral_trend,
    space_from_points,
)
from .engine import (
    Decomposition,
    Exact,
    FieldDecomposition,
    Incomplete,
    Kernel,
    Sampler,
    UStatResult,
    UVariance,
    alphabet_sampler,
    attach_alphabet,
    decompose_field,
    deviation_scale,
    draw_data,
    field_rank,
    hoeffding_decompose,
    lognormal_sampler,
    make_kernel,
    normal_sampler,
    normalized_deviation,
    pareto_sampler,
    parse_sampler,
    rademacher_sampler,
    simulate_panel,
    u_statistic,
    u_statistic_panel,
    uniform_sampler,
    variance_u,
    variance_value,
)
from .bounds import (
    BoundReport,
    ComparisonReport,
    MomentGrowth,
    calibrate_log_power,
    closed_form_tail,
    compare_curves,
    log_power_exponent,
    moment_growth_check,
    power_log_rate,
    report_text,
    tail_lower_bound,
    uniform_tail_report,
)

__version__ = "0.1.0"

__all__ = [
    "MomentEnvelope",
    "MomentTable",
    "constant_envelope",
    "envelope_norm",
    "exp_power_envelope",
    "fenchel_exponent",
    "log_maximum_bound",
    "make_envelope",
    "power_log_envelope",
    "rosenthal_lift",
    "tabulated_envelope",
    "tail_bound",
    "FieldSamples",
    "TailCurve",
    "column_moments",
    "empirical_moments",
    "empirical_tail",
    "envelope_distance",
    "natural_envelope",
    "EntropyIntegral",
    "FiniteMetricSpace",
    "covering_bounds",
    "covering_number",
    "entropy",
    "entropy_dimension",
    "entropy_integral",
    "integral_trend",
    "space_from_points",
    "Decomposition",
    "Exact",
    "FieldDecomposition",
    "Incomplete",
    "Kernel",
    "Sampler",
    "UStatResult",
    "UVariance",
    "alphabet_sampler",
    "attach_alphabet",
    "decompose_field",
    "deviation_scale",
    "draw_data",
    "field_rank",
    "hoeffding_decompose",
    "lognormal_sampler",
    "make_kernel",
    "normal_sampler",
    "normalized_deviation",
    "pareto_sampler",
    "parse_sampler",
    "rademacher_sampler",
    "simulate_panel",
    "u_statistic",
    "u_statistic_panel",
    "uniform_sampler",
    "variance_u",
    "variance_value",
    "BoundReport",
    "ComparisonReport",
    "MomentGrowth",
    "calibrate_log_power",
    "closed_form_tail",
    "compare_curves",
    "log_power_exponent",
    "moment_growth_check",
    "power_log_rate",
    "report_text",
    "tail_lower_bound",
    "uniform_tail_report",
]
