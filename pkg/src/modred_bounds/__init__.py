"""A priori error bounds for modular model reduction of interconnected LTI systems.

Submodules
----------
lti
    State-space models, frequency responses, Gramians and H-infinity norms.
reduction
    Balanced and frequency-weighted balanced truncation, rational weight fits.
interconnect
    Static interconnections, the coupled transfer function and the error system.
mu
    Structured singular value upper bounds and the D-scaling LMI kernel.
budget
    Bottom-up and top-down error-budget solvers.
casegen
    The three-beam benchmark and random coupled systems.
pipelines
    End-to-end bound comparison and top-down reduction workflows.
cli
    The ``modred`` command-line entry point.
"""

from .budget import (
    BoundResult,
    BudgetError,
    bisect_cross_check,
    bottom_up_freq,
    bottom_up_global,
    certify_stability,
    top_down_freq,
    top_down_global,
)
from .casegen import build_three_beam_benchmark, epsilon_c_profile, random_coupled_system
from .interconnect import (
    CoupledResponse,
    CoupledSystem,
    InterconnectionMatrix,
    check_internal_stability,
    check_wellposed,
    error_system_Ec,
    load_coupled_system,
    save_coupled_system,
    upper_lft_Gc,
)
from .lti import FrequencyGrid, LTIError, NumericalError, StateSpaceModel, hinf_norm
from .mu import BlockStructure, bisect_max_gamma, lmi_max_gamma, mu_lower_bound_sample, mu_upper_bound
from .pipelines import bottom_up_sweep, bound_comparison_row, top_down_pipeline
from .reduction import (
    PAPER_SUM,
    STANDARD_TWICE_SUM,
    a_priori_bound,
    balanced_truncate,
    fit_rational_weight,
    fw_balanced_truncate,
)

__all__ = [
    "a_priori_bound",
    "balanced_truncate",
    "bisect_cross_check",
    "bisect_max_gamma",
    "BlockStructure",
    "bottom_up_freq",
    "bottom_up_global",
    "bottom_up_sweep",
    "bound_comparison_row",
    "BoundResult",
    "BudgetError",
    "build_three_beam_benchmark",
    "certify_stability",
    "check_internal_stability",
    "check_wellposed",
    "CoupledResponse",
    "CoupledSystem",
    "epsilon_c_profile",
    "error_system_Ec",
    "fit_rational_weight",
    "FrequencyGrid",
    "fw_balanced_truncate",
    "hinf_norm",
    "InterconnectionMatrix",
    "lmi_max_gamma",
    "load_coupled_system",
    "LTIError",
    "mu_lower_bound_sample",
    "mu_upper_bound",
    "NumericalError",
    "PAPER_SUM",
    "random_coupled_system",
    "save_coupled_system",
    "STANDARD_TWICE_SUM",
    "StateSpaceModel",
    "top_down_freq",
    "top_down_global",
    "top_down_pipeline",
    "upper_lft_Gc",
]

__version__ = "0.1.0"
