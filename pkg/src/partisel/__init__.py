"""Partition-constrained subset selection via a multinoulli relaxation."""

from .core import (
    Partition,
    ProtocolError,
    SetFunctionHandle,
    StateSpaceError,
    Subset,
    WeakRatioEstimate,
    estimate_weak_ratios,
    feasibility_check,
    normalize_empty,
)
from .extension import (
    EvalTally,
    RatioParams,
    SpiderState,
    auxiliary_gradient_sample,
    estimate_gradient,
    estimate_hessian_entries,
    exact_gradient,
    exact_value,
    sample_auxiliary_z,
    sample_draws,
    spider_init,
    spider_update,
)
from .geometry import (
    convex_step,
    linear_argmax_subset,
    linear_max_over_domain,
    project,
    scaled_indicator,
    uniform_point,
    zero_point,
)
from .objectives import (
    aoptimal_build,
    coverage_build,
    dpp_build,
    ekf_aoptimal_eval,
    ekf_aoptimal_handle,
    facility_location_eval,
    facility_location_handle,
    libsvm_parse,
    spd_cholesky_det,
    spd_inverse_trace,
)
from .offline import (
    ScgConfig,
    SgaConfig,
    SolveTrace,
    multinoulli_scg,
    multinoulli_sga,
    residual_random_greedy,
    standard_greedy,
)
from .online import (
    LinearOracle,
    OnlineRound,
    OscgConfig,
    OscgSession,
    OsgaSession,
    hindsight_best,
    oracle_step,
    oscg_round,
    osga_round,
    rho_regret,
)
from .rounding import (
    RoundingConfig,
    best_of_rounds,
    round_naive,
    round_without_replacement,
)
from .tracking import Scenario, build_round_objective, run_episode, step_targets

__version__ = "0.1.0"
