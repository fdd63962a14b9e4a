"""Rate and power allocation for layered broadcast over fading channels.

The package optimizes how a transmitter splits its power across
superposed layers, and how much rate to put on each layer, when the
receiver-gain distribution is only observed through samples.  The
objective is either the expected decoded rate or the average rate of
the worst tail fraction of receivers, climbed through a smoothed
surrogate by mirror descent.  A meta-learning loop transfers
initializations across deployments, and closed-form guarantee bounds
size the dataset.
"""

from .errors import NumericalError, ParameterError, UnsupportedModelError
from .fading import (
    GainDataset,
    Mixture,
    Rayleigh,
    Rician,
    ccdf,
    marcum_q1,
    model_from_dict,
    model_from_json,
    model_to_json,
    pdf,
    sample_gains,
)
from .harness import (
    ExperimentSpec,
    ResultRow,
    evaluate,
    mix_seed,
    run_experiment,
    write_rows_csv,
)
from .ldm import (
    LayerAllocation,
    RiskSpec,
    cumulative_rates,
    interference,
    layer_rate,
    layer_rates,
    surrogate_rate,
    surrogate_rate_grad,
    total_rate,
)
from .meta import (
    MetaConfig,
    MetaTrace,
    TaskSet,
    inner_adapt,
    maml_train,
    meta_eg_step,
    meta_gd_step,
    meta_objective,
)
from .optim import (
    OptimConfig,
    OptimTrace,
    eg_step,
    gd_step,
    optimize,
    optimize_known_distribution,
)
from .risk import (
    RiskReport,
    analytic_cvar,
    analytic_mean_rate,
    analytic_outage_rate,
    empirical_cvar,
    empirical_mean_rate,
    empirical_outage_rate,
    nint,
    outage_index,
    smoothed_mean_rate,
    surrogate_empirical_cvar,
    surrogate_empirical_cvar_grad,
    tail_weights,
    variational_f,
)
from .theory import (
    BoundReport,
    InfiniteLayerSolution,
    ccdf_deviation_bound,
    cvar_gap_bound,
    expected_rate_gap_bound,
    exp_integral_e1,
    infinite_layer_rate,
    rayleigh_closed_form,
    sample_complexity,
)

__version__ = "0.1.0"

__all__ = [
    "BoundReport",
    "ExperimentSpec",
    "GainDataset",
    "InfiniteLayerSolution",
    "LayerAllocation",
    "MetaConfig",
    "MetaTrace",
    "Mixture",
    "NumericalError",
    "OptimConfig",
    "OptimTrace",
    "ParameterError",
    "Rayleigh",
    "ResultRow",
    "Rician",
    "RiskReport",
    "RiskSpec",
    "TaskSet",
    "UnsupportedModelError",
    "analytic_cvar",
    "analytic_mean_rate",
    "analytic_outage_rate",
    "ccdf",
    "ccdf_deviation_bound",
    "cumulative_rates",
    "cvar_gap_bound",
    "eg_step",
    "empirical_cvar",
    "empirical_mean_rate",
    "empirical_outage_rate",
    "evaluate",
    "exp_integral_e1",
    "expected_rate_gap_bound",
    "gd_step",
    "infinite_layer_rate",
    "inner_adapt",
    "interference",
    "layer_rate",
    "layer_rates",
    "maml_train",
    "marcum_q1",
    "meta_eg_step",
    "meta_gd_step",
    "meta_objective",
    "mix_seed",
    "model_from_dict",
    "model_from_json",
    "model_to_json",
    "nint",
    "outage_index",
    "optimize",
    "optimize_known_distribution",
    "pdf",
    "rayleigh_closed_form",
    "run_experiment",
    "sample_complexity",
    "sample_gains",
    "smoothed_mean_rate",
    "surrogate_empirical_cvar",
    "surrogate_empirical_cvar_grad",
    "surrogate_rate",
    "surrogate_rate_grad",
    "tail_weights",
    "total_rate",
    "variational_f",
    "write_rows_csv",
]
