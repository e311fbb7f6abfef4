"""Count statistics, simulation and photon-number reconstruction for
fibre-loop time-multiplexed photon-number-resolving detectors."""

__version__ = "0.1.0"

from .device import (
    DetectorConfig,
    GateSpec,
    ModeWeights,
    RejectionReport,
    TimingReport,
    derive_mode_weights,
    timing,
    weights_from_events,
)
from .distributions import (
    CountHistogram,
    Distribution,
    binomial_count_model,
    poisson_distribution,
    sample_histogram,
)
from .matrices import (
    ConditionalMatrix,
    LossMatrix,
    coherent_counts,
    conditional_matrix,
    forward,
    forward_physical,
    loss_matrix,
    transfer_matrix,
)
from .reconstruct import (
    BayesTable,
    ReconstructionResult,
    SingularMatrixError,
    bayes_table,
    fit_binomial,
    fit_poisson_forward,
    invert,
    ml_reconstruct,
    monte_carlo_error_bars,
)
from .sim import ShotRecord, SimulationResult, SourceSpec, simulate, sweep_fock_diagonal

__all__ = [
    "__version__",
    "DetectorConfig",
    "GateSpec",
    "ModeWeights",
    "RejectionReport",
    "TimingReport",
    "derive_mode_weights",
    "timing",
    "weights_from_events",
    "CountHistogram",
    "Distribution",
    "binomial_count_model",
    "poisson_distribution",
    "sample_histogram",
    "ConditionalMatrix",
    "LossMatrix",
    "coherent_counts",
    "conditional_matrix",
    "forward",
    "forward_physical",
    "loss_matrix",
    "transfer_matrix",
    "BayesTable",
    "ReconstructionResult",
    "SingularMatrixError",
    "bayes_table",
    "fit_binomial",
    "fit_poisson_forward",
    "invert",
    "ml_reconstruct",
    "monte_carlo_error_bars",
    "ShotRecord",
    "SimulationResult",
    "SourceSpec",
    "simulate",
    "sweep_fock_diagonal",
]
