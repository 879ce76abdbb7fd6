"""Four-photon entanglement-swapping simulator.

Two singlet pairs, a joint Bell measurement on the inner photons, and
polarization analyzers on the outer ones — with a configurable temporal
order of the measurements; CHSH estimation with post-selection; stage-wise
entanglement of the outer pair; and a classical hidden-variable engine with
record-comparing discard rules for the counterpoint.
"""

__version__ = "0.1.0"

from .analysis import (
    ChshReport,
    CorrelationEstimate,
    InsufficientDataError,
    SelectionFilter,
    UndefinedPredictionError,
    chsh,
    correlation,
    predicted_correlation,
)
from .classical import (
    BlindCheckReport,
    ClassicalConfig,
    ClassicalRecord,
    DiscardRule,
    HiddenVariableModel,
    apply_discard,
    pr_box_rule,
    quantum_mimic_rule,
    random_fourier_model,
    run_lhv,
    settings_blind_check,
    sign_model,
    uniform_model,
)
from .entanglement import TwoQubitMetrics, concurrence, metrics_for, negativity
from .measure import (
    AnalyzerAngle,
    BsmMode,
    BsmOutcome,
    RandomSource,
    bell_measurement,
    measure_qubit,
    outcome_distribution,
    polarization_observable,
)
from .protocol import (
    ExperimentConfig,
    Ordering,
    StageSnapshot,
    TrialRecord,
    exact_joint_distribution,
    run_batch,
    run_trial,
    stage_entanglement_report,
)
from .qstate import (
    BellKind,
    DensityMatrix,
    PureState,
    bell_state,
    partial_trace,
    prepare_swap_input,
    tensor,
    to_density,
)

__all__ = [
    "__version__",
    "AnalyzerAngle",
    "BellKind",
    "BlindCheckReport",
    "BsmMode",
    "BsmOutcome",
    "ChshReport",
    "ClassicalConfig",
    "ClassicalRecord",
    "CorrelationEstimate",
    "DensityMatrix",
    "DiscardRule",
    "ExperimentConfig",
    "HiddenVariableModel",
    "InsufficientDataError",
    "Ordering",
    "PureState",
    "RandomSource",
    "SelectionFilter",
    "StageSnapshot",
    "TrialRecord",
    "TwoQubitMetrics",
    "UndefinedPredictionError",
    "apply_discard",
    "bell_measurement",
    "bell_state",
    "chsh",
    "concurrence",
    "correlation",
    "exact_joint_distribution",
    "measure_qubit",
    "metrics_for",
    "negativity",
    "outcome_distribution",
    "partial_trace",
    "polarization_observable",
    "pr_box_rule",
    "predicted_correlation",
    "prepare_swap_input",
    "quantum_mimic_rule",
    "random_fourier_model",
    "run_batch",
    "run_lhv",
    "run_trial",
    "settings_blind_check",
    "sign_model",
    "stage_entanglement_report",
    "tensor",
    "to_density",
    "uniform_model",
]
