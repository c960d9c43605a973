"""Simulation and estimation toolkit for a continuously monitored squeezed mode.

The package integrates the conditional Gaussian dynamics of a lossy bosonic
mode under homodyne monitoring, propagates frequency derivatives alongside
the state, evaluates the information functionals that bound frequency
estimation, and exposes the simulator to reinforcement-learning trainers
through a line-delimited reset/step protocol.
"""

from .model import (
    GaussianState,
    SystemMatrices,
    SystemParams,
    build_matrices,
    perpendicular_squeezing_db,
    purity,
    squeezing_db,
    stability_check,
    steady_state_covariance,
    unconditional_steady_state,
)
from .metrology import (
    FisherReport,
    StrongMeasurementSpec,
    effective_qfi,
    fhom_increment,
    final_homodyne_fi,
    gaussian_qfi,
    optimize_final_homodyne,
    qcrb_bound,
    reward_increment,
)
from .policies import (
    NeuralPolicy,
    NeuralWeights,
    NoControl,
    OpenLoop,
    load_weights,
    neural_act,
    save_weights,
)
from .trajectory import (
    EnsembleRecord,
    InitialCondition,
    RandomInit,
    StepResult,
    TangentState,
    TrajectoryState,
    UnphysicalStateError,
    integrate_covariance,
    reset,
    run_ensemble,
    run_trajectory,
    step,
    write_trace_csv,
)

__version__ = "0.1.0"
