"""Ensemble data assimilation for highly oscillatory constrained dynamics.

Models with a stiff restoring potential (1/2 eps^-2) g(q)^T K g(q) + V(q),
symplectic and thermostatted integrators, a blended fast/slow propagator,
square-root ensemble analysis, and two post-analysis rebalancing methods
(penalty relaxation and pseudo observations of the constraint), plus the
linear stability analysis of the blended map on harmonic test problems.
"""
from .balancing import (
    PenaltyConfig,
    PenaltyResult,
    penalty_balance_ensemble,
    penalty_linearized,
    penalty_newton,
    pseudo_obs_balance,
    regularize_covariance,
)
from .diagnostics import (
    RunMetrics,
    action_variable,
    action_variable_explicit,
    correction_force,
    ensemble_diagnostics,
    fast_frequency,
    oscillatory_energy,
    rmse_momentum_tangential,
    rmse_position,
    total_energy,
)
from .experiments import (
    ExperimentConfig,
    SimulateResult,
    SweepResult,
    TwinResult,
    generate_observations,
    generate_reference,
    load_config,
    parse_config,
    run_twin_experiment,
    simulate_run,
    sweep,
)
from .filters import (
    Ensemble,
    ObservationModel,
    enkf_perturbed_analysis,
    esrf_analysis,
    inflate,
    kalman_update,
)
from .integrators import (
    BlendSchedule,
    advance,
    blended_advance,
    blended_forecast,
    blended_step,
    langevin_step,
    ou_momentum_update,
    rattle_step,
    stormer_verlet_step,
    tangential_momentum_step,
)
from .models import (
    ConvergenceError,
    SingularConfigurationError,
    StateVector,
    StiffSystem,
    balance_initial_state,
    coupled_oscillator,
    double_pendulum,
    elliptic_pendulum,
    harmonic_oscillator,
    lagrange_multiplier,
    soft_constraint_residual,
    tangential_projector,
)
from .stability import (
    LinearFlowReport,
    alpha_pm,
    compare_coupled_matrix,
    coupled_flow_matrix,
    eigen_report,
    fast_slow_transform,
    harmonic_discriminant,
    harmonic_eigenvalues,
    harmonic_flow_matrix,
    harmonic_stability_grid,
)

__version__ = "0.1.0"
