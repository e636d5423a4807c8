"""Finite-sample dynamic-watermarking tests and sensor-switching control.

Simulates switched LTI closed loops with a private watermark excitation,
maintains the streaming consistency-test statistics with their concentration
bounds, and drives a dwell-time-constrained sensor-switching policy. The
``experiments`` module and the ``wmswitch`` CLI run reproducible Monte Carlo
batches over the lane-keeping case study or custom models.
"""

from .attacks import AttackDiagnostics, Attacker, AttackSpec, attack_value, update_diagnostics
from .detector import (
    BoundConstants,
    DetectorTrack,
    TestAccumulator,
    bound_c1,
    bound_c2,
    bound_c3,
    hoeffding_tail,
    kbar,
    threshold,
)
from .experiments import (
    ScenarioConfig,
    TrialResult,
    TrialRuntime,
    lane_keeping_gains,
    lane_keeping_preset,
    load_config,
    run_batch,
    run_monte_carlo,
    run_trial,
)
from .linalg import (
    is_schur_stable,
    matrix_power,
    max_eigenvalue_symmetric,
    solve_discrete_lyapunov,
    spectral_norm,
    spectral_radius,
    symmetric_dilation,
)
from .plant import (
    ControllerConfig,
    PlantModel,
    SimState,
    StepOutput,
    build_augmented_matrices,
    compute_kprime,
    design_or_validate_gains,
    dwell_time_tau,
    init_sim_state,
    sample_bounded_noise,
    step,
)
from .switching import SwitchState, decide, dwell_violations

__all__ = [
    "AttackDiagnostics",
    "Attacker",
    "AttackSpec",
    "BoundConstants",
    "ControllerConfig",
    "DetectorTrack",
    "PlantModel",
    "ScenarioConfig",
    "SimState",
    "StepOutput",
    "SwitchState",
    "TestAccumulator",
    "TrialResult",
    "TrialRuntime",
    "attack_value",
    "bound_c1",
    "bound_c2",
    "bound_c3",
    "build_augmented_matrices",
    "compute_kprime",
    "decide",
    "design_or_validate_gains",
    "dwell_time_tau",
    "dwell_violations",
    "hoeffding_tail",
    "init_sim_state",
    "is_schur_stable",
    "kbar",
    "lane_keeping_gains",
    "lane_keeping_preset",
    "load_config",
    "matrix_power",
    "max_eigenvalue_symmetric",
    "run_batch",
    "run_monte_carlo",
    "run_trial",
    "sample_bounded_noise",
    "solve_discrete_lyapunov",
    "spectral_norm",
    "spectral_radius",
    "step",
    "symmetric_dilation",
    "threshold",
    "update_diagnostics",
]
