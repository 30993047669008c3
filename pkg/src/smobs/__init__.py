"""Sliding-mode unknown-input observer for external torque estimation.

Estimates disturbance torques on Euler-Lagrange systems from position
measurements alone: the plant is linearized through the general momentum
(no inertia-matrix inverse anywhere in the observer), a structured LMI
yields the Luenberger gain, and a boundary-layer sliding injection plus
equivalent-control filtering recovers the disturbance.
"""

from .dynamics import (
    Bounds,
    DisturbanceProfile,
    IdentifiedModel,
    RobotModel,
    SimState,
    SyntheticArm,
    TwoLinkArm,
    differentiate_position,
    disturbance,
    eval_dynamics,
    pd_controller,
    reference_trajectory,
    step,
)
from .linearization import (
    AuxiliaryInput,
    UncertaintyBudget,
    canonical_matrices,
    compute_mdot,
    compute_u,
    compute_zeta,
    estimate_sup_dm,
    lemma1_rank_check,
    lift_state,
    uncertainty_budget,
)
from .synthesis import (
    InfeasibleSynthesis,
    LyapunovBlocks,
    ObserverGains,
    SynthesisError,
    SynthesisSpec,
    check_lmi_feasible,
    derive_smo_gains,
    load_gains,
    save_gains,
    schur_checks,
    solve_lmi,
    synthesize,
    verify_eigenvalues,
    verify_hinf,
)
from .observer import (
    MomentumObserver,
    ObserverDivergence,
    ObserverState,
    SlidingDiagnostics,
    momentum_observer_step,
    reaching_time_bound,
    rho_gain,
    smo_step,
    switching_term,
)
from .harness import (
    ExperimentConfig,
    Metrics,
    RunRecord,
    boundary_layer_for,
    compute_metrics,
    experiment1_config,
    export_record,
    load_config,
    noise_floor,
    null_config,
    reaching_config,
    run_experiment,
    save_config,
    step_config,
)

__version__ = "0.1.0"
