"""Deterministic simulation of feedback-controlled monitored quantum systems.

The package propagates signal-resolved states (unnormalized conditional
states indexed by a causal classical signal) under sequential quantum
instruments, specializes to jump-channel + elapsed-time feedback with
exact piecewise-constant machinery, and cross-validates everything
against a stochastic trajectory oracle.
"""

__version__ = "0.1.0"

from .errors import (
    DegenerateFixedPointError,
    DivergentTailError,
    DomainError,
    NoFixedPointError,
    NumericalError,
    NumericalInputError,
    SignalRhoError,
    SingularOperatorError,
    StepSizeError,
    ValidationError,
)
from .model import (
    InstrumentSet,
    QuantumModel,
    gaussian_kraus,
    jump_instruments,
    jump_superop,
    liouvillian,
    nojump_generator,
    validate_instruments,
)
from .signals import (
    BinnedSpace,
    FiniteSpace,
    LatticeSpace,
    SignalRule,
    charge_rule,
    counting_rule,
    jump_time_rule,
    last_jump_rule,
    last_outcome_rule,
    low_pass_rule,
    product_rule,
)
from .engine_discrete import (
    ResolvedState,
    brute_force_resolved,
    evolve_n,
    marginal_state,
    signal_distribution,
    stationary_resolved,
    step,
)
from .engine_jump import (
    CoupledGenerator,
    FeedbackSchedule,
    Segment,
    TauGridState,
    channel_weights,
    combined_steady,
    coupled_generator,
    coupled_marginal,
    evolve_coupled,
    evolve_tau_grid,
    evolve_tau_grid_to,
    nojump_propagator,
    omega_map,
    propagator_integral,
    resolved_from_unconditional,
    steady_coupled,
    steady_unconditional,
    tau_grid_initial,
    waiting_time_stats,
)
from .limits import (
    ChargeWindow,
    charge_resolved_generator,
    diffusion_feedback_generator,
    evolve_charge,
    mean_charge,
    single_jump_feedback_generator,
)
from .trajectories import (
    EnsembleResult,
    TrajectoryRecord,
    ensemble_observable,
    ensemble_resolved,
    simulate,
    simulate_ensemble,
)
from .inversion import (
    InversionParams,
    build_schedule,
    pe_analytic,
    pe_numeric,
    pe_zero_temp,
    sweep_figures,
    tau0_max,
    tau1_opt,
)
from .scenario import Scenario, parse_scenario
