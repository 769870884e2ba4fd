"""Receiver-gated Kuramoto oscillators with phase-response dead zones."""

from .core import (GateFrame, GateParams, ModelConfig, OmegaSpec,
                   OrderParameter, canonicalize, gate_derivative, gate_value,
                   order_parameter, resolve_gate_argument, rhs,
                   wrapped_distance)
from .integrator import (Direction, EventSpec, IntegrationConfig, Trajectory,
                         integrate, integrate_with_events, trajectory_to_csv)
from .analysis import (LockKind, LockingVerdict, PoincareRecord,
                       classify_locking, convergence_time, delta_max,
                       kuramoto_potential, poincare_section,
                       potential_descent_rate)
from .locked import (HeterogeneitySpec, LockedProfile, StabilityReport,
                     StabilityVerdict, jacobian, locked_frequency_identity,
                     locked_residual, perturbative_branch, solve_locked,
                     solve_locked_continuation, stability)
from .harness import (InitMode, InitSpec, RunSetup, SweepSpec, fit_inverse_K,
                      initial_phases, robustness_sweep_k_N, run_experiment)
from .errors import (ConfigError, DegenerateFit, GatedKuramotoError,
                     NonFiniteState, PreconditionViolated, SingularJacobian,
                     StepSizeUnderflow)

__version__ = "0.1.0"
