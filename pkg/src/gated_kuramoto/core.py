"""Receiver-gated Kuramoto model: gate, wrapped distance, RHS, coherence.

Everything in this module is a pure function of its inputs.  Phases are
plain floats (radians); they are interpreted modulo 2*pi and canonicalized
to [0, 2*pi) only at API boundaries.  Internally (and in particular during
integration) phases may be carried as unwrapped reals.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

TWO_PI = 2.0 * np.pi

#: Below this coherence the mean phase is reported as 0 and flagged degenerate.
DEGENERATE_R = 1e-12


def canonicalize(theta):
    """Map angles to the canonical representative in [0, 2*pi).

    Accepts scalars or arrays; returns the same shape.
    """
    wrapped = np.mod(np.asarray(theta, dtype=float), TWO_PI)
    # np.mod may round up to exactly 2*pi for tiny negative inputs
    wrapped = np.where(wrapped >= TWO_PI, 0.0, wrapped)
    if np.ndim(theta) == 0:
        return float(wrapped)
    return wrapped


def wrapped_distance(theta, theta0):
    """Shortest signed angular displacement from ``theta0`` to ``theta``.

    Computed as atan2(sin(theta - theta0), cos(theta - theta0)), so the
    result lies in (-pi, pi] and is antisymmetric except at the boundary
    value pi, where both orders return +pi.
    """
    delta = np.asarray(theta, dtype=float) - np.asarray(theta0, dtype=float)
    d = np.arctan2(np.sin(delta), np.cos(delta))
    if np.ndim(d) == 0:
        return float(d)
    return d


class GateFrame(enum.Enum):
    """Reference frame in which the dead zone is held fixed.

    FIXED            gate argument is the raw oscillator phase.
    LINEAR_REFERENCE gate argument is theta_i - (omega_ref * t + psi0).
    MEAN_PHASE       gate argument is theta_i - psi(t), psi the population
                     mean phase (argument of the order parameter).
    """

    FIXED = "fixed"
    LINEAR_REFERENCE = "linear_reference"
    MEAN_PHASE = "mean_phase"

    @classmethod
    def from_string(cls, name: str) -> "GateFrame":
        try:
            return cls(name)
        except ValueError:
            valid = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown gate frame {name!r} (expected one of: {valid})")


@dataclass(frozen=True)
class GateParams:
    """Dead-zone receiver gate S.

    The gate is a double sigmoid:

        S(theta) = 1 - sigma(k*(d + w/2)) * sigma(k*(w/2 - d)),
        d = wrapped_distance(theta, theta0),

    which is ~0 inside the zone of width ``w`` centered at ``theta0`` and
    ~1 outside, with edge sharpness ``k``.  For every finite ``k`` the
    value stays strictly inside (0, 1); a disabled gate is identically 1.
    """

    theta0: float = 0.0
    w: float = np.pi
    k: float = 10.0
    enabled: bool = True
    frame: GateFrame = GateFrame.FIXED
    omega_ref: float = 0.0  # LINEAR_REFERENCE only: frame rotation rate
    psi0: float = 0.0       # LINEAR_REFERENCE only: frame phase at t=0

    def __post_init__(self):
        if self.enabled:
            if not (0.0 < self.w < TWO_PI):
                raise ValueError(f"dead-zone width must be in (0, 2*pi), got {self.w}")
            if not (self.k >= 0.0 and np.isfinite(self.k)):
                raise ValueError(f"gate sharpness must be finite and >= 0, got {self.k}")

    @classmethod
    def disabled(cls) -> "GateParams":
        """Gate that is identically 1 (classical Kuramoto coupling)."""
        return cls(enabled=False)


def gate_value(g: GateParams, theta_rel):
    """Evaluate the receiver gate at a phase already expressed in the gate frame.

    Callers are responsible for frame resolution (see
    ``resolve_gate_argument``); this function only applies the double
    sigmoid around ``g.theta0``.  Returns exactly 1 when the gate is
    disabled.  Accepts scalars or arrays.
    """
    if not g.enabled:
        if np.ndim(theta_rel) == 0:
            return 1.0
        return np.ones(np.shape(theta_rel))
    d = wrapped_distance(theta_rel, g.theta0)
    half = 0.5 * g.w
    return 1.0 - expit(g.k * (d + half)) * expit(g.k * (half - d))


def gate_derivative(g: GateParams, theta_rel):
    """Analytic dS/dtheta of the receiver gate.

    With a = k*(d + w/2), b = k*(w/2 - d) the chain rule gives

        dS/dtheta = k * sigma(a) * sigma(b) * (sigma(a) - sigma(b)),

    using sigma' = sigma*(1 - sigma).  Odd about theta0 and zero at the
    zone center.  A disabled gate has zero derivative everywhere.
    """
    if not g.enabled:
        if np.ndim(theta_rel) == 0:
            return 0.0
        return np.zeros(np.shape(theta_rel))
    d = wrapped_distance(theta_rel, g.theta0)
    half = 0.5 * g.w
    sa = expit(g.k * (d + half))
    sb = expit(g.k * (half - d))
    out = g.k * sa * sb * (sa - sb)
    if np.ndim(theta_rel) == 0:
        return float(out)
    return out


def mean_field(phases) -> complex:
    """Complex order parameter z = (1/N) * sum_j exp(i*theta_j)."""
    return complex(np.mean(np.exp(1j * np.asarray(phases, dtype=float))))


@dataclass(frozen=True)
class OrderParameter:
    """Coherence R in [0, 1] and mean phase psi in [0, 2*pi).

    ``degenerate`` is set when R < 1e-12, in which case psi is reported
    as 0 by convention (the mean phase is undefined at R = 0).
    """

    R: float
    psi: float
    degenerate: bool = False


def order_parameter(phases) -> OrderParameter:
    """Kuramoto order parameter R*exp(i*psi) = (1/N) sum_j exp(i*theta_j)."""
    z = mean_field(phases)
    R = abs(z)
    if R < DEGENERATE_R:
        return OrderParameter(R=R, psi=0.0, degenerate=True)
    return OrderParameter(R=R, psi=canonicalize(np.angle(z)))


def resolve_gate_argument(g: GateParams, theta_i: float, t: float, phases) -> float:
    """Phase at which oscillator i samples its gate, per the gate frame.

    FIXED returns theta_i itself; LINEAR_REFERENCE subtracts the rotating
    reference omega_ref*t + psi0; MEAN_PHASE subtracts the population mean
    phase (falling back to psi = 0 in the degenerate R = 0 case).  Result
    is canonicalized to [0, 2*pi).
    """
    return canonicalize(theta_i - _frame_offset(g, t, phases))


def gate_arguments(g: GateParams, t: float, phases) -> np.ndarray:
    """Vectorized ``resolve_gate_argument`` for all oscillators at once."""
    theta = np.asarray(phases, dtype=float)
    return canonicalize(theta - _frame_offset(g, t, theta))


def _frame_offset(g: GateParams, t: float, phases) -> float:
    if g.frame is GateFrame.FIXED:
        return 0.0
    if g.frame is GateFrame.LINEAR_REFERENCE:
        return g.omega_ref * t + g.psi0
    op = order_parameter(phases)
    return 0.0 if op.degenerate else op.psi


@dataclass(frozen=True)
class OmegaSpec:
    """Recipe for intrinsic frequencies, materialized once N is known.

    kind "identical":     omega_i = 2*pi/tau for all i.
    kind "period_range":  periods interpolate linearly from tau_min to
                          tau_max, omega_i = 2*pi / (tau_min +
                          (tau_max - tau_min)*(i-1)/(N-1)).
    kind "explicit":      values used verbatim (fixes N).
    """

    kind: str
    tau: float | None = None
    tau_range: tuple[float, float] | None = None
    values: tuple[float, ...] | None = None

    @classmethod
    def identical(cls, tau: float = 24.0) -> "OmegaSpec":
        return cls(kind="identical", tau=float(tau))

    @classmethod
    def period_range(cls, tau_min: float, tau_max: float) -> "OmegaSpec":
        return cls(kind="period_range", tau_range=(float(tau_min), float(tau_max)))

    @classmethod
    def explicit(cls, values) -> "OmegaSpec":
        return cls(kind="explicit", values=tuple(float(v) for v in values))

    def materialize(self, N: int) -> np.ndarray:
        if self.kind == "identical":
            return np.full(N, TWO_PI / self.tau)
        if self.kind == "period_range":
            lo, hi = self.tau_range
            periods = lo + (hi - lo) * np.arange(N) / (N - 1)
            return TWO_PI / periods
        if self.kind == "explicit":
            vals = np.asarray(self.values, dtype=float)
            if len(vals) != N:
                raise ValueError(f"explicit omega has length {len(vals)}, expected {N}")
            return vals
        raise ValueError(f"unknown omega spec kind {self.kind!r}")

    def to_jsonable(self) -> dict:
        if self.kind == "identical":
            return {"identical": self.tau}
        if self.kind == "period_range":
            return {"period_range": list(self.tau_range)}
        return {"explicit": list(self.values)}


@dataclass(frozen=True)
class ModelConfig:
    """All-to-all receiver-gated Kuramoto system of N oscillators."""

    N: int
    K: float
    omega: np.ndarray = field(repr=False)
    gate: GateParams = field(default_factory=GateParams.disabled)

    def __post_init__(self):
        if self.N < 2:
            raise ValueError(f"need at least 2 oscillators, got N={self.N}")
        if not (self.K >= 0.0 and np.isfinite(self.K)):
            raise ValueError(f"coupling strength must be finite and >= 0, got {self.K}")
        omega = np.array(self.omega, dtype=float)
        if omega.shape != (self.N,):
            raise ValueError(f"omega has shape {omega.shape}, expected ({self.N},)")
        if not np.all(np.isfinite(omega)):
            raise ValueError("omega entries must be finite")
        omega.setflags(write=False)
        object.__setattr__(self, "omega", omega)

    @classmethod
    def from_spec(cls, N: int, K: float, omega_spec: OmegaSpec,
                  gate: GateParams | None = None) -> "ModelConfig":
        return cls(N=N, K=K, omega=omega_spec.materialize(N),
                   gate=gate if gate is not None else GateParams.disabled())

    @classmethod
    def identical(cls, N: int, K: float, tau: float = 24.0,
                  gate: GateParams | None = None) -> "ModelConfig":
        return cls.from_spec(N, K, OmegaSpec.identical(tau), gate)

    @classmethod
    def period_range(cls, N: int, K: float, tau_min: float, tau_max: float,
                     gate: GateParams | None = None) -> "ModelConfig":
        return cls.from_spec(N, K, OmegaSpec.period_range(tau_min, tau_max), gate)

    def with_gate(self, gate: GateParams) -> "ModelConfig":
        return replace(self, gate=gate)


def pairwise_sine_sum(phases) -> np.ndarray:
    """sums_i = sum_j sin(theta_j - theta_i), direct O(N^2) evaluation."""
    theta = np.asarray(phases, dtype=float)
    return np.sin(theta[None, :] - theta[:, None]).sum(axis=1)


def mean_field_sine_sum(phases) -> np.ndarray:
    """Same sums as ``pairwise_sine_sum`` via the order parameter, O(N).

    Uses sum_j sin(theta_j - theta_i) = N * Im(z * exp(-i*theta_i)) with
    z the complex mean field; exact up to rounding, so the two routes
    agree to ~1e-12 relative.
    """
    theta = np.asarray(phases, dtype=float)
    z = np.mean(np.exp(1j * theta))
    return len(theta) * np.imag(z * np.exp(-1j * theta))


def rhs(cfg: ModelConfig, t: float, phases, method: str = "pairwise") -> np.ndarray:
    """Time derivative of the gated system.

        dtheta_i/dt = omega_i + (K/N) * S(arg_i) * sum_j sin(theta_j - theta_i)

    where arg_i is the frame-resolved gate argument.  With the gate
    disabled this is exactly the classical all-to-all Kuramoto field.

    ``method`` selects the coupling-sum evaluation: "pairwise" (direct
    O(N^2)) or "mean_field" (O(N) through the order parameter).
    """
    theta = np.asarray(phases, dtype=float)
    if len(theta) != cfg.N:
        raise ValueError(f"state has length {len(theta)}, expected {cfg.N}")
    if cfg.K == 0.0:
        return cfg.omega.copy()  # uncoupled flow; skip the (irrelevant) sums
    if method == "pairwise":
        sums = pairwise_sine_sum(theta)
    elif method == "mean_field":
        sums = mean_field_sine_sum(theta)
    else:
        raise ValueError(f"unknown rhs method {method!r}")
    if cfg.gate.enabled:
        s = gate_value(cfg.gate, theta - _frame_offset(cfg.gate, t, theta))
    else:
        s = 1.0
    return cfg.omega + (cfg.K / cfg.N) * s * sums
