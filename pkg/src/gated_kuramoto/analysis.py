"""Observables and classifiers for gated-oscillator trajectories.

Kuramoto potential and its descent rate, convergence time, phase
separation, Poincare sections on the mean-phase slice, and the
locked-vs-drifting verdict derived from crossing statistics.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .core import (GateFrame, ModelConfig, gate_value, order_parameter,
                   wrapped_distance)
from .errors import PreconditionViolated
from .integrator import (Direction, EventSpec, IntegrationConfig, Trajectory,
                         integrate_with_events)
from ._fsio import atomic_write_json, atomic_write_text, fmt


def kuramoto_potential(phases) -> float:
    """U = -(1/2N) * sum_ij cos(theta_i - theta_j).

    Computed by the direct double sum; the identity U = -(N/2) * R^2 is
    left to tests as an independent cross-check.
    """
    theta = np.asarray(phases, dtype=float)
    n = len(theta)
    return float(-0.5 / n * np.cos(theta[None, :] - theta[:, None]).sum())


def potential_gradient(phases) -> np.ndarray:
    """dU/dtheta_i = (1/N) * sum_j sin(theta_i - theta_j)."""
    theta = np.asarray(phases, dtype=float)
    return np.sin(theta[:, None] - theta[None, :]).sum(axis=1) / len(theta)


def potential_descent_rate(cfg: ModelConfig, phases) -> float:
    """dU/dt along identical-frequency, fixed-frame dynamics (always <= 0).

    Equals -K * sum_i S(theta_i) * (dU/dtheta_i)^2, the state-dependent
    dissipation of the Kuramoto potential.  A common rotation omega does
    not contribute because the gradient sums to zero.
    """
    if np.ptp(cfg.omega) != 0.0:
        raise PreconditionViolated("descent rate requires identical frequencies")
    if cfg.gate.enabled and cfg.gate.frame is not GateFrame.FIXED:
        raise PreconditionViolated("descent rate requires the fixed gate frame")
    theta = np.asarray(phases, dtype=float)
    grad = potential_gradient(theta)
    s = gate_value(cfg.gate, theta)
    return float(-cfg.K * np.sum(s * grad * grad))


def convergence_time(traj: Trajectory, tol: float = 1e-4) -> float | None:
    """First sampled time with |1 - R(t)| < tol, or None if never reached."""
    hit = np.nonzero(np.abs(1.0 - traj.R_series) < tol)[0]
    if len(hit) == 0:
        return None
    return float(traj.times[hit[0]])


def delta_max(profile) -> float:
    """Largest pairwise circular distance within a phase profile, in [0, pi]."""
    theta = np.asarray(profile, dtype=float)
    if len(theta) < 2:
        raise ValueError("need at least two phases")
    d = wrapped_distance(theta[:, None], theta[None, :])
    return float(np.max(np.abs(d)))


# -- circular statistics ------------------------------------------------------

def circular_mean(values) -> float:
    """Mean direction of angles, in (-pi, pi]."""
    z = np.mean(np.exp(1j * np.asarray(values, dtype=float)))
    return float(np.angle(z))


def circular_std(values) -> float:
    """Circular standard deviation sqrt(-2 ln Rbar), Rbar the resultant length."""
    rbar = np.abs(np.mean(np.exp(1j * np.asarray(values, dtype=float))))
    rbar = min(float(rbar), 1.0)
    return float(np.sqrt(-2.0 * np.log(rbar))) if rbar > 0.0 else np.inf


# -- Poincare sections --------------------------------------------------------

@dataclass
class PoincareRecord:
    """Mean-phase section crossings: times and per-oscillator relative phases.

    ``rel_phases[c, i]`` is wrapped_distance(theta_i, psi) at crossing c.
    Crossings at t <= ``transient_cut`` are kept in the record but excluded
    from statistics.
    """

    t_cross: np.ndarray
    rel_phases: np.ndarray
    transient_cut: float

    def __post_init__(self):
        self.t_cross.setflags(write=False)
        self.rel_phases.setflags(write=False)

    @property
    def retained(self) -> np.ndarray:
        return self.t_cross > self.transient_cut

    @property
    def n_retained(self) -> int:
        return int(np.count_nonzero(self.retained))


def poincare_section(cfg: ModelConfig, icfg: IntegrationConfig, y0,
                     target: float = np.pi, transient_cut: float = 900.0,
                     direction: Direction = Direction.INCREASING,
                     refine_tol: float = 1e-10) -> PoincareRecord:
    """Sample relative phases each time the mean phase passes ``target``."""
    ev = EventSpec(target=target, direction=direction, refine_tol=refine_tol)
    _, (times, states) = integrate_with_events(cfg, icfg, y0, ev)
    rel = np.empty_like(states)
    for c in range(len(times)):
        psi = order_parameter(states[c]).psi
        rel[c] = wrapped_distance(states[c], psi)
    return PoincareRecord(t_cross=times, rel_phases=rel, transient_cut=transient_cut)


class LockKind(enum.Enum):
    LOCKED = "locked"
    DRIFTING = "drifting"
    INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class LockingVerdict:
    """Outcome of the Poincare-spread test.

    ``spread`` is the largest per-oscillator circular standard deviation
    of relative phases over the retained crossings.
    """

    kind: LockKind
    spread: float
    n_crossings: int


def classify_locking(rec: PoincareRecord, lock_tol: float = 1e-3,
                     drift_tol: float = 1e-2) -> LockingVerdict:
    """Locked if spread < lock_tol, Drifting if spread >= drift_tol.

    The order-of-magnitude gap between the thresholds is a deliberate
    Indeterminate band for near-transition runs; fewer than 10 retained
    crossings is also Indeterminate.
    """
    mask = rec.retained
    n = int(np.count_nonzero(mask))
    if n < 2:
        return LockingVerdict(LockKind.INDETERMINATE, float("nan"), n)
    rel = rec.rel_phases[mask]
    spread = float(max(circular_std(rel[:, i]) for i in range(rel.shape[1])))
    if n < 10:
        return LockingVerdict(LockKind.INDETERMINATE, spread, n)
    if spread < lock_tol:
        kind = LockKind.LOCKED
    elif spread >= drift_tol:
        kind = LockKind.DRIFTING
    else:
        kind = LockKind.INDETERMINATE
    return LockingVerdict(kind, spread, n)


def locked_frequency_estimate(rec: PoincareRecord) -> float | None:
    """2*pi over the mean interval between retained crossings (one per turn)."""
    t = rec.t_cross[rec.retained]
    if len(t) < 2:
        return None
    return float(2.0 * np.pi * (len(t) - 1) / (t[-1] - t[0]))


def poincare_to_csv(rec: PoincareRecord, path) -> None:
    """Write ``t_cross,rel_1,...,rel_N`` (all crossings, 17 digits)."""
    n = rec.rel_phases.shape[1]
    lines = ["t_cross," + ",".join(f"rel_{i + 1}" for i in range(n))]
    for c in range(len(rec.t_cross)):
        cells = [fmt(rec.t_cross[c])]
        cells.extend(fmt(v) for v in rec.rel_phases[c])
        lines.append(",".join(cells))
    atomic_write_text(path, "\n".join(lines) + "\n")


def verdict_to_json(verdict: LockingVerdict, path, **params) -> None:
    obj = {"kind": verdict.kind.value,
           "spread": None if np.isnan(verdict.spread) else verdict.spread,
           "n_crossings": verdict.n_crossings}
    obj.update(params)
    atomic_write_json(path, obj)
