"""Adaptive Dormand-Prince integration with dense output and section events.

The stepper is scipy's RK45 (the embedded 4(5) Dormand-Prince pair, i.e.
the same method class as MATLAB's ode45) driven by a local loop that
handles fixed-cadence sampling, mean-phase section detection on the
wrapped residual, and the error policy of this package.  Phases are
integrated as unwrapped reals and canonicalized only when exported.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import RK45

from .core import (ModelConfig, canonicalize, mean_field, order_parameter,
                   rhs, wrapped_distance)
from .errors import NonFiniteState, StepSizeUnderflow
from ._fsio import atomic_write_text, fmt

#: Residual magnitude separating a genuine section crossing (~0) from a
#: bisection limit at the 2*pi seam of the wrapped residual (~pi).
_SEAM_REJECT = 0.5 * np.pi


@dataclass(frozen=True)
class IntegrationConfig:
    """Time span, tolerances and output cadence for one integration."""

    t0: float = 0.0
    t_end: float = 1000.0
    rtol: float = 1e-8
    atol: float = 1e-10
    max_step: float | None = None  # default: (t_end - t0) / 10
    sample_dt: float = 0.5
    initial_step: float | None = None

    def __post_init__(self):
        if not self.t_end > self.t0:
            raise ValueError(f"t_end must exceed t0, got [{self.t0}, {self.t_end}]")
        if not (self.rtol > 0.0 and self.atol > 0.0):
            raise ValueError("rtol and atol must be positive")
        if not self.sample_dt > 0.0:
            raise ValueError("sample_dt must be positive")

    @property
    def span(self) -> float:
        return self.t_end - self.t0

    def resolved_max_step(self) -> float:
        return self.max_step if self.max_step is not None else self.span / 10.0


class Direction(enum.Enum):
    """Which sign changes of the section residual are reported."""

    INCREASING = "increasing"
    DECREASING = "decreasing"
    BOTH = "both"


@dataclass(frozen=True)
class EventSpec:
    """Poincare section: mean phase psi(t) equals ``target``.

    Crossing times are refined by bisection on the dense output until the
    bracketing interval is shorter than ``refine_tol``.
    """

    target: float = np.pi
    direction: Direction = Direction.INCREASING
    refine_tol: float = 1e-10

    def __post_init__(self):
        if not self.refine_tol > 0.0:
            raise ValueError("refine_tol must be positive")


@dataclass
class Trajectory:
    """Sampled solution plus derived order-parameter series.

    ``states`` holds unwrapped phases, one row per sample; ``R_series``
    and ``psi_series`` are recomputable from the rows via
    ``order_parameter``.  Instances are immutable after construction.
    """

    times: np.ndarray
    states: np.ndarray
    R_series: np.ndarray
    psi_series: np.ndarray
    model: ModelConfig
    integration: IntegrationConfig

    def __post_init__(self):
        for arr in (self.times, self.states, self.R_series, self.psi_series):
            arr.setflags(write=False)

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]


def _sample_grid(icfg: IntegrationConfig) -> np.ndarray:
    n = int(math.floor(icfg.span / icfg.sample_dt + 1e-9))
    grid = icfg.t0 + icfg.sample_dt * np.arange(n + 1)
    return np.minimum(grid, icfg.t_end)


def _scan_spacing(cfg: ModelConfig) -> float:
    # |dpsi/dt| of a coherent population is bounded by max|omega| + K;
    # limit the residual change per scan interval to ~pi/4 so that a
    # genuine crossing and the wrap seam cannot share an interval.
    rate_bound = float(np.max(np.abs(cfg.omega))) + cfg.K
    return (0.25 * np.pi) / max(rate_bound, 1e-9)


def integrate(cfg: ModelConfig, icfg: IntegrationConfig, y0) -> Trajectory:
    """Integrate the gated system, sampling every ``sample_dt`` time units.

    Deterministic: identical inputs produce bit-identical trajectories on
    one platform.  Raises ``StepSizeUnderflow`` when the accepted step
    drops below 1e-14 of the span and ``NonFiniteState`` on divergence.
    """
    traj, _ = _integrate_loop(cfg, icfg, y0, event=None)
    return traj


def integrate_with_events(cfg: ModelConfig, icfg: IntegrationConfig, y0,
                          event: EventSpec):
    """Integrate and collect mean-phase section crossings.

    Returns ``(trajectory, (t_cross, states_at_cross))`` where crossing
    states are dense-output interpolants at the refined crossing times.
    """
    return _integrate_loop(cfg, icfg, y0, event=event)


def _integrate_loop(cfg, icfg, y0, event):
    y0 = np.asarray(y0, dtype=float)
    if y0.shape != (cfg.N,):
        raise ValueError(f"initial state has shape {y0.shape}, expected ({cfg.N},)")
    if not np.all(np.isfinite(y0)):
        raise NonFiniteState("initial state is not finite")

    def fun(t, y):
        return rhs(cfg, t, y, method="mean_field")

    solver = RK45(fun, icfg.t0, y0, icfg.t_end,
                  max_step=icfg.resolved_max_step(),
                  rtol=icfg.rtol, atol=icfg.atol,
                  first_step=icfg.initial_step)

    grid = _sample_grid(icfg)
    samples = np.empty((len(grid), cfg.N))
    samples[0] = y0
    next_sample = 1
    tiny = 1e-12 * icfg.span

    cross_times: list[float] = []
    cross_states: list[np.ndarray] = []
    h_scan = _scan_spacing(cfg) if event is not None else None

    while solver.status == "running":
        message = solver.step()
        if solver.status == "failed":
            raise StepSizeUnderflow(message or "adaptive step size underflow")
        if not np.all(np.isfinite(solver.y)):
            raise NonFiniteState(f"non-finite state at t={solver.t}")
        if solver.step_size is not None and solver.step_size < 1e-14 * icfg.span:
            raise StepSizeUnderflow(
                f"accepted step {solver.step_size:.3e} below 1e-14 of span at t={solver.t}")

        dense = None
        if next_sample < len(grid) and grid[next_sample] <= solver.t + tiny:
            dense = solver.dense_output()
            while next_sample < len(grid) and grid[next_sample] <= solver.t + tiny:
                samples[next_sample] = dense(min(grid[next_sample], solver.t))
                next_sample += 1

        if event is not None:
            if dense is None:
                dense = solver.dense_output()
            _scan_step(dense, solver.t_old, solver.t, event, h_scan,
                       cross_times, cross_states, icfg)

    # t_end always lands on the final accepted step; flush any leftover
    # grid point that ties with t_end up to rounding.
    while next_sample < len(grid):
        samples[next_sample] = solver.y
        next_sample += 1

    R = np.empty(len(grid))
    psi = np.empty(len(grid))
    for s in range(len(grid)):
        op = order_parameter(samples[s])
        R[s] = op.R
        psi[s] = op.psi

    traj = Trajectory(times=grid, states=samples, R_series=R, psi_series=psi,
                      model=cfg, integration=icfg)
    events = (np.asarray(cross_times), np.asarray(cross_states).reshape(len(cross_times), cfg.N))
    return traj, events


def _psi(state) -> float:
    z = mean_field(state)
    return 0.0 if abs(z) < 1e-15 else float(np.angle(z))


def _scan_step(dense, t_lo, t_hi, event, h_scan, cross_times, cross_states, icfg):
    width = t_hi - t_lo
    if width <= 0.0:
        return
    npts = max(2, int(math.ceil(width / h_scan)) + 1)
    ts = np.linspace(t_lo, t_hi, npts)
    psis = [_psi(dense(t)) for t in ts]

    for a in range(npts - 1):
        seg = [(ts[a], psis[a], ts[a + 1], psis[a + 1])]
        # one refinement level where psi moved suspiciously fast (low-R bursts)
        if abs(wrapped_distance(psis[a + 1], psis[a])) > 0.125 * np.pi:
            sub = np.linspace(ts[a], ts[a + 1], 9)
            vals = [psis[a]] + [_psi(dense(t)) for t in sub[1:-1]] + [psis[a + 1]]
            seg = [(sub[j], vals[j], sub[j + 1], vals[j + 1]) for j in range(8)]
        for (ta, pa, tb, pb) in seg:
            _bracket_crossing(dense, ta, pa, tb, pb, event,
                              cross_times, cross_states, icfg)


def _bracket_crossing(dense, ta, ga_psi, tb, gb_psi, event,
                      cross_times, cross_states, icfg):
    ga = wrapped_distance(ga_psi, event.target)
    gb = wrapped_distance(gb_psi, event.target)
    if ga == 0.0:
        # exact hit at the left endpoint; the previous interval owns it
        return
    if (ga < 0.0) == (gb < 0.0) and gb != 0.0:
        return
    increasing = ga < 0.0
    if event.direction is Direction.INCREASING and not increasing:
        return
    if event.direction is Direction.DECREASING and increasing:
        return

    lo, hi, g_lo = ta, tb, ga
    while hi - lo > event.refine_tol:
        mid = 0.5 * (lo + hi)
        g_mid = wrapped_distance(_psi(dense(mid)), event.target)
        if g_mid == 0.0:
            lo = hi = mid
            break
        if (g_mid < 0.0) == (g_lo < 0.0):
            lo, g_lo = mid, g_mid
        else:
            hi = mid
    t_cross = 0.5 * (lo + hi)
    residual = wrapped_distance(_psi(dense(t_cross)), event.target)
    if abs(residual) > _SEAM_REJECT:
        return  # bisection converged onto the wrap seam, not a root
    if cross_times and t_cross - cross_times[-1] <= max(event.refine_tol, 1e-12 * icfg.span):
        return
    cross_times.append(float(t_cross))
    cross_states.append(np.asarray(dense(t_cross), dtype=float))


def trajectory_to_csv(traj: Trajectory, path) -> None:
    """Write ``t,R,psi,theta_1,...,theta_N`` with canonicalized phases.

    Floats carry 17 significant digits so the file round-trips exactly.
    """
    n = traj.states.shape[1]
    lines = ["t,R,psi," + ",".join(f"theta_{i + 1}" for i in range(n))]
    for s in range(len(traj.times)):
        theta = canonicalize(traj.states[s])
        cells = [fmt(traj.times[s]), fmt(traj.R_series[s]), fmt(traj.psi_series[s])]
        cells.extend(fmt(v) for v in theta)
        lines.append(",".join(cells))
    atomic_write_text(path, "\n".join(lines) + "\n")
