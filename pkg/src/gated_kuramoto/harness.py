"""Deterministic experiment driver: initial conditions, sweeps, persistence.

Every grid point of a sweep gets its own seed derived by hashing
(master seed, grid indices, replicate index), so results are independent
of execution order, safe to parallelize, and restartable from per-point
JSON checkpoints.
"""

from __future__ import annotations

import enum
import hashlib
import itertools
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .analysis import (LockKind, classify_locking, circular_mean,
                       convergence_time, locked_frequency_estimate,
                       poincare_section)
from .core import GateParams, ModelConfig, OmegaSpec, TWO_PI
from .errors import DegenerateFit, PreconditionViolated
from .integrator import Direction, IntegrationConfig, integrate
from .locked import solve_locked_continuation, stability
from ._fsio import atomic_write_text, fmt

SWEEP_CSV_HEADER = ("grid_idx,K,w,k,N,seed,verdict,spread,omega_locked,"
                    "T_conv,error,config_json")


class InitMode(enum.Enum):
    EQUISPACED = "equispaced"
    UNIFORM_RANDOM = "uniform_random"


@dataclass(frozen=True)
class InitSpec:
    """Initial phases: equispaced on the circle, or i.i.d. uniform.

    Uniform draws come from a counter-based generator (Philox) keyed by
    the seed with the oscillator index as the counter, so phase i depends
    only on (seed, i).
    """

    mode: InitMode = InitMode.UNIFORM_RANDOM
    seed: int = 0


def initial_phases(init: InitSpec, N: int) -> np.ndarray:
    if init.mode is InitMode.EQUISPACED:
        return TWO_PI * np.arange(N) / N
    vals = np.empty(N)
    for i in range(N):
        bg = np.random.Philox(counter=i, key=int(init.seed))
        vals[i] = np.random.Generator(bg).random()
    return TWO_PI * vals


def derive_point_seed(master_seed: int, grid_indices, replicate_index: int) -> int:
    """Stable 64-bit per-point seed from (master, grid indices, replicate)."""
    h = hashlib.sha256()
    h.update(b"gated-kuramoto/point-seed/v1:")
    h.update(repr((int(master_seed), tuple(int(g) for g in grid_indices),
                   int(replicate_index))).encode())
    return int.from_bytes(h.digest()[:8], "little")


@dataclass(frozen=True)
class RunSetup:
    """Base configuration for one pipeline run inside a sweep.

    ``pipeline`` is one of "convergence", "poincare", "locked";
    ``options`` carries pipeline-specific knobs (conv_tol, target,
    transient_cut, lock_tol, drift_tol, w_step).
    """

    N: int
    K: float
    omega: OmegaSpec
    gate: GateParams
    init: InitSpec
    integration: IntegrationConfig
    pipeline: str = "poincare"
    options: dict = field(default_factory=dict)

    def model(self) -> ModelConfig:
        return ModelConfig.from_spec(self.N, self.K, self.omega, self.gate)


@dataclass(frozen=True)
class SweepSpec:
    """Grid axes over {K, w, k, N} crossed with replicate seeds."""

    base: RunSetup
    axes: tuple = ()            # ((name, values), ...)
    replicate_seeds: tuple = (0,)

    def __post_init__(self):
        for name, values in self.axes:
            if name not in ("K", "w", "k", "N"):
                raise ValueError(f"unknown sweep axis {name!r}")
            if len(values) == 0:
                raise ValueError(f"axis {name!r} has an empty grid")
            if not all(np.isfinite(v) for v in values):
                raise ValueError(f"axis {name!r} has non-finite values")
        if len(self.replicate_seeds) == 0:
            raise ValueError("need at least one replicate seed")

    def grid_shape(self) -> tuple:
        return tuple(len(values) for _, values in self.axes) + (len(self.replicate_seeds),)

    def n_points(self) -> int:
        return int(np.prod(self.grid_shape(), dtype=int))

    def point(self, flat_idx: int):
        """(grid indices, axis values, replicate index, point seed) for a flat index."""
        shape = self.grid_shape()
        idx = np.unravel_index(flat_idx, shape)
        grid_idx, rep = idx[:-1], int(idx[-1])
        values = [self.axes[a][1][grid_idx[a]] for a in range(len(self.axes))]
        seed = derive_point_seed(self.replicate_seeds[rep], grid_idx, rep)
        return grid_idx, values, rep, seed


def apply_axis(setup: RunSetup, name: str, value) -> RunSetup:
    if name == "K":
        return replace(setup, K=float(value))
    if name == "N":
        return replace(setup, N=int(value))
    if name == "k":
        return replace(setup, gate=replace(setup.gate, k=float(value)))
    if name == "w":
        # w = 0 means "no dead zone": the gate is disabled outright
        if float(value) == 0.0:
            return replace(setup, gate=replace(setup.gate, enabled=False))
        return replace(setup, gate=replace(setup.gate, enabled=True, w=float(value)))
    raise ValueError(f"unknown sweep axis {name!r}")


def resolved_config_json(setup: RunSetup, seed: int) -> str:
    cfg = {
        "model": {"N": setup.N, "K": setup.K, "omega": setup.omega.to_jsonable()},
        "gate": {"enabled": setup.gate.enabled, "theta0": setup.gate.theta0,
                 "w": setup.gate.w, "k": setup.gate.k,
                 "frame": setup.gate.frame.value,
                 "omega_ref": setup.gate.omega_ref, "psi0": setup.gate.psi0},
        "init": {"mode": setup.init.mode.value, "seed": int(seed)},
        "integration": {"t0": setup.integration.t0, "t_end": setup.integration.t_end,
                        "rtol": setup.integration.rtol, "atol": setup.integration.atol,
                        "sample_dt": setup.integration.sample_dt,
                        "max_step": setup.integration.max_step,
                        "initial_step": setup.integration.initial_step},
        "run": {"kind": setup.pipeline, **setup.options},
    }
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"))


def run_point(setup: RunSetup, seed: int):
    """Execute one pipeline run; returns (row dict, extras dict).

    Numerical failures land in the row's ``error`` column instead of
    propagating, so a sweep never aborts on one bad point.
    """
    row = {
        "K": setup.K,
        "w": setup.gate.w if setup.gate.enabled else 0.0,
        "k": setup.gate.k,
        "N": setup.N,
        "seed": int(seed),
        "verdict": "",
        "spread": "",
        "omega_locked": "",
        "T_conv": "",
        "error": "",
        "config_json": resolved_config_json(setup, seed),
    }
    extras: dict = {}
    try:
        model = setup.model()
        init = replace(setup.init, seed=int(seed))
        y0 = initial_phases(init, setup.N)
        opts = setup.options
        if setup.pipeline == "convergence":
            traj = integrate(model, setup.integration, y0)
            t = convergence_time(traj, tol=opts.get("conv_tol", 1e-4))
            if t is not None:
                row["T_conv"] = t
        elif setup.pipeline == "poincare":
            rec = poincare_section(
                model, setup.integration, y0,
                target=opts.get("target", float(np.pi)),
                transient_cut=opts.get("transient_cut", 900.0),
                direction=Direction(opts.get("direction", "increasing")))
            verdict = classify_locking(rec, lock_tol=opts.get("lock_tol", 1e-3),
                                       drift_tol=opts.get("drift_tol", 1e-2))
            row["verdict"] = verdict.kind.value
            if not np.isnan(verdict.spread):
                row["spread"] = verdict.spread
            omega_est = locked_frequency_estimate(rec)
            if omega_est is not None:
                row["omega_locked"] = omega_est
            mask = rec.retained
            rel = rec.rel_phases[mask]
            if len(rel):
                extras["gap1"] = circular_mean(rel[:, 0])
                extras["rel_mean"] = [circular_mean(rel[:, i]) for i in range(rel.shape[1])]
                extras["crossings_rel1"] = [[float(t), float(r)] for t, r in
                                            zip(rec.t_cross[mask], rel[:, 0])]
        elif setup.pipeline == "locked":
            prof = solve_locked_continuation(model, w_step=opts.get("w_step", 0.05))
            row["omega_locked"] = prof.Omega
            extras["vartheta"] = [float(v) for v in prof.vartheta]
            extras["residual"] = prof.residual
            if prof.converged:
                row["verdict"] = stability(model, prof).verdict.value
            else:
                row["verdict"] = "no_convergence"
        else:
            raise ValueError(f"unknown pipeline {setup.pipeline!r}")
    except Exception as exc:  # per-point isolation by design
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row, extras


@dataclass
class SweepResult:
    rows: list
    extras: dict           # flat index -> extras dict
    csv_path: str | None = None


def _point_task(args):
    spec, flat_idx = args
    grid_idx, values, rep, seed = spec.point(flat_idx)
    setup = spec.base
    for (name, _), value in zip(spec.axes, values):
        setup = apply_axis(setup, name, value)
    row, extras = run_point(setup, seed)
    row = {"grid_idx": flat_idx, **row}
    return flat_idx, row, extras


def run_experiment(spec: SweepSpec, out_dir=None, jobs: int = 1,
                   resume: bool = False, max_points: int | None = None) -> SweepResult:
    """Run every grid point x replicate of a sweep, in index order.

    With ``out_dir`` set, finished points are checkpointed as JSON files
    and the assembled CSV is written atomically; ``resume=True`` skips
    points whose checkpoint already exists.  ``max_points`` caps how many
    missing points this call computes (a deterministic stand-in for an
    interrupted run).  Output is identical regardless of ``jobs``.
    """
    n = spec.n_points()
    results: dict[int, tuple] = {}

    points_dir = None
    if out_dir is not None:
        points_dir = os.path.join(os.fspath(out_dir), "points")
        os.makedirs(points_dir, exist_ok=True)
        if resume:
            for flat_idx in range(n):
                p = os.path.join(points_dir, f"{flat_idx:06d}.json")
                if os.path.exists(p):
                    with open(p) as f:
                        saved = json.load(f)
                    results[flat_idx] = (saved["row"], saved["extras"])

    todo = [i for i in range(n) if i not in results]
    if max_points is not None:
        todo = todo[:max_points]

    tasks = [(spec, i) for i in todo]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            finished = list(pool.map(_point_task, tasks))
    else:
        finished = [_point_task(t) for t in tasks]

    for flat_idx, row, extras in finished:
        results[flat_idx] = (row, extras)
        if points_dir is not None:
            atomic_write_text(os.path.join(points_dir, f"{flat_idx:06d}.json"),
                              json.dumps({"row": row, "extras": extras}, sort_keys=True))

    done = sorted(results)
    rows = [results[i][0] for i in done]
    extras = {i: results[i][1] for i in done}

    csv_path = None
    if out_dir is not None and len(done) == n:
        csv_path = os.path.join(os.fspath(out_dir), "results.csv")
        atomic_write_text(csv_path, sweep_rows_to_csv(rows))
    return SweepResult(rows=rows, extras=extras, csv_path=csv_path)


def _cell(value) -> str:
    if isinstance(value, str):
        if any(c in value for c in ',"\n'):
            return '"' + value.replace('"', '""') + '"'
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return fmt(value)


def sweep_rows_to_csv(rows) -> str:
    cols = SWEEP_CSV_HEADER.split(",")
    lines = [SWEEP_CSV_HEADER]
    for row in rows:
        lines.append(",".join(_cell(row[c]) for c in cols))
    return "\n".join(lines) + "\n"


def fit_inverse_K(points) -> tuple[float, float]:
    """Least-squares fit of T = c/K; returns (c, relative RMSE).

    The relative RMSE is ||T - c/K||_2 / ||T||_2 over the fitted points.
    """
    pts = [(float(K), float(T)) for K, T in points]
    if len(pts) < 3:
        raise PreconditionViolated("need at least 3 (K, T) points")
    K = np.array([p[0] for p in pts])
    T = np.array([p[1] for p in pts])
    if np.any(K <= 0.0) or not np.all(np.isfinite(T)):
        raise PreconditionViolated("fit needs K > 0 and finite T")
    if np.ptp(K) == 0.0:
        raise DegenerateFit("all K values are equal")
    x = 1.0 / K
    c = float(np.dot(T, x) / np.dot(x, x))
    rel_rmse = float(np.linalg.norm(T - c * x) / np.linalg.norm(T))
    return c, rel_rmse


def robustness_sweep_k_N(base: RunSetup, w_grid,
                         k_values=(0.5, 1.0, 2.0, 5.0, 10.0),
                         N_values=(10, 20, 50, 200),
                         out_dir=None, jobs: int = 1) -> dict:
    """Steady-gap-vs-w curves across gate sharpness and population size.

    Runs the Poincare pipeline over ``w_grid`` for each k (at the base N)
    and for each N (at the base k); returns rows plus per-(k, N) curves of
    (w, verdict, steady gap of oscillator 1).
    """
    k_spec = SweepSpec(base=base, axes=(("k", tuple(k_values)), ("w", tuple(w_grid))),
                       replicate_seeds=(base.init.seed,))
    n_spec = SweepSpec(base=base, axes=(("N", tuple(N_values)), ("w", tuple(w_grid))),
                       replicate_seeds=(base.init.seed,))
    k_dir = os.path.join(os.fspath(out_dir), "k_sweep") if out_dir else None
    n_dir = os.path.join(os.fspath(out_dir), "N_sweep") if out_dir else None
    k_res = run_experiment(k_spec, out_dir=k_dir, jobs=jobs)
    n_res = run_experiment(n_spec, out_dir=n_dir, jobs=jobs)

    def curves(spec, res, axis_values):
        out = {}
        for v_idx, v in enumerate(axis_values):
            curve = []
            for w_idx, w in enumerate(w_grid):
                flat = int(np.ravel_multi_index((v_idx, w_idx, 0), spec.grid_shape()))
                row = res.rows[flat]
                gap = res.extras[flat].get("gap1") if flat in res.extras else None
                curve.append({"w": float(w), "verdict": row["verdict"], "gap1": gap})
            out[v] = curve
        return out

    return {
        "k_rows": k_res.rows, "N_rows": n_res.rows,
        "k_curves": curves(k_spec, k_res, tuple(k_values)),
        "N_curves": curves(n_spec, n_res, tuple(N_values)),
    }
