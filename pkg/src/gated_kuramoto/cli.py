"""Command-line driver: simulate, poincare, locked, sweep, figures.

Runs are described by a JSON config file (all keys optional, strict
schema) plus ``--set dotted.path=value`` overrides; flags always win over
file values.  Outputs are CSV/JSON only.

Exit codes: 0 ok, 2 config error, 3 numerical failure, 4 partial sweep
failure (some grid points errored).
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys

import numpy as np

from . import analysis, harness, integrator, locked
from .core import GateFrame, GateParams, ModelConfig, OmegaSpec
from .errors import (ConfigError, GatedKuramotoError, NonFiniteState,
                     SingularJacobian, StepSizeUnderflow)
from .harness import InitMode, InitSpec, RunSetup, SweepSpec
from .integrator import IntegrationConfig
from ._fsio import atomic_write_json, atomic_write_text

_PI = float(np.pi)

DEFAULT_CONFIG = {
    "model": {"N": 20, "K": 0.02, "omega": {"identical": 24.0}},
    "gate": {"enabled": False, "theta0": 0.0, "w": _PI, "k": 10.0,
             "frame": "auto", "omega_ref": 0.0, "psi0": 0.0},
    "init": {"mode": "uniform_random", "seed": 0},
    "integration": {"t0": 0.0, "t_end": 1000.0, "rtol": 1e-8, "atol": 1e-10,
                    "sample_dt": 0.5, "max_step": None, "initial_step": None},
    "run": {"kind": "simulate"},
}

_RUN_KINDS = ("simulate", "poincare", "locked", "sweep-convergence",
              "sweep-poincare", "robustness")

# allowed keys of the "run" section, per kind (beyond "kind")
_RUN_KEYS = {
    "simulate": {"conv_tol"},
    "poincare": {"target", "transient_cut", "direction", "lock_tol", "drift_tol"},
    "locked": {"w_step"},
    "sweep-convergence": {"axes", "replicate_seeds", "conv_tol"},
    "sweep-poincare": {"axes", "replicate_seeds", "target", "transient_cut",
                       "direction", "lock_tol", "drift_tol"},
    "robustness": {"w_grid", "k_values", "N_values", "target", "transient_cut",
                   "lock_tol", "drift_tol"},
}


def load_config(path: str | None) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is None:
        return cfg
    try:
        with open(path) as f:
            user = json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path!r}: {exc}")
    if not isinstance(user, dict):
        raise ConfigError("config root must be a JSON object")
    _merge(cfg, user, [])
    return cfg


def _merge(base: dict, override: dict, crumb: list) -> None:
    for key, value in override.items():
        where = ".".join(crumb + [key])
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and key != "omega" and crumb != ["run"]:
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where!r} must be an object")
            if crumb == [] and key == "run":
                base[key] = _checked_run(value)
            else:
                _merge(base[key], value, crumb + [key])
        else:
            base[key] = value


def _checked_run(run: dict) -> dict:
    if "kind" not in run:
        raise ConfigError("run section needs a 'kind'")
    kind = run["kind"]
    if kind not in _RUN_KINDS:
        raise ConfigError(f"unknown run kind {kind!r} (expected one of {_RUN_KINDS})")
    extra = set(run) - {"kind"} - _RUN_KEYS[kind]
    if extra:
        raise ConfigError(f"unknown run option(s) for kind {kind!r}: {sorted(extra)}")
    return dict(run)


def apply_set_overrides(cfg: dict, assignments) -> None:
    for item in assignments:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, raw = item.partition("=")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = cfg
        parts = key.split(".")
        for p in parts[:-1]:
            if not isinstance(node, dict) or p not in node:
                raise ConfigError(f"--set path {key!r} does not exist")
            node = node[p]
        leaf = parts[-1]
        if not isinstance(node, dict):
            raise ConfigError(f"--set path {key!r} does not exist")
        if parts[0] == "run":
            node[leaf] = value
            if len(parts) > 1:
                cfg["run"] = _checked_run(cfg["run"])
        elif parts == ["model", "omega"]:
            node[leaf] = value
        elif leaf not in node:
            raise ConfigError(f"--set path {key!r} does not exist")
        else:
            node[leaf] = value


def _omega_spec(entry) -> OmegaSpec:
    if not isinstance(entry, dict) or len(entry) != 1:
        raise ConfigError("model.omega must be one of "
                          '{"identical": tau}, {"period_range": [lo, hi]}, {"explicit": [...]}')
    kind, value = next(iter(entry.items()))
    try:
        if kind == "identical":
            return OmegaSpec.identical(float(value))
        if kind == "period_range":
            lo, hi = value
            return OmegaSpec.period_range(float(lo), float(hi))
        if kind == "explicit":
            return OmegaSpec.explicit(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad model.omega payload: {exc}")
    raise ConfigError(f"unknown model.omega kind {kind!r}")


def resolve_setup(cfg: dict) -> RunSetup:
    """Turn a validated config dict into harness/run objects."""
    m, g, ini, itg, run = (cfg["model"], cfg["gate"], cfg["init"],
                           cfg["integration"], cfg["run"])
    omega = _omega_spec(m["omega"])
    frame_name = g["frame"]
    if frame_name == "auto":
        # dead zone fixed in the lab frame for identical oscillators,
        # attached to the collective phase for heterogeneous ones
        frame = GateFrame.FIXED if omega.kind == "identical" else GateFrame.MEAN_PHASE
    else:
        try:
            frame = GateFrame.from_string(frame_name)
        except ValueError as exc:
            raise ConfigError(str(exc))
    try:
        gate = GateParams(theta0=float(g["theta0"]), w=float(g["w"]), k=float(g["k"]),
                          enabled=bool(g["enabled"]), frame=frame,
                          omega_ref=float(g["omega_ref"]), psi0=float(g["psi0"]))
        try:
            mode = InitMode(ini["mode"])
        except ValueError:
            raise ConfigError(f"unknown init mode {ini['mode']!r}")
        init = InitSpec(mode=mode, seed=int(ini["seed"]))
        icfg = IntegrationConfig(
            t0=float(itg["t0"]), t_end=float(itg["t_end"]), rtol=float(itg["rtol"]),
            atol=float(itg["atol"]), sample_dt=float(itg["sample_dt"]),
            max_step=None if itg["max_step"] is None else float(itg["max_step"]),
            initial_step=None if itg["initial_step"] is None else float(itg["initial_step"]))
        pipeline = {"simulate": "convergence", "sweep-convergence": "convergence",
                    "sweep-poincare": "poincare", "robustness": "poincare",
                    "poincare": "poincare", "locked": "locked"}[run["kind"]]
        options = {k: v for k, v in run.items()
                   if k not in ("kind", "axes", "replicate_seeds",
                                "w_grid", "k_values", "N_values")}
        setup = RunSetup(N=int(m["N"]), K=float(m["K"]), omega=omega, gate=gate,
                         init=init, integration=icfg, pipeline=pipeline,
                         options=options)
        setup.model()  # materialize once to surface validation errors now
        return setup
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc))


# -- subcommands ----------------------------------------------------------------

def cmd_simulate(cfg: dict, out_dir: str, jobs: int) -> int:
    setup = resolve_setup(cfg)
    model = setup.model()
    y0 = harness.initial_phases(setup.init, setup.N)
    traj = integrator.integrate(model, setup.integration, y0)
    os.makedirs(out_dir, exist_ok=True)
    integrator.trajectory_to_csv(traj, os.path.join(out_dir, "trajectory.csv"))
    t_conv = analysis.convergence_time(traj, tol=setup.options.get("conv_tol", 1e-4))
    summary = {"final_R": float(traj.R_series[-1]),
               "final_psi": float(traj.psi_series[-1]),
               "T_conv": t_conv,
               "config": json.loads(harness.resolved_config_json(setup, setup.init.seed))}
    atomic_write_json(os.path.join(out_dir, "summary.json"), summary)
    return 0


def cmd_poincare(cfg: dict, out_dir: str, jobs: int) -> int:
    setup = resolve_setup(cfg)
    model = setup.model()
    y0 = harness.initial_phases(setup.init, setup.N)
    opts = setup.options
    rec = analysis.poincare_section(
        model, setup.integration, y0,
        target=opts.get("target", _PI),
        transient_cut=opts.get("transient_cut", 900.0),
        direction=integrator.Direction(opts.get("direction", "increasing")))
    verdict = analysis.classify_locking(rec, lock_tol=opts.get("lock_tol", 1e-3),
                                        drift_tol=opts.get("drift_tol", 1e-2))
    os.makedirs(out_dir, exist_ok=True)
    analysis.poincare_to_csv(rec, os.path.join(out_dir, "crossings.csv"))
    analysis.verdict_to_json(
        verdict, os.path.join(out_dir, "verdict.json"),
        config=json.loads(harness.resolved_config_json(setup, setup.init.seed)))
    return 0


def cmd_locked(cfg: dict, out_dir: str, jobs: int) -> int:
    setup = resolve_setup(cfg)
    model = setup.model()
    prof = locked.solve_locked_continuation(model, w_step=setup.options.get("w_step", 0.05))
    report = locked.stability(model, prof) if prof.converged else None
    os.makedirs(out_dir, exist_ok=True)
    locked.profile_to_json(prof, report, os.path.join(out_dir, "locked.json"))
    return 0 if prof.converged else 3


def _sweep_spec(cfg: dict) -> SweepSpec:
    setup = resolve_setup(cfg)
    run = cfg["run"]
    axes = []
    for name, values in run.get("axes", {}).items():
        if not isinstance(values, (list, tuple)):
            raise ConfigError(f"axis {name!r} grid must be a list")
        axes.append((name, tuple(values)))
    seeds = tuple(run.get("replicate_seeds", [cfg["init"]["seed"]]))
    try:
        return SweepSpec(base=setup, axes=tuple(axes), replicate_seeds=seeds)
    except ValueError as exc:
        raise ConfigError(str(exc))


def cmd_sweep(cfg: dict, out_dir: str, jobs: int, resume: bool = False) -> int:
    kind = cfg["run"]["kind"]
    if kind not in ("sweep-convergence", "sweep-poincare", "robustness"):
        raise ConfigError(f"run.kind {kind!r} is not a sweep (use sweep-convergence, "
                          "sweep-poincare or robustness)")
    os.makedirs(out_dir, exist_ok=True)
    if kind == "robustness":
        setup = resolve_setup(cfg)
        run = cfg["run"]
        result = harness.robustness_sweep_k_N(
            setup,
            w_grid=tuple(run.get("w_grid", [round(0.25 * i, 2) for i in range(1, 13)])),
            k_values=tuple(run.get("k_values", [0.5, 1.0, 2.0, 5.0, 10.0])),
            N_values=tuple(run.get("N_values", [10, 20, 50, 200])),
            out_dir=out_dir, jobs=jobs)
        curves = {"k": {str(k): v for k, v in result["k_curves"].items()},
                  "N": {str(n): v for n, v in result["N_curves"].items()}}
        atomic_write_json(os.path.join(out_dir, "curves.json"), curves)
        bad = [r for r in result["k_rows"] + result["N_rows"] if r["error"]]
        return 4 if bad else 0
    spec = _sweep_spec(cfg)
    result = harness.run_experiment(spec, out_dir=out_dir, jobs=jobs, resume=resume)
    if cfg["run"]["kind"] == "sweep-convergence":
        _write_convergence_fits(spec, result, out_dir)
    bad = [r for r in result.rows if r["error"]]
    return 4 if bad else 0


def _write_convergence_fits(spec: SweepSpec, result, out_dir: str) -> None:
    # with a K axis present, fit T = c/K along K for each other grid cell
    names = [name for name, _ in spec.axes]
    if "K" not in names:
        return
    k_pos = names.index("K")
    fits = []
    shape = spec.grid_shape()
    other = [range(len(v)) for i, (_, v) in enumerate(spec.axes) if i != k_pos]
    import itertools as _it
    for other_idx in _it.product(*other) if other else [()]:
        for rep in range(len(spec.replicate_seeds)):
            pts = []
            for ki, kval in enumerate(spec.axes[k_pos][1]):
                full = list(other_idx)
                full.insert(k_pos, ki)
                flat = int(np.ravel_multi_index(tuple(full) + (rep,), shape))
                row = result.rows[flat]
                if row["T_conv"] != "" and not row["error"]:
                    pts.append((kval, row["T_conv"]))
            if len(pts) >= 3:
                try:
                    c, rel = harness.fit_inverse_K(pts)
                    fits.append({"cell": list(other_idx), "replicate": rep,
                                 "c": c, "rel_rmse": rel, "n_points": len(pts)})
                except GatedKuramotoError as exc:
                    fits.append({"cell": list(other_idx), "replicate": rep,
                                 "error": str(exc)})
    if fits:
        atomic_write_json(os.path.join(out_dir, "fits.json"), fits)


# -- figure regeneration ----------------------------------------------------------

def _figure_specs() -> dict:
    het = {"period_range": [23.0, 25.0]}
    fig2 = {
        "panelA": {"kind": "trajectories", "K": 0.2, "w_values": [_PI, 1.25 * _PI, 1.5 * _PI, 1.75 * _PI, 2 * _PI - 1e-9],
                   "t_end": 400.0},
        "panelB": {"kind": "conv_vs_w", "K": 0.02,
                   "w_grid": [round(0.1 * i, 10) for i in range(8, 62)], "t_end": 4000.0},
        "panelC": {"kind": "trajectories", "w": _PI, "K_values": [0.05, 0.1, 0.2, 0.4],
                   "t_end": 800.0},
        "panelD": {"kind": "conv_vs_K", "w_values": [_PI, 1.25 * _PI, 1.5 * _PI],
                   "K_grid": [0.05, 0.1, 0.2, 0.4], "t_end": 1600.0},
    }
    fig4 = {"panel" + p: {"kind": "trajectory", "w": w, "t_end": 1000.0}
            for p, w in (("A", 0.0), ("B", 0.5 * _PI), ("C", _PI))}
    fig5 = {"panel" + p: {"kind": "poincare_sweep", "K": K,
                          "w_grid": [round(0.05 * i, 10) for i in range(1, 61)],
                          "t_end": 1250.0}
            for p, K in (("B", 0.02), ("C", 0.04), ("D", 0.2))}
    fig5["panelA"] = {"kind": "gap_summary", "from": ["panelB", "panelC", "panelD"]}
    figS1 = {
        "panelB": {"kind": "k_curves", "k_values": [0.5, 1.0, 2.0, 5.0, 10.0],
                   "w_grid": [round(0.25 * i, 10) for i in range(1, 13)], "t_end": 1250.0},
        "panelCD": {"kind": "N_curves", "N_values": [10, 20, 50, 200],
                    "w_grid": [round(0.25 * i, 10) for i in range(1, 13)], "t_end": 1250.0},
    }
    return {"fig2": {"base_omega": {"identical": 24.0}, "panels": fig2},
            "fig4": {"base_omega": het, "panels": fig4},
            "fig5": {"base_omega": het, "panels": fig5},
            "figS1": {"base_omega": het, "panels": figS1}}


def cmd_figures(figure_id: str, cfg: dict, out_dir: str, jobs: int) -> int:
    specs = _figure_specs()
    if figure_id not in specs:
        raise ConfigError(f"unknown figure id {figure_id!r} "
                          f"(expected one of {sorted(specs)})")
    fig = specs[figure_id]
    fig_dir = os.path.join(out_dir, figure_id)
    os.makedirs(fig_dir, exist_ok=True)
    manifest = {"figure": figure_id, "files": []}

    base_cfg = copy.deepcopy(cfg)
    base_cfg["model"]["omega"] = fig["base_omega"]
    gap_rows_by_panel = {}

    for panel, pspec in sorted(fig["panels"].items()):
        if pspec["kind"] == "gap_summary":
            continue
        name, config_used = _run_panel(panel, pspec, base_cfg, fig_dir, jobs,
                                       gap_rows_by_panel)
        manifest["files"].append({"name": name,
                                  "sha256": _sha256(os.path.join(fig_dir, name)),
                                  "config": config_used})

    for panel, pspec in sorted(fig["panels"].items()):
        if pspec["kind"] != "gap_summary":
            continue
        lines = ["panel,K,w,verdict,spread,gap1"]
        for src in pspec["from"]:
            for row in gap_rows_by_panel.get(src, []):
                lines.append(",".join([src] + row))
        name = f"{panel}.csv"
        atomic_write_text(os.path.join(fig_dir, name), "\n".join(lines) + "\n")
        manifest["files"].append({"name": name,
                                  "sha256": _sha256(os.path.join(fig_dir, name)),
                                  "config": {"from": pspec["from"]}})

    atomic_write_json(os.path.join(fig_dir, "manifest.json"), manifest)
    return 0


def _sha256(path: str) -> str:
    with open(path, "rb") as f:
        return hashlib.sha256(f.read()).hexdigest()


def _panel_cfg(base_cfg: dict, **model_over) -> dict:
    cfg = copy.deepcopy(base_cfg)
    for key, value in model_over.items():
        if key == "t_end":
            cfg["integration"]["t_end"] = value
        elif key == "K":
            cfg["model"]["K"] = value
        elif key == "w":
            if value == 0.0:
                cfg["gate"]["enabled"] = False
            else:
                cfg["gate"]["enabled"] = True
                cfg["gate"]["w"] = value
        else:
            raise ValueError(key)
    return cfg


def _run_panel(panel, pspec, base_cfg, fig_dir, jobs, gap_rows_by_panel):
    from ._fsio import fmt as _f
    kind = pspec["kind"]
    # panel specs carry the paper's protocol span, but explicit user
    # overrides of integration.t_end win
    t_end = base_cfg["integration"]["t_end"]
    if t_end == DEFAULT_CONFIG["integration"]["t_end"] and "t_end" in pspec:
        t_end = pspec["t_end"]

    if kind in ("trajectory", "trajectories"):
        w_values = pspec.get("w_values")
        K_values = pspec.get("K_values")
        lines = ["series,t,R,psi"]
        if kind == "trajectory":
            series = [("run", {"K": base_cfg["model"]["K"], "w": pspec["w"]})]
        elif w_values is not None:
            series = [(f"w={_f(w)}", {"K": pspec["K"], "w": w}) for w in w_values]
        else:
            series = [(f"K={_f(K)}", {"K": K, "w": pspec["w"]}) for K in K_values]
        used = []
        for label, over in series:
            cfg = _panel_cfg(base_cfg, t_end=t_end, **over)
            setup = resolve_setup(cfg)
            traj = integrator.integrate(setup.model(), setup.integration,
                                        harness.initial_phases(setup.init, setup.N))
            for s in range(len(traj.times)):
                lines.append(",".join([label, _f(traj.times[s]),
                                       _f(traj.R_series[s]), _f(traj.psi_series[s])]))
            used.append({"label": label, **{k: v for k, v in over.items()}})
        name = f"{panel}.csv"
        atomic_write_text(os.path.join(fig_dir, name), "\n".join(lines) + "\n")
        return name, {"kind": kind, "t_end": t_end, "series": used}

    if kind in ("conv_vs_w", "conv_vs_K"):
        cfg = _panel_cfg(base_cfg, t_end=t_end)
        if "K" in pspec:
            cfg["model"]["K"] = pspec["K"]
        cfg["run"] = {"kind": "sweep-convergence"}
        setup = resolve_setup(cfg)
        if kind == "conv_vs_w":
            axes = (("w", tuple(pspec["w_grid"])),)
        else:
            axes = (("w", tuple(pspec["w_values"])), ("K", tuple(pspec["K_grid"])))
        spec = SweepSpec(base=setup, axes=axes,
                         replicate_seeds=(base_cfg["init"]["seed"],))
        result = harness.run_experiment(spec, jobs=jobs)
        lines = [harness.SWEEP_CSV_HEADER]
        for row in result.rows:
            lines.append(",".join(harness._cell(row[c])
                                  for c in harness.SWEEP_CSV_HEADER.split(",")))
        name = f"{panel}.csv"
        atomic_write_text(os.path.join(fig_dir, name), "\n".join(lines) + "\n")
        return name, {"kind": kind, "t_end": t_end, "axes": [[a, list(v)] for a, v in axes]}

    if kind == "poincare_sweep":
        cfg = _panel_cfg(base_cfg, t_end=t_end, K=pspec["K"])
        cfg["run"] = {"kind": "sweep-poincare"}
        setup = resolve_setup(cfg)
        spec = SweepSpec(base=setup, axes=(("w", tuple(pspec["w_grid"])),),
                         replicate_seeds=(base_cfg["init"]["seed"],))
        result = harness.run_experiment(spec, jobs=jobs)
        lines = ["w,t_cross,rel_1"]
        gap_rows = []
        for flat, row in enumerate(result.rows):
            extras = result.extras.get(flat, {})
            for t, r in extras.get("crossings_rel1", []):
                lines.append(",".join([_f(row["w"]), _f(t), _f(r)]))
            gap_rows.append([_f(row["K"]), _f(row["w"]), row["verdict"],
                             _f(row["spread"]) if row["spread"] != "" else "",
                             _f(extras["gap1"]) if "gap1" in extras else ""])
        gap_rows_by_panel[panel] = gap_rows
        name = f"{panel}.csv"
        atomic_write_text(os.path.join(fig_dir, name), "\n".join(lines) + "\n")
        return name, {"kind": kind, "K": pspec["K"], "t_end": t_end,
                      "w_grid": list(pspec["w_grid"])}

    if kind in ("k_curves", "N_curves"):
        cfg = _panel_cfg(base_cfg, t_end=t_end)
        cfg["run"] = {"kind": "sweep-poincare"}
        setup = resolve_setup(cfg)
        axis = ("k", tuple(pspec["k_values"])) if kind == "k_curves" \
            else ("N", tuple(pspec["N_values"]))
        spec = SweepSpec(base=setup, axes=(axis, ("w", tuple(pspec["w_grid"]))),
                         replicate_seeds=(base_cfg["init"]["seed"],))
        result = harness.run_experiment(spec, jobs=jobs)
        lines = [f"{axis[0]},w,verdict,spread,gap1"]
        for flat, row in enumerate(result.rows):
            extras = result.extras.get(flat, {})
            lines.append(",".join([
                harness._cell(row[axis[0]]), _f(row["w"]), row["verdict"],
                _f(row["spread"]) if row["spread"] != "" else "",
                _f(extras["gap1"]) if "gap1" in extras else ""]))
        name = f"{panel}.csv"
        atomic_write_text(os.path.join(fig_dir, name), "\n".join(lines) + "\n")
        return name, {"kind": kind, "axis": [axis[0], list(axis[1])],
                      "t_end": t_end, "w_grid": list(pspec["w_grid"])}

    raise ConfigError(f"unhandled panel kind {kind!r}")


# -- entry point ------------------------------------------------------------------

def _formatter(prog):
    return argparse.HelpFormatter(prog, width=100)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gated-kuramoto", formatter_class=_formatter,
        description="Receiver-gated Kuramoto oscillators: simulation, "
                    "locked-state solving, Poincare analysis, sweeps and "
                    "figure-data regeneration.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", metavar="PATH", default=None,
                       help="JSON run configuration file")
        p.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                       dest="overrides",
                       help="override a config value by dotted path "
                            "(repeatable; values parsed as JSON)")
        p.add_argument("--out", metavar="DIR", default="out",
                       help="output directory (default: ./out)")
        p.add_argument("--jobs", metavar="J", type=int, default=os.cpu_count() or 1,
                       help="max parallel workers for sweeps (default: all cores)")
        p.add_argument("--seed", metavar="S", type=int, default=None,
                       help="override init.seed")

    p = sub.add_parser("simulate", formatter_class=_formatter,
                       help="integrate one trajectory; write trajectory.csv + summary.json")
    common(p)
    p = sub.add_parser("poincare", formatter_class=_formatter,
                       help="sample the mean-phase section; write crossings.csv + verdict.json")
    common(p)
    p = sub.add_parser("locked", formatter_class=_formatter,
                       help="solve for a phase-locked profile; write locked.json")
    common(p)
    p = sub.add_parser("sweep", formatter_class=_formatter,
                       help="run the sweep described by run.kind; write results.csv")
    common(p)
    p.add_argument("--resume", action="store_true",
                   help="reuse existing per-point checkpoints in --out")
    p = sub.add_parser("figures", formatter_class=_formatter,
                       help="regenerate the data behind a desk-scale figure")
    p.add_argument("figure", choices=["fig2", "fig4", "fig5", "figS1"],
                   help="figure identifier")
    common(p)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        apply_set_overrides(cfg, args.overrides)
        if args.seed is not None:
            cfg["init"]["seed"] = args.seed
        forced = {"simulate": "simulate", "poincare": "poincare", "locked": "locked"}
        if args.command in forced and cfg["run"]["kind"] != forced[args.command]:
            cfg["run"] = {"kind": forced[args.command]}
        if args.command == "simulate":
            return cmd_simulate(cfg, args.out, args.jobs)
        if args.command == "poincare":
            return cmd_poincare(cfg, args.out, args.jobs)
        if args.command == "locked":
            return cmd_locked(cfg, args.out, args.jobs)
        if args.command == "sweep":
            return cmd_sweep(cfg, args.out, args.jobs, resume=args.resume)
        return cmd_figures(args.figure, cfg, args.out, args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (StepSizeUnderflow, NonFiniteState, SingularJacobian,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
