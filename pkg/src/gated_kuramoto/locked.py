"""Phase-locked states: balance equations, Newton solver, stability.

A locked state is an equilibrium of the co-rotating system

    0 = omega_i - Omega + (K/N) * S(vartheta_i) * sum_j sin(vartheta_j - vartheta_i),

with the receiver gate evaluated directly at the relative phases.  The
solver augments these N balance equations with the normalization
sum_i vartheta_i = 0 and applies damped Newton in (vartheta, Omega).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .core import ModelConfig, gate_derivative, gate_value
from .errors import PreconditionViolated, SingularJacobian
from ._fsio import atomic_write_json

_NEUTRAL_EIGENVALUE = 1e-8
_NEUTRAL_ANGLE = 1e-4
_STABILITY_MARGIN = 1e-8


@dataclass
class LockedProfile:
    """Converged (or best-effort) solution of the locking equations.

    ``vartheta`` is normalized to sum zero; ``residual`` is the infinity
    norm of the balance residuals at the returned point.
    """

    vartheta: np.ndarray
    Omega: float
    residual: float
    converged: bool
    iterations: int


def locked_residual(cfg: ModelConfig, vartheta, Omega: float) -> np.ndarray:
    """Balance residuals r_i = omega_i - Omega + (K/N) S(vt_i) sum_j sin(vt_j - vt_i)."""
    vt = np.asarray(vartheta, dtype=float)
    sums = np.sin(vt[None, :] - vt[:, None]).sum(axis=1)
    s = gate_value(cfg.gate, vt)
    return cfg.omega - Omega + (cfg.K / cfg.N) * s * sums


def jacobian(cfg: ModelConfig, vartheta) -> np.ndarray:
    """Jacobian of the co-rotating field at a relative-phase profile.

    Off-diagonal: J_il = (K/N) * S(vt_i) * cos(vt_l - vt_i).
    Diagonal:     J_ii = (K/N) * (S'(vt_i) * sum_j sin(vt_j - vt_i)
                                  - S(vt_i) * sum_{j != i} cos(vt_j - vt_i)).
    """
    vt = np.asarray(vartheta, dtype=float)
    diff = vt[None, :] - vt[:, None]  # diff[i, l] = vt_l - vt_i
    s = np.atleast_1d(gate_value(cfg.gate, vt))
    sp = np.atleast_1d(gate_derivative(cfg.gate, vt))
    cos = np.cos(diff)
    J = (cfg.K / cfg.N) * s[:, None] * cos
    sin_sums = np.sin(diff).sum(axis=1)
    cos_sums = cos.sum(axis=1) - 1.0  # drop the j == i term, cos(0) = 1
    np.fill_diagonal(J, (cfg.K / cfg.N) * (sp * sin_sums - s * cos_sums))
    return J


def jacobian_diagonal_from_balance(cfg: ModelConfig, vartheta, Omega: float) -> np.ndarray:
    """Diagonal rewritten through the balance relation at a locked state.

        J_ii = S'(vt_i)/S(vt_i) * (Omega - omega_i)
               - (K/N) * S(vt_i) * sum_{j != i} cos(vt_j - vt_i)

    Agrees with the direct form exactly when the balance residual is zero;
    away from a locked state the two differ by S'/S times the residual.
    """
    vt = np.asarray(vartheta, dtype=float)
    s = np.atleast_1d(gate_value(cfg.gate, vt))
    sp = np.atleast_1d(gate_derivative(cfg.gate, vt))
    cos_sums = np.cos(vt[None, :] - vt[:, None]).sum(axis=1) - 1.0
    return sp / s * (Omega - cfg.omega) - (cfg.K / cfg.N) * s * cos_sums


def locked_frequency_identity(cfg: ModelConfig, vartheta) -> tuple[float, float]:
    """Locked frequency implied by a profile, with the gating correction.

        Omega = mean(omega) + (K/N^2) * sum_{i<j} (S_i - S_j) * sin(vt_j - vt_i)

    The correction term (returned second) vanishes when the gate is
    constant, recovering the classical mean-frequency result.
    """
    vt = np.asarray(vartheta, dtype=float)
    s = np.atleast_1d(gate_value(cfg.gate, vt))
    # antisymmetric summand; summing the full matrix and halving equals
    # the i<j sum
    term = (s[:, None] - s[None, :]) * np.sin(vt[None, :] - vt[:, None])
    correction = float(cfg.K / cfg.N**2 * 0.5 * term.sum())
    return float(np.mean(cfg.omega)) + correction, correction


def _augmented_residual(cfg, x):
    out = np.empty(cfg.N + 1)
    out[: cfg.N] = locked_residual(cfg, x[: cfg.N], x[cfg.N])
    out[cfg.N] = np.sum(x[: cfg.N])
    return out


def _augmented_jacobian(cfg, x):
    DF = np.empty((cfg.N + 1, cfg.N + 1))
    DF[: cfg.N, : cfg.N] = jacobian(cfg, x[: cfg.N])
    DF[: cfg.N, cfg.N] = -1.0
    DF[cfg.N, : cfg.N] = 1.0
    DF[cfg.N, cfg.N] = 0.0
    return DF


def solve_locked(cfg: ModelConfig, vartheta0=None, Omega0: float | None = None,
                 max_iter: int = 100, tol: float = 1e-10) -> LockedProfile:
    """Damped Newton iteration for a phase-locked profile.

    The square system is (r_1..r_N, sum vartheta) in the N+1 unknowns
    (vartheta, Omega).  Backtracking halves the step up to 2^-20 until the
    residual norm decreases; if no damping helps, the best iterate is
    returned with ``converged=False``.  Raises ``SingularJacobian`` when
    the Newton matrix stays unsolvable even with regularization.
    """
    vt0 = np.zeros(cfg.N) if vartheta0 is None else np.asarray(vartheta0, dtype=float)
    om0 = float(np.mean(cfg.omega)) if Omega0 is None else float(Omega0)
    if vt0.shape != (cfg.N,) or not np.all(np.isfinite(vt0)) or not np.isfinite(om0):
        raise ValueError("guess must be finite with matching dimension")

    x = np.append(vt0, om0)
    F = _augmented_residual(cfg, x)
    best_x, best_norm = x.copy(), np.linalg.norm(F)
    iterations = 0

    for iterations in range(1, max_iter + 1):
        if np.max(np.abs(F[: cfg.N])) <= tol and abs(F[cfg.N]) <= tol:
            iterations -= 1
            break
        DF = _augmented_jacobian(cfg, x)
        try:
            dx = np.linalg.solve(DF, -F)
        except np.linalg.LinAlgError:
            try:
                dx = np.linalg.solve(DF + 1e-12 * np.eye(cfg.N + 1), -F)
            except np.linalg.LinAlgError as exc:
                raise SingularJacobian(f"Newton matrix singular at iteration {iterations}") from exc
        if not np.all(np.isfinite(dx)):
            raise SingularJacobian(f"Newton step not finite at iteration {iterations}")

        norm0 = np.linalg.norm(F)
        for shift in range(21):  # damping factors 1, 1/2, ..., 2^-20
            lam = 0.5**shift
            x_try = x + lam * dx
            F_try = _augmented_residual(cfg, x_try)
            if np.linalg.norm(F_try) < norm0:
                x, F = x_try, F_try
                break
        else:
            break  # line search stalled; report best iterate
        if np.linalg.norm(F) < best_norm:
            best_x, best_norm = x.copy(), np.linalg.norm(F)

    if np.linalg.norm(F) <= best_norm:
        best_x = x
    vt = best_x[: cfg.N] - np.mean(best_x[: cfg.N])
    residual = float(np.max(np.abs(locked_residual(cfg, vt, best_x[cfg.N]))))
    return LockedProfile(vartheta=vt, Omega=float(best_x[cfg.N]),
                         residual=residual, converged=residual <= tol,
                         iterations=iterations)


def solve_locked_continuation(cfg: ModelConfig, w_step: float = 0.05,
                              max_iter: int = 100, tol: float = 1e-10) -> LockedProfile:
    """Continuation in dead-zone width, seeded from the classical solve.

    Solves the gate-disabled system first, then walks w upward in steps of
    ``w_step`` reusing the previous profile as the Newton guess.  With a
    disabled gate this reduces to a single classical solve.
    """
    classical = cfg.with_gate(replace(cfg.gate, enabled=False))
    prof = solve_locked(classical, max_iter=max_iter, tol=tol)
    if not cfg.gate.enabled:
        return prof
    target = cfg.gate.w
    n_steps = max(1, int(round(target / w_step)))
    widths = np.minimum(w_step * np.arange(1, n_steps + 1), target)
    widths[-1] = target
    for w in widths:
        step_cfg = cfg.with_gate(replace(cfg.gate, enabled=True, w=float(w)))
        prof = solve_locked(step_cfg, prof.vartheta, prof.Omega,
                            max_iter=max_iter, tol=tol)
    return prof


# -- stability ----------------------------------------------------------------

class StabilityVerdict(enum.Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"
    MARGINAL = "marginal"


@dataclass
class StabilityReport:
    """Spectrum of the locked-state Jacobian and the resulting verdict.

    ``spectral_abscissa_transverse`` is the largest real part after
    removing at most one neutral mode (eigenvalue within 1e-8 of zero
    whose eigenvector aligns with the uniform direction).
    """

    eigenvalues: np.ndarray
    spectral_abscissa_transverse: float
    verdict: StabilityVerdict
    neutral_mode_removed: bool = False
    note: str = ""


def stability(cfg: ModelConfig, profile: LockedProfile) -> StabilityReport:
    """Eigenvalue-based local stability test of a converged locked profile."""
    if not profile.converged:
        raise PreconditionViolated("stability requires a converged profile")
    J = jacobian(cfg, profile.vartheta)
    try:
        eigvals, eigvecs = scipy.linalg.eig(J)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        return StabilityReport(eigenvalues=np.empty(0, dtype=complex),
                               spectral_abscissa_transverse=float("nan"),
                               verdict=StabilityVerdict.MARGINAL,
                               note=f"eigen decomposition failed: {exc}")

    keep = np.ones(len(eigvals), dtype=bool)
    removed = False
    uniform = np.ones(cfg.N) / np.sqrt(cfg.N)
    candidates = [i for i in range(len(eigvals)) if abs(eigvals[i]) < _NEUTRAL_EIGENVALUE]
    best, best_align = None, 0.0
    for i in candidates:
        v = eigvecs[:, i]
        align = abs(np.vdot(v, uniform)) / np.linalg.norm(v)
        if align > best_align:
            best, best_align = i, align
    if best is not None and np.arccos(min(best_align, 1.0)) < _NEUTRAL_ANGLE:
        keep[best] = False
        removed = True

    abscissa = float(np.max(eigvals[keep].real))
    if abscissa < -_STABILITY_MARGIN:
        verdict = StabilityVerdict.STABLE
    elif abscissa > _STABILITY_MARGIN:
        verdict = StabilityVerdict.UNSTABLE
    else:
        verdict = StabilityVerdict.MARGINAL
    return StabilityReport(eigenvalues=eigvals,
                           spectral_abscissa_transverse=abscissa,
                           verdict=verdict, neutral_mode_removed=removed)


# -- small-heterogeneity branch -----------------------------------------------

@dataclass(frozen=True)
class HeterogeneitySpec:
    """omega_i = omega_bar + epsilon * nu_i with zero-sum deviations nu."""

    omega_bar: float
    nu: tuple[float, ...]
    epsilon: float

    def __post_init__(self):
        if abs(sum(self.nu)) > 1e-12 * max(1.0, max(abs(v) for v in self.nu)):
            raise ValueError("nu must sum to zero")

    def omega(self) -> np.ndarray:
        return self.omega_bar + self.epsilon * np.asarray(self.nu, dtype=float)


@dataclass(frozen=True)
class PerturbativePrediction:
    rho: np.ndarray          # leading-order offsets from the reference phase
    Omega: float             # locked frequency, mean frequency at this order
    gaps: np.ndarray         # gaps[i, j] = rho_i - rho_j


def perturbative_branch(het: HeterogeneitySpec, theta_star: float,
                        cfg: ModelConfig) -> PerturbativePrediction:
    """First-order locked branch near synchrony at reference phase theta_star.

        rho_i = epsilon * nu_i / (K * S(theta_star)),   Omega = omega_bar,

    valid for small heterogeneity when the reference phase is receptive;
    the offsets blow up as S(theta_star) -> 0, so a floor of 1e-6 on the
    gate value is enforced.
    """
    if cfg.K <= 0.0:
        raise PreconditionViolated("perturbative branch needs K > 0")
    s_star = float(gate_value(cfg.gate, theta_star))
    if s_star <= 1e-6:
        raise PreconditionViolated(
            f"gate value {s_star:.3e} at the reference phase is inside the dead zone")
    rho = het.epsilon * np.asarray(het.nu, dtype=float) / (cfg.K * s_star)
    gaps = rho[:, None] - rho[None, :]
    return PerturbativePrediction(rho=rho, Omega=het.omega_bar, gaps=gaps)


def profile_to_json(profile: LockedProfile, report: StabilityReport | None = None,
                    path=None) -> dict:
    """JSON form of a locked profile (optionally with its stability report)."""
    obj = {
        "vartheta": [float(v) for v in profile.vartheta],
        "omega": profile.Omega,
        "residual": profile.residual,
        "converged": profile.converged,
        "iterations": profile.iterations,
    }
    if report is not None:
        obj["eigenvalues"] = [[float(ev.real), float(ev.imag)] for ev in report.eigenvalues]
        obj["verdict"] = report.verdict.value
        obj["spectral_abscissa_transverse"] = report.spectral_abscissa_transverse
        obj["neutral_mode_removed"] = report.neutral_mode_removed
    if path is not None:
        atomic_write_json(path, obj)
    return obj
