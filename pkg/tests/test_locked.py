import numpy as np
import pytest

import gated_kuramoto as gk
from gated_kuramoto.analysis import circular_mean
from gated_kuramoto.harness import InitMode, InitSpec, initial_phases
from gated_kuramoto.locked import (HeterogeneitySpec, jacobian,
                                   jacobian_diagonal_from_balance,
                                   locked_frequency_identity, locked_residual,
                                   perturbative_branch, profile_to_json,
                                   solve_locked, solve_locked_continuation,
                                   stability)

PI = np.pi


def _het_cfg(K=0.02, N=20, gate=None):
    return gk.ModelConfig.period_range(N, K, 23.0, 25.0, gate=gate)


def _classical_oracle(omega, K):
    """Classical all-to-all locked state via the mean-field self-consistency.

    With Omega = mean(omega) and the profile's mean-field phase at 0, the
    balance equations reduce to vartheta_i = arcsin((omega_i - Omega)/(K*R))
    with R solving R = (1/N) sum_i sqrt(1 - ((omega_i - Omega)/(K*R))^2).
    Solved by bisection, independently of the Newton machinery.
    """
    omega = np.asarray(omega, dtype=float)
    Omega = omega.mean()
    dev = omega - Omega

    def f(R):
        x = dev / (K * R)
        return np.mean(np.sqrt(1.0 - x**2))

    lo = np.max(np.abs(dev)) / K + 1e-12  # smallest R keeping |x| <= 1
    hi = 1.0
    assert f(hi) < hi and f(lo) > lo, "no classical locked branch at these parameters"
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) > mid:
            lo = mid
        else:
            hi = mid
    R = 0.5 * (lo + hi)
    return np.arcsin(dev / (K * R)), Omega


# -- residual -------------------------------------------------------------------

def test_residual_zero_on_synchronized_identical():
    cfg = gk.ModelConfig.identical(8, 0.2, 24.0,
                                   gate=gk.GateParams(theta0=0.0, w=PI, k=10.0))
    r = locked_residual(cfg, np.zeros(8), 2 * PI / 24.0)
    np.testing.assert_array_equal(r, np.zeros(8))


def test_residual_zero_on_classical_oracle_state():
    cfg = _het_cfg(K=0.05, N=10)
    vt, Omega = _classical_oracle(cfg.omega, cfg.K)
    assert np.max(np.abs(locked_residual(cfg, vt, Omega))) <= 1e-10


def test_residual_matches_corotating_rhs():
    # the balance residual is the co-rotating field: rhs evaluated with a
    # linear-reference gate at t = 0 minus the frame rate
    gate = gk.GateParams(theta0=0.0, w=1.2, k=10.0,
                         frame=gk.GateFrame.LINEAR_REFERENCE, omega_ref=0.26)
    cfg = _het_cfg(gate=gate)
    rng = np.random.default_rng(8)
    vt = rng.uniform(-1.0, 1.0, 20)
    Omega = 0.26
    r = locked_residual(cfg, vt, Omega)
    via_rhs = gk.rhs(cfg, 0.0, vt) - Omega
    np.testing.assert_allclose(r, via_rhs, rtol=0, atol=1e-12)


# -- solver ---------------------------------------------------------------------

def test_solve_identical_gives_synchrony():
    cfg = gk.ModelConfig.identical(10, 0.2, 24.0,
                                   gate=gk.GateParams(theta0=2.0, w=1.0, k=10.0))
    prof = solve_locked(cfg, 1e-3 * np.arange(10) - 4.5e-3, None)
    assert prof.converged
    np.testing.assert_allclose(prof.vartheta, np.zeros(10), atol=1e-9)
    assert prof.Omega == pytest.approx(2 * PI / 24.0, abs=1e-12)


def test_solve_classical_heterogeneous():
    cfg = _het_cfg()
    prof = solve_locked(cfg)
    assert prof.converged
    assert prof.residual <= 1e-10
    assert abs(np.sum(prof.vartheta)) <= 1e-12
    assert prof.Omega == pytest.approx(float(cfg.omega.mean()), abs=1e-10)
    # matches the independent mean-field oracle after removing the rotation
    vt_oracle, _ = _classical_oracle(cfg.omega, cfg.K)
    shift = circular_mean(vt_oracle - prof.vartheta)
    assert np.max(np.abs(gk.wrapped_distance(vt_oracle - shift, prof.vartheta))) <= 1e-9


def test_solver_reports_nonconvergence():
    # far beyond the locking threshold: K too small to balance the spread
    cfg = _het_cfg(K=0.001)
    prof = solve_locked(cfg, max_iter=30)
    assert not prof.converged
    assert prof.residual > 1e-10


def test_continuation_reaches_gated_state():
    gate = gk.GateParams(theta0=0.0, w=1.0, k=10.0)
    cfg = _het_cfg(gate=gate)
    prof = solve_locked_continuation(cfg, w_step=0.05)
    assert prof.converged
    assert np.max(np.abs(locked_residual(cfg, prof.vartheta, prof.Omega))) <= 1e-10
    # gate widens the profile relative to classical
    classical = solve_locked(_het_cfg())
    assert gk.delta_max(prof.vartheta) > gk.delta_max(classical.vartheta)


# -- locked-frequency identity ----------------------------------------------------

def test_identity_gate_disabled():
    cfg = _het_cfg()
    rng = np.random.default_rng(9)
    Omega, corr = locked_frequency_identity(cfg, rng.uniform(-1, 1, 20))
    assert corr == 0.0
    assert Omega == pytest.approx(float(cfg.omega.mean()), abs=1e-15)


def test_identity_equal_profile_no_correction():
    gate = gk.GateParams(theta0=0.3, w=2.0, k=10.0)
    cfg = _het_cfg(gate=gate)
    Omega, corr = locked_frequency_identity(cfg, np.full(20, 0.8))
    assert corr == pytest.approx(0.0, abs=1e-15)


def test_identity_hand_value_two_oscillators():
    gate = gk.GateParams(theta0=0.0, w=PI, k=10.0)
    cfg = gk.ModelConfig(N=2, K=0.4, omega=np.array([0.2, 0.3]), gate=gate)
    vt = np.array([0.0, PI / 2])
    s0 = gk.gate_value(gate, 0.0)
    s1 = gk.gate_value(gate, PI / 2)
    expected_corr = (0.4 / 4.0) * (s0 - s1) * np.sin(PI / 2)
    Omega, corr = locked_frequency_identity(cfg, vt)
    assert corr == pytest.approx(expected_corr, rel=1e-14)
    assert Omega == pytest.approx(0.25 + expected_corr, rel=1e-14)


def test_identity_holds_at_converged_states():
    for w in (0.5, 1.0, 1.5):
        gate = gk.GateParams(theta0=0.0, w=w, k=10.0)
        cfg = _het_cfg(gate=gate)
        prof = solve_locked_continuation(cfg)
        assert prof.converged
        Omega_id, _ = locked_frequency_identity(cfg, prof.vartheta)
        assert abs(Omega_id - prof.Omega) <= 1e-9


# -- jacobian ----------------------------------------------------------------------

def test_jacobian_matches_finite_differences():
    rng = np.random.default_rng(10)
    h = 1e-6
    for trial in range(100):
        n = 5 if trial % 2 == 0 else 20
        gate = gk.GateParams(theta0=rng.uniform(0, 2 * PI), w=rng.uniform(0.5, 5.0),
                             k=rng.uniform(0.5, 20.0))
        cfg = gk.ModelConfig(N=n, K=rng.uniform(0.1, 2.0),
                             omega=rng.normal(0.3, 0.05, n), gate=gate)
        vt = rng.uniform(-PI, PI, n)
        J = jacobian(cfg, vt)
        fd = np.empty((n, n))
        for col in range(n):
            e = np.zeros(n)
            e[col] = h
            fd[:, col] = (locked_residual(cfg, vt + e, 0.0)
                          - locked_residual(cfg, vt - e, 0.0)) / (2 * h)
        assert np.max(np.abs(J - fd)) <= 1e-5


def test_jacobian_disabled_gate_is_classical():
    cfg = _het_cfg()
    rng = np.random.default_rng(11)
    vt = rng.uniform(-PI, PI, 20)
    J = jacobian(cfg, vt)
    diff = vt[None, :] - vt[:, None]
    classical = cfg.K / cfg.N * np.cos(diff)
    np.fill_diagonal(classical, -cfg.K / cfg.N * (np.cos(diff).sum(axis=1) - 1.0))
    np.testing.assert_allclose(J, classical, atol=1e-15)


def test_jacobian_synchrony_spectrum():
    gate = gk.GateParams(theta0=0.0, w=PI, k=10.0)
    cfg = gk.ModelConfig.identical(20, 0.2, 24.0, gate=gate)
    for theta_star in (0.7, PI / 2, 3.0):
        J = jacobian(cfg, np.full(20, theta_star))
        ev = np.sort(np.linalg.eigvals(J).real)
        s = gk.gate_value(gate, theta_star)
        assert abs(ev[-1]) <= 1e-8
        np.testing.assert_allclose(ev[:-1], -0.2 * s, atol=1e-8)


def test_diagonal_forms_agree_at_locked_state():
    gate = gk.GateParams(theta0=0.0, w=1.0, k=10.0)
    cfg = _het_cfg(gate=gate)
    prof = solve_locked_continuation(cfg)
    assert prof.converged
    d_direct = np.diag(jacobian(cfg, prof.vartheta))
    d_balance = jacobian_diagonal_from_balance(cfg, prof.vartheta, prof.Omega)
    assert np.max(np.abs(d_direct - d_balance)) <= 1e-9


# -- stability ---------------------------------------------------------------------

def test_stability_identical_synchrony():
    gate = gk.GateParams(theta0=0.0, w=PI, k=10.0)
    cfg = gk.ModelConfig.identical(20, 0.2, 24.0, gate=gate)
    prof = solve_locked(cfg, 1e-4 * np.random.default_rng(0).standard_normal(20), None)
    assert prof.converged
    report = stability(cfg, prof)
    assert report.verdict is gk.StabilityVerdict.STABLE
    s_star = gk.gate_value(gate, 0.0)
    assert report.spectral_abscissa_transverse == pytest.approx(-0.2 * s_star, abs=1e-8)
    assert report.neutral_mode_removed


def test_stability_classical_heterogeneous_locked():
    cfg = _het_cfg()
    prof = solve_locked(cfg)
    report = stability(cfg, prof)
    assert report.verdict is gk.StabilityVerdict.STABLE
    # spot-check the spectrum through the characteristic polynomial
    J = jacobian(cfg, prof.vartheta)
    for ev in report.eigenvalues[:3]:
        det = np.linalg.det(J - ev * np.eye(cfg.N))
        assert abs(det) <= 1e-6


def test_stability_requires_convergence():
    cfg = _het_cfg(K=0.001)
    prof = solve_locked(cfg, max_iter=5)
    with pytest.raises(gk.PreconditionViolated):
        stability(cfg, prof)


def test_profile_json_roundtrip(tmp_path):
    import json
    cfg = _het_cfg()
    prof = solve_locked(cfg)
    report = stability(cfg, prof)
    path = tmp_path / "locked.json"
    obj = profile_to_json(prof, report, path)
    loaded = json.loads(path.read_text())
    assert loaded["converged"] is True
    assert loaded["verdict"] == "stable"
    assert len(loaded["vartheta"]) == 20
    assert len(loaded["eigenvalues"]) == 20
    assert loaded["omega"] == obj["omega"]


# -- perturbative branch -------------------------------------------------------------

def _perturbation_setup(epsilon, N=10):
    nu = np.arange(N) - (N - 1) / 2.0
    nu /= np.max(np.abs(nu))
    het = HeterogeneitySpec(omega_bar=2 * PI / 24.0, nu=tuple(nu), epsilon=epsilon)
    gate = gk.GateParams(theta0=2.0, w=PI, k=10.0)
    cfg = gk.ModelConfig(N=N, K=0.2, omega=het.omega(), gate=gate)
    return het, cfg


def test_perturbative_zero_epsilon():
    het, cfg = _perturbation_setup(0.0)
    pred = perturbative_branch(het, 0.0, cfg)
    np.testing.assert_array_equal(pred.rho, np.zeros(10))
    assert pred.Omega == het.omega_bar


def test_perturbative_linearity_in_epsilon():
    het1, cfg1 = _perturbation_setup(1e-3)
    het2, cfg2 = _perturbation_setup(2e-3)
    p1 = perturbative_branch(het1, 0.0, cfg1)
    p2 = perturbative_branch(het2, 0.0, cfg2)
    np.testing.assert_allclose(p2.rho, 2.0 * p1.rho, rtol=1e-14)
    np.testing.assert_allclose(p2.gaps, 2.0 * p1.gaps, rtol=1e-14)


def test_perturbative_gaps_consistent_with_rho():
    het, cfg = _perturbation_setup(5e-3)
    pred = perturbative_branch(het, 0.0, cfg)
    np.testing.assert_allclose(pred.gaps, pred.rho[:, None] - pred.rho[None, :])


def test_perturbative_dead_zone_precondition():
    het, _ = _perturbation_setup(1e-3)
    gate = gk.GateParams(theta0=0.0, w=PI, k=10.0)  # reference phase inside zone
    cfg = gk.ModelConfig(N=10, K=0.2, omega=het.omega(), gate=gate)
    with pytest.raises(gk.PreconditionViolated):
        perturbative_branch(het, 0.0, cfg)


def test_heterogeneity_spec_requires_zero_sum():
    with pytest.raises(ValueError):
        HeterogeneitySpec(omega_bar=1.0, nu=(0.5, 0.6, -0.5), epsilon=0.1)


def test_perturbative_quadratic_error_scaling():
    ratios = []
    for eps in (1e-2, 5e-3, 2.5e-3):
        het, cfg = _perturbation_setup(eps)
        pred = perturbative_branch(het, 0.0, cfg)
        prof = solve_locked(cfg, pred.rho, pred.Omega)
        assert prof.converged
        err = np.max(np.abs(prof.vartheta - pred.rho))
        ratios.append(err / eps**2)
    for a, b in zip(ratios, ratios[1:]):
        assert max(a, b) / min(a, b) <= 4.0


# -- simulation/solver consistency -----------------------------------------------

def _simulated_profile(cfg, seed=0):
    icfg = gk.IntegrationConfig(t_end=2750.0, sample_dt=1.0, rtol=1e-10, atol=1e-12)
    y0 = initial_phases(InitSpec(InitMode.UNIFORM_RANDOM, seed), cfg.N)
    rec = gk.poincare_section(cfg, icfg, y0, transient_cut=2400.0)
    verdict = gk.classify_locking(rec)
    rel = rec.rel_phases[rec.retained]
    prof = np.array([circular_mean(rel[:, i]) for i in range(cfg.N)])
    return verdict, prof


@pytest.mark.parametrize("w", [None, 0.5])
def test_simulated_locked_profile_matches_solver(w):
    if w is None:
        cfg = _het_cfg()
    else:
        cfg = _het_cfg(gate=gk.GateParams(theta0=0.0, w=w, k=10.0,
                                          frame=gk.GateFrame.MEAN_PHASE))
    verdict, sim = _simulated_profile(cfg)
    assert verdict.kind is gk.LockKind.LOCKED
    prof = solve_locked_continuation(cfg)
    assert prof.converged
    assert stability(cfg, prof).verdict is gk.StabilityVerdict.STABLE
    shift = circular_mean(sim - prof.vartheta)
    assert np.max(np.abs(gk.wrapped_distance(sim - shift, prof.vartheta))) <= 1e-3


@pytest.mark.parametrize("w", [None, 0.5, 1.0])
def test_simulated_profile_satisfies_balance(w):
    # frame-independent form of the consistency check: the simulated
    # profile solves the balance equations once the optimal Omega is
    # removed (the co-rotating gate evaluates at the simulated offsets)
    if w is None:
        cfg = _het_cfg()
    else:
        cfg = _het_cfg(gate=gk.GateParams(theta0=0.0, w=w, k=10.0,
                                          frame=gk.GateFrame.MEAN_PHASE))
    verdict, sim = _simulated_profile(cfg)
    assert verdict.kind is gk.LockKind.LOCKED
    coupling = locked_residual(cfg, sim, 0.0)
    residual = coupling - coupling.mean()
    assert np.max(np.abs(residual)) <= 1e-7
