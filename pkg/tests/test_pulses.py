import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rydholo.dynamics import evolve_schrodinger
from rydholo.metrics import hamiltonian_for, integration_options
from rydholo.model import COMPUTATIONAL, IRR, IdealModel, benchmark_config
from rydholo.pulses import (
    CH_WARNING,
    HADAMARD,
    GateParams,
    ScheduleInfeasibleError,
    TestPath as DiagnosticPath,
    bright_state,
    dark_state,
    design_schedule,
    dynamic_phase,
    effective_drive,
    gate_preset,
    params_from_unitary,
    path_angles,
    peak_omega0,
    physical_pulses,
    required_kappa,
    target_u,
    target_unitary,
)


def ideal_propagator(params):
    sched = design_schedule(params, None, kappa=0.0)
    H = hamiltonian_for(None, sched, "ideal")
    traj = evolve_schrodinger(H, np.eye(9, dtype=complex), (0, params.T), sample_count=2, rtol=1e-10, atol=1e-12, **integration_options(sched))
    return traj.states[-1]


def test_path_endpoints_and_midpoint():
    T, g = 5.5e-6, np.pi
    beta, alpha = path_angles(np.array([0.0, T / 2, T]), T, g)
    assert beta[0] == 0 and beta[2] == pytest.approx(0, abs=1e-15)
    assert beta[1] == pytest.approx(np.pi)
    # A(pi) = 4 sin^3(pi/3) = 3*sqrt(3)/2, minus the step gamma after T/2
    assert alpha[1] == pytest.approx(3 * np.sqrt(3) / 2 - g)


def test_drive_vanishes_at_ends_and_midpoint():
    p = gate_preset("CNOT")
    om = effective_drive(np.array([0.0, p.T / 2, p.T]), p)
    np.testing.assert_allclose(abs(om), 0, atol=1e-6 * np.pi**2 / p.T)


def test_time_outside_gate_rejected():
    with pytest.raises(ValueError):
        path_angles(1.0, 1e-6, np.pi)


def test_presets():
    assert (gate_preset("cz").gamma, gate_preset("cz").theta, gate_preset("cz").phi) == (np.pi, 0.0, 0.0)
    cnot = gate_preset("CNOT")
    assert (cnot.gamma, cnot.theta, cnot.phi) == (np.pi, np.pi / 2, 0.0)
    ch = gate_preset("CH")
    assert (ch.gamma, ch.theta, ch.phi) == (np.pi / 2, np.pi / 4, 0.0)
    assert ch.warning == CH_WARNING
    assert gate_preset("CH_DERIVED").warning is None
    with pytest.raises(ValueError):
        gate_preset("SWAP")


def test_target_blocks():
    np.testing.assert_allclose(target_u(gate_preset("CNOT")), [[0, 1], [1, 0]], atol=1e-12)
    np.testing.assert_allclose(target_u(gate_preset("CZ")), np.diag([1, -1]), atol=1e-12)
    np.testing.assert_allclose(target_u(gate_preset("CH_DERIVED")), HADAMARD, atol=1e-12)
    assert np.linalg.norm(target_u(gate_preset("CH")) - HADAMARD) > 0.1


def test_target_unitary_is_unitary_random():
    rng = np.random.default_rng(11)
    for g, th, ph in rng.uniform(0, 2 * np.pi, size=(1000, 3)):
        m = target_unitary(GateParams(g, th, ph)).matrix
        np.testing.assert_allclose(m @ m.conj().T, np.eye(4), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(0.05, 3.0), st.floats(-3.0, 3.0))
def test_params_from_unitary_round_trip(g, th, ph):
    u = target_u(GateParams(g, th, ph))
    back = params_from_unitary(u)
    np.testing.assert_allclose(target_u(back), u, atol=1e-9)


def test_params_from_unitary_needs_unit_eigenvalue():
    with pytest.raises(ValueError):
        params_from_unitary(np.diag([1j, -1j]))


def test_dark_state_decoupled_from_drive():
    rng = np.random.default_rng(2)
    for _ in range(5):
        g, th, ph = rng.uniform(0.2, 3, size=3)
        p = GateParams(g, th, ph)
        sched = design_schedule(p, None, kappa=0.0)
        H = hamiltonian_for(None, sched, "ideal")
        d = dark_state(th, ph)
        assert abs(np.vdot(d, bright_state(th, ph))) < 1e-15
        for t in np.linspace(0, p.T, 37):
            assert np.linalg.norm(H(t) @ d) <= 1e-12 * max(1.0, np.linalg.norm(H(t)))


@pytest.mark.parametrize("name", ["CNOT", "CZ", "CH_DERIVED"])
def test_ideal_gate_matches_target(name):
    p = gate_preset(name)
    U = ideal_propagator(p)
    c = list(COMPUTATIONAL)
    assert np.linalg.norm(U[np.ix_(c, c)] - target_unitary(p).matrix, 2) < 1e-4


def test_cyclic_bright_phase():
    p = GateParams(np.pi / 3, 1.1, 0.4)
    U = ideal_propagator(p)
    b = bright_state(p.theta, p.phi)
    out = U @ b
    assert abs(np.vdot(b, out)) == pytest.approx(1, abs=1e-8)
    assert np.angle(np.vdot(b, out) * np.exp(-1j * p.gamma)) == pytest.approx(0, abs=1e-4)
    assert abs(out[IRR]) < 1e-4


@pytest.mark.parametrize("gamma", [np.pi / 4, np.pi / 2, np.pi])
def test_dynamic_phase_zero_on_shipped_path(gamma):
    assert abs(dynamic_phase(GateParams(gamma, np.pi / 2, 0.0))) <= 1e-4


def test_dynamic_phase_zero_with_regularized_path():
    cfg = benchmark_config()
    p = gate_preset("CNOT")
    sched = design_schedule(p, cfg)
    assert sched.kappa > 0
    assert abs(dynamic_phase(sched)) <= 1e-4


def _test_path(alpha, alpha_dot, T=1e-6):
    return DiagnosticPath(
        beta=lambda t: np.pi * np.sin(np.pi * t / T) ** 2,
        beta_dot=lambda t: np.pi**2 / T * np.sin(2 * np.pi * t / T),
        alpha=alpha,
        alpha_dot=alpha_dot,
        T=T,
    )


def test_dynamic_phase_constant_alpha_is_zero():
    path = _test_path(lambda t: np.full_like(t, 0.7), lambda t: np.zeros_like(t))
    assert abs(dynamic_phase(path)) < 1e-15


def test_dynamic_phase_detects_asymmetric_path():
    T = 1e-6
    beta = lambda t: np.pi * np.sin(np.pi * t / T) ** 2
    bdot = lambda t: np.pi**2 / T * np.sin(2 * np.pi * t / T)
    # alpha = beta t / T
    path = DiagnosticPath(beta, bdot, lambda t: beta(t) * t / T, lambda t: bdot(t) * t / T + beta(t) / T, T)
    assert abs(dynamic_phase(path, n=400000)) > 1e-2


def test_auto_kappa_fits_the_peaks():
    cfg = benchmark_config()
    p = gate_preset("CNOT")
    k = required_kappa(p, cfg)
    assert k == pytest.approx(0.0360020, rel=1e-4)
    sched = design_schedule(p, cfg)
    _, o21, o22 = physical_pulses(sched.times, sched, cfg)
    assert np.max(abs(o21)) <= cfg.omega21_peak * (1 + 1e-6)
    assert np.max(abs(o22)) <= cfg.omega22_peak * (1 + 1e-6)


def test_unregularized_path_is_infeasible_with_lasers():
    cfg = benchmark_config()
    p = gate_preset("CNOT")
    assert peak_omega0(p, 0.0) == np.inf
    with pytest.raises(ScheduleInfeasibleError):
        design_schedule(p, cfg, kappa=0.0)


def test_too_short_gate_reports_stretch():
    cfg = benchmark_config()
    p = gate_preset("CNOT", T=0.2e-6)
    with pytest.raises(ScheduleInfeasibleError) as err:
        design_schedule(p, cfg)
    stretch = err.value.stretch
    assert stretch > 1
    # stretching by the reported factor (plus margin) makes it feasible
    design_schedule(p.with_T(p.T * stretch * 1.01), cfg)


def test_odd_sample_count_rejected():
    with pytest.raises(ValueError):
        design_schedule(gate_preset("CZ"), None, kappa=0.0, n_samples=101)


def test_schedule_grid_and_csv(tmp_path):
    cfg = benchmark_config()
    sched = design_schedule(gate_preset("CNOT"), cfg, n_samples=40)
    assert sched.times[20] == pytest.approx(sched.T / 2)
    path = tmp_path / "s.csv"
    sched.to_csv(path, header_comment="test")
    with open(path, encoding="utf-8") as fh:
        assert fh.readline().startswith("# ")
        rows = list(csv.reader(fh))
    assert rows[0] == ["t_s", "omega0_re_rad_s", "omega0_im_rad_s", "omega21_re", "omega21_im", "omega22_re", "omega22_im"]
    assert len(rows) == 42
    assert float(rows[1][0]) == 0.0


def test_linear_interpolation_close_to_exact():
    cfg = benchmark_config()
    sched = design_schedule(gate_preset("CNOT"), cfg)
    t = np.linspace(0, sched.T, 997)
    exact = sched.omega0_at(t)
    lin = sched.omega0_at(t, "linear")
    assert np.max(abs(lin - exact)) < 1e-3 * np.max(abs(exact))
    assert sched.omega0_at(float(t[10]), "linear") == pytest.approx(lin[10])
