import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from rydholo.dynamics import evolve_schrodinger
from rydholo.model import (
    COMPUTATIONAL,
    LADDER,
    QUOTED_V,
    TWO_ATOMS,
    ChainConfig,
    ConfigurationError,
    FullModel,
    SystemConfig,
    build_chain_hamiltonian,
    build_effective_hamiltonian,
    build_full_hamiltonian,
    build_recovery_hamiltonian,
    chain_couplings,
    detuning_delta,
    effective_couplings,
    excitation_number,
    ground_light_shift,
    ladder_projector,
    mhz,
    benchmark_config,
    physical_from_effective,
    solve_antiblockade_V,
)
from rydholo.qcore import Register

idx = TWO_ATOMS.index
RR = idx("rr")


def literal(cfg: SystemConfig) -> SystemConfig:
    """Stark terms on, no detuning tracking: the bare second-order model."""
    return cfg.with_(stark_terms=True, track_detuning=False)


def random_config(rng) -> SystemConfig:
    d1 = mhz(rng.uniform(30, 80))
    return SystemConfig(
        omega11_peak=mhz(rng.uniform(1, 8)),
        omega21_peak=mhz(rng.uniform(2, 15)),
        omega22_peak=mhz(rng.uniform(2, 15)),
        delta1=d1,
        delta2=d1 * rng.uniform(2.5, 8),
        V=mhz(rng.uniform(100, 400)),
        gamma_decay=rng.uniform(0, 5e3),
    )


def random_drive(rng, scale=mhz(5.0)):
    c = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    f = rng.uniform(0.1, 2.0, size=3) * 2 * np.pi * 1e6

    def drive(t):
        return tuple(scale * (c[k, 0] + c[k, 1] * np.sin(f[k] * t) + c[k, 2] * np.cos(2 * f[k] * t)) / 3 for k in range(3))

    return drive


def const(a, b, c):
    return lambda t: (a, b, c)


# ---------------------------------------------------------------------------
# anti-blockade condition


def test_solver_at_benchmark_parameters():
    V = solve_antiblockade_V(benchmark_config())
    assert V / (2 * np.pi * 1e6) == pytest.approx(257.94125, abs=1e-9)
    # the quoted interaction is not a solution
    assert abs(QUOTED_V - V) / (2 * np.pi * 1e6) > 40


def test_solver_drive_off_limit():
    cfg = benchmark_config()
    tiny = cfg.with_(omega11_peak=1e-6, omega21_peak=1e-6, omega22_peak=1e-6)
    assert solve_antiblockade_V(tiny) == pytest.approx(cfg.delta2 - cfg.delta1, rel=1e-12)


def test_solver_round_trip():
    rng = np.random.default_rng(0)
    for _ in range(20):
        cfg = random_config(rng).with_(V=None)
        d = detuning_delta(cfg, cfg.omega11_peak, cfg.omega21_peak, cfg.omega22_peak)
        assert abs(d) < 1e-12 * cfg.delta2 + 1e-6


def test_singular_denominator():
    with pytest.raises(ConfigurationError):
        SystemConfig(mhz(1), mhz(1), mhz(1), mhz(50), mhz(100))


@pytest.mark.parametrize(
    "field,value",
    [("delta1", -1.0), ("omega11_peak", 0.0), ("gamma_decay", -1.0), ("delta2", mhz(60))],
)
def test_config_invariants(field, value):
    with pytest.raises(ConfigurationError):
        benchmark_config().with_(**{field: value})


# ---------------------------------------------------------------------------
# full Hamiltonian


def test_interaction_frame_coupling_phase():
    cfg = benchmark_config()
    o11 = mhz(4.5) * np.exp(0.3j)
    for t in (0.0, 1.3e-7, 2.2e-6):
        h = build_full_hamiltonian(cfg, const(o11, 0, 0), t, frame="interaction").matrix
        assert h[idx("10"), idx("r0")] == pytest.approx(o11 * np.exp(-1j * cfg.delta1 * t), rel=1e-12)


def test_drive_off_interaction_frame():
    cfg = literal(benchmark_config())
    h = build_full_hamiltonian(cfg, None, 1e-6, frame="interaction").matrix
    expected = np.zeros((9, 9))
    expected[RR, RR] = cfg.V_resolved
    np.testing.assert_allclose(h, expected, atol=1e-6)


def test_rotating_frame_rr_detuning():
    cfg = literal(benchmark_config(V=QUOTED_V))
    h = build_full_hamiltonian(cfg, None, 0.0).matrix
    assert h[RR, RR].real == pytest.approx(QUOTED_V + cfg.delta1 - cfg.delta2, rel=1e-12)


def test_rotating_frame_coupling_groups():
    cfg = literal(benchmark_config())
    o = (mhz(1.0), mhz(2.0), mhz(3.0))
    t = 3.1e-7
    h = build_full_hamiltonian(cfg, const(*o), t).matrix
    d1, d2 = cfg.delta1, cfg.delta2
    assert h[idx("10"), idx("r0")] == pytest.approx(o[0] * np.exp(-1j * d1 * t))
    assert h[idx("1r"), RR] == pytest.approx(o[0] * np.exp(1j * (d2 - 2 * d1) * t))
    assert h[idx("0r"), idx("00")] == pytest.approx(o[1] * np.exp(-1j * d2 * t))
    assert h[RR, idx("r0")] == pytest.approx(o[1] * np.exp(-1j * d1 * t))
    assert h[idx("1r"), idx("11")] == pytest.approx(o[2] * np.exp(-1j * d2 * t))
    assert h[RR, idx("r1")] == pytest.approx(o[2] * np.exp(-1j * d1 * t))


@pytest.mark.filterwarnings("ignore:drive/detuning ratio")
def test_builders_hermitian_random_draws():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        cfg = random_config(rng).with_(stark_terms=bool(rng.integers(2)), track_detuning=bool(rng.integers(2)))
        t = rng.uniform(0, 1e-5)
        drive = random_drive(rng)
        for frame in ("rotating", "interaction"):
            m = FullModel(cfg, drive, frame).matrix(t)
            assert np.abs(m - m.conj().T).max() <= 1e-12 * max(1.0, np.abs(m).max())
        o11, o21, o22 = drive(t)
        eff = effective_couplings(cfg, o11, o21, o22)
        m = build_effective_hamiltonian(cfg, lambda s: eff, t).matrix
        assert np.abs(m - m.conj().T).max() <= 1e-12 * max(1.0, np.abs(m).max())


def test_frame_equivalence_random_profiles():
    rng = np.random.default_rng(2)
    T = 0.4e-6
    for _ in range(10):
        cfg = random_config(rng)
        drive = random_drive(rng)
        eye = np.eye(9, dtype=complex)
        rot = evolve_schrodinger(FullModel(cfg, drive, "rotating"), eye, (0, T), 2, rtol=1e-12, atol=1e-14).states[-1]
        inter = evolve_schrodinger(FullModel(cfg, drive, "interaction"), eye, (0, T), 2, rtol=1e-12, atol=1e-14).states[-1]
        u = np.ones(9, dtype=complex)
        u[RR] = np.exp(-1j * (cfg.delta2 - cfg.delta1) * T)
        np.testing.assert_allclose(inter, u[:, None] * rot, atol=1e-8)


def test_unknown_frame():
    with pytest.raises(ValueError):
        build_full_hamiltonian(benchmark_config(), None, 0.0, frame="lab")


# ---------------------------------------------------------------------------
# effective Hamiltonian


def test_effective_couplings_from_physical_drives():
    cfg = literal(benchmark_config())
    o11, o21, o22 = mhz(4.5), mhz(3.0) * np.exp(0.4j), mhz(-7.0)
    c10, c11 = effective_couplings(cfg, o11, o21, o22)
    h = build_effective_hamiltonian(cfg, lambda t: (c10, c11), 0.0).matrix
    assert h[RR, idx("11")] == pytest.approx(-o22 * o11 / cfg.delta1, rel=1e-12)
    assert h[RR, idx("10")] == pytest.approx(-o21 * o11 / cfg.delta1, rel=1e-12)


def test_physical_mapping_round_trip():
    cfg = benchmark_config()
    rng = np.random.default_rng(4)
    c = mhz(1) * (rng.normal(size=2) + 1j * rng.normal(size=2))
    o = physical_from_effective(cfg, c[0], c[1])
    np.testing.assert_allclose(effective_couplings(cfg, *o), c, rtol=1e-12)


def test_stark_diagonal_of_ground_state():
    cfg = literal(benchmark_config())
    o21 = mhz(6.0)
    c10, c11 = effective_couplings(cfg, cfg.omega11_peak, o21, 0.0)
    h = build_effective_hamiltonian(cfg, lambda t: (c10, c11), 0.0).matrix
    assert h[idx("00"), idx("00")].real == pytest.approx(o21**2 / cfg.delta2, rel=1e-12)


def test_effective_off_diagonals_are_only_rr_couplings():
    cfg = benchmark_config()
    h = build_effective_hamiltonian(cfg, lambda t: (mhz(0.3), mhz(-0.2j)), 0.0).matrix
    off = h - np.diag(np.diag(h))
    off[RR, idx("10")] = off[RR, idx("11")] = off[idx("10"), RR] = off[idx("11"), RR] = 0
    np.testing.assert_allclose(off, 0, atol=1e-12)


@pytest.mark.filterwarnings("ignore:drive/detuning ratio")
def test_rr_entry_vanishes_with_solver_V_at_peak():
    cfg = literal(benchmark_config())
    c = effective_couplings(cfg, cfg.omega11_peak, cfg.omega21_peak, cfg.omega22_peak)
    h = build_effective_hamiltonian(cfg, lambda t: c, 0.0).matrix
    assert abs(h[RR, RR]) <= 1e-12 * cfg.delta2


@pytest.mark.filterwarnings("ignore:drive/detuning ratio")
def test_rr_entry_matches_detuning_formula_random():
    rng = np.random.default_rng(9)
    for _ in range(50):
        cfg = literal(random_config(rng))
        o = (cfg.omega11_peak, cfg.omega21_peak * rng.uniform(0, 1), cfg.omega22_peak * rng.uniform(0, 1))
        c = effective_couplings(cfg, *o)
        h = build_effective_hamiltonian(cfg, lambda t: c, 0.0).matrix
        d1, d2, V = cfg.delta1, cfg.delta2, cfg.V
        expected = V + d1 - d2 - (o[1] ** 2 + o[2] ** 2) / d1 - o[0] ** 2 / (d2 - 2 * d1)
        assert h[RR, RR].real == pytest.approx(expected, abs=1e-12 * d2)


def test_light_shifts_cancelled_by_default():
    cfg = benchmark_config()
    assert not cfg.stark_terms
    c = effective_couplings(cfg, cfg.omega11_peak, mhz(5), mhz(5))
    h = build_effective_hamiltonian(cfg, lambda t: c, 0.0).matrix
    block = h[np.ix_(COMPUTATIONAL, COMPUTATIONAL)]
    np.testing.assert_allclose(block, 0, atol=1e-6)
    assert ground_light_shift(cfg, *physical_from_effective(cfg, *c))[0, 0] > 0


def test_effective_validity_warning():
    cfg = benchmark_config()
    big = effective_couplings(cfg, cfg.omega11_peak, mhz(20), 0)
    with pytest.warns(UserWarning):
        build_effective_hamiltonian(cfg, lambda t: big, 0.0)


# ---------------------------------------------------------------------------
# chain


def test_chain_coupling_pattern():
    js = chain_couplings(mhz(1))
    assert len(js) == 4
    assert js[0] == pytest.approx(js[3], rel=1e-15)
    assert js[1] == pytest.approx(js[2], rel=1e-15)
    assert min(js) > 0
    assert js[0] < js[1]


def test_chain_hamiltonian_conserves_ladder_sector():
    # the ladder alternates one and two excitations, so the conserved
    # quantity is the five-state sector rather than the r count itself
    chain = ChainConfig()
    w = (2, 3, 4)
    h = build_chain_hamiltonian(chain, w).matrix
    p = ladder_projector(chain, w)
    np.testing.assert_allclose(h @ p - p @ h, 0, atol=1e-12 * np.abs(h).max())
    np.testing.assert_allclose(h, h.conj().T, atol=1e-12)
    n = np.diag(excitation_number(chain.register)).real
    ends = [chain.register.index(s) for s in ("grgggg", "gggrgg")]
    assert n[ends].tolist() == [1, 1]


def test_chain_windows_checked():
    chain = ChainConfig()
    with pytest.raises(ConfigurationError):
        build_chain_hamiltonian(chain, (5, 6, 7))
    with pytest.raises(ConfigurationError):
        build_chain_hamiltonian(chain, [(1, 2, 3), (3, 4, 5)])
    with pytest.raises(ConfigurationError):
        ChainConfig(window_sequence=((1, 3, 4),))
    with pytest.raises(ConfigurationError):
        ChainConfig(couplings=(1.0, -1.0, 1.0, 1.0))
    # disjoint simultaneous windows are fine
    build_chain_hamiltonian(chain, [(1, 2, 3), (4, 5, 6)])


def test_ladder_perfect_transfer_at_pi_over_omega():
    omega = mhz(1)
    chain = ChainConfig(n_atoms=3, window_sequence=((1, 2, 3),))
    h = build_chain_hamiltonian(chain, (1, 2, 3)).matrix
    reg = chain.register
    U = expm(-1j * h * np.pi / omega)
    assert abs(U[reg.index(LADDER[-1]), reg.index(LADDER[0])]) == pytest.approx(1, abs=1e-9)


# ---------------------------------------------------------------------------
# recovery drive


def test_recovery_half_cycle():
    om = mhz(1)
    h = build_recovery_hamiltonian(om).matrix
    U = expm(-1j * h * np.pi / (2 * om))
    np.testing.assert_allclose(U @ [0, 0, 1], [-1j, 0, 0], atol=1e-12)
    np.testing.assert_allclose(U @ [0, 1, 0], [0, 1, 0], atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(0, 2 * np.pi), st.floats(0.1, 10))
def test_recovery_on_bell_levels(angle, f):
    om = mhz(f)
    a, b = np.cos(angle), np.sin(angle)
    U = expm(-1j * build_recovery_hamiltonian(om).matrix * np.pi / (2 * om))
    np.testing.assert_allclose(U @ [0, a, b], [-1j * b, a, 0], atol=1e-10)


def test_recovery_rejects_nonpositive():
    with pytest.raises(ValueError):
        build_recovery_hamiltonian(0.0)


def test_register_of_chain():
    assert ChainConfig().register == Register.atoms(6, 2)
