import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rydholo.circuits import (
    KINDS,
    Circuit,
    Conditioned,
    Gate,
    Measure,
    apply_circuit,
    conversion_circuit,
    conversion_fidelities,
    derive_circuit,
    gate_matrix,
    load_circuit,
    named_state,
    overlap_fidelity,
    search_circuit,
)
from rydholo.pulses import gate_preset, target_u, controlled
from rydholo.qcore import QuantumState, Register, ZeroProbabilityBranchError

REG4 = Register((2,) * 4)


def random_state(rng, n):
    v = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return v / np.linalg.norm(v)


def test_named_states():
    ghz = named_state("GHZ4").amplitudes
    assert ghz[0] == pytest.approx(1 / np.sqrt(2)) and ghz[15] == pytest.approx(1 / np.sqrt(2))
    cl = named_state("CLUSTER4").amplitudes
    np.testing.assert_allclose(cl[[0, 12, 3, 15]], [0.5, 0.5, 0.5, -0.5])
    w = named_state("W4").amplitudes
    np.testing.assert_allclose(w[[1, 2, 4, 8]], 0.5)
    for lab in ("GHZ4", "CLUSTER4", "W4"):
        assert np.linalg.norm(named_state(lab).amplitudes) == pytest.approx(1)
    with pytest.raises(ValueError):
        named_state("DICKE4")


def test_empty_circuit_is_identity():
    psi = random_state(np.random.default_rng(0), 4)
    out, bits = apply_circuit(Circuit(4), QuantumState(REG4, psi))
    np.testing.assert_allclose(out.vector, psi)
    assert bits == {}


def test_bell_pair_step():
    c = Circuit(4, (Gate("H", (0,)), Gate("CNOT", (0, 1))))
    out, _ = apply_circuit(c, REG4.ket("0000"))
    expect = QuantumState.from_labels(REG4, {"0000": 1, "1100": 1})
    assert out.fidelity(expect) == pytest.approx(1, abs=1e-12)


def test_gate_matrices_match_physical_presets():
    np.testing.assert_allclose(gate_matrix("CNOT"), controlled(target_u(gate_preset("CNOT"))), atol=1e-12)
    np.testing.assert_allclose(gate_matrix("CZ"), controlled(target_u(gate_preset("CZ"))), atol=1e-12)
    np.testing.assert_allclose(gate_matrix("CH"), controlled(target_u(gate_preset("CH_DERIVED"))), atol=1e-12)
    with pytest.raises(ValueError):
        gate_matrix("TOFFOLI")


def test_circuit_validation():
    with pytest.raises(ValueError):
        Circuit(2, (Gate("H", (2,)),))
    with pytest.raises(ValueError):
        Gate("CNOT", (1, 1))
    with pytest.raises(ValueError):
        # conditioned gate before its bit is written
        Circuit(2, (Conditioned(0, 1, Gate("X", (0,))), Measure(1, "Z", 0)))


@pytest.mark.parametrize("name", ["ghz_to_cluster", "ghz_to_w", "w_to_cluster"])
def test_text_round_trip_is_exact(name):
    c = load_circuit(name)
    text = c.to_text()
    back = Circuit.from_text(text)
    assert back == c
    assert back.to_text() == text


def test_text_parse_errors():
    with pytest.raises(ValueError):
        Circuit.from_text("QUBITS 2\nGATE FOO 0\n")
    with pytest.raises(ValueError):
        Circuit.from_text("QUBITS 2\nMEASURE 0 BASIS Y -> 0\n")


def test_gate_budgets_match_descriptions():
    assert load_circuit("ghz_to_cluster").gate_counts() == {"H": 1, "CNOT": 2}
    assert load_circuit("ghz_to_w").gate_counts() == {"X": 1, "CNOT": 4, "CH": 2}
    names = [op.name for op in load_circuit("ghz_to_w").ops]
    assert names == ["X", "CNOT", "CNOT", "CH", "CH", "CNOT", "CNOT"]
    w2c = load_circuit("w_to_cluster")
    assert w2c.qubit_count == 5
    assert sum(isinstance(op, Measure) and op.basis == "X" for op in w2c.ops) == 1


@pytest.mark.parametrize("kind", KINDS)
def test_conversions_reach_target(kind):
    fids = conversion_fidelities(kind)
    for key, f in fids.items():
        if not key.startswith("probability"):
            assert f >= 1 - 1e-9, key


def test_measured_branches_are_total():
    fids = conversion_fidelities("w_to_cluster")
    assert fids["probability_0"] + fids["probability_1"] == pytest.approx(1, abs=1e-12)
    assert fids["probability_0"] > 0 and fids["probability_1"] > 0


def test_inverse_kinds_are_adjoints():
    fwd = load_circuit("ghz_to_w")
    inv = conversion_circuit("w_to_ghz")
    np.testing.assert_allclose(inv.unitary() @ fwd.unitary(), np.eye(16), atol=1e-12)
    with pytest.raises(ValueError):
        conversion_circuit("ghz_to_dicke")


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_unitary_round_trip(seed):
    rng = np.random.default_rng(seed)
    circ = load_circuit("ghz_to_w")
    psi = random_state(rng, 4)
    out, _ = apply_circuit(circ, psi)
    assert np.linalg.norm(out.vector) == pytest.approx(1, abs=1e-12)
    back, _ = apply_circuit(circ.inverse(), out)
    assert overlap_fidelity(back.vector, psi) == pytest.approx(1, abs=1e-12)


def test_forced_zero_probability_bit():
    c = Circuit(1, (Measure(0, "Z", 0),))
    with pytest.raises(ZeroProbabilityBranchError):
        apply_circuit(c, np.array([1, 0]), forced_bits={0: 1})
    out, bits = apply_circuit(c, np.array([1, 1]) / np.sqrt(2), forced_bits={0: 1})
    assert bits == {0: 1}
    np.testing.assert_allclose(out.vector, [0, 1])


def test_feed_forward_applies_on_match_only():
    c = Circuit(2, (Gate("H", (0,)), Measure(0, "Z", 0), Conditioned(0, 1, Gate("X", (1,)))))
    for v in (0, 1):
        out, bits = apply_circuit(c, np.array([1, 0, 0, 0]), forced_bits={0: v})
        expect = np.zeros(4)
        expect[3 * v] = 1
        np.testing.assert_allclose(abs(out.vector), expect, atol=1e-12)
    seeded = [apply_circuit(c, np.array([1, 0, 0, 0]), rng_seed=s)[1][0] for s in range(20)]
    assert seeded == [apply_circuit(c, np.array([1, 0, 0, 0]), rng_seed=s)[1][0] for s in range(20)]


def test_search_finds_ghz_to_cluster():
    found = search_circuit(("H", "CNOT", "CNOT"), named_state("GHZ4"), named_state("CLUSTER4"))
    assert found is not None
    assert found == load_circuit("ghz_to_cluster")


def test_search_single_cnot_not_found():
    assert search_circuit(("CNOT",), named_state("GHZ4"), named_state("W4")) is None


def test_search_rejects_long_budget():
    with pytest.raises(ValueError):
        search_circuit(("X",) * 9, named_state("GHZ4"), named_state("W4"))


def test_search_reproduces_ghz_to_w_and_inverse():
    found = derive_circuit("ghz_to_w")
    assert found == load_circuit("ghz_to_w")
    out, _ = apply_circuit(found.inverse(), named_state("W4"))
    assert overlap_fidelity(out.vector, named_state("GHZ4").amplitudes) == pytest.approx(1, abs=1e-12)


def test_search_reproduces_w_to_cluster():
    assert derive_circuit("w_to_cluster") == load_circuit("w_to_cluster")
