"""Qubit circuits with mid-circuit measurement, the entangled-state
conversions and an exhaustive gate-placement search.

Qubits are numbered from 0 and ``|q0 q1 ... >`` has ``q0`` as the most
significant bit.  Serialized circuits use one operation per line::

    QUBITS 5
    GATE X 0
    GATE CNOT 0,2
    MEASURE 4 BASIS X -> 0
    IF 0=0 GATE CZ 2,3

Blank lines and lines starting with ``#`` are ignored.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from typing import Sequence, Union

import numpy as np

from .qcore import QuantumState, Register, ZeroProbabilityBranchError, apply_local, apply_local_channel

SQ2 = np.sqrt(0.5)
SINGLE = {
    "I": np.eye(2),
    "H": np.array([[SQ2, SQ2], [SQ2, -SQ2]]),
    "X": np.array([[0.0, 1.0], [1.0, 0.0]]),
    "Y": np.array([[0, -1j], [1j, 0]]),
    "Z": np.array([[1.0, 0.0], [0.0, -1.0]]),
    "S": np.diag([1, 1j]),
    "SDG": np.diag([1, -1j]),
}
_ADJOINT = {"S": "SDG", "SDG": "S"}


def _controlled(u):
    m = np.eye(4, dtype=np.result_type(u, float))
    m[2:, 2:] = u
    return m


TWO = {
    "CNOT": _controlled(SINGLE["X"]),
    "CH": _controlled(SINGLE["H"]),
    "CZ": _controlled(SINGLE["Z"]),
}


def gate_matrix(name: str) -> np.ndarray:
    if name in SINGLE:
        return SINGLE[name]
    if name in TWO:
        return TWO[name]
    raise ValueError(f"unknown gate {name!r}")


def gate_arity(name: str) -> int:
    if name in SINGLE:
        return 1
    if name in TWO:
        return 2
    raise ValueError(f"unknown gate {name!r}")


@dataclass(frozen=True)
class Gate:
    """Gate ``name`` on ``qubits`` (control first for two-qubit gates)."""

    name: str
    qubits: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        if gate_arity(self.name) != len(self.qubits):
            raise ValueError(f"{self.name} acts on {gate_arity(self.name)} qubit(s)")
        if len(set(self.qubits)) != len(self.qubits):
            raise ValueError("gate qubits must be distinct")

    def adjoint(self) -> "Gate":
        return Gate(_ADJOINT.get(self.name, self.name), self.qubits)

    def text(self) -> str:
        return f"GATE {self.name} {','.join(str(q) for q in self.qubits)}"


@dataclass(frozen=True)
class Measure:
    """Projective measurement of ``qubit`` in the Z or X basis into ``bit``."""

    qubit: int
    basis: str
    bit: int

    def __post_init__(self):
        if self.basis not in ("Z", "X"):
            raise ValueError("measurement basis must be Z or X")

    def text(self) -> str:
        return f"MEASURE {self.qubit} BASIS {self.basis} -> {self.bit}"


@dataclass(frozen=True)
class Conditioned:
    """Gate applied only when classical ``bit`` equals ``value``."""

    bit: int
    value: int
    gate: Gate

    def text(self) -> str:
        return f"IF {self.bit}={self.value} {self.gate.text()}"


Op = Union[Gate, Measure, Conditioned]


@dataclass(frozen=True)
class Circuit:
    """Ordered operations on ``qubit_count`` qubits."""

    qubit_count: int
    ops: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(self.ops))
        written: set[int] = set()
        for op in self.ops:
            qs = op.gate.qubits if isinstance(op, Conditioned) else (op.qubits if isinstance(op, Gate) else (op.qubit,))
            if any(not 0 <= q < self.qubit_count for q in qs):
                raise ValueError(f"qubit index out of range in {op.text()}")
            if isinstance(op, Measure):
                written.add(op.bit)
            if isinstance(op, Conditioned) and op.bit not in written:
                raise ValueError(f"bit {op.bit} is used before it is measured")

    @property
    def is_unitary(self) -> bool:
        return all(isinstance(op, Gate) for op in self.ops)

    def gate_counts(self) -> dict:
        out: dict[str, int] = {}
        for op in self.ops:
            if isinstance(op, Gate):
                out[op.name] = out.get(op.name, 0) + 1
        return out

    def inverse(self) -> "Circuit":
        """Op-reversed adjoint (unitary circuits only)."""
        if not self.is_unitary:
            raise ValueError("only measurement-free circuits can be inverted")
        return Circuit(self.qubit_count, tuple(op.adjoint() for op in reversed(self.ops)))

    def then(self, other: "Circuit") -> "Circuit":
        if other.qubit_count != self.qubit_count:
            raise ValueError("qubit counts differ")
        return Circuit(self.qubit_count, self.ops + other.ops)

    def unitary(self) -> np.ndarray:
        if not self.is_unitary:
            raise ValueError("circuit contains measurements")
        n = self.qubit_count
        U = np.eye(2**n, dtype=complex)
        for op in self.ops:
            U = apply_local(U, gate_matrix(op.name), (2,) * n, op.qubits)
        return U

    def to_text(self) -> str:
        lines = [f"QUBITS {self.qubit_count}"] + [op.text() for op in self.ops]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Circuit":
        n = None
        ops: list = []
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            ops_or_n = _parse_line(line)
            if isinstance(ops_or_n, int):
                n = ops_or_n
            else:
                ops.append(ops_or_n)
        if n is None:
            raise ValueError("missing QUBITS line")
        return cls(n, tuple(ops))


def _parse_gate(tokens: list[str]) -> Gate:
    if len(tokens) != 3 or tokens[0] != "GATE":
        raise ValueError(f"bad gate syntax: {' '.join(tokens)!r}")
    return Gate(tokens[1], tuple(int(q) for q in tokens[2].split(",")))


def _parse_line(line: str):
    tok = line.split()
    if tok[0] == "QUBITS":
        return int(tok[1])
    if tok[0] == "GATE":
        return _parse_gate(tok)
    if tok[0] == "MEASURE":
        if len(tok) != 6 or tok[2] != "BASIS" or tok[4] != "->":
            raise ValueError(f"bad measurement syntax: {line!r}")
        return Measure(int(tok[1]), tok[3], int(tok[5]))
    if tok[0] == "IF":
        bit, val = tok[1].split("=")
        return Conditioned(int(bit), int(val), _parse_gate(tok[2:]))
    raise ValueError(f"unknown operation: {line!r}")


# ---------------------------------------------------------------------------
# named states


@dataclass(frozen=True)
class NamedState:
    label: str
    amplitudes: np.ndarray

    def state(self) -> QuantumState:
        n = int(np.log2(self.amplitudes.size))
        return QuantumState(Register((2,) * n), self.amplitudes)


def _ket(n: int, terms: dict[str, float]) -> np.ndarray:
    v = np.zeros(2**n, dtype=complex)
    for bits, c in terms.items():
        v[int(bits, 2)] += c
    return v / np.linalg.norm(v)


NAMED_STATES = {
    "GHZ4": _ket(4, {"0000": 1, "1111": 1}),
    "CLUSTER4": _ket(4, {"0000": 1, "1100": 1, "0011": 1, "1111": -1}),
    "W4": _ket(4, {"0001": 1, "0010": 1, "0100": 1, "1000": 1}),
}


def named_state(label: str) -> NamedState:
    """``GHZ4``, ``CLUSTER4`` or ``W4``."""
    if label not in NAMED_STATES:
        raise ValueError(f"unknown state {label!r}")
    return NamedState(label, NAMED_STATES[label].copy())


def _vector(state) -> np.ndarray:
    if isinstance(state, NamedState):
        return state.amplitudes
    if isinstance(state, QuantumState):
        return state.vector
    return np.asarray(state, dtype=complex)


def overlap_fidelity(a, b) -> float:
    """``|<a|b>|^2`` (equivalence up to global phase)."""
    return float(abs(np.vdot(_vector(a), _vector(b))) ** 2)


# ---------------------------------------------------------------------------
# simulation


def _extend(vec: np.ndarray, n_from: int, n_to: int) -> np.ndarray:
    """Append ``n_to - n_from`` ancilla qubits in ``|0>``."""
    if n_to == n_from:
        return vec
    anc = np.zeros(2 ** (n_to - n_from), dtype=complex)
    anc[0] = 1
    return np.kron(vec, anc)


def apply_circuit(
    circuit: Circuit,
    state,
    rng_seed: int | None = None,
    forced_bits: dict | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[QuantumState, dict]:
    """Run ``circuit`` on ``state``.

    A state with fewer qubits than the circuit is extended by ancillas in
    ``|0>`` on the highest qubit indices.  Measured qubits stay in the
    register, collapsed.

    Returns
    -------
    (QuantumState, dict)
        Output state and the classical bits.

    Raises
    ------
    ZeroProbabilityBranchError
        If a forced bit has zero probability.
    """
    n = circuit.qubit_count
    vec = _vector(state).astype(complex)
    n_in = int(round(np.log2(vec.size)))
    if n_in > n or 2**n_in != vec.size:
        raise ValueError("input state does not fit the circuit")
    vec = _extend(vec, n_in, n)
    dims = (2,) * n
    bits: dict[int, int] = {}
    forced = dict(forced_bits or {})
    gen = rng if rng is not None else np.random.default_rng(rng_seed)
    for op in circuit.ops:
        if isinstance(op, Gate):
            vec = apply_local(vec, gate_matrix(op.name), dims, op.qubits)
        elif isinstance(op, Conditioned):
            if bits[op.bit] == op.value:
                vec = apply_local(vec, gate_matrix(op.gate.name), dims, op.gate.qubits)
        else:
            basis = np.eye(2) if op.basis == "Z" else SINGLE["H"]
            branches = []
            for k in range(2):
                proj = np.outer(basis[:, k], basis[:, k])
                branches.append(apply_local(vec, proj, dims, [op.qubit]))
            p = np.array([np.vdot(b, b).real for b in branches])
            if op.bit in forced:
                k = int(forced[op.bit])
                if p[k] < 1e-12:
                    raise ZeroProbabilityBranchError(f"bit {op.bit}={k} has probability {p[k]:.3e}")
            else:
                k = int(gen.choice(2, p=p / p.sum()))
            bits[op.bit] = k
            vec = branches[k] / np.sqrt(p[k])
    return QuantumState(Register(dims), vec), bits


def data_state(out: QuantumState, circuit: Circuit, bits: dict, data_qubits: int) -> np.ndarray:
    """Data-qubit amplitudes after the trailing ancillas were measured.

    Each measured ancilla is contracted with the basis vector of its
    recorded outcome; the result is normalized.
    """
    n = circuit.qubit_count
    t = out.vector.reshape((2,) * n)
    meas = {op.qubit: op for op in circuit.ops if isinstance(op, Measure)}
    for q in range(n - 1, data_qubits - 1, -1):
        op = meas.get(q)
        if op is None:
            v = np.array([1.0, 0.0])
        else:
            basis = np.eye(2) if op.basis == "Z" else SINGLE["H"]
            v = basis[:, bits[op.bit]]
        t = np.tensordot(t, v.conj(), axes=([q], [0]))
    vec = t.reshape(-1)
    return vec / np.linalg.norm(vec)


def _first_bit(circuit: Circuit) -> int:
    for op in circuit.ops:
        if isinstance(op, Measure):
            return op.bit
    raise ValueError("circuit has no measurement")


def _branch_probability(circuit: Circuit, state, value: int) -> float:
    n = circuit.qubit_count
    vec = _vector(state).astype(complex)
    vec = _extend(vec, int(round(np.log2(vec.size))), n)
    dims = (2,) * n
    for op in circuit.ops:
        if isinstance(op, Gate):
            vec = apply_local(vec, gate_matrix(op.name), dims, op.qubits)
        elif isinstance(op, Measure):
            basis = np.eye(2) if op.basis == "Z" else SINGLE["H"]
            proj = np.outer(basis[:, value], basis[:, value])
            b = apply_local(vec, proj, dims, [op.qubit])
            return float(np.vdot(b, b).real)
    raise ValueError("circuit has no measurement")


def apply_circuit_channels(circuit: Circuit, rho: np.ndarray, channels: dict) -> np.ndarray:
    """Run a unitary circuit on a density matrix, replacing named gates by channels.

    ``channels[name]`` is a ``(4, 4, 4, 4)`` map on the (control, target)
    qubit pair, for example the computational block of a simulated gate;
    other gates act as their exact matrices.
    """
    if not circuit.is_unitary:
        raise ValueError("channel simulation supports measurement-free circuits")
    n = circuit.qubit_count
    dims = (2,) * n
    rho = np.asarray(rho, dtype=complex)
    for op in circuit.ops:
        if op.name in channels:
            rho = apply_local_channel(rho, channels[op.name], dims, op.qubits)
        else:
            U = np.eye(2**n, dtype=complex)
            U = apply_local(U, gate_matrix(op.name), dims, op.qubits)
            rho = U @ rho @ U.conj().T
    return rho


# ---------------------------------------------------------------------------
# shipped circuits

KINDS = ("ghz_to_cluster", "cluster_to_ghz", "ghz_to_w", "w_to_ghz", "w_to_cluster", "w_to_cluster_unitary")
CONVERSIONS = {
    "ghz_to_cluster": ("GHZ4", "CLUSTER4"),
    "cluster_to_ghz": ("CLUSTER4", "GHZ4"),
    "ghz_to_w": ("GHZ4", "W4"),
    "w_to_ghz": ("W4", "GHZ4"),
    "w_to_cluster": ("W4", "CLUSTER4"),
    "w_to_cluster_unitary": ("W4", "CLUSTER4"),
}


def load_circuit(name: str) -> Circuit:
    text = resources.files("rydholo").joinpath("data").joinpath("circuits").joinpath(f"{name}.txt").read_text(encoding="utf-8")
    return Circuit.from_text(text)


def conversion_circuit(kind: str) -> Circuit:
    """Shipped conversion circuit.

    ``cluster_to_ghz`` and ``w_to_ghz`` are the adjoints of the frozen forward
    circuits; ``w_to_cluster_unitary`` composes ``w_to_ghz`` with
    ``ghz_to_cluster``; ``w_to_cluster`` uses one ancilla (qubit 4), an
    X-basis measurement and feed-forward.
    """
    if kind == "cluster_to_ghz":
        return load_circuit("ghz_to_cluster").inverse()
    if kind == "w_to_ghz":
        return load_circuit("ghz_to_w").inverse()
    if kind == "w_to_cluster_unitary":
        return load_circuit("ghz_to_w").inverse().then(load_circuit("ghz_to_cluster"))
    if kind in ("ghz_to_cluster", "ghz_to_w", "w_to_cluster"):
        return load_circuit(kind)
    raise ValueError(f"unknown conversion {kind!r}")


# budgets (gate names in order) that reproduce the shipped circuits
UNITARY_BUDGETS = {
    "ghz_to_cluster": ("H", "CNOT", "CNOT"),
    "ghz_to_w": ("X", "CNOT", "CNOT", "CH", "CH", "CNOT", "CNOT"),
}


@dataclass(frozen=True)
class MeasurementBudget:
    """Gate template for an ancilla-assisted conversion.

    ``pre`` acts on all qubits before the ancilla is measured in the X basis;
    ``branches[v]`` is applied to the data qubits when the outcome is ``v``.
    """

    pre: tuple[str, ...]
    branches: tuple[tuple[str, ...], tuple[str, ...]]
    data_qubits: int = 4
    ancillas: int = 1


MEASUREMENT_BUDGETS = {
    "w_to_cluster": MeasurementBudget(("X", "CNOT", "CNOT", "CNOT", "CNOT", "CNOT"), (("CZ",), ("Z", "Z"))),
}


def conversion_fidelities(kind: str) -> dict:
    """Fidelity with the target for each measurement branch (or the single run)."""
    src, tgt = CONVERSIONS[kind]
    circ = conversion_circuit(kind)
    target = named_state(tgt).amplitudes
    if circ.is_unitary:
        out, _ = apply_circuit(circ, named_state(src))
        return {"unitary": overlap_fidelity(out.vector, target)}
    res = {}
    bit = _first_bit(circ)
    for v in (0, 1):
        out, bits = apply_circuit(circ, named_state(src), forced_bits={bit: v})
        res[f"branch_{v}"] = overlap_fidelity(data_state(out, circ, bits, 4), target)
        res[f"probability_{v}"] = _branch_probability(circ, named_state(src), v)
    return res


# ---------------------------------------------------------------------------
# search


def placements(name: str, n: int) -> list[tuple[int, ...]]:
    """Qubit placements of one gate in lexicographic order."""
    if gate_arity(name) == 1:
        return [(q,) for q in range(n)]
    return [(c, t) for c in range(n) for t in range(n) if c != t]


def _layer_apply(states: np.ndarray, name: str, n: int, adjoint: bool = False) -> np.ndarray:
    """Apply every placement of ``name`` to every row; rows become (row, placement)-major."""
    m = gate_matrix(name)
    if adjoint:
        m = m.conj().T
    dims = (2,) * n
    outs = []
    for pl in placements(name, n):
        outs.append(apply_local(states.T, m, dims, pl).T)
    stacked = np.stack(outs, axis=1)  # (rows, placements, 2^n)
    return stacked.reshape(-1, 2**n)


def _enumerate(start: np.ndarray, names: Sequence[str], n: int, adjoint: bool = False) -> np.ndarray:
    states = start[None, :]
    for nm in names:
        states = _layer_apply(states, nm, n, adjoint)
    return states


def _decode(index: int, names: Sequence[str], n: int) -> list[tuple[int, ...]]:
    sizes = [len(placements(nm, n)) for nm in names]
    out = []
    for nm, s in zip(reversed(names), reversed(sizes)):
        index, r = divmod(index, s)
        out.append(placements(nm, n)[r])
    return list(reversed(out))


def search_circuit(
    budget,
    source,
    target,
    allow_ancilla_measurement: bool = False,
    qubit_count: int = 4,
    tol: float = 1e-9,
):
    """First lexicographic gate placement that maps ``source`` to ``target``.

    Parameters
    ----------
    budget : sequence of str or MeasurementBudget
        Gate names in order.  With ``allow_ancilla_measurement`` a
        :class:`MeasurementBudget` gives the pre-measurement template and the
        feed-forward template of each branch.
    source, target : NamedState or array_like
    tol : float
        Acceptance ``|<target|U|source>| >= 1 - tol``.

    Returns
    -------
    Circuit or None
        ``None`` when no placement works.

    Notes
    -----
    Unitary budgets are searched meet-in-the-middle: prefix states
    ``P|source>`` and suffix rows ``<target|S`` are enumerated separately in
    lexicographic order and combined through one overlap matrix, so the first
    hit in prefix-major order is the lexicographic first.
    """
    src = _vector(source)
    tgt = _vector(target)
    if allow_ancilla_measurement:
        if not isinstance(budget, MeasurementBudget):
            raise TypeError("measurement search needs a MeasurementBudget")
        return _search_measured(budget, src, tgt, tol)
    names = tuple(budget)
    if len(names) > 8:
        raise ValueError("budget longer than 8 gates")
    n = qubit_count
    if not names:
        return Circuit(n) if abs(abs(np.vdot(tgt, src)) - 1) <= tol else None
    k = (len(names) + 1) // 2
    pre, suf = names[:k], names[k:]
    P = _enumerate(src.astype(complex), pre, n)
    # rows Q^dag |target>: apply adjoint suffix gates last-to-first
    Q = _enumerate(tgt.astype(complex), tuple(reversed(suf)), n, adjoint=True)
    # Q was expanded last-gate-major; reorder to first-suffix-gate-major lexicographic order
    sizes = [len(placements(nm, n)) for nm in reversed(suf)]
    if suf:
        Q = Q.reshape(sizes + [2**n])
        Q = np.transpose(Q, list(reversed(range(len(sizes)))) + [len(sizes)]).reshape(-1, 2**n)
    ov = np.abs(Q.conj() @ P.T).T  # (prefix, suffix)
    hits = np.argwhere(ov >= 1 - tol)
    if hits.size == 0:
        return None
    pi, si = hits[0]
    pls = _decode(int(pi), pre, n) + (_decode(int(si), suf, n) if suf else [])
    return Circuit(n, tuple(Gate(nm, pl) for nm, pl in zip(names, pls)))


def _search_measured(budget: MeasurementBudget, src: np.ndarray, tgt: np.ndarray, tol: float):
    nd = budget.data_qubits
    n = nd + budget.ancillas
    if budget.ancillas != 1:
        raise ValueError("exactly one ancilla is supported")
    if len(budget.pre) > 8:
        raise ValueError("budget longer than 8 gates")
    anc = nd  # ancilla index
    start = _extend(src.astype(complex), nd, n)
    # feed-forward candidates per branch: rows F^dag |target> in lexicographic placement order
    branch_rows = []
    for names in budget.branches:
        rows = _enumerate(tgt.astype(complex), tuple(reversed(names)), nd, adjoint=True)
        sizes = [len(placements(nm, nd)) for nm in reversed(names)]
        if names:
            rows = rows.reshape(sizes + [2**nd])
            rows = np.transpose(rows, list(reversed(range(len(sizes)))) + [len(sizes)]).reshape(-1, 2**nd)
        branch_rows.append(rows)
    pre = budget.pre
    split = max(len(pre) - 3, 0)
    head, tail = pre[:split], pre[split:]
    heads = _enumerate(start, head, n) if head else start[None, :]
    for hi in range(heads.shape[0]):
        states = _enumerate(heads[hi], tail, n)
        psi = states.reshape(-1, 2**nd, 2)
        ok = []
        firsts = []
        for v in (0, 1):
            sign = 1 if v == 0 else -1
            br = (psi[:, :, 0] + sign * psi[:, :, 1]) * SQ2
            norm = np.linalg.norm(br, axis=1)
            good_norm = norm > 1e-9
            ov = np.abs(br @ branch_rows[v].conj().T) / np.where(good_norm, norm, 1.0)[:, None]
            hit = (ov >= 1 - tol) & good_norm[:, None]
            ok.append(hit.any(axis=1))
            firsts.append(np.where(hit.any(axis=1), hit.argmax(axis=1), -1))
        both = ok[0] & ok[1]
        if both.any():
            ti = int(np.argmax(both))
            pls = (_decode(hi, head, n) if head else []) + _decode(ti, tail, n)
            ops: list = [Gate(nm, pl) for nm, pl in zip(pre, pls)]
            ops.append(Measure(anc, "X", 0))
            for v in (0, 1):
                names = budget.branches[v]
                if names:
                    for nm, pl in zip(names, _decode(int(firsts[v][ti]), names, nd)):
                        ops.append(Conditioned(0, v, Gate(nm, pl)))
            return Circuit(n, tuple(ops))
    return None


def budget_for(kind: str):
    """Search budget that reproduces a shipped circuit."""
    if kind in UNITARY_BUDGETS:
        return UNITARY_BUDGETS[kind]
    if kind in MEASUREMENT_BUDGETS:
        return MEASUREMENT_BUDGETS[kind]
    raise ValueError(f"no search budget for {kind!r}")


def derive_circuit(kind: str):
    """Re-run the search that produced a frozen circuit."""
    src, tgt = CONVERSIONS[kind]
    budget = budget_for(kind)
    measured = isinstance(budget, MeasurementBudget)
    return search_circuit(budget, named_state(src), named_state(tgt), allow_ancilla_measurement=measured)
