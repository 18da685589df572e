"""Bell-pair relay along a chain and the teleported controlled-U gate.

Teleportation layout
--------------------
Four three-level atoms, numbered 1 to 4 in the protocol text and stored as
subsystems 0 to 3.  Atom 1 holds the control ``a|0> + b|1>``, atom 4 the
target ``d|0> + g|1>``, and atoms 2 and 3 share the Bell channel
``(|r1> + |1r>)/sqrt(2)`` on levels ``{|1>, |r>}``.

Steps:

1. CNOT with atom 2 as control and atom 1 as target.  The control reads
   ``|1>`` as "on" and ``|r>`` as "off", which maps
   ``Phi+- -> |1>_1 (|1> +- |r>)_2`` and ``Psi+- -> |0>_1 (|r> +- |1>)_2``.
2. A pi/2 pulse on atom 2 with ``(|1>+|r>)/sqrt(2) -> |r>`` and
   ``(|1>-|r>)/sqrt(2) -> |1>``; the Bell states become
   ``|1r>, |11>, |0r>, |01>``.
3. Projective measurement of atoms 1 and 2.
4. The pi-area pulse of :func:`~rydholo.model.build_recovery_hamiltonian`
   on atom 3 maps ``|r> -> -i|0>``.  The relative ``-i`` is removed by the
   phase gate ``diag(i, 1)`` on atom 3's qubit levels.
5. Recovery ``U_M`` from the outcome (``I, Z, X, XZ``; ``XZ`` applies ``Z``
   first).
6. Local controlled-U with atom 3 as control and atom 4 as target.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import expm
from scipy.optimize import minimize_scalar

from .dynamics import Trajectory
from .model import COMPUTATIONAL, ChainConfig, ConfigurationError, LADDER, build_chain_hamiltonian, build_recovery_hamiltonian, chain_couplings, excitation_number, ladder_operator
from .pulses import controlled, params_from_unitary, PAULI_X, PAULI_Z
from .qcore import DensityMatrix, OperatorMatrix, QuantumState, Register, apply_local, apply_local_channel, embed_operator, measure_projective, partial_trace

# ---------------------------------------------------------------------------
# Bell-pair relay


def _ladder_transfer(t: float, couplings: Sequence[float]) -> float:
    reg = Register.atoms(3, 2)
    h = ladder_operator(couplings)
    a, b = reg.index(LADDER[0]), reg.index(LADDER[-1])
    return float(abs(expm(-1j * h * t)[b, a]) ** 2)


def transfer_time(omega: float, couplings: Sequence[float] | None = None, scan_points: int = 4001) -> float:
    """Hop duration maximizing ``|<ggr|exp(-iHt)|rgg>|^2`` across one ladder.

    The first maximum above ``1 - 1e-6`` on a dense scan of
    ``(0, 4 pi/omega]`` is refined by a bounded scalar search.
    """
    if omega <= 0:
        raise ValueError("omega must be positive")
    js = chain_couplings(omega) if couplings is None else tuple(couplings)
    ts = np.linspace(0, 4 * np.pi / omega, scan_points)[1:]
    # the 5-level ladder: diagonalize once and scan cheaply
    h = ladder_operator(js)
    w, v = np.linalg.eigh(h)
    reg = Register.atoms(3, 2)
    a, b = reg.index(LADDER[0]), reg.index(LADDER[-1])
    amp = (v[b, :] * v[a, :].conj()) @ np.exp(-1j * np.outer(w, ts))
    fid = np.abs(amp) ** 2
    good = np.nonzero(fid > 0.99)[0]
    if not good.size:
        k = int(np.argmax(fid))
    else:
        # first peak of the first good lobe
        k = good[0]
        while k + 1 < fid.size and fid[k + 1] >= fid[k]:
            k += 1
    step = ts[1] - ts[0]
    lo, hi = ts[k] - step, ts[k] + step
    res = minimize_scalar(lambda t: -_ladder_transfer(t, js), bounds=(lo, hi), method="bounded", options={"xatol": 1e-14 / omega})
    return float(res.x)


@dataclass(frozen=True)
class TransferPlan:
    """Sequence of driven windows with their hop durations (s)."""

    chain: ChainConfig
    hops: tuple[tuple[tuple[int, int, int], float], ...]

    def __post_init__(self):
        prev = None
        for w, d in self.hops:
            if not d > 0:
                raise ConfigurationError("hop durations must be positive")
            if prev is not None and w[0] != prev[0] + 2:
                raise ConfigurationError("consecutive windows must advance by two sites")
            prev = w

    @classmethod
    def from_chain(cls, chain: ChainConfig) -> "TransferPlan":
        t = transfer_time(chain.omega_base, chain.couplings)
        return cls(chain, tuple((tuple(w), t) for w in chain.window_sequence))


def bell_pair_state(chain: ChainConfig, pair: Sequence[int], sign: int = 1) -> QuantumState:
    """``(|g r> + sign |r g>)/sqrt(2)`` on atoms ``pair`` (from 1), rest ground."""
    n = chain.n_atoms
    a, b = pair
    lab1 = ["g"] * n
    lab2 = ["g"] * n
    lab1[b - 1] = "r"
    lab2[a - 1] = "r"
    return QuantumState.from_labels(chain.register, {"".join(lab1): 1.0, "".join(lab2): float(sign)})


def run_transfer(initial: QuantumState, plan: TransferPlan) -> Trajectory:
    """Apply each hop propagator in turn.

    The trajectory holds the initial state and the state after each hop, and
    records the total excitation number as ``N_r``.

    Raises
    ------
    ConfigurationError
        If a window lies outside the chain.
    ValueError
        If the initial state's register does not match the chain.
    """
    reg = plan.chain.register
    if initial.register != reg:
        raise ValueError("initial state register does not match the chain")
    states = [initial.vector]
    times = [0.0]
    for w, d in plan.hops:
        h = build_chain_hamiltonian(plan.chain, w).matrix
        U = expm(-1j * h * d)
        states.append(U @ states[-1])
        times.append(times[-1] + d)
    traj = Trajectory(reg, np.array(times), np.array(states))
    nr = np.real(np.diag(excitation_number(reg)))
    traj.record("N_r", np.abs(traj.states) ** 2 @ nr)
    return traj


# ---------------------------------------------------------------------------
# teleportation

FOUR_ATOMS = Register.atoms(4, 3)
OUTCOMES = ("1r", "11", "0r", "01")
RECOVERY_TAGS = {"1r": "I", "11": "Z", "0r": "X", "01": "XZ"}

_RECOVERY = {
    "I": np.eye(2, dtype=complex),
    "Z": PAULI_Z,
    "X": PAULI_X,
    "XZ": PAULI_X @ PAULI_Z,
}

# (|1>+|r>)/sqrt2 -> |r>, (|1>-|r>)/sqrt2 -> |1>, |0> fixed
HALF_PI_PULSE = np.array(
    [
        [1, 0, 0],
        [0, 1 / np.sqrt(2), -1 / np.sqrt(2)],
        [0, 1 / np.sqrt(2), 1 / np.sqrt(2)],
    ],
    dtype=complex,
)
# ideal relabel |0> <-> |r> used to present {1, r} as the computational pair
RELABEL_0R = np.array([[0, 0, 1], [0, 1, 0], [1, 0, 0]], dtype=complex)
PHASE_FIX = np.diag([1j, 1.0, 1.0]).astype(complex)


@dataclass(frozen=True)
class MeasurementRecord:
    """Joint measurement of atoms 1 and 2 with its recovery tag."""

    outcome: str
    probability: float
    recovery: str

    def __post_init__(self):
        if self.outcome not in OUTCOMES:
            raise ValueError(f"unknown outcome {self.outcome!r}")
        if RECOVERY_TAGS[self.outcome] != self.recovery:
            raise ValueError("recovery tag does not match the outcome")
        if not -1e-12 <= self.probability <= 1 + 1e-12:
            raise ValueError("probability outside [0, 1]")


def recovery_operation(outcome: str) -> OperatorMatrix:
    """Qubit recovery ``U_M`` for an outcome tag (``"1r", "11", "0r", "01"``).

    Raises
    ------
    ValueError
        For an unknown tag.
    """
    tag = outcome.outcome if isinstance(outcome, MeasurementRecord) else outcome
    if tag not in RECOVERY_TAGS:
        raise ValueError(f"unknown outcome {tag!r}")
    return OperatorMatrix(Register((2,)), _RECOVERY[RECOVERY_TAGS[tag]])


def recovery_pulse(omega_1r: float = 2 * np.pi * 1e6) -> np.ndarray:
    """Propagator of the pi-area recovery drive on one atom (3x3)."""
    h = build_recovery_hamiltonian(omega_1r).matrix
    return expm(-1j * h * np.pi / (2 * omega_1r))


def _qubit_on_3level(u2: np.ndarray) -> np.ndarray:
    m = np.eye(3, dtype=complex)
    m[:2, :2] = u2
    return m


def _cnot_2_to_1_ideal() -> np.ndarray:
    """9x9 CNOT on (atom 1, atom 2): flip atom 1's qubit when atom 2 is ``|1>``."""
    U = np.eye(9, dtype=complex)
    U[[1, 4]] = U[[4, 1]]  # |0 1> <-> |1 1>
    return U


def _cu_3level(u: np.ndarray) -> np.ndarray:
    U = np.eye(9, dtype=complex)
    c = list(COMPUTATIONAL)
    U[np.ix_(c, c)] = controlled(u)
    return U


def _gate_superop(channel_4: np.ndarray) -> np.ndarray:
    """Embed a ``(9, 9, 4, 4)`` channel on computational inputs into ``(9, 9, 9, 9)``."""
    S = np.zeros((9, 9, 9, 9), dtype=complex)
    c = list(COMPUTATIONAL)
    S[np.ix_(range(9), range(9), c, c)] = channel_4
    return S


def _unitary_superop(U: np.ndarray) -> np.ndarray:
    return np.einsum("ai,bj->abij", U, U.conj())


@dataclass
class TeleportResult:
    """Output of :func:`teleport_cu`.

    Attributes
    ----------
    output : QuantumState or DensityMatrix
        Two-qubit state of atoms 3 (control) and 4 (target).
    record : MeasurementRecord
    fidelity : float
        Fidelity with the direct controlled-U output.
    steps : list of dict
        Transcript of the protocol steps.
    """

    output: object
    record: MeasurementRecord
    fidelity: float
    steps: list = field(default_factory=list)

    def transcript(self) -> dict:
        return {
            "steps": self.steps,
            "outcome": self.record.outcome,
            "probability": self.record.probability,
            "recovery": self.record.recovery,
            "fidelity": self.fidelity,
        }

    def to_json(self, path, extra: dict | None = None) -> None:
        data = self.transcript()
        if extra:
            data.update(extra)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(data, fh, indent=2, sort_keys=True)
            fh.write("\n")


def initial_teleport_state(control, target) -> np.ndarray:
    """Four-atom input vector (81,)."""
    a, b = np.asarray(control, dtype=complex)
    d, g = np.asarray(target, dtype=complex)
    one = lambda x, y: np.array([x, y, 0], dtype=complex)
    bell = np.zeros(9, dtype=complex)
    bell[3 * 2 + 1] = bell[3 * 1 + 2] = 1 / np.sqrt(2)
    psi = np.kron(np.kron(one(a, b), bell), one(d, g))
    n = np.linalg.norm(psi)
    if abs(n - 1) > 1e-8:
        raise ValueError("control and target states must be normalized")
    return psi


def direct_cu_output(control, target, u) -> np.ndarray:
    """Oracle: ``CU (control (x) target)`` as a 4-vector."""
    return controlled(np.asarray(u, dtype=complex)) @ np.kron(np.asarray(control, dtype=complex), np.asarray(target, dtype=complex))


def teleport_cu(
    control,
    target,
    u,
    mode: str = "ideal",
    rng_seed: int | None = None,
    forced_outcome: str | None = None,
    rng: np.random.Generator | None = None,
    cnot_channel: np.ndarray | None = None,
    cu_channel: np.ndarray | None = None,
) -> TeleportResult:
    """Teleported controlled-U from atom 1 onto atom 4 through the Bell pair (2, 3).

    Parameters
    ----------
    control, target : array_like
        Normalized qubit amplitudes.
    u : (2, 2) array_like
        Target unitary.
    mode : {"ideal", "physical"}
        In physical mode the CNOT and the final CU are the simulated gate
        channels ``cnot_channel`` and ``cu_channel`` (``(9, 9, 4, 4)`` maps
        from :func:`rydholo.metrics.gate_channel`); single-atom pulses and
        the measurement stay ideal.  Population the noisy CNOT leaves
        outside the four outcomes is reported as ``leaked_probability`` and
        the outcome is drawn among the valid ones (post-selection).
    rng_seed, rng : optional
        Randomness for the unforced measurement.
    forced_outcome : str, optional
        One of ``"1r", "11", "0r", "01"``.

    Raises
    ------
    rydholo.qcore.ZeroProbabilityBranchError
        If a forced outcome has zero probability.
    """
    if mode not in ("ideal", "physical"):
        raise ValueError(f"unknown mode {mode!r}")
    if forced_outcome is not None and forced_outcome not in OUTCOMES:
        raise ValueError(f"unknown outcome {forced_outcome!r}")
    u = np.asarray(u, dtype=complex)
    dims = FOUR_ATOMS.dims
    psi = initial_teleport_state(control, target)
    steps = [{"step": "prepare", "atoms": [1, 2, 3, 4], "detail": "control (x) (|r1>+|1r>)/sqrt2 (x) target"}]
    cnot_ideal = _cnot_2_to_1_ideal()
    if mode == "ideal":
        state = psi
        state = apply_local(state, cnot_ideal, dims, [0, 1])
    else:
        if cnot_channel is None or cu_channel is None:
            raise ValueError("physical mode needs simulated cnot_channel and cu_channel")
        state = np.outer(psi, psi.conj())
        # present atom 2's {|1>, |r>} as computational {|1>, |0>} and apply the gate with atom 2 as control
        relabel = embed_operator(RELABEL_0R, dims, [1])
        state = relabel @ state @ relabel.conj().T
        state = apply_local_channel(state, _gate_superop(cnot_channel), dims, [1, 0])
        state = relabel @ state @ relabel.conj().T
    steps.append({"step": "cnot", "atoms": [2, 1], "detail": "control atom 2 (|1> on, |r> off), target atom 1"})

    pulse = embed_operator(HALF_PI_PULSE, dims, [1])
    state = pulse @ state if mode == "ideal" else pulse @ state @ pulse.conj().T
    steps.append({"step": "half_pi_pulse", "atoms": [2], "detail": "(|1>+|r>)/sqrt2 -> |r>, (|1>-|r>)/sqrt2 -> |1>"})

    labels = {"01": (0, 1), "0r": (0, 2), "11": (1, 1), "1r": (1, 2)}
    basis_order = [o for o in ("01", "0r", "11", "1r")]
    proj_basis = []
    for o in basis_order:
        v = np.zeros(9, dtype=complex)
        a, b = labels[o]
        v[3 * a + b] = 1.0
        proj_basis.append(v)
    # complete the measurement basis on atoms (1, 2) with the remaining product states
    rest = [k for k in range(9) if k not in [3 * a + b for a, b in labels.values()]]
    for k in rest:
        v = np.zeros(9, dtype=complex)
        v[k] = 1.0
        proj_basis.append(v)
    forced_idx = None if forced_outcome is None else basis_order.index(forced_outcome)
    if rng is None and rng_seed is not None:
        rng = np.random.default_rng(rng_seed)
    reg_state = QuantumState(FOUR_ATOMS, state) if mode == "ideal" else DensityMatrix(FOUR_ATOMS, state, check=False)
    leak = None
    if mode == "physical":
        # imperfect gates leave population outside the four outcomes; such
        # runs are heralded failures, so sample among the valid outcomes only
        r = state.reshape(3, 3, 3, 3, 3, 3, 3, 3)
        probs = np.array([np.real(np.einsum("cdcd->", r[labels[o][0], labels[o][1], :, :, labels[o][0], labels[o][1]])) for o in basis_order])
        leak = float(1 - probs.sum())
        if forced_idx is None:
            rng = rng if rng is not None else np.random.default_rng()
            forced_idx = int(rng.choice(4, p=probs / probs.sum()))
    meas = measure_projective(reg_state, [0, 1], basis=proj_basis, forced_outcome=forced_idx, rng=rng)
    if meas.outcome >= 4:
        raise RuntimeError("measurement produced a state outside the Bell-measurement outcomes")
    tag = basis_order[meas.outcome]
    record = MeasurementRecord(tag, float(meas.probability), RECOVERY_TAGS[tag])
    post = meas.post_state
    state = post.vector if mode == "ideal" else post.matrix
    steps.append({"step": "measure", "atoms": [1, 2], "outcome": tag, "probability": record.probability})
    if leak is not None:
        steps[-1]["leaked_probability"] = leak

    rec = embed_operator(_qubit_on_3level(_RECOVERY[record.recovery]) @ PHASE_FIX @ recovery_pulse(), dims, [2])
    state = rec @ state if mode == "ideal" else rec @ state @ rec.conj().T
    steps.append({"step": "recovery_pulse", "atoms": [3], "detail": "pi pulse |r> -> -i|0>, phase diag(i, 1)"})
    steps.append({"step": "recovery", "atoms": [3], "operator": record.recovery})

    if mode == "ideal":
        state = apply_local(state, _cu_3level(u), dims, [2, 3])
    else:
        state = apply_local_channel(state, _gate_superop(cu_channel), dims, [2, 3])
    steps.append({"step": "local_cu", "atoms": [3, 4]})

    ideal = direct_cu_output(control, target, u)
    a, b = labels[tag]
    q = [0, 1]
    if mode == "ideal":
        block = state.reshape(3, 3, 3, 3)[a, b][np.ix_(q, q)].reshape(4)
        leak = 1 - np.linalg.norm(block) ** 2
        if leak > 1e-9:
            raise RuntimeError(f"teleported state leaked out of the qubit space ({leak:.2e})")
        out = QuantumState(Register((2, 2)), block / np.linalg.norm(block))
        fid = float(abs(np.vdot(ideal, out.vector)) ** 2)
    else:
        rho34 = partial_trace(DensityMatrix(FOUR_ATOMS, state, check=False), [2, 3]).matrix
        cidx = [0, 1, 3, 4]
        rq = rho34[np.ix_(cidx, cidx)]
        out = DensityMatrix(Register((2, 2)), rq, check=False)
        fid = float(np.real(np.vdot(ideal, rq @ ideal)))
    steps.append({"step": "verify", "fidelity": fid})
    return TeleportResult(out, record, fid, steps)


def physical_channels(config, u, T: float = 5.5e-6, model: str = "full"):
    """Simulated CNOT and CU channels for physical-mode teleportation."""
    from .metrics import gate_channel
    from .pulses import gate_preset

    cnot = gate_channel(config, gate_preset("CNOT", T), model=model).superop
    cu = gate_channel(config, params_from_unitary(u, T), model=model).superop
    return cnot, cu


def lab_frame_validity(chain: ChainConfig, samples: int = 101, rtol: float = 1e-10) -> dict:
    """Compare the lab-frame three-atom model with the effective ladder over one hop.

    The lab model drives each atom at detuning ``Delta = v1`` with the Rabi
    frequencies of :func:`~rydholo.model.lab_omegas_for_ladder`.  Returns
    the RMS difference of the five ladder populations and both final
    transfer fidelities.
    """
    from .dynamics import evolve_schrodinger
    from .model import chain_lab_hamiltonian, lab_omegas_for_ladder

    reg = Register.atoms(3, 2)
    t_hop = transfer_time(chain.omega_base, chain.couplings)
    omegas = lab_omegas_for_ladder(chain.couplings)
    psi0 = np.zeros(8, dtype=complex)
    psi0[reg.index("rgg")] = 1.0
    H_lab = lambda t: chain_lab_hamiltonian(omegas, chain.v1, chain.v1, chain.v2, t)
    lab = evolve_schrodinger(H_lab, psi0, (0.0, t_hop), samples, rtol=rtol, atol=rtol * 1e-2, register=reg)
    eff = evolve_schrodinger(ladder_operator(chain.couplings), psi0, (0.0, t_hop), samples, rtol=rtol, atol=rtol * 1e-2, register=reg)
    idx = [reg.index(lab_) for lab_ in LADDER]
    p_lab = np.abs(lab.states[:, idx]) ** 2
    p_eff = np.abs(eff.states[:, idx]) ** 2
    rms = float(np.sqrt(np.mean((p_lab - p_eff) ** 2)))
    return {
        "rms": rms,
        "hop_time_s": t_hop,
        "lab_transfer": float(p_lab[-1, -1]),
        "ladder_transfer": float(p_eff[-1, -1]),
    }
