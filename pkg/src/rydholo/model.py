"""Hamiltonians of the two-atom anti-blockade gate, the three-atom chain and
the single-atom recovery drive.

Two-atom conventions
--------------------
Each atom has levels ``|0>, |1>, |r>`` (indices 0, 1, 2) and the two-atom
basis index of ``|ab>`` is ``3*a + b``.  Atom 1 (subsystem 0) is driven on
``|1> <-> |r>`` by ``Omega11`` at detuning ``Delta1``; atom 2 (subsystem 1)
is driven on ``|0> <-> |r>`` by ``Omega21`` and on ``|1> <-> |r>`` by
``Omega22``, both at detuning ``Delta2``.

The rotating-frame Hamiltonian is implemented term by term::

    H' = [ O11 e^{-i D1 t} (|10><r0| + |11><r1|) + O11 e^{i(D2-2D1)t} |1r><rr|
         + O21 e^{-i D2 t} (|0r><00| + |1r><10|) + O21 e^{-i D1 t} |rr><r0|
         + O22 e^{-i D2 t} (|0r><01| + |1r><11|) + O22 e^{-i D1 t} |rr><r1|
         + h.c. ] + (V + D1 - D2) |rr><rr|

and the interaction frame is its exact inverse transform
``H = U H' U^dag + (D2 - D1)|rr><rr|`` with
``U = exp[-i (D2 - D1) t |rr><rr|]``, so the two frames describe the same
dynamics by construction.

Second-order elimination of the singly excited states (detunings ``D1``,
``D2`` and ``D2 - 2 D1``) gives the effective couplings::

    <rr|H|10> = -O21 O11* / D1,    <rr|H|11> = -O22 O11* / D1

the ground-manifold light shifts

    |00>: |O21|^2/D2          |01>: |O22|^2/D2
    |10>: |O21|^2/D2 - |O11|^2/D1
    |11>: |O22|^2/D2 - |O11|^2/D1
    <01|H|00> = <11|H|10> = O22* O21 / D2

and the ``|rr>`` detuning

    delta = V + D1 - D2 - (|O21|^2 + |O22|^2)/D1 - |O11|^2/(D2 - 2 D1).

Light-shift handling
--------------------
``SystemConfig.stark_terms`` says whether the ground-manifold light shifts act
on the qubits.  When it is false they are assumed cancelled by auxiliary
compensation, which the full model represents by explicit counter-terms.
``SystemConfig.track_detuning`` pins the ``|rr>`` detuning to its peak-drive
value by adding the drift ``delta(t) - delta_peak`` back onto ``|rr><rr|``,
which is equivalent to chirping the detuning during the pulse.  Counter-terms
are computed from a *reference* drive, normally the drive itself; robustness
sweeps pass the nominal drive so that compensation does not follow the
laser error.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .qcore import OperatorMatrix, Register, embed_operator

TWO_PI = 2.0 * np.pi
TWO_ATOMS = Register((3, 3))

# basis indices for the two-atom register
I00, I01, I0R, I10, I11, I1R, IR0, IR1, IRR = range(9)
COMPUTATIONAL = (I00, I01, I10, I11)

DriveTriple = Callable[[float], tuple[complex, complex, complex]]
EffDrives = Callable[[float], tuple[complex, complex]]


def mhz(value: float, x2pi: bool = True) -> float:
    """Convert a frequency in MHz to angular frequency in rad/s."""
    return value * 1e6 * (TWO_PI if x2pi else 1.0)


class ConfigurationError(ValueError):
    """Invalid physical or chain configuration."""


@dataclass(frozen=True)
class SystemConfig:
    """Physical parameters of the two-atom model.

    Parameters
    ----------
    omega11_peak, omega21_peak, omega22_peak : float
        Peak Rabi frequencies in rad/s.
    delta1, delta2 : float
        Detunings in rad/s, with ``delta2 > 2 * delta1 > 0``.
    V : float or None
        Rydberg interaction in rad/s.  ``None`` selects
        :func:`solve_antiblockade_V`.
    gamma_decay : float
        Rydberg decay rate in 1/s.
    stark_terms : bool
        True if ground-manifold light shifts act during the gate; false if
        they are cancelled by auxiliary compensation.
    track_detuning : bool
        Pin the ``|rr>`` detuning to its peak-drive value during the pulse.
    """

    omega11_peak: float
    omega21_peak: float
    omega22_peak: float
    delta1: float
    delta2: float
    V: float | None = None
    gamma_decay: float = 0.0
    stark_terms: bool = False
    track_detuning: bool = True

    def __post_init__(self):
        if not (self.delta1 > 0 and self.delta2 > 0):
            raise ConfigurationError("detunings must be positive")
        if not self.delta2 > 2 * self.delta1:
            raise ConfigurationError("delta2 must exceed 2*delta1")
        if min(self.omega11_peak, self.omega21_peak, self.omega22_peak) <= 0:
            raise ConfigurationError("peak Rabi frequencies must be positive")
        if self.gamma_decay < 0:
            raise ConfigurationError("gamma_decay must be non-negative")

    @property
    def V_resolved(self) -> float:
        return solve_antiblockade_V(self) if self.V is None else float(self.V)

    def with_(self, **changes) -> "SystemConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)


QUOTED_V = mhz(306.0)


def benchmark_config(V: float | None = None, gamma_decay: float = 2.4e3, **overrides) -> SystemConfig:
    """Benchmark parameters: 4.5/14/14 MHz drives, 50/300 MHz detunings.

    ``V=None`` resolves to the anti-blockade solution; pass :data:`QUOTED_V`
    for the quoted 306 MHz interaction.
    """
    cfg = SystemConfig(
        omega11_peak=mhz(4.5),
        omega21_peak=mhz(14.0),
        omega22_peak=mhz(14.0),
        delta1=mhz(50.0),
        delta2=mhz(300.0),
        V=V,
        gamma_decay=gamma_decay,
    )
    return replace(cfg, **overrides) if overrides else cfg


def solve_antiblockade_V(config: SystemConfig) -> float:
    """Interaction strength that makes the ``|rr>`` detuning vanish at peak drive.

    Returns
    -------
    float
        ``V = D2 - D1 + (O21^2 + O22^2)/D1 + O11^2/(D2 - 2 D1)`` in rad/s.
    """
    d1, d2 = config.delta1, config.delta2
    den = d2 - 2 * d1
    if den == 0:
        raise ConfigurationError("delta2 = 2*delta1 makes the anti-blockade condition singular")
    return d2 - d1 + (config.omega21_peak**2 + config.omega22_peak**2) / d1 + config.omega11_peak**2 / den


def detuning_delta(config: SystemConfig, o11: complex, o21: complex, o22: complex, V: float | None = None) -> float:
    """``|rr>`` detuning of the effective model for the given drive amplitudes."""
    V = config.V_resolved if V is None else V
    d1, d2 = config.delta1, config.delta2
    return V + d1 - d2 - (abs(o21) ** 2 + abs(o22) ** 2) / d1 - abs(o11) ** 2 / (d2 - 2 * d1)


def peak_delta(config: SystemConfig) -> float:
    return detuning_delta(config, config.omega11_peak, config.omega21_peak, config.omega22_peak)


def effective_couplings(config: SystemConfig, o11: complex, o21: complex, o22: complex) -> tuple[complex, complex]:
    """Couplings ``(<rr|H|10>, <rr|H|11>)`` produced by the physical drives."""
    d1 = config.delta1
    return -o21 * np.conj(o11) / d1, -o22 * np.conj(o11) / d1


def physical_from_effective(config: SystemConfig, c10, c11):
    """Invert :func:`effective_couplings` at constant ``Omega11 = omega11_peak``.

    Returns
    -------
    tuple
        ``(Omega11, Omega21, Omega22)``; array inputs broadcast.
    """
    o11 = config.omega11_peak
    d1 = config.delta1
    return o11, -d1 * np.asarray(c10) / o11, -d1 * np.asarray(c11) / o11


def ground_light_shift(config: SystemConfig, o11, o21, o22) -> np.ndarray:
    """4x4 light-shift block on ``(|00>, |01>, |10>, |11>)``."""
    d1, d2 = config.delta1, config.delta2
    a21, a22, a11 = abs(o21) ** 2 / d2, abs(o22) ** 2 / d2, abs(o11) ** 2 / d1
    x = np.conj(o22) * o21 / d2
    g = np.zeros((4, 4), dtype=complex)
    g[0, 0], g[1, 1] = a21, a22
    g[2, 2], g[3, 3] = a21 - a11, a22 - a11
    g[1, 0] = g[3, 2] = x
    g[0, 1] = g[2, 3] = np.conj(x)
    return g


def _unit(i: int, j: int) -> np.ndarray:
    m = np.zeros((9, 9), dtype=complex)
    m[i, j] = 1.0
    return m


# operator groups of the rotating-frame Hamiltonian (lower-triangular halves)
_A11 = _unit(I10, IR0) + _unit(I11, IR1)
_B11 = _unit(I1R, IRR)
_A21 = _unit(I0R, I00) + _unit(I1R, I10)
_B21 = _unit(IRR, IR0)
_A22 = _unit(I0R, I01) + _unit(I1R, I11)
_B22 = _unit(IRR, IR1)
_OPS = np.stack([_A11, _B11, _A21, _B21, _A22, _B22])
_CIDX = np.array(COMPUTATIONAL)
_OPS_FLAT = _OPS.reshape(6, 81)
_CBLOCK = np.ix_(_CIDX, _CIDX)


def _zero_drive(t):
    return 0.0, 0.0, 0.0


class FullModel:
    """Fast evaluator of the full two-atom Hamiltonian.

    Parameters
    ----------
    config : SystemConfig
    drives : callable
        ``t -> (Omega11, Omega21, Omega22)`` in rad/s.
    frame : {"rotating", "interaction"}
    reference : callable, optional
        Drive used to compute compensation counter-terms.  Defaults to
        ``drives``.
    """

    def __init__(self, config: SystemConfig, drives: DriveTriple, frame: str = "rotating", reference: DriveTriple | None = None):
        if frame not in ("rotating", "interaction"):
            raise ValueError(f"unknown frame {frame!r}")
        self.config = config
        self.drives = drives
        self.reference = reference
        self.frame = frame
        self.V = config.V_resolved
        self.delta_peak = peak_delta(config)
        self.register = TWO_ATOMS

    def _compensation(self, t: float, h: np.ndarray, drive) -> None:
        cfg = self.config
        if cfg.stark_terms and not cfg.track_detuning:
            return
        o11, o21, o22 = drive if self.reference is None else self.reference(t)
        if not cfg.stark_terms:
            h[_CBLOCK] -= ground_light_shift(cfg, o11, o21, o22)
        if cfg.track_detuning:
            h[IRR, IRR] += self.delta_peak - detuning_delta(cfg, o11, o21, o22, self.V)

    def matrix(self, t: float) -> np.ndarray:
        cfg = self.config
        d1, d2 = cfg.delta1, cfg.delta2
        o11, o21, o22 = self.drives(t)
        e1 = np.exp(-1j * d1 * t)
        e2 = np.exp(-1j * d2 * t)
        e3 = np.exp(1j * (d2 - 2 * d1) * t)
        c = np.array([o11 * e1, o11 * e3, o21 * e2, o21 * e1, o22 * e2, o22 * e1])
        m = (c @ _OPS_FLAT).reshape(9, 9)
        h = m + m.conj().T
        h[IRR, IRR] += self.V + d1 - d2
        self._compensation(t, h, (o11, o21, o22))
        if self.frame == "interaction":
            chi = d2 - d1
            u = np.ones(9, dtype=complex)
            u[IRR] = np.exp(-1j * chi * t)
            h = u[:, None] * h * u.conj()[None, :]
            h[IRR, IRR] += chi
        return h

    def __call__(self, t: float) -> np.ndarray:
        return self.matrix(t)


def build_full_hamiltonian(config: SystemConfig, drives: DriveTriple | None, t: float, frame: str = "rotating") -> OperatorMatrix:
    """Full two-atom Hamiltonian at time ``t`` (9x9, rad/s).

    ``drives=None`` switches all lasers off.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    model = FullModel(config, drives or _zero_drive, frame)
    return OperatorMatrix.hamiltonian(TWO_ATOMS, model.matrix(t))


class EffectiveModel:
    """Fast evaluator of the effective three-state Hamiltonian.

    Parameters
    ----------
    config : SystemConfig
    eff_drives : callable
        ``t -> (Omega1, Omega2)``, the couplings of ``|rr>`` to ``|10>`` and
        ``|11>`` respectively.
    reference : callable, optional
        Effective drive used for compensation counter-terms, as in
        :class:`FullModel`.
    """

    def __init__(self, config: SystemConfig, eff_drives: EffDrives, reference: EffDrives | None = None):
        self.config = config
        self.eff_drives = eff_drives
        self.reference = reference
        self.V = config.V_resolved
        self.delta_peak = peak_delta(config)
        self.register = TWO_ATOMS
        self._warned = False

    def _physical(self, c10, c11):
        return physical_from_effective(self.config, c10, c11)

    def matrix(self, t: float) -> np.ndarray:
        cfg = self.config
        c10, c11 = self.eff_drives(t)
        h = np.zeros((9, 9), dtype=complex)
        h[IRR, I10] = c10
        h[IRR, I11] = c11
        h[I10, IRR] = np.conj(c10)
        h[I11, IRR] = np.conj(c11)
        o11, o21, o22 = self._physical(c10, c11)
        if not self._warned:
            ratio = max(abs(o21), abs(o22), abs(o11)) / min(cfg.delta1, cfg.delta2)
            if ratio > 0.3:
                warnings.warn(f"drive/detuning ratio {ratio:.2f} exceeds 0.3; effective model unreliable")
                self._warned = True
        delta = detuning_delta(cfg, o11, o21, o22, self.V)
        ground = ground_light_shift(cfg, o11, o21, o22)
        if not (cfg.stark_terms and not cfg.track_detuning):
            r11, r21, r22 = self._physical(*(self.reference or self.eff_drives)(t))
            if not cfg.stark_terms:
                ground = ground - ground_light_shift(cfg, r11, r21, r22)
            if cfg.track_detuning:
                delta -= detuning_delta(cfg, r11, r21, r22, self.V) - self.delta_peak
        h[_CBLOCK] += ground
        h[IRR, IRR] += delta
        return h

    def __call__(self, t: float) -> np.ndarray:
        return self.matrix(t)


class IdealModel:
    """Three-state Hamiltonian ``Omega1 |rr><10| + Omega2 |rr><11| + h.c.`` with ``delta = 0``.

    No light shifts and no physical mapping: the design model of the drive.
    """

    def __init__(self, eff_drives: EffDrives):
        self.eff_drives = eff_drives
        self.register = TWO_ATOMS

    def matrix(self, t: float) -> np.ndarray:
        c10, c11 = self.eff_drives(t)
        h = np.zeros((9, 9), dtype=complex)
        h[IRR, I10] = c10
        h[IRR, I11] = c11
        h[I10, IRR] = np.conj(c10)
        h[I11, IRR] = np.conj(c11)
        return h

    def __call__(self, t: float) -> np.ndarray:
        return self.matrix(t)


def build_effective_hamiltonian(config: SystemConfig, eff_drives: EffDrives, t: float) -> OperatorMatrix:
    """Effective Hamiltonian at time ``t`` on the two-atom register (9x9).

    The drive pair ``(Omega1, Omega2)`` couples ``|rr>`` to ``|10>`` and
    ``|11>``.  Light shifts and the ``|rr>`` detuning follow the
    ``stark_terms``/``track_detuning`` switches of ``config`` (see module
    docstring).
    """
    return OperatorMatrix.hamiltonian(TWO_ATOMS, EffectiveModel(config, eff_drives).matrix(t))


# ---------------------------------------------------------------------------
# three-atom chain

LADDER = ("rgg", "rrg", "grg", "grr", "ggr")


def chain_couplings(omega: float, n_states: int = 5, scale: float = 0.5) -> tuple[float, ...]:
    """Perfect-transfer couplings ``J_i = scale * sqrt(i (n - i)) * omega``.

    With the default ``scale = 1/2`` the first perfect transfer across the
    ladder happens at ``t = pi / omega``.
    """
    if omega <= 0:
        raise ConfigurationError("omega must be positive")
    return tuple(scale * np.sqrt(i * (n_states - i)) * omega for i in range(1, n_states))


@dataclass(frozen=True)
class ChainConfig:
    """Chain of two-level ``g/r`` atoms for the Bell-pair relay.

    Atom numbers in ``bell_pair`` and ``window_sequence`` start at 1.

    Parameters
    ----------
    n_atoms : int
    bell_pair : (int, int)
    window_sequence : sequence of 3-tuples
        Consecutive atom triples driven in successive hops.
    omega_base : float
        Coupling scale in rad/s.
    couplings : tuple of 4 floats, optional
        Ladder couplings; defaults to :func:`chain_couplings`.
    v1, v2 : float
        Nearest and next-nearest interactions (rad/s), used only by the
        lab-frame validity model.
    """

    n_atoms: int = 6
    bell_pair: tuple[int, int] = (1, 2)
    window_sequence: tuple[tuple[int, int, int], ...] = ((2, 3, 4), (4, 5, 6))
    omega_base: float = mhz(1.0)
    couplings: tuple[float, ...] | None = None
    v1: float = mhz(100.0)
    v2: float = mhz(30.0)

    def __post_init__(self):
        wins = tuple(tuple(int(a) for a in w) for w in self.window_sequence)
        object.__setattr__(self, "window_sequence", wins)
        object.__setattr__(self, "bell_pair", tuple(int(a) for a in self.bell_pair))
        for w in wins:
            _check_window(w, self.n_atoms)
        if self.couplings is None:
            object.__setattr__(self, "couplings", chain_couplings(self.omega_base))
        else:
            object.__setattr__(self, "couplings", tuple(float(j) for j in self.couplings))
        if len(self.couplings) != 4 or min(self.couplings) <= 0:
            raise ConfigurationError("couplings must be four positive values")

    @property
    def register(self) -> Register:
        return Register.atoms(self.n_atoms, 2)


def _check_window(window: Sequence[int], n_atoms: int) -> None:
    a = list(window)
    if len(a) != 3 or a != list(range(a[0], a[0] + 3)) or a[0] < 1 or a[2] > n_atoms:
        raise ConfigurationError(f"window {tuple(window)} is not a consecutive triple inside 1..{n_atoms}")


def ladder_operator(couplings: Sequence[float]) -> np.ndarray:
    """8x8 hopping operator of the ladder on one three-atom window."""
    reg = Register.atoms(3, 2)
    h = np.zeros((8, 8), dtype=complex)
    for k, j in enumerate(couplings):
        a, b = reg.index(LADDER[k]), reg.index(LADDER[k + 1])
        h[a, b] += j
        h[b, a] += np.conj(j)
    return h


def build_chain_hamiltonian(chain: ChainConfig, window) -> OperatorMatrix:
    """Ladder Hamiltonian of one window (or several disjoint windows).

    Parameters
    ----------
    chain : ChainConfig
    window : 3-tuple or sequence of 3-tuples
        Atom numbers (from 1) of the driven window(s).

    Raises
    ------
    ConfigurationError
        If a window is not a consecutive triple inside the chain or two
        simultaneous windows overlap.
    """
    windows = [tuple(window)] if np.isscalar(window[0]) else [tuple(w) for w in window]
    used: set[int] = set()
    for w in windows:
        _check_window(w, chain.n_atoms)
        if used & set(w):
            raise ConfigurationError(f"overlapping simultaneous windows {windows}")
        used |= set(w)
    dims = chain.register.dims
    local = ladder_operator(chain.couplings)
    h = sum(embed_operator(local, dims, [a - 1 for a in w]) for w in windows)
    return OperatorMatrix.hamiltonian(chain.register, h)


def excitation_number(register: Register) -> np.ndarray:
    """Diagonal operator counting Rydberg excitations."""
    counts = np.zeros(register.total)
    for idx in range(register.total):
        digits = np.unravel_index(idx, register.dims)
        counts[idx] = sum(int(v == d - 1) for v, d in zip(digits, register.dims))
    return np.diag(counts).astype(complex)


def ladder_projector(chain: ChainConfig, window: Sequence[int]) -> np.ndarray:
    """Projector onto the five ladder configurations of ``window``."""
    p = np.zeros((8, 8), dtype=complex)
    reg = Register.atoms(3, 2)
    for lab in LADDER:
        i = reg.index(lab)
        p[i, i] = 1.0
    return embed_operator(p, chain.register.dims, [a - 1 for a in window])


def chain_lab_hamiltonian(omegas: Sequence[float], delta: float, v1: float, v2: float, t: float) -> np.ndarray:
    """Lab-frame three-atom Hamiltonian with laser detuning ``delta``.

    ``H = sum_j O_j e^{i delta t} |g>_j<r| + h.c. + H_dd`` with
    ``H_dd = V1(|rrg><rrg| + |grr><grr|) + V2 |rgr><rgr| + (2V1 + V2)|rrr><rrr|``.
    """
    reg = Register.atoms(3, 2)
    lower = np.array([[0, 1], [0, 0]], dtype=complex)  # |g><r|
    h = np.zeros((8, 8), dtype=complex)
    phase = np.exp(1j * delta * t)
    for j, om in enumerate(omegas):
        op = embed_operator(lower, reg.dims, [j]) * om * phase
        h += op + op.conj().T
    for lab, e in (("rrg", v1), ("grr", v1), ("rgr", v2), ("rrr", 2 * v1 + v2)):
        i = reg.index(lab)
        h[i, i] += e
    return h


def lab_omegas_for_ladder(couplings: Sequence[float]) -> tuple[float, float, float]:
    """Per-atom Rabi frequencies that realize the ladder couplings.

    The ladder flips atom 2 on its outer links and atoms 1 and 3 on the
    inner links, so ``(O1, O2, O3) = (J2, J1, J3)``.
    """
    j1, j2, j3, j4 = couplings
    if not np.isclose(j1, j4):
        raise ConfigurationError("outer couplings must be equal to be realized by one laser")
    return j2, j1, j3


# ---------------------------------------------------------------------------
# recovery drive

ONE_ATOM = Register((3,))


def build_recovery_hamiltonian(omega_1r: float) -> OperatorMatrix:
    """Single-atom drive ``Omega_1r |r><0| + h.c.`` on levels ``(0, 1, r)``."""
    if omega_1r <= 0:
        raise ValueError("omega_1r must be positive")
    h = np.zeros((3, 3), dtype=complex)
    h[2, 0] = omega_1r
    h[0, 2] = np.conj(omega_1r)
    return OperatorMatrix.hamiltonian(ONE_ATOM, h)
