"""Closed and open time evolution with recorded trajectories."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import sparse
from scipy.integrate import solve_ivp

from .model import COMPUTATIONAL
from .qcore import DensityMatrix, OperatorMatrix, QuantumState, Register, embed_operator


class StiffnessError(RuntimeError):
    """The integrator could not make progress."""

    def __init__(self, message: str, t: float):
        super().__init__(f"{message} (t = {t:.6e} s)")
        self.t = t


class PhysicsInvariantError(RuntimeError):
    """A norm, trace or positivity check failed beyond tolerance."""


Hamiltonian = Callable[[float], np.ndarray]


def _as_callable(H, dim: int | None = None) -> Hamiltonian:
    if isinstance(H, OperatorMatrix):
        m = H.matrix
        return lambda t: m
    if isinstance(H, np.ndarray):
        return lambda t: H
    if callable(H):
        def f(t):
            out = H(t)
            return out.matrix if isinstance(out, OperatorMatrix) else np.asarray(out)
        return f
    raise TypeError("H must be an OperatorMatrix, an array or a callable of t")


@dataclass
class Trajectory:
    """Sampled evolution.

    Attributes
    ----------
    register : Register
    times : ndarray
        Increasing sample times (s).
    states : ndarray
        ``(n, D)`` state vectors or ``(n, D, D)`` density matrices.
    observables : dict
        Named real series, in registration order.
    """

    register: Register
    times: np.ndarray
    states: np.ndarray
    observables: dict = field(default_factory=dict)

    @property
    def is_open(self) -> bool:
        return self.states.ndim == 3

    def state(self, k: int = -1):
        """Sample ``k`` as a QuantumState or DensityMatrix."""
        s = self.states[k]
        if self.is_open:
            return DensityMatrix(self.register, s, check=False)
        return QuantumState(self.register, s)

    @property
    def final(self):
        return self.state(-1)

    def diagonal(self) -> np.ndarray:
        if self.is_open:
            return np.real(np.einsum("nii->ni", self.states))
        return np.abs(self.states) ** 2

    def record(self, name: str, values) -> None:
        values = np.asarray(values, dtype=float)
        if values.shape != self.times.shape:
            raise ValueError("observable length must match the number of samples")
        self.observables[name] = values

    def to_csv(self, path, header_comment: str | None = None) -> None:
        """Write ``t_s`` followed by the recorded observables."""
        names = list(self.observables)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh)
            w.writerow(["t_s"] + names)
            for k, t in enumerate(self.times):
                w.writerow([repr(float(t))] + [repr(float(self.observables[n][k])) for n in names])


def populations(traj: Trajectory, basis_labels: Sequence[str], record: bool = True) -> dict:
    """Diagonal elements for the given basis labels versus time.

    Raises
    ------
    ValueError
        For a label the register does not know.
    """
    diag = traj.diagonal()
    out = {}
    for label in basis_labels:
        idx = traj.register.index(label)
        series = diag[:, idx]
        out[f"P({label})"] = series
        if record:
            traj.record(f"P({label})", series)
    return out


@dataclass(frozen=True)
class CollapseSet:
    """Collapse operators ``sqrt(gamma/2) |k>_j <r|`` for atoms ``j`` and ``k in {0, 1}``.

    Parameters
    ----------
    register : Register
    gamma : float
        Rydberg decay rate (1/s).
    atoms : tuple of int, optional
        Decaying subsystems (default: all subsystems with a Rydberg level).
    """

    register: Register
    gamma: float
    atoms: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("decay rate must be non-negative")

    def operators(self) -> list[np.ndarray]:
        if self.gamma == 0:
            return []
        dims = self.register.dims
        atoms = range(len(dims)) if self.atoms is None else self.atoms
        amp = np.sqrt(self.gamma / 2)
        ops = []
        for j in atoms:
            d = dims[j]
            if d < 3:
                continue
            for k in (0, 1):
                local = np.zeros((d, d), dtype=complex)
                local[k, d - 1] = amp
                ops.append(embed_operator(local, dims, [j]))
        return ops


def _sample_times(span, sample_count: int, t_eval) -> np.ndarray:
    t0, t1 = float(span[0]), float(span[1])
    if not t1 > t0:
        raise ValueError("span must be increasing")
    if t_eval is not None:
        return np.asarray(t_eval, dtype=float)
    if sample_count < 2:
        raise ValueError("sample_count must be at least 2")
    return np.linspace(t0, t1, sample_count)


def _segments(t0: float, t1: float, breakpoints, excise):
    """Integration segments between breakpoints, skipping excised windows."""
    cuts = {t0, t1}
    for b in breakpoints:
        if t0 < b < t1:
            cuts.add(float(b))
    for a, b in excise:
        for c in (a, b):
            if t0 < c < t1:
                cuts.add(float(c))
    cuts = sorted(cuts)
    segs = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        mid = 0.5 * (a + b)
        skipped = any(lo <= mid <= hi for lo, hi in excise)
        segs.append((a, b, skipped))
    return segs


def _integrate(rhs, y0: np.ndarray, times: np.ndarray, span, breakpoints, excise, rtol, atol, method) -> np.ndarray:
    """Piecewise integration of ``dy/dt = rhs(t, y)`` sampled at ``times``."""
    t0, t1 = float(span[0]), float(span[1])
    out = np.empty((len(times), y0.size), dtype=complex)
    y = y0.astype(complex)
    done = np.zeros(len(times), dtype=bool)
    for a, b, skipped in _segments(t0, t1, breakpoints, excise):
        now = (times >= a) & (times <= b) & ~done
        if skipped:
            out[now] = y
            done |= now
            continue
        te = times[now]
        grid = np.append(te, b) if not te.size or te[-1] < b else te
        sol = solve_ivp(rhs, (a, b), y, method=method, t_eval=grid, rtol=rtol, atol=atol)
        if sol.status != 0:
            t_fail = float(sol.t[-1]) if sol.t.size else a
            raise StiffnessError(f"integration failed: {sol.message}", t_fail)
        out[now] = sol.y[:, : te.size].T
        done |= now
        y = sol.y[:, -1]
    return out


def evolve_schrodinger(
    H,
    psi0,
    span,
    sample_count: int = 101,
    t_eval=None,
    breakpoints: Sequence[float] = (),
    excise: Sequence[tuple[float, float]] = (),
    rtol: float = 1e-10,
    atol: float = 1e-12,
    method: str = "DOP853",
    register: Register | None = None,
) -> Trajectory:
    """Integrate ``i d psi/dt = H(t) psi``.

    Parameters
    ----------
    H : OperatorMatrix, ndarray or callable
        Hamiltonian in rad/s, constant or ``t -> matrix``.
    psi0 : QuantumState or ndarray
        Initial state.  A 2-D array of shape ``(D, k)`` propagates ``k``
        columns at once (the trajectory then stores ``(n, D, k)``).
    span : (t0, t1)
    sample_count : int
        Uniform checkpoints including both ends.
    breakpoints : sequence of float
        Times where the drive is discontinuous; the integrator restarts there.
    excise : sequence of (a, b)
        Windows propagated as the identity (principal-value treatment of
        a drive pole that is odd about the window centre).

    Raises
    ------
    StiffnessError
        If the step size underflows.
    PhysicsInvariantError
        If the norm drifts by more than 1e-8.
    """
    if isinstance(psi0, QuantumState):
        register = psi0.register
        y0 = psi0.vector
    else:
        y0 = np.asarray(psi0, dtype=complex)
        if register is None:
            register = Register((y0.shape[0],))
    shape = y0.shape
    h = _as_callable(H)
    times = _sample_times(span, sample_count, t_eval)

    if y0.ndim == 1:
        def rhs(t, y):
            return -1j * (h(t) @ y)
    else:
        def rhs(t, y):
            return (-1j * (h(t) @ y.reshape(shape))).ravel()

    out = _integrate(rhs, y0.ravel(), times, span, breakpoints, excise, rtol, atol, method)
    states = out.reshape((len(times),) + shape)
    norms = np.sum(np.abs(states) ** 2, axis=1)
    ref = np.sum(np.abs(y0) ** 2, axis=0)
    if np.max(np.abs(norms - ref)) > 1e-8:
        raise PhysicsInvariantError(f"norm drift {np.max(np.abs(norms - ref)):.2e} exceeds 1e-8")
    return Trajectory(register, times, states)


def dissipator(ops: Sequence[np.ndarray], dim: int) -> np.ndarray | None:
    """Dissipator as a matrix on row-major ``vec(rho)``."""
    if not ops:
        return None
    eye = np.eye(dim)
    D = np.zeros((dim * dim, dim * dim), dtype=complex)
    for L in ops:
        L = np.asarray(L, dtype=complex)
        LdL = L.conj().T @ L
        D += np.kron(L, L.conj()) - 0.5 * (np.kron(LdL, eye) + np.kron(eye, LdL.T))
    return D


def lindblad_rhs(h: Hamiltonian, ops: Sequence[np.ndarray], shape: tuple[int, ...]):
    """Right-hand side for a stack of density matrices ``(..., D, D)`` flattened."""
    dim = shape[-1]
    D = dissipator(ops, dim)
    Dsp = None if D is None else sparse.csr_matrix(D)

    def rhs(t, y):
        H = h(t)
        rho = y.reshape(-1, dim, dim)
        d = (-1j * (H @ rho - rho @ H)).reshape(-1, dim * dim)
        if Dsp is not None:
            d += (Dsp @ y.reshape(-1, dim * dim).T).T
        return d.ravel()

    return rhs


def evolve_lindblad(
    H,
    collapse: CollapseSet | Sequence[np.ndarray],
    rho0,
    span,
    sample_count: int = 101,
    t_eval=None,
    breakpoints: Sequence[float] = (),
    excise: Sequence[tuple[float, float]] = (),
    rtol: float = 1e-10,
    atol: float = 1e-12,
    method: str = "DOP853",
    register: Register | None = None,
    check_positivity: bool = True,
) -> Trajectory:
    """Integrate the Lindblad master equation.

    ``rho0`` may be a DensityMatrix, a ``(D, D)`` array or a stack
    ``(k, D, D)`` of operators propagated together (positivity is then not
    checked, since the inputs need not be states).

    Raises
    ------
    PhysicsInvariantError
        If the trace drifts by more than 1e-8, or an eigenvalue drops below
        ``-1e-6`` (eigenvalues below ``-1e-8`` raise only when
        ``check_positivity`` is strict, see Notes).

    Notes
    -----
    Positivity is monitored, not enforced: a violation beyond ``-1e-6``
    aborts.
    """
    if isinstance(rho0, DensityMatrix):
        register = rho0.register
        r0 = rho0.matrix
    else:
        r0 = np.asarray(rho0, dtype=complex)
        if register is None:
            register = Register((r0.shape[-1],))
    ops = collapse.operators() if isinstance(collapse, CollapseSet) else list(collapse)
    shape = r0.shape
    h = _as_callable(H)
    times = _sample_times(span, sample_count, t_eval)
    rhs = lindblad_rhs(h, ops, shape)
    out = _integrate(rhs, r0.ravel(), times, span, breakpoints, excise, rtol, atol, method)
    states = out.reshape((len(times),) + shape)
    tr = np.einsum("...ii->...", states)
    tr0 = np.einsum("...ii->...", r0)
    if np.max(np.abs(tr - tr0)) > 1e-8:
        raise PhysicsInvariantError(f"trace drift {np.max(np.abs(tr - tr0)):.2e} exceeds 1e-8")
    if r0.ndim == 2 and check_positivity:
        herm = 0.5 * (states + np.conj(np.swapaxes(states, -1, -2)))
        mins = np.linalg.eigvalsh(herm)[:, 0]
        worst = float(np.min(mins))
        if worst < -1e-6:
            k = int(np.argmin(mins))
            raise PhysicsInvariantError(f"density matrix lost positivity (eigenvalue {worst:.2e} at t = {times[k]:.4e} s)")
    return Trajectory(register, times, states)


def propagate_channel(
    H,
    collapse: CollapseSet | Sequence[np.ndarray] | None,
    span,
    dim: int = 9,
    inputs: Sequence[int] = COMPUTATIONAL,
    sample_count: int | None = None,
    **kwargs,
):
    """Superoperator on a subspace: ``S[a, b, i, j] = E(|inputs[i]><inputs[j]|)[a, b]``.

    All ``len(inputs)**2`` operator inputs are propagated in one vectorised
    integration.  Without decay the channel is obtained from the closed
    propagator columns instead.

    With ``sample_count`` the result is ``(times, S_series)`` with one
    channel per uniform checkpoint; otherwise only the final channel.
    """
    inputs = list(inputs)
    k = len(inputs)
    ops = [] if collapse is None else (collapse.operators() if isinstance(collapse, CollapseSet) else list(collapse))
    n = 2 if sample_count is None else sample_count
    if not ops:
        cols = np.zeros((dim, k), dtype=complex)
        cols[inputs, range(k)] = 1.0
        traj = evolve_schrodinger(H, cols, span, sample_count=n, **kwargs)
        series = np.einsum("nai,nbj->nabij", traj.states, traj.states.conj())
    else:
        stack = np.zeros((k, k, dim, dim), dtype=complex)
        for i, a in enumerate(inputs):
            for j, b in enumerate(inputs):
                stack[i, j, a, b] = 1.0
        traj = evolve_lindblad(H, ops, stack.reshape(k * k, dim, dim), span, sample_count=n, check_positivity=False, **kwargs)
        series = np.transpose(traj.states.reshape(n, k, k, dim, dim), (0, 3, 4, 1, 2))
        _check_channel(series[-1])
    if sample_count is None:
        return series[-1]
    return traj.times, series


def _check_channel(S: np.ndarray) -> None:
    """Complete positivity of the restricted channel via its Choi matrix."""
    D, _, k, _ = S.shape
    choi = np.transpose(S, (2, 0, 3, 1)).reshape(k * D, k * D)
    choi = 0.5 * (choi + choi.conj().T)
    w = np.linalg.eigvalsh(choi)
    if w[0] < -1e-6:
        raise PhysicsInvariantError(f"simulated channel is not completely positive (Choi eigenvalue {w[0]:.2e})")


def apply_channel(S: np.ndarray, rho_in: np.ndarray) -> np.ndarray:
    """Apply a restricted superoperator to an input on the subspace."""
    return np.einsum("abij,ij->ab", S, rho_in)
