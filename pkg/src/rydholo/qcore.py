"""Composite-register linear algebra for qubits and three-level atoms.

A register is an ordered list of subsystem dimensions.  Subsystem 0 is the
leftmost factor of every ket, so the label ``"1r"`` on a register with dims
``(3, 3)`` is ``|1>_0 (x) |r>_0`` with flat index ``3*1 + 2 = 5``.  All other
modules rely on this ordering and never permute subsystems.

Level symbols
-------------
``0`` and ``1`` are the two ground (qubit) levels.  ``r`` is the Rydberg level,
i.e. the highest level of the subsystem (index 2 for a three-level atom, index
1 for a two-level ``g/r`` atom).  ``g`` is an alias for level 0.

Values returned by this module are immutable: the underlying arrays are
marked read-only after construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

NORM_TOL = 1e-8
HERMITIAN_TOL = 1e-12


class ZeroProbabilityBranchError(ValueError):
    """Raised when a forced measurement outcome has vanishing probability."""


def _frozen(array: np.ndarray) -> np.ndarray:
    out = np.array(array, dtype=complex, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Register:
    """Ordered subsystem dimensions of a composite system.

    Parameters
    ----------
    dims : sequence of int
        Dimension of each subsystem, leftmost first.  Every entry must be at
        least 2.
    """

    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not dims:
            raise ValueError("a register needs at least one subsystem")
        if any(d < 2 for d in dims):
            raise ValueError(f"subsystem dimensions must be >= 2, got {dims}")
        object.__setattr__(self, "dims", dims)

    @classmethod
    def atoms(cls, n: int, levels: int = 3) -> "Register":
        """Register of ``n`` identical atoms with ``levels`` levels each."""
        return cls((levels,) * n)

    @property
    def n(self) -> int:
        return len(self.dims)

    @property
    def total(self) -> int:
        return int(np.prod(self.dims))

    def level(self, site: int, symbol: str) -> int:
        """Integer level of ``symbol`` on subsystem ``site``."""
        d = self.dims[site]
        if symbol in ("0", "g"):
            return 0
        if symbol == "1":
            return 1
        if symbol == "r":
            return d - 1
        if symbol.isdigit() and int(symbol) < d:
            return int(symbol)
        raise ValueError(f"unknown level symbol {symbol!r} for a dim-{d} subsystem")

    def index(self, label: str | Sequence[int]) -> int:
        """Flat basis index of a ket label such as ``"1r"`` or ``(1, 2)``."""
        if isinstance(label, str):
            if len(label) != self.n:
                raise ValueError(f"label {label!r} does not match {self.n} subsystems")
            digits = [self.level(k, s) for k, s in enumerate(label)]
        else:
            digits = [int(v) for v in label]
            if len(digits) != self.n or any(not 0 <= v < d for v, d in zip(digits, self.dims)):
                raise ValueError(f"invalid digit tuple {label!r} for dims {self.dims}")
        return int(np.ravel_multi_index(digits, self.dims))

    def ket(self, label: str | Sequence[int]) -> "QuantumState":
        """Computational basis state for ``label``."""
        amps = np.zeros(self.total, dtype=complex)
        amps[self.index(label)] = 1.0
        return QuantumState(self, amps)

    def projector(self, label: str) -> np.ndarray:
        """Dense projector ``|label><label|`` on the full register."""
        p = np.zeros((self.total, self.total), dtype=complex)
        i = self.index(label)
        p[i, i] = 1.0
        return p

    def sub(self, sites: Iterable[int]) -> "Register":
        return Register(tuple(self.dims[s] for s in sites))

    def __add__(self, other: "Register") -> "Register":
        return Register(self.dims + other.dims)


@dataclass(frozen=True)
class QuantumState:
    """Normalized pure state on a register.

    Parameters
    ----------
    register : Register
    amplitudes : array_like
        Complex amplitude vector of length ``register.total``.
    normalize : bool, optional
        Rescale the amplitudes to unit norm before validation.
    """

    register: Register
    amplitudes: np.ndarray
    normalize: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != self.register.total:
            raise ValueError(f"expected {self.register.total} amplitudes, got {amps.size}")
        norm = np.linalg.norm(amps)
        if self.normalize:
            if norm == 0:
                raise ValueError("cannot normalize the zero vector")
            amps = amps / norm
            norm = 1.0
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state norm {norm:.3e} differs from 1")
        object.__setattr__(self, "amplitudes", _frozen(amps))

    @classmethod
    def from_amplitudes(cls, register: Register, amplitudes) -> "QuantumState":
        return cls(register, amplitudes, normalize=True)

    @classmethod
    def from_labels(cls, register: Register, terms: dict[str, complex]) -> "QuantumState":
        """Superposition ``sum_k c_k |label_k>``, normalized."""
        amps = np.zeros(register.total, dtype=complex)
        for label, c in terms.items():
            amps[register.index(label)] += c
        return cls(register, amps, normalize=True)

    @property
    def vector(self) -> np.ndarray:
        return self.amplitudes

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def density(self) -> "DensityMatrix":
        v = self.amplitudes
        return DensityMatrix(self.register, np.outer(v, v.conj()))

    def overlap(self, other: "QuantumState") -> complex:
        """Inner product ``<self|other>``."""
        _check_same_register(self.register, other.register)
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def fidelity(self, other: "QuantumState") -> float:
        """``|<self|other>|^2``, insensitive to global phase."""
        return abs(self.overlap(other)) ** 2


@dataclass(frozen=True)
class DensityMatrix:
    """Trace-one Hermitian matrix on a register.

    Hermiticity and trace are checked on construction (``check=True``).
    Positivity is only evaluated on request by :meth:`min_eigenvalue`, since
    it needs a diagonalization.
    """

    register: Register
    matrix: np.ndarray
    check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        n = self.register.total
        if m.shape != (n, n):
            raise ValueError(f"expected a {n}x{n} matrix, got {m.shape}")
        if self.check:
            scale = max(1.0, float(np.abs(m).max()))
            if np.abs(m - m.conj().T).max() > 1e-10 * scale:
                raise ValueError("density matrix is not Hermitian")
            tr = np.trace(m).real
            if abs(tr - 1.0) > NORM_TOL:
                raise ValueError(f"density matrix trace {tr:.3e} differs from 1")
        object.__setattr__(self, "matrix", _frozen(m))

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix).min())

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))

    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.matrix)).copy()


@dataclass(frozen=True)
class OperatorMatrix:
    """Square operator on a register (Hamiltonian, gate or projector).

    Hamiltonians are in angular-frequency units (rad/s); gates are
    dimensionless.
    """

    register: Register
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        n = self.register.total
        if m.shape != (n, n):
            raise ValueError(f"expected a {n}x{n} matrix, got {m.shape}")
        object.__setattr__(self, "matrix", _frozen(m))

    @classmethod
    def hamiltonian(cls, register: Register, matrix: np.ndarray) -> "OperatorMatrix":
        """Construct and assert Hermiticity within a relative 1e-12."""
        op = cls(register, matrix)
        if not op.is_hermitian():
            raise ValueError("Hamiltonian is not Hermitian")
        return op

    @classmethod
    def identity(cls, register: Register) -> "OperatorMatrix":
        return cls(register, np.eye(register.total))

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        m = self.matrix
        scale = max(1.0, float(np.abs(m).max()))
        return bool(np.abs(m - m.conj().T).max() <= tol * scale)

    def is_unitary(self, tol: float = 1e-12) -> bool:
        m = self.matrix
        return bool(np.abs(m.conj().T @ m - np.eye(m.shape[0])).max() <= tol)

    def dag(self) -> "OperatorMatrix":
        return OperatorMatrix(self.register, self.matrix.conj().T)

    def __matmul__(self, other):
        if isinstance(other, OperatorMatrix):
            _check_same_register(self.register, other.register)
            return OperatorMatrix(self.register, self.matrix @ other.matrix)
        if isinstance(other, QuantumState):
            return self.apply(other)
        return NotImplemented

    def apply(self, state: QuantumState) -> QuantumState:
        """Apply to a pure state and renormalize."""
        _check_same_register(self.register, state.register)
        return QuantumState(self.register, self.matrix @ state.amplitudes, normalize=True)

    def conjugate(self, rho: DensityMatrix) -> DensityMatrix:
        """Return ``O rho O^dagger``."""
        _check_same_register(self.register, rho.register)
        m = self.matrix
        return DensityMatrix(self.register, m @ rho.matrix @ m.conj().T)


def _check_same_register(a: Register, b: Register) -> None:
    if a.dims != b.dims:
        raise ValueError(f"register mismatch: {a.dims} vs {b.dims}")


def _kron2(a, b):
    if type(a) is not type(b):
        raise TypeError(f"cannot tensor {type(a).__name__} with {type(b).__name__}")
    reg = a.register + b.register
    if isinstance(a, QuantumState):
        return QuantumState(reg, np.kron(a.amplitudes, b.amplitudes))
    if isinstance(a, DensityMatrix):
        return DensityMatrix(reg, np.kron(a.matrix, b.matrix))
    if isinstance(a, OperatorMatrix):
        return OperatorMatrix(reg, np.kron(a.matrix, b.matrix))
    raise TypeError(f"unsupported operand {type(a).__name__}")


def tensor_product(*factors):
    """Kronecker product of states, density matrices or operators.

    All factors must be the same kind.  Register dims are concatenated left
    to right, matching ket ordering.
    """
    if not factors:
        raise ValueError("tensor_product needs at least one factor")
    return reduce(_kron2, factors)


def _move_local(dims: Sequence[int], sites: Sequence[int]):
    sites = [int(s) for s in sites]
    n = len(dims)
    if len(set(sites)) != len(sites) or any(not 0 <= s < n for s in sites):
        raise ValueError(f"invalid subsystem selection {sites} for {n} subsystems")
    rest = [k for k in range(n) if k not in sites]
    return sites, rest


def apply_local(vector: np.ndarray, op: np.ndarray, dims: Sequence[int], sites: Sequence[int]) -> np.ndarray:
    """Apply a local operator to selected subsystems of a state vector.

    Parameters
    ----------
    vector : ndarray, shape (prod(dims),) or (prod(dims), m)
        State vector, or a stack of ``m`` column vectors.
    op : ndarray, shape (D, D)
        Operator on the ordered tensor product of ``dims[s] for s in sites``.
    dims : sequence of int
    sites : sequence of int
        Target subsystems; the first site is the most significant factor of
        ``op``.

    Returns
    -------
    ndarray
        The transformed (unnormalized) vector, same shape as ``vector``.
    """
    sites, _ = _move_local(dims, sites)
    k = len(sites)
    arr = np.asarray(vector)
    extra = arr.shape[1:]
    D = int(np.prod([dims[s] for s in sites]))
    psi = arr.reshape(tuple(dims) + extra)
    psi = np.moveaxis(psi, sites, range(k))
    shape = psi.shape
    psi = (np.asarray(op) @ psi.reshape(D, -1)).reshape(shape)
    psi = np.moveaxis(psi, range(k), sites)
    return psi.reshape(arr.shape)


def embed_operator(op: np.ndarray, dims: Sequence[int], sites: Sequence[int]) -> np.ndarray:
    """Full-register matrix of a local operator acting on ``sites``."""
    d = int(np.prod(dims))
    return apply_local(np.eye(d, dtype=complex), op, dims, sites)


def apply_local_channel(rho: np.ndarray, superop: np.ndarray, dims: Sequence[int], sites: Sequence[int]) -> np.ndarray:
    """Apply a local linear map to selected subsystems of a density matrix.

    Parameters
    ----------
    rho : ndarray, shape (N, N)
    superop : ndarray, shape (D, D, D, D)
        ``superop[a', b', a, b]`` is the coefficient of ``|a'><b'|`` in the
        image of ``|a><b|`` on the local space of ``sites``.
    dims, sites : as in :func:`apply_local`.
    """
    sites, _ = _move_local(dims, sites)
    n = len(dims)
    k = len(sites)
    local = [dims[s] for s in sites]
    D = int(np.prod(local))
    t = np.asarray(rho).reshape(tuple(dims) + tuple(dims))
    ket_axes = sites
    bra_axes = [n + s for s in sites]
    t = np.moveaxis(t, ket_axes + bra_axes, list(range(2 * k)))
    shape = t.shape
    t = t.reshape((D, D, -1))
    t = np.einsum("ABab,abx->ABx", np.asarray(superop), t)
    t = np.moveaxis(t.reshape(shape), list(range(2 * k)), ket_axes + bra_axes)
    N = int(np.prod(dims))
    return t.reshape(N, N)


def partial_trace(rho: DensityMatrix, keep: Iterable[int]) -> DensityMatrix:
    """Reduced density matrix on the subsystems in ``keep`` (kept in order)."""
    keep = sorted(set(int(k) for k in keep))
    dims = rho.register.dims
    n = len(dims)
    if not keep or any(not 0 <= k < n for k in keep):
        raise ValueError(f"invalid keep set {keep} for {n} subsystems")
    traced = [k for k in range(n) if k not in keep]
    t = rho.matrix.reshape(dims + dims)
    letters = "abcdefghijklmnopqrstuvwxyz"
    ket = list(letters[:n])
    bra = list(letters[n:2 * n])
    for k in traced:
        bra[k] = ket[k]
    out = "".join(ket[k] for k in keep) + "".join(bra[k] for k in keep)
    red = np.einsum("".join(ket) + "".join(bra) + "->" + out, t)
    d = int(np.prod([dims[k] for k in keep]))
    return DensityMatrix(Register(tuple(dims[k] for k in keep)), red.reshape(d, d), check=False)


@dataclass(frozen=True)
class MeasurementOutcome:
    outcome: int
    probability: float
    post_state: "QuantumState | DensityMatrix"
    probabilities: tuple[float, ...]


def _resolve_basis(register: Register, sites: Sequence[int], basis) -> np.ndarray:
    d = int(np.prod([register.dims[s] for s in sites]))
    if basis is None:
        return np.eye(d, dtype=complex)
    b = np.array([np.asarray(v, dtype=complex).reshape(-1) for v in basis])
    if b.shape[1] != d:
        raise ValueError(f"basis vectors must have length {d}")
    gram = b.conj() @ b.T
    if np.abs(gram - np.eye(len(b))).max() > 1e-10:
        raise ValueError("measurement basis is not orthonormal")
    return b


def measure_projective(
    state: QuantumState,
    subsystem: int | Sequence[int],
    basis=None,
    rng_seed: int | None = None,
    forced_outcome: int | None = None,
    rng: np.random.Generator | None = None,
) -> MeasurementOutcome:
    """Projective measurement of one subsystem or a joint set of subsystems.

    Parameters
    ----------
    state : QuantumState or DensityMatrix
    subsystem : int or sequence of int
        Measured subsystem(s).  A sequence measures the joint space in its
        ordered tensor product.
    basis : sequence of vectors, optional
        Orthonormal vectors on the measured space.  Defaults to the
        computational basis.  An incomplete basis is allowed; the outcome
        probabilities then sum to the weight of its span.
    rng_seed, rng : optional
        Source of randomness for sampling the outcome.
    forced_outcome : int, optional
        Return this branch deterministically.  Its probability is still
        reported.

    Returns
    -------
    MeasurementOutcome
        Outcome index, its probability, the renormalized post-measurement
        state and the full list of branch probabilities.

    Raises
    ------
    ZeroProbabilityBranchError
        If the forced outcome has probability below 1e-12.
    """
    sites = [subsystem] if np.isscalar(subsystem) else list(subsystem)
    reg = state.register
    sites, _ = _move_local(reg.dims, sites)
    b = _resolve_basis(reg, sites, basis)
    branches = []
    probs = []
    mixed = isinstance(state, DensityMatrix)
    for v in b:
        proj = np.outer(v, v.conj())
        if mixed:
            P = embed_operator(proj, reg.dims, sites)
            out = P @ state.matrix @ P
            probs.append(float(np.trace(out).real))
        else:
            out = apply_local(state.amplitudes, proj, reg.dims, sites)
            probs.append(float(np.vdot(out, out).real))
        branches.append(out)
    if forced_outcome is not None:
        k = int(forced_outcome)
        if not 0 <= k < len(b):
            raise ValueError(f"forced outcome {k} out of range")
        if probs[k] < 1e-12:
            raise ZeroProbabilityBranchError(f"outcome {k} has probability {probs[k]:.3e}")
    else:
        gen = rng if rng is not None else np.random.default_rng(rng_seed)
        p = np.array(probs)
        k = int(gen.choice(len(p), p=p / p.sum()))
    if mixed:
        post = DensityMatrix(reg, branches[k] / probs[k], check=False)
    else:
        post = QuantumState(reg, branches[k], normalize=True)
    return MeasurementOutcome(k, probs[k], post, tuple(probs))
