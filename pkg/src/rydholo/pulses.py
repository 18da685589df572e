"""Reverse-engineered drive for the holonomic controlled-U gate.

Path and drive
--------------
The state ``|psi(t)> = cos(beta/2)|rr> + i e^{-i alpha} sin(beta/2)|B>``
solves the effective dynamics ``H = Omega0 |rr><B| + h.c.`` (up to a global
phase) when::

    Omega0 = e^{i alpha} (-beta_dot - i alpha_dot tan(beta)) / 2

with ``beta = pi sin^2(pi t/T)`` and ``alpha = -gamma*step(t - T/2) + A(beta)``.
For the standard path ``A(beta) = 4 sin^3(beta/3)``.  Its derivative
``A'(beta) = 4 sin^2(beta/3) cos(beta/3)`` does not vanish at
``beta = pi/2``, so ``alpha_dot tan(beta)`` has simple poles at ``t = T/4``
and ``t = 3T/4`` with residue independent of ``T``.  No finite laser peak can
realize it.

Regularized path
----------------
A family of paths with parameter ``kappa >= 0`` removes the poles::

    A_kappa(beta) = integral_0^beta A'(b) cos^2 b / (cos^2 b + kappa^2) db

so that ``alpha_dot tan(beta) = A' beta_dot sin(beta) cos(beta) / (cos^2 beta + kappa^2)``
is bounded.  ``kappa = 0`` recovers the standard path exactly.  Every member
is cyclic, the ``A`` contributions cancel between the rising and falling
halves, and the bright state acquires exactly ``e^{i gamma}``: the gate and the
vanishing dynamic phase are unaffected by ``kappa``.  Physical schedules pick
the smallest ``kappa`` whose peak ``|Omega0|`` fits the configured laser
peaks.

Bright and dark states
----------------------
``|B> = sin(theta/2) e^{i phi}|10> - cos(theta/2)|11>`` and
``|D> = cos(theta/2)|10> + sin(theta/2) e^{-i phi}|11>``.  ``|B>`` is the
``-1`` eigenvector of ``n.sigma`` with ``n = (sin th cos ph, -sin th sin ph, cos th)``,
so the holonomy ``B -> e^{i gamma} B`` realizes
``u = e^{i gamma/2} exp(-i gamma/2 n.sigma)`` on the target when the control
is ``|1>``.  The couplings of ``|rr>`` to ``(|10>, |11>)`` are therefore
``(Omega0 sin(theta/2) e^{-i phi}, -Omega0 cos(theta/2))``.
"""

from __future__ import annotations

import csv
import functools
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq, minimize_scalar

from .model import IRR, I10, I11, SystemConfig, physical_from_effective, effective_couplings
from .qcore import OperatorMatrix, Register

QUBIT_PAIR = Register((2, 2))
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


class ScheduleInfeasibleError(ValueError):
    """The drive exceeds a configured laser peak.

    Attributes
    ----------
    stretch : float
        Factor by which ``T`` must be multiplied for the schedule to fit.
    """

    def __init__(self, message: str, stretch: float):
        super().__init__(message)
        self.stretch = stretch


@dataclass(frozen=True)
class GateParams:
    """Geometric phase ``gamma``, axis angles ``theta, phi`` (rad) and duration ``T`` (s)."""

    gamma: float
    theta: float
    phi: float
    T: float = 5.5e-6
    warning: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("gate duration must be positive")
        if not np.all(np.isfinite([self.gamma, self.theta, self.phi])):
            raise ValueError("gate angles must be finite")

    def with_T(self, T: float) -> "GateParams":
        return replace(self, T=T)


CH_WARNING = "CH preset (pi/2, pi/4, 0) does not produce the Hadamard matrix; use CH_DERIVED"

_PRESETS = {
    "CNOT": (np.pi, np.pi / 2, 0.0, None),
    "CZ": (np.pi, 0.0, 0.0, None),
    "CH": (np.pi / 2, np.pi / 4, 0.0, CH_WARNING),
    "CH_DERIVED": (np.pi, np.pi / 4, 0.0, None),
}


def gate_preset(name: str, T: float = 5.5e-6) -> GateParams:
    """Named gate parameters: ``CNOT``, ``CZ``, ``CH`` (as printed) or ``CH_DERIVED``."""
    key = name.upper()
    if key not in _PRESETS:
        raise ValueError(f"unknown gate preset {name!r}")
    g, th, ph, warn = _PRESETS[key]
    return GateParams(g, th, ph, T, warning=warn)


def axis_vector(theta: float, phi: float) -> np.ndarray:
    return np.array([np.sin(theta) * np.cos(phi), -np.sin(theta) * np.sin(phi), np.cos(theta)])


def target_u(params: GateParams) -> np.ndarray:
    """Single-qubit block ``u = e^{i gamma/2} exp(-i gamma/2 n.sigma)``."""
    n = axis_vector(params.theta, params.phi)
    ns = n[0] * PAULI_X + n[1] * PAULI_Y + n[2] * PAULI_Z
    g = params.gamma / 2
    return np.exp(1j * g) * (np.cos(g) * np.eye(2) - 1j * np.sin(g) * ns)


def controlled(u: np.ndarray) -> np.ndarray:
    """``|0><0| (x) I + |1><1| (x) u``."""
    cu = np.eye(4, dtype=complex)
    cu[2:, 2:] = u
    return cu


def target_unitary(params: GateParams) -> OperatorMatrix:
    """Ideal 4x4 controlled-``u`` gate on a qubit pair."""
    return OperatorMatrix(QUBIT_PAIR, controlled(target_u(params)))


def params_from_unitary(u: np.ndarray, T: float = 5.5e-6) -> GateParams:
    """Gate parameters reproducing a 2x2 unitary that has an eigenvalue 1.

    Raises
    ------
    ValueError
        If no eigenvalue of ``u`` equals 1, since the holonomic gate leaves
        the dark state untouched.
    """
    u = np.asarray(u, dtype=complex)
    w, v = np.linalg.eig(u)
    k = int(np.argmin(abs(w - 1)))
    if abs(w[k] - 1) > 1e-9:
        raise ValueError("u has no unit eigenvalue and is not a holonomic controlled-U target")
    other = 1 - k
    gamma = float(np.angle(w[other]))
    if abs(gamma) < 1e-12:
        return GateParams(0.0, 0.0, 0.0, T)
    d = v[:, k] / np.linalg.norm(v[:, k])
    d = d * np.exp(-1j * np.angle(d[0])) if abs(d[0]) > 1e-12 else d * np.exp(-1j * np.angle(d[1]))
    theta = 2 * np.arctan2(abs(d[1]), abs(d[0]))
    phi = float(-np.angle(d[1])) if abs(d[1]) > 1e-12 else 0.0
    return GateParams(gamma, float(theta), phi, T)


def bright_state(theta: float, phi: float) -> np.ndarray:
    """Bright state on the two-atom register (9-vector)."""
    v = np.zeros(9, dtype=complex)
    v[I10] = np.sin(theta / 2) * np.exp(1j * phi)
    v[I11] = -np.cos(theta / 2)
    return v


def dark_state(theta: float, phi: float) -> np.ndarray:
    v = np.zeros(9, dtype=complex)
    v[I10] = np.cos(theta / 2)
    v[I11] = np.sin(theta / 2) * np.exp(-1j * phi)
    return v


# ---------------------------------------------------------------------------
# path


def _a_prime(b):
    return 4 * np.sin(b / 3) ** 2 * np.cos(b / 3)


@functools.lru_cache(maxsize=64)
def _a_kappa_spline(kappa: float) -> CubicSpline:
    grid = np.linspace(0.0, np.pi, 20001)
    c2 = np.cos(grid) ** 2
    w = _a_prime(grid) * c2 / (c2 + kappa**2)
    return CubicSpline(grid, cumulative_simpson(w, x=grid, initial=0.0))


def _a_kappa(beta, kappa: float):
    if kappa == 0:
        return 4 * np.sin(np.asarray(beta) / 3) ** 3
    return _a_kappa_spline(float(kappa))(beta)


def _check_time(t, T):
    t = np.asarray(t, dtype=float)
    if np.any(t < -1e-15 * T) or np.any(t > T * (1 + 1e-15)):
        raise ValueError("t outside [0, T]")
    return t


def path_angles(t, T: float, gamma: float, kappa: float = 0.0):
    """Path angles ``(beta, alpha)`` at time ``t``.

    ``alpha`` includes the phase step ``-gamma`` for ``t >= T/2``.
    """
    t = _check_time(t, T)
    beta = np.pi * np.sin(np.pi * t / T) ** 2
    alpha = -gamma * (t >= T / 2) + _a_kappa(beta, kappa)
    return beta, alpha


def path_rates(t, T: float, kappa: float = 0.0):
    """``(beta_dot, alpha_dot, alpha_dot*tan(beta))`` of the smooth path parts.

    The product is evaluated in its combined closed form, which is finite
    for ``kappa > 0`` and has simple poles at ``t = T/4, 3T/4`` for
    ``kappa = 0``.
    """
    t = _check_time(t, T)
    beta = np.pi * np.sin(np.pi * t / T) ** 2
    bdot = np.pi**2 / T * np.sin(2 * np.pi * t / T)
    c, s = np.cos(beta), np.sin(beta)
    c2k = c**2 + kappa**2
    with np.errstate(divide="ignore", invalid="ignore"):
        adot = _a_prime(beta) * bdot * (c**2 / c2k)
        adot_tan = _a_prime(beta) * bdot * s * c / c2k
    return bdot, adot, adot_tan


def effective_drive(t, params: GateParams, kappa: float = 0.0):
    """Complex drive ``Omega0(t)`` in rad/s (array inputs broadcast)."""
    _, alpha = path_angles(t, params.T, params.gamma, kappa)
    bdot, _, adot_tan = path_rates(t, params.T, kappa)
    return np.exp(1j * alpha) * (-bdot - 1j * adot_tan) / 2


def drive_couplings(omega0, theta: float, phi: float):
    """Couplings of ``|rr>`` to ``(|10>, |11>)`` for drive ``omega0``."""
    return omega0 * np.sin(theta / 2) * np.exp(-1j * phi), -omega0 * np.cos(theta / 2)


def singular_times(params: GateParams, kappa: float) -> tuple[float, ...]:
    """Times where the drive diverges (only for ``kappa = 0`` and an active path)."""
    if kappa > 0:
        return ()
    return (params.T / 4, 3 * params.T / 4)


def peak_omega0(params: GateParams, kappa: float) -> float:
    """Maximum of ``|Omega0|`` over the gate (infinite for ``kappa = 0``)."""
    if kappa <= 0:
        return np.inf
    T = params.T

    def mag(t):
        bdot, _, at = path_rates(t, T, kappa)
        return np.hypot(bdot, at) / 2

    grid = np.linspace(0, T / 2, 4001)
    vals = mag(grid)
    k = int(np.argmax(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    res = minimize_scalar(lambda t: -mag(t), bounds=(lo, hi), method="bounded", options={"xatol": T * 1e-12})
    return float(max(vals[k], -res.fun))


def allowed_omega0_peak(config: SystemConfig, theta: float) -> float:
    """Largest ``|Omega0|`` that keeps both atom-2 drives within their peaks."""
    s, c = abs(np.sin(theta / 2)), abs(np.cos(theta / 2))
    lim = np.inf
    scale = config.omega11_peak / config.delta1
    if s > 1e-15:
        lim = min(lim, config.omega21_peak * scale / s)
    if c > 1e-15:
        lim = min(lim, config.omega22_peak * scale / c)
    return lim


def required_kappa(params: GateParams, config: SystemConfig) -> float:
    """Smallest path regularization whose drive fits the laser peaks.

    Raises
    ------
    ScheduleInfeasibleError
        If even the flat-phase limit (``kappa -> inf``) exceeds the peak, in
        which case only a longer gate can help.
    """
    limit = allowed_omega0_peak(config, params.theta)
    floor = np.pi**2 / (2 * params.T)  # beta_dot/2 peak, reached as kappa -> inf
    if floor >= limit:
        stretch = floor / limit
        raise ScheduleInfeasibleError(
            f"gate time {params.T:.3e} s too short for the laser peaks; stretch T by at least {stretch:.4f}", stretch
        )
    f = lambda k: peak_omega0(params, k) - limit
    hi = 1e-3
    while f(hi) > 0:
        hi *= 4
        if hi > 1e6:
            raise ScheduleInfeasibleError("no regularization fits the laser peaks", floor / limit)
    if f(1e-9) <= 0:
        return 1e-9
    return float(brentq(f, 1e-9, hi, xtol=1e-14, rtol=1e-12))


def minimal_duration(params: GateParams, config: SystemConfig, kappa: float) -> float:
    """Shortest gate time that fits the laser peaks for a fixed ``kappa``.

    For a fixed path shape ``|Omega0|`` scales exactly as ``1/T``, so the
    bisection on the stretch factor reduces to a ratio.
    """
    peak = peak_omega0(params, kappa)
    limit = allowed_omega0_peak(config, params.theta)
    return params.T * peak / limit


# ---------------------------------------------------------------------------
# schedule


@dataclass(frozen=True)
class PulseSchedule:
    """Sampled drive realizing a gate.

    Attributes
    ----------
    params : GateParams
    kappa : float
        Path regularization (0 for the standard path).
    times : ndarray
        Uniform grid on ``[0, T]``; ``T/2`` is a grid point.
    omega0 : ndarray
        Complex ``Omega0`` on the grid (rad/s).
    mapping : dict
        Physical mapping metadata.
    config : SystemConfig or None
        Laser configuration used for the physical mapping.
    """

    params: GateParams
    kappa: float
    times: np.ndarray
    omega0: np.ndarray
    config: SystemConfig | None = None
    mapping: dict = field(default_factory=dict, compare=False)

    @property
    def T(self) -> float:
        return self.params.T

    def omega0_at(self, t, interpolation: str = "exact"):
        """Drive at ``t``; ``interpolation`` is ``"exact"`` or ``"linear"``."""
        if interpolation == "exact":
            return effective_drive(np.clip(t, 0.0, self.T), self.params, self.kappa)
        if interpolation == "linear":
            if np.ndim(t) == 0:
                # uniform grid: direct index arithmetic is much cheaper than np.interp
                n = self.times.size - 1
                x = min(max(float(t) / self.T, 0.0), 1.0) * n
                k = min(int(x), n - 1)
                f = x - k
                return (1 - f) * self.omega0[k] + f * self.omega0[k + 1]
            re = np.interp(t, self.times, self.omega0.real)
            im = np.interp(t, self.times, self.omega0.imag)
            return re + 1j * im
        raise ValueError(f"unknown interpolation {interpolation!r}")

    def eff_drives(self, interpolation: str = "exact", eps1: float = 0.0, eps2: float = 0.0) -> Callable:
        """``t -> (Omega1, Omega2)`` couplings to ``(|10>, |11>)``, optionally scaled by ``(1+eps)``."""
        th, ph = self.params.theta, self.params.phi
        s1, s2 = 1 + eps1, 1 + eps2

        def f(t):
            c10, c11 = drive_couplings(self.omega0_at(t, interpolation), th, ph)
            return s1 * c10, s2 * c11

        return f

    def physical_drives(self, interpolation: str = "exact", eps1: float = 0.0, eps2: float = 0.0, scale: str = "effective") -> Callable:
        """``t -> (Omega11, Omega21, Omega22)`` in rad/s.

        ``scale="effective"`` multiplies the effective couplings by
        ``(1+eps1, 1+eps2)``; ``scale="physical"`` multiplies ``Omega11`` by
        ``1+eps1`` and both atom-2 drives by ``1+eps2``.
        """
        if self.config is None:
            raise ValueError("schedule has no laser configuration")
        cfg = self.config
        if scale == "effective":
            eff = self.eff_drives(interpolation, eps1, eps2)

            def f(t):
                return physical_from_effective(cfg, *eff(t))

        elif scale == "physical":
            eff = self.eff_drives(interpolation)

            def f(t):
                o11, o21, o22 = physical_from_effective(cfg, *eff(t))
                return (1 + eps1) * o11, (1 + eps2) * o21, (1 + eps2) * o22

        else:
            raise ValueError(f"unknown error scaling {scale!r}")
        return f

    def physical_samples(self):
        """Physical drives on the sample grid: ``(Omega11, Omega21[], Omega22[])``."""
        if self.config is None:
            raise ValueError("schedule has no laser configuration")
        c10, c11 = drive_couplings(self.omega0, self.params.theta, self.params.phi)
        return physical_from_effective(self.config, c10, c11)

    def to_csv(self, path, header_comment: str | None = None) -> None:
        """Write the sampled schedule as CSV (UTF-8, header row)."""
        if self.config is not None:
            _, o21, o22 = self.physical_samples()
        else:
            o21 = o22 = np.full(self.times.shape, np.nan, dtype=complex)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh)
            w.writerow(["t_s", "omega0_re_rad_s", "omega0_im_rad_s", "omega21_re", "omega21_im", "omega22_re", "omega22_im"])
            for row in zip(self.times, self.omega0, o21, o22):
                t, a, b, c = row
                w.writerow([repr(float(t)), repr(float(a.real)), repr(float(a.imag)), repr(float(b.real)), repr(float(b.imag)), repr(float(c.real)), repr(float(c.imag))])


def design_schedule(
    params: GateParams,
    config: SystemConfig | None = None,
    kappa: float | str = "auto",
    n_samples: int = 4000,
) -> PulseSchedule:
    """Build the drive schedule for ``params``.

    Parameters
    ----------
    params : GateParams
    config : SystemConfig, optional
        Laser configuration; required for ``kappa="auto"`` and for the
        physical mapping.
    kappa : float or "auto"
        Path regularization.  ``"auto"`` picks the smallest value that fits
        the laser peaks (or 0 when ``config`` is None).
    n_samples : int
        Number of uniform intervals on ``[0, T]``; must be even so ``T/2``
        is a grid point.

    Raises
    ------
    ScheduleInfeasibleError
        If the drive cannot fit the configured peaks.
    """
    if n_samples % 2:
        raise ValueError("n_samples must be even so that T/2 is a grid point")
    if kappa == "auto":
        kappa = 0.0 if config is None or params.gamma == 0 else required_kappa(params, config)
    kappa = float(kappa)
    if config is not None and params.gamma != 0:
        limit = allowed_omega0_peak(config, params.theta)
        peak = peak_omega0(params, kappa)
        if peak > limit * (1 + 1e-9):
            stretch = minimal_duration(params, config, kappa) / params.T if np.isfinite(peak) else np.inf
            raise ScheduleInfeasibleError(
                f"drive peak {peak:.4e} rad/s exceeds limit {limit:.4e} rad/s; stretch T by {stretch:.4f}", stretch
            )
    times = np.linspace(0.0, params.T, n_samples + 1)
    if params.gamma == 0:
        omega0 = np.zeros_like(times, dtype=complex)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            omega0 = effective_drive(times, params, kappa)
        for ts in singular_times(params, kappa):
            # principal-value convention: the pole sample carries no drive
            omega0[np.isclose(times, ts, rtol=0, atol=1e-9 * params.T)] = 0.0
    mapping = {
        "omega1": "couples |rr> to |10>: Omega0*sin(theta/2)*exp(-i*phi) = -Omega21*Omega11/Delta1",
        "omega2": "couples |rr> to |11>: -Omega0*cos(theta/2) = -Omega22*Omega11/Delta1",
        "omega11": "constant at omega11_peak",
    }
    return PulseSchedule(params, kappa, times, omega0, config, mapping)


def physical_pulses(t, schedule: PulseSchedule, config: SystemConfig):
    """Physical Rabi drives ``(Omega11, Omega21(t), Omega22(t))``.

    Raises
    ------
    ScheduleInfeasibleError
        If the drive exceeds a configured peak.
    """
    c10, c11 = drive_couplings(schedule.omega0_at(t), schedule.params.theta, schedule.params.phi)
    o11, o21, o22 = physical_from_effective(config, c10, c11)
    limit21 = config.omega21_peak * (1 + 1e-9)
    limit22 = config.omega22_peak * (1 + 1e-9)
    m21, m22 = np.max(np.abs(o21)), np.max(np.abs(o22))
    if m21 > limit21 or m22 > limit22:
        stretch = max(m21 / config.omega21_peak, m22 / config.omega22_peak)
        raise ScheduleInfeasibleError(f"physical drive exceeds peak; stretch T by {stretch:.4f}", float(stretch))
    return o11, o21, o22


# ---------------------------------------------------------------------------
# diagnostics


@dataclass(frozen=True)
class TestPath:
    """Arbitrary ``(beta, alpha)`` path for diagnostics.

    Each attribute is a callable of ``t`` returning an array.
    """

    beta: Callable
    beta_dot: Callable
    alpha: Callable
    alpha_dot: Callable
    T: float


def standard_path(params: GateParams, kappa: float = 0.0) -> TestPath:
    T, g = params.T, params.gamma

    def beta(t):
        return path_angles(t, T, g, kappa)[0]

    def alpha(t):
        return path_angles(t, T, g, kappa)[1]

    return TestPath(beta, lambda t: path_rates(t, T, kappa)[0], alpha, lambda t: path_rates(t, T, kappa)[1], T)


def path_state(path: TestPath, t, theta: float = np.pi / 2, phi: float = 0.0) -> np.ndarray:
    """States ``cos(beta/2)|rr> + i e^{-i alpha} sin(beta/2)|B>`` as rows (n x 9)."""
    t = np.atleast_1d(t)
    b, a = path.beta(t), path.alpha(t)
    psi = np.zeros((t.size, 9), dtype=complex)
    psi[:, IRR] = np.cos(b / 2)
    psi += (1j * np.exp(-1j * a) * np.sin(b / 2))[:, None] * bright_state(theta, phi)[None, :]
    return psi


def dynamic_phase(source, n: int = 200000, kappa: float | None = None) -> float:
    """Accumulated dynamic phase ``int_0^T <psi|H|psi> dt`` along a path.

    Parameters
    ----------
    source : PulseSchedule, GateParams or TestPath
        For a schedule, its own ``kappa`` is used.
    n : int
        Number of midpoint-rule cells (a multiple of 4, so the cells are
        symmetric about the singular times of the standard path and the
        quadrature takes principal values there).
    kappa : float, optional
        Path regularization when ``source`` is a GateParams.

    Notes
    -----
    The state is the parametrized path state and ``H`` is built from the
    drive that the path implies, ``Omega0 = e^{i alpha}(-beta_dot - i alpha_dot tan beta)/2``.
    """
    if isinstance(source, PulseSchedule):
        path = standard_path(source.params, source.kappa)
        k = source.kappa
    elif isinstance(source, GateParams):
        k = 0.0 if kappa is None else kappa
        path = standard_path(source, k)
    else:
        path = source
        k = None
    n = int(np.ceil(n / 4) * 4)
    T = path.T
    h = T / n
    t = (np.arange(n) + 0.5) * h
    psi = path_state(path, t)
    b, a = path.beta(t), path.alpha(t)
    bdot = path.beta_dot(t)
    if k is not None:
        adot_tan = path_rates(t, T, k)[2]
    else:
        adot_tan = path.alpha_dot(t) * np.tan(b)
    om = np.exp(1j * a) * (-bdot - 1j * adot_tan) / 2
    bright = bright_state(np.pi / 2, 0.0)
    # <psi|H|psi> = 2 Re[ Omega0 <psi|rr> <B|psi> ]
    amp_rr = psi[:, IRR].conj()
    amp_b = psi @ bright.conj()
    energy = 2 * np.real(om * amp_rr * amp_b)
    return float(np.sum(energy) * h)
