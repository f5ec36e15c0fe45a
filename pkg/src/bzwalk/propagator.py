"""Split-step propagation of the two-component condensate in lattice units.

The Hamiltonian acting on the spinor ``(psi1, psi2)`` is

    -(1/pi^2) d^2/dx^2 + V0(t) sin^2(pi x) - (x - x_bar) F0(t) sigma_z
        + (pi^2/4) omega(t)^2 x^2 + g(t) (|psi1|^2 + |psi2|^2)

with ``omega`` the longitudinal trap frequency in units of ``E_R/hbar``.
Positions live on a periodic grid with an integer number of points per
lattice site, so translations by one site are exact grid symmetries.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import NoConvergence, newton_krylov
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from .errors import (BlowupError, CollapseError, ConvergenceError,
                     InvalidParameterError)

__all__ = [
    "Grid",
    "SpinorField",
    "Segment",
    "Profile",
    "CoinPulse",
    "DriveSchedule",
    "coin_matrix",
    "apply_coin",
    "step_real",
    "step_gpe",
    "evolve",
    "ground_state_imaginary_time",
    "gaussian_state",
    "energy",
]


@dataclass(frozen=True)
class Grid:
    """Periodic position grid centred on x=0 with spacing ``1/points_per_site``."""

    n_points: int = 4096
    points_per_site: int = 16

    def __post_init__(self):
        n = self.n_points
        if n < 2 or n & (n - 1):
            raise InvalidParameterError("n_points", f"must be a power of two, got {n}")
        if self.points_per_site < 2:
            raise InvalidParameterError("points_per_site", "must be >= 2")
        if n % self.points_per_site:
            raise InvalidParameterError("points_per_site", "must divide n_points")

    @property
    def dx(self):
        return 1.0 / self.points_per_site

    @property
    def length(self):
        return self.n_points / self.points_per_site

    @property
    def n_cells(self):
        return self.n_points // self.points_per_site

    @property
    def x(self):
        return (np.arange(self.n_points) - self.n_points // 2) * self.dx

    @property
    def q(self):
        """Angular wavenumbers (per d_L) in FFT order."""
        return 2 * np.pi * np.fft.fftfreq(self.n_points, self.dx)

    @property
    def kinetic(self):
        return (self.q / np.pi) ** 2


@dataclass(frozen=True)
class SpinorField:
    """Two-component wavefunction ``psi`` of shape (2, n_points) at ``time``."""

    grid: Grid
    psi: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        if self.psi.shape != (2, self.grid.n_points):
            raise InvalidParameterError("psi", f"shape {self.psi.shape} does not match the grid")

    @property
    def psi1(self):
        return self.psi[0]

    @property
    def psi2(self):
        return self.psi[1]

    def density(self, spin=None):
        d = np.abs(self.psi) ** 2
        return d.sum(axis=0) if spin is None else d[spin]

    def norm(self):
        return float(np.sum(np.abs(self.psi) ** 2) * self.grid.dx)

    def normalized(self):
        return replace(self, psi=self.psi / math.sqrt(self.norm()))

    def momentum_amplitudes(self):
        """FFT-ordered amplitudes normalized so that ``sum |.|^2 = norm / dx``."""
        return np.fft.fft(self.psi, axis=-1) / math.sqrt(self.grid.n_points)

    def position_width(self):
        n = self.density()
        w = n / n.sum()
        x = self.grid.x
        mean = np.sum(w * x)
        return float(math.sqrt(np.sum(w * (x - mean) ** 2)))

    def momentum_width(self):
        """RMS width of the (unfolded) momentum density, in units of k_R."""
        p = np.sum(np.abs(self.momentum_amplitudes()) ** 2, axis=0)
        p = p / p.sum()
        k = self.grid.q / np.pi
        mean = np.sum(p * k)
        return float(math.sqrt(np.sum(p * (k - mean) ** 2)))


def gaussian_state(grid, sigma, x0=0.0, k0=0.0, spinor=(1.0, 0.0)):
    """Normalized Gaussian whose density has standard deviation ``sigma``.

    ``k0`` is the mean momentum in units of k_R.
    """
    x = grid.x
    env = np.exp(-((x - x0) ** 2) / (4 * sigma ** 2) + 1j * np.pi * k0 * x)
    s = np.asarray(spinor, dtype=complex)
    s = s / np.linalg.norm(s)
    psi = s[:, None] * env[None, :]
    return SpinorField(grid, psi).normalized()


# ---------------------------------------------------------------------------
# drive schedule

_SHAPES = ("constant", "linear", "smoothstep")


@dataclass(frozen=True)
class Segment:
    t_start: float
    t_end: float
    shape: str
    start_value: float
    end_value: float
    jump: bool = False

    def __post_init__(self):
        if self.shape not in _SHAPES:
            raise InvalidParameterError("shape", f"unknown ramp shape {self.shape!r}")
        if not self.t_end >= self.t_start:
            raise InvalidParameterError("t_end", "segment ends before it starts")
        if self.shape == "constant" and self.start_value != self.end_value:
            raise InvalidParameterError("end_value", "constant segment needs equal end values")

    def value(self, t):
        if self.t_end == self.t_start:
            return self.end_value
        s = min(max((t - self.t_start) / (self.t_end - self.t_start), 0.0), 1.0)
        if self.shape == "smoothstep":
            s = s * s * (3 - 2 * s)
        elif self.shape == "constant":
            s = 0.0
        return self.start_value + (self.end_value - self.start_value) * s

    def integral(self, t0, t1):
        """Exact integral of the profile over ``[t0, t1]`` inside the segment."""
        span = self.t_end - self.t_start
        if span == 0:
            return self.end_value * (t1 - t0)

        def prim(t):
            s = (t - self.t_start) / span
            if self.shape == "smoothstep":
                f = s ** 3 - s ** 4 / 2
            elif self.shape == "linear":
                f = s * s / 2
            else:
                f = 0.0
            return span * (self.start_value * s + (self.end_value - self.start_value) * f)

        return prim(t1) - prim(t0)


@dataclass(frozen=True)
class Profile:
    """Piecewise ramp; outside all segments the nearest boundary value holds."""

    segments: tuple = ()
    default: float = 0.0

    def __post_init__(self):
        segs = tuple(self.segments)
        object.__setattr__(self, "segments", segs)
        for a, b in zip(segs, segs[1:]):
            if b.t_start < a.t_end - 1e-12:
                raise InvalidParameterError("segments", "segments overlap or are out of order")
            if not b.jump and not math.isclose(a.end_value, b.start_value, rel_tol=1e-12, abs_tol=1e-12):
                raise InvalidParameterError(
                    "segments", f"discontinuity at t={b.t_start} not flagged as a jump")

    @classmethod
    def constant(cls, value):
        return cls((), float(value))

    def value(self, t):
        segs = self.segments
        if not segs:
            return self.default
        if t < segs[0].t_start:
            return segs[0].start_value
        prev = segs[0]
        for s in segs:
            if t < s.t_start:
                return prev.end_value
            if t <= s.t_end:
                return s.value(t)
            prev = s
        return prev.end_value

    def integral(self, t0, t1):
        """Integral of the profile over ``[t0, t1]`` (exact for the ramp shapes)."""
        if t1 < t0:
            return -self.integral(t1, t0)
        if not self.segments:
            return self.default * (t1 - t0)
        cuts = sorted({t0, t1, *[s.t_start for s in self.segments], *[s.t_end for s in self.segments]})
        cuts = [c for c in cuts if t0 <= c <= t1]
        total = 0.0
        for a, b in zip(cuts, cuts[1:]):
            mid = 0.5 * (a + b)
            seg = next((s for s in self.segments if s.t_start <= mid <= s.t_end), None)
            total += seg.integral(a, b) if seg is not None else self.value(mid) * (b - a)
        return total

    def breakpoints(self):
        return sorted({t for s in self.segments for t in (s.t_start, s.t_end)})


@dataclass(frozen=True)
class CoinPulse:
    """Coin rotation by ``alpha`` about the axis ``cos(phase) sx + sin(phase) sy``.

    With ``duration == 0`` the pulse is applied instantaneously at ``time``;
    otherwise it is a square Rabi pulse of that length starting at ``time``.
    """

    time: float
    alpha: float
    phase: float = 0.0
    duration: float = 0.0


@dataclass(frozen=True)
class DriveSchedule:
    V0: Profile = field(default_factory=lambda: Profile.constant(0.0))
    F0: Profile = field(default_factory=lambda: Profile.constant(0.0))
    omega: Profile = field(default_factory=lambda: Profile.constant(0.0))
    g: Profile = field(default_factory=lambda: Profile.constant(0.0))
    x_bar: float = 0.0
    pulses: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "pulses", tuple(sorted(self.pulses, key=lambda p: p.time)))
        for p in self.pulses:
            if p.duration < 0:
                raise InvalidParameterError("duration", "pulse duration must be >= 0")

    @classmethod
    def static(cls, V0=0.0, F0=0.0, omega=0.0, g=0.0, x_bar=0.0, pulses=()):
        return cls(Profile.constant(V0), Profile.constant(F0), Profile.constant(omega),
                   Profile.constant(g), x_bar, tuple(pulses))

    def at(self, t):
        return self.V0.value(t), self.F0.value(t), self.omega.value(t), self.g.value(t)

    def event_times(self):
        out = set()
        for p in self.pulses:
            out.add(p.time)
            if p.duration > 0:
                out.add(p.time + p.duration)
        return sorted(out)

    def breakpoints(self):
        pts = set(self.event_times())
        for prof in (self.V0, self.F0, self.omega, self.g):
            pts.update(prof.breakpoints())
        return sorted(pts)


# ---------------------------------------------------------------------------
# coin


def coin_matrix(alpha, phase=0.0):
    """``[[cos a/2, i sin a/2 e^{-i phase}], [i sin a/2 e^{i phase}, cos a/2]]``."""
    c, s = math.cos(alpha / 2), math.sin(alpha / 2)
    return np.array([[c, 1j * s * np.exp(-1j * phase)],
                     [1j * s * np.exp(1j * phase), c]])


def apply_coin(state: SpinorField, alpha, rel_phase=0.0) -> SpinorField:
    """Apply the coin pointwise; time does not advance."""
    u = coin_matrix(alpha, rel_phase)
    return replace(state, psi=u @ state.psi)


# ---------------------------------------------------------------------------
# real-time stepping


def _lattice_profile(grid):
    return np.sin(np.pi * grid.x) ** 2


def _potentials(grid, x, sin2, V0, F0, omega, x_bar):
    common = V0 * sin2
    if omega:
        common = common + (np.pi ** 2 / 4) * omega ** 2 * x ** 2
    spin = -(x - x_bar) * F0
    return common + spin, common - spin


def _active_pulse(schedule, t_mid):
    for p in schedule.pulses:
        if p.duration > 0 and p.time <= t_mid < p.time + p.duration:
            return p
    return None


def _potential_step(psi, v1, v2, dt, pulse=None):
    """exp(-i V dt) for a diagonal potential plus an optional Rabi coupling."""
    if pulse is None:
        psi[0] *= np.exp(-1j * v1 * dt)
        psi[1] *= np.exp(-1j * v2 * dt)
        return psi
    # H = a + b sz + c (cos p sx + sin p sy), c = -Omega/2
    omega_r = pulse.alpha / pulse.duration
    a = 0.5 * (v1 + v2)
    b = 0.5 * (v1 - v2)
    c = -0.5 * omega_r
    r = np.sqrt(b * b + c * c)
    cr, sr = np.cos(r * dt), np.sin(r * dt)
    with np.errstate(invalid="ignore", divide="ignore"):
        sinc = np.where(r > 0, sr / np.where(r > 0, r, 1.0), dt)
    ph = np.exp(-1j * a * dt)
    e_m, e_p = np.exp(-1j * pulse.phase), np.exp(1j * pulse.phase)
    u11 = cr - 1j * b * sinc
    u22 = cr + 1j * b * sinc
    u12 = -1j * c * sinc * e_m
    u21 = -1j * c * sinc * e_p
    p0, p1 = psi[0].copy(), psi[1]
    psi[0] = ph * (u11 * p0 + u12 * p1)
    psi[1] = ph * (u21 * p0 + u22 * p1)
    return psi


def _instant_pulses_at(schedule, t, tol):
    return [p for p in schedule.pulses if p.duration == 0 and abs(p.time - t) <= tol]


def _check_alignment(schedule, t0, dt, n_steps):
    t1 = t0 + n_steps * dt
    tol = 1e-9 * max(1.0, dt)
    for te in schedule.event_times():
        if t0 - tol < te < t1 - tol:
            m = (te - t0) / dt
            if abs(m - round(m)) * dt > tol:
                raise InvalidParameterError(
                    "dt", f"pulse edge at t={te} falls inside a step; use evolve() to align steps")


def _propagate(state, schedule, dt, n_steps, nonlinear, check_every=100, collapse_factor=100.0):
    grid = state.grid
    x = grid.x
    sin2 = _lattice_profile(grid)
    half_kin = np.exp(-0.5j * grid.kinetic * dt)
    psi = np.array(state.psi, dtype=complex, copy=True)
    t0 = state.time
    tol = 1e-9 * max(1.0, dt)
    _check_alignment(schedule, t0, dt, n_steps)
    _warn_dt(schedule, state, dt, nonlinear)
    peak0 = float(np.max(np.abs(psi[0]) ** 2 + np.abs(psi[1]) ** 2))
    for i in range(n_steps):
        t = t0 + i * dt
        for p in _instant_pulses_at(schedule, t, tol):
            psi = coin_matrix(p.alpha, p.phase) @ psi
        tm = t + 0.5 * dt
        V0, F0, omega, g = schedule.at(tm)
        # predictor: half kinetic step gives the midpoint state whose density
        # is used (and left invariant) by the potential step
        psi = np.fft.ifft(half_kin * np.fft.fft(psi, axis=-1), axis=-1)
        v1, v2 = _potentials(grid, x, sin2, V0, F0, omega, schedule.x_bar)
        if nonlinear and g:
            n_mid = np.abs(psi[0]) ** 2 + np.abs(psi[1]) ** 2
            v1 = v1 + g * n_mid
            v2 = v2 + g * n_mid
        psi = _potential_step(psi, v1, v2, dt, _active_pulse(schedule, tm))
        psi = np.fft.ifft(half_kin * np.fft.fft(psi, axis=-1), axis=-1)
        if (i + 1) % check_every == 0 or i + 1 == n_steps:
            if not np.all(np.isfinite(psi)):
                raise BlowupError(i + 1)
            if nonlinear:
                peak = float(np.max(np.abs(psi[0]) ** 2 + np.abs(psi[1]) ** 2))
                if peak > collapse_factor * peak0:
                    raise CollapseError(
                        f"peak density grew by {peak / peak0:.3g}x at step {i + 1} (t={t + dt:.6g})")
    t_end = t0 + n_steps * dt
    return SpinorField(grid, psi, t_end)


def _warn_dt(schedule, state, dt, nonlinear):
    # The linear tilt is left out: with a quadratic kinetic term its
    # splitting error is a c-number phase.
    V0, _, omega, g = schedule.at(state.time)
    dens = np.nan_to_num(state.density(), nan=0.0, posinf=0.0)
    occupied = state.grid.x[dens > 1e-6 * dens.max()] if dens.any() else state.grid.x
    reach = float(np.max(np.abs(occupied)))
    vmax = abs(V0) + (np.pi ** 2 / 4) * omega ** 2 * reach ** 2
    if nonlinear:
        vmax += abs(g) * float(dens.max())
    if dt * vmax > 0.1:
        warnings.warn(f"dt * max|V| = {dt * vmax:.3g} exceeds 0.1; the splitting error may be large",
                      stacklevel=3)


def step_real(state: SpinorField, schedule: DriveSchedule, dt, n_steps) -> SpinorField:
    """Strang-split real-time evolution over ``n_steps`` steps of ``dt``.

    Each step is a half kinetic step in momentum space, a full potential
    step (lattice, Zeeman tilt, trap and any Rabi coupling, evaluated at the
    step midpoint) and another half kinetic step.  Instantaneous coin pulses
    are applied at the step boundary equal to their time; pulse edges must
    fall on step boundaries.

    Raises
    ------
    BlowupError
        If the wavefunction becomes non-finite (checked every 100 steps).
    """
    return _propagate(state, schedule, dt, n_steps, nonlinear=False)


def step_gpe(state: SpinorField, schedule: DriveSchedule, dt, n_steps,
             collapse_factor=100.0) -> SpinorField:
    """As :func:`step_real` with the mean-field term ``g (|psi1|^2 + |psi2|^2)``.

    The density entering the potential step is predicted by the first half
    kinetic step and stays exact through the potential step, which only
    changes phases; the scheme is second order and norm conserving.

    Raises
    ------
    CollapseError
        If the peak density exceeds ``collapse_factor`` times its initial value.
    """
    return _propagate(state, schedule, dt, n_steps, nonlinear=True, collapse_factor=collapse_factor)


def evolve(state: SpinorField, schedule: DriveSchedule, t_final, dt_max, nonlinear=False,
           on_interval=None):
    """Evolve to ``t_final``, splitting the time span at pulse edges and ramp joins.

    Each sub-interval uses the largest step not exceeding ``dt_max`` that
    tiles it exactly.  ``on_interval(state)`` is called after every
    sub-interval.  Pulses at ``t_final`` itself are not applied.
    """
    if t_final < state.time:
        raise InvalidParameterError("t_final", "cannot evolve backwards")
    cuts = [state.time] + [t for t in schedule.breakpoints() if state.time < t < t_final] + [t_final]
    for a, b in zip(cuts, cuts[1:]):
        span = b - a
        if span <= 0:
            continue
        n = max(1, math.ceil(span / dt_max - 1e-9))
        state = _propagate(replace(state, time=a), schedule, span / n, n, nonlinear)
        state = replace(state, time=b)
        if on_interval is not None:
            on_interval(state)
    return state


# ---------------------------------------------------------------------------
# imaginary time


def energy(state: SpinorField, schedule: DriveSchedule, t=None, nonlinear=True):
    """Energy functional (kinetic + potential + interaction/2) per unit norm."""
    grid = state.grid
    t = state.time if t is None else t
    V0, F0, omega, g = schedule.at(t)
    psi = state.psi
    nrm = state.norm()
    pk = np.abs(np.fft.fft(psi, axis=-1)) ** 2
    e_kin = np.sum(pk * grid.kinetic) / grid.n_points * grid.dx
    v1, v2 = _potentials(grid, grid.x, _lattice_profile(grid), V0, F0, omega, schedule.x_bar)
    d1, d2 = np.abs(psi[0]) ** 2, np.abs(psi[1]) ** 2
    e_pot = np.sum(v1 * d1 + v2 * d2) * grid.dx
    e_int = 0.5 * g * np.sum((d1 + d2) ** 2) * grid.dx / nrm if (nonlinear and g) else 0.0
    return float((e_kin + e_pot + e_int) / nrm)


def _imag_steps(psi, grid, v_lin, g, dt, n):
    half_kin = np.exp(-0.5 * grid.kinetic * dt)
    dx = grid.dx
    for _ in range(n):
        psi = np.fft.ifft(half_kin * np.fft.fft(psi))
        v = v_lin + g * np.abs(psi) ** 2 if g else v_lin
        psi = psi * np.exp(-v * dt)
        psi = np.fft.ifft(half_kin * np.fft.fft(psi))
        psi = psi / math.sqrt(np.sum(np.abs(psi) ** 2) * dx)
    return psi


def _lanczos_ground(grid, v, psi0, tol=1e-13):
    """Ground state of the linear grid Hamiltonian by Lanczos iteration."""
    kin = grid.kinetic[: grid.n_points // 2 + 1]
    n_pts = grid.n_points

    def matvec(u):
        u = np.ravel(u)
        return np.fft.irfft(kin * np.fft.rfft(u), n_pts) + v * u

    op = LinearOperator((n_pts, n_pts), matvec=matvec, dtype=float)
    try:
        _, vec = eigsh(op, k=1, which="SA", v0=np.abs(psi0), tol=tol, maxiter=20 * n_pts)
    except ArpackNoConvergence as exc:
        raise ConvergenceError(f"Lanczos eigensolver did not converge: {exc}") from exc
    psi = vec[:, 0]
    psi *= np.sign(np.sum(psi)) or 1.0
    return psi / math.sqrt(np.sum(psi ** 2) * grid.dx)


def _newton_polish(grid, v, g, psi, f_tol=1e-11):
    """Solve ``H psi + g psi^3 = mu psi`` with unit norm by Newton-Krylov.

    The unknowns are the real field and ``mu``; the inner solver is
    preconditioned by the inverse kinetic energy.
    """
    n_pts = grid.n_points
    dx = grid.dx
    kin = grid.kinetic[: n_pts // 2 + 1]
    pre = 1.0 / (kin + 1.0 + float(np.max(v) - np.min(v)))

    def h(u):
        return np.fft.irfft(kin * np.fft.rfft(u), n_pts) + v * u + g * u ** 3

    def residual(z):
        u, mu = z[:-1], z[-1]
        return np.concatenate([h(u) - mu * u, [0.5 * (np.sum(u * u) * dx - 1.0)]])

    def precondition(r):
        r = np.ravel(r)
        out = r.copy()
        out[:-1] = np.fft.irfft(pre * np.fft.rfft(r[:-1]), n_pts)
        return out

    psi = np.real(psi)
    z0 = np.concatenate([psi, [np.sum(psi * h(psi)) * dx]])
    try:
        z = newton_krylov(residual, z0, f_tol=f_tol, method="gmres", inner_maxiter=200,
                          line_search=None, maxiter=100,
                          inner_M=LinearOperator((n_pts + 1, n_pts + 1), matvec=precondition))
    except NoConvergence as exc:
        raise ConvergenceError(f"Newton-Krylov ground-state polish did not converge: {exc}") from exc
    return z[:-1]


def _real_energy(grid, psi, v, g):
    pk = np.abs(np.fft.rfft(psi)) ** 2
    w = np.full(pk.shape, 2.0)
    w[0] = 1.0
    if grid.n_points % 2 == 0:
        w[-1] = 1.0
    kin = grid.kinetic[: len(pk)]
    e_kin = np.sum(w * pk * kin) / grid.n_points * grid.dx
    d = psi ** 2
    return float(e_kin + np.sum(v * d) * grid.dx + 0.5 * g * np.sum(d * d) * grid.dx)


def ground_state_imaginary_time(grid: Grid, schedule: DriveSchedule, t=0.0, tolerance=1e-12,
                                initial=None, dt_ladder=None, check_every=50,
                                max_steps=400_000, nonlinear=True, polish=True):
    """Lowest-energy state of spin component 1 for the Hamiltonian at time ``t``.

    The linear problem is solved by Lanczos iteration.  With interactions the
    linear solution (or ``initial``) is relaxed by imaginary-time split-step
    propagation along ``dt_ladder``, default one coarse rung of 0.5; a rung
    ends once the energy changes by less than ``tolerance`` per step,
    averaged over ``check_every`` steps.  A Newton-Krylov solve of the
    stationary equation then removes the splitting bias.  The returned state
    has only spin-1 population.

    Raises
    ------
    InvalidParameterError
        Without any confinement (no lattice and no trap).
    ConvergenceError
        If a rung does not converge within ``max_steps`` steps.
    """
    V0, F0, omega, g = schedule.at(t)
    if not (V0 > 0 or omega > 0):
        raise InvalidParameterError("omega_x", "ground state needs a lattice or a trap")
    if not nonlinear:
        g = 0.0
    v1, _ = _potentials(grid, grid.x, _lattice_profile(grid), V0, F0, omega, schedule.x_bar)
    if initial is None:
        sigma = math.sqrt(1.0 / (np.pi ** 2 * omega)) if omega > 0 else grid.length / 8
        guess = gaussian_state(grid, min(sigma, grid.length / 8)).psi[0]
    else:
        guess = np.asarray(initial.psi[0])
        if not np.any(guess):
            raise InvalidParameterError("initial", "spin-1 component is zero")
    if initial is None or not g:
        psi = _lanczos_ground(grid, v1, guess).astype(complex)
    else:
        psi = guess.astype(complex)
    psi = psi / math.sqrt(np.sum(np.abs(psi) ** 2) * grid.dx)
    sched = replace(schedule, pulses=())
    if dt_ladder is None:
        dt_ladder = (0.5,) if g else ()

    def e_of(p):
        st = SpinorField(grid, np.stack([p, np.zeros_like(p)]), t)
        return energy(st, sched, t, nonlinear=bool(g))

    for dt in (dt_ladder if polish else ()):
        e_old = e_of(psi)
        steps = 0
        while True:
            psi = _imag_steps(psi, grid, v1, g, dt, check_every)
            steps += check_every
            e_new = e_of(psi)
            if not math.isfinite(e_new):
                raise ConvergenceError(f"energy became non-finite at dt={dt}")
            if abs(e_new - e_old) / check_every < tolerance:
                break
            if steps >= max_steps:
                raise ConvergenceError(
                    f"no convergence after {steps} steps at dt={dt}: dE/step={abs(e_new - e_old) / check_every:.3g}")
            e_old = e_new
    if polish and g:
        psi = _newton_polish(grid, v1, g, psi).astype(complex)
    return SpinorField(grid, np.stack([psi, np.zeros_like(psi)]), t)
