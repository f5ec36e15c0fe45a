"""End-to-end experimental sequence on the continuum simulator.

Stages (all times in hbar/E_R):

1. ground state of the shallow harmonic trap (spin 1 only);
2. free expansion followed by a harmonic kick that removes the
   position-momentum correlation (delta-kick collimation);
3. lattice and force ramp-up, the force integral sweeping exactly one zone;
4. spin preparation pulse;
5. ``j`` walk steps, each a coin pulse followed by ``tau0`` of free
   Bloch motion;
6. ramp-down (mirror of stage 3); the folded quasimomentum distribution
   is read out here;
7. a quarter period in the harmonic trap maps momentum onto position.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .band import compute_bands, landau_zener_check, peierls_phases, with_connection
from .errors import InvalidParameterError, NumericalError
from .idealwalk import WalkOperatorSpec, center_site, single_site_state, walk_evolve
from .observables import SiteDistribution, bin_probabilities, site_distribution, total_variation
from .propagator import (DriveSchedule, Grid, Profile, Segment, SpinorField,
                         coin_matrix, evolve, ground_state_imaginary_time)
from .units import RB87, LatticeConfig, PhysicalConstants, WalkGeometry, to_rescaled

__all__ = [
    "ProtocolConfig",
    "StageRecord",
    "ProtocolResult",
    "run_protocol",
    "free_flight",
    "phase_space_covariance",
    "solve_kick_time",
    "delta_kick_cool",
    "quarter_period_map",
    "mapped_site_distribution",
    "reference_distribution",
    "ramp_duration_for",
    "GPEWalkResult",
    "run_gpe_walk",
]

MASS = math.pi ** 2 / 2  # particle mass in lattice units (hbar = 1)


# ---------------------------------------------------------------------------
# building blocks


def free_flight(state: SpinorField, t):
    """Exact free evolution (no potential) for time ``t``."""
    if t == 0:
        return state
    prop = np.exp(-1j * state.grid.kinetic * t)
    psi = np.fft.ifft(prop * np.fft.fft(state.psi, axis=-1), axis=-1)
    return SpinorField(state.grid, psi, state.time + t)


def phase_space_covariance(state: SpinorField):
    """Second moments ``(Sxx, Sxq, Sqq)`` of position and wavenumber."""
    grid = state.grid
    x = grid.x
    dx = grid.dx
    psi = state.psi
    nrm = state.norm()
    dens = np.sum(np.abs(psi) ** 2, axis=0) * dx / nrm
    mx = np.sum(dens * x)
    sxx = np.sum(dens * (x - mx) ** 2)
    phi = np.fft.fft(psi, axis=-1)
    pk = np.sum(np.abs(phi) ** 2, axis=0)
    pk /= pk.sum()
    q = grid.q
    mq = np.sum(pk * q)
    sqq = np.sum(pk * (q - mq) ** 2)
    dpsi = np.fft.ifft(1j * q * phi, axis=-1)
    # symmetrized <x q> = Re <psi| x (-i d/dx) |psi>
    xq = np.sum((np.conj(psi) * (x - mx) * (-1j) * dpsi).real) * dx / nrm
    return float(sxx), float(xq), float(sqq)


def _harmonic_matrix(omega, t):
    c, s = math.cos(omega * t), math.sin(omega * t)
    return np.array([[c, s / (MASS * omega)], [-MASS * omega * s, c]])


def solve_kick_time(cov, omega):
    """Shortest harmonic-trap time that zeroes the position-momentum correlation.

    ``cov = (Sxx, Sxq, Sqq)`` before the kick; Gaussian (ABCD) propagation
    of the covariance through the trap rotation.  Returns 0 if the input is
    already uncorrelated or anti-correlated.
    """
    sxx, sxq, sqq = cov
    if sxq <= 1e-14 * math.sqrt(sxx * sqq):
        return 0.0
    s = np.array([[sxx, sxq], [sxq, sqq]])

    def corr(t):
        m = _harmonic_matrix(omega, t)
        return (m @ s @ m.T)[0, 1]

    t_hi = math.pi / (2 * omega)
    return float(brentq(corr, 0.0, t_hi, xtol=1e-12))


def delta_kick_cool(state: SpinorField, omega_x, t_expand, t_kick=None, dt=0.05):
    """Free expansion for ``t_expand`` then a harmonic pulse of length ``t_kick``.

    ``omega_x`` is the trap frequency of the pulse (units E_R/hbar).  With
    ``t_kick=None`` the pulse length solves the lens condition exactly for
    the covariance of the expanded state.  Returns ``(state, t_kick)``.
    """
    expanded = free_flight(state, t_expand)
    if t_kick is None:
        t_kick = solve_kick_time(phase_space_covariance(expanded), omega_x) if t_expand > 0 else 0.0
    if t_kick <= 0:
        return expanded, 0.0
    sched = DriveSchedule.static(omega=omega_x)
    return evolve(expanded, sched, expanded.time + t_kick, dt), t_kick


def quarter_period_map(state: SpinorField, omega_x, fraction=0.25, dt=0.05):
    """Evolve in the harmonic trap alone for ``fraction`` of its period.

    A quarter period maps wavenumber ``q`` to position ``x = q/(M omega)``,
    i.e. quasimomentum ``k`` (units k_R) to ``x = 2k/(pi omega)``.
    """
    if not omega_x > 0:
        raise InvalidParameterError("omega_x", "mapping needs a harmonic trap")
    t = fraction * 2 * math.pi / omega_x
    sched = DriveSchedule.static(omega=omega_x)
    return evolve(state, sched, state.time + t, dt)


def mapped_site_distribution(state: SpinorField, omega_x, geometry: WalkGeometry):
    """Site distribution read from the position density after the quarter-period map.

    Positions are converted to ``k = pi omega x / 2``, folded into the zone
    and binned on the walk sites.
    """
    grid = state.grid
    dens = state.density()
    k = math.pi * omega_x * grid.x / 2
    dk = geometry.delta_k0
    # site i is centred on -1 + (i+1) dk
    idx = np.floor((k + 1 - dk / 2) / dk).astype(int) % geometry.n_sites
    p = np.bincount(idx, weights=dens, minlength=geometry.n_sites)
    total = p.sum()
    ks = -1 + np.arange(1, geometry.n_sites + 1) * dk
    return SiteDistribution(ks, p / total, float(total * grid.dx - 1.0))


def ramp_duration_for(F0, force_delay=0.1):
    """Ramp length whose smoothstep force integral sweeps exactly one zone.

    The force rises over the last ``1 - force_delay`` of the window with
    mean value ``F0/2``; one zone needs ``int F dt = 2 pi``.
    """
    if F0 <= 0:
        raise InvalidParameterError("F0", "ramps need a positive force")
    return 4 * math.pi / (F0 * (1 - force_delay))


# ---------------------------------------------------------------------------
# configuration and result


@dataclass(frozen=True)
class ProtocolConfig:
    """Parameters of a full run.

    ``t_expand`` defaults to the time giving ``expansion_factor`` for a
    minimum-uncertainty Gaussian of the prepared width; ``t_kick`` defaults
    to the exact lens solution; ``ramp_duration`` to
    :func:`ramp_duration_for`.  ``reference`` selects the ideal walk used
    for comparison: ``"ideal"`` (no link phases) or ``"dynamical-phases"``.
    """

    lattice: LatticeConfig = field(default_factory=LatticeConfig)
    geometry: WalkGeometry = field(default_factory=lambda: WalkGeometry(20, 10))
    alpha: float = math.pi / 2
    prep_alpha: float = math.pi / 2
    prep_phase: float = -math.pi / 2
    expansion_factor: float = 3.0
    t_expand: float | None = None
    t_kick: float | None = None
    ramp_duration: float | None = None
    force_delay: float = 0.1
    nonlinear: bool = False
    n_points: int = 8192
    points_per_site: int = 16
    dt_lattice: float = 0.005
    dt_free: float = 0.05
    reference: str = "ideal"
    record_frames: bool = False
    frame_bins: int = 400
    constants: PhysicalConstants = RB87

    def __post_init__(self):
        if self.reference not in ("ideal", "dynamical-phases"):
            raise InvalidParameterError("reference", f"unknown reference {self.reference!r}")
        if not 0 <= self.force_delay < 1:
            raise InvalidParameterError("force_delay", "must lie in [0, 1)")
        if self.expansion_factor < 1:
            raise InvalidParameterError("expansion_factor", "must be >= 1")
        if self.lattice.F0 <= 0:
            raise InvalidParameterError("F0", "the walk needs a positive force")
        if self.lattice.omega_x <= 0:
            raise InvalidParameterError("omega_x", "preparation and readout need a harmonic trap")
        for name in ("dt_lattice", "dt_free"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(name, "must be positive")

    @property
    def tau0(self):
        return self.geometry.tau0_for(self.lattice.F0)


@dataclass(frozen=True)
class StageRecord:
    name: str
    t_end: float
    norm: float
    position_width: float
    momentum_width: float


@dataclass
class ProtocolResult:
    config: ProtocolConfig
    stages: list
    parameters: dict
    walk_distribution: SiteDistribution      # folded, before ramp-down
    readout_distribution: SiteDistribution   # folded, after ramp-down
    mapped_distribution: SiteDistribution    # from the quarter-period position density
    reference: np.ndarray
    final_state: SpinorField
    frames: list = field(default_factory=list)

    @property
    def tv_readout(self):
        return total_variation(self.readout_distribution.probabilities, self.reference)

    @property
    def tv_mapped(self):
        return total_variation(self.mapped_distribution.probabilities, self.reference)

    @property
    def tv_chain(self):
        """Walk distribution before ramp-down against the quarter-period readout."""
        return total_variation(self.walk_distribution.probabilities, self.mapped_distribution.probabilities)

    def summary(self):
        return {
            "tv_readout": self.tv_readout,
            "tv_mapped": self.tv_mapped,
            "tv_chain": self.tv_chain,
            "stages": [s.__dict__ for s in self.stages],
            "parameters": self.parameters,
        }


def reference_distribution(config: ProtocolConfig):
    """Ideal-walk site distribution matching the run's coin and spin preparation."""
    geom = config.geometry
    spinor = coin_matrix(config.prep_alpha, config.prep_phase) @ np.array([1.0, 0.0])
    start = single_site_state(geom, center_site(geom), spinor)
    table = None
    if config.reference == "dynamical-phases":
        p = to_rescaled(config.lattice, config.constants)
        bands = with_connection(compute_bands(p.V0))
        table = peierls_phases(bands, geom, p.F0, config.tau0, p.x_bar)
    spec = WalkOperatorSpec(alpha=config.alpha, table=table, boundary="ring")
    return walk_evolve(start, spec, geom.steps).probabilities()


def _smooth(t0, t1, a, b):
    return Segment(t0, t1, "smoothstep", a, b)


def _annotate(exc, stage):
    exc.stage = stage
    exc.args = (f"[stage {stage}] {exc.args[0] if exc.args else exc}",) + tuple(exc.args[1:])
    return exc


def run_protocol(config: ProtocolConfig, progress=None) -> ProtocolResult:
    """Run all seven stages and compare the readout with the ideal walk.

    Raises
    ------
    NumericalError
        From the propagator, with the failing stage in ``exc.stage``.
    """
    p = to_rescaled(config.lattice, config.constants)
    geom = config.geometry
    tau0 = config.tau0
    if not math.isclose(p.F0 * tau0 / math.pi, geom.delta_k0, rel_tol=1e-12):
        raise InvalidParameterError("tau0", "step duration inconsistent with the site spacing")
    ratio, status = landau_zener_check(p.V0, p.F0)
    if status != "safe":
        warnings.warn(f"Landau-Zener margin {ratio:.3g} is below the safe threshold", stacklevel=2)

    grid = Grid(config.n_points, config.points_per_site)
    omega = p.omega_x0
    g = p.g1d if config.nonlinear else 0.0
    stages = []
    frames = []

    def note(name, st):
        stages.append(StageRecord(name, st.time, st.norm(), st.position_width(), st.momentum_width()))
        if progress is not None:
            progress(name, st)

    def frame(stage, st):
        if config.record_frames:
            edges = np.linspace(-1, 1, config.frame_bins + 1)
            frames.append({"stage": stage, "time": st.time, "position_density": st.density(),
                           "quasimomentum_density": bin_probabilities(st, edges)})

    stage = "prepare"
    try:
        # (1) trap ground state
        st = ground_state_imaginary_time(grid, DriveSchedule.static(omega=omega, g=g), nonlinear=bool(g))
        note(stage, st)
        frame(stage, st)

        # (2) collimation
        stage = "collimate"
        sigma0 = st.position_width()
        t_sigma = math.pi ** 2 * sigma0 ** 2
        t_expand = config.t_expand if config.t_expand is not None else \
            t_sigma * math.sqrt(config.expansion_factor ** 2 - 1)
        if g:
            sched = DriveSchedule.static(g=g)
            st = evolve(st, sched, st.time + t_expand, config.dt_free, nonlinear=True)
            t_kick = config.t_kick if config.t_kick is not None else \
                solve_kick_time(phase_space_covariance(st), omega)
            st = evolve(st, DriveSchedule.static(omega=omega, g=g), st.time + t_kick, config.dt_free,
                        nonlinear=True)
        else:
            st, t_kick = delta_kick_cool(st, omega, t_expand, config.t_kick, config.dt_free)
        note(stage, st)
        frame(stage, st)

        # (3)-(6) lattice stages on one schedule
        T = config.ramp_duration if config.ramp_duration is not None else \
            ramp_duration_for(p.F0, config.force_delay)
        t0 = st.time
        t_walk = t0 + T
        t_down = t_walk + geom.steps * tau0
        t_end = t_down + T
        d = config.force_delay * T
        V = Profile((_smooth(t0, t_walk, 0.0, p.V0), Segment(t_walk, t_down, "constant", p.V0, p.V0),
                     _smooth(t_down, t_end, p.V0, 0.0)))
        F = Profile((Segment(t0, t0 + d, "constant", 0.0, 0.0), _smooth(t0 + d, t_walk, 0.0, p.F0),
                     Segment(t_walk, t_down, "constant", p.F0, p.F0), _smooth(t_down, t_end - d, p.F0, 0.0),
                     Segment(t_end - d, t_end, "constant", 0.0, 0.0)))
        sched = DriveSchedule(V, F, Profile.constant(0.0), Profile.constant(g), p.x_bar, ())

        stage = "ramp-up"
        st = evolve(st, sched, t_walk, config.dt_lattice, nonlinear=bool(g))
        note(stage, st)
        frame(stage, st)

        stage = "spin-preparation"
        st = replace(st, psi=coin_matrix(config.prep_alpha, config.prep_phase) @ st.psi)
        note(stage, st)

        stage = "walk"
        for s in range(geom.steps):
            st = replace(st, psi=coin_matrix(config.alpha) @ st.psi)
            st = evolve(st, sched, t_walk + (s + 1) * tau0, config.dt_lattice, nonlinear=bool(g))
            frame(stage, st)
        st = replace(st, time=t_down)
        note(stage, st)
        walk_dist = site_distribution(st, geom)

        stage = "ramp-down"
        st = evolve(st, sched, t_end, config.dt_lattice, nonlinear=bool(g))
        note(stage, st)
        frame(stage, st)
        readout = site_distribution(st, geom)

        stage = "quarter-period"
        st = quarter_period_map(st, omega, dt=config.dt_free)
        note(stage, st)
        frame(stage, st)
        mapped = mapped_site_distribution(st, omega, geom)
    except NumericalError as exc:
        raise _annotate(exc, stage)

    params = {
        "V0": p.V0, "F0": p.F0, "tau0": tau0, "delta_k0": geom.delta_k0, "omega_x0": omega,
        "g1d": g, "x_bar": p.x_bar, "t_expand": t_expand, "t_kick": t_kick, "ramp_duration": T,
        "force_delay": config.force_delay, "landau_zener_ratio": ratio, "n_points": grid.n_points,
        "points_per_site": grid.points_per_site, "dt_lattice": config.dt_lattice, "dt_free": config.dt_free,
        "reference": config.reference,
    }
    return ProtocolResult(config, stages, params, walk_dist, readout, mapped,
                          reference_distribution(config), st, frames)


# ---------------------------------------------------------------------------
# mean-field walk starting from the lattice ground state


@dataclass
class GPEWalkResult:
    g1d: float
    initial_state: SpinorField
    final_state: SpinorField
    initial_distribution: SiteDistribution
    distribution: SiteDistribution
    initial_peak_width: float
    peak_width: float


def run_gpe_walk(V0=10.0, F0=0.2, omega_x0=None, g1d=0.0, geometry=None, alpha=math.pi / 2,
                 prep_alpha=math.pi / 2, prep_phase=-math.pi / 2, nonlinear=True, n_points=4096,
                 points_per_site=8, dt=0.005, x_bar=0.0):
    """Walk of a condensate prepared in the lattice plus trap ground state.

    The ground state (with interaction ``g1d``) is computed at depth ``V0``
    in the trap ``omega_x0``; the force is then switched on suddenly, a
    preparation pulse applied and ``geometry.steps`` walk steps performed
    with lattice, trap and interaction kept on.  ``nonlinear=False`` runs
    the same sequence with the linear propagator.
    """
    from .observables import peak_width

    geometry = WalkGeometry(20, 10) if geometry is None else geometry
    if omega_x0 is None:
        omega_x0 = to_rescaled(LatticeConfig(omega_x=2 * math.pi * 2.5)).omega_x0
    grid = Grid(n_points, points_per_site)
    use_g = nonlinear and g1d != 0
    prep = DriveSchedule.static(V0=V0, omega=omega_x0, g=g1d if use_g else 0.0, x_bar=x_bar)
    st = ground_state_imaginary_time(grid, prep, nonlinear=use_g)
    init = st
    tau0 = geometry.tau0_for(F0)
    sched = DriveSchedule.static(V0=V0, F0=F0, omega=omega_x0, g=g1d if use_g else 0.0, x_bar=x_bar)
    st = replace(st, psi=coin_matrix(prep_alpha, prep_phase) @ st.psi)
    for s in range(geometry.steps):
        st = replace(st, psi=coin_matrix(alpha) @ st.psi)
        st = evolve(st, sched, (s + 1) * tau0, dt, nonlinear=nonlinear)
    return GPEWalkResult(
        g1d, init, st, site_distribution(init, geometry), site_distribution(st, geometry),
        peak_width(init, geometry), peak_width(st, geometry))
