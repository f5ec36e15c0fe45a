"""Physical constants, rescaled units and validated parameter containers.

All simulation code works in lattice units: lengths in ``d_L``,
quasimomenta in ``k_R = pi/d_L``, energies in the recoil energy
``E_R = (hbar k_R)^2 / 2M`` and times in ``hbar/E_R``.  In these units the
kinetic energy of a plane wave with wavenumber ``q`` (per ``d_L``) is
``(q/pi)^2`` and a full Brillouin zone has width 2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from scipy import constants as sc

from .errors import InvalidParameterError

RB87_MASS = 86.909180527 * sc.atomic_mass


@dataclass(frozen=True)
class PhysicalConstants:
    """Species and field constants (SI units).

    ``mf_gf`` is the product m_F g_F of one internal state; the other state
    carries the opposite sign.
    """

    hbar: float = sc.hbar
    mass: float = RB87_MASS
    bohr_magneton: float = sc.physical_constants["Bohr magneton"][0]
    mf_gf: float = 0.5

    def __post_init__(self):
        for name in ("hbar", "mass", "bohr_magneton"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(name, "must be strictly positive")
        if self.mf_gf == 0 or not math.isfinite(self.mf_gf):
            raise InvalidParameterError("mf_gf", "must be a nonzero finite number")


RB87 = PhysicalConstants()


def recoil_energy(d_lattice, constants=RB87):
    """Recoil energy ``(hbar pi / d_L)^2 / 2M`` in joules."""
    if not d_lattice > 0:
        raise InvalidParameterError("d_lattice", "must be positive")
    k_r = math.pi / d_lattice
    return (constants.hbar * k_r) ** 2 / (2.0 * constants.mass)


def time_unit(d_lattice, constants=RB87):
    """Duration in seconds of one rescaled time unit ``hbar/E_R``."""
    return constants.hbar / recoil_energy(d_lattice, constants)


def g1d_rescaled(scattering_length, omega_r, n_atoms, d_lattice, constants=RB87):
    """1-D coupling ``2 hbar a_s omega_r N`` in units of ``E_R d_L``.

    The wavefunction entering the nonlinear term is normalized to one, so
    the atom number is carried by the coupling constant.
    """
    g = 2.0 * constants.hbar * scattering_length * omega_r * n_atoms
    return g / (recoil_energy(d_lattice, constants) * d_lattice)


@dataclass(frozen=True)
class LatticeConfig:
    """Lattice and trap parameters.

    ``V0``, ``F0``, ``x_bar``, ``g1d`` and ``tau0`` are already in lattice
    units (E_R, E_R/d_L, d_L, E_R d_L, hbar/E_R); the trap frequencies are in
    rad/s and ``d_lattice`` in metres.
    """

    d_lattice: float = 532e-9
    V0: float = 20.0
    F0: float = 0.2
    x_bar: float = 0.0
    omega_x: float = 2 * math.pi * 10.0
    omega_r: float = 2 * math.pi * 100.0
    g1d: float = 0.0
    tau0: float = math.pi / 2

    def __post_init__(self):
        if not self.d_lattice > 0:
            raise InvalidParameterError("d_lattice", "must be positive")
        if not self.tau0 > 0:
            raise InvalidParameterError("tau0", "must be positive")
        if not self.V0 >= 0:
            raise InvalidParameterError("V0", "lattice depth must be non-negative")
        if not self.omega_x >= 0:
            raise InvalidParameterError("omega_x", "must be non-negative")
        if not self.omega_r >= self.omega_x:
            raise InvalidParameterError("omega_r", "radial frequency must be >= omega_x")


@dataclass(frozen=True)
class RescaledParams:
    V0: float
    F0: float
    tau0: float
    delta_k0: float
    omega_x0: float
    omega_r0: float
    x_bar: float
    g1d: float


def to_rescaled(config: LatticeConfig, constants: PhysicalConstants = RB87) -> RescaledParams:
    """Express ``config`` fully in lattice units.

    The step size follows from the acceleration theorem,
    ``delta_k0 = F0 tau0 / pi``.
    """
    if not config.d_lattice > 0:
        raise InvalidParameterError("d_lattice", "must be positive")
    if not config.tau0 > 0:
        raise InvalidParameterError("tau0", "must be positive")
    t_unit = time_unit(config.d_lattice, constants)
    return RescaledParams(
        V0=config.V0,
        F0=config.F0,
        tau0=config.tau0,
        delta_k0=config.F0 * config.tau0 / math.pi,
        omega_x0=config.omega_x * t_unit,
        omega_r0=config.omega_r * t_unit,
        x_bar=config.x_bar,
        g1d=config.g1d,
    )


def from_rescaled(params: RescaledParams, d_lattice, constants: PhysicalConstants = RB87):
    """Inverse of :func:`to_rescaled` for a given lattice constant."""
    t_unit = time_unit(d_lattice, constants)
    return LatticeConfig(
        d_lattice=d_lattice,
        V0=params.V0,
        F0=params.F0,
        x_bar=params.x_bar,
        omega_x=params.omega_x0 / t_unit,
        omega_r=params.omega_r0 / t_unit,
        g1d=params.g1d,
        tau0=params.tau0,
    )


def depth_in_recoils(depth_joules, d_lattice, constants=RB87):
    return depth_joules / recoil_energy(d_lattice, constants)


def force_in_lattice_units(force_newton, d_lattice, constants=RB87):
    return force_newton * d_lattice / recoil_energy(d_lattice, constants)


@dataclass(frozen=True)
class WalkGeometry:
    """Sites of a walk filling the Brillouin zone.

    ``n_sites * delta_k0 == 2`` holds exactly: ``delta_k0`` is derived from
    ``n_sites`` rather than stored.
    """

    n_sites: int
    steps: int = 0
    _dk: Fraction = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not isinstance(self.n_sites, int) or self.n_sites <= 0 or self.n_sites % 2:
            raise InvalidParameterError("n_sites", f"must be a positive even integer, got {self.n_sites!r}")
        if not isinstance(self.steps, int) or self.steps < 0:
            raise InvalidParameterError("steps", f"must be a non-negative integer, got {self.steps!r}")
        object.__setattr__(self, "_dk", Fraction(2, self.n_sites))

    @property
    def delta_k_exact(self) -> Fraction:
        return self._dk

    @property
    def delta_k0(self) -> float:
        return float(self._dk)

    @property
    def confined(self) -> bool:
        """True when a walker started at k=0 never reaches the zone edge twice."""
        return 2 * self.steps <= self.n_sites

    def tau0_for(self, F0):
        """Step duration giving this step size at force ``F0``."""
        if F0 == 0:
            raise InvalidParameterError("F0", "zero force cannot produce a finite step")
        return math.pi * self.delta_k0 / F0


def walk_geometry_for(n_sites, full_coverage_steps, require_confinement=False):
    """Geometry with ``delta_k0 = 2/n_sites`` and the given step count.

    With ``require_confinement`` the walk must stay inside the zone,
    ``steps * delta_k0 <= 1`` (equivalently ``steps <= n_sites/2``).
    """
    geom = WalkGeometry(n_sites, full_coverage_steps)
    if require_confinement and not geom.confined:
        raise InvalidParameterError(
            "steps", f"{full_coverage_steps} steps leave the zone for n_sites={n_sites}")
    return geom
