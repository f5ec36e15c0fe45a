"""Bloch bands of the ``V0 sin^2(pi x)`` lattice and the walk's Peierls phases.

Bloch functions are expanded in plane waves ``exp(i pi (k + 2m) x)`` with
``|m| <= m_max``.  In lattice units the Bloch Hamiltonian at quasimomentum
``k`` is tridiagonal: ``(k + 2m)^2 + V0/2`` on the diagonal and ``-V0/4`` on
the first off-diagonals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import GaugeSingularityError, InvalidParameterError, NumericalError
from .units import WalkGeometry

__all__ = [
    "BandData",
    "PeierlsTable",
    "bloch_hamiltonian",
    "compute_bands",
    "berry_zak_connection",
    "peierls_phases",
    "flat_band",
    "landau_zener_check",
    "wrap_phase",
    "with_connection",
    "site_quasimomenta",
    "zone_grid",
]


def wrap_phase(phi):
    """Map phases to the interval (-pi, pi]."""
    phi = np.asarray(phi, dtype=float)
    out = -np.remainder(-phi + np.pi, 2 * np.pi) + np.pi
    return out if out.ndim else float(out)


def zone_grid(n_k):
    """Uniform quasimomenta covering (-1, 1]; the last point is the zone edge."""
    return -1.0 + 2.0 * np.arange(1, n_k + 1) / n_k


def bloch_hamiltonian(k, V0, m_max):
    """Plane-wave Bloch Hamiltonian at quasimomentum ``k`` (real symmetric)."""
    m = np.arange(-m_max, m_max + 1)
    h = np.diag((k + 2.0 * m) ** 2 + V0 / 2.0)
    off = np.full(2 * m_max, -V0 / 4.0)
    h += np.diag(off, 1) + np.diag(off, -1)
    return h


@dataclass(frozen=True)
class BandData:
    """Band energies and periodic-part coefficients on a closed k grid.

    ``states[i, :, b]`` holds the plane-wave coefficients of band ``b`` at
    ``k_samples[i]``.  ``connection`` (Berry-Zak connection per unit ``k_R``)
    refers to ``band_index`` and is ``None`` until computed.
    """

    V0: float
    m_max: int
    k_samples: np.ndarray
    energies: np.ndarray
    states: np.ndarray
    band_index: int = 0
    connection: np.ndarray | None = None
    zak_phase: float | None = None

    @property
    def n_k(self):
        return len(self.k_samples)

    @property
    def n_bands(self):
        return self.energies.shape[1]

    def width(self, band=0):
        e = self.energies[:, band]
        return float(e.max() - e.min())

    def energy_spline(self, band=None):
        band = self.band_index if band is None else band
        return _periodic_spline(self.k_samples, self.energies[:, band])

    def connection_spline(self):
        if self.connection is None:
            raise NumericalError("Berry-Zak connection has not been computed")
        return _periodic_spline(self.k_samples, self.connection)


def _periodic_spline(k, values):
    # CubicSpline wants the period closed explicitly: prepend k=-1 as a copy of k=1.
    kk = np.concatenate(([k[-1] - 2.0], k))
    vv = np.concatenate(([values[-1]], values))
    return CubicSpline(kk, vv, bc_type="periodic", extrapolate="periodic")


def compute_bands(V0, m_max=32, n_k=512, n_bands=4, band_index=0):
    """Diagonalize the Bloch Hamiltonian on ``n_k`` quasimomenta in (-1, 1].

    Eigenvectors are returned in a real gauge with ``sum_m c_m >= 0`` (the
    periodic part is non-negative at a lattice minimum), which is smooth
    inside the zone for the lowest band.

    Raises
    ------
    InvalidParameterError
        If the basis or grid is too small or more bands are requested than
        the basis supports.
    NumericalError
        If the eigensolver fails.
    """
    if m_max < 8:
        raise InvalidParameterError("m_max", f"must be >= 8, got {m_max}")
    if n_k < 16:
        raise InvalidParameterError("n_k", f"must be >= 16, got {n_k}")
    if not 1 <= n_bands <= m_max:
        raise InvalidParameterError("n_bands", f"must be in [1, m_max], got {n_bands}")
    if not 0 <= band_index < n_bands:
        raise InvalidParameterError("band_index", "must index one of the computed bands")
    if V0 < 0:
        raise InvalidParameterError("V0", "must be non-negative")

    k = zone_grid(n_k)
    dim = 2 * m_max + 1
    energies = np.empty((n_k, n_bands))
    states = np.empty((n_k, dim, n_bands))
    for i, ki in enumerate(k):
        h = bloch_hamiltonian(ki, V0, m_max)
        try:
            w, v = np.linalg.eigh(h)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"eigensolver failed at k={ki:.6g}, V0={V0}: {exc}") from exc
        v = v[:, :n_bands]
        sums = v.sum(axis=0)
        signs = np.where(sums < 0, -1.0, 1.0)
        energies[i] = w[:n_bands]
        states[i] = v * signs
    return BandData(V0=float(V0), m_max=m_max, k_samples=k, energies=energies,
                    states=states, band_index=band_index)


def _shift_to_next_zone(c):
    # u_{k+2}(x) = exp(-2 pi i x) u_k(x): coefficient m of u_{k+2} is m+1 of u_k.
    out = np.zeros_like(c)
    out[:-1] = c[1:]
    return out


def berry_zak_connection(bands: BandData, min_overlap=1e-6):
    """Berry-Zak connection and Zak phase of ``bands.band_index``.

    Adjacent Bloch vectors are brought into a parallel-transport gauge
    (phase of every overlap ``<u_i|u_{i+1}>`` removed); the phase left on the
    closing link, from the zone edge back to ``k=-1`` mapped by a reciprocal
    lattice vector, is the Zak phase.  Spreading it evenly over the zone
    gives the smooth periodic gauge, whose connection is constant and equal
    to ``zak/2`` per unit ``k_R``.

    Without a lattice the band touches the next one at the zone edge and
    the loop is ill defined; the plane-wave gauge is used instead, in which
    the periodic part does not depend on k and the connection vanishes.

    Returns
    -------
    connection : ndarray
        A(k) samples on ``bands.k_samples``.
    zak_phase : float
        Wrapped to (-pi, pi].

    Raises
    ------
    GaugeSingularityError
        If the modulus of an overlap between neighbouring states drops
        below ``min_overlap``.
    """
    u = bands.states[:, :, bands.band_index].astype(complex)
    n = len(u)
    if bands.V0 == 0:
        return np.zeros(n), 0.0
    overlaps = np.einsum("ij,ij->i", u[:-1].conj(), u[1:])
    closing = np.vdot(u[-1], _shift_to_next_zone(u[0]))
    links = np.concatenate((overlaps, [closing]))
    bad = np.flatnonzero(np.abs(links) < min_overlap)
    if bad.size:
        i = int(bad[0])
        raise GaugeSingularityError(
            f"overlap {abs(links[i]):.3g} between k={bands.k_samples[i]:.6g} and its neighbour")
    zak = -float(np.sum(np.angle(links)))
    zak = float(wrap_phase(zak))
    connection = np.full(n, zak / 2.0)
    return connection, zak


def with_connection(bands: BandData, **kw):
    conn, zak = berry_zak_connection(bands, **kw)
    return replace(bands, connection=conn, zak_phase=zak)


def flat_band(energy, n_k=512, m_max=8, band_index=0):
    """Synthetic dispersionless band (A=0) for controls and tests."""
    k = zone_grid(n_k)
    dim = 2 * m_max + 1
    states = np.zeros((n_k, dim, 1))
    states[:, m_max, 0] = 1.0
    return BandData(V0=math.inf, m_max=m_max, k_samples=k,
                    energies=np.full((n_k, 1), float(energy)), states=states,
                    band_index=band_index, connection=np.zeros(n_k), zak_phase=0.0)


@dataclass(frozen=True)
class PeierlsTable:
    """Link phases of the shift operator on the walk sites.

    ``phi_plus[i]`` decorates the spin-up hop from ``k_i`` to ``k_i + dk``;
    ``phi_minus[i]`` the spin-down hop from ``k_i`` to ``k_i - dk``.  Totals
    are wrapped to (-pi, pi]; the dynamical and geometrical parts are kept
    unwrapped.
    """

    geometry: WalkGeometry
    phi_plus: np.ndarray
    phi_minus: np.ndarray
    dyn_plus: np.ndarray
    dyn_minus: np.ndarray
    geo_plus: np.ndarray
    geo_minus: np.ndarray

    @classmethod
    def from_parts(cls, geometry, dyn_plus, dyn_minus, geo_plus=None, geo_minus=None):
        n = geometry.n_sites
        dyn_plus = np.asarray(dyn_plus, dtype=float) * np.ones(n)
        dyn_minus = np.asarray(dyn_minus, dtype=float) * np.ones(n)
        geo_plus = np.zeros(n) if geo_plus is None else np.asarray(geo_plus, dtype=float)
        geo_minus = np.zeros(n) if geo_minus is None else np.asarray(geo_minus, dtype=float)
        return cls(geometry, wrap_phase(dyn_plus + geo_plus), wrap_phase(dyn_minus + geo_minus),
                   dyn_plus, dyn_minus, geo_plus, geo_minus)

    @classmethod
    def zeros(cls, geometry):
        z = np.zeros(geometry.n_sites)
        return cls.from_parts(geometry, z, z)

    def without_dynamical(self):
        return PeierlsTable.from_parts(self.geometry, 0.0, 0.0, self.geo_plus, self.geo_minus)


def site_quasimomenta(geometry: WalkGeometry):
    """Quasimomenta of the walk sites, ``-1 + (i+1) dk`` for ``i < n``."""
    n = geometry.n_sites
    return -1.0 + np.arange(1, n + 1) * geometry.delta_k0


def peierls_phases(bands: BandData, geometry: WalkGeometry, F0, tau0, x_bar=0.0):
    """Dynamical and geometrical Peierls phases for every walk site.

    In lattice units a hop of ``+-dk`` lasts ``tau0`` with ``dk = F0 tau0/pi``,
    so the dynamical phase is ``-+F0 x_bar tau0`` plus
    ``-(pi/F0) * int E dk'`` along the swept interval, and the geometrical
    phase is the integral of the connection along the same interval.
    Energies and connection are interpolated by periodic cubic splines;
    intervals running past the zone edge wrap.
    """
    if F0 == 0:
        raise InvalidParameterError("F0", "Peierls phases need a non-zero force")
    dk = F0 * tau0 / math.pi
    if not math.isclose(dk, geometry.delta_k0, rel_tol=1e-9):
        raise InvalidParameterError(
            "tau0", f"F0*tau0/pi = {dk:.12g} does not match the site spacing {geometry.delta_k0:.12g}")
    k = site_quasimomenta(geometry)
    e_spline = bands.energy_spline()
    e_int_plus = np.array([e_spline.integrate(ki, ki + dk) for ki in k])
    e_int_minus = np.array([e_spline.integrate(ki, ki - dk) for ki in k])
    zeeman = F0 * x_bar * tau0
    dyn_plus = -zeeman - (math.pi / F0) * e_int_plus
    dyn_minus = zeeman + (math.pi / F0) * e_int_minus
    if bands.connection is None:
        bands = with_connection(bands)
    a_spline = bands.connection_spline()
    geo_plus = np.array([a_spline.integrate(ki, ki + dk) for ki in k])
    geo_minus = np.array([a_spline.integrate(ki, ki - dk) for ki in k])
    return PeierlsTable.from_parts(geometry, dyn_plus, dyn_minus, geo_plus, geo_minus)


def landau_zener_check(V0, F0, safe_ratio=5.0):
    """Margin ``V0 / sqrt(32 F0 / pi^2)`` against interband tunnelling.

    Returns ``(ratio, status)`` with status ``"safe"`` when the ratio is at
    least ``safe_ratio`` and ``"warning"`` otherwise; zero force gives an
    infinite margin.
    """
    if V0 < 0 or F0 < 0:
        raise InvalidParameterError("V0/F0", "must be non-negative")
    if F0 == 0:
        return math.inf, "safe"
    ratio = V0 / math.sqrt(32.0 * F0 / math.pi ** 2)
    return ratio, ("safe" if ratio >= safe_ratio else "warning")
