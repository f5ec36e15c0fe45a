"""Ideal discrete-time quantum walk on the quasimomentum sites of one zone.

Site ``i`` of an ``n``-site geometry sits at quasimomentum
``k_i = -1 + (i+1) dk`` so that ``k = 0`` is site ``n/2 - 1`` and the zone
edge ``k = 1`` is site ``n - 1``.  One step is ``W = U_shift U_coin``:
spin up hops ``i -> i+1`` with phase ``exp(i phi_plus[i])``, spin down hops
``i -> i-1`` with phase ``exp(i phi_minus[i])``.

Twist convention: ``twist`` is the phase of the wrap link, multiplied on an
up hop ``n-1 -> 0`` (and conjugated on the down hop ``0 -> n-1``).  It
equals the gauge-invariant sum of the up-hop phases around the ring.  The
phase in the boundary condition ``psi(k + 2) = exp(i phi_bc) psi(k)`` of the
gauge in which all link phases vanish is ``phi_bc = -twist``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .band import PeierlsTable, site_quasimomenta, wrap_phase
from .errors import BoundaryViolationError, InvalidParameterError
from .propagator import coin_matrix
from .units import WalkGeometry

__all__ = [
    "WalkState",
    "WalkOperatorSpec",
    "GaugeReduction",
    "single_site_state",
    "center_site",
    "walk_evolve",
    "walk_trajectory",
    "dense_walk_operator",
    "gauge_reduce",
    "twist_phase",
    "dirac_propagate",
    "SYMMETRIC_SPINOR",
]

#: Initial spinor giving a left-right symmetric Hadamard walk for the coin
#: ``[[c, i s], [i s, c]]`` applied before the shift.
SYMMETRIC_SPINOR = (1 / math.sqrt(2), 1 / math.sqrt(2))


@dataclass(frozen=True)
class WalkState:
    """Amplitudes of shape ``(n_sites, 2)``: column 0 spin up, column 1 spin down."""

    amplitudes: np.ndarray
    geometry: WalkGeometry
    twist: float = 0.0

    def __post_init__(self):
        if self.amplitudes.shape != (self.geometry.n_sites, 2):
            raise InvalidParameterError("amplitudes", "shape must be (n_sites, 2)")

    def probabilities(self, spin=None):
        p = np.abs(self.amplitudes) ** 2
        return p.sum(axis=1) if spin is None else p[:, spin]

    def norm(self):
        return float(np.sum(np.abs(self.amplitudes) ** 2))

    @property
    def k_values(self):
        return site_quasimomenta(self.geometry)


def center_site(geometry: WalkGeometry):
    """Index of the site at ``k = 0``."""
    return geometry.n_sites // 2 - 1


def single_site_state(geometry: WalkGeometry, site=None, spinor=SYMMETRIC_SPINOR, twist=0.0):
    site = center_site(geometry) if site is None else site
    if not 0 <= site < geometry.n_sites:
        raise InvalidParameterError("site", f"must lie in [0, {geometry.n_sites})")
    s = np.asarray(spinor, dtype=complex)
    nrm = np.linalg.norm(s)
    if nrm == 0:
        raise InvalidParameterError("spinor", "must be non-zero")
    amp = np.zeros((geometry.n_sites, 2), dtype=complex)
    amp[site] = s / nrm
    return WalkState(amp, geometry, twist)


@dataclass(frozen=True)
class WalkOperatorSpec:
    """Coin angle, link phases and boundary treatment of the walk operator.

    ``boundary`` is ``"ring"`` (periodic, wrap link carries ``twist``) or
    ``"open"`` (any amplitude about to cross the wrap link is an error).
    """

    alpha: float = math.pi / 2
    table: PeierlsTable | None = None
    twist: float = 0.0
    boundary: str = "ring"
    coin_phase: float = 0.0

    def __post_init__(self):
        if self.boundary not in ("ring", "open"):
            raise InvalidParameterError("boundary", f"unknown mode {self.boundary!r}")

    def link_phases(self, geometry):
        if self.table is None:
            z = np.zeros(geometry.n_sites)
            return z, z
        if self.table.geometry.n_sites != geometry.n_sites:
            raise InvalidParameterError("table", "Peierls table built for a different geometry")
        return self.table.phi_plus, self.table.phi_minus


def _check_open(amp, tol=1e-24):
    if abs(amp[-1, 0]) ** 2 > tol or abs(amp[0, 1]) ** 2 > tol:
        raise BoundaryViolationError("walker reached the edge of the open subregion")


def walk_evolve(initial: WalkState, spec: WalkOperatorSpec, j: int) -> WalkState:
    """Apply ``j`` steps of coin followed by the phase-decorated shift.

    Raises
    ------
    BoundaryViolationError
        In ``"open"`` mode when amplitude would cross the zone edge.
    """
    if j < 0:
        raise InvalidParameterError("j", "number of steps must be non-negative")
    geometry = initial.geometry
    phi_p, phi_m = spec.link_phases(geometry)
    e_up = np.exp(1j * phi_p)
    e_dn = np.exp(1j * phi_m)
    wrap = np.exp(1j * spec.twist)
    coin = coin_matrix(spec.alpha, spec.coin_phase)
    amp = initial.amplitudes.astype(complex, copy=True)
    for _ in range(j):
        amp = amp @ coin.T
        if spec.boundary == "open":
            _check_open(amp)
        up = np.roll(amp[:, 0] * e_up, 1)
        dn = np.roll(amp[:, 1] * e_dn, -1)
        up[0] *= wrap
        dn[-1] *= np.conj(wrap)
        amp = np.stack([up, dn], axis=1)
    return WalkState(amp, geometry, spec.twist)


def walk_trajectory(initial: WalkState, spec: WalkOperatorSpec, j: int):
    """States after 0, 1, ..., j steps."""
    out = [initial]
    for _ in range(j):
        out.append(walk_evolve(out[-1], spec, 1))
    return out


def dense_walk_operator(spec: WalkOperatorSpec, geometry: WalkGeometry):
    """Explicit ``2n x 2n`` matrix of one step, index ``2*site + spin``.

    Built link by link from the definition so that it can serve as an
    independent reference for :func:`walk_evolve`.
    """
    n = geometry.n_sites
    phi_p, phi_m = spec.link_phases(geometry)
    shift = np.zeros((2 * n, 2 * n), dtype=complex)
    for i in range(n):
        up_to = (i + 1) % n
        ph = phi_p[i] + (spec.twist if i == n - 1 else 0.0)
        shift[2 * up_to, 2 * i] = np.exp(1j * ph)
        dn_to = (i - 1) % n
        ph = phi_m[i] - (spec.twist if i == 0 else 0.0)
        shift[2 * dn_to + 1, 2 * i + 1] = np.exp(1j * ph)
    coin = np.kron(np.eye(n), coin_matrix(spec.alpha, spec.coin_phase))
    return shift @ coin


@dataclass(frozen=True)
class GaugeReduction:
    """Result of removing the locally removable part of a Peierls table.

    ``residual`` keeps zero up-hop phases and puts ``s(k) - 2 gamma`` on the
    down hops; ``twist`` is the leftover wrap-link phase (see the module
    docstring) and ``boundary_phase = -twist``.
    """

    residual: PeierlsTable
    gamma: float
    removable: bool
    residual_max: float
    twist: float
    boundary_phase: float
    globally_removable: bool
    gauge: np.ndarray = field(repr=False)


def gauge_reduce(table: PeierlsTable, tolerance=1e-10) -> GaugeReduction:
    """Split a table into a constant ``gamma``, a twist and a residual.

    With ``s(k_i) = phi_plus(k_i) + phi_minus(k_{i+1})``, the table is
    locally removable when ``s`` is constant (within ``tolerance``); then a
    site gauge ``chi`` maps every up hop to ``gamma`` and every down hop to
    ``gamma`` except for the twist on the wrap link.
    """
    n = table.geometry.n_sites
    phi_p = table.dyn_plus + table.geo_plus
    phi_m = table.dyn_minus + table.geo_minus
    s = phi_p + np.roll(phi_m, -1)
    s = s[0] + wrap_phase(s - s[0])
    gamma = float(np.mean(s) / 2)
    r = wrap_phase(s - 2 * gamma)
    residual_max = float(np.max(np.abs(r)))
    chi = np.concatenate(([0.0], np.cumsum(phi_p[:-1] - gamma)))
    twist = float(wrap_phase(np.sum(phi_p - gamma)))
    zero = np.zeros(n)
    residual = PeierlsTable.from_parts(table.geometry, zero, np.roll(r, 1))
    return GaugeReduction(
        residual=residual,
        gamma=gamma,
        removable=residual_max < tolerance,
        residual_max=residual_max,
        twist=twist,
        boundary_phase=float(wrap_phase(-twist)),
        globally_removable=abs(twist) < tolerance,
        gauge=chi,
    )


def twist_phase(geometry: WalkGeometry, x_bar, zak_phase=0.0):
    """Wrap-link phase ``-n dk x_bar + zak`` (with ``n dk = 2``), wrapped.

    Lengths are in lattice constants, so ``n dk x_bar = 2 pi x_bar`` once the
    zone width ``2 k_R = 2 pi/d_L`` is restored; the boundary-condition
    phase is the negative of the value returned.
    """
    return float(wrap_phase(-2 * math.pi * x_bar + zak_phase))


def dirac_propagate(psi_k, F0, omega_r, t, n_steps=None):
    """Evolve a spinor field sampled on a uniform periodic k-grid over (-1, 1].

    ``psi_k`` has shape ``(2, m)`` with grid points ``-1 + 2(i+1)/m``.  The
    generator moves spin up towards larger k at rate ``F0/pi`` (spin down
    the opposite way) and rotates the spin with ``-(omega_r/2) sigma_x``, so
    that a pulse of area ``alpha`` equals the walk coin of angle ``alpha``.
    Strang splitting: half translation (exact, spectral), rotation, half
    translation.  Either term alone is integrated exactly.
    """
    psi = np.array(psi_k, dtype=complex, copy=True)
    if psi.ndim != 2 or psi.shape[0] != 2:
        raise InvalidParameterError("psi_k", "expected shape (2, m)")
    m = psi.shape[1]
    if t == 0:
        return psi
    if omega_r == 0 or F0 == 0:
        n_steps = 1
    elif n_steps is None:
        n_steps = max(1, math.ceil(abs(t) * max(abs(omega_r), abs(F0) * m / math.pi) / 0.5))
    dt = t / n_steps
    freq = np.fft.fftfreq(m, d=2.0 / m)  # cycles per unit k on the period-2 circle

    def translate(p, dk):
        ph = np.exp(-2j * np.pi * freq * dk)
        out = np.empty_like(p)
        out[0] = np.fft.ifft(np.fft.fft(p[0]) * ph)
        out[1] = np.fft.ifft(np.fft.fft(p[1]) * np.conj(ph))
        return out

    rot = coin_matrix(omega_r * dt)
    half = 0.5 * F0 * dt / math.pi
    for _ in range(n_steps):
        psi = translate(psi, half)
        psi = rot @ psi
        psi = translate(psi, half)
    return psi
