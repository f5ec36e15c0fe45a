"""Readout and comparison: quasimomentum distributions, fidelities and overlaps."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .band import bloch_hamiltonian, compute_bands, flat_band, peierls_phases, site_quasimomenta, with_connection
from .errors import InvalidParameterError
from .idealwalk import (SYMMETRIC_SPINOR, WalkOperatorSpec, WalkState, single_site_state,
                        walk_evolve)
from .propagator import SpinorField
from .units import WalkGeometry

__all__ = [
    "SiteDistribution",
    "folded_autocorrelation",
    "bin_probabilities",
    "site_distribution",
    "quasimomentum_mean",
    "band_populations",
    "peak_width",
    "total_variation",
    "walk_fidelity",
    "InfidelityCurve",
    "infidelity_curve",
    "zeeman_overlap",
    "trap_shift_numeric",
    "spatial_freeze_metric",
]


@dataclass(frozen=True)
class SiteDistribution:
    """Normalized site probabilities; ``residual`` is the raw sum minus one."""

    k_centers: np.ndarray
    probabilities: np.ndarray
    residual: float

    def total_variation(self, other):
        q = other.probabilities if isinstance(other, SiteDistribution) else np.asarray(other)
        return total_variation(self.probabilities, q)


def total_variation(p, q):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise InvalidParameterError("distribution", f"shapes differ: {p.shape} vs {q.shape}")
    return float(0.5 * np.sum(np.abs(p - q)))


# ---------------------------------------------------------------------------
# quasimomentum readout
#
# Folding the momentum density of a grid state into the first zone only
# keeps correlations between points a whole number of lattice cells apart:
#     rho(k) = (dx/2) sum_l A_l exp(-i pi k l),  A_l = sum_j psi_{j+lM} psi_j^*
# with M points per cell.  Bin integrals follow in closed form.


def folded_autocorrelation(state: SpinorField, spin=None):
    """Cell-lag autocorrelations ``A_l`` for ``l = -(C-1) .. C-1``."""
    grid = state.grid
    c, m = grid.n_cells, grid.points_per_site
    comps = [0, 1] if spin is None else [spin]
    total = np.zeros(2 * c, dtype=complex)
    for s in comps:
        blocks = state.psi[s].reshape(c, m)
        f = np.fft.fft(blocks, n=2 * c, axis=0)
        # circular correlation of the zero-padded blocks equals the linear one
        total += np.fft.ifft(np.sum(f * f.conj(), axis=1))
    lags = np.arange(-(c - 1), c)
    return lags, total[lags % (2 * c)]


def bin_probabilities(state: SpinorField, edges, spin=None):
    """Folded quasimomentum probability in each ``[edges[i], edges[i+1]]``.

    Edges are in units of k_R and may extend past the zone; the integrand is
    periodic with period 2.
    """
    edges = np.asarray(edges, dtype=float)
    lags, a = folded_autocorrelation(state, spin)
    dx = state.grid.dx
    lo, hi = edges[:-1], edges[1:]
    nz = lags != 0
    l = lags[nz][:, None]
    phase = (np.exp(-1j * np.pi * l * hi) - np.exp(-1j * np.pi * l * lo)) / (-1j * np.pi * l)
    a0 = a[~nz][0]
    out = a0 * (hi - lo) + np.sum(a[nz][:, None] * phase, axis=0)
    return (dx / 2) * out.real


def site_distribution(state: SpinorField, geometry: WalkGeometry, spin=None, offset=0.0):
    """Folded quasimomentum distribution binned on the walk sites.

    Bins have width ``dk`` and are centred on the site quasimomenta shifted
    by ``offset``; together they tile the zone, so the raw sum equals the
    state norm.
    """
    if state.grid.n_cells < 2 * geometry.n_sites:
        raise InvalidParameterError("n_points", "grid spans too few cells to resolve the walk sites")
    k = site_quasimomenta(geometry) + offset
    dk = geometry.delta_k0
    edges = np.concatenate((k - dk / 2, [k[-1] + dk / 2]))
    raw = bin_probabilities(state, edges, spin)
    total = bin_probabilities(state, [-1.0, 1.0])[0] if spin is not None else raw.sum()
    raw = np.clip(raw, 0.0, None)
    return SiteDistribution(k, raw / total, float(raw.sum() - 1.0) if spin is None else float(total - 1.0))


def quasimomentum_mean(state: SpinorField, spin=None, center=0.0):
    """Mean folded quasimomentum over the window ``(center-1, center+1]``."""
    lags, a = folded_autocorrelation(state, spin)
    nz = lags != 0
    l = lags[nz]
    moment = np.sum(a[nz] * 2j * (-1.0) ** l * np.exp(-1j * np.pi * l * center) / (np.pi * l))
    a0 = a[~nz][0]
    return float(((moment + 2 * center * a0) / (2 * a0)).real)


def band_populations(state: SpinorField, V0, n_bands=3):
    """Population of the lowest ``n_bands`` bands of ``V0 sin^2(pi x)``.

    Exact for the grid: momentum modes are grouped by quasimomentum and
    projected on the eigenvectors of the aliased plane-wave Bloch matrix.
    """
    grid = state.grid
    c, m, n = grid.n_cells, grid.points_per_site, grid.n_points
    amps = np.fft.fft(state.psi, axis=-1)
    kin = grid.kinetic
    pops = np.zeros(n_bands)
    g_idx = np.arange(m)
    for kappa in range(c):
        modes = (kappa + c * g_idx) % n
        h = np.diag(kin[modes] + V0 / 2)
        # exp(+-2 pi i x) couples modes differing by one reciprocal vector (c grid modes)
        for i in range(m):
            h[(i + 1) % m, i] += -V0 / 4
            h[i, (i + 1) % m] += -V0 / 4
        _, vecs = np.linalg.eigh(h)
        proj = vecs[:, :n_bands].T.conj() @ amps[:, modes].T
        pops += np.sum(np.abs(proj) ** 2, axis=1)
    return pops * grid.dx / n


def peak_width(state: SpinorField, geometry: WalkGeometry, sub_bins=10, threshold=0.02):
    """Weighted rms width (k_R) of the peaks around occupied walk sites.

    Each site bin is split into ``sub_bins`` slices; the rms deviation from
    the site centre is averaged over sites holding more than ``threshold``
    of the population.
    """
    k = site_quasimomenta(geometry)
    dk = geometry.delta_k0
    fine = np.linspace(-0.5, 0.5, sub_bins + 1) * dk
    centres = 0.5 * (fine[1:] + fine[:-1])
    edges = (k[:, None] + fine[None, :])
    widths, weights = [], []
    for e in edges:
        p = bin_probabilities(state, e)
        w = p.sum()
        if w <= 0:
            continue
        widths.append(math.sqrt(max(np.sum(p * centres ** 2) / w, 0.0)))
        weights.append(w)
    weights = np.asarray(weights)
    widths = np.asarray(widths)
    sel = weights > threshold * weights.sum()
    return float(np.sum(widths[sel] * weights[sel]) / np.sum(weights[sel]))


# ---------------------------------------------------------------------------
# ideal-walk comparisons


def walk_fidelity(a: WalkState, b: WalkState):
    """Squared overlap ``|<a|b>|^2`` of two walk states."""
    if a.geometry.n_sites != b.geometry.n_sites:
        raise InvalidParameterError("geometry", "walk states live on different geometries")
    return float(min(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2, 1.0))


@dataclass(frozen=True)
class InfidelityCurve:
    V0: tuple
    j: tuple
    infidelity: np.ndarray  # shape (len(V0), len(j))

    def rows(self):
        for a, v in enumerate(self.V0):
            for b, jj in enumerate(self.j):
                yield v, jj, float(self.infidelity[a, b])

    def is_monotone(self, rel_slack=0.0):
        """True if 1-F does not increase with V0 for every j."""
        order = np.argsort(self.V0)
        d = self.infidelity[order]
        return bool(np.all(d[1:] <= d[:-1] * (1 + rel_slack) + 1e-15))


def infidelity_curve(V0_list, F0=0.2, n_sites=20, j_list=(10, 100, 1000, 2000), x_bar=0.0,
                     alpha=math.pi / 2, spinor=SYMMETRIC_SPINOR, use_flat_band=False,
                     m_max=32, n_k=512):
    """1-F between walks with full Peierls phases and with dynamical parts removed.

    Both walks start at ``k = 0`` with ``spinor`` on a periodic ring.
    """
    geometry = WalkGeometry(n_sites, max(j_list, default=0))
    tau0 = geometry.tau0_for(F0)
    js = sorted(set(int(j) for j in j_list))
    out = np.zeros((len(V0_list), len(js)))
    start = single_site_state(geometry, spinor=spinor)
    for a, V0 in enumerate(V0_list):
        if use_flat_band:
            bands = flat_band(1.0, n_k=n_k)
        else:
            bands = with_connection(compute_bands(V0, m_max=m_max, n_k=n_k))
        table = peierls_phases(bands, geometry, F0, tau0, x_bar)
        spec_full = WalkOperatorSpec(alpha=alpha, table=table)
        spec_ref = WalkOperatorSpec(alpha=alpha, table=table.without_dynamical())
        sa = sb = start
        done = 0
        for b, j in enumerate(js):
            sa = walk_evolve(sa, spec_full, j - done)
            sb = walk_evolve(sb, spec_ref, j - done)
            done = j
            out[a, b] = max(0.0, 1.0 - walk_fidelity(sa, sb))
    return InfidelityCurve(tuple(float(v) for v in V0_list), tuple(js), out)


# ---------------------------------------------------------------------------
# Zeeman distortion of the Bloch states


def _dressed_bloch_state(V0, F0, k_target, ramp_time, dt, m_max):
    """Bloch state after a smoothstep ramp of the force from 0 to F0.

    Works in the co-moving (Houston) frame of a single quasimomentum: the
    force only moves the quasimomentum, so propagating the lowest Bloch
    vector with the instantaneous Bloch Hamiltonian is exact for the full
    spatially periodic problem.  The start point is chosen so that the ramp
    ends at ``k_target``.
    """
    n_steps = max(1, int(round(ramp_time / dt)))
    dt = ramp_time / n_steps
    sweep = F0 * ramp_time / (2 * math.pi)  # smoothstep integral is T/2
    k_start = k_target - sweep
    _, vecs = np.linalg.eigh(bloch_hamiltonian(k_start, V0, m_max))
    c = vecs[:, 0].astype(complex)
    for i in range(n_steps):
        x = (i + 0.5) / n_steps
        k = k_start + F0 * ramp_time * (x ** 3 - x ** 4 / 2) / math.pi
        w, v = np.linalg.eigh(bloch_hamiltonian(k, V0, m_max))
        c = v @ (np.exp(-1j * w * dt) * (v.T @ c))
    return c


def zeeman_overlap(V0, F0, k_target=0.0, ramp_time=30.0, dt=0.01, m_max=16):
    """Squared overlap of the lowest Bloch states dressed by forces +F0 and -F0.

    Returns ``(|I|^2, shift)`` where ``shift = F0/(pi^2 V0)`` (lattice
    constants) is the harmonic estimate of the separation of the two
    state-dependent well minima.

    Raises
    ------
    InvalidParameterError
        For ``V0 < 5``, where a single well no longer binds a band that can
        follow the ramp.
    """
    if V0 < 5:
        raise InvalidParameterError("V0", "lattice too shallow for a bound lowest band (need V0 >= 5)")
    shift = F0 / (math.pi ** 2 * V0)
    if F0 == 0:
        return 1.0, 0.0
    up = _dressed_bloch_state(V0, F0, k_target, ramp_time, dt, m_max)
    down = _dressed_bloch_state(V0, -F0, k_target, ramp_time, dt, m_max)
    return float(abs(np.vdot(up, down)) ** 2), shift


def trap_shift_numeric(V0, F0, n_points=2001):
    """Separation of <x> between ground states of one well tilted by +-F0.

    Finite differences on a single cell with hard walls; adequate for
    ``V0 >= 5`` where the ground state is well inside the cell.
    """
    x = np.linspace(-0.5, 0.5, n_points)[1:-1]
    h = x[1] - x[0]
    lap = (np.diag(np.full(len(x), -2.0)) + np.diag(np.ones(len(x) - 1), 1)
           + np.diag(np.ones(len(x) - 1), -1)) / h ** 2
    means = []
    for f in (F0, -F0):
        ham = -lap / np.pi ** 2 + np.diag(V0 * np.sin(np.pi * x) ** 2 - f * x)
        _, v = np.linalg.eigh(ham)
        g = v[:, 0] ** 2
        means.append(float(np.sum(g * x) / np.sum(g)))
    return means[0] - means[1]


def spatial_freeze_metric(snapshots):
    """Largest total-variation distance of position densities from the first."""
    snaps = list(snapshots)
    if len(snaps) < 2:
        raise InvalidParameterError("snapshots", "need at least two snapshots")
    ref = snaps[0].density()
    ref = ref / ref.sum()
    worst = 0.0
    for s in snaps[1:]:
        d = s.density()
        worst = max(worst, total_variation(ref, d / d.sum()))
    return worst
