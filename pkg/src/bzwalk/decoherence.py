"""Noise analytics for the walk and a Monte-Carlo engine to check them.

Spectra are one-sided densities ``S(omega)`` in (quantity)^2 per rad/s on a
log-spaced grid with a low-frequency cutoff ``omega_c``.  Physical
estimators take SI inputs; walk-level quantities are in the units of the
walk's quasimomentum.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import InvalidParameterError
from .idealwalk import WalkOperatorSpec, WalkState
from .propagator import coin_matrix
from .units import RB87, PhysicalConstants

__all__ = [
    "NoiseSpectrum",
    "DephasingReport",
    "window_function",
    "step_size_variance",
    "dephasing_per_step",
    "sigma_k",
    "gradient_noise_p",
    "shift_phase_variance",
    "coherent_steps",
    "compose_shift_spectrum",
    "g_function",
    "g_integral",
    "coin_process_fidelity",
    "dephasing_report",
    "MonteCarloResult",
    "monte_carlo_noisy_walk",
]


# ---------------------------------------------------------------------------
# spectra


@dataclass(frozen=True)
class NoiseSpectrum:
    omega: np.ndarray
    density: np.ndarray
    omega_c: float

    def __post_init__(self):
        w = np.asarray(self.omega, dtype=float)
        s = np.asarray(self.density, dtype=float)
        object.__setattr__(self, "omega", w)
        object.__setattr__(self, "density", s)
        if w.ndim != 1 or w.shape != s.shape or len(w) < 2:
            raise InvalidParameterError("omega", "grid and density must be 1-D arrays of equal length >= 2")
        if np.any(w <= 0) or np.any(np.diff(w) <= 0):
            raise InvalidParameterError("omega", "grid must be positive and strictly increasing")
        if np.any(s < 0) or not np.all(np.isfinite(s)):
            raise InvalidParameterError("density", "spectral density must be finite and non-negative")
        if not w[0] <= self.omega_c < w[-1]:
            raise InvalidParameterError("omega_c", "cutoff must lie inside the spectrum grid")

    def __call__(self, omega):
        """Density interpolated linearly in log(omega); zero outside the grid."""
        omega = np.asarray(omega, dtype=float)
        out = np.interp(np.log(omega), np.log(self.omega), self.density, left=0.0, right=0.0)
        return np.where(omega < self.omega_c, 0.0, out)

    @property
    def omega_max(self):
        return float(self.omega[-1])

    def variance(self):
        return integrate_spectrum(self, lambda w: np.ones_like(w))

    def scaled(self, factor):
        if factor < 0:
            raise InvalidParameterError("factor", "must be non-negative")
        return NoiseSpectrum(self.omega, self.density * factor, self.omega_c)

    @classmethod
    def zero(cls, omega_c=1.0, omega_max=1e8):
        return cls(np.array([omega_c, omega_max]), np.zeros(2), omega_c)

    @classmethod
    def flat(cls, variance, omega_max, omega_c, n=2001):
        """Band-limited white noise of total ``variance`` on ``[omega_c, omega_max]``."""
        w = np.geomspace(omega_c, omega_max, n)
        return cls(w, np.full(n, variance / (omega_max - omega_c)), omega_c)

    @classmethod
    def lorentzian(cls, variance, corr_time, omega_c=None, omega_max=None, n=4001):
        """Exponentially correlated noise, ``S = var (2/pi) t_c / (1 + (w t_c)^2)``."""
        omega_c = 1e-4 / corr_time if omega_c is None else omega_c
        omega_max = 1e6 / corr_time if omega_max is None else omega_max
        w = np.geomspace(omega_c, omega_max, n)
        s = variance * (2 / math.pi) * corr_time / (1 + (w * corr_time) ** 2)
        return cls(w, s, omega_c)

    @classmethod
    def single_tone(cls, variance, omega0, rel_width=1e-3, n=801):
        """Narrow Gaussian line; phase statistics are then far from Gaussian."""
        warnings.warn("single-tone spectrum: the Gaussian-phase closure for the coherence is unreliable",
                      stacklevel=2)
        sig = rel_width * omega0
        w = np.linspace(omega0 - 8 * sig, omega0 + 8 * sig, n)
        s = np.exp(-0.5 * ((w - omega0) / sig) ** 2)
        s *= variance / np.trapezoid(s, w)
        return cls(w, s, float(w[0]))

    @classmethod
    def from_csv(cls, path, omega_c=None):
        data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
        w, s = data[:, 0], data[:, 1]
        return cls(w, s, float(w[0]) if omega_c is None else omega_c)


def _sum_spectra(parts):
    parts = [(c, s) for c, s in parts if c != 0]
    if not parts:
        return NoiseSpectrum.zero()
    omega_c = min(s.omega_c for _, s in parts)
    w = np.unique(np.concatenate([s.omega for _, s in parts]))
    w = w[w >= omega_c]
    dens = sum(c * s(w) for c, s in parts)
    return NoiseSpectrum(w, dens, omega_c)


def compose_shift_spectrum(s_b0, s_xi, s_gradient, gradient, x_bar):
    """Spectrum of ``B' x_bar``: ``S_B0 + B'^2 S_xi + x_bar^2 S_B'``."""
    return _sum_spectra([(1.0, s_b0), (gradient ** 2, s_xi), (x_bar ** 2, s_gradient)])


def integrate_spectrum(spectrum: NoiseSpectrum, weight, rtol=1e-7, max_level=14):
    """``int_{omega_c} S(w) weight(w) dw`` by trapezoid in log(w) with bisection refinement."""
    lw = np.log(np.concatenate(([spectrum.omega_c], spectrum.omega[spectrum.omega > spectrum.omega_c])))
    if not np.any(spectrum.density):
        return 0.0

    def trap(lw):
        w = np.exp(lw)
        return float(np.trapezoid(spectrum(w) * weight(w) * w, lw))

    prev = trap(lw)
    for _ in range(max_level):
        mids = 0.5 * (lw[1:] + lw[:-1])
        lw = np.sort(np.concatenate((lw, mids)))
        cur = trap(lw)
        if abs(cur - prev) <= rtol * abs(cur) or cur == prev:
            return cur
        prev = cur
        if len(lw) > 1 << 23:
            break
    return cur


# ---------------------------------------------------------------------------
# step-size and phase noise


def window_function(omega, tau):
    """``f(w) = tau sinc^2(w tau / 2) / pi``, normalized on ``[0, inf)``."""
    if not tau > 0:
        raise InvalidParameterError("tau", "must be positive")
    omega = np.asarray(omega, dtype=float)
    out = tau * np.sinc(omega * tau / (2 * np.pi)) ** 2 / np.pi
    return out if out.ndim else float(out)


def step_size_variance(force_spectrum: NoiseSpectrum, tau, hbar=1.0):
    """``<dk^2> = int pi f(w) S_F(w) tau / hbar^2 dw``.

    In the lattice units used elsewhere (k in k_R, force in E_R/d_L, time
    in hbar/E_R) pass ``hbar = pi``.
    """
    return integrate_spectrum(force_spectrum, lambda w: np.pi * window_function(w, tau) * tau) / hbar ** 2


def sigma_k(n_sites, beta=3.0, zone_width=2 * math.pi):
    """Momentum width ``zone_width / (beta n)`` of a wave packet resolving the sites."""
    if not beta > 0 or n_sites <= 0:
        raise InvalidParameterError("beta", "beta and n_sites must be positive")
    return zone_width / (beta * n_sites)


def dephasing_per_step(var_k, sigma):
    """Leading-order loss of overlap per step, ``<dk^2>/(4 sigma_k^2)`` clipped to [0, 1]."""
    if not sigma > 0:
        raise InvalidParameterError("sigma_k", "must be positive")
    return float(min(max(var_k / (4 * sigma ** 2), 0.0), 1.0))


def gradient_noise_p(relative_fluctuation, beta=3.0):
    """Bound ``(beta/2)^2 <dB'^2>/<B'>^2`` for gradient (force) fluctuations.

    The step ``dk = 2 pi/n`` fluctuates in proportion to the force, so
    ``<dk^2> = (2 pi/n)^2 r^2`` and the site count drops out.
    """
    return dephasing_per_step((relative_fluctuation * 2 * math.pi) ** 2, sigma_k(1, beta))


def shift_phase_variance(field_spectrum: NoiseSpectrum, tau, constants: PhysicalConstants = RB87):
    """Relative-phase variance per step from fluctuations of ``B' x_bar`` (tesla).

    Returns ``(variance, coherence)`` with ``coherence = exp(-variance/2)``
    (Gaussian phase statistics).
    """
    coupling = 2 * constants.bohr_magneton * constants.mf_gf / constants.hbar
    var = integrate_spectrum(field_spectrum, lambda w: np.pi * window_function(w, tau) * tau) * coupling ** 2
    return var, math.exp(-var / 2)


def coherent_steps(phase_variance):
    """Number of steps until the accumulated phase variance reaches one."""
    return math.inf if phase_variance <= 0 else 1.0 / math.sqrt(phase_variance)


# ---------------------------------------------------------------------------
# coin fidelity

_G_SERIES = (
    0.25 + math.pi ** 2 / 16,
    -0.25,
    3 / 16 - math.pi ** 2 / 64 - math.pi ** 4 / 768,
    -1 / 8 + math.pi ** 2 / 64,
    5 / 64 - 3 * math.pi ** 2 / 256 + math.pi ** 4 / 3072 + math.pi ** 6 / 92160,
)


def g_function(r):
    """``(1 + r^2 - 2 r sin(pi r/2)) / (1 - r^2)^2`` with the r=1 point regularized."""
    r = np.asarray(r, dtype=float)
    eps = r - 1.0
    near = np.abs(eps) < 1e-3
    safe = np.where(near, 2.0, r)
    out = (1 + safe ** 2 - 2 * safe * np.sin(np.pi * safe / 2)) / (1 - safe ** 2) ** 2
    series = np.polyval(_G_SERIES[::-1], eps)
    out = np.where(near, series, out)
    return out if out.ndim else float(out)


def g_integral(cut=40.0):
    """``int_0^inf g(r) dr`` by quadrature; the tail beyond ``cut`` is split into
    a closed-form rational part and a Fourier-weighted oscillatory part."""
    head, _ = integrate.quad(g_function, 0.0, cut, points=[1.0], limit=400, epsabs=1e-13, epsrel=1e-13)
    rational = cut / (cut ** 2 - 1)
    osc, _ = integrate.quad(lambda r: -2 * r / (r * r - 1) ** 2, cut, np.inf, weight="sin", wvar=np.pi / 2)
    return head + rational + osc


def coin_process_fidelity(field_spectrum: NoiseSpectrum, omega_rabi, constants: PhysicalConstants = RB87):
    """Process fidelity of a coin pulse under field noise.

    Returns ``(F_pro^2, F_ave^2, p_error)`` with
    ``F_pro^2 = 1 - 2 (mu_B m_F g_F / (hbar Omega))^2 int S_B(w) g(w/Omega) dw``,
    ``F_ave^2 = (1 + 2 F_pro^2)/3`` and ``p_error = 1 - F_pro^2``.
    """
    if not omega_rabi > 0:
        raise InvalidParameterError("Omega_R", "Rabi frequency must be positive")
    pref = 2 * (constants.bohr_magneton * constants.mf_gf / (constants.hbar * omega_rabi)) ** 2
    err = pref * integrate_spectrum(field_spectrum, lambda w: g_function(w / omega_rabi))
    f_pro = 1.0 - err
    return f_pro, (1 + 2 * f_pro) / 3, err


# ---------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class DephasingReport:
    p: float
    var_k: float
    var_phi: float
    coherence: float
    coherent_steps: float
    coin_error: float | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0 <= self.p <= 1 and 0 <= self.coherence <= 1 and self.coherent_steps >= 0):
            raise InvalidParameterError("report", "probabilities or counts out of range")

    def to_dict(self):
        d = {k: getattr(self, k) for k in ("p", "var_k", "var_phi", "coherence", "coherent_steps", "coin_error")}
        d.update(self.extra)
        return d


def dephasing_report(tau, n_sites, beta=3.0, force_spectrum=None, field_spectrum=None,
                     coin_spectrum=None, omega_rabi=None, hbar_k=1.0, constants=RB87):
    """Collect the per-step analytics for one configuration.

    ``force_spectrum`` is the step-size driving noise in units where
    ``hbar_k`` converts it to walk quasimomentum (zone width 2 pi).
    """
    var_k = step_size_variance(force_spectrum, tau, hbar_k) if force_spectrum is not None else 0.0
    p = dephasing_per_step(var_k, sigma_k(n_sites, beta))
    if field_spectrum is not None:
        var_phi, coh = shift_phase_variance(field_spectrum, tau, constants)
    else:
        var_phi, coh = 0.0, 1.0
    coin_err = None
    if coin_spectrum is not None and omega_rabi is not None:
        coin_err = coin_process_fidelity(coin_spectrum, omega_rabi, constants)[2]
    return DephasingReport(p, var_k, var_phi, coh, coherent_steps(var_phi), coin_err)


# ---------------------------------------------------------------------------
# Monte Carlo


@dataclass(frozen=True)
class MonteCarloResult:
    """Ensemble averages after each step ``0..j``.

    ``coherence[s]`` is ``|E[A_up conj(A_down)]| / |A_up^0 conj(A_down^0)|``
    where ``A_s`` is the overlap of spin component ``s`` with the noiseless
    run, so pure relative-phase noise gives ``|E[exp(-i sum dphi)]|``.
    """

    distribution: np.ndarray
    coherence: np.ndarray
    coherence_stderr: np.ndarray
    variance: np.ndarray
    realizations: int


def _site_step(amp, coin, e_up, e_dn, wrap):
    amp = amp @ coin.T
    up = np.roll(amp[..., 0] * e_up, 1, axis=-1)
    dn = np.roll(amp[..., 1] * e_dn, -1, axis=-1)
    up[..., 0] *= wrap
    dn[..., -1] *= np.conj(wrap)
    return np.stack([up, dn], axis=-1)


def monte_carlo_noisy_walk(initial: WalkState, spec: WalkOperatorSpec, j, realizations,
                           phase_sampler=None, dk_sampler=None, sigma=None, sub_sites=16, seed=0):
    """Average ``realizations`` noisy walks.

    ``phase_sampler(rng, size)`` draws the relative spin phase added in each
    step (``exp(-i dphi sigma_z / 2)``); ``dk_sampler(rng, size)`` draws a
    step-size error in units of the site spacing.  With a ``dk_sampler`` the
    walk runs on a fine grid of ``sub_sites`` points per site where every
    site carries a Gaussian packet of rms width ``sigma`` (site units);
    spin up moves by ``1 + dk`` sites and spin down by ``-(1 + dk)``.  Link
    phases then act per originating site and the twist is spread evenly
    over the ring.  Noise is common to all sites within a realization.
    """
    if realizations < 1:
        raise InvalidParameterError("realizations", "must be >= 1")
    rng = np.random.default_rng(seed)
    geom = initial.geometry
    n = geom.n_sites
    coin = coin_matrix(spec.alpha, spec.coin_phase)
    phi_p, phi_m = spec.link_phases(geom)
    e_up, e_dn = np.exp(1j * phi_p), np.exp(1j * phi_m)

    if dk_sampler is None:
        wrap = np.exp(1j * spec.twist)
        amp = np.broadcast_to(initial.amplitudes, (realizations, n, 2)).astype(complex)
        ref = initial.amplitudes.astype(complex)[None]

        def advance(a, dphi, dk):
            return _site_step(a, coin, e_up, e_dn, wrap)

        def site_probs(a):
            return np.abs(a) ** 2

        positions = np.arange(n)
    else:
        if sigma is None or not sigma > 0:
            raise InvalidParameterError("sigma", "packet width needed for step-size noise")
        m = n * sub_sites
        u = np.arange(m) / sub_sites  # fine coordinate in site units
        d = (u[:, None] - np.arange(n)[None, :] + n / 2) % n - n / 2
        packets = np.exp(-d ** 2 / (4 * sigma ** 2))
        packets /= np.sqrt(np.sum(packets ** 2, axis=0))
        fine0 = packets @ initial.amplitudes
        amp = np.broadcast_to(fine0, (realizations, m, 2)).astype(complex)
        ref = fine0[None].astype(complex)
        freq = np.fft.fftfreq(m, d=1.0 / sub_sites)  # cycles per site
        site_of = np.floor(u + 0.5).astype(int) % n
        fe_up, fe_dn = e_up[site_of], e_dn[site_of]
        twist_rate = spec.twist / n  # phase per site moved

        def advance(a, dphi, dk):
            a = a @ coin.T
            shift = (1.0 + dk)[:, None]
            ph = np.exp(-2j * np.pi * freq[None, :] * shift)
            tw = np.exp(1j * twist_rate * shift)
            up = np.fft.ifft(np.fft.fft(a[..., 0] * fe_up, axis=-1) * ph, axis=-1) * tw
            dn = np.fft.ifft(np.fft.fft(a[..., 1] * fe_dn, axis=-1) * ph.conj(), axis=-1) * tw.conj()
            return np.stack([up, dn], axis=-1)

        def site_probs(a):
            p = np.abs(a) ** 2
            return np.add.reduceat(np.roll(p, sub_sites // 2, axis=-2), np.arange(0, m, sub_sites), axis=-2)

        positions = np.arange(n)

    def measure(a, r):
        au = np.sum(np.conj(r[..., 0]) * a[..., 0], axis=-1)
        ad = np.sum(np.conj(r[..., 1]) * a[..., 1], axis=-1)
        z = au * np.conj(ad)
        z0 = np.abs(np.sum(np.abs(r[..., 0]) ** 2, axis=-1) * np.sum(np.abs(r[..., 1]) ** 2, axis=-1))
        return z, z0

    coh = np.empty(j + 1)
    coh_err = np.empty(j + 1)
    var = np.empty(j + 1)

    def record(s, a):
        z, z0 = measure(a, ref)
        z0 = float(np.ravel(z0)[0])
        mean = z.mean()
        coh[s] = abs(mean) / z0 if z0 > 0 else 0.0
        # standard error of the projection of z on its mean direction
        direction = mean / abs(mean) if abs(mean) > 0 else 1.0
        proj = (z * np.conj(direction)).real / (z0 if z0 > 0 else 1.0)
        coh_err[s] = proj.std(ddof=1) / math.sqrt(len(proj)) if len(proj) > 1 else 0.0
        p = site_probs(a).sum(axis=-1).mean(axis=0)
        dpos = (positions - centre + n / 2) % n - n / 2
        var[s] = float(np.sum(p * dpos ** 2) - np.sum(p * dpos) ** 2)
        return p

    centre = positions[np.argmax(site_probs(ref).sum(axis=-1)[0])]
    p = record(0, amp)
    for s in range(1, j + 1):
        dphi = phase_sampler(rng, realizations) if phase_sampler is not None else np.zeros(realizations)
        dk = dk_sampler(rng, realizations) if dk_sampler is not None else np.zeros(realizations)
        amp = advance(amp, dphi, dk)
        ref = advance(ref, np.zeros(1), np.zeros(1))
        if phase_sampler is not None:
            amp = amp * np.stack([np.exp(-0.5j * dphi), np.exp(0.5j * dphi)], axis=-1)[:, None, :]
        p = record(s, amp)
    return MonteCarloResult(p, coh, coh_err, var, realizations)
