"""Command-line entry point: ``bzwalk <command> [options]``.

Every command resolves its configuration from built-in defaults, an
optional JSON file (``--config``; a run manifest written by an earlier run
is accepted too) and command-line flags, in that order of precedence.
Outputs go to ``--output-dir``, else to ``$BZWALK_OUTPUT_DIR``, else to the
working directory, together with a ``<name>_manifest.json``.

Exit status: 0 on success, 1 for usage errors and invalid parameters,
2 for numerical failures.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .errors import BoundaryViolationError, InvalidParameterError, NumericalError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2
OUTPUT_DIR_ENV = "BZWALK_OUTPUT_DIR"

TWO_PI = 2 * math.pi


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int | None
    version: str
    outputs: list = field(default_factory=list)
    wall_clock_seconds: float = 0.0
    summary: dict = field(default_factory=dict)

    def write(self, path):
        write_json(path, asdict(self))


# ---------------------------------------------------------------------------
# configuration


DEFAULTS = {
    "band": {"V0": 20.0, "nk": 512, "m_max": 32, "n_bands": 4},
    "walk": {"n_sites": 20, "steps": 10, "alpha": math.pi / 2, "spinor": "symmetric",
             "phases": "none", "V0": 20.0, "F0": 0.2, "x_bar": 0.0, "twist": 0.0, "boundary": "ring"},
    "fig2": {"V0": [20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0, 55.0, 60.0], "j": [10, 100, 1000, 2000],
             "F0": 0.2, "n_sites": 20, "x_bar": 0.0, "flat_band": False, "m_max": 32, "nk": 512},
    "fig3": {"V0": 20.0, "F0": 0.2, "d_lattice": 532e-9, "omega_x_hz": 10.0, "omega_r_hz": 100.0,
             "x_bar": 0.0, "n_sites": 20, "steps": 10, "alpha": math.pi / 2, "reference": "ideal",
             "expansion_factor": 3.0, "t_expand": None, "t_kick": None, "force_delay": 0.1,
             "n_points": 8192, "points_per_site": 16, "dt_lattice": 0.005, "dt_free": 0.05,
             "frame_bins": 400, "dump_animation": False},
    "fig4": {"V0": 10.0, "F0": 0.2, "d_lattice": 532e-9, "omega_x_hz": 2.5, "omega_r_hz": 100.0,
             "a_s": 5.3e-9, "n_repulsive": 100, "n_attractive": 10, "g": None, "n_sites": 20,
             "steps": 10, "n_points": 4096, "points_per_site": 8, "dt": 0.005},
    "decohere": {"tau": 1e-4, "n_sites": 20, "beta": 3.0, "d_lattice": 532e-9, "mf_gf": 0.5,
                 "gradient_fluctuation": 0.004,
                 "field_spectrum": {"type": "flat", "variance": 1e-20, "omega_c": TWO_PI * 1e-2,
                                    "omega_max": TWO_PI * 10.0},
                 "coin_spectrum": None, "force_spectrum": None, "omega_rabi_hz": 2e5,
                 "monte_carlo": 0, "mc_steps": 20, "seed": 0},
}
DEFAULTS["protocol"] = dict(DEFAULTS["fig3"], g1d=0.0, nonlinear=False)

# type templates for keys whose default is null
_NULLABLE = {"t_expand": 0.0, "t_kick": 0.0, "g": [0.0], "coin_spectrum": {}, "force_spectrum": {}}


def _coerce(key, value, default):
    if value is None:
        return None
    if default is None:
        return _coerce(key, value, _NULLABLE[key]) if key in _NULLABLE else value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise InvalidParameterError(key, f"expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
            raise InvalidParameterError(key, f"expected an integer, got {value!r}")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise InvalidParameterError(key, f"expected a number, got {value!r}")
        return float(value)
    if isinstance(default, list):
        items = value if isinstance(value, list) else [value]
        return [_coerce(key, v, default[0]) for v in items] if default else items
    if isinstance(default, str) and not isinstance(value, str):
        raise InvalidParameterError(key, f"expected a string, got {value!r}")
    if isinstance(default, dict) and not isinstance(value, dict):
        raise InvalidParameterError(key, f"expected an object, got {value!r}")
    return value


def resolve_config(command, file_config=None, overrides=None):
    """Merge defaults, a config mapping and flag overrides; unknown keys are errors."""
    defaults = DEFAULTS[command]
    cfg = dict(defaults)
    for source in (file_config or {}, overrides or {}):
        for key, value in source.items():
            if key not in defaults:
                raise InvalidParameterError(key, f"unknown configuration key for '{command}'")
            cfg[key] = _coerce(key, value, defaults[key])
    return cfg


def load_config_file(path, command):
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    if "command" in data and "config" in data:  # a run manifest
        if data["command"] != command:
            raise UsageError(f"manifest {path} belongs to command '{data['command']}'")
        data = data["config"]
    return data


# ---------------------------------------------------------------------------
# output helpers


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, comments, columns, rows):
    with open(path, "w", newline="") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def write_json(path, data):
    Path(path).write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


class Outputs:
    def __init__(self, directory, name):
        self.directory = Path(directory)
        self.name = name
        self.files = []
        self.directory.mkdir(parents=True, exist_ok=True)

    def path(self, suffix):
        p = self.directory / f"{self.name}{suffix}"
        self.files.append(p.name)
        return p


def _pool_map(fn, items, workers):
    if workers <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# commands


def cmd_band(cfg, out, ctx):
    from .band import compute_bands, with_connection

    bands = with_connection(compute_bands(cfg["V0"], m_max=cfg["m_max"], n_k=cfg["nk"],
                                          n_bands=cfg["n_bands"]))
    nb = bands.n_bands
    cols = ["k"] + [f"E{b}" for b in range(nb)] + ["A0"]
    rows = [[k, *bands.energies[i], bands.connection[i]] for i, k in enumerate(bands.k_samples)]
    write_csv(out.path(".csv"),
              ["k: quasimomentum [k_R]", "E<b>: energy of band b [E_R]",
               "A0: Berry-Zak connection of band 0 [d_L]", f"V0 = {_fmt(cfg['V0'])} [E_R]",
               f"zak_phase = {_fmt(bands.zak_phase)} [rad]"], cols, rows)
    print(f"band 0 width {bands.width(0):.6g} E_R, Zak phase {bands.zak_phase:.3g} rad")
    return {"width_band0": bands.width(0), "zak_phase": bands.zak_phase}


_SPINORS = {
    "symmetric": (1 / math.sqrt(2), 1 / math.sqrt(2)),
    "up": (1.0, 0.0),
    "down": (0.0, 1.0),
    "circular": (1 / math.sqrt(2), 1j / math.sqrt(2)),
}


def cmd_walk(cfg, out, ctx):
    from .band import compute_bands, peierls_phases, site_quasimomenta, with_connection
    from .idealwalk import WalkOperatorSpec, gauge_reduce, single_site_state, walk_evolve
    from .units import WalkGeometry

    if cfg["spinor"] not in _SPINORS:
        raise InvalidParameterError("spinor", f"choose one of {sorted(_SPINORS)}")
    geom = WalkGeometry(cfg["n_sites"], cfg["steps"])
    table = None
    summary = {}
    if cfg["phases"] != "none":
        if cfg["phases"] not in ("full", "geometric"):
            raise InvalidParameterError("phases", "choose none, full or geometric")
        bands = with_connection(compute_bands(cfg["V0"]))
        table = peierls_phases(bands, geom, cfg["F0"], geom.tau0_for(cfg["F0"]), cfg["x_bar"])
        if cfg["phases"] == "geometric":
            table = table.without_dynamical()
        red = gauge_reduce(table)
        summary.update(gamma=red.gamma, removable=red.removable, residual_max=red.residual_max,
                       twist=red.twist, boundary_phase=red.boundary_phase)
    spec = WalkOperatorSpec(alpha=cfg["alpha"], table=table, twist=cfg["twist"], boundary=cfg["boundary"])
    start = single_site_state(geom, spinor=_SPINORS[cfg["spinor"]])
    final = walk_evolve(start, spec, geom.steps)
    p_up, p_dn = final.probabilities(0), final.probabilities(1)
    k = site_quasimomenta(geom)
    write_csv(out.path(".csv"),
              ["site: walk site index", "k: site quasimomentum [k_R]",
               "p, p_up, p_down: site probabilities (total, per spin)"],
              ["site", "k", "p", "p_up", "p_down"],
              [[i, k[i], p_up[i] + p_dn[i], p_up[i], p_dn[i]] for i in range(geom.n_sites)])
    summary["norm"] = final.norm()
    print(f"walk: {geom.steps} steps on {geom.n_sites} sites, norm {final.norm():.15f}")
    return summary


def _fig2_worker(args):
    from .observables import infidelity_curve

    V0, cfg = args
    curve = infidelity_curve([V0], F0=cfg["F0"], n_sites=cfg["n_sites"], j_list=cfg["j"],
                             x_bar=cfg["x_bar"], use_flat_band=cfg["flat_band"],
                             m_max=cfg["m_max"], n_k=cfg["nk"])
    return list(curve.rows())


def cmd_fig2(cfg, out, ctx):
    from .observables import InfidelityCurve

    if any(j < 0 for j in cfg["j"]):
        raise InvalidParameterError("j", "step counts must be non-negative")
    rows = [r for part in _pool_map(_fig2_worker, [(v, cfg) for v in cfg["V0"]], ctx["threads"])
            for r in part]
    write_csv(out.path(".csv"),
              ["V0: lattice depth [E_R]", "j: number of walk steps",
               "infidelity: 1 - |<full|reference>|^2, reference without dynamical phases",
               f"F0 = {_fmt(cfg['F0'])} [E_R/d_L], n_sites = {cfg['n_sites']}, x_bar = {_fmt(cfg['x_bar'])} [d_L]"],
              ["V0", "j", "infidelity"], rows)
    js = sorted(set(cfg["j"]))
    data = np.array([r[2] for r in rows]).reshape(len(cfg["V0"]), len(js))
    curve = InfidelityCurve(tuple(cfg["V0"]), tuple(js), data)
    summary = {"monotone": curve.is_monotone(), "max_infidelity": float(data.max(initial=0.0))}
    for V0, j, val in rows:
        if V0 == 40.0 and j == 2000:
            summary["infidelity_V0_40_j_2000"] = val
    print(f"fig2: {len(rows)} points, monotone in V0: {summary['monotone']}")
    return summary


def _protocol_config(cfg):
    from .protocol import ProtocolConfig
    from .units import LatticeConfig, WalkGeometry

    lattice = LatticeConfig(d_lattice=cfg["d_lattice"], V0=cfg["V0"], F0=cfg["F0"], x_bar=cfg["x_bar"],
                            omega_x=TWO_PI * cfg["omega_x_hz"], omega_r=TWO_PI * cfg["omega_r_hz"],
                            g1d=cfg.get("g1d", 0.0))
    geom = WalkGeometry(cfg["n_sites"], cfg["steps"])
    if cfg["F0"] > 0:
        lattice = replace(lattice, tau0=geom.tau0_for(cfg["F0"]))
    return ProtocolConfig(lattice=lattice, geometry=geom, alpha=cfg["alpha"], reference=cfg["reference"],
                          expansion_factor=cfg["expansion_factor"], t_expand=cfg["t_expand"],
                          t_kick=cfg["t_kick"], force_delay=cfg["force_delay"],
                          nonlinear=cfg.get("nonlinear", False), n_points=cfg["n_points"],
                          points_per_site=cfg["points_per_site"], dt_lattice=cfg["dt_lattice"],
                          dt_free=cfg["dt_free"], record_frames=cfg["dump_animation"],
                          frame_bins=cfg["frame_bins"])


def _write_frames(out, result):
    frames = result.frames
    if not frames:
        return
    grid = result.final_state.grid
    rows = []
    for i, fr in enumerate(frames):
        rows.extend([i, fr["stage"], fr["time"], x, d] for x, d in zip(grid.x, fr["position_density"]))
    write_csv(out.path("_frames_position.csv"),
              ["frame: frame index", "time [hbar/E_R]", "x: position [d_L]",
               "density: spin-summed |psi|^2 [1/d_L]"],
              ["frame", "stage", "time", "x", "density"], rows)
    rows = []
    for i, fr in enumerate(frames):
        p = fr["quasimomentum_density"]
        centres = -1 + (np.arange(len(p)) + 0.5) * 2 / len(p)
        rows.extend([i, fr["stage"], fr["time"], k, v] for k, v in zip(centres, p))
    write_csv(out.path("_frames_quasimomentum.csv"),
              ["frame: frame index", "time [hbar/E_R]", "k: bin centre [k_R]",
               "probability: folded quasimomentum probability per bin"],
              ["frame", "stage", "time", "k", "probability"], rows)


def _run_protocol_command(cfg, out, label):
    from .protocol import run_protocol

    config = _protocol_config(cfg)
    result = run_protocol(config, progress=lambda name, st: print(f"  stage {name} done, t = {st.time:.2f}"))
    k = result.readout_distribution.k_centers
    write_csv(out.path(".csv"),
              ["site: walk site index", "k: site quasimomentum [k_R]",
               "p_walk: folded distribution before ramp-down", "p_readout: folded distribution after ramp-down",
               "p_mapped: distribution read from the quarter-period position density",
               f"p_reference: ideal walk ({config.reference})"],
              ["site", "k", "p_walk", "p_readout", "p_mapped", "p_reference"],
              [[i, k[i], result.walk_distribution.probabilities[i], result.readout_distribution.probabilities[i],
                result.mapped_distribution.probabilities[i], result.reference[i]] for i in range(len(k))])
    write_csv(out.path("_stages.csv"),
              ["t_end [hbar/E_R]", "position_width [d_L]", "momentum_width [k_R]"],
              ["stage", "t_end", "norm", "position_width", "momentum_width"],
              [[s.name, s.t_end, s.norm, s.position_width, s.momentum_width] for s in result.stages])
    _write_frames(out, result)
    summary = result.summary()
    write_json(out.path("_summary.json"), summary)
    print(f"{label}: TV(readout, reference) = {result.tv_readout:.4g}, "
          f"TV(mapped, reference) = {result.tv_mapped:.4g}")
    return {"tv_readout": result.tv_readout, "tv_mapped": result.tv_mapped, "tv_chain": result.tv_chain}


def cmd_fig3(cfg, out, ctx):
    return _run_protocol_command(cfg, out, "fig3")


def cmd_protocol(cfg, out, ctx):
    return _run_protocol_command(cfg, out, "protocol")


def _fig4_worker(args):
    from .protocol import run_gpe_walk
    from .units import WalkGeometry

    g, nonlinear, cfg, omega_x0 = args
    res = run_gpe_walk(V0=cfg["V0"], F0=cfg["F0"], omega_x0=omega_x0, g1d=g,
                       geometry=WalkGeometry(cfg["n_sites"], cfg["steps"]), nonlinear=nonlinear,
                       n_points=cfg["n_points"], points_per_site=cfg["points_per_site"], dt=cfg["dt"])
    return (res.distribution.k_centers, res.distribution.probabilities, res.initial_peak_width,
            res.peak_width)


def cmd_fig4(cfg, out, ctx):
    from .observables import total_variation
    from .units import LatticeConfig, g1d_rescaled, to_rescaled

    if cfg["g"] is None:
        omega_r = TWO_PI * cfg["omega_r_hz"]
        g_rep = g1d_rescaled(cfg["a_s"], omega_r, cfg["n_repulsive"], cfg["d_lattice"])
        g_att = -g1d_rescaled(cfg["a_s"], omega_r, cfg["n_attractive"], cfg["d_lattice"])
        couplings = [0.0, g_rep, g_att]
    elif len(cfg["g"]) == 1:
        couplings = [float(cfg["g"][0])] * 3
    elif len(cfg["g"]) == 3:
        couplings = [float(v) for v in cfg["g"]]
    else:
        raise InvalidParameterError("g", "give one coupling for all runs or three (linear, repulsive, attractive)")
    omega_x0 = to_rescaled(LatticeConfig(d_lattice=cfg["d_lattice"], omega_x=TWO_PI * cfg["omega_x_hz"],
                                         omega_r=TWO_PI * cfg["omega_r_hz"])).omega_x0
    jobs = [(g, True, cfg, omega_x0) for g in couplings] + [(0.0, False, cfg, omega_x0)]
    results = _pool_map(_fig4_worker, jobs, ctx["threads"])
    labels = ["linear", "repulsive", "attractive", "schrodinger"]
    k = results[0][0]
    write_csv(out.path(".csv"),
              ["k: site quasimomentum [k_R]",
               "linear, repulsive, attractive: mean-field runs with couplings "
               + ", ".join(_fmt(g) for g in couplings) + " [E_R d_L]",
               "schrodinger: linear propagator without the nonlinear stepper"],
              ["site", "k"] + labels,
              [[i, k[i]] + [r[1][i] for r in results] for i in range(len(k))])
    widths = {lab: r[3] for lab, r in zip(labels, results)}
    initial = {lab: r[2] for lab, r in zip(labels, results)}
    ordering = widths["repulsive"] < widths["linear"] < widths["attractive"]
    tv = total_variation(results[0][1], results[3][1])
    print(f"fig4: peak widths repulsive {widths['repulsive']:.4g} < linear {widths['linear']:.4g} "
          f"< attractive {widths['attractive']:.4g}: {ordering}; TV(linear GPE, Schrodinger) = {tv:.3g}")
    return {"couplings": couplings, "peak_width": widths, "initial_peak_width": initial,
            "ordering_holds": ordering, "tv_linear_vs_schrodinger": tv}


def _spectrum(spec, name):
    from .decoherence import NoiseSpectrum

    if spec is None:
        return None
    kind = spec.get("type")
    try:
        if kind == "zero":
            return NoiseSpectrum.zero()
        if kind == "flat":
            return NoiseSpectrum.flat(spec["variance"], spec["omega_max"], spec["omega_c"])
        if kind == "lorentzian":
            return NoiseSpectrum.lorentzian(spec["variance"], spec["corr_time"],
                                            spec.get("omega_c"), spec.get("omega_max"))
        if kind == "csv":
            return NoiseSpectrum.from_csv(spec["path"], spec.get("omega_c"))
        if kind == "inline":
            return NoiseSpectrum(np.asarray(spec["omega"], float), np.asarray(spec["density"], float),
                                 spec.get("omega_c", spec["omega"][0]))
    except KeyError as exc:
        raise InvalidParameterError(f"{name}.{exc.args[0]}", "missing spectrum parameter") from exc
    except OSError as exc:
        raise InvalidParameterError(f"{name}.path", f"cannot read spectrum: {exc.strerror}") from exc
    raise InvalidParameterError(f"{name}.type", "choose zero, flat, lorentzian, csv or inline")


def cmd_decohere(cfg, out, ctx):
    from .decoherence import dephasing_report, gradient_noise_p, monte_carlo_noisy_walk
    from .idealwalk import WalkOperatorSpec, single_site_state
    from .units import PhysicalConstants, WalkGeometry

    constants = PhysicalConstants(mf_gf=cfg["mf_gf"])
    field_s = _spectrum(cfg["field_spectrum"], "field_spectrum")
    coin_s = _spectrum(cfg["coin_spectrum"], "coin_spectrum") or field_s
    force_s = _spectrum(cfg["force_spectrum"], "force_spectrum")
    report = dephasing_report(cfg["tau"], cfg["n_sites"], cfg["beta"], force_spectrum=force_s,
                              field_spectrum=field_s, coin_spectrum=coin_s,
                              omega_rabi=TWO_PI * cfg["omega_rabi_hz"],
                              hbar_k=constants.hbar / cfg["d_lattice"], constants=constants)
    p_grad = gradient_noise_p(cfg["gradient_fluctuation"], cfg["beta"]) if cfg["gradient_fluctuation"] else 0.0
    report = replace(report, p=min(report.p + p_grad, 1.0),
                     extra={"p_force_spectrum": report.p, "p_gradient": p_grad})
    summary = report.to_dict()

    steps = np.arange(cfg["mc_steps"] + 1)
    analytic = np.exp(-steps * report.var_phi / 2)
    cols, rows = ["step", "coherence_analytic"], [[int(s), a] for s, a in zip(steps, analytic)]
    if cfg["monte_carlo"] > 0:
        sd = math.sqrt(report.var_phi)
        start = single_site_state(WalkGeometry(cfg["n_sites"], cfg["mc_steps"]))
        mc = monte_carlo_noisy_walk(start, WalkOperatorSpec(alpha=0.0), cfg["mc_steps"], cfg["monte_carlo"],
                                    phase_sampler=lambda rng, size: rng.normal(0.0, sd, size),
                                    seed=cfg["seed"])
        cols += ["coherence_mc", "coherence_mc_stderr"]
        rows = [r + [mc.coherence[s], mc.coherence_stderr[s]] for s, r in enumerate(rows)]
        dev = abs(mc.coherence[-1] - analytic[-1])
        err = mc.coherence_stderr[-1]
        summary["monte_carlo"] = {"realizations": cfg["monte_carlo"], "coherence": mc.coherence[-1],
                                  "stderr": err, "analytic": analytic[-1],
                                  "within_3_sigma": bool(dev <= 3 * err or dev < 1e-15)}
    write_csv(out.path(".csv"),
              ["step: walk step", "coherence: |<exp(i dphi)>| of the spin coherence after the step",
               f"tau = {_fmt(cfg['tau'])} [s]"], cols, rows)
    write_json(out.path(".json"), summary)
    print(f"decohere: p = {report.p:.3g}, C = {report.coherence:.12g}, "
          f"coherent steps = {report.coherent_steps:.4g}, coin error = {report.coin_error}")
    return summary


COMMANDS = {
    "band": (cmd_band, "Bloch bands and Berry-Zak connection"),
    "walk": (cmd_walk, "ideal quantum walk on the quasimomentum sites"),
    "fig2": (cmd_fig2, "infidelity of the Peierls-decorated walk against lattice depth"),
    "fig3": (cmd_fig3, "full continuum protocol against the ideal walk"),
    "fig4": (cmd_fig4, "mean-field walks with linear, repulsive and attractive interactions"),
    "protocol": (cmd_protocol, "full continuum protocol with stage records"),
    "decohere": (cmd_decohere, "dephasing, coherence and coin-error estimates"),
}


# ---------------------------------------------------------------------------
# argument parsing


def _flag(p, name, key=None, **kw):
    p.add_argument(name, dest=key or name.lstrip("-").replace("-", "_"), default=argparse.SUPPRESS, **kw)


def _protocol_flags(p):
    _flag(p, "--V0", type=float, help="lattice depth [E_R]")
    _flag(p, "--F0", type=float, help="Zeeman force [E_R/d_L]")
    _flag(p, "--d-lattice", type=float, help="lattice constant [m]")
    _flag(p, "--omega-x-hz", type=float, help="longitudinal trap frequency [Hz]")
    _flag(p, "--omega-r-hz", type=float, help="radial trap frequency [Hz]")
    _flag(p, "--x-bar", type=float, help="Zeeman zero point [d_L]")
    _flag(p, "--n-sites", type=int)
    _flag(p, "--steps", type=int)
    _flag(p, "--alpha", type=float, help="coin angle [rad]")
    _flag(p, "--reference", choices=["ideal", "dynamical-phases"])
    _flag(p, "--expansion-factor", type=float)
    _flag(p, "--t-expand", type=float, help="free expansion time [hbar/E_R]")
    _flag(p, "--t-kick", type=float, help="harmonic kick duration [hbar/E_R]")
    _flag(p, "--n-points", type=int)
    _flag(p, "--points-per-site", type=int)
    _flag(p, "--dt-lattice", type=float)
    _flag(p, "--dt-free", type=float)
    _flag(p, "--dump-animation", action="store_const", const=True,
          help="write per-frame position and quasimomentum densities")


def build_parser():
    parser = _Parser(prog="bzwalk", description="Quantum walks in the Brillouin zone of an optical lattice.")
    parser.add_argument("--version", action="version", version=f"bzwalk {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")
    subs = {}
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="JSON configuration or run manifest")
        p.add_argument("--output-dir", help=f"output directory (default ${OUTPUT_DIR_ENV} or .)")
        p.add_argument("--name", help="output file prefix (default: command name)")
        p.add_argument("--threads", type=int, default=None, help="limit on worker processes and BLAS threads")
        subs[name] = p

    p = subs["band"]
    _flag(p, "--V0", type=float, help="lattice depth [E_R]")
    _flag(p, "--nk", type=int, help="number of quasimomentum samples")
    _flag(p, "--m-max", type=int, help="plane-wave cutoff")
    _flag(p, "--n-bands", type=int)

    p = subs["walk"]
    _flag(p, "--n-sites", type=int)
    _flag(p, "--steps", type=int)
    _flag(p, "--alpha", type=float, help="coin angle [rad]")
    _flag(p, "--spinor", choices=sorted(_SPINORS))
    _flag(p, "--phases", choices=["none", "full", "geometric"], help="Peierls phases from the sin^2 lattice")
    _flag(p, "--V0", type=float)
    _flag(p, "--F0", type=float)
    _flag(p, "--x-bar", type=float)
    _flag(p, "--twist", type=float, help="extra wrap-link phase [rad]")
    _flag(p, "--boundary", choices=["ring", "open"])

    p = subs["fig2"]
    _flag(p, "--V0", type=float, nargs="+", help="lattice depths [E_R]")
    _flag(p, "--j", type=int, nargs="+", help="step counts")
    _flag(p, "--F0", type=float)
    _flag(p, "--n-sites", type=int)
    _flag(p, "--x-bar", type=float)
    _flag(p, "--flat-band", action="store_const", const=True, help="synthetic dispersionless band")
    _flag(p, "--nk", type=int)
    _flag(p, "--m-max", type=int, help="plane-wave cutoff")

    _protocol_flags(subs["fig3"])
    _protocol_flags(subs["protocol"])
    _flag(subs["protocol"], "--g1d", type=float, help="1-D coupling [E_R d_L]")
    _flag(subs["protocol"], "--nonlinear", action="store_const", const=True)

    p = subs["fig4"]
    _flag(p, "--V0", type=float)
    _flag(p, "--F0", type=float)
    _flag(p, "--omega-x-hz", type=float)
    _flag(p, "--omega-r-hz", type=float)
    _flag(p, "--a-s", type=float, help="scattering length magnitude [m]")
    _flag(p, "--n-repulsive", type=int)
    _flag(p, "--n-attractive", type=int)
    _flag(p, "--g", type=float, nargs="+",
          help="couplings [E_R d_L]: one value for all runs, or linear repulsive attractive")
    _flag(p, "--steps", type=int)
    _flag(p, "--dt", type=float)

    p = subs["decohere"]
    _flag(p, "--tau", type=float, help="step duration [s]")
    _flag(p, "--n-sites", type=int)
    _flag(p, "--beta", type=float, help="site width over peak width")
    _flag(p, "--gradient-fluctuation", type=float, help="relative rms gradient fluctuation")
    _flag(p, "--omega-rabi-hz", type=float)
    _flag(p, "--field-rms", type=float, help="rms of a flat field-noise spectrum [T]")
    _flag(p, "--field-spectrum-csv", help="field-noise spectrum file: omega [rad/s], S [T^2 s/rad]")
    _flag(p, "--monte-carlo", type=int, help="number of Monte Carlo realizations")
    _flag(p, "--mc-steps", type=int)
    _flag(p, "--seed", type=int)
    return parser


_COMMON = ("command", "config", "output_dir", "name", "threads")


def _overrides(command, args):
    ov = {k: v for k, v in vars(args).items() if k not in _COMMON}
    if command == "decohere":
        base = dict(DEFAULTS["decohere"]["field_spectrum"])
        if "field_rms" in ov:
            base["variance"] = ov.pop("field_rms") ** 2
            ov["field_spectrum"] = base
        if "field_spectrum_csv" in ov:
            ov["field_spectrum"] = {"type": "csv", "path": ov.pop("field_spectrum_csv")}
    return ov


def run(args):
    command = args.command
    fn, _ = COMMANDS[command]
    file_cfg = load_config_file(args.config, command) if args.config else None
    if args.threads is not None and args.threads < 1:
        raise InvalidParameterError("threads", "must be >= 1")
    cfg = resolve_config(command, file_cfg, _overrides(command, args))
    out_dir = args.output_dir or os.environ.get(OUTPUT_DIR_ENV) or "."
    out = Outputs(out_dir, args.name or command)
    ctx = {"threads": args.threads or 1}
    limits = contextlib.nullcontext()
    if args.threads is not None:
        from threadpoolctl import threadpool_limits
        limits = threadpool_limits(limits=args.threads)
    t0 = time.perf_counter()
    with limits:
        summary = fn(cfg, out, ctx)
    manifest = RunManifest(command, cfg, cfg.get("seed"), __version__, list(out.files),
                           time.perf_counter() - t0, summary)
    manifest.write(out.directory / f"{out.name}_manifest.json")
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        return run(args)
    except UsageError as exc:
        print(f"bzwalk: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvalidParameterError as exc:
        print(f"bzwalk: invalid parameter {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, BoundaryViolationError) as exc:
        print(f"bzwalk: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
