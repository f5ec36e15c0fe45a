import math
import time
from dataclasses import replace

import pytest

from bzwalk.protocol import ProtocolConfig, reference_distribution, run_gpe_walk, run_protocol
from bzwalk.units import LatticeConfig, g1d_rescaled

# Coupling for a_s = 5.3 nm, N = 100, omega_r = 2 pi x 100 Hz, d_L = 532 nm.
G_REPULSIVE = g1d_rescaled(5.3e-9, 2 * math.pi * 100, 100, 532e-9)
G_ATTRACTIVE = -g1d_rescaled(5.3e-9, 2 * math.pi * 100, 10, 532e-9)


def protocol_config(V0, steps=10, reference="ideal"):
    from bzwalk.units import WalkGeometry

    return ProtocolConfig(lattice=LatticeConfig(V0=V0), geometry=WalkGeometry(20, steps), reference=reference)


@pytest.fixture(scope="session")
def protocol_v20():
    t0 = time.perf_counter()
    result = run_protocol(protocol_config(20.0))
    result.elapsed = time.perf_counter() - t0
    return result


@pytest.fixture(scope="session")
def protocol_v2():
    """One shallow-lattice run compared with both reference walks."""
    import warnings

    config = protocol_config(2.0)
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        result = run_protocol(config)
    result.elapsed = time.perf_counter() - t0
    dyn = reference_distribution(replace(config, reference="dynamical-phases"))
    return result, dyn


@pytest.fixture(scope="session")
def gpe_runs():
    return {
        "linear": run_gpe_walk(g1d=0.0),
        "repulsive": run_gpe_walk(g1d=G_REPULSIVE),
        "attractive": run_gpe_walk(g1d=G_ATTRACTIVE),
        "schrodinger": run_gpe_walk(g1d=0.0, nonlinear=False),
    }
