import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bzwalk.band import PeierlsTable, flat_band, peierls_phases
from bzwalk.errors import BoundaryViolationError, InvalidParameterError
from bzwalk.idealwalk import (WalkOperatorSpec, WalkState, center_site, dense_walk_operator, dirac_propagate,
                              gauge_reduce, single_site_state, twist_phase, walk_evolve, walk_trajectory)
from bzwalk.units import WalkGeometry

# Exact 10-step Hadamard walk from site 9 of a 20-site ring, spinor (1, 1)/sqrt(2),
# coin [[c, i s], [i s, c]] at alpha = pi/2; enumerated with exact rationals.
HADAMARD_10 = [Fraction(0), Fraction(33, 512), Fraction(0), Fraction(269, 1024), Fraction(0), Fraction(1, 16),
               Fraction(0), Fraction(19, 256), Fraction(0), Fraction(9, 128), Fraction(0), Fraction(19, 256),
               Fraction(0), Fraction(1, 16), Fraction(0), Fraction(269, 1024), Fraction(0), Fraction(33, 512),
               Fraction(0), Fraction(1, 512)]


def random_table(geometry, rng):
    n = geometry.n_sites
    return PeierlsTable.from_parts(geometry, rng.uniform(-4, 4, n), rng.uniform(-4, 4, n))


@settings(max_examples=60, deadline=None)
@given(m=st.integers(1, 16), j=st.integers(0, 64), seed=st.integers(0, 2 ** 32 - 1),
       alpha=st.floats(-7, 7), twist=st.floats(-4, 4), coin_phase=st.floats(-4, 4))
def test_matches_dense_operator(m, j, seed, alpha, twist, coin_phase):
    rng = np.random.default_rng(seed)
    geom = WalkGeometry(2 * m)
    spec = WalkOperatorSpec(alpha, random_table(geom, rng), twist, coin_phase=coin_phase)
    amp = rng.normal(size=(2 * m, 2)) + 1j * rng.normal(size=(2 * m, 2))
    start = WalkState(amp / np.linalg.norm(amp), geom)
    out = walk_evolve(start, spec, j).amplitudes.reshape(-1)
    ref = np.linalg.matrix_power(dense_walk_operator(spec, geom), j) @ start.amplitudes.reshape(-1)
    assert np.max(np.abs(out - ref)) < 1e-12


def test_dense_operator_is_unitary():
    geom = WalkGeometry(12)
    w = dense_walk_operator(WalkOperatorSpec(1.1, random_table(geom, np.random.default_rng(0)), 0.7), geom)
    assert np.max(np.abs(w.conj().T @ w - np.eye(24))) < 1e-13


def test_hadamard_exact_distribution():
    geom = WalkGeometry(20)
    assert center_site(geom) == 9
    p = walk_evolve(single_site_state(geom), WalkOperatorSpec(), 10).probabilities()
    np.testing.assert_allclose(p, [float(f) for f in HADAMARD_10], atol=1e-14)
    assert sum(HADAMARD_10) == 1


def test_symmetric_spinor_gives_mirror_symmetric_walk():
    geom = WalkGeometry(40)
    p = walk_evolve(single_site_state(geom), WalkOperatorSpec(), 12).probabilities()
    c = center_site(geom)
    np.testing.assert_allclose(p[c - 12:c + 13], p[c - 12:c + 13][::-1], atol=1e-14)


@pytest.mark.parametrize("twist", [0.3, 1.7, math.pi])
def test_twist_invisible_before_wrap(twist):
    geom = WalkGeometry(20)
    start = single_site_state(geom)
    a = walk_trajectory(start, WalkOperatorSpec(twist=0.0), 10)
    b = walk_trajectory(start, WalkOperatorSpec(twist=twist), 10)
    for sa, sb in zip(a, b):
        np.testing.assert_allclose(sa.probabilities(), sb.probabilities(), atol=1e-14)


def test_twist_visible_after_wrap():
    geom = WalkGeometry(20)
    start = single_site_state(geom)
    a = walk_evolve(start, WalkOperatorSpec(twist=0.0), 20).probabilities()
    b = walk_evolve(start, WalkOperatorSpec(twist=math.pi / 2), 20).probabilities()
    assert np.sum(np.abs(a - b)) > 1e-3


def test_open_boundary():
    geom = WalkGeometry(20)
    spec = WalkOperatorSpec(boundary="open")
    # the down branch starts 9 sites from the edge; the 10th step would wrap it
    walk_evolve(single_site_state(geom), spec, 9)
    with pytest.raises(BoundaryViolationError):
        walk_evolve(single_site_state(geom), spec, 10)
    with pytest.raises(InvalidParameterError):
        WalkOperatorSpec(boundary="mirror")


def test_step_count_validation():
    with pytest.raises(InvalidParameterError):
        walk_evolve(single_site_state(WalkGeometry(4)), WalkOperatorSpec(), -1)
    with pytest.raises(InvalidParameterError):
        single_site_state(WalkGeometry(4), site=4)


def test_gauge_reduce_quarter_site_offset():
    geom = WalkGeometry(20)
    table = peierls_phases(flat_band(0.0), geom, 0.2, geom.tau0_for(0.2), x_bar=0.25)
    red = gauge_reduce(table)
    assert red.removable
    assert red.twist == pytest.approx(-math.pi / 2, abs=1e-10)
    assert red.boundary_phase == pytest.approx(math.pi / 2, abs=1e-10)
    assert not red.globally_removable
    assert twist_phase(geom, 0.25) == pytest.approx(-math.pi / 2, abs=1e-15)


def test_gauge_reduced_walk_is_equivalent():
    # the decorated walk and the twisted bare walk agree in distribution
    geom = WalkGeometry(20)
    table = peierls_phases(flat_band(0.7), geom, 0.2, geom.tau0_for(0.2), x_bar=0.3)
    red = gauge_reduce(table)
    start = single_site_state(geom)
    full = walk_evolve(start, WalkOperatorSpec(table=table), 40).probabilities()
    bare = walk_evolve(start, WalkOperatorSpec(twist=red.twist), 40).probabilities()
    np.testing.assert_allclose(full, bare, atol=1e-12)


def test_gauge_reduce_flags_dispersive_table():
    geom = WalkGeometry(20)
    rng = np.random.default_rng(3)
    red = gauge_reduce(random_table(geom, rng))
    assert not red.removable and red.residual_max > 0.1


def test_dirac_pure_translation():
    m = 64
    k = -1 + 2 * np.arange(1, m + 1) / m
    psi = np.stack([np.exp(-k ** 2 / 0.02), np.exp(-k ** 2 / 0.02)]).astype(complex)
    F0 = 0.2
    out = dirac_propagate(psi, F0, 0.0, 3 * (2 / m) * math.pi / F0)
    np.testing.assert_allclose(out[0], np.roll(psi[0], 3), atol=1e-12)
    np.testing.assert_allclose(out[1], np.roll(psi[1], -3), atol=1e-12)


def test_dirac_pure_rotation_is_coin():
    from bzwalk.propagator import coin_matrix

    psi = np.array([[1.0, 0.5], [0.0, 0.2j]], complex)
    out = dirac_propagate(psi, 0.0, 2.0, 0.7)
    np.testing.assert_allclose(out, coin_matrix(1.4) @ psi, atol=1e-14)


def test_dirac_pulse_then_drift_is_walk_step():
    geom = WalkGeometry(16)
    start = single_site_state(geom)
    psi = start.amplitudes.T.copy()
    F0 = 0.2
    for _ in range(3):
        psi = dirac_propagate(psi, 0.0, 1.0, math.pi / 2)
        psi = dirac_propagate(psi, F0, 0.0, geom.tau0_for(F0))
    ref = walk_evolve(start, WalkOperatorSpec(), 3).amplitudes.T
    np.testing.assert_allclose(psi, ref, atol=1e-12)


def test_dirac_rejects_bad_shape():
    with pytest.raises(InvalidParameterError):
        dirac_propagate(np.zeros(5), 0.2, 1.0, 1.0)
