import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qutrit_bell.optics import (
    CouplerRatios,
    central_coincidence_prob,
    central_table,
    fringe_prob,
    joint_distribution,
    path_amplitudes,
    peak_structure,
    satellite_fringe_prob,
    satellite_phase,
)
from qutrit_bell.quantum_core import PhaseVector, born_rule_oracle, make_max_entangled

A1 = PhaseVector(0.0, 0.0)
B1 = PhaseVector(math.pi / 6, math.pi / 3)

phase = st.floats(-20, 20, allow_nan=False)
phase_vectors = st.builds(PhaseVector, phase, phase)


def test_peak_structure():
    ps = peak_structure()
    assert ps.offsets == (-2, -1, 0, 1, 2)
    assert ps.multiplicities == (1, 2, 3, 2, 1)
    assert set(ps.contributing_paths[0]) == {("s", "s"), ("m", "m"), ("l", "l")}
    assert set(ps.contributing_paths[1]) == {("s", "m"), ("m", "l")}
    assert ps.contributing_paths[2] == (("s", "l"),)
    order = "sml"
    for n, pairs in ps.contributing_paths.items():
        assert all(order.index(b) - order.index(a) == n for a, b in pairs)


@pytest.mark.parametrize(
    "lam, j, k, expected",
    [
        (1.0, 0, 0, (4 + 2 * math.sqrt(3)) / 27),
        (1.0, 0, 1, 1 / 27),
    ],
)
def test_central_probability_bell_settings(lam, j, k, expected):
    assert central_coincidence_prob(lam, A1, B1, j, k) == pytest.approx(expected, abs=1e-12)


def test_central_probability_limits():
    assert central_coincidence_prob(0.0, PhaseVector(0.4, -3), PhaseVector(2, 1), 2, 1) == pytest.approx(1 / 9)
    for j in range(3):
        assert central_coincidence_prob(1.0, A1, A1, j, j) == pytest.approx(1 / 3, abs=1e-15)


@pytest.mark.parametrize("args", [(1.1, 0, 0), (0.5, 3, 0), (0.5, 0, -1)])
def test_central_probability_rejects(args):
    lam, j, k = args
    with pytest.raises(ValueError):
        central_coincidence_prob(lam, A1, B1, j, k)


@settings(max_examples=300)
@given(phase_vectors, phase_vectors, st.floats(0, 1))
def test_central_table_normalized_and_symmetric(alice, bob, lam):
    p = central_table(lam, alice, bob).probs
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    for c in range(3):
        cls = [p[j, (j - c) % 3] for j in range(3)]
        assert max(cls) - min(cls) < 1e-14


@settings(max_examples=200)
@given(phase_vectors, phase_vectors, st.floats(0, 1), st.integers(-3, 3), st.integers(-3, 3))
def test_two_pi_periodicity(alice, bob, lam, n1, n2):
    shifted = PhaseVector(alice.medium + 2 * math.pi * n1, alice.long + 2 * math.pi * n2)
    for j in range(3):
        for k in range(3):
            assert central_coincidence_prob(lam, shifted, bob, j, k) == pytest.approx(
                central_coincidence_prob(lam, alice, bob, j, k), abs=1e-12)


@settings(max_examples=200)
@given(phase_vectors, phase_vectors)
def test_closed_form_matches_oracle(alice, bob):
    oracle = born_rule_oracle(make_max_entangled(), alice, bob).probs
    assert np.allclose(central_table(1.0, alice, bob).probs, oracle, atol=1e-12)


def test_fringe_prob_values():
    assert fringe_prob(1.0, 0.0, 1, 1) == pytest.approx(1 / 3)
    assert fringe_prob(1.0, 2 * math.pi / 3, 0, 0) == pytest.approx(0.0, abs=1e-15)
    assert fringe_prob(0.848, 2 * math.pi / 3, 2, 2) == pytest.approx(0.016888888888888887, abs=1e-12)


def test_fringe_minimum_by_grid():
    theta = np.linspace(0, 2 * np.pi, 300001)
    f = 2 * np.cos(theta) + np.cos(2 * theta)
    i = np.argmin(f)
    assert f[i] == pytest.approx(-1.5, abs=1e-9)
    assert theta[i] == pytest.approx(2 * np.pi / 3, abs=1e-4) or theta[i] == pytest.approx(4 * np.pi / 3, abs=1e-4)


def test_fringe_equals_locked_central():
    for th in np.linspace(-4, 4, 17):
        for j in range(3):
            for k in range(3):
                assert fringe_prob(0.7, th, j, k) == pytest.approx(
                    central_coincidence_prob(0.7, PhaseVector(th, 2 * th), A1, j, k), abs=1e-14)


@pytest.mark.parametrize("lam", np.round(np.arange(0.1, 1.01, 0.1), 10))
def test_fringe_visibility_identity(lam):
    theta = np.linspace(0, 2 * np.pi, 30001)
    f = fringe_prob(lam, theta, 0, 0)
    vis = (f.max() - f.min()) / (f.max() + f.min())
    assert vis == pytest.approx(3 * lam / (2 + lam), abs=1e-9)


def test_satellite_constructive_maximum():
    p = satellite_fringe_prob(1.0, A1, A1, 1, 0, 0)
    assert p == pytest.approx(2 / 9)
    assert p == max(satellite_fringe_prob(1.0, PhaseVector(x, 0), A1, 1, 0, 0) for x in np.linspace(0, 6, 50))


def test_satellite_rejects_offset():
    with pytest.raises(ValueError):
        satellite_fringe_prob(1.0, A1, B1, 2, 0, 0)


def test_satellite_rates_equal_under_lock():
    theta = np.linspace(0, 4 * np.pi, 801)
    plus = [satellite_phase(PhaseVector(t, 2 * t), B1, 1, 0, 0) for t in theta]
    minus = [satellite_phase(PhaseVector(t, 2 * t), B1, -1, 0, 0) for t in theta]
    assert np.allclose(np.gradient(plus, theta), 1.0)
    assert np.allclose(np.gradient(minus, theta), 1.0)


def test_satellite_long_arm_alone():
    scan = np.linspace(0, 2 * np.pi, 50)
    plus = [satellite_fringe_prob(0.9, PhaseVector(0.2, a), B1, 1, 0, 0) for a in scan]
    minus = [satellite_fringe_prob(0.9, PhaseVector(0.2, a), B1, -1, 0, 0) for a in scan]
    assert np.ptp(plus) < 1e-15
    assert np.ptp(minus) > 0.19


@settings(max_examples=100)
@given(phase_vectors, phase_vectors, st.floats(0, 1), st.sampled_from([-1, 1]))
def test_satellite_normalized(alice, bob, lam, n):
    total = sum(satellite_fringe_prob(lam, alice, bob, n, j, k) for j in range(3) for k in range(3))
    assert total == pytest.approx(1.0, abs=1e-12)


def test_path_amplitudes_ideal():
    assert np.allclose(path_amplitudes().vector, 1 / math.sqrt(3))


def test_path_amplitudes_one_asymmetric_coupler():
    skew = CouplerRatios((0.35, 0.33, 0.32))
    psi = path_amplitudes((skew, CouplerRatios()), CouplerRatios())
    expected = np.sqrt([0.35, 0.33, 0.32])
    expected /= np.linalg.norm(expected)
    assert np.allclose(psi.vector, expected, atol=1e-12)
    assert psi.norm() == pytest.approx(1.0, abs=1e-12)


def test_path_amplitudes_zero_medium():
    psi = path_amplitudes(CouplerRatios((0.5, 0.0, 0.5)))
    assert psi.vector[1] == 0
    assert psi.norm() == pytest.approx(1.0)


def test_coupler_validation():
    with pytest.raises(ValueError):
        CouplerRatios((0.5, 0.6, -0.1))
    with pytest.raises(ValueError):
        CouplerRatios((0.5, 0.3, 0.3))


@settings(max_examples=100)
@given(phase_vectors, phase_vectors)
def test_joint_distribution_ideal(alice, bob):
    p = joint_distribution(alice, bob)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(p.sum(axis=(1, 2)), np.array([1, 2, 3, 2, 1]) / 9, atol=1e-12)
    assert np.allclose(p[2] * 3, central_table(1.0, alice, bob).probs, atol=1e-12)
    for n in (-1, 1):
        sat = np.array([[satellite_fringe_prob(1.0, alice, bob, n, j, k) for k in range(3)] for j in range(3)])
        assert np.allclose(p[n + 2] * 9 / 2, sat, atol=1e-12)


@settings(max_examples=50)
@given(phase_vectors, phase_vectors,
       st.lists(st.floats(0.05, 1.0), min_size=3, max_size=3),
       st.lists(st.floats(0.05, 1.0), min_size=3, max_size=3))
def test_joint_distribution_asymmetric_central_matches_oracle(alice, bob, ra, rb):
    ca, cb = CouplerRatios.normalized(ra), CouplerRatios.normalized(rb)
    p = joint_distribution(alice, bob, ca, cb)
    central = p[2] / p[2].sum()
    oracle = born_rule_oracle(path_amplitudes(ca, cb), alice, bob).probs
    assert np.allclose(central, oracle, atol=1e-12)
