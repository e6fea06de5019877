"""Closed-form model of the two three-arm (Franson-type) interferometers.

A photon taking arm a (0 short, 1 medium, 2 long) is delayed by a * delta_tau,
so a pair that took arms (a, b) at Alice and Bob lands at an arrival-time
difference ``t_B - t_A = (b - a) * delta_tau``.  Pairs with the same
difference are indistinguishable and interfere.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .quantum_core import (
    OMEGA,
    JointOutcomeTable,
    PhaseVector,
    QutritPairState,
    check_lambda,
)

PATH_NAMES = ("s", "m", "l")
OFFSETS = (-2, -1, 0, 1, 2)

__all__ = [
    "PhaseVector",
    "CouplerRatios",
    "PeakStructure",
    "peak_structure",
    "path_amplitudes",
    "central_coincidence_prob",
    "central_table",
    "fringe_prob",
    "satellite_fringe_prob",
    "joint_distribution",
]


@dataclass(frozen=True)
class CouplerRatios:
    """Power splitting (s, m, l) of one 3x3 fiber coupler."""

    split: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)

    def __post_init__(self):
        s = np.asarray(self.split, dtype=float)
        if s.shape != (3,):
            raise ValueError("coupler ratios need three entries")
        if np.any(s < 0):
            raise ValueError(f"coupler ratios must be non-negative, got {self.split}")
        if abs(s.sum() - 1) > 1e-12:
            raise ValueError(f"coupler ratios must sum to 1, got {s.sum()!r}")
        object.__setattr__(self, "split", tuple(float(x) for x in s))

    @classmethod
    def ideal(cls) -> "CouplerRatios":
        return cls()

    @classmethod
    def normalized(cls, split) -> "CouplerRatios":
        s = np.asarray(split, dtype=float)
        return cls(tuple(s / s.sum()))


@dataclass(frozen=True)
class PeakStructure:
    offsets: tuple[int, ...]
    contributing_paths: dict[int, tuple[tuple[str, str], ...]] = field(hash=False)

    @property
    def multiplicities(self) -> tuple[int, ...]:
        return tuple(len(self.contributing_paths[n]) for n in self.offsets)


def peak_structure() -> PeakStructure:
    paths = {n: [] for n in OFFSETS}
    for a in range(3):
        for b in range(3):
            paths[b - a].append((PATH_NAMES[a], PATH_NAMES[b]))
    return PeakStructure(OFFSETS, {n: tuple(p) for n, p in paths.items()})


def _arm_weights(couplers) -> np.ndarray:
    """Per-arm amplitude weight sqrt(in_a * out_a) of one interferometer.

    ``couplers`` is either one CouplerRatios (the same coupler splits and
    recombines) or an ``(input, output)`` pair.
    """
    if isinstance(couplers, CouplerRatios):
        c_in = c_out = couplers
    else:
        c_in, c_out = couplers
    return np.sqrt(np.asarray(c_in.split) * np.asarray(c_out.split))


def path_amplitudes(couplers_A=None, couplers_B=None) -> QutritPairState:
    wa = _arm_weights(couplers_A or CouplerRatios())
    wb = _arm_weights(couplers_B or CouplerRatios())
    return QutritPairState.from_amplitudes(wa * wb)


def _check_output(j: int, k: int) -> None:
    if j not in (0, 1, 2) or k not in (0, 1, 2):
        raise ValueError(f"detector outputs must be 0, 1 or 2, got ({j}, {k})")


def output_phases(j: int, k: int) -> tuple[float, float]:
    """Detector-dependent phases (phi_m, phi_l) added to the medium and long arms."""
    c = (j - k) % 3
    return 2 * np.pi * c / 3, 4 * np.pi * c / 3


def central_coincidence_prob(lam: float, alice: PhaseVector, bob: PhaseVector, j: int, k: int) -> float:
    """Probability of outputs (j, k) for a central-peak coincidence, ideal couplers."""
    check_lambda(lam)
    _check_output(j, k)
    phi_m, phi_l = output_phases(j, k)
    t_m = alice.medium + bob.medium + phi_m
    t_l = alice.long + bob.long + phi_l
    return (3 + 2 * lam * (np.cos(t_m) + np.cos(t_l) + np.cos(t_m - t_l))) / 27


def central_table(lam: float, alice: PhaseVector, bob: PhaseVector) -> JointOutcomeTable:
    return JointOutcomeTable(
        np.array([[central_coincidence_prob(lam, alice, bob, j, k) for k in range(3)] for j in range(3)])
    )


def fringe_prob(lam: float, theta, j: int, k: int):
    """Central-peak probability along the locked scan, total phases (theta, 2 theta).

    Vectorized over ``theta``.
    """
    check_lambda(lam)
    _check_output(j, k)
    phi_m, phi_l = output_phases(j, k)
    theta = np.asarray(theta, dtype=float)
    t_m = theta + phi_m
    t_l = 2 * theta + phi_l
    return (3 + 2 * lam * (np.cos(t_m) + np.cos(t_l) + np.cos(t_m - t_l))) / 27


def satellite_phase(alice: PhaseVector, bob: PhaseVector, offset: int, j: int, k: int) -> float:
    """Relative phase of the two interfering path pairs in a satellite peak."""
    if offset == 1:
        base = alice.medium + bob.long - bob.medium
    elif offset == -1:
        base = alice.long + bob.medium - alice.medium
    else:
        raise ValueError(f"satellite offset must be +1 or -1, got {offset!r}")
    return base + 2 * np.pi * ((j - k) % 3) / 3


def satellite_fringe_prob(lam: float, alice: PhaseVector, bob: PhaseVector, offset: int, j: int, k: int) -> float:
    """Probability of outputs (j, k) given a coincidence in the +/- delta_tau peak.

    Ideal couplers; Werner noise flattens these fringes the same way it
    flattens the central one.
    """
    check_lambda(lam)
    _check_output(j, k)
    return (1 + lam * np.cos(satellite_phase(alice, bob, offset, j, k))) / 9


def joint_distribution(alice: PhaseVector, bob: PhaseVector, couplers_A=None, couplers_B=None) -> np.ndarray:
    """Pure-state probabilities over (offset, j, k), shape (5, 3, 3).

    Axis 0 runs over offsets -2..+2.  Every path pair (a, b) contributes an
    amplitude ``wA_a wB_b exp(i(alpha_a + beta_b)) w^(a j - b k)``; pairs with
    equal ``b - a`` add coherently.  Normalized over all 45 cells.
    """
    wa = _arm_weights(couplers_A or CouplerRatios()) * np.exp(1j * alice.as_array())
    wb = _arm_weights(couplers_B or CouplerRatios()) * np.exp(1j * bob.as_array())
    j = np.arange(3)
    # fa[a, j] and fb[b, k] are single-photon amplitudes arm -> output
    fa = wa[:, None] * OMEGA ** (np.arange(3)[:, None] * j[None, :])
    fb = wb[:, None] * OMEGA ** (-np.arange(3)[:, None] * j[None, :])
    amp = np.zeros((5, 3, 3), dtype=complex)
    for a in range(3):
        for b in range(3):
            amp[b - a + 2] += np.outer(fa[a], fb[b])
    p = np.abs(amp) ** 2
    return p / p.sum()
