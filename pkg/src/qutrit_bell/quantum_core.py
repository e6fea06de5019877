"""Exact two-qutrit state algebra and the Born-rule reference calculation.

Path labels a = 0, 1, 2 stand for the short, medium and long interferometer
arms.  The post-selected pair state is ``sum_a c_a |a a>``; both analyzers
act as tritters (3x3 discrete Fourier transforms), Bob's being the complex
conjugate of Alice's.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OMEGA = np.exp(2j * np.pi / 3)


@dataclass(frozen=True)
class PhaseVector:
    """One party's (medium, long) interferometer phases in radians.

    The short arm is the phase reference and is always zero.
    """

    medium: float
    long: float

    def __post_init__(self):
        if not (np.isfinite(self.medium) and np.isfinite(self.long)):
            raise ValueError(f"phases must be finite, got {self!r}")

    def __add__(self, other: "PhaseVector") -> "PhaseVector":
        return PhaseVector(self.medium + other.medium, self.long + other.long)

    def __neg__(self) -> "PhaseVector":
        return PhaseVector(-self.medium, -self.long)

    def as_array(self) -> np.ndarray:
        """Phases of the three arms (short, medium, long)."""
        return np.array([0.0, self.medium, self.long])

    def is_locked(self, ratio: float = 2.0, atol: float = 1e-12) -> bool:
        return abs(self.long - ratio * self.medium) <= atol


@dataclass(frozen=True)
class QutritPairState:
    """Amplitudes (c_s, c_m, c_l) of ``c_s|ss> + c_m|mm> + c_l|ll>``."""

    amplitudes: tuple[complex, complex, complex]

    def __post_init__(self):
        if len(self.amplitudes) != 3:
            raise ValueError("a qutrit pair state needs exactly three amplitudes")

    @classmethod
    def from_amplitudes(cls, amplitudes) -> "QutritPairState":
        """Build a state, normalizing the supplied amplitudes."""
        c = np.asarray(amplitudes, dtype=complex)
        norm = np.linalg.norm(c)
        if norm == 0:
            raise ValueError("amplitudes must not all vanish")
        c = c / norm
        return cls(tuple(complex(x) for x in c))

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.amplitudes, dtype=complex)

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.vector) ** 2

    def norm(self) -> float:
        return float(np.linalg.norm(self.vector))

    def ket(self) -> np.ndarray:
        """The state as a 9-component vector in the |a>_A |b>_B basis."""
        psi = np.zeros(9, dtype=complex)
        for a, c in enumerate(self.amplitudes):
            psi[3 * a + a] = c
        return psi


@dataclass(frozen=True)
class WernerState:
    """``lam |psi><psi| + (1 - lam) I/9``."""

    pure: QutritPairState
    lam: float

    def __post_init__(self):
        check_lambda(self.lam)

    def density_matrix(self) -> np.ndarray:
        psi = self.pure.ket()
        return self.lam * np.outer(psi, psi.conj()) + (1 - self.lam) * np.eye(9) / 9


@dataclass(frozen=True)
class JointOutcomeTable:
    """P(j, k) for Alice output j and Bob output k."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.shape != (3, 3):
            raise ValueError(f"expected a 3x3 table, got shape {p.shape}")
        if np.any(p < -1e-15):
            raise ValueError("negative probability in outcome table")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"outcome table sums to {p.sum()!r}, not 1")
        object.__setattr__(self, "probs", p)

    def __getitem__(self, jk):
        return self.probs[jk]


def check_lambda(lam: float) -> float:
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"mixing parameter must lie in [0, 1], got {lam!r}")
    return lam


def make_max_entangled() -> QutritPairState:
    c = 1 / np.sqrt(3)
    return QutritPairState((c, c, c))


def werner_probability(w: WernerState, pure_prob: float) -> float:
    """Outcome probability under Werner noise, given the pure-state value."""
    if not 0.0 <= pure_prob <= 1.0:
        raise ValueError(f"pure_prob must lie in [0, 1], got {pure_prob!r}")
    return w.lam * pure_prob + (1 - w.lam) / 9


def tritter(conjugate: bool = False) -> np.ndarray:
    """U[j, a] = exp(2 pi i a j / 3) / sqrt(3); Bob uses the conjugate."""
    j, a = np.meshgrid(np.arange(3), np.arange(3), indexing="ij")
    u = OMEGA ** (j * a) / np.sqrt(3)
    return u.conj() if conjugate else u


def born_rule_oracle(
    state: QutritPairState, alice_phases: PhaseVector, bob_phases: PhaseVector
) -> JointOutcomeTable:
    """Outcome table by explicit tensor-product evolution of the 9-dim ket."""
    ua = tritter() @ np.diag(np.exp(1j * alice_phases.as_array()))
    ub = tritter(conjugate=True) @ np.diag(np.exp(1j * bob_phases.as_array()))
    out = np.kron(ua, ub) @ state.ket()
    probs = (np.abs(out) ** 2).reshape(3, 3)
    return JointOutcomeTable(probs / probs.sum())


def werner_table(w: WernerState, alice_phases: PhaseVector, bob_phases: PhaseVector) -> JointOutcomeTable:
    """Outcome table of a Werner state computed from its density matrix."""
    ua = tritter() @ np.diag(np.exp(1j * alice_phases.as_array()))
    ub = tritter(conjugate=True) @ np.diag(np.exp(1j * bob_phases.as_array()))
    u = np.kron(ua, ub)
    rho = u @ w.density_matrix() @ u.conj().T
    return JointOutcomeTable(np.real(np.diag(rho)).reshape(3, 3))
