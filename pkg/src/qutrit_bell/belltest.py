"""CGLMP inequality for qutrits, Werner scaling and significance arithmetic."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .optics import central_coincidence_prob
from .quantum_core import PhaseVector, check_lambda

LOCAL_BOUND = 2.0
I3_MAX = (12 + 8 * math.sqrt(3)) / 9

SYMMETRY_TOL = 1e-9


@dataclass(frozen=True)
class BellSettings:
    A1: PhaseVector
    A2: PhaseVector
    B1: PhaseVector
    B2: PhaseVector

    def alice(self, m: int) -> PhaseVector:
        return (self.A1, self.A2)[m - 1]

    def bob(self, n: int) -> PhaseVector:
        return (self.B1, self.B2)[n - 1]


@dataclass(frozen=True)
class BellValue:
    I3: float
    sigma_I: float = 0.0
    symmetric: bool = True
    terms: tuple[float, ...] = ()

    @property
    def violates(self) -> bool:
        return self.I3 > LOCAL_BOUND


def optimal_settings() -> BellSettings:
    pi = math.pi
    return BellSettings(
        A1=PhaseVector(0.0, 0.0),
        A2=PhaseVector(pi / 3, 2 * pi / 3),
        B1=PhaseVector(pi / 6, pi / 3),
        B2=PhaseVector(-pi / 6, -pi / 3),
    )


ProbFn = Callable[[int, int, int, int], float]


def closed_form_probs(lam: float, settings: BellSettings | None = None) -> ProbFn:
    """P^{mn}(j, k) from the Werner closed form at the given settings."""
    settings = settings or optimal_settings()

    def probs(m, n, j, k):
        return central_coincidence_prob(lam, settings.alice(m), settings.bob(n), j, k)

    return probs


def _symmetry_defect(probs: ProbFn) -> float:
    worst = 0.0
    for m in (1, 2):
        for n in (1, 2):
            for c in range(3):
                vals = [probs(m, n, j, (j - c) % 3) for j in range(3)]
                worst = max(worst, max(vals) - min(vals))
    return worst


def evaluate_I3(probs: ProbFn) -> BellValue:
    """Reduced CGLMP expression for probability tables with the three-class symmetry.

    ``probs(m, n, j, k)`` is the probability of outputs (j, k) when Alice uses
    setting m and Bob setting n (both 1 or 2).  Tables that break the
    P(j, j - c) symmetry are evaluated anyway but flagged.
    """
    terms = (
        probs(1, 1, 0, 0) - probs(1, 1, 0, 1),
        probs(2, 1, 0, 1) - probs(2, 1, 0, 0),
        probs(2, 2, 0, 0) - probs(2, 2, 0, 1),
        probs(1, 2, 0, 0) - probs(1, 2, 0, 2),
    )
    defect = _symmetry_defect(probs)
    symmetric = defect <= SYMMETRY_TOL
    if not symmetric:
        warnings.warn(
            f"probability tables break the three-class symmetry by {defect:.3g}; "
            "the reduced inequality does not apply exactly",
            stacklevel=2,
        )
    return BellValue(I3=3 * sum(terms), symmetric=symmetric, terms=tuple(float(t) for t in terms))


def lambda_scaling(lam: float) -> float:
    """Bell value of the Werner state with mixing ``lam`` at optimal settings."""
    check_lambda(lam)
    return lam * I3_MAX


def lambda_from_bell(I: float) -> float:
    lam = I / I3_MAX
    return check_lambda(lam)


def critical_lambda(d: int) -> float:
    """Smallest mixing parameter that still violates the CGLMP bound."""
    if d == 2:
        return 1 / math.sqrt(2)
    if d == 3:
        return (6 * math.sqrt(3) - 9) / 2
    raise ValueError(f"critical mixing is only tabulated for d = 2 and d = 3, got d={d!r}")


def _check_dim(d: int) -> None:
    if int(d) != d or d < 2:
        raise ValueError(f"dimension must be an integer >= 2, got {d!r}")


def visibility_from_lambda(d: int, lam):
    """Fringe visibility ``d lam / (2 + lam (d - 2))`` of a d-dimensional Werner state."""
    _check_dim(d)
    lam_arr = np.asarray(lam, dtype=float)
    if np.any((lam_arr < 0) | (lam_arr > 1)):
        raise ValueError(f"mixing parameter must lie in [0, 1], got {lam!r}")
    v = d * lam_arr / (2 + lam_arr * (d - 2))
    return float(v) if v.ndim == 0 else v


def lambda_from_visibility(d: int, V):
    _check_dim(d)
    v = np.asarray(V, dtype=float)
    if np.any((v < 0) | (v > 1)):
        raise ValueError(f"visibility must lie in [0, 1], got {V!r}")
    lam = 2 * v / (d - v * (d - 2))
    return float(lam) if lam.ndim == 0 else lam


def violation_sigma(I: float, sigma_I: float) -> float:
    """Number of standard deviations by which ``I`` exceeds the local bound."""
    if not sigma_I > 0:
        raise ValueError(f"sigma_I must be positive, got {sigma_I!r}")
    return (I - LOCAL_BOUND) / sigma_I


def propagate_lambda_error(d: int, lam: float, sigma_lambda: float) -> tuple[float, float]:
    """Linear error propagation from the mixing parameter to (I3, V(d))."""
    _check_dim(d)
    check_lambda(lam)
    if sigma_lambda < 0:
        raise ValueError(f"sigma_lambda must be non-negative, got {sigma_lambda!r}")
    sigma_I = sigma_lambda * I3_MAX
    sigma_V = sigma_lambda * 2 * d / (2 + lam * (d - 2)) ** 2
    return sigma_I, sigma_V


def max_I3_search(n_starts: int = 40, seed: int = 0) -> tuple[float, np.ndarray]:
    """Maximize the reduced expression over all eight free phases (pure state).

    Returns the best value and the phases ``[A1m, A1l, A2m, A2l, B1m, B1l, B2m, B2l]``.
    """
    from scipy.optimize import minimize

    def neg_I3(x):
        s = BellSettings(*(PhaseVector(x[i], x[i + 1]) for i in range(0, 8, 2)))
        return -evaluate_I3(closed_form_probs(1.0, s)).I3

    rng = np.random.default_rng(seed)
    best_val, best_x = -np.inf, None
    for _ in range(n_starts):
        res = minimize(neg_I3, rng.uniform(-np.pi, np.pi, 8), method="BFGS")
        if -res.fun > best_val:
            best_val, best_x = -res.fun, res.x
    return float(best_val), best_x
