"""Closed-form tour: Bell probabilities, I3, and the noise thresholds."""
import numpy as np

from qutrit_bell import (
    I3_MAX,
    PhaseVector,
    WernerState,
    born_rule_oracle,
    central_coincidence_prob,
    critical_lambda,
    evaluate_I3,
    make_max_entangled,
    optimal_settings,
    visibility_from_lambda,
)
from qutrit_bell.belltest import closed_form_probs
from qutrit_bell.quantum_core import werner_table

# The maximally entangled qutrit pair and the four optimal phase settings
psi = make_max_entangled()
s = optimal_settings()
print("Alice settings:", s.A1, s.A2)
print("Bob settings:  ", s.B1, s.B2)

# Joint outcome table for A1 B1 straight from the Born rule (a brute-force
# matrix product through the two tritters) ...
table = born_rule_oracle(psi, s.A1, s.B1)
print("\nP(j,k) for A1 B1 from the Born rule, in units of 1/27:")
print(np.round(27 * table.probs, 4))

# ... and from the closed form. They agree to rounding error
closed = np.array([[central_coincidence_prob(1.0, s.A1, s.B1, j, k) for k in range(3)] for j in range(3)])
print("max |oracle - closed form| =", np.abs(table.probs - closed).max())

# Mixing with white noise. The density-matrix route matches too
lam = 0.848
noisy = werner_table(WernerState(psi, lam), s.A1, s.B1).probs
print(f"\nat lambda={lam}: P(0,0)={noisy[0, 0]:.6f}, P(0,1)={noisy[0, 1]:.6f}")

# I3 over the optimal settings, at full and reduced purity
for lam in (1.0, 0.969, 0.848, 0.7):
    v = evaluate_I3(closed_form_probs(lam, s))
    print(f"I3(lambda={lam:5.3f}) = {v.I3:.6f}  (local bound 2)")
print(f"maximum = (12 + 8 sqrt 3)/9 = {I3_MAX:.12f}")

# How much noise each dimension tolerates before the local bound wins
for d in (2, 3):
    lc = critical_lambda(d)
    print(f"d={d}: critical lambda={lc:.6f}, critical visibility={visibility_from_lambda(d, lc):.6f}")

# A random phase pair to show the oracle is not special to the optimal settings
rng = np.random.default_rng(1)
a, b = PhaseVector(*rng.uniform(0, 2 * np.pi, 2)), PhaseVector(*rng.uniform(0, 2 * np.pi, 2))
print("\nrandom settings, row sums of P(j,k):", born_rule_oracle(psi, a, b).probs.sum(axis=1).round(6))
