"""First correction of E[ts(U Z U* Z U Z U* Z)] in 1/N^2.

Three routes to the same number:

1. the iterated-operator formula evaluated by quadrature (``expansion.alpha``),
2. the exact Weingarten rational function expanded in 1/N,
3. a Monte Carlo fit of a + b/N^2 over a grid of sizes.

Run with ``python demos/order_one_coefficient.py`` (about half a minute).
"""

import numpy as np

from haarexp import expansion, weingarten
from haarexp.harness import parse_poly

Z = np.diag([1.0, -1.0]).astype(complex)
Q = parse_poly("U1 Z1 U1* Z1 U1 Z1 U1* Z1")

res = expansion.alpha(1, Q, {"Z1": Z})
print(f"quadrature:  alpha0 = {res.alpha0.real:+.6f}  alpha1 = {res.alpha1.real:+.6f}"
      f"  (error estimate {res.quadrature_error:.1e})")

expr = weingarten.exact_word_expectation("U Z U* Z U Z U* Z", {"Z": Z})
a0, a1 = weingarten.series_coefficients(expr, 1)
print(f"Weingarten:  exact value {expr},  a0 = {float(a0):+.6f}  a1 = {float(a1):+.6f}")


def family(N):
    return {1: np.diag(np.tile([1.0, -1.0], N // 2)).astype(complex)}


fit = expansion.expansion_fit(Q, expansion.FourierSpec.polynomial(1), family,
                              [8, 16, 32, 64], lambda N: int(2e4 * (8 / N) ** 2) + 200,
                              seed=1, compute_alpha=False)
for N, m, e in zip(fit.Ns, fit.means, fit.stderrs):
    print(f"  N={N:3d}  E ts = {m:+.5f} +- {e:.5f}")
print(f"Monte Carlo: intercept {fit.intercept:+.4f} +- {fit.intercept_err:.4f}"
      f"  slope {fit.slope:+.3f} +- {fit.slope_err:.3f}")
