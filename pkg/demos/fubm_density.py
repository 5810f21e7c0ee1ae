"""Spectral density of the free unitary Brownian motion and its Haar-izing map.

For a few times t > 4 the script tabulates the density on the circle,
checks its Fourier moments against the moment ODE, and measures how far
the map f_t (which pushes the law of u_t to the uniform law) moves points.
"""

import math

import numpy as np

from haarexp import freetrace, fubm

for t in (5.0, 8.0, 12.0):
    tab = fubm.density_table(t, 2048)
    gaps = [abs(fubm.moment_by_quadrature(n, t, tab) - freetrace.fubm_moment(n, t))
            for n in range(1, 7)]
    print(f"t={t:4.1f}  kappa in [{tab.values.min():.4f}, {tab.values.max():.4f}]"
          f"  mass-1 = {tab.total / (2 * math.pi) - 1:+.1e}"
          f"  max moment gap {max(gaps):.1e}")

for t in (10.0, 12.0):
    f = fubm.haarize_map(t)
    s = np.linspace(0, 2 * math.pi, 4001)
    sup = np.max(np.abs(np.exp(1j * s) - f(np.exp(1j * s))))
    print(f"t={t:4.1f}  sup |x - f_t(x)| = {sup:.2e}  bound {fubm.haarize_bound(t):.2e}")
