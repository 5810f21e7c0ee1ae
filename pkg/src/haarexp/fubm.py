"""
Spectral density of the free unitary Brownian motion for ``t > 4``.

For ``t > 4`` the law ``nu_t`` of ``u_t`` has a positive density
``kappa(t, omega)`` with respect to the normalised arc length on the
circle.  It is the real part of the unique solution ``z`` with
``Re z > 0`` of

    (z - 1) / (z + 1) * exp(t z / 2) = omega .

The solver follows that branch along the circle: at ``omega = 1`` the
root is real and larger than 1, and each next angle reuses the previous
root as a Newton seed.

Integrating ``kappa`` gives the increasing map ``G`` with ``G(0) = 0`` and
``G(2 pi) = 2 pi``; the map ``f_t(e^{is}) = e^{iG(s)}`` pushes ``nu_t``
forward to the uniform law, i.e. turns ``u_t`` into a Haar unitary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List

import numpy as np
from scipy.optimize import brentq

__all__ = [
    "DensityTable",
    "real_root",
    "solve_branch",
    "density",
    "density_table",
    "haarize_map",
    "moment_by_quadrature",
    "haarize_bound",
    "scan_roots",
]

DEFAULT_GRID = 4096


def _check_t(t: float) -> float:
    t = float(t)
    if not t > 4.0:
        raise ValueError("the density is only available for t > 4")
    return t


def real_root(t: float) -> float:
    """The real root ``z > 1`` of ``(z-1)/(z+1) e^{tz/2} = 1``."""
    t = _check_t(t)

    def g(z):
        # log form: monotone increasing on (1, inf)
        return math.log(z - 1.0) - math.log1p(z) + 0.5 * t * z

    hi = 2.0
    while g(hi) < 0:
        hi *= 2.0
    return brentq(g, 1.0 + 1e-12, hi, xtol=1e-15, maxiter=500)


def _residual(z: complex, t: float, omega: complex) -> float:
    return abs((z - 1) / (z + 1) * np.exp(0.5 * t * z) - omega)


def _newton(z: complex, t: float, omega: complex, tol: float = 1e-14, maxiter: int = 60):
    """Damped Newton on ``h(z) = (z-1)/(z+1) - omega e^{-tz/2}``."""
    for it in range(maxiter):
        e = np.exp(-0.5 * t * z)
        h = (z - 1) / (z + 1) - omega * e
        if abs(h) < tol:
            return z, it
        dh = 2.0 / (z + 1) ** 2 + 0.5 * t * omega * e
        step = h / dh
        lam = 1.0
        while lam > 1e-6:
            zn = z - lam * step
            en = np.exp(-0.5 * t * zn)
            if zn.real > 0 and abs((zn - 1) / (zn + 1) - omega * en) < abs(h):
                break
            lam *= 0.5
        z = zn
    e = np.exp(-0.5 * t * z)
    h = (z - 1) / (z + 1) - omega * e
    if abs(h) < 1e3 * tol:
        return z, maxiter
    raise RuntimeError(f"Newton did not converge (residual {abs(h):.3e})")


def solve_branch(t: float, angles) -> np.ndarray:
    """Roots ``z(e^{is})`` with ``Re z > 0`` along increasing angles ``s``.

    The angles must be sorted; the path starts at ``s = 0`` from the real
    root and inserts intermediate angles when consecutive points are
    farther apart than ``pi / 256``.
    """
    t = _check_t(t)
    s_arr = np.asarray(angles, dtype=float)
    if np.any(np.diff(s_arr) < 0):
        raise ValueError("angles must be sorted")
    out = np.empty(s_arr.shape, dtype=complex)
    z = complex(real_root(t))
    cur = 0.0
    max_gap = math.pi / 256
    for k, s in enumerate(s_arr):
        n_sub = max(1, int(math.ceil(abs(s - cur) / max_gap)))
        for j in range(1, n_sub + 1):
            sj = cur + (s - cur) * j / n_sub
            z, _ = _newton(z, t, complex(math.cos(sj), math.sin(sj)))
        cur = s
        if not z.real > 0:
            raise RuntimeError(f"root left the right half-plane at angle {s}")
        out[k] = z
    return out


def scan_roots(t: float, omega, re_max: float = 4.0, im_max: float = 12.0, n: int = 24,
               tol: float = 1e-9) -> List[complex]:
    """Distinct roots with ``Re z > 0`` reached by Newton from a grid of seeds.

    A diagnostic for the uniqueness of the branch used by :func:`density`:
    seeds cover ``(0, re_max] x [-im_max, im_max]`` and every converged
    root in the right half-plane is kept once.
    """
    t = _check_t(t)
    omega = complex(omega)
    roots: List[complex] = []
    for x in np.linspace(re_max / n, re_max, n):
        for y in np.linspace(-im_max, im_max, 2 * n + 1):
            try:
                with np.errstate(all="ignore"):
                    z, _ = _newton(complex(x, y), t, omega)
            except (RuntimeError, FloatingPointError, ZeroDivisionError, OverflowError):
                continue
            if not z.real > 1e-12 or _residual(z, t, omega) > 1e-10:
                continue
            if all(abs(z - r) > tol * max(1.0, abs(r)) for r in roots):
                roots.append(complex(z))
    return roots


def density(t: float, omega) -> float:
    """``kappa(t, omega)`` for a single point ``|omega| = 1``."""
    t = _check_t(t)
    omega = complex(omega)
    if abs(abs(omega) - 1.0) > 1e-12:
        raise ValueError("omega must lie on the unit circle")
    s = math.atan2(omega.imag, omega.real) % (2 * math.pi)
    z = solve_branch(t, [s])[0]
    if _residual(z, t, omega) > 1e-10:
        raise RuntimeError("implicit equation not solved to 1e-10")
    return float(z.real)


@dataclass(frozen=True)
class DensityTable:
    """Density of ``nu_t`` on ``M`` uniform angles with its primitive.

    ``values[k] = kappa(t, e^{i s_k})`` and ``cumulative[k] = G(s_k)``
    where ``G(s) = int_0^s kappa``, so ``G(2 pi) = 2 pi``.
    """

    t: float
    grid: np.ndarray
    values: np.ndarray
    cumulative: np.ndarray
    roots: np.ndarray
    max_residual: float

    @property
    def M(self) -> int:
        return self.grid.size

    @property
    def total(self) -> float:
        """``G(2 pi)``, by the trapezoid rule on the periodic grid."""
        return float(np.mean(self.values) * 2 * math.pi)

    def _coefficients(self):
        c = np.fft.rfft(self.values) / self.M
        if self.M % 2 == 0:
            c[-1] *= 0.5
        return c

    def G(self, s) -> np.ndarray:
        """Spectral interpolation of ``G`` at arbitrary angles."""
        s = np.asarray(s, dtype=float)
        c = self._coefficients()
        ks = np.arange(1, c.size)
        d = c[1:] / (1j * ks)
        flat = s.ravel()
        out = c[0].real * flat
        for lo in range(0, flat.size, 256):
            blk = flat[lo:lo + 256]
            phase = np.exp(1j * np.multiply.outer(blk, ks)) - 1.0
            out[lo:lo + 256] += 2 * np.real(phase @ d)
        return out.reshape(s.shape)

    def kappa(self, s) -> np.ndarray:
        """Spectral interpolation of the density at arbitrary angles."""
        s = np.asarray(s, dtype=float)
        c = self._coefficients()
        c[1:] *= 2
        k = np.arange(c.size)
        flat = s.ravel()
        out = np.empty(flat.size)
        for lo in range(0, flat.size, 256):
            blk = flat[lo:lo + 256]
            out[lo:lo + 256] = np.real(np.exp(1j * np.multiply.outer(blk, k)) @ c)
        return out.reshape(s.shape)


def _primitive_on_grid(values: np.ndarray) -> np.ndarray:
    """``int_0^{s_j}`` of the trigonometric interpolant, at every grid angle."""
    M = values.size
    c = np.fft.fft(values) / M
    k = np.fft.fftfreq(M, d=1.0 / M)
    d = np.zeros(M, dtype=complex)
    nz = k != 0
    if M % 2 == 0:
        # the Nyquist mode integrates to a multiple of sin(pi j) = 0
        nz[M // 2] = False
    d[nz] = c[nz] / (1j * k[nz])
    grid = 2 * math.pi * np.arange(M) / M
    series = np.real(np.fft.ifft(d) * M)
    return c[0].real * grid + series - series[0]


def density_table(t: float, M: int = DEFAULT_GRID) -> DensityTable:
    """Tabulate ``kappa`` on ``M`` uniform angles in ``[0, 2 pi)``."""
    t = _check_t(t)
    if M < 8:
        raise ValueError("grid too small")
    grid = 2 * math.pi * np.arange(M) / M
    roots = solve_branch(t, grid)
    omegas = np.exp(1j * grid)
    res = np.abs((roots - 1) / (roots + 1) * np.exp(0.5 * t * roots) - omegas)
    values = roots.real
    if np.any(values <= 0):
        raise RuntimeError("non-positive density value")
    cumulative = _primitive_on_grid(values)
    return DensityTable(t, grid, values, cumulative, roots, float(res.max()))


def haarize_map(t: float, table: DensityTable = None):
    """The map ``f_t(e^{is}) = e^{iG(s)}``, only for ``t >= 5``.

    Returns a function of unit complex numbers (arrays allowed).
    """
    t = float(t)
    if t < 5:
        raise ValueError("the Haar-izing map is used for t >= 5 only")
    if table is None:
        table = density_table(t)
    if abs(table.t - t) > 0:
        raise ValueError("table built for a different time")
    if np.any(np.diff(table.cumulative) <= 0):
        raise RuntimeError("G is not increasing")

    def f(x):
        x = np.asarray(x, dtype=complex)
        s = np.mod(np.angle(x), 2 * math.pi)
        return np.exp(1j * table.G(s))

    f.table = table
    return f


def haarize_bound(t: float) -> float:
    """``4 e^2 pi e^{-t/2}``, a bound on ``sup |x - f_t(x)|``."""
    return 4 * math.e ** 2 * math.pi * math.exp(-0.5 * t)


def moment_by_quadrature(n: int, t: float, table: DensityTable = None) -> float:
    """``(1/2pi) int e^{ins} kappa(t, e^{is}) ds`` by the periodic trapezoid rule."""
    t = _check_t(t)
    if table is None:
        table = density_table(t)
    return float(np.real(np.mean(np.exp(1j * n * table.grid) * table.values)))
