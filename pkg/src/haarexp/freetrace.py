"""
Traces of words mixing free Haar unitaries, free unitary Brownian motions
and N x N matrices.

The trace is computed by eliminating one unitary atom ``x`` at a time.
Writing a cyclic word as ``x^{k_1} b_1 ... x^{k_r} b_r`` where the
``b_j`` do not contain ``x``, freeness of ``x`` from the algebra generated
by the ``b_j`` gives

    tau(x^{k_1} b_1 ... x^{k_r} b_r)
        = sum_{pi in NC(r)} kappa_pi[x^{k_1}, ..., x^{k_r}] tau_{K(pi)}[b_1, ..., b_r]

with ``K(pi)`` the Kreweras complement.  The multivariate cumulants of a
single unitary only depend on its moments ``tau(x^k)``, and the traces of
the products of ``b_j`` are computed recursively.  Words left with only
matrix letters are evaluated numerically.

Brownian times may be floats or numpy arrays of a common shape: every
trace then comes out as an array with that shape, so the combinatorics
are shared by all quadrature nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp

from .ncalg import ExpAtom, Letter, NCPoly, norm_a

__all__ = [
    "FreeAtom",
    "haar",
    "fubm",
    "matrix",
    "FubmMoments",
    "fubm_moment",
    "fubm_moment_closed_form",
    "TraceContext",
    "trace",
    "eval_ncpoly",
    "noncrossing_partitions",
    "kreweras",
]


# ---------------------------------------------------------------------------
# atoms and words


@dataclass(frozen=True)
class FreeAtom:
    """A generator of the free product.

    ``kind`` is ``"haar"``, ``"fubm"`` or ``"matrix"``.  A Brownian atom is
    identified by ``(family, index)``; its time is carried along but does
    not take part in equality, the context checks consistency instead.
    """

    kind: str
    index: int = 0
    family: int = 0
    handle: str = ""
    time: object = field(default=None, compare=False, hash=False)

    @property
    def key(self) -> tuple:
        if self.kind == "haar":
            return ("H", self.index)
        if self.kind == "fubm":
            return ("B", self.family, self.index)
        if self.kind == "matrix":
            return ("M", (self.handle,))
        raise ValueError(f"unknown atom kind {self.kind!r}")


def haar(i: int) -> FreeAtom:
    return FreeAtom("haar", index=i)


def fubm(family: int, i: int, t) -> FreeAtom:
    return FreeAtom("fubm", index=i, family=family, time=t)


def matrix(handle: str) -> FreeAtom:
    return FreeAtom("matrix", handle=handle)


def _is_unitary_key(key) -> bool:
    return key[0] != "M"


def _merge(factors: Iterable[Tuple[tuple, int]], cyclic: bool) -> tuple:
    """Merge adjacent equal atoms and drop zero exponents."""
    out: List[list] = []
    for key, e in factors:
        if _is_unitary_key(key):
            if e == 0:
                continue
            if out and out[-1][0] == key:
                out[-1][1] += e
                if out[-1][1] == 0:
                    out.pop()
                continue
            out.append([key, e])
        else:
            if out and out[-1][0][0] == "M":
                out[-1][0] = ("M", out[-1][0][1] + key[1])
                continue
            out.append([key, 1])
    if cyclic:
        while len(out) > 1 and out[0][0][0] == out[-1][0][0]:
            first, last = out[0], out[-1]
            if first[0][0] == "M":
                out[0] = [("M", last[0][1] + first[0][1]), 1]
                out.pop()
            elif first[0] == last[0]:
                first[1] += last[1]
                out.pop()
                if first[1] == 0:
                    out.pop(0)
            else:
                break
    return tuple((k, e) for k, e in out)


def _rotate_min(word: tuple) -> tuple:
    if len(word) <= 1:
        return word
    return min(word[i:] + word[:i] for i in range(len(word)))


def _canon_cyclic_handles(handles: tuple) -> tuple:
    return min(handles[i:] + handles[:i] for i in range(len(handles)))


# ---------------------------------------------------------------------------
# noncrossing partitions


@lru_cache(maxsize=None)
def noncrossing_partitions(r: int) -> Tuple[Tuple[Tuple[int, ...], ...], ...]:
    """All noncrossing partitions of ``range(r)``, blocks sorted."""
    if r == 0:
        return ((),)
    out = []
    # block containing 0: {0 = v_0 < v_1 < ... < v_s}; the gaps are
    # independent noncrossing sets
    rest = list(range(1, r))
    for size in range(0, r):
        for others in combinations(rest, size):
            block = (0,) + others
            cuts = list(block) + [r]
            gap_options = []
            for a, b in zip(cuts[:-1], cuts[1:]):
                gap = list(range(a + 1, b))
                sub = noncrossing_partitions(len(gap))
                gap_options.append([tuple(tuple(gap[x] for x in blk) for blk in p) for p in sub])
            combos = [()]
            for opts in gap_options:
                combos = [c + o for c in combos for o in opts]
            for c in combos:
                out.append(tuple(sorted((block,) + c)))
    return tuple(sorted(set(out)))


def kreweras(blocks: Sequence[Sequence[int]], r: int) -> Tuple[Tuple[int, ...], ...]:
    """Kreweras complement as the cycles of ``P^{-1} gamma``.

    ``P`` cycles each block increasingly and ``gamma = (0 1 ... r-1)``.
    """
    pinv = [0] * r
    for blk in blocks:
        blk = sorted(blk)
        for a, b in zip(blk, blk[1:] + blk[:1]):
            pinv[b] = a
    perm = [pinv[(x + 1) % r] for x in range(r)]
    seen = [False] * r
    cycles = []
    for x in range(r):
        if seen[x]:
            continue
        cyc = []
        y = x
        while not seen[y]:
            seen[y] = True
            cyc.append(y)
            y = perm[y]
        cycles.append(tuple(sorted(cyc)))
    return tuple(sorted(cycles))


@lru_cache(maxsize=None)
def _nc_with_kreweras(r: int):
    return tuple((p, kreweras(p, r)) for p in noncrossing_partitions(r))


# ---------------------------------------------------------------------------
# free unitary Brownian motion moments


def _moment_rhs(m: np.ndarray) -> np.ndarray:
    # m[0] = 1 is kept fixed; m_n' = -(n/2) (m_n + sum_{k=1}^{n-1} m_k m_{n-k})
    mm = np.array(m, dtype=float)
    mm[0] = 0.0
    conv = np.convolve(mm, mm)[: mm.size]
    out = -0.5 * np.arange(mm.size) * (mm + conv)
    out[0] = 0.0
    return out


class FubmMoments:
    """Memoised moments ``m_n(t) = tau(u_t^n)`` of the free unitary Brownian motion.

    The closed system ``m_n' = -(n/2) m_n - (n/2) sum_{k=1}^{n-1} m_k m_{n-k}``
    with ``m_n(0) = 1`` is integrated once up to the largest requested time
    with an adaptive eighth-order Runge-Kutta scheme from scipy, reading
    off all requested times from the same trajectory.
    """

    def __init__(self, rtol: float = 1e-13, atol: float = 1e-16):
        self.rtol = float(rtol)
        self.atol = float(atol)
        self._cache: Dict[Tuple[int, tuple, bytes], np.ndarray] = {}

    def table(self, nmax: int, times) -> np.ndarray:
        """Array of shape ``(nmax+1,) + shape(times)`` with ``m_n(times)``."""
        t = np.asarray(times, dtype=float)
        if np.any(t < 0):
            raise ValueError("times must be non-negative")
        key = (int(nmax), t.shape, t.tobytes())
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        for (n2, shape2, b2), val in self._cache.items():
            if n2 >= nmax and shape2 == t.shape and b2 == key[2]:
                return val[: nmax + 1]
        flat = t.ravel()
        uniq, inv = np.unique(flat, return_inverse=True)
        vals = np.ones((nmax + 1, uniq.size))
        pos = uniq > 0
        if nmax >= 1 and np.any(pos):
            sol = solve_ivp(lambda _t, m: _moment_rhs(np.concatenate(([1.0], m)))[1:],
                            (0.0, float(uniq[-1])), np.ones(nmax), method="DOP853",
                            t_eval=uniq[pos], rtol=self.rtol, atol=self.atol)
            if not sol.success:
                raise RuntimeError(f"moment ODE failed: {sol.message}")
            vals[1:, pos] = sol.y
        out = vals[:, inv].reshape((nmax + 1,) + t.shape)
        self._cache[key] = out
        return out

    def moment(self, n: int, t):
        n = abs(int(n))
        if n == 0:
            return np.ones_like(np.asarray(t, dtype=float)) if np.ndim(t) else 1.0
        out = self.table(n, t)[n]
        return out if np.ndim(t) else float(out)


_DEFAULT_MOMENTS = FubmMoments()


def fubm_moment(n: int, t) -> float:
    """``tau(u_t^n)`` from the moment ODE; ``m_{-n} = m_n`` and ``m_0 = 1``."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("t must be non-negative")
    return _DEFAULT_MOMENTS.moment(n, t)


def fubm_moment_closed_form(n: int, t: float) -> float:
    """Closed-form moments, used as an independent check of the ODE.

    ``m_n(t) = e^{-nt/2} sum_{k=0}^{n-1} (-t)^k / k! n^{k-1} C(n, k+1)``.
    """
    n = abs(int(n))
    if n == 0:
        return 1.0
    s = sum((-t) ** k / math.factorial(k) * n ** (k - 1) * math.comb(n, k + 1) for k in range(n))
    return math.exp(-n * t / 2) * s


# ---------------------------------------------------------------------------
# trace engine


class TraceContext:
    """Matrices, Brownian times and the moment provider for one evaluation.

    Parameters
    ----------
    matrices : mapping str -> (N, N) array
        The matrix letters.  ``tau_N`` on them is the normalised trace.
    fubm_times : mapping (family, index) -> float or array
        Time of each Brownian atom; arrays must share one shape.
    moments : FubmMoments, optional
    """

    def __init__(self, matrices: Optional[Mapping[str, np.ndarray]] = None,
                 fubm_times: Optional[Mapping[Tuple[int, int], object]] = None,
                 moments: Optional[FubmMoments] = None, N: Optional[int] = None):
        self.matrices = {k: np.asarray(v, dtype=complex) for k, v in (matrices or {}).items()}
        sizes = {m.shape for m in self.matrices.values()}
        if len(sizes) > 1:
            raise ValueError("matrix letters must share one size")
        if sizes:
            shape = sizes.pop()
            if shape[0] != shape[1]:
                raise ValueError("matrix letters must be square")
            self.N = shape[0]
        else:
            self.N = N
        self.fubm_times = dict(fubm_times or {})
        self.moments = moments or _DEFAULT_MOMENTS
        self._trace_memo: Dict[tuple, object] = {}
        self._cum_memo: Dict[tuple, object] = {}
        self._mat_memo: Dict[tuple, complex] = {}
        self._mom_tables: Dict[tuple, np.ndarray] = {}
        self._nmax_hint = 0

    # -- atom moments ---------------------------------------------------
    def register_atoms(self, atoms: Iterable[FreeAtom]) -> None:
        for a in atoms:
            if a.kind == "fubm":
                k = (a.family, a.index)
                if a.time is None:
                    if k not in self.fubm_times:
                        raise ValueError(f"no time for Brownian atom {k}")
                    continue
                if k in self.fubm_times:
                    if not np.array_equal(np.asarray(self.fubm_times[k]), np.asarray(a.time)):
                        raise ValueError(f"Brownian atom {k} used at two different times")
                else:
                    self.fubm_times[k] = a.time
            elif a.kind == "matrix":
                if a.handle not in self.matrices:
                    raise KeyError(f"unknown matrix handle {a.handle!r}")

    def set_nmax(self, nmax: int) -> None:
        """Pre-size the moment tables (avoids re-running the ODE)."""
        self._nmax_hint = max(self._nmax_hint, int(nmax))

    def atom_moment(self, key: tuple, k: int):
        if k == 0:
            return 1.0
        if key[0] == "H":
            return 0.0
        t = self.fubm_times[(key[1], key[2])]
        k = abs(k)
        tk = (key[1], key[2])
        tab = self._mom_tables.get(tk)
        if tab is None or tab.shape[0] <= k:
            nmax = max(k, self._nmax_hint, 8)
            tab = self.moments.table(nmax, t)
            self._mom_tables[tk] = tab
        return tab[k]

    def matrix(self, handle: str) -> np.ndarray:
        m = self.matrices.get(handle)
        if m is None:
            if handle.endswith("*") and handle[:-1] in self.matrices:
                m = self.matrices[handle[:-1]].conj().T
                self.matrices[handle] = m
            else:
                raise KeyError(f"unknown matrix handle {handle!r}")
        return m

    def matrix_trace(self, handles: tuple) -> complex:
        handles = _canon_cyclic_handles(handles)
        hit = self._mat_memo.get(handles)
        if hit is None:
            prod = self.matrix(handles[0])
            for h in handles[1:]:
                prod = prod @ self.matrix(h)
            hit = complex(np.trace(prod)) / prod.shape[0]
            self._mat_memo[handles] = hit
        return hit

    # -- cumulants ------------------------------------------------------
    def cumulant(self, key: tuple, ks: tuple):
        """Free cumulant ``kappa_m(x^{k_1}, ..., x^{k_m})`` of one unitary."""
        memo_key = (key, ks)
        hit = self._cum_memo.get(memo_key)
        if hit is not None:
            return hit
        m = len(ks)
        if key[0] == "H" and sum(ks) != 0:
            val = 0.0
        elif m == 1:
            val = self.atom_moment(key, ks[0])
        else:
            val = self.atom_moment(key, sum(ks))
            rest = list(range(1, m))
            for size in range(0, m - 1):
                for others in combinations(rest, size):
                    block = (0,) + others
                    kap = self.cumulant(key, tuple(ks[i] for i in block))
                    if _is_zero(kap):
                        continue
                    term = kap
                    cuts = list(block) + [m]
                    for a, b in zip(cuts[:-1], cuts[1:]):
                        if b - a > 1:
                            mom = self.atom_moment(key, sum(ks[a + 1:b]))
                            if _is_zero(mom):
                                term = 0.0
                                break
                            term = term * mom
                    if not _is_zero(term):
                        val = val - term
        self._cum_memo[memo_key] = val
        return val

    # -- traces ---------------------------------------------------------
    def trace_keys(self, word: tuple):
        """Trace of a keyed word ``((key, exp), ...)`` (cyclic)."""
        w = _merge(word, cyclic=True)
        return self._trace(w)

    def _trace(self, w: tuple):
        if not w:
            return 1.0
        canon = _rotate_min(w)
        hit = self._trace_memo.get(canon)
        if hit is not None:
            return hit
        val = self._trace_uncached(canon)
        self._trace_memo[canon] = val
        return val

    def _trace_uncached(self, w: tuple):
        counts: Dict[tuple, int] = {}
        totals: Dict[tuple, int] = {}
        for key, e in w:
            if _is_unitary_key(key):
                counts[key] = counts.get(key, 0) + 1
                totals[key] = totals.get(key, 0) + e
        for key, tot in totals.items():
            if key[0] == "H" and tot != 0:
                return 0.0
        if not counts:
            handles = tuple(h for key, _ in w for h in key[1])
            return self.matrix_trace(handles)
        if len(w) == 1:
            key, e = w[0]
            return self.atom_moment(key, e)
        x = min(counts, key=lambda k: (counts[k], k))
        start = next(i for i, (k, _) in enumerate(w) if k == x)
        w = w[start:] + w[:start]
        ks: List[int] = []
        bs: List[tuple] = []
        for key, e in w:
            if key == x:
                ks.append(e)
                bs.append(())
            else:
                bs[-1] = bs[-1] + ((key, e),)
        r = len(ks)
        total = 0.0
        for blocks, kblocks in _nc_with_kreweras(r):
            coef = 1.0
            for blk in blocks:
                kap = self.cumulant(x, tuple(ks[i] for i in blk))
                if _is_zero(kap):
                    coef = 0.0
                    break
                coef = coef * kap
            if _is_zero(coef):
                continue
            for kb in kblocks:
                sub = ()
                for i in kb:
                    sub = sub + bs[i]
                tr = self._trace(_merge(sub, cyclic=True))
                if _is_zero(tr):
                    coef = 0.0
                    break
                coef = coef * tr
            if not _is_zero(coef):
                total = total + coef
        return total


def _is_zero(v) -> bool:
    if isinstance(v, np.ndarray):
        return not np.any(v)
    return v == 0


def _keyed(word: Sequence[Tuple[FreeAtom, int]]) -> tuple:
    out = []
    for atom, e in word:
        e = int(e)
        if atom.kind == "matrix":
            if e != 1:
                raise ValueError("matrix letters take exponent 1")
        out.append((atom.key, e))
    return tuple(out)


def trace(word: Sequence[Tuple[FreeAtom, int]], ctx: Optional[TraceContext] = None):
    """``tau`` of a word given as a sequence of ``(FreeAtom, exponent)``."""
    ctx = ctx if ctx is not None else TraceContext()
    ctx.register_atoms(a for a, _ in word)
    return ctx.trace_keys(_keyed(word))


# ---------------------------------------------------------------------------
# polynomial evaluation


class _Lin:
    """Linear combination of keyed (non-cyclic) words."""

    __slots__ = ("terms",)

    def __init__(self, terms=None):
        self.terms = terms or {}

    @staticmethod
    def word(w: tuple, c=1.0) -> "_Lin":
        return _Lin({_merge(w, cyclic=False): c})

    def mul(self, other: "_Lin") -> "_Lin":
        out: Dict[tuple, complex] = {}
        for w1, c1 in self.terms.items():
            for w2, c2 in other.terms.items():
                w = _merge(w1 + w2, cyclic=False)
                out[w] = out.get(w, 0) + c1 * c2
        return _Lin({w: c for w, c in out.items() if c != 0})

    def add(self, other: "_Lin", scale=1.0) -> "_Lin":
        out = dict(self.terms)
        for w, c in other.terms.items():
            out[w] = out.get(w, 0) + scale * c
        return _Lin({w: c for w, c in out.items() if c != 0})


def _exp_tail(a: float, K: int) -> float:
    """``sum_{k > K} a^k / k!`` computed stably."""
    if a == 0:
        return 0.0
    term = a ** (K + 1) / math.factorial(K + 1)
    total = 0.0
    k = K + 1
    while term > 1e-300:
        total += term
        k += 1
        term *= a / k
        if k > K + 400:
            break
    return total


def eval_ncpoly(Q: NCPoly, assignment: Mapping, ctx: Optional[TraceContext] = None,
                K: int = 30, tol: float = 1e-10, norms: Optional[Mapping] = None):
    """``tau`` of ``Q`` evaluated at free atoms and matrices.

    Parameters
    ----------
    Q : NCPoly
        May contain exponential atoms; those are expanded as truncated
        power series of order at most ``K`` (ratio-test early exit once the
        tail bound drops below ``tol``).
    assignment : mapping Letter -> list of (FreeAtom, exponent)
        Image of every letter.  Adjoint letters default to the adjoint
        word of their partner when absent.
    norms : mapping Letter -> float, optional
        Operator-norm bounds of the images (defaults: 1 for words of
        unitaries, spectral norm for matrix words).

    Returns
    -------
    value, error_bound
    """
    ctx = ctx if ctx is not None else TraceContext()
    images: Dict[Letter, tuple] = {}
    bounds: Dict[Letter, float] = {}
    for let, w in assignment.items():
        if isinstance(w, FreeAtom):
            w = [(w, 1)]
        ctx.register_atoms(a for a, _ in w)
        images[let] = _keyed(w)
        images.setdefault(let.adjoint(), _adjoint_keyed(images[let]))
    for let, kw in images.items():
        if norms and let in norms:
            bounds[let] = float(norms[let])
        else:
            bounds[let] = _word_norm(kw, ctx)

    def image(let: Letter) -> tuple:
        if let in images:
            return images[let]
        if let.label and Letter(let.kind, let.index) in images:
            return images[Letter(let.kind, let.index)]
        raise KeyError(f"no assignment for letter {let}")

    def bound(let: Letter) -> float:
        return bounds.get(let, bounds.get(Letter(let.kind, let.index), 1.0))

    value = 0.0
    err = 0.0
    for w, c in Q.terms.items():
        lin = _Lin.word(())
        exact_norm = 1.0
        full_norm = 1.0
        for f in w:
            if isinstance(f, Letter):
                lin = lin.mul(_Lin.word(image(f)))
                b = bound(f)
                exact_norm *= b
                full_norm *= b
            else:
                series, a, kk = _exp_series(f, image, bound, tol)
                lin = lin.mul(series)
                partial = sum(a ** k / math.factorial(k) for k in range(kk + 1))
                exact_norm *= partial
                full_norm *= partial + _exp_tail(a, kk)
        err += abs(c) * (full_norm - exact_norm)
        for kw, cw in lin.terms.items():
            value = value + c * cw * ctx.trace_keys(kw)
    if err > max(tol, 1e-6) * 1e6:
        raise ArithmeticError(f"exponential series tail bound {err:.3g} too large")
    return value, err


def _exp_series(atom: ExpAtom, image, bound, tol, K: int = 30):
    lam = complex(atom.scalar)
    R = _Lin()
    for w, c in atom.poly.terms.items():
        term = _Lin.word(())
        for f in w:
            if not isinstance(f, Letter):
                raise ValueError("nested exponential atoms are not supported")
            term = term.mul(_Lin.word(image(f)))
        R = R.add(term, c)
    rnorm = sum(abs(c) * math.prod(bound(f) for f in w) for w, c in atom.poly.terms.items())
    a = abs(lam) * rnorm
    kk = 0
    while kk < K and _exp_tail(a, kk) > tol:
        kk += 1
    out = _Lin.word(())
    power = _Lin.word(())
    for k in range(1, kk + 1):
        power = power.mul(R)
        out = out.add(power, lam ** k / math.factorial(k))
    return out, a, kk


def _adjoint_keyed(kw: tuple) -> tuple:
    out = []
    for key, e in reversed(kw):
        if key[0] == "M":
            out.append((("M", tuple(h + "*" for h in reversed(key[1]))), 1))
        else:
            out.append((key, -e))
    return tuple(out)


def _word_norm(kw: tuple, ctx: TraceContext) -> float:
    b = 1.0
    for key, _ in kw:
        if key[0] == "M":
            for h in key[1]:
                b *= _matrix_norm(ctx, h)
    return b


def _matrix_norm(ctx: TraceContext, handle: str) -> float:
    return float(np.linalg.norm(ctx.matrix(handle), 2))
