"""
Coefficients of the 1/N^2 expansion of ``E[ts_N(Q(U^N, Z^N))]``.

The order-``n`` operator ``L_s^n`` turns a polynomial whose unitary
letters carry index sets of ``J_n`` into one whose letters carry sets of
``J_{n+1}``.  For each pair of unitary indices ``i, j`` and each
tail-matching pair ``(I, J)``, every simple tensor ``a (x) b`` of
``delta_i D_i Q`` produces the word

    a2[X_{s,1}] . a1[X~_{s,1}] . b2[X~_{s,2}] . b1[X_{s,2}]

where ``delta_{j,I} a = sum a1 (x) a2``, ``delta_{j,J} b = sum b1 (x) b2``,
and ``w[X]`` relabels every index set of ``w`` through the map attached
to the slot (``F^{s,1}``, ``F~^{s,1}``, ``F~^{s,2}``, ``F^{s,2}``).

Evaluation replaces ``U_{i,I}`` (``I`` of order ``k``) by
``u^{I_1}_{i,g_1} ... u^{I_2k}_{i,g_2k} u_i`` where the ``g_l`` are the
gaps between the sorted times, ``u^c`` are free unitary Brownian motions
and ``u_i`` free Haar unitaries.  The order-one coefficient is the
integral over ``0 <= t_1 <= t_2`` of the trace of ``L^{T_1}(Q)``; in gap
variables ``g_1 = t_1``, ``g_2 = t_2 - t_1`` this is an integral over the
quarter plane, computed with Gauss-Legendre after ``g = -a ln(1 - x)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from . import indexsets
from .freetrace import FubmMoments, TraceContext, fubm, haar, matrix, eval_ncpoly
from .ncalg import (
    ExpAtom,
    Letter,
    NCPoly,
    TensorPoly,
    cyclic_alpha,
    delta_alpha,
    reduce_unitary,
    sum_polys,
    word_degree,
)

__all__ = [
    "FourierSpec",
    "QuadratureConfig",
    "ExpansionResult",
    "check_time_vector",
    "boxtimes_eval",
    "build_L",
    "full_L",
    "labeled_letters",
    "evaluate_labeled",
    "alpha",
    "alpha1_integrand",
    "remainder_bound",
    "coefficient_bound",
    "expansion_fit",
    "coefficient_continuity_check",
]


# ---------------------------------------------------------------------------
# data types


@dataclass(frozen=True)
class FourierSpec:
    """Either ``f(x) = x^m`` or ``f(x) = sum_j c_j e^{i y_j x}``."""

    moment: Optional[int] = None
    atoms: Tuple[Tuple[float, complex], ...] = ()

    def __post_init__(self):
        if (self.moment is None) == (not self.atoms):
            raise ValueError("give exactly one of moment or atoms")
        if self.moment is not None and self.moment < 0:
            raise ValueError("moment power must be non-negative")

    @classmethod
    def polynomial(cls, m: int) -> "FourierSpec":
        return cls(moment=int(m))

    @classmethod
    def atomic(cls, atoms: Iterable[Tuple[float, complex]]) -> "FourierSpec":
        return cls(atoms=tuple((float(y), complex(c)) for y, c in atoms))

    def is_selfadjoint(self, tol: float = 0.0) -> bool:
        if self.moment is not None:
            return True
        table = {}
        for y, c in self.atoms:
            table[y] = table.get(y, 0) + c
        return all(abs(table.get(-y, 0) - c.conjugate()) <= tol for y, c in table.items())

    def __call__(self, x):
        x = np.asarray(x)
        if self.moment is not None:
            return x ** self.moment
        out = np.zeros(x.shape, dtype=complex)
        for y, c in self.atoms:
            out = out + c * np.exp(1j * y * x)
        return out


@dataclass(frozen=True)
class QuadratureConfig:
    """Settings of the order-one time quadrature.

    ``nodes`` Gauss-Legendre nodes per gap variable after the substitution
    ``g = -scale * ln(1 - x)``; ``series_tol`` is the target tail bound of
    exponential series; ``series_max`` caps their order.
    """

    nodes: int = 32
    scale: float = 4.0
    series_tol: float = 1e-10
    series_max: int = 30
    error_estimate: bool = True


@dataclass
class ExpansionResult:
    alpha0: complex
    alpha1: complex
    quadrature_error: float
    truncation_T: float
    series_error: float = 0.0
    details: Dict[str, object] = field(default_factory=dict)


def check_time_vector(times: Sequence[float]) -> bool:
    """``True`` iff ``times`` lies in ``A_i``: ``t_2 <= t_4 <= ...`` and
    ``0 <= t_{2s-1} <= t_{2s}``."""
    t = list(times)
    if len(t) % 2:
        return False
    evens = t[1::2]
    odds = t[0::2]
    if any(b < a for a, b in zip(evens, evens[1:])):
        return False
    return all(0 <= o <= e for o, e in zip(odds, evens))


# ---------------------------------------------------------------------------
# symbolic operator


def _relabel_word(word: tuple, fn) -> tuple:
    out = []
    for f in word:
        if isinstance(f, Letter):
            out.append(fn(f))
        else:
            out.append(f.map_letters(fn))
    return tuple(out)


def _slot_map(tilde: bool, variant: int, s: int):
    cache: Dict[tuple, tuple] = {}

    def fn(let: Letter) -> Letter:
        if not let.is_unitary:
            return let
        lab = cache.get(let.label)
        if lab is None:
            lab = indexsets.apply_map(tilde, variant, s, let.label)
            cache[let.label] = lab
        return let.relabel(lab)

    return fn


def boxtimes_eval(parts: Sequence[Sequence[tuple]], substitutions: Sequence) -> List[tuple]:
    """Concatenate slot words after relabelling each through its map.

    ``parts[k]`` is a list of alternative words for slot ``k`` (a sum),
    ``substitutions[k]`` the letter map of that slot.  The result lists
    every concatenation, in slot order.
    """
    if len(parts) != len(substitutions):
        raise ValueError("one substitution per slot is required")
    out = [()]
    for words, fn in zip(parts, substitutions):
        mapped = [_relabel_word(w, fn) for w in words]
        out = [a + b for a in out for b in mapped]
    return out


def _labels_in(word: tuple, j: int) -> set:
    labs = set()
    for f in word:
        if isinstance(f, Letter):
            if f.is_unitary and f.index == j:
                labs.add(f.label)
        else:
            for g in f.poly.letters():
                if g.is_unitary and g.index == j:
                    labs.add(g.label)
    return labs


def _unitary_indices(Q: NCPoly) -> List[int]:
    return sorted({l.index for l in Q.letters() if l.is_unitary})


def build_L(s: int, n: int, Q: NCPoly, d: Optional[int] = None,
            alphas: Tuple[float, float, float, float] = (0.5, 0.5, 0.5, 0.5)) -> NCPoly:
    """The operator ``L_s^n`` applied to ``Q`` (letters labelled by ``J_n``).

    ``alphas = (rho, beta, gamma, delta)`` are the Duhamel parameters; they
    only matter when ``Q`` has exponential atoms.
    """
    if n > 2:
        raise ValueError("symbolic construction is supported for n <= 2")
    if not 1 <= s <= 2 * n + 1:
        raise ValueError(f"s must lie in [1, {2 * n + 1}]")
    rho, beta, gamma, dlt = alphas
    idx = _unitary_indices(Q)
    if d is None:
        d = max(idx, default=0)
    maps = (
        _slot_map(False, 1, s),
        _slot_map(True, 1, s),
        _slot_map(True, 2, s),
        _slot_map(False, 2, s),
    )
    acc: Dict[tuple, complex] = {}
    for i in range(1, d + 1):
        DQ = cyclic_alpha(i, rho, Q, d)
        if DQ.is_zero():
            continue
        T = delta_alpha(i, beta, DQ, d)
        for (a, b), c in T.terms.items():
            for j in range(1, d + 1):
                labs_a = _labels_in(a, j)
                labs_b = _labels_in(b, j)
                for I in labs_a:
                    for J in labs_b:
                        if tuple(I[s - 1:]) != tuple(J[s - 1:]):
                            continue
                        A = delta_alpha(j, dlt, NCPoly({a: 1.0}), d, label=I)
                        if A.is_zero():
                            continue
                        B = delta_alpha(j, gamma, NCPoly({b: 1.0}), d, label=J)
                        if B.is_zero():
                            continue
                        for (a1, a2), ca in A.terms.items():
                            left = _relabel_word(a2, maps[0]) + _relabel_word(a1, maps[1])
                            for (b1, b2), cb in B.terms.items():
                                w = left + _relabel_word(b2, maps[2]) + _relabel_word(b1, maps[3])
                                acc[w] = acc.get(w, 0) + 0.5 * c * ca * cb
    return NCPoly(acc)


def full_L(times: Sequence[float], n: int, Q: NCPoly, d: Optional[int] = None,
           alphas=(0.5, 0.5, 0.5, 0.5)) -> NCPoly:
    """``L^{T_{n+1}}(Q)``: pick ``s`` from the position of ``t_{2n+1}``.

    ``times = (t_1, ..., t_{2n+2})``.  Intervals are half-open
    ``[t~_{s-1}, t~_s)`` with ``t~_0 = 0``; the last piece is
    ``[t~_{2n}, t_{2n+2}]``.
    """
    times = list(times)
    if len(times) != 2 * n + 2:
        raise ValueError("need 2n+2 times")
    sorted_first = sorted(times[: 2 * n])
    t = times[2 * n]
    edges = [0.0] + sorted_first
    s = _indicator_piece(t, edges, times[2 * n + 1])
    if s is None:
        return NCPoly()
    return build_L(s, n, Q, d, alphas)


def _indicator_piece(t: float, edges: Sequence[float], upper: float) -> Optional[int]:
    """Index ``s`` of the piece containing ``t`` (``None`` outside)."""
    m = len(edges) - 1  # = 2n
    for s in range(1, m + 1):
        if edges[s - 1] <= t < edges[s]:
            return s
    if edges[m] <= t <= upper:
        return m + 1
    return None


# ---------------------------------------------------------------------------
# numeric evaluation


def labeled_letters(Q: NCPoly) -> List[Letter]:
    return sorted(Q.letters(), key=lambda l: l.sort_key())


def _letter_image(let: Letter, order: int):
    """Free word of a labelled unitary letter (time keys are depths)."""
    if not let.is_unitary:
        return None
    I = let.label
    if len(I) != 2 * order:
        raise ValueError(f"letter {let} does not carry an order-{order} label")
    word = [(("B", c, let.index), l + 1) for l, c in enumerate(I)]
    word.append((("H", let.index), None))
    return word


def evaluate_labeled(Q: NCPoly, order: int, gaps: Mapping[int, object],
                     matrices: Optional[Mapping[str, np.ndarray]] = None,
                     moments: Optional[FubmMoments] = None,
                     ctx: Optional[TraceContext] = None,
                     series_tol: float = 1e-10):
    """``tau`` of ``Q`` with ``U_{i,I} -> prod_l u^{I_l}_{i, gaps[l]} u_i``.

    ``gaps[l]`` (1-based depth) may be a float or an array; matrix letters
    ``Z_j``/``Y_j`` map to ``matrices["Z<j>"]`` and its adjoint.

    Returns ``(value, series_error)``.
    """
    matrices = dict(matrices or {})
    if ctx is None:
        ctx = TraceContext(matrices, moments=moments)
    assignment = {}
    for let in Q.letters():
        if let.is_unitary:
            if let.kind == "V":
                continue
            I = let.label
            if len(I) != 2 * order:
                raise ValueError(f"letter {let} does not carry an order-{order} label")
            w = [(fubm(c, let.index, gaps[l + 1]), 1) for l, c in enumerate(I)]
            w.append((haar(let.index), 1))
            assignment[let] = w
        elif let.kind == "Z":
            assignment[let] = [(matrix(f"Z{let.index}"), 1)]
    for let in Q.letters():
        if let.kind == "V" and let.adjoint() not in assignment:
            I = let.label
            w = [(fubm(c, let.index, gaps[l + 1]), 1) for l, c in enumerate(I)]
            w.append((haar(let.index), 1))
            assignment[let.adjoint()] = w
        if let.kind == "Y" and let.adjoint() not in assignment:
            assignment[let.adjoint()] = [(matrix(f"Z{let.index}"), 1)]
    return eval_ncpoly(Q, assignment, ctx, tol=series_tol)


def _gl_nodes(n: int, scale: float):
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    g = -scale * np.log1p(-x)
    jac = scale / (1.0 - x)
    return g, w * jac


def alpha1_integrand(Q: NCPoly, g1, g2, matrices=None, d=None, L=None,
                     moments: Optional[FubmMoments] = None):
    """Integrand ``tau(L_1^0(Q)(u^{T_1}, Z))`` at gap values ``(g1, g2)``.

    ``g1 = t_1`` and ``g2 = t_2 - t_1``; arrays broadcast.
    """
    if L is None:
        L = build_L(1, 0, Q, d)
    g1, g2 = np.broadcast_arrays(np.asarray(g1, float), np.asarray(g2, float))
    shape = g1.shape
    val, err = evaluate_labeled(L, 1, {1: g1.ravel(), 2: g2.ravel()}, matrices, moments)
    val = np.broadcast_to(np.asarray(val, dtype=complex), (g1.size,)).reshape(shape)
    return val


def _alpha1_poly(Q: NCPoly, matrices, cfg: QuadratureConfig, d=None, nodes=None,
                 moments: Optional[FubmMoments] = None):
    n = nodes or cfg.nodes
    L = build_L(1, 0, Q, d)
    if L.is_zero():
        return 0j, 0.0, 0.0
    g, w = _gl_nodes(n, cfg.scale)
    G1, G2 = np.meshgrid(g, g, indexing="ij")
    W = np.outer(w, w)
    vals, serr = evaluate_labeled(L, 1, {1: G1.ravel(), 2: G2.ravel()}, matrices, moments,
                                  series_tol=cfg.series_tol)
    vals = np.broadcast_to(np.asarray(vals, dtype=complex), (G1.size,))
    integral = complex(np.sum(vals * W.ravel()))
    return integral, float(serr) * float(np.sum(W)), float(g.max())


def _prepare(target, P: Optional[NCPoly]):
    """Return list of ``(coef, Q, y)`` pieces; ``y`` is None for polynomials."""
    if isinstance(target, NCPoly):
        return [(1.0, target, None)]
    if isinstance(target, FourierSpec):
        if P is None:
            raise ValueError("a FourierSpec needs the polynomial P")
        if target.moment is not None:
            return [(1.0, reduce_unitary(P ** target.moment), None)]
        return [(c, P, y) for y, c in target.atoms]
    raise TypeError("target must be an NCPoly or a FourierSpec")


def _series_terms(P: NCPoly, y: float, cfg: QuadratureConfig, A: float):
    """Truncated ``sum_k (iy)^k/k! P^k`` with its tail bound."""
    a = abs(y) * float(sum(abs(c) * A ** word_degree(w) for w, c in P.terms.items()))
    terms = []
    power = NCPoly.one()
    k = 0
    tail = math.exp(a) - 1.0
    coef_sum = 1.0
    terms.append((1.0 + 0j, power))
    while k < cfg.series_max:
        tail = math.exp(a) - coef_sum if a < 700 else float("inf")
        if tail <= cfg.series_tol:
            break
        k += 1
        power = reduce_unitary(power * P)
        terms.append(((1j * y) ** k / math.factorial(k), power))
        coef_sum += a ** k / math.factorial(k)
    tail = max(0.0, math.exp(a) - coef_sum) if a < 700 else float("inf")
    return terms, tail, a


def alpha(order: int, target, matrices: Optional[Mapping[str, np.ndarray]] = None,
          cfg: Optional[QuadratureConfig] = None, P: Optional[NCPoly] = None,
          d: Optional[int] = None, moments: Optional[FubmMoments] = None) -> ExpansionResult:
    """Expansion coefficients up to ``order`` (0 or 1).

    ``target`` is a polynomial ``Q`` or a :class:`FourierSpec` together
    with ``P``.  For atomic Fourier data ``f(x) = sum c_j e^{i y_j x}`` the
    exponential is expanded as ``sum_k (i y)^k/k! P^k`` (letters are
    unitary, so ``U_i U_i^*`` cancellations are applied first) and the
    tail is bounded by ``sum_{k>K} (|y| |P|_A)^k / k!`` with ``A`` the
    largest matrix norm.
    """
    if order not in (0, 1):
        raise ValueError("numerical coefficients are available for order 0 and 1")
    cfg = cfg or QuadratureConfig()
    matrices = {k: np.asarray(v, dtype=complex) for k, v in (matrices or {}).items()}
    A = max([1.0] + [float(np.linalg.norm(m, 2)) for m in matrices.values()])
    pieces = _prepare(target, P)
    a0 = 0j
    a1 = 0j
    qerr = 0.0
    serr = 0.0
    tmax = 0.0
    moments = moments or FubmMoments()
    for coef, Q, y in pieces:
        if y is None:
            polys = [(1.0, Q)]
            tail = 0.0
            scale_bound = 0.0
        else:
            polys, tail, scale_bound = _series_terms(Q, y, cfg, A)
        merged = sum_polys(c * p for c, p in polys)
        merged = reduce_unitary(merged)
        v0, e0 = evaluate_labeled(merged, 0, {}, matrices, moments, series_tol=cfg.series_tol)
        a0 += coef * complex(v0)
        serr += abs(coef) * (tail + float(e0))
        if order >= 1:
            v1, e1, tm = _alpha1_poly(merged, matrices, cfg, d, moments=moments)
            a1 += coef * v1
            tmax = max(tmax, tm)
            serr += abs(coef) * e1
            if cfg.error_estimate:
                coarse = QuadratureConfig(cfg.nodes - 8, cfg.scale, cfg.series_tol,
                                          cfg.series_max, False)
                v1c, _, _ = _alpha1_poly(merged, matrices, coarse, d, moments=moments)
                qerr += abs(coef) * abs(v1 - v1c)
            if y is not None:
                # the order-one series tail: alpha_1(P^k) grows at most like
                # k^4 |P|_A^k, so bound it by the fourth derivative tail
                qerr += abs(coef) * _tail_k4(scale_bound, len(polys) - 1)
    return ExpansionResult(a0, a1, qerr, tmax, serr)


def _tail_k4(a: float, K: int) -> float:
    total = 0.0
    for k in range(K + 1, K + 200):
        if a <= 0:
            break
        term = math.exp(4 * math.log(k) + k * math.log(a) - math.lgamma(k + 1))
        total += term
        if term < 1e-300:
            break
    return total


# ---------------------------------------------------------------------------
# bounds


def _poly_stats(P: NCPoly):
    m = len(P.terms)
    n = P.degree()
    cmax = max([1.0] + [abs(c) for c in P.terms.values()])
    return m, n, cmax


def remainder_bound(P: NCPoly, f_norm: float, K_N: float, k: int, C: float = 1.0) -> float:
    """``|f|_{C^{4k+7}} (C K_N^{n+1} C_max m n (n+1))^{4k+6} k^{14k}``.

    ``m`` is the monomial count, ``n = deg P``, ``C_max = max(1, max|c|)``,
    ``K_N = max(1, max |Z|)``; ``0^0`` is taken as 1.  ``C`` is the
    unspecified universal constant, so the value is a shape rather than a
    certified bound.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    m, n, cmax = _poly_stats(P)
    K_N = max(1.0, float(K_N))
    base = C * K_N ** (n + 1) * cmax * m * n * (n + 1)
    kk = 1.0 if k == 0 else float(k) ** (14 * k)
    return float(f_norm) * base ** (4 * k + 6) * kk


def coefficient_bound(P: NCPoly, f_norm: float, K_N: float, j: int, C: float = 1.0) -> float:
    """Bound shape for ``|alpha_j|``: ``(C K_N^n C_max m n (n+1))^{4j+1} j^{5j}`` times ``f_norm``."""
    m, n, cmax = _poly_stats(P)
    K_N = max(1.0, float(K_N))
    base = C * K_N ** n * cmax * m * n * (n + 1)
    jj = 1.0 if j == 0 else float(j) ** (5 * j)
    return float(f_norm) * base ** (4 * j + 1) * jj


# ---------------------------------------------------------------------------
# empirical checks


@dataclass
class FitReport:
    Ns: List[int]
    means: List[float]
    stderrs: List[float]
    intercept: float
    intercept_err: float
    slope: float
    slope_err: float
    residual_slope: float
    alpha0: Optional[complex] = None
    alpha1: Optional[complex] = None
    rows: List[Dict[str, float]] = field(default_factory=list)


def weighted_fit(Ns: Sequence[int], means: Sequence[float], errs: Sequence[float]):
    """Weighted least squares of ``mean ~ a + b / N^2``; returns a, b and errors."""
    x = 1.0 / np.asarray(Ns, float) ** 2
    yv = np.asarray(means, float)
    w = 1.0 / np.maximum(np.asarray(errs, float), 1e-300) ** 2
    X = np.vstack([np.ones_like(x), x]).T
    WX = X * w[:, None]
    cov = np.linalg.inv(X.T @ WX)
    beta = cov @ (WX.T @ yv)
    return float(beta[0]), float(np.sqrt(cov[0, 0])), float(beta[1]), float(np.sqrt(cov[1, 1]))


def loglog_slope(Ns: Sequence[float], residuals: Sequence[float]) -> float:
    x = np.log(np.asarray(Ns, float))
    y = np.log(np.abs(np.asarray(residuals, float)))
    return float(np.polyfit(x, y, 1)[0])


def expansion_fit(P: NCPoly, f: FourierSpec, matrix_family, Ns: Sequence[int],
                  samples, seed: int = 0, threads: int = 1,
                  compute_alpha: bool = True, cfg: Optional[QuadratureConfig] = None) -> FitReport:
    """Fit Monte Carlo estimates of ``E[ts f(P)]`` against ``a + b/N^2``.

    ``matrix_family(N)`` returns the matrices at size ``N`` (a fixed
    pattern, so their distribution does not depend on ``N``);
    ``samples`` is an int or a function ``N -> int``.
    """
    from . import rmt

    if len(Ns) < 4:
        raise ValueError("need at least four sizes")
    means, errs, rows = [], [], []
    for idx, N in enumerate(Ns):
        ns = samples(N) if callable(samples) else int(samples)
        Zs = matrix_family(N) if matrix_family is not None else {}
        est = rmt.mc_expect_trace(P, f, Zs, N, ns, rmt.RngStream(seed, 1000 + idx), threads=threads)
        means.append(float(np.real(est.mean)))
        errs.append(float(est.stderr))
        rows.append({"N": N, "samples": ns, "mean": means[-1], "stderr": errs[-1]})
    a, ea, b, eb = weighted_fit(Ns, means, errs)
    resid = [m - a - b / N ** 2 for m, N in zip(means, Ns)]
    rslope = loglog_slope(Ns, resid) if all(r != 0 for r in resid) else float("nan")
    rep = FitReport(list(Ns), means, errs, a, ea, b, eb, rslope, rows=rows)
    if compute_alpha:
        mats = matrix_family(Ns[0]) if matrix_family is not None else {}
        mats = {(f"Z{k}" if isinstance(k, (int, np.integer)) else k): m for k, m in mats.items()}
        res = alpha(1, f, mats, cfg, P=P)
        rep.alpha0, rep.alpha1 = res.alpha0, res.alpha1
    if all(e == 0 for e in errs):
        pass
    elif abs(b) < eb and compute_alpha and abs(rep.alpha1 or 0) > 0:
        rep.rows.append({"warning": "insufficient samples for the 1/N^2 signal"})
    return rep


def coefficient_continuity_check(Q: NCPoly, matrices: Mapping[str, np.ndarray], eps: float,
                                 seed: int = 0, cfg: Optional[QuadratureConfig] = None,
                                 letter: Optional[str] = None) -> Dict[str, float]:
    """Finite-difference Lipschitz estimate of ``alpha_1`` in the matrices.

    Perturbs ``matrices[letter]`` (default: the first one) along a random
    Hermitian direction of unit norm by ``eps`` and ``eps/2``.
    """
    cfg = cfg or QuadratureConfig(error_estimate=False)
    rng = np.random.default_rng(seed)
    names = sorted(matrices)
    letter = letter or names[0]
    Zl = np.asarray(matrices[letter], dtype=complex)
    n = Zl.shape[0]
    H = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    H = (H + H.conj().T) / 2
    H /= np.linalg.norm(H, 2)
    base = alpha(1, Q, matrices, cfg).alpha1

    def shifted(e):
        m = dict(matrices)
        m[letter] = Zl + e * H
        return alpha(1, Q, m, cfg).alpha1

    d1 = abs(shifted(eps) - base)
    d2 = abs(shifted(eps / 2) - base)
    ratio = d1 / d2 if d2 > 0 else float("nan")
    return {"eps": eps, "delta_eps": d1, "delta_half": d2, "ratio": ratio,
            "lipschitz": d1 / eps if eps else 0.0}
