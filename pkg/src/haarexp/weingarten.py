"""
Exact finite-N Haar integrals through the Weingarten function.

``Wg(sigma, N)`` solves ``sum_tau N^{#cycles(sigma tau^{-1})} Wg(tau) = 1_{sigma = id}``
on the symmetric group ``S_k``.  Both sides are class functions, so the
system reduces to one unknown per cycle type; it is solved in exact
rational arithmetic for integer ``N`` and in :mod:`sympy` rational
functions for symbolic ``N``.

Words are cyclic sequences of letters ``"U"``, ``"U*"`` (or, for a second
independent unitary, ``"W"``, ``"W*"``) and matrix handles.  The
expectation ``E[ts_N(word)]`` is the pairing sum

    sum_{sigma, tau} Wg(sigma tau^{-1}) prod_{cycles} Tr(matrix blocks)

where the matrix blocks are read off by following indices through the
word.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from itertools import permutations
from typing import Dict, List, Mapping, Sequence, Tuple, Union

import numpy as np
import sympy as sp

__all__ = [
    "WgTable",
    "wg",
    "parse_word",
    "exact_word_expectation",
    "series_coefficients",
    "word_series",
    "numeric_expectation",
    "N_SYMBOL",
]

N_SYMBOL = sp.Symbol("N", positive=True)

MAX_K = 5


def _cycle_type(perm: Sequence[int]) -> Tuple[int, ...]:
    seen = [False] * len(perm)
    lengths = []
    for i in range(len(perm)):
        if not seen[i]:
            n = 0
            j = i
            while not seen[j]:
                seen[j] = True
                j = perm[j]
                n += 1
            lengths.append(n)
    return tuple(sorted(lengths, reverse=True))


def _compose(a: Sequence[int], b: Sequence[int]) -> Tuple[int, ...]:
    """``(a o b)(x) = a(b(x))``."""
    return tuple(a[b[x]] for x in range(len(b)))


def _inverse(a: Sequence[int]) -> Tuple[int, ...]:
    out = [0] * len(a)
    for i, x in enumerate(a):
        out[x] = i
    return tuple(out)


@lru_cache(maxsize=None)
def _class_data(k: int):
    """Cycle types of S_k with representatives and, for each pair of
    classes, how many ``tau`` in class ``B`` give ``rep_A tau^{-1}`` of each type."""
    perms = list(permutations(range(k)))
    types = sorted({_cycle_type(p) for p in perms}, reverse=True)
    rep = {}
    for p in perms:
        rep.setdefault(_cycle_type(p), p)
    # count[A][B][C] = #{tau in class B : type(rep_A tau^{-1}) = C}
    count = {A: {B: {} for B in types} for A in types}
    for A in types:
        ra = rep[A]
        for tau in perms:
            B = _cycle_type(tau)
            C = _cycle_type(_compose(ra, _inverse(tau)))
            count[A][B][C] = count[A][B].get(C, 0) + 1
    return types, rep, count


class WgTable:
    """Weingarten values on ``S_k`` for one ``N`` (int or sympy symbol)."""

    def __init__(self, k: int, N, values: Dict[Tuple[int, ...], object]):
        self.k = k
        self.N = N
        self.by_type = values

    def __call__(self, perm: Sequence[int]):
        if len(perm) == 0:
            return 1
        return self.by_type[_cycle_type(perm)]

    def values(self) -> Dict[Tuple[int, ...], object]:
        """Map permutation -> value over all of ``S_k``."""
        return {p: self(p) for p in permutations(range(self.k))}


def wg(k: int, N) -> WgTable:
    """Weingarten table for ``S_k``.

    ``N`` may be a positive integer (exact :class:`fractions.Fraction`
    values) or a sympy symbol (rational functions).
    """
    if k < 0 or k > MAX_K:
        raise ValueError(f"k must lie in [0, {MAX_K}]")
    symbolic = isinstance(N, sp.Basic)
    if not symbolic and int(N) < k:
        raise ValueError(f"Gram matrix is singular for N={N} < k={k}")
    if k == 0:
        return WgTable(0, N, {(): 1})
    return _wg_cached(k, N)


@lru_cache(maxsize=None)
def _wg_cached(k: int, N) -> WgTable:
    symbolic = isinstance(N, sp.Basic)
    types, rep, count = _class_data(k)
    # sum_B sum_{tau in B} N^{#cyc(rep_A tau^{-1})} w_B = 1_{A = id}
    n = len(types)
    if symbolic:
        M = sp.zeros(n, n)
        rhs = sp.zeros(n, 1)
    else:
        M = [[Fraction(0)] * n for _ in range(n)]
        rhs = [Fraction(0)] * n
    for a, A in enumerate(types):
        for b, B in enumerate(types):
            entry = 0
            for C, cnt in count[A][B].items():
                entry += cnt * (N ** len(C) if symbolic else Fraction(int(N)) ** len(C))
            if symbolic:
                M[a, b] = entry
            else:
                M[a][b] = Fraction(entry)
        is_id = A == (1,) * k
        if symbolic:
            rhs[a] = 1 if is_id else 0
        else:
            rhs[a] = Fraction(1 if is_id else 0)
    if symbolic:
        # exact solve over the field Q(N); avoids expression-level simplify
        from sympy.polys.matrices import DomainMatrix

        K = sp.QQ.frac_field(N)
        dM = DomainMatrix.from_Matrix(M).convert_to(K)
        drhs = DomainMatrix.from_Matrix(rhs).convert_to(K)
        sol = dM.lu_solve(drhs).to_Matrix()
        vals = {B: sp.factor(sol[b, 0]) for b, B in enumerate(types)}
    else:
        sol = _solve_fraction(M, rhs)
        vals = {B: sol[b] for b, B in enumerate(types)}
    return WgTable(k, N, vals)


def _solve_fraction(M: List[List[Fraction]], rhs: List[Fraction]) -> List[Fraction]:
    n = len(rhs)
    A = [row[:] + [rhs[i]] for i, row in enumerate(M)]
    for col in range(n):
        piv = next(r for r in range(col, n) if A[r][col] != 0)
        A[col], A[piv] = A[piv], A[col]
        p = A[col][col]
        A[col] = [x / p for x in A[col]]
        for r in range(n):
            if r != col and A[r][col] != 0:
                f = A[r][col]
                A[r] = [x - f * y for x, y in zip(A[r], A[col])]
    return [A[i][n] for i in range(n)]


# ---------------------------------------------------------------------------
# words


_UNITARY_TOKENS = {"U": ("U", 1), "U*": ("U", -1), "W": ("W", 1), "W*": ("W", -1)}


def parse_word(word: Union[str, Sequence[str]]) -> List[Tuple[str, object]]:
    """Tokenise ``"U Z1 U* Z2"`` into ``[("U", 1), ("M", "Z1"), ...]``."""
    if isinstance(word, str):
        tokens = word.replace("·", " ").split()
    else:
        tokens = list(word)
    out = []
    for tok in tokens:
        if tok in _UNITARY_TOKENS:
            out.append(_UNITARY_TOKENS[tok])
        else:
            out.append(("M", tok))
    return out


def _letter_groups(tokens):
    """Split a cyclic token list into alternating unitary/matrix-block slots.

    Returns the list of unitary letters ``(name, +-1)`` and, for each of
    them, the list of matrix handles standing between it and the next
    unitary letter (cyclically).
    """
    positions = [i for i, (kind, _) in enumerate(tokens) if kind != "M"]
    if not positions:
        return [], [[h for _, h in tokens]]
    start = positions[0]
    rot = tokens[start:] + tokens[:start]
    letters = []
    blocks = []
    for kind, val in rot:
        if kind == "M":
            blocks[-1].append(val)
        else:
            letters.append((kind, val))
            blocks.append([])
    return letters, blocks


def _block_product(handles: Sequence[str], matrices: Mapping[str, np.ndarray], N: int):
    out = np.eye(N, dtype=complex)
    for h in handles:
        if h.endswith("*") and h not in matrices:
            out = out @ np.asarray(matrices[h[:-1]]).conj().T
        else:
            out = out @ np.asarray(matrices[h])
    return out


def _pairings(letters) -> Dict[str, Tuple[List[int], List[int]]]:
    by_name: Dict[str, Tuple[List[int], List[int]]] = {}
    for pos, (name, e) in enumerate(letters):
        plus, minus = by_name.setdefault(name, ([], []))
        (plus if e == 1 else minus).append(pos)
    return by_name


def _structure_terms(letters):
    """Enumerate the pairing sum.

    Yields ``(wg_args, cycles)`` where ``wg_args`` lists, for each unitary,
    ``(k, sigma tau^{-1})`` and ``cycles`` is the list of index cycles,
    each a list of slot positions whose matrix blocks are multiplied.

    Index bookkeeping: the word is ``W_1 M_1 W_2 M_2 ... W_L M_L`` with
    ``W_p`` a unitary letter carrying row index ``a_p`` and column index
    ``b_p``; ``M_p`` connects ``b_p`` to ``a_{p+1}``.  For a ``U``-letter
    ``W_p = U_{a_p b_p}``; for a ``U*``-letter ``W_p = conj(U_{b_p a_p})``.
    Haar integration pairs the ``U`` positions ``p_r`` with the ``U*``
    positions ``q_s``: ``delta(a_{p_r}, b_{q_sigma(r)}) delta(b_{p_r}, a_{q_tau(r)})``.
    """
    groups = _pairings(letters)
    L = len(letters)
    names = sorted(groups)
    for plus, minus in groups.values():
        if len(plus) != len(minus):
            return
    choices = []
    for name in names:
        plus, minus = groups[name]
        k = len(plus)
        perms = list(permutations(range(k)))
        choices.append([(name, k, s, t) for s in perms for t in perms])

    def rec(idx, acc):
        if idx == len(choices):
            yield acc
            return
        for ch in choices[idx]:
            yield from rec(idx + 1, acc + [ch])

    for combo in rec(0, []):
        wg_args = [(k, _compose(sigma, _inverse(tau))) for _, k, sigma, tau in combo]
        # follow the cycles: start at column index b_p, multiply M_p, land on
        # row index a_{p+1}; a_{p+1} is identified with a column index of
        # the letter it is paired with.
        partner_of_a = {}
        for name, k, sigma, tau in combo:
            plus, minus = groups[name]
            for r in range(k):
                p = plus[r]
                q_s = minus[sigma[r]]
                q_t = minus[tau[r]]
                partner_of_a[p] = q_s      # a_p = b_{q_sigma(r)}
                partner_of_a[q_t] = p      # a_{q_tau(r)} = b_p
        seen = [False] * L
        cycles = []
        for start in range(L):
            if seen[start]:
                continue
            cyc = []
            p = start
            while not seen[p]:
                seen[p] = True
                cyc.append(p)
                nxt = (p + 1) % L
                p = partner_of_a[nxt]
            cycles.append(cyc)
        yield wg_args, cycles


def exact_word_expectation(word, matrices: Mapping[str, np.ndarray], N=None):
    """``E[ts_N(word)]`` for Haar unitaries ``U`` (and ``W``).

    With ``N=None`` the result is a sympy expression in :data:`N_SYMBOL`
    whose only ``N``-dependence comes from the Weingarten function; the
    matrix traces are taken at the size of the supplied matrices (so the
    caller keeps their normalised traces ``N``-independent, e.g. with
    diagonal sign patterns).  With an integer ``N`` the result is a
    complex number computed with exact Weingarten rationals.
    """
    tokens = parse_word(word)
    letters, blocks = _letter_groups(tokens)
    mats = {k: np.asarray(v, dtype=complex) for k, v in matrices.items()}
    size = next(iter(mats.values())).shape[0] if mats else (int(N) if N is not None else 1)
    if not letters:
        prod = _block_product(blocks[0], mats, size)
        val = complex(np.trace(prod)) / size
        return val if N is not None else sp.nsimplify(0) + _to_sympy(val)
    total_fraction = _grouped_terms(letters, blocks, mats, size, N_SYMBOL if N is None else int(N))
    if total_fraction is None:
        return 0 if N is not None else sp.Integer(0)
    Nsym = N_SYMBOL if N is None else int(N)
    if N is None:
        expr = sp.Integer(0)
        for (weight, ncyc), val in total_fraction.items():
            expr += weight * Nsym ** (ncyc - 1) * _to_sympy(val)
        return sp.cancel(sp.together(expr))
    out = 0j
    for (weight, ncyc), val in total_fraction.items():
        out += float(Fraction(weight) * Fraction(Nsym) ** (ncyc - 1)) * val
    return out


def _grouped_terms(letters, blocks, mats, size, Nsym):
    """Pairing sum grouped by ``(Weingarten weight, number of cycles)``.

    Returns ``None`` for unbalanced words (expectation zero).
    """
    groups = _pairings(letters)
    for name, (plus, minus) in groups.items():
        if len(plus) != len(minus):
            return None
        if len(plus) > MAX_K:
            raise ValueError(f"words with more than {MAX_K} letters {name} are not supported")
    block_mats = [_block_product(b, mats, size) for b in blocks]
    ts_cache: Dict[Tuple[int, ...], complex] = {}

    def ts_cycle(cyc):
        key = tuple(cyc)
        if key not in ts_cache:
            prod = np.eye(size, dtype=complex)
            for p in cyc:
                prod = prod @ block_mats[p]
            ts_cache[key] = complex(np.trace(prod)) / size
        return ts_cache[key]

    tables = {k: wg(k, Nsym) for k in {len(plus) for plus, _ in groups.values()}}
    total = {}
    for wg_args, cycles in _structure_terms(letters):
        weight = 1
        for k, perm in wg_args:
            weight = weight * tables[k](perm)
        if weight == 0:
            continue
        prod = 1.0 + 0j
        for cyc in cycles:
            prod *= ts_cycle(cyc)
        # E[Tr(word)] = sum Wg prod_cycles Tr = sum Wg N^{ncyc} prod ts
        key = (weight, len(cycles))
        total[key] = total.get(key, 0) + prod
    return total


def _series_division(num, den, lead: int, length: int):
    """``eps^lead A(eps)/B(eps)`` to ``length`` terms; ``num``/``den`` from the top degree."""
    out = []
    C = []
    for i in range(length):
        acc = num[i] if i < len(num) else sp.Integer(0)
        for j in range(1, min(i, len(den) - 1) + 1):
            acc -= den[j] * C[i - j]
        C.append(sp.nsimplify(acc / den[0]))
        if C[-1] != 0:
            out.append((lead + i, C[-1]))
    return out


def _rational_laurent(expr, top: int):
    """Laurent coefficients of a rational function of ``N`` in ``N^{-p}``, ``p <= top``.

    Returns ``None`` when ``expr`` is not rational in ``N``.
    """
    num, den = sp.fraction(sp.cancel(sp.together(sp.sympify(expr))))
    try:
        P = sp.Poly(num, N_SYMBOL).all_coeffs()
        Q = sp.Poly(den, N_SYMBOL).all_coeffs()
    except sp.PolynomialError:
        return None
    if any(c.free_symbols for c in P + Q):
        return None
    lead = (len(Q) - 1) - (len(P) - 1)
    return _series_division(P, Q, lead, max(0, top - lead + 1))


@lru_cache(maxsize=None)
def _laurent(weight, shift: int, top: int) -> Tuple[Tuple[int, complex], ...]:
    """Coefficients of ``weight * N^shift`` in powers ``N^{-p}``, ``p <= top``."""
    return tuple((p, complex(c)) for p, c in _rational_laurent(weight * N_SYMBOL ** shift, top))


def word_series(word, matrices: Mapping[str, np.ndarray], order: int, tol: float = 1e-9):
    """Numerical coefficients ``(a_0, ..., a_order)`` of ``E[ts_N(word)]`` in ``N^{-2i}``.

    Same value as ``series_coefficients(exact_word_expectation(word, matrices), order)``
    but the expansion of each Weingarten entry is done once and cached, so
    long lists of words are cheap.  Raises ``ArithmeticError`` when a
    positive or an odd power of ``1/N`` survives.
    """
    tokens = parse_word(word)
    letters, blocks = _letter_groups(tokens)
    mats = {k: np.asarray(v, dtype=complex) for k, v in matrices.items()}
    size = next(iter(mats.values())).shape[0] if mats else 1
    if not letters:
        val = complex(np.trace(_block_product(blocks[0], mats, size))) / size
        return (val,) + (0j,) * order
    total = _grouped_terms(letters, blocks, mats, size, N_SYMBOL)
    if total is None:
        return (0j,) * (order + 1)
    top = 2 * order + 1
    acc: Dict[int, complex] = {}
    for (weight, ncyc), val in total.items():
        for p, c in _laurent(weight, ncyc - 1, top):
            acc[p] = acc.get(p, 0j) + c * val
    scale = max([1.0] + [abs(v) for v in total.values()])
    for p, c in acc.items():
        if (p < 0 or p % 2) and p <= top and abs(c) > tol * scale:
            raise ArithmeticError(f"power N^{-p} with coefficient {c}")
    return tuple(acc.get(2 * i, 0j) for i in range(order + 1))


def _to_sympy(val: complex):
    re = sp.nsimplify(round(val.real, 12), rational=True)
    im = sp.nsimplify(round(val.imag, 12), rational=True)
    return re + sp.I * im


def series_coefficients(expr, order: int, N=N_SYMBOL, check_odd: bool = True):
    """Coefficients ``(a_0, ..., a_order)`` of ``expr = sum a_i N^{-2i}``.

    Raises ``ArithmeticError`` when an odd power of ``1/N`` shows up below
    the requested order.
    """
    top = 2 * order + 1
    terms = _rational_laurent(expr, top) if N == N_SYMBOL else None
    if terms is not None:
        found = dict(terms)
        for p, c in found.items():
            if p < 0:
                raise ArithmeticError(f"positive power N^{-p} with coefficient {c}")
            if p % 2 == 1 and p <= top and check_odd:
                raise ArithmeticError(f"odd power N^-{p} with coefficient {c}")
        return tuple(found.get(2 * i, sp.Integer(0)) for i in range(order + 1))
    eps = sp.Symbol("eps", positive=True)
    e = sp.sympify(expr).subs(N, 1 / eps)
    ser = sp.series(e, eps, 0, 2 * order + 2).removeO()
    ser = sp.expand(ser)
    coeffs = []
    for p in range(0, 2 * order + 2):
        c = sp.simplify(ser.coeff(eps, p))
        if p % 2 == 1:
            if check_odd and c != 0:
                raise ArithmeticError(f"odd power N^-{p} with coefficient {c}")
            continue
        coeffs.append(c)
    return tuple(coeffs[: order + 1])


def numeric_expectation(word, matrices: Mapping[str, np.ndarray], unitaries: Mapping[str, np.ndarray]) -> complex:
    """``ts_N(word)`` at concrete unitary matrices (Monte Carlo helper)."""
    tokens = parse_word(word)
    mats = dict(matrices)
    N = next(iter(unitaries.values())).shape[0]
    prod = np.eye(N, dtype=complex)
    for kind, val in tokens:
        if kind == "M":
            if val.endswith("*") and val not in mats:
                prod = prod @ np.asarray(mats[val[:-1]]).conj().T
            else:
                prod = prod @ mats[val]
        else:
            U = unitaries[kind]
            prod = prod @ (U if val == 1 else U.conj().T)
    return complex(np.trace(prod)) / N
