import itertools
from fractions import Fraction

import numpy as np
import pytest
import sympy as sp

from haarexp import rmt
from haarexp import weingarten as wg

N = wg.N_SYMBOL


def test_wg_small_tables():
    assert wg.wg(1, 5)((0,)) == Fraction(1, 5)
    t = wg.wg(2, 4)
    assert t((0, 1)) == Fraction(1, 15)
    assert t((1, 0)) == Fraction(-1, 60)
    s = wg.wg(2, N)
    assert sp.simplify(s((0, 1)) - 1 / (N ** 2 - 1)) == 0
    assert sp.simplify(s((1, 0)) + 1 / (N * (N ** 2 - 1))) == 0


def _cycles(p):
    seen, c = set(), 0
    for i in range(len(p)):
        if i not in seen:
            c += 1
            j = i
            while j not in seen:
                seen.add(j)
                j = p[j]
    return c


@pytest.mark.parametrize("k,Nv", [(2, 3), (3, 4), (4, 5)])
def test_gram_inverse_exact(k, Nv):
    table = wg.wg(k, Nv).values()
    perms = list(itertools.permutations(range(k)))
    inv = {p: tuple(sorted(range(k), key=lambda i: p[i])) for p in perms}
    for s in perms:
        total = Fraction(0)
        for t in perms:
            st = tuple(s[inv[t][i]] for i in range(k))
            total += Fraction(Nv) ** _cycles(st) * table[t]
        assert total == (1 if s == tuple(range(k)) else 0)


def test_singular_gram_rejected():
    with pytest.raises(ValueError):
        wg.wg(3, 2)
    with pytest.raises(ValueError):
        wg.wg(wg.MAX_K + 1, 10)


def test_conjugation_word():
    Z1 = np.diag([1.0, 2.0, 0.0]).astype(complex)
    Z2 = np.diag([0.5, -1.0, 3.0]).astype(complex)
    expr = wg.exact_word_expectation("U Z1 U* Z2", {"Z1": Z1, "Z2": Z2})
    target = (np.trace(Z1) / 3 * np.trace(Z2) / 3).real
    assert complex(sp.N(expr)) == pytest.approx(target, abs=1e-14)
    for Nv in (3, 9):
        val = wg.exact_word_expectation("U Z1 U* Z2", {"Z1": np.kron(np.eye(Nv // 3), Z1),
                                                        "Z2": np.kron(np.eye(Nv // 3), Z2)}, N=Nv)
        assert val == pytest.approx(target, abs=1e-14)


def test_unbalanced_words_vanish():
    for n in range(1, 6):
        assert wg.exact_word_expectation(" ".join(["U"] * n), {}, N=8) == 0


def test_k2_word_coefficients():
    Z = np.diag([1.0, -1.0]).astype(complex)
    expr = wg.exact_word_expectation("U Z U* Z U Z U* Z", {"Z": Z})
    assert sp.simplify(expr + 1 / (N ** 2 - 1)) == 0
    a0, a1 = wg.series_coefficients(expr, 1)
    assert a0 == 0 and a1 == -1


def test_series_coefficients_examples():
    assert wg.series_coefficients(sp.Rational(3, 4), 1) == (sp.Rational(3, 4), 0)
    assert wg.series_coefficients(1 / (N ** 2 - 1), 2) == (0, 1, 1)
    with pytest.raises(ArithmeticError):
        wg.series_coefficients(1 / N, 1)


def test_two_unitary_word():
    Z1 = np.diag([1.0, -1.0]).astype(complex)
    Z2 = np.diag([1.0, 0.0]).astype(complex)
    expr = wg.exact_word_expectation("U Z1 W Z2 U* Z1 W* Z2", {"Z1": Z1, "Z2": Z2})
    a = wg.series_coefficients(expr, 1)
    assert len(a) == 2


def test_evenness_on_small_words():
    Z = np.diag([1.0, 2.0, -0.5]).astype(complex)
    for word in ("U Z U* Z", "U Z U Z U* Z U* Z", "U Z U* Z U Z U* Z", "U U* Z U Z U* Z"):
        expr = wg.exact_word_expectation(word, {"Z": Z})
        wg.series_coefficients(expr, 2)


@pytest.mark.slow
def test_k2_word_matches_monte_carlo():
    Z = np.diag(np.tile([1.0, -1.0], 8)).astype(complex)
    exact = wg.exact_word_expectation("U Z U* Z U Z U* Z", {"Z": Z}, N=16)
    g = rmt.RngStream(7, 0)
    U = rmt.haar_sample(16, g, 20000)
    Uh = rmt._adj(U)
    vals = rmt.normalized_trace(U @ Z @ Uh @ Z @ U @ Z @ Uh @ Z)
    est = rmt.McEstimate.from_samples(vals)
    assert est.zscore(exact) < 3


def test_wg4_identity_closed_form():
    N = wg.N_SYMBOL
    expected = (N ** 4 - 8 * N ** 2 + 6) / (N ** 2 * (N ** 2 - 1) * (N ** 2 - 4) * (N ** 2 - 9))
    assert sp.simplify(wg.wg(4, N)((0, 1, 2, 3)) - expected) == 0


def test_word_series_matches_symbolic_series(rng):
    Zm = np.diag([1.0, 2.0, -0.5]).astype(complex)
    for _ in range(12):
        k = int(rng.integers(1, 4))
        toks = ["U"] * k + ["U*"] * k + ["Z"] * int(rng.integers(0, 3))
        rng.shuffle(toks)
        word = " ".join(toks)
        fast = wg.word_series(word, {"Z": Zm}, 1)
        slow = wg.series_coefficients(wg.exact_word_expectation(word, {"Z": Zm}), 1)
        assert np.allclose(fast, [complex(c) for c in slow], atol=1e-10)


def test_word_series_unbalanced_and_constant():
    Zm = np.diag([1.0, -1.0]).astype(complex)
    assert wg.word_series("U Z U Z", {"Z": Zm}, 1) == (0j, 0j)
    assert wg.word_series("Z Z", {"Z": Zm}, 1) == (1 + 0j, 0j)
