import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from haarexp import freetrace as ft
from haarexp import fubm as fb
from haarexp import weingarten as wg
from haarexp.ncalg import Letter, NCPoly, U, V, Z, exp_atom

u1 = ft.haar(1)
u2 = ft.haar(2)


def test_haar_moments():
    assert ft.trace([(u1, 3)]) == 0
    assert ft.trace([(u1, 2), (u1, -2)]) == 1
    assert ft.trace([]) == 1


def test_semicircle_like_moment_of_u_plus_ustar():
    # expand (u + u*)^4 word by word, keep the trace of each
    total = 0
    for signs in itertools.product((1, -1), repeat=4):
        total += ft.trace([(u1, s) for s in signs])
    assert total == 6
    # independent count: balanced sign patterns
    assert math.comb(4, 2) == 6


def test_conjugation_by_haar():
    Zm = np.diag([1.0, -1.0, 2.0, 0.5]).astype(complex)
    ctx = ft.TraceContext({"Z": Zm})
    z = ft.matrix("Z")
    val = ft.trace([(u1, 1), (z, 1), (u1, -1), (z, 1)], ctx)
    assert val == pytest.approx(np.trace(Zm).real ** 2 / 16, abs=1e-14)


def test_two_free_unitaries():
    ctx = ft.TraceContext()
    assert ft.trace([(u1, 1), (u2, 1), (u1, -1), (u2, -1)], ctx) == 0
    assert ft.trace([(u1, 1), (u2, 1), (u2, -1), (u1, -1)], ctx) == 1


def test_fubm_moment_examples():
    for t in (0.3, 1.0, 4.0):
        assert ft.fubm_moment(1, t) == pytest.approx(math.exp(-t / 2), rel=1e-12)
    for n in range(5):
        assert ft.fubm_moment(n, 0.0) == 1.0
    assert ft.fubm_moment(-3, 2.0) == ft.fubm_moment(3, 2.0)
    with pytest.raises(ValueError):
        ft.fubm_moment(1, -1.0)


@pytest.mark.parametrize("t", [0.5, 2.0, 5.0, 12.0])
def test_fubm_ode_matches_closed_form(t):
    for n in range(1, 9):
        assert ft.fubm_moment(n, t) == pytest.approx(ft.fubm_moment_closed_form(n, t), abs=1e-12)


def test_fubm_ode_matches_density_quadrature():
    tab = fb.density_table(12.0, 1024)
    assert ft.fubm_moment(2, 12.0) == pytest.approx(fb.moment_by_quadrature(2, 12.0, tab), abs=1e-6)


def test_fubm_moments_vectorized():
    ts = np.array([[0.0, 1.0], [2.0, 1.0]])
    m = ft.FubmMoments().table(3, ts)
    assert m.shape == (4, 2, 2)
    assert m[1, 0, 1] == pytest.approx(math.exp(-0.5), rel=1e-12)
    assert m[2, 0, 1] == m[2, 1, 1]


def test_fubm_atom_in_word():
    b = ft.fubm(1, 1, 0.7)
    assert ft.trace([(b, 2)]) == pytest.approx(ft.fubm_moment(2, 0.7), abs=1e-15)
    # a Brownian atom is free from the Haar unitary with the same index
    assert ft.trace([(b, 1), (u1, 1), (b, -1), (u1, -1)]) == pytest.approx(
        ft.fubm_moment(1, 0.7) ** 2, abs=1e-15)


def test_inconsistent_fubm_times():
    ctx = ft.TraceContext()
    with pytest.raises(ValueError):
        ft.trace([(ft.fubm(1, 1, 0.5), 1), (ft.fubm(1, 1, 0.6), -1)], ctx)


def test_unknown_matrix_handle():
    with pytest.raises(KeyError):
        ft.trace([(ft.matrix("W"), 1)], ft.TraceContext({"Z": np.eye(2)}))


def test_eval_ncpoly_examples():
    assign = {Letter("U", 1): [(u1, 1)]}
    v, e = ft.eval_ncpoly(U(1) * V(1), assign)
    assert v == 1 and e == 0
    v, _ = ft.eval_ncpoly((U(1) + V(1)) ** 2, assign)
    assert v == 2
    v, _ = ft.eval_ncpoly(exp_atom(U(1) + V(1), 0.0), assign)
    assert v == 1


def test_eval_ncpoly_exponential_matches_bessel():
    from scipy.special import j0

    assign = {Letter("U", 1): [(u1, 1)]}
    for y in (0.5, 1.5):
        v, err = ft.eval_ncpoly(exp_atom(U(1) + V(1), 1j * y), assign, tol=1e-13)
        assert abs(v - j0(2 * y)) <= max(err, 1e-12)
        assert err < 1e-10


def test_noncrossing_counts_are_catalan():
    for r in range(1, 7):
        assert len(ft.noncrossing_partitions(r)) == math.comb(2 * r, r) // (r + 1)


def test_kreweras_is_bijective():
    r = 5
    parts = ft.noncrossing_partitions(r)
    images = {ft.kreweras(p, r) for p in parts}
    assert len(images) == len(parts)
    # |pi| + |K(pi)| = r + 1
    for p in parts:
        assert len(p) + len(ft.kreweras(p, r)) == r + 1


atoms = st.sampled_from([("u1", 1), ("u1", -1), ("u2", 1), ("u2", -1), ("u1", 2), ("Z", 1), ("W", 1)])
ZW = {"Z": np.diag([1.0, -0.5, 2.0]).astype(complex),
      "W": np.array([[0, 1, 0], [0, 0, 1j], [0.5, 0, 0]], dtype=complex)}


def _word(spec):
    table = {"u1": u1, "u2": u2, "Z": ft.matrix("Z"), "W": ft.matrix("W")}
    return [(table[a], e) for a, e in spec]


def _adjoint(spec):
    out = []
    for a, e in reversed(spec):
        if a in ("Z", "W"):
            out.append((a + "*", 1))
        else:
            out.append((a, -e))
    return out


@given(st.lists(atoms, max_size=5), st.lists(atoms, max_size=3))
def test_traciality(w1, w2):
    ctx = ft.TraceContext(ZW)
    a = ft.trace(_word(w1 + w2), ctx)
    b = ft.trace(_word(w2 + w1), ctx)
    assert abs(a - b) < 1e-12


@given(st.lists(atoms, max_size=4))
def test_positivity(w):
    mats = dict(ZW)
    mats["Z*"] = ZW["Z"].conj().T
    mats["W*"] = ZW["W"].conj().T
    ctx = ft.TraceContext(mats)
    table = {"u1": u1, "u2": u2}
    full = w + _adjoint(w)
    word = [(table[a], e) if a in table else (ft.matrix(a), 1) for a, e in full]
    val = ft.trace(word, ctx)
    assert val.real >= -1e-12
    assert abs(val.imag) < 1e-12


def _balanced_words(max_len):
    for L in range(2, max_len + 1):
        for tokens in itertools.product(("U", "U*", "Z"), repeat=L):
            if tokens.count("U") == tokens.count("U*") and tokens.count("U") > 0:
                yield tokens


def test_leading_order_matches_weingarten():
    Zm = np.diag([1.0, 2.0, -0.5]).astype(complex)
    ctx = ft.TraceContext({"Z": Zm})
    z = ft.matrix("Z")
    checked = 0
    for tokens in _balanced_words(6):
        free = ft.trace([(u1, 1) if t == "U" else (u1, -1) if t == "U*" else (z, 1)
                         for t in tokens], ctx)
        expr = wg.exact_word_expectation(" ".join(tokens), {"Z": Zm})
        a0 = complex(wg.series_coefficients(expr, 0)[0])
        assert abs(free - a0) < 1e-9
        checked += 1
    assert checked > 100
