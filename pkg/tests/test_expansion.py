import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from haarexp import expansion as ex
from haarexp import weingarten as wg
from haarexp.harness import parse_poly
from haarexp.ncalg import Letter, NCPoly, U, V, Z, exp_atom

ZPM = {"Z1": np.diag([1.0, -1.0]).astype(complex)}
FAST = ex.QuadratureConfig(nodes=24, error_estimate=False)


# -- brute-force oracle for the order-zero operator ----------------------------

def _splits(word, i):
    """Positions of U_i / V_i in a word: delta_i as a list of (left, right, sign)."""
    out = []
    for p, f in enumerate(word):
        if f.kind == "U" and f.index == i:
            out.append((word[:p + 1], word[p + 1:], 1))
        elif f.kind == "V" and f.index == i:
            out.append((word[:p], word[p:], -1))
    return out


def _label(word, lab):
    return tuple(Letter(f.kind, f.index, lab) if f.kind in "UV" else f for f in word)


def brute_L1(Q, d):
    acc = {}
    for w, c in Q.terms.items():
        for i in range(1, d + 1):
            for A, B, s1 in _splits(w, i):
                rot = B + A
                for a, b, s2 in _splits(rot, i):
                    for j in range(1, d + 1):
                        for a1, a2, s3 in _splits(a, j):
                            for b1, b2, s4 in _splits(b, j):
                                word = (_label(a2, (2, 1)) + _label(a1, (5, 4))
                                        + _label(b2, (6, 4)) + _label(b1, (3, 1)))
                                acc[word] = acc.get(word, 0) + 0.5 * c * s1 * s2 * s3 * s4
    return NCPoly(acc)


def test_build_L_zero_cases():
    assert ex.build_L(1, 0, Z(1)).is_zero()
    assert ex.build_L(1, 0, U(1)).is_zero()
    with pytest.raises(ValueError):
        ex.build_L(1, 3, U(1))
    with pytest.raises(ValueError):
        ex.build_L(2, 0, U(1))


@pytest.mark.parametrize("text", ["U1 Z1 U1* Z1", "U1^2", "U1 Z1 U1* Z2 U1 + 2 U1^2 Z1*",
                                  "U1 U2 U1* U2*", "U1 Z1 U2 Z1 U1* U2*"])
def test_build_L_matches_brute_force(text):
    Q = parse_poly(text)
    d = max(l.index for l in Q.letters() if l.is_unitary)
    L = ex.build_L(1, 0, Q)
    assert L == brute_L1(Q, d)
    if Q.degree() > 4:
        assert len(L) > 0


def test_build_L_involution():
    swap = {(2, 1): (3, 1), (3, 1): (2, 1), (5, 4): (6, 4), (6, 4): (5, 4)}
    f = lambda l: l.relabel(swap.get(l.label, l.label)) if l.is_unitary else l
    for text in ("U1 Z1 U1* Z2 U1 + 2 U1^2 Z1*", "U1 Z1 U1* Z1 U1 Z1 U1* Z1"):
        Q = parse_poly(text)
        assert ex.build_L(1, 0, Q.adjoint()) == ex.build_L(1, 0, Q).adjoint().map_letters(f)


def test_build_L_alphas_irrelevant_for_polynomials():
    Q = parse_poly("U1 Z1 U1* Z1 U1")
    assert ex.build_L(1, 0, Q, alphas=(0.1, 0.9, 0.3, 0.7)) == ex.build_L(1, 0, Q)


def test_build_L_second_order_labels():
    L1 = ex.build_L(1, 0, parse_poly("U1 Z1 U1* Z1 U1 Z1 U1* Z1"))
    assert ex.build_L(1, 0, parse_poly("U1 Z1 U1* Z1")).is_zero()
    parts = [ex.build_L(s, 1, L1) for s in (1, 2, 3)]
    assert any(not L2.is_zero() for L2 in parts)
    for L2 in parts:
        for let in L2.letters():
                if let.is_unitary:
                    assert len(let.label) == 4


def test_boxtimes_eval():
    a = (Letter("U", 1),)
    b = (Letter("Z", 1),)
    ident = lambda l: l
    assert ex.boxtimes_eval([[a], [b]], [ident, ident]) == [a + b]
    assert ex.boxtimes_eval([[a], []], [ident, ident]) == []
    assert len(ex.boxtimes_eval([[a, b], [a, b]], [ident, ident])) == 4
    with pytest.raises(ValueError):
        ex.boxtimes_eval([[a]], [ident, ident])


def test_time_vector():
    assert ex.check_time_vector([0.5, 1.0])
    assert not ex.check_time_vector([1.5, 1.0])
    assert ex.check_time_vector([0.1, 1.0, 0.3, 2.0])
    assert not ex.check_time_vector([0.1, 2.0, 0.3, 1.0])
    assert not ex.check_time_vector([0.1])


def test_indicator_pieces_partition():
    Q = parse_poly("U1 Z1 U1* Z1")
    # order one: t_1, t_2 sorted, then t_3 in [0, t_4]
    edges = [0.0, 0.3, 0.7]
    seen = []
    for t3 in np.linspace(0, 1.0, 41):
        s = ex._indicator_piece(t3, edges, 1.0)
        assert s is not None
        seen.append(s)
    assert seen[0] == 1 and seen[-1] == 3 and set(seen) == {1, 2, 3}
    assert ex._indicator_piece(0.3, edges, 1.0) == 2
    assert ex._indicator_piece(1.2, edges, 1.0) is None
    times = [0.7, 0.3, 0.5, 1.0]
    assert ex.full_L(times, 1, ex.build_L(1, 0, Q)) == ex.build_L(2, 1, ex.build_L(1, 0, Q))


def test_alpha0_examples():
    r = ex.alpha(0, (U(1) + V(1)) ** 2)
    assert r.alpha0 == 2
    r = ex.alpha(0, parse_poly("U1 Z1 U1* Z1"), {"Z1": np.diag([1.0, 0.0]).astype(complex)})
    assert r.alpha0 == pytest.approx(0.25, abs=1e-15)
    with pytest.raises(ValueError):
        ex.alpha(2, U(1))


@pytest.mark.parametrize("n", [1, 2, 3])
def test_alpha1_vanishes_on_powers(n):
    r = ex.alpha(1, U(1) ** n, cfg=FAST)
    assert abs(r.alpha1) <= 1e-8


def test_alpha1_k2_word():
    Q = parse_poly("U1 Z1 U1* Z1 U1 Z1 U1* Z1")
    r = ex.alpha(1, Q, ZPM)
    assert r.alpha1 == pytest.approx(-1.0, abs=1e-9)
    assert r.quadrature_error < 1e-6
    assert abs(r.alpha1.imag) <= 1e-12


def test_alpha1_selfadjoint_input_is_real():
    Q = parse_poly("U1 Z1 U1* Z1 + U1 Z1 U1* Z1 U1 Z1 U1* Z1")
    r = ex.alpha(1, Q, ZPM, FAST)
    assert r.alpha0.imag == 0
    assert abs(r.alpha1.imag) <= 1e-10


def test_alpha1_moment_spec():
    # E ts (U+U*)^4 = 6 exactly, so alpha_1 = 0
    r = ex.alpha(1, ex.FourierSpec.polynomial(4), cfg=FAST, P=U(1) + V(1))
    assert r.alpha0 == pytest.approx(6)
    assert abs(r.alpha1) <= 1e-8


def test_alpha_trig_spec():
    from scipy.special import j0

    f = ex.FourierSpec.atomic([(0.7, 0.5), (-0.7, 0.5)])
    assert f.is_selfadjoint()
    r = ex.alpha(1, f, cfg=FAST, P=U(1) + V(1))
    assert r.alpha0 == pytest.approx(j0(1.4), abs=1e-9)
    assert abs(r.alpha1) <= 1e-6
    with pytest.raises(ValueError):
        ex.alpha(0, f)


def test_fourier_spec_selfadjoint_rule():
    assert not ex.FourierSpec.atomic([(1.0, 1.0)]).is_selfadjoint()
    assert ex.FourierSpec.atomic([(1.0, 1j), (-1.0, -1j)]).is_selfadjoint()
    assert ex.FourierSpec.atomic([(0.0, 2.0)]).is_selfadjoint()


def test_integrand_decay():
    Q = parse_poly("U1 Z1 U1* Z1 U1 Z1 U1* Z1")
    g = np.array([4.0, 8.0, 12.0, 16.0])
    vals = np.abs(ex.alpha1_integrand(Q, np.full(4, 0.5), g, ZPM))
    for a, b, ga, gb in zip(vals, vals[1:], g, g[1:]):
        assert b <= a * math.exp(-(gb - ga) / 4) * 1.5
    vals1 = np.abs(ex.alpha1_integrand(Q, g, np.full(4, 0.5), ZPM))
    for a, b, ga, gb in zip(vals1, vals1[1:], g, g[1:]):
        assert b <= a * math.exp(-(gb - ga) / 4) * 1.5


def test_remainder_bound_examples():
    P = U(1) + V(1)
    assert ex.remainder_bound(P, 1.0, 1.0, 0) == 4096
    base = ex.remainder_bound(P, 1.0, 1.0, 1)
    assert ex.remainder_bound(P, 1.0, 2.0, 1) == pytest.approx(base * 2 ** (2 * 10))
    assert ex.remainder_bound(P, 2.0, 1.0, 1) >= base
    assert ex.remainder_bound(P, 1.0, 1.5, 1) >= base
    assert ex.remainder_bound(P, 1.0, 1.0, 1, C=2.0) >= base
    with pytest.raises(ValueError):
        ex.remainder_bound(P, 1.0, 1.0, -1)


def test_coefficient_bound_positive():
    P = U(1) + V(1)
    assert ex.coefficient_bound(P, 1.0, 1.0, 0) == 4
    assert ex.coefficient_bound(P, 1.0, 1.0, 1) >= abs(ex.alpha(1, ex.FourierSpec.polynomial(4),
                                                               cfg=FAST, P=P).alpha1)


def test_continuity_check():
    Q = parse_poly("U1 Z1 U1* Z1 U1 Z1 U1* Z1")
    Z0 = {"Z1": np.diag([1.0, -1.0, 0.5]).astype(complex)}
    rep = ex.coefficient_continuity_check(Q, Z0, 1e-3, seed=1, cfg=FAST)
    assert rep["ratio"] == pytest.approx(2.0, rel=0.3)
    zero = ex.coefficient_continuity_check(Q, Z0, 0.0, seed=1, cfg=FAST)
    assert zero["delta_eps"] == 0
    unused = dict(Z0, Z2=np.diag([2.0, 0.0, 1.0]).astype(complex))
    rep2 = ex.coefficient_continuity_check(Q, unused, 1e-3, seed=1, cfg=FAST, letter="Z2")
    assert rep2["delta_eps"] == 0


def test_weighted_fit_recovers_line():
    Ns = [8, 16, 32, 64]
    y = [1.5 - 2.0 / N ** 2 for N in Ns]
    a, ea, b, eb = ex.weighted_fit(Ns, y, [1e-3] * 4)
    assert a == pytest.approx(1.5)
    assert b == pytest.approx(-2.0)
    assert ex.loglog_slope(Ns, [N ** -4.0 for N in Ns]) == pytest.approx(-4.0)


def test_expansion_fit_report_schema():
    rep = ex.expansion_fit(U(1) + V(1), ex.FourierSpec.polynomial(2), None, [4, 8, 16, 32], 200,
                           seed=1, cfg=FAST)
    assert abs(rep.intercept - 2.0) < 5 * rep.intercept_err + 1e-9
    assert rep.alpha0 == pytest.approx(2.0)
    assert {"N", "samples", "mean", "stderr"} <= set(rep.rows[0])
    with pytest.raises(ValueError):
        ex.expansion_fit(U(1), None, None, [4, 8], 10)


words8 = st.lists(st.sampled_from(["U", "U*", "Z"]), min_size=2, max_size=8).filter(
    lambda w: w.count("U") == w.count("U*") and w.count("U") > 0)


@given(words8)
def test_alpha0_matches_weingarten_constant(tokens):
    Zm = np.diag([1.0, 2.0, -0.5]).astype(complex)
    Q = parse_poly(" ".join("U1*" if t == "U*" else "U1" if t == "U" else "Z1" for t in tokens))
    a0 = ex.alpha(0, Q, {"Z1": Zm}).alpha0
    expr = wg.exact_word_expectation(" ".join(tokens), {"Z": Zm})
    ref = complex(wg.series_coefficients(expr, 0)[0])
    assert abs(a0 - ref) < 1e-9
