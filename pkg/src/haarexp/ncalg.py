"""
Noncommutative polynomials in unitary letters, matrix letters and
exponential atoms, together with the derivations used by the expansion.

Words are plain tuples of factors.  A factor is either a :class:`Letter`
or an :class:`ExpAtom`.  An :class:`NCPoly` maps words to complex
coefficients and never stores a zero coefficient.  A :class:`TensorPoly`
maps pairs of words ``(left, right)`` to coefficients and stands for
``sum c * left (x) right``.

Letters may carry an index-set ``label`` (a tuple of integers).  Plain
polynomials use the empty label.  Labelled letters appear once the
expansion operators substitute the unitary variables by families indexed
by the sets built in :mod:`haarexp.indexsets`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, Mapping, Optional, Tuple

__all__ = [
    "Letter",
    "ExpAtom",
    "NCPoly",
    "TensorPoly",
    "U",
    "V",
    "Z",
    "Y",
    "word_degree",
    "word_adjoint",
    "mul",
    "adjoint",
    "norm_a",
    "delta",
    "cyclic",
    "sharp",
    "sharp_tilde",
    "delta_alpha",
    "cyclic_alpha",
    "exp_atom",
    "reduce_unitary",
]

_KIND_ORDER = {"U": 0, "V": 1, "Z": 2, "Y": 3}
_ADJOINT_KIND = {"U": "V", "V": "U", "Z": "Y", "Y": "Z"}


@dataclass(frozen=True)
class Letter:
    """A letter ``U_i``, ``V_i = U_i*``, ``Z_j`` or ``Y_j = Z_j*``."""

    kind: str
    index: int
    label: Tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in _KIND_ORDER:
            raise ValueError(f"unknown letter kind {self.kind!r}")
        if int(self.index) < 1:
            raise ValueError("letter indices start at 1")

    @property
    def is_unitary(self) -> bool:
        return self.kind in ("U", "V")

    def adjoint(self) -> "Letter":
        return Letter(_ADJOINT_KIND[self.kind], self.index, self.label)

    def relabel(self, label: Tuple[int, ...]) -> "Letter":
        return Letter(self.kind, self.index, tuple(label))

    def sort_key(self):
        return (0, _KIND_ORDER[self.kind], self.index, self.label)

    def __str__(self):
        base = {"U": "U{}", "V": "U{}*", "Z": "Z{}", "Y": "Z{}*"}[self.kind]
        text = base.format(self.index)
        if self.label:
            text += "[" + ",".join(str(x) for x in self.label) + "]"
        return text

    __repr__ = __str__


@dataclass(frozen=True)
class ExpAtom:
    """The factor ``exp(scalar * poly)``.

    With ``scalar = i*y`` and a self-adjoint ``poly`` this is ``e^{i y P}``.
    The atom is opaque for the algebra: it is never expanded symbolically.
    """

    poly: "NCPoly"
    scalar: complex = 1.0

    def adjoint(self) -> "ExpAtom":
        # (e^{lam R})^* = e^{conj(lam) R^*}
        return ExpAtom(self.poly.adjoint(), complex(self.scalar).conjugate())

    def scaled(self, factor: complex) -> "ExpAtom":
        return ExpAtom(self.poly, complex(self.scalar) * factor)

    def map_letters(self, fn) -> "ExpAtom":
        return ExpAtom(self.poly.map_letters(fn), self.scalar)

    def sort_key(self):
        s = complex(self.scalar)
        return (1, s.real, s.imag, self.poly.sort_key())

    def __str__(self):
        return f"exp(({_fmt_coef(complex(self.scalar))})*({self.poly}))"

    __repr__ = __str__


def exp_atom(poly: "NCPoly", scalar: complex = 1.0) -> "NCPoly":
    """The one-term polynomial ``exp(scalar * poly)`` (``1`` if scalar is 0)."""
    if complex(scalar) == 0 or poly.is_zero():
        return NCPoly.one()
    return NCPoly({(ExpAtom(poly, complex(scalar)),): 1.0})


def word_degree(word) -> int:
    """Number of letter factors; exponential atoms count for nothing."""
    return sum(1 for f in word if isinstance(f, Letter))


def word_adjoint(word) -> tuple:
    return tuple(f.adjoint() for f in reversed(word))


def _word_key(word):
    return (len(word), tuple(f.sort_key() for f in word))


def _fmt_real(x: float) -> str:
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


def _fmt_coef(c: complex) -> str:
    re, im = c.real, c.imag
    sign = "-" if (im < 0 or (im == 0 and str(im).startswith("-"))) else "+"
    return f"{_fmt_real(re)}{sign}{_fmt_real(abs(im))}i"


class NCPoly:
    """A finite complex combination of words.

    Instances are treated as immutable.  Arithmetic returns new objects
    whose term map never contains a zero coefficient.
    """

    __slots__ = ("terms", "_hash")

    def __init__(self, terms: Optional[Mapping[tuple, complex]] = None):
        clean: Dict[tuple, complex] = {}
        if terms:
            for w, c in terms.items():
                c = complex(c)
                if c != 0:
                    clean[tuple(w)] = c
        self.terms = clean
        self._hash = None

    # -- constructors -------------------------------------------------
    @classmethod
    def zero(cls) -> "NCPoly":
        return cls()

    @classmethod
    def one(cls) -> "NCPoly":
        return cls({(): 1.0})

    @classmethod
    def scalar(cls, c: complex) -> "NCPoly":
        return cls({(): c})

    @classmethod
    def word(cls, *factors, coef: complex = 1.0) -> "NCPoly":
        return cls({tuple(factors): coef})

    @classmethod
    def _from_clean(cls, terms: Dict[tuple, complex]) -> "NCPoly":
        p = cls.__new__(cls)
        p.terms = {w: c for w, c in terms.items() if c != 0}
        p._hash = None
        return p

    # -- inspection ---------------------------------------------------
    def is_zero(self) -> bool:
        return not self.terms

    def items(self):
        return sorted(self.terms.items(), key=lambda wc: _word_key(wc[0]))

    def degree(self) -> int:
        return max((word_degree(w) for w in self.terms), default=0)

    def letters(self) -> set:
        out = set()
        for w in self.terms:
            for f in w:
                if isinstance(f, Letter):
                    out.add(f)
                else:
                    out |= f.poly.letters()
        return out

    def has_exp(self) -> bool:
        return any(isinstance(f, ExpAtom) for w in self.terms for f in w)

    def sort_key(self):
        return tuple((_word_key(w), c.real, c.imag) for w, c in self.items())

    # -- algebra --------------------------------------------------------
    def __add__(self, other) -> "NCPoly":
        other = _as_poly(other)
        out = dict(self.terms)
        for w, c in other.terms.items():
            out[w] = out.get(w, 0) + c
        return NCPoly._from_clean(out)

    __radd__ = __add__

    def __neg__(self) -> "NCPoly":
        return NCPoly._from_clean({w: -c for w, c in self.terms.items()})

    def __sub__(self, other) -> "NCPoly":
        return self + (-_as_poly(other))

    def __rsub__(self, other) -> "NCPoly":
        return _as_poly(other) - self

    def __mul__(self, other) -> "NCPoly":
        if isinstance(other, (int, float, complex)):
            return NCPoly._from_clean({w: c * other for w, c in self.terms.items()})
        other = _as_poly(other)
        out: Dict[tuple, complex] = {}
        for w1, c1 in self.terms.items():
            for w2, c2 in other.terms.items():
                w = w1 + w2
                out[w] = out.get(w, 0) + c1 * c2
        return NCPoly._from_clean(out)

    def __rmul__(self, other) -> "NCPoly":
        if isinstance(other, (int, float, complex)):
            return self * other
        return _as_poly(other) * self

    def __pow__(self, n: int) -> "NCPoly":
        if n < 0:
            raise ValueError("negative powers are not polynomials")
        out = NCPoly.one()
        for _ in range(n):
            out = out * self
        return out

    def adjoint(self) -> "NCPoly":
        return NCPoly._from_clean(
            {word_adjoint(w): c.conjugate() for w, c in self.terms.items()}
        )

    def map_letters(self, fn) -> "NCPoly":
        """Apply ``fn`` to every letter, including letters inside atoms."""
        out: Dict[tuple, complex] = {}
        for w, c in self.terms.items():
            nw = tuple(fn(f) if isinstance(f, Letter) else f.map_letters(fn) for f in w)
            out[nw] = out.get(nw, 0) + c
        return NCPoly._from_clean(out)

    def is_selfadjoint(self, tol: float = 0.0) -> bool:
        diff = self - self.adjoint()
        return all(abs(c) <= tol for c in diff.terms.values())

    # -- dunder plumbing ------------------------------------------------
    def __eq__(self, other) -> bool:
        if isinstance(other, (int, float, complex)):
            other = NCPoly.scalar(other)
        if not isinstance(other, NCPoly):
            return NotImplemented
        return self.terms == other.terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self.terms.items()))
        return self._hash

    def __len__(self):
        return len(self.terms)

    def __iter__(self) -> Iterator:
        return iter(self.items())

    def __str__(self):
        if not self.terms:
            return "0"
        parts = []
        for w, c in self.items():
            factors = [str(f) for f in w]
            if c != 1 or not factors:
                factors.insert(0, "(" + _fmt_coef(c) + ")")
            parts.append(" * ".join(factors))
        return " + ".join(parts)

    def __repr__(self):
        return f"NCPoly({self})"


def _as_poly(x) -> NCPoly:
    if isinstance(x, NCPoly):
        return x
    if isinstance(x, (int, float, complex)):
        return NCPoly.scalar(x)
    if isinstance(x, (Letter, ExpAtom)):
        return NCPoly({(x,): 1.0})
    raise TypeError(f"cannot convert {type(x).__name__} to NCPoly")


def U(i: int, label=()) -> NCPoly:
    return NCPoly({(Letter("U", i, tuple(label)),): 1.0})


def V(i: int, label=()) -> NCPoly:
    return NCPoly({(Letter("V", i, tuple(label)),): 1.0})


def Z(j: int) -> NCPoly:
    return NCPoly({(Letter("Z", j),): 1.0})


def Y(j: int) -> NCPoly:
    return NCPoly({(Letter("Y", j),): 1.0})


def mul(P: NCPoly, Q: NCPoly) -> NCPoly:
    """Free-algebra product."""
    return _as_poly(P) * _as_poly(Q)


def adjoint(P: NCPoly) -> NCPoly:
    return _as_poly(P).adjoint()


def norm_a(P: NCPoly, A: float) -> float:
    """``sum |c_M| A^deg(M)`` over the monomials of ``P``."""
    if A <= 0:
        raise ValueError("A must be positive")
    return float(sum(abs(c) * A ** word_degree(w) for w, c in _as_poly(P).terms.items()))


def reduce_unitary(P: NCPoly) -> NCPoly:
    """Cancel adjacent ``U_i V_i`` and ``V_i U_i`` pairs (same label).

    This is only valid once the letters are read as unitaries; the
    derivations below never call it.
    """
    out: Dict[tuple, complex] = {}
    for w, c in P.terms.items():
        stack = []
        for f in w:
            if (
                stack
                and isinstance(f, Letter)
                and f.is_unitary
                and isinstance(stack[-1], Letter)
                and stack[-1] == f.adjoint()
            ):
                stack.pop()
            else:
                stack.append(f)
        key = tuple(stack)
        out[key] = out.get(key, 0) + c
    return NCPoly._from_clean(out)


class TensorPoly:
    """Finite combination of simple tensors ``left (x) right``."""

    __slots__ = ("terms",)

    def __init__(self, terms: Optional[Mapping[Tuple[tuple, tuple], complex]] = None):
        clean: Dict[Tuple[tuple, tuple], complex] = {}
        if terms:
            for (a, b), c in terms.items():
                c = complex(c)
                if c != 0:
                    clean[(tuple(a), tuple(b))] = c
        self.terms = clean

    @classmethod
    def _from_acc(cls, acc) -> "TensorPoly":
        t = cls.__new__(cls)
        t.terms = {k: c for k, c in acc.items() if c != 0}
        return t

    @classmethod
    def simple(cls, left: NCPoly, right: NCPoly) -> "TensorPoly":
        acc: Dict = {}
        for a, ca in _as_poly(left).terms.items():
            for b, cb in _as_poly(right).terms.items():
                acc[(a, b)] = acc.get((a, b), 0) + ca * cb
        return cls._from_acc(acc)

    def is_zero(self) -> bool:
        return not self.terms

    def items(self):
        return sorted(self.terms.items(), key=lambda kv: (_word_key(kv[0][0]), _word_key(kv[0][1])))

    def __add__(self, other: "TensorPoly") -> "TensorPoly":
        acc = dict(self.terms)
        for k, c in other.terms.items():
            acc[k] = acc.get(k, 0) + c
        return TensorPoly._from_acc(acc)

    def __neg__(self):
        return TensorPoly._from_acc({k: -c for k, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, s):
        if not isinstance(s, (int, float, complex)):
            return NotImplemented
        return TensorPoly._from_acc({k: c * s for k, c in self.terms.items()})

    __rmul__ = __mul__

    def left_mul(self, P: NCPoly) -> "TensorPoly":
        """``(P (x) 1) . self``."""
        acc: Dict = {}
        for w, cw in _as_poly(P).terms.items():
            for (a, b), c in self.terms.items():
                k = (w + a, b)
                acc[k] = acc.get(k, 0) + cw * c
        return TensorPoly._from_acc(acc)

    def right_mul(self, P: NCPoly) -> "TensorPoly":
        """``self . (1 (x) P)``."""
        acc: Dict = {}
        for w, cw in _as_poly(P).terms.items():
            for (a, b), c in self.terms.items():
                k = (a, b + w)
                acc[k] = acc.get(k, 0) + cw * c
        return TensorPoly._from_acc(acc)

    def m(self) -> NCPoly:
        """The flip-multiplication ``A (x) B -> B A``."""
        acc: Dict = {}
        for (a, b), c in self.terms.items():
            acc[b + a] = acc.get(b + a, 0) + c
        return NCPoly._from_clean(acc)

    def legs(self) -> Iterator[Tuple[complex, tuple, tuple]]:
        for (a, b), c in self.items():
            yield c, a, b

    def __eq__(self, other):
        if not isinstance(other, TensorPoly):
            return NotImplemented
        return self.terms == other.terms

    def __len__(self):
        return len(self.terms)

    def __str__(self):
        if not self.terms:
            return "0"
        return " + ".join(
            f"({_fmt_coef(c)})*[{_w(a)} (x) {_w(b)}]" for (a, b), c in self.items()
        )

    __repr__ = __str__


def _w(word) -> str:
    return " * ".join(str(f) for f in word) if word else "1"


def _matches(f: Letter, i: int, label) -> bool:
    return f.index == i and (label is None or f.label == tuple(label))


def delta(i: int, P: NCPoly, d: Optional[int] = None, label=None) -> TensorPoly:
    """Noncommutative derivative with respect to ``U_i``.

    ``delta_i U_i = U_i (x) 1`` and ``delta_i V_i = -1 (x) V_i``.  When
    ``label`` is given only letters carrying that label are differentiated;
    otherwise every ``U_i``/``V_i`` letter is, whatever its label.
    Polynomials containing exponential atoms go through :func:`delta_alpha`.
    """
    return _delta_impl(i, _as_poly(P), d, label, None)


def delta_alpha(i: int, alpha: float, P: NCPoly, d: Optional[int] = None, label=None) -> TensorPoly:
    """Derivative with the Duhamel split ``alpha`` on exponential atoms.

    ``delta_{alpha,i} e^{R} = (e^{alpha R} (x) 1) delta_i R (1 (x) e^{(1-alpha) R})``
    and the Leibniz rule elsewhere.  On polynomials without atoms this is
    :func:`delta` for every ``alpha``.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    return _delta_impl(i, _as_poly(P), d, label, float(alpha))


def _delta_impl(i, P, d, label, alpha) -> TensorPoly:
    if i < 1 or (d is not None and i > d):
        raise ValueError(f"unitary index {i} out of range")
    acc: Dict = {}
    for w, c in P.terms.items():
        for k, f in enumerate(w):
            if isinstance(f, Letter):
                if f.kind == "U" and _matches(f, i, label):
                    key = (w[: k + 1], w[k + 1:])
                    acc[key] = acc.get(key, 0) + c
                elif f.kind == "V" and _matches(f, i, label):
                    key = (w[:k], w[k:])
                    acc[key] = acc.get(key, 0) - c
            else:
                if alpha is None:
                    if any(_matches(g, i, label) and g.is_unitary for g in f.poly.letters()):
                        raise ValueError("exponential atoms require delta_alpha")
                    continue
                inner = _delta_impl(i, f.poly, d, label, alpha)
                if inner.is_zero():
                    continue
                left_exp = _exp_factor(f, alpha)
                right_exp = _exp_factor(f, 1.0 - alpha)
                lam = complex(f.scalar)
                for (a, b), ci in inner.terms.items():
                    key = (w[:k] + left_exp + a, b + right_exp + w[k + 1:])
                    acc[key] = acc.get(key, 0) + c * lam * ci
    return TensorPoly._from_acc(acc)


def _exp_factor(atom: ExpAtom, frac: float) -> tuple:
    if frac == 0.0:
        return ()
    return (atom.scaled(frac),)


def cyclic(i: int, P: NCPoly, d: Optional[int] = None, label=None) -> NCPoly:
    """Cyclic derivative ``D_i = m o delta_i`` with ``m(A (x) B) = B A``."""
    return delta(i, P, d, label).m()


def cyclic_alpha(i: int, alpha: float, P: NCPoly, d: Optional[int] = None, label=None) -> NCPoly:
    return delta_alpha(i, alpha, P, d, label).m()


def sharp(T: TensorPoly, C: NCPoly) -> NCPoly:
    """``A (x) B # C = A C B``."""
    acc: Dict = {}
    for (a, b), c in T.terms.items():
        for w, cw in _as_poly(C).terms.items():
            k = a + w + b
            acc[k] = acc.get(k, 0) + c * cw
    return NCPoly._from_clean(acc)


def sharp_tilde(T: TensorPoly, C: NCPoly) -> NCPoly:
    """``A (x) B ~# C = B C A``."""
    acc: Dict = {}
    for (a, b), c in T.terms.items():
        for w, cw in _as_poly(C).terms.items():
            k = b + w + a
            acc[k] = acc.get(k, 0) + c * cw
    return NCPoly._from_clean(acc)


def sum_polys(polys: Iterable[NCPoly]) -> NCPoly:
    acc: Dict = {}
    for p in polys:
        for w, c in p.terms.items():
            acc[w] = acc.get(w, 0) + c
    return NCPoly._from_clean(acc)
