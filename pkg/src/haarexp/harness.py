"""
Experiment runner: polynomial parser, JSON configs, CSV output and the
experiments behind the command line.

Polynomial syntax
-----------------
Terms are separated by ``+`` and ``-``; factors by ``*`` or plain
juxtaposition.  Atoms are ``U<k>``, ``Z<k>`` (``k >= 1``, optionally with
an index-set label ``U1[2,1]``), numbers (``2``, ``0.5``, ``3i``),
complex literals ``(a+bi)`` and parenthesised sub-expressions.  A star
written directly after an atom or a closing parenthesis is an adjoint
unless the next character starts another operand, so ``U1*Z1`` is
``U_1 Z_1`` while ``U1* Z1`` and ``U1**Z1`` are ``U_1^* Z_1``.  ``^n``
raises a factor to a non-negative integer power.

``str(P)`` of a polynomial is accepted back by :func:`parse_poly`.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import re
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import jsonschema
import numpy as np

from . import expansion, fubm, indexsets, rmt, weingarten
from .expansion import FourierSpec, QuadratureConfig
from .ncalg import Letter, NCPoly, norm_a, reduce_unitary

__all__ = [
    "ParseError",
    "parse_poly",
    "format_poly",
    "parse_fspec",
    "format_fspec",
    "ExperimentConfig",
    "make_matrices",
    "write_csv",
    "format_number",
    "reference_support",
    "run_expand",
    "run_expansion_fit",
    "run_covcheck",
    "run_fubm_density",
    "run_spectrum_confinement",
    "run_tensor_probe",
    "run_conjugation_freeness",
    "run_selftest",
    "run_experiment",
    "tensor_trace_lemma",
    "EXPERIMENTS",
]


# ---------------------------------------------------------------------------
# parser


class ParseError(ValueError):
    """Syntax error at character ``pos`` of the source text."""

    def __init__(self, message: str, text: str, pos: int):
        self.pos = pos
        self.text = text
        super().__init__(f"{message} at position {pos}: {text[:pos]}<HERE>{text[pos:]}")


_NUM = r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_COMPLEX_RE = re.compile(
    rf"^\s*(?P<re>[+-]?\s*{_NUM})?\s*(?:(?P<sign>[+-])\s*(?P<im>{_NUM})?\s*i)?\s*$"
)
_IMAG_ONLY_RE = re.compile(rf"^\s*(?P<sign>[+-])?\s*(?P<im>{_NUM})?\s*i\s*$")


def _complex_literal(body: str) -> Optional[complex]:
    body = body.strip()
    if not body:
        return None
    m = _IMAG_ONLY_RE.match(body)
    if m:
        mag = float(m.group("im")) if m.group("im") else 1.0
        return complex(0.0, -mag if m.group("sign") == "-" else mag)
    m = _COMPLEX_RE.match(body)
    if not m or (m.group("re") is None and m.group("sign") is None):
        return None
    re_part = float(m.group("re").replace(" ", "")) if m.group("re") else 0.0
    im_part = 0.0
    if m.group("sign"):
        im_part = float(m.group("im")) if m.group("im") else 1.0
        if m.group("sign") == "-":
            im_part = -im_part
    return complex(re_part, im_part)


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    # helpers -------------------------------------------------------------
    def error(self, msg: str, pos: Optional[int] = None):
        raise ParseError(msg, self.text, self.pos if pos is None else pos)

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def starts_operand(self, pos: int) -> bool:
        if pos >= len(self.text):
            return False
        ch = self.text[pos]
        return ch in "UZ(." or ch.isdigit() or ch == "i"

    # grammar -------------------------------------------------------------
    def parse(self) -> NCPoly:
        self.skip_ws()
        if not self.peek():
            self.error("empty expression")
        out = self.expr()
        self.skip_ws()
        if self.pos != len(self.text):
            self.error(f"unexpected character {self.peek()!r}")
        return out

    def expr(self) -> NCPoly:
        self.skip_ws()
        sign = 1.0
        if self.peek() in "+-":
            sign = -1.0 if self.peek() == "-" else 1.0
            self.pos += 1
        acc = sign * self.term()
        while True:
            self.skip_ws()
            ch = self.peek()
            if ch in ("+", "-"):
                self.pos += 1
                t = self.term()
                acc = acc + t if ch == "+" else acc - t
            else:
                return acc

    def term(self) -> NCPoly:
        self.skip_ws()
        if not self.starts_operand(self.pos):
            self.error("expected an operand")
        acc = self.factor()
        while True:
            save = self.pos
            self.skip_ws()
            if self.peek() == "*":
                self.pos += 1
                self.skip_ws()
                if not self.starts_operand(self.pos):
                    self.error("expected an operand after '*'")
                acc = acc * self.factor()
            elif self.starts_operand(self.pos):
                acc = acc * self.factor()
            else:
                self.pos = save
                return acc

    def postfix(self, base: NCPoly) -> NCPoly:
        # attached adjoint stars, then an optional power
        while self.peek() == "*" and not self.starts_operand(self.pos + 1):
            self.pos += 1
            base = base.adjoint()
        if self.peek() == "^":
            self.pos += 1
            m = re.compile(r"\d+").match(self.text, self.pos)
            if not m:
                self.error("expected a non-negative integer exponent")
            self.pos = m.end()
            base = base ** int(m.group(0))
            while self.peek() == "*" and not self.starts_operand(self.pos + 1):
                self.pos += 1
                base = base.adjoint()
        return base

    def factor(self) -> NCPoly:
        self.skip_ws()
        ch = self.peek()
        start = self.pos
        if ch in "UZ":
            self.pos += 1
            m = re.compile(r"\d+").match(self.text, self.pos)
            if not m:
                self.error(f"expected an index after {ch!r}")
            k = int(m.group(0))
            if k < 1:
                self.error("indices start at 1", m.start())
            self.pos = m.end()
            label = ()
            if self.peek() == "[":
                close = self.text.find("]", self.pos)
                if close < 0:
                    self.error("unterminated label")
                body = self.text[self.pos + 1:close]
                try:
                    label = tuple(int(x) for x in body.split(",")) if body.strip() else ()
                except ValueError:
                    self.error("labels are comma-separated integers")
                self.pos = close + 1
            let = Letter("U" if ch == "U" else "Z", k, label)
            return self.postfix(NCPoly({(let,): 1.0}))
        if ch == "(":
            depth = 0
            j = self.pos
            while j < len(self.text):
                if self.text[j] == "(":
                    depth += 1
                elif self.text[j] == ")":
                    depth -= 1
                    if depth == 0:
                        break
                j += 1
            if j >= len(self.text):
                self.error("unbalanced parenthesis")
            lit = _complex_literal(self.text[self.pos + 1:j])
            if lit is not None:
                self.pos = j + 1
                return self.postfix(NCPoly.scalar(lit))
            self.pos += 1
            inner = self.expr()
            self.skip_ws()
            if self.peek() != ")":
                self.error("expected ')'")
            self.pos += 1
            return self.postfix(inner)
        m = re.compile(_NUM).match(self.text, self.pos)
        if m:
            self.pos = m.end()
            val = complex(float(m.group(0)))
            if self.peek() == "i":
                self.pos += 1
                val = 1j * val.real
            return self.postfix(NCPoly.scalar(val))
        if ch == "i":
            self.pos += 1
            return self.postfix(NCPoly.scalar(1j))
        self.error("expected an operand", start)


def parse_poly(text: str) -> NCPoly:
    """Parse the surface syntax described in the module docstring."""
    if not isinstance(text, str):
        raise TypeError("expected a string")
    return _Parser(text).parse()


def format_poly(P: NCPoly) -> str:
    """Canonical text of ``P``; ``parse_poly(format_poly(P)) == P``."""
    if P.has_exp():
        raise ValueError("exponential atoms have no surface syntax")
    return str(P)


# ---------------------------------------------------------------------------
# function specs


def parse_fspec(text: Optional[str]) -> Optional[FourierSpec]:
    """``"moment:4"`` or ``"trig:(y,c);(y,c)"`` (``c`` like ``0.5`` or ``(1+2i)``)."""
    if text is None or text == "" or text == "identity":
        return None
    kind, _, body = text.partition(":")
    kind = kind.strip().lower()
    if kind == "moment":
        try:
            return FourierSpec.polynomial(int(body))
        except ValueError as exc:
            raise ValueError(f"bad moment spec {text!r}") from exc
    if kind == "trig":
        atoms = []
        for part in body.split(";"):
            part = part.strip()
            if not part:
                continue
            if not (part.startswith("(") and part.endswith(")")):
                raise ValueError(f"trig atoms look like (y,c), got {part!r}")
            y, _, c = part[1:-1].partition(",")
            cval = _complex_literal(c.strip().strip("()"))
            if cval is None:
                raise ValueError(f"bad coefficient {c!r}")
            atoms.append((float(y), cval))
        if not atoms:
            raise ValueError("empty trig spec")
        return FourierSpec.atomic(atoms)
    raise ValueError(f"unknown function spec {text!r}")


def format_fspec(f: Optional[FourierSpec]) -> str:
    if f is None:
        return "identity"
    if f.moment is not None:
        return f"moment:{f.moment}"
    from .ncalg import _fmt_coef

    return "trig:" + ";".join(f"({format_number(y)},({_fmt_coef(c)}))" for y, c in f.atoms)


# ---------------------------------------------------------------------------
# configs

SCHEMA_VERSION = "haarexp.experiment/1"

EXPERIMENTS = (
    "expand",
    "fit",
    "covcheck",
    "fubm-density",
    "confine",
    "tensor-probe",
    "conjugate-freeness",
    "selftest",
)

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["schema", "kind"],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "kind": {"enum": list(EXPERIMENTS)},
        "d": {"type": ["integer", "null"], "minimum": 0},
        "q": {"type": ["integer", "null"], "minimum": 0},
        "polys": {"type": "array", "items": {"type": "string"}},
        "f": {"type": ["string", "null"]},
        "Ns": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "Ms": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "samples": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "quadrature": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "nodes": {"type": "integer", "minimum": 4},
                "scale": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "matrices": {"type": "object"},
        "params": {"type": "object"},
        "out": {"type": ["string", "null"]},
    },
}


@dataclass
class ExperimentConfig:
    """Declarative description of one experiment."""

    kind: str
    polys: List[str] = field(default_factory=list)
    f: Optional[str] = None
    Ns: List[int] = field(default_factory=list)
    Ms: List[int] = field(default_factory=list)
    samples: int = 1000
    seed: int = 0
    d: Optional[int] = None
    q: Optional[int] = None
    quadrature: Dict[str, Any] = field(default_factory=dict)
    matrices: Dict[str, Any] = field(default_factory=dict)
    params: Dict[str, Any] = field(default_factory=dict)
    out: Optional[str] = None
    schema: str = SCHEMA_VERSION

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ExperimentConfig":
        data = dict(data)
        data.setdefault("schema", SCHEMA_VERSION)
        jsonschema.validate(data, CONFIG_SCHEMA)
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path: str) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())

    def validate(self) -> None:
        jsonschema.validate(self.to_dict(), CONFIG_SCHEMA)
        for p in self.polys:
            parse_poly(p)
        parse_fspec(self.f)
        for name, spec in self.matrices.items():
            if not re.fullmatch(r"Z[1-9]\d*", name):
                raise ValueError(f"matrix names look like Z1, got {name!r}")
            _check_matrix_spec(spec)

    def poly(self, k: int = 0) -> NCPoly:
        if k >= len(self.polys):
            raise ValueError(f"experiment needs at least {k + 1} polynomial(s)")
        return parse_poly(self.polys[k])

    def quad(self) -> QuadratureConfig:
        return QuadratureConfig(nodes=int(self.quadrature.get("nodes", 32)),
                                scale=float(self.quadrature.get("scale", 4.0)))


def _check_matrix_spec(spec):
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ValueError("a matrix spec is a one-key object: diag, values or hermitian")
    key, val = next(iter(spec.items()))
    if key not in ("diag", "values", "hermitian"):
        raise ValueError(f"unknown matrix spec {key!r}")


def _entry(v) -> complex:
    """A matrix entry: a number or a literal such as ``"(1+2i)"``."""
    if not isinstance(v, str):
        return complex(v)
    c = _complex_literal(v.strip().strip("()"))
    if c is None:
        raise ValueError(f"bad matrix entry {v!r}")
    return c


def make_matrices(spec: Mapping[str, Any], N: int) -> Dict[int, np.ndarray]:
    """Matrices of size ``N`` from a config spec.

    * ``{"diag": [v1, ..., vp]}``: the pattern tiled along the diagonal
      (``p`` must divide ``N``), so normalised traces do not depend on ``N``;
    * ``{"values": [[...], ...]}``: an explicit matrix (its size must be ``N``);
    * ``{"hermitian": {"seed": s}}``: a random Hermitian matrix of norm 1.
    """
    out = {}
    for name, sp in sorted(spec.items()):
        _check_matrix_spec(sp)
        j = int(name[1:])
        key, val = next(iter(sp.items()))
        if key == "diag":
            pat = np.asarray([_entry(v) for v in val], dtype=complex)
            if N % pat.size:
                raise ValueError(f"diagonal pattern of length {pat.size} does not divide N={N}")
            out[j] = np.diag(np.tile(pat, N // pat.size))
        elif key == "values":
            m = np.asarray(val, dtype=complex)
            if m.shape != (N, N):
                raise ValueError(f"matrix {name} has shape {m.shape}, expected {(N, N)}")
            out[j] = m
        else:
            g = np.random.default_rng(int(val.get("seed", 0)))
            A = g.standard_normal((N, N)) + 1j * g.standard_normal((N, N))
            H = (A + A.conj().T) / 2
            out[j] = H / np.linalg.norm(H, 2)
    return out


# ---------------------------------------------------------------------------
# CSV


def format_number(x) -> str:
    """Shortest round-trip text of a float (``repr``); ints stay ints."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _flatten(row: Mapping[str, Any]) -> Dict[str, Any]:
    out = {}
    for k, v in row.items():
        if isinstance(v, (complex, np.complexfloating)):
            out[f"{k}_re"] = float(np.real(v))
            out[f"{k}_im"] = float(np.imag(v))
        else:
            out[k] = v
    return out


def csv_text(rows: Sequence[Mapping[str, Any]]) -> str:
    rows = [_flatten(r) for r in rows]
    header: List[str] = []
    for r in rows:
        for k in r:
            if k not in header:
                header.append(k)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([format_number(r[k]) if k in r else "" for k in header])
    return buf.getvalue()


def write_csv(path: str, rows: Sequence[Mapping[str, Any]]) -> str:
    text = csv_text(rows)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


def write_svg(path: str, xs, ys, errs=None, xlabel: str = "", ylabel: str = "") -> str:
    """Line plot of ``ys`` (with error bars) against ``xs`` (decorative)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.errorbar(xs, ys, yerr=errs, marker="o", capsize=3)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


# ---------------------------------------------------------------------------
# experiments


@dataclass
class Report:
    kind: str
    rows: List[Dict[str, Any]]
    summary: Dict[str, Any] = field(default_factory=dict)
    elapsed: float = 0.0


def _stream(cfg: ExperimentConfig, *keys) -> rmt.RngStream:
    return rmt.RngStream(cfg.seed, (EXPERIMENTS.index(cfg.kind),) + tuple(keys))


def _pattern_size(cfg: ExperimentConfig) -> int:
    """Smallest size at which every matrix spec can be built."""
    size = 1
    for sp in cfg.matrices.values():
        key, val = next(iter(sp.items()))
        n = len(val) if key in ("diag", "values") else 1
        size = size * n // math.gcd(size, n)
    return size


def _fit_matrices(cfg: ExperimentConfig, N: int) -> Dict[str, np.ndarray]:
    return {f"Z{j}": m for j, m in make_matrices(cfg.matrices, N).items()}


def run_expand(cfg: ExperimentConfig, threads: int = 1) -> Report:
    """Coefficients ``alpha_0`` and (optionally) ``alpha_1``."""
    P = cfg.poly()
    f = parse_fspec(cfg.f)
    order = int(cfg.params.get("order", 1))
    N = int(cfg.Ns[0]) if cfg.Ns else int(cfg.params.get("N", 8))
    mats = _fit_matrices(cfg, N)
    target = f if f is not None else P
    res = expansion.alpha(order, target, mats, cfg.quad(), P=P if f is not None else None)
    row = {"poly": format_poly(P), "f": format_fspec(f), "order": order, "N": N,
           "alpha0": res.alpha0, "alpha1": res.alpha1,
           "quadrature_error": res.quadrature_error, "series_error": res.series_error,
           "truncation_T": res.truncation_T}
    return Report("expand", [row], {"alpha0": res.alpha0, "alpha1": res.alpha1})


def run_expansion_fit(cfg: ExperimentConfig, threads: int = 1) -> Report:
    """Monte Carlo fit of ``E[ts f(P)]`` against ``a + b / N^2``."""
    P = cfg.poly()
    f = parse_fspec(cfg.f)
    Ns = cfg.Ns or [8, 16, 32, 64]
    samples = cfg.samples
    scale_samples = bool(cfg.params.get("scale_samples", False))
    fam = (lambda N: make_matrices(cfg.matrices, N)) if cfg.matrices else None

    def ns(N):
        if scale_samples:
            return max(int(cfg.params.get("min_samples", 200)), int(samples * (Ns[0] / N) ** 2))
        return samples

    rep = expansion.expansion_fit(P, f if f is not None else FourierSpec.polynomial(1), fam, Ns,
                                  ns, seed=cfg.seed, threads=threads,
                                  compute_alpha=bool(cfg.params.get("alpha", True)),
                                  cfg=cfg.quad())
    rows = [dict(r) for r in rep.rows if "N" in r]
    summary = {"intercept": rep.intercept, "intercept_err": rep.intercept_err,
               "slope": rep.slope, "slope_err": rep.slope_err,
               "residual_slope": rep.residual_slope}
    if rep.alpha0 is not None:
        summary["alpha0"] = rep.alpha0
        summary["alpha1"] = rep.alpha1
    for r in rows:
        r.update(summary)
    return Report("fit", rows, summary)


def run_covcheck(cfg: ExperimentConfig, threads: int = 1) -> Report:
    """Both sides of the covariance formula for each pair of polynomials."""
    if len(cfg.polys) < 2 or len(cfg.polys) % 2:
        raise ValueError("covcheck needs polynomials in pairs P, Q")
    pairs = [(parse_poly(cfg.polys[k]), parse_poly(cfg.polys[k + 1]))
             for k in range(0, len(cfg.polys), 2)]
    N = int(cfg.Ns[0]) if cfg.Ns else 32
    T = float(cfg.params.get("T", 1.0))
    mats = make_matrices(cfg.matrices, N)
    res = rmt.covariance_check_pairs(
        pairs, mats, N, T, cfg.samples, _stream(cfg), steps=cfg.params.get("steps"),
        nodes=int(cfg.params.get("nodes", 11)), rhs_samples=cfg.params.get("rhs_samples"),
        scheme=str(cfg.params.get("scheme", "euler-polar")), threads=threads)
    rows = []
    for (P, Q), (lhs, rhs) in zip(pairs, res):
        sig = math.hypot(lhs.stderr, rhs.stderr)
        rows.append({"P": format_poly(P), "Q": format_poly(Q), "N": N, "T": T,
                     "lhs": lhs.mean, "lhs_stderr": lhs.stderr,
                     "rhs": rhs.mean, "rhs_stderr": rhs.stderr,
                     "z": abs(lhs.mean - rhs.mean) / sig if sig > 0 else 0.0,
                     "z_max_component": lhs.zscore(0, rhs)})
    return Report("covcheck", rows, {"max_z": max(r["z_max_component"] for r in rows)})


def run_fubm_density(cfg: ExperimentConfig, threads: int = 1) -> Report:
    t = float(cfg.params.get("t", 5.0))
    M = int(cfg.params.get("grid", fubm.DEFAULT_GRID))
    tab = fubm.density_table(t, M)
    rows = [{"angle": float(s), "kappa": float(k), "G": float(g)}
            for s, k, g in zip(tab.grid, tab.values, tab.cumulative)]
    return Report("fubm-density", rows, {"t": t, "total": tab.total,
                                         "max_residual": tab.max_residual})


# -- spectrum confinement ---------------------------------------------------


def _modified_chebyshev(moments: np.ndarray, n: int):
    """Recurrence coefficients from modified moments of monic Chebyshev polynomials.

    ``moments[l] = tau(p_l(x))`` with ``p_0 = 1``, ``p_1 = x``,
    ``p_2 = x p_1 - p_0 / 2`` and ``p_{l+1} = x p_l - p_{l-1} / 4``.
    Stops early when the measure has fewer than ``n`` support points.
    """
    a = np.zeros(2 * n)
    b = np.full(2 * n, 0.25)
    b[0] = 0.0
    b[1] = 0.5
    sig_prev = np.zeros(2 * n + 1)
    sig = np.array(moments[: 2 * n], dtype=float)
    alpha = [a[0] + sig[1] / sig[0]]
    beta = [sig[0]]
    sigs = [sig_prev, sig]
    for k in range(1, n):
        s_km1 = sigs[-1]
        s_km2 = sigs[-2]
        s_k = np.zeros(2 * n)
        for l in range(k, 2 * n - k):
            s_k[l] = (s_km1[l + 1] - (alpha[k - 1] - a[l]) * s_km1[l]
                      - beta[k - 1] * s_km2[l] + b[l] * s_km1[l - 1])
        if s_k[k] <= 1e-13 * abs(sig[0]):
            break
        alpha.append(a[k] + s_k[k + 1] / s_k[k] - s_km1[k] / s_km1[k - 1])
        beta.append(s_k[k] / s_km1[k - 1])
        sigs.append(s_k)
    return np.array(alpha), np.array(beta)


def hermitian_letters(P: NCPoly, matrices: Mapping[str, np.ndarray]) -> NCPoly:
    """Replace ``Z_j^*`` by ``Z_j`` wherever ``matrices["Z<j>"]`` is Hermitian."""
    herm = {int(k[1:]) for k, m in matrices.items()
            if np.allclose(m, np.conj(np.transpose(m)), atol=1e-14)}
    return P.map_letters(lambda l: Letter("Z", l.index, l.label)
                         if l.kind == "Y" and l.index in herm else l)


def is_selfadjoint_with(P: NCPoly, matrices: Mapping[str, np.ndarray]) -> bool:
    """Self-adjointness of ``P`` once Hermitian matrix letters are identified."""
    Q = hermitian_letters(P, matrices)
    return (hermitian_letters(Q.adjoint(), matrices) - Q).is_zero() or Q.is_selfadjoint(1e-12)


def reference_support(P: NCPoly, matrices: Mapping[str, np.ndarray], n_moments: int = 64,
                      merge: Optional[float] = None) -> Dict[str, Any]:
    """Estimate the spectrum of ``P(u, Z)`` (``u`` free Haar) from its moments.

    Chebyshev moments ``tau(T_k(P/R))`` with ``R`` a norm bound are
    computed exactly by the free trace evaluator, turned into a Jacobi
    matrix by the modified Chebyshev algorithm, and the Gauss nodes are
    merged into intervals when closer than ``merge`` (by default
    ``pi * span / n`` for ``n`` nodes, about twice the widest node spacing
    of an arcsine-like edge).  The result is an estimate from inside, not
    a certified enclosure.
    """
    from scipy.linalg import eigh_tridiagonal

    if not is_selfadjoint_with(P, matrices):
        raise ValueError("spectrum confinement needs a self-adjoint P")
    mats = {k: np.asarray(v, dtype=complex) for k, v in matrices.items()}
    A = max([1.0] + [float(np.linalg.norm(m, 2)) for m in mats.values()])
    R = norm_a(P, A) or 1.0
    x = (1.0 / R) * P
    ev = lambda Q: complex(expansion.evaluate_labeled(Q, 0, {}, mats)[0]).real
    Tm1, T = NCPoly.one(), x
    cheb = [1.0, ev(x)]
    for _ in range(2, n_moments):
        Tm1, T = T, reduce_unitary(2.0 * (x * T) - Tm1)
        cheb.append(ev(T))
    cheb = np.array(cheb)
    mono = cheb.copy()
    mono[1:] = cheb[1:] / 2.0 ** np.arange(0, n_moments - 1)
    alpha, beta = _modified_chebyshev(mono, n_moments // 2)
    if alpha.size == 1:
        nodes = alpha.copy()
    else:
        nodes = eigh_tridiagonal(alpha, np.sqrt(np.maximum(beta[1:], 0.0)), eigvals_only=True)
    nodes = np.sort(nodes) * R
    if merge is None:
        merge = math.pi * (nodes[-1] - nodes[0]) / max(nodes.size, 1)
    intervals = [[nodes[0], nodes[0]]]
    for v in nodes[1:]:
        if v - intervals[-1][1] <= merge:
            intervals[-1][1] = v
        else:
            intervals.append([v, v])
    return {"nodes": nodes, "intervals": [tuple(iv) for iv in intervals], "R": R}


def _distance_to(intervals, lam: np.ndarray) -> np.ndarray:
    d = np.full(lam.shape, np.inf)
    for lo, hi in intervals:
        d = np.minimum(d, np.maximum(0.0, np.maximum(lo - lam, lam - hi)))
    return d


def run_spectrum_confinement(cfg: ExperimentConfig, threads: int = 1) -> Report:
    """Fraction of eigenvalues of ``P(U^N, Z^N)`` outside the fattened reference."""
    P = cfg.poly()
    if not is_selfadjoint_with(P, _fit_matrices(cfg, _pattern_size(cfg))):
        raise ValueError("spectrum confinement needs a self-adjoint P")
    a = float(cfg.params.get("alpha", 0.4))
    if not a < 0.5:
        raise ValueError("the window exponent must be below 1/2")
    runs = int(cfg.params.get("runs", 20))
    Ns = cfg.Ns or [64, 128, 256, 512]
    base = cfg.Ns[0] if cfg.Ns else 64
    ref = reference_support(P, _fit_matrices(cfg, base),
                            int(cfg.params.get("moments", 64)),
                            cfg.params.get("merge"))
    idx = sorted({l.index for l in P.letters() if l.is_unitary})
    rows = []
    for N in Ns:
        mats = make_matrices(cfg.matrices, N)
        w = N ** (-a)

        def one(r, _n):
            g = _stream(cfg, N, r)
            Us = {i: rmt.haar_sample(N, g) for i in idx}
            M = rmt.eval_poly(P, Us, mats) if (Us or mats) else np.zeros((N, N))
            lam = np.linalg.eigvalsh(0.5 * (M + M.conj().T))
            dist = _distance_to(ref["intervals"], lam)
            return np.array([[np.mean(dist >= w), dist.max()]])

        data = rmt._run_chunks_2d(one, runs, 1, threads)
        for r in range(runs):
            rows.append({"N": N, "run": r, "window": w, "outlier_fraction": float(data[r, 0]),
                         "max_distance": float(data[r, 1])})
    summary = {"intervals": ref["intervals"]}
    for N in Ns:
        fr = [r["outlier_fraction"] for r in rows if r["N"] == N]
        summary[f"zero_runs_N{N}"] = float(np.mean([x == 0 for x in fr]))
        summary[f"mean_fraction_N{N}"] = float(np.mean(fr))
    return Report("confine", rows, summary)


# -- tensor probe -------------------------------------------------------------


def tensor_trace_lemma(A, B, C, D, samples: int, rng: rmt.RngStream):
    """MC estimate of ``M^2 E[ts_M(B W1 A W2 D W1^* C W2^*)]`` and ``ts_M(ABCD)``."""
    M = A.shape[0]
    vals = []
    chunk = 256
    done = 0
    k = 0
    while done < samples:
        n = min(chunk, samples - done)
        g = rng.child(k)
        W1 = rmt.haar_sample(M, g, n)
        W2 = rmt.haar_sample(M, g, n)
        prod = B @ W1 @ A @ W2 @ D @ rmt._adj(W1) @ C @ rmt._adj(W2)
        vals.append(M ** 2 * rmt.normalized_trace(prod))
        done += n
        k += 1
    est = rmt.McEstimate.from_samples(np.concatenate(vals))
    return est, complex(np.trace(A @ B @ C @ D) / M)


def _tensor_eval(P: NCPoly, Us: Mapping[int, np.ndarray], Ys: Mapping[int, np.ndarray]):
    """``P(U_i (x) I_M, I_N (x) Y_j)`` as an ``NM x NM`` matrix."""
    N = next(iter(Us.values())).shape[0] if Us else 1
    M = next(iter(Ys.values())).shape[0] if Ys else 1
    big_u = {i: np.kron(u, np.eye(M)) for i, u in Us.items()}
    big_y = {j: np.kron(np.eye(N), y) for j, y in Ys.items()}
    return rmt.eval_poly(P, big_u, big_y)


def run_tensor_probe(cfg: ExperimentConfig, threads: int = 1) -> Report:
    """Tensor-trace lemma check and norms of ``P(U (x) I_M, I_N (x) Y)``."""
    rows = []
    lemma_M = int(cfg.params.get("lemma_M", 8))
    lemma_samples = int(cfg.params.get("lemma_samples", cfg.samples))
    g = _stream(cfg, 0)
    mats = [g.generator.standard_normal((lemma_M, lemma_M))
            + 1j * g.generator.standard_normal((lemma_M, lemma_M)) for _ in range(4)]
    mats = [m / np.linalg.norm(m, 2) for m in mats]
    est, exact = tensor_trace_lemma(*mats, lemma_samples, _stream(cfg, 1))
    rows.append({"part": "lemma", "M": lemma_M, "estimate": est.mean, "stderr": est.stderr,
                 "exact": exact, "z": est.zscore(exact)})
    if cfg.polys:
        P = cfg.poly()
        Ns = cfg.Ns or [8, 16, 32]
        Ms = cfg.Ms or [1, 2]
        runs = int(cfg.params.get("runs", 4))
        guard = int(cfg.params.get("max_dim", 2048))
        proxy_N = int(cfg.params.get("proxy_N", 4 * max(Ns)))
        idx = sorted({l.index for l in P.letters() if l.is_unitary})
        for M in Ms:
            Ys = make_matrices(cfg.matrices, M)
            if proxy_N * M > guard:
                raise MemoryError(f"N*M = {proxy_N * M} above the guard {guard}")
            gp = _stream(cfg, 2, M)
            proxy = float(np.linalg.norm(_tensor_eval(
                P, {i: rmt.haar_sample(proxy_N, gp) for i in idx}, Ys), 2))
            for N in Ns:
                if N * M > guard:
                    raise MemoryError(f"N*M = {N * M} above the guard {guard}")
                norms = []
                for r in range(runs):
                    gr = _stream(cfg, 3, M, N, r)
                    Us = {i: rmt.haar_sample(N, gr) for i in idx}
                    norms.append(float(np.linalg.norm(_tensor_eval(P, Us, Ys), 2)))
                m = float(np.mean(norms))
                rows.append({"part": "norm", "N": N, "M": M, "norm": m,
                             "norm_stderr": float(np.std(norms, ddof=1) / math.sqrt(runs)) if runs > 1 else 0.0,
                             "proxy_N": proxy_N, "proxy_norm": proxy, "gap": proxy - m})
    return Report("tensor-probe", rows, {"lemma_z": rows[0]["z"]})


# -- conjugation freeness ------------------------------------------------------


def _gap(cfg: ExperimentConfig, N: int) -> float:
    c = float(cfg.params.get("gap", 2.0))
    e = float(cfg.params.get("gap_exponent", 0.0))
    return c * N ** e


def run_conjugation_freeness(cfg: ExperimentConfig, threads: int = 1) -> Report:
    """Alternating centred moments of ``a_i = e^{i y_i P(U)} A_i e^{-i y_i P(U)}``.

    The ``A_i`` are the matrices ``Z1, Z2, ...`` of the config; ``y_i = (i-1) * gap``
    with ``gap = params.gap * N ** params.gap_exponent``; the product
    ``ts(a_{i_1}^c ... a_{i_p}^c)`` cycles through the indices and uses the
    centred ``a^c = a - ts(A)``.  The free-limit value at the same ``y``
    is computed with the free trace evaluator for comparison.
    """
    P = cfg.poly()
    if not is_selfadjoint_with(P, _fit_matrices(cfg, _pattern_size(cfg))):
        raise ValueError("P must be self-adjoint")
    p = int(cfg.params.get("p", 2))
    Ns = cfg.Ns or [64, 128, 256]
    names = sorted(cfg.matrices, key=lambda s: int(s[1:]))
    k = len(names)
    if k < 1:
        raise ValueError("need at least one matrix A_i")
    order = [(m % k) for m in range(p)]
    if any(not l.is_unitary for l in P.letters()):
        raise ValueError("the conjugating polynomial uses unitary letters only")
    idx = sorted({l.index for l in P.letters() if l.is_unitary})
    lo, hi = float(cfg.params.get("gap_min", 1.0)), None
    rows = []
    for N in Ns:
        gap = _gap(cfg, N)
        hi = math.sqrt(N / math.log(N))
        warn = not (lo <= gap <= hi)
        mats = make_matrices(cfg.matrices, N)
        As = [mats[int(nm[1:])] for nm in names]
        cen = [A - np.trace(A) / N * np.eye(N) for A in As]
        ys = [i * gap for i in range(k)]

        def run(ch, n):
            g = _stream(cfg, N, ch)
            Us = {i: rmt.haar_sample(N, g, n) for i in idx}
            if Us:
                H = rmt.eval_poly(P, Us, {})
            else:
                H = np.broadcast_to(P.terms.get((), 0) * np.eye(N), (n, N, N))
            H = 0.5 * (H + rmt._adj(H))
            lam, V = np.linalg.eigh(H)
            Vh = rmt._adj(V)
            conj = []
            for i in range(k):
                ph = np.exp(1j * ys[i] * lam)
                E = (V * ph[..., None, :]) @ Vh
                conj.append(E @ cen[i] @ rmt._adj(E))
            prod = conj[order[0]]
            for m in order[1:]:
                prod = prod @ conj[m]
            return rmt.normalized_trace(prod)

        chunk = max(1, min(64, 2 ** 16 // (N * N)))
        vals = rmt._run_chunks(run, cfg.samples, chunk, threads)
        est = rmt.McEstimate.from_samples(vals)
        rows.append({"N": N, "gap": gap, "p": p, "moment": est.mean, "stderr": est.stderr,
                     "z": est.zscore(0.0), "gap_window_violated": warn})
    if cfg.params.get("free_limit", False):
        for r in rows:
            r["free_limit"] = _free_conjugation_moment(P, cfg, r["gap"], order, names)
    return Report("conjugate-freeness", rows, {"final_z": rows[-1]["z"]})


def _free_conjugation_moment(P, cfg, gap, order, names):
    """Free-limit value of the ``p = 2`` product ``tau(a_1^c a_2^c)``.

    With ``v = e^{i y P(u)}`` free from the ``A_i``,
    ``tau(A^c v B^c v^*) = tau(A^c B^c) |tau(v)|^2``.
    Longer products are not evaluated (``nan``).
    """
    if len(order) != 2 or order[0] == order[1]:
        return complex(float("nan"))
    size = _pattern_size(cfg)
    mats = make_matrices(cfg.matrices, size)
    As = [mats[int(names[m][1:])] for m in order]
    cen = [A - np.trace(A) / size * np.eye(size) for A in As]
    tab = complex(np.trace(cen[0] @ cen[1]) / size)
    y = abs(order[1] - order[0]) * gap
    tv = expansion.alpha(0, FourierSpec.atomic([(y, 1.0)]), {}, P=P).alpha0
    return tab * abs(tv) ** 2


# -- selftest -----------------------------------------------------------------


def run_selftest(cfg: ExperimentConfig, threads: int = 1) -> Report:
    """Small fixed experiments exercising every module."""
    rows = []
    g = _stream(cfg, 0)
    U = rmt.haar_sample(16, g)
    rows.append({"check": "haar_unitarity", "value": float(np.abs(U.conj().T @ U - np.eye(16)).max())})
    est = rmt.mc_expect_trace(parse_poly("U1 + U1*"), FourierSpec.polynomial(4), {}, 8,
                              cfg.samples, _stream(cfg, 1), threads=threads)
    rows.append({"check": "mc_moment4", "value": est.mean, "stderr": est.stderr})
    Zm = {"Z1": np.diag([1, 1, -1, -1]).astype(complex)}
    a = expansion.alpha(1, parse_poly("U1 Z1 U1* Z1 U1 Z1 U1* Z1"), Zm,
                        QuadratureConfig(nodes=16, error_estimate=False))
    rows.append({"check": "alpha0", "value": a.alpha0})
    rows.append({"check": "alpha1", "value": a.alpha1})
    expr = weingarten.exact_word_expectation("U Z U* Z U Z U* Z", {"Z": Zm["Z1"]})
    rows.append({"check": "weingarten_a1",
                 "value": complex(weingarten.series_coefficients(expr, 1)[1])})
    rows.append({"check": "J3_size", "value": len(indexsets.build_universe(3).all_sets)})
    rows.append({"check": "fubm_density_total",
                 "value": fubm.density_table(5.0, 512).total})
    for r in rows:
        r["value"] = complex(r["value"])
    return Report("selftest", rows)


RUNNERS: Dict[str, Callable[..., Report]] = {
    "expand": run_expand,
    "fit": run_expansion_fit,
    "covcheck": run_covcheck,
    "fubm-density": run_fubm_density,
    "confine": run_spectrum_confinement,
    "tensor-probe": run_tensor_probe,
    "conjugate-freeness": run_conjugation_freeness,
    "selftest": run_selftest,
}


def run_experiment(cfg: ExperimentConfig, out_dir: Optional[str] = None, threads: int = 1,
                   svg: bool = False) -> Tuple[Report, Optional[str]]:
    """Run ``cfg`` and write ``<out_dir>/<kind>.csv`` when an output directory is set."""
    cfg.validate()
    t0 = time.perf_counter()
    rep = RUNNERS[cfg.kind](cfg, threads=threads)
    rep.elapsed = time.perf_counter() - t0
    path = None
    out_dir = out_dir or cfg.out
    if out_dir:
        path = write_csv(os.path.join(out_dir, f"{cfg.kind}.csv"), rep.rows)
        if svg and cfg.kind == "fit":
            xs = [1.0 / r["N"] ** 2 for r in rep.rows]
            write_svg(os.path.join(out_dir, "fit.svg"), xs, [r["mean"] for r in rep.rows],
                      [r["stderr"] for r in rep.rows], "1/N^2", "estimate")
    return rep, path


# ---------------------------------------------------------------------------
# command line


def _parse_matrix_opt(text: str) -> Tuple[str, Dict[str, Any]]:
    """``Z1=diag:1,-1`` / ``Z1=hermitian:3`` / ``Z1=values:[[...]]``."""
    name, eq, body = text.partition("=")
    kind, colon, val = body.partition(":")
    if not eq or not colon:
        raise ValueError(f"matrix options look like Z1=diag:1,-1, got {text!r}")
    name = name.strip()
    if kind == "diag":
        return name, {"diag": [_diag_entry(v) for v in val.split(",")]}
    if kind == "hermitian":
        return name, {"hermitian": {"seed": int(val)}}
    if kind == "values":
        return name, {"values": json.loads(val)}
    raise ValueError(f"unknown matrix kind {kind!r}")


def _diag_entry(v: str):
    v = v.strip()
    try:
        return float(v)
    except ValueError:
        c = _complex_literal(v.strip("()"))
        if c is None:
            raise ValueError(f"bad diagonal entry {v!r}")
        return f"({v.strip('()')})"


def _int_list(text: str) -> List[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _add_globals(p, suppress: bool):
    import argparse

    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=d(None), help="master seed")
    p.add_argument("--threads", type=int, default=d(1), help="worker threads")
    p.add_argument("--config", default=d(None), help="JSON experiment config")
    p.add_argument("--out", default=d(None), help="output directory for CSV files")
    p.add_argument("--svg", action="store_true", default=d(False),
                   help="also write an SVG plot where available")


def build_parser():
    import argparse

    ap = argparse.ArgumentParser(prog="haarexp", description="1/N^2 expansions for Haar unitaries")
    _add_globals(ap, suppress=False)
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        _add_globals(p, suppress=True)
        return p

    def common(p, poly=True, matrices=True):
        if poly:
            p.add_argument("--poly", action="append", default=None, help="polynomial expression")
        if matrices:
            p.add_argument("--matrix", action="append", default=None,
                           help="matrix spec, e.g. Z1=diag:1,-1 (repeatable)")

    p = add("expand", "expansion coefficients alpha_0, alpha_1")
    common(p)
    p.add_argument("--f", default=None, help='"moment:4" or "trig:(y,c);(y,c)"')
    p.add_argument("--order", type=int, default=None)
    p.add_argument("--N", type=int, default=None, help="size used to build the matrices")
    p.add_argument("--nodes", type=int, default=None, help="Gauss-Legendre nodes per axis")

    p = add("fit", "Monte Carlo fit against a + b/N^2")
    common(p)
    p.add_argument("--f", default=None)
    p.add_argument("--Ns", type=_int_list, default=None)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--no-alpha", action="store_true", help="skip the coefficient computation")

    p = add("covcheck", "both sides of the covariance formula")
    p.add_argument("--pair", action="append", default=None, help='"P|Q" (repeatable)')
    common(p, poly=False)
    p.add_argument("--N", type=int, default=None)
    p.add_argument("--T", type=float, default=None)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--rhs-samples", type=int, default=None)
    p.add_argument("--nodes", type=int, default=None)
    p.add_argument("--scheme", choices=["euler-polar", "cayley"], default=None)

    p = add("fubm-density", "density of the free unitary Brownian motion")
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--grid", type=int, default=None)

    p = add("confine", "spectrum confinement outliers")
    common(p)
    p.add_argument("--Ns", type=_int_list, default=None)
    p.add_argument("--runs", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None, help="window exponent (< 1/2)")
    p.add_argument("--moments", type=int, default=None)

    p = add("tensor-probe", "tensor-trace lemma and tensor norms")
    common(p)
    p.add_argument("--Ns", type=_int_list, default=None)
    p.add_argument("--Ms", type=_int_list, default=None)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--runs", type=int, default=None)

    p = add("conjugate-freeness", "mixed moments of conjugated matrices")
    common(p)
    p.add_argument("--Ns", type=_int_list, default=None)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--p", type=int, default=None, help="length of the alternating product")
    p.add_argument("--gap", type=float, default=None)
    p.add_argument("--gap-exponent", type=float, default=None)
    p.add_argument("--free-limit", action="store_true")

    p = add("oracle", "exact Weingarten value of a word and its 1/N^2 coefficients")
    p.add_argument("--word", required=True, help='e.g. "U Z U* Z"')
    p.add_argument("--N", type=int, default=16)
    p.add_argument("--order", type=int, default=1)
    p.add_argument("--matrix", action="append", default=None,
                   help="handle spec, e.g. Z=diag:1,-1 (default Z=diag:1,-1)")

    p = add("indexsets", "index-set families")
    p.add_argument("action", choices=["dump"])
    p.add_argument("--n", "--order", dest="n", type=int, default=2)

    p = add("selftest", "small fixed run of every module")
    p.add_argument("--samples", type=int, default=None)
    return ap


_PARAM_KEYS = {
    "order": "order", "N": "N", "T": "T", "rhs_samples": "rhs_samples", "nodes": "nodes",
    "scheme": "scheme", "t": "t", "grid": "grid", "runs": "runs", "alpha": "alpha",
    "moments": "moments", "p": "p", "gap": "gap", "gap_exponent": "gap_exponent",
}


def config_from_args(args) -> ExperimentConfig:
    """Merge a config file (if any) with command-line options."""
    kind = args.command
    if args.config:
        cfg = ExperimentConfig.load(args.config)
        if cfg.kind != kind:
            raise ValueError(f"config is for {cfg.kind!r}, not {kind!r}")
    else:
        cfg = ExperimentConfig(kind=kind)
        if kind == "selftest":
            cfg.samples = 200
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "poly", None):
        cfg.polys = list(args.poly)
    if getattr(args, "pair", None):
        cfg.polys = [s.strip() for pq in args.pair for s in pq.split("|")]
    if getattr(args, "matrix", None):
        cfg.matrices = dict(_parse_matrix_opt(m) for m in args.matrix)
    if getattr(args, "f", None) is not None:
        cfg.f = args.f
    for key in ("Ns", "Ms", "samples"):
        v = getattr(args, key, None)
        if v is not None:
            setattr(cfg, key, v)
    if getattr(args, "N", None) is not None and kind in ("expand", "covcheck"):
        cfg.Ns = [args.N]
    if getattr(args, "nodes", None) is not None and kind == "expand":
        cfg.quadrature["nodes"] = args.nodes
    for attr, key in _PARAM_KEYS.items():
        if attr in ("N",) or (attr == "nodes" and kind == "expand"):
            continue
        v = getattr(args, attr, None)
        if v is not None:
            cfg.params[key] = v
    if getattr(args, "no_alpha", False):
        cfg.params["alpha"] = False
    if getattr(args, "free_limit", False):
        cfg.params["free_limit"] = True
    if args.out:
        cfg.out = args.out
    cfg.validate()
    return cfg


def _oracle(args) -> str:
    specs = dict(_parse_matrix_opt(m) for m in (args.matrix or ["Z=diag:1,-1"]))
    mats = {}
    for name, sp in specs.items():
        key, val = next(iter(sp.items()))
        if key == "diag":
            mats[name] = np.diag([_entry(v) for v in val])
        elif key == "values":
            mats[name] = np.asarray(val, dtype=complex)
        else:
            raise ValueError("oracle matrices are diag or values")
    size = next(iter(mats.values())).shape[0]
    if args.N % size:
        raise ValueError(f"N={args.N} is not a multiple of the matrix size {size}")
    big = {k: np.kron(np.eye(args.N // size), m) for k, m in mats.items()}
    exact = complex(weingarten.exact_word_expectation(args.word, big, N=args.N))
    expr = weingarten.exact_word_expectation(args.word, mats)
    coeffs = weingarten.series_coefficients(expr, args.order)
    rows = [{"word": args.word, "N": args.N, "value": exact}]
    for k, c in enumerate(coeffs):
        rows[0][f"a{k}"] = complex(c)
    return csv_text(rows)


def main(argv: Optional[Sequence[str]] = None) -> int:
    import sys

    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if args.command == "oracle":
            text = _oracle(args)
            _emit(text, args.out, "oracle.csv")
            return 0
        if args.command == "indexsets":
            text = indexsets.dump(args.n).rstrip("\n") + "\n"
            _emit(text, args.out, f"indexsets_{args.n}.txt")
            return 0
        cfg = config_from_args(args)
        rep, path = run_experiment(cfg, out_dir=args.out, threads=args.threads, svg=args.svg)
        if path:
            print(path)
        else:
            sys.stdout.write(csv_text(rep.rows))
        if rep.summary:
            sys.stderr.write(json.dumps({k: _jsonable(v) for k, v in rep.summary.items()}) + "\n")
        return 0
    except (ValueError, MemoryError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


def _jsonable(v):
    if isinstance(v, (complex, np.complexfloating)):
        return [float(np.real(v)), float(np.imag(v))]
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def _emit(text: str, out_dir: Optional[str], name: str):
    import sys

    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        print(path)
    else:
        sys.stdout.write(text)
