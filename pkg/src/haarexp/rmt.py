"""
Finite-N random matrices: Haar unitaries, Hermitian and unitary Brownian
motions, functional calculus and Monte Carlo trace estimators.

All randomness comes from :class:`RngStream` objects, counter-based
generators keyed by ``(seed, index)``.  Monte Carlo loops are cut into
chunks of fixed size, chunk ``c`` drawing from the child stream ``c``, so
estimates depend on the seed only and not on the number of worker threads.

Unitary Brownian motion follows ``dU = i U dX - U dt / 2``.  The default
step is the Euler update followed by the polar projection back onto the
unitary group.  Since ``U`` is unitary, ``polar(U M) = U polar(M)`` with
``M = (1 - dt/2) I + i dX`` normal, so the projection is exact through an
eigendecomposition of the Hermitian increment.  The Cayley step
``U (I - i dX/2)^{-1} (I + i dX/2)`` is a cheaper unitary alternative with
the same order of weak accuracy.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import expm

from .ncalg import ExpAtom, Letter, NCPoly, cyclic

__all__ = [
    "RngStream",
    "McEstimate",
    "haar_sample",
    "hbm_increment",
    "ubm_evolve",
    "ubm_coupled",
    "apply_function",
    "eval_poly",
    "normalized_trace",
    "mc_expect_trace",
    "ubm_moment_mc",
    "covariance_check",
    "covariance_check_pairs",
    "MAX_DT",
]

MAX_DT = 1e-2
SCHEMES = ("euler-polar", "cayley")


class RngStream:
    """Deterministic random stream keyed by ``(seed, index)``.

    ``index`` may be an integer or a tuple of integers; :meth:`child`
    appends one more key so sub-streams never overlap.
    """

    def __init__(self, seed: int, index=0):
        self.seed = int(seed)
        self.index = tuple(index) if isinstance(index, (tuple, list)) else (int(index),)
        ss = np.random.SeedSequence([self.seed, *self.index])
        self.generator = np.random.Generator(np.random.Philox(ss))

    def child(self, k: int) -> "RngStream":
        return RngStream(self.seed, self.index + (int(k),))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, index={self.index})"


def _gen(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError("rng must be an RngStream or a numpy Generator")


@dataclass(frozen=True)
class McEstimate:
    """Monte Carlo mean with ``stderr = sample std / sqrt(samples)``.

    For complex samples the standard deviation is that of the complex
    variable, ``sqrt(var(Re) + var(Im))``; the real and imaginary parts
    are also kept separately.
    """

    mean: complex
    stderr: float
    samples: int
    stderr_re: float = float("nan")
    stderr_im: float = float("nan")

    @classmethod
    def from_samples(cls, x) -> "McEstimate":
        x = np.asarray(x)
        n = x.size
        if n == 0:
            raise ValueError("no samples")
        mean = complex(np.sum(x) / n)
        if n > 1:
            sre = float(np.std(np.real(x), ddof=1) / math.sqrt(n))
            sim = float(np.std(np.imag(x), ddof=1) / math.sqrt(n))
        else:
            sre = sim = float("inf")
        return cls(mean, math.hypot(sre, sim), n, sre, sim)

    def zscore(self, value: complex, other: Optional["McEstimate"] = None) -> float:
        """Largest of the real and imaginary standardised deviations."""
        diff = complex(self.mean) - complex(value if other is None else other.mean)
        sre2 = self.stderr_re ** 2 + (0 if other is None else other.stderr_re ** 2)
        sim2 = self.stderr_im ** 2 + (0 if other is None else other.stderr_im ** 2)
        z = 0.0
        for d, s2 in ((diff.real, sre2), (diff.imag, sim2)):
            if s2 > 0:
                z = max(z, abs(d) / math.sqrt(s2))
            elif abs(d) > 1e-12:
                z = float("inf")
        return z


# ---------------------------------------------------------------------------
# sampling


def haar_sample(N: int, rng, size: Optional[int] = None) -> np.ndarray:
    """Haar unitary by QR of a complex Ginibre matrix.

    Each column of ``Q`` is multiplied by ``r_kk / |r_kk|`` so that the
    result does not depend on the sign conventions of the QR routine.
    With ``size`` a stack of shape ``(size, N, N)`` is returned.
    """
    if N < 1:
        raise ValueError("N must be positive")
    g = _gen(rng)
    shape = (N, N) if size is None else (size, N, N)
    Z = (g.standard_normal(shape) + 1j * g.standard_normal(shape)) / math.sqrt(2)
    Q, R = np.linalg.qr(Z)
    d = np.diagonal(R, axis1=-2, axis2=-1)
    ph = d / np.abs(d)
    return Q * ph[..., None, :]


def hbm_increment(N: int, dt: float, rng, size: Optional[int] = None) -> np.ndarray:
    """Hermitian Brownian increment over a time ``dt``.

    Diagonal entries are real ``N(0, dt/N)``, off-diagonal entries complex
    with independent real and imaginary parts ``N(0, dt/(2N))``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    g = _gen(rng)
    shape = (N, N) if size is None else (size, N, N)
    A = g.standard_normal(shape)
    # (A + A^T)/sqrt2 and (A - A^T)/sqrt2 have independent off-diagonal
    # entries of unit variance; the symmetric part carries variance 2 on
    # the diagonal, which gives dt/N there after scaling by dt/(2N).
    At = np.swapaxes(A, -1, -2)
    H = np.empty(shape, dtype=complex)
    np.add(A, At, out=H.real)
    np.subtract(A, At, out=H.imag)
    H *= math.sqrt(dt / (4 * N))
    return H


def _step_unitary(H: np.ndarray, dt: float, scheme: str) -> np.ndarray:
    """Unitary factor ``W`` of one step: ``U <- U W``."""
    if scheme == "euler-polar":
        lam, V = np.linalg.eigh(H)
        a = 1.0 - 0.5 * dt
        ph = (a + 1j * lam) / np.abs(a + 1j * lam)
        return (V * ph[..., None, :]) @ np.conj(np.swapaxes(V, -1, -2))
    if scheme == "cayley":
        N = H.shape[-1]
        inv = np.linalg.inv(np.eye(N) - 0.5j * H)
        inv *= 2.0
        idx = np.arange(N)
        inv[..., idx, idx] -= 1.0
        return inv
    raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")


def _apply_step(U: np.ndarray, H: np.ndarray, dt: float, scheme: str) -> np.ndarray:
    """``U W`` for the step unitary ``W`` of :func:`_step_unitary`."""
    if scheme == "cayley":
        # U W = 2 U (I - iH/2)^{-1} - U
        X = U @ np.linalg.inv(np.eye(H.shape[-1]) - 0.5j * H)
        X *= 2.0
        X -= U
        return X
    return U @ _step_unitary(H, dt, scheme)


def _check_steps(t: float, steps: int) -> float:
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0:
        return 0.0
    if steps < 1:
        raise ValueError("steps must be positive")
    dt = t / steps
    if dt > MAX_DT * (1 + 1e-12):
        raise ValueError(f"time step {dt:.3g} exceeds {MAX_DT}; increase steps")
    return dt


def ubm_evolve(U0: np.ndarray, t: float, steps: int, rng, scheme: str = "euler-polar",
               record: Optional[Sequence[int]] = None):
    """Unitary Brownian motion from ``U0`` over time ``t`` in ``steps`` steps.

    ``U0`` may be a stack ``(B, N, N)``; every member gets an independent
    path.  With ``record`` (step counts) the function returns
    ``(U_t, {k: U_{k dt}})``.
    """
    U = np.array(U0, dtype=complex)
    N = U.shape[-1]
    dt = _check_steps(t, steps)
    snaps = {}
    want = set(record or ())
    if 0 in want:
        snaps[0] = U.copy()
    if dt == 0:
        return (U, snaps) if record is not None else U
    size = U.shape[0] if U.ndim == 3 else None
    for k in range(1, steps + 1):
        H = hbm_increment(N, dt, rng, size)
        U = _apply_step(U, H, dt, scheme)
        if k in want:
            snaps[k] = U.copy()
    return (U, snaps) if record is not None else U


def ubm_coupled(U0: np.ndarray, t: float, fine_steps: int, rng, scheme: str = "euler-polar"):
    """Fine path and coarse path (half as many steps) driven by the same noise.

    The coarse increment is the sum of two consecutive fine increments.
    Used for Richardson extrapolation ``2 E[f(U_fine)] - E[f(U_coarse)]``.
    """
    if fine_steps % 2:
        raise ValueError("fine_steps must be even")
    Uf = np.array(U0, dtype=complex)
    Uc = Uf.copy()
    N = Uf.shape[-1]
    dt = _check_steps(t, fine_steps)
    _check_steps(t, fine_steps // 2)
    if dt == 0:
        return Uf, Uc
    size = Uf.shape[0] if Uf.ndim == 3 else None
    for _ in range(fine_steps // 2):
        H1 = hbm_increment(N, dt, rng, size)
        H2 = hbm_increment(N, dt, rng, size)
        Uf = _apply_step(Uf, H1, dt, scheme)
        Uf = _apply_step(Uf, H2, dt, scheme)
        Uc = _apply_step(Uc, H1 + H2, 2 * dt, scheme)
    return Uf, Uc


# ---------------------------------------------------------------------------
# functional calculus and polynomial evaluation


def _scalar_fn(f) -> Callable:
    if f is None:
        return lambda x: x
    return f


def apply_function(H: np.ndarray, f) -> np.ndarray:
    """``f(H)`` through the eigendecomposition of a Hermitian ``H``."""
    H = np.asarray(H)
    scale = max(1.0, float(np.max(np.abs(H)))) if H.size else 1.0
    if np.max(np.abs(H - np.conj(np.swapaxes(H, -1, -2))), initial=0.0) > 1e-10 * scale:
        raise ValueError("apply_function needs a Hermitian matrix")
    lam, V = np.linalg.eigh(H)
    vals = np.asarray(_scalar_fn(f)(lam))
    return (V * vals[..., None, :]) @ np.conj(np.swapaxes(V, -1, -2))


def normalized_trace(M: np.ndarray):
    """``ts_N(M) = Tr(M) / N`` (works on stacks)."""
    return np.trace(M, axis1=-2, axis2=-1) / M.shape[-1]


def _adj(M):
    return np.conj(np.swapaxes(M, -1, -2))


def eval_poly(P: NCPoly, unitaries: Mapping[int, np.ndarray],
              matrices: Optional[Mapping[int, np.ndarray]] = None) -> np.ndarray:
    """Matrix value of ``P`` with ``U_i -> unitaries[i]``, ``Z_j -> matrices[j]``.

    Stacks ``(B, N, N)`` broadcast against plain ``(N, N)`` matrices.
    Labels on letters are ignored.  Exponential atoms are evaluated by
    ``expm`` (through ``eigh`` when the exponent is ``i`` times a
    Hermitian matrix).
    """
    matrices = dict(matrices or {})
    shapes = [np.shape(u) for u in unitaries.values()] + [np.shape(m) for m in matrices.values()]
    if not shapes:
        raise ValueError("no matrices to evaluate on")
    N = shapes[0][-1]
    batch = max((s[:-2] for s in shapes), key=len)
    cache: Dict[Letter, np.ndarray] = {}

    def letter(let: Letter):
        key = Letter(let.kind, let.index)
        m = cache.get(key)
        if m is None:
            if let.kind == "U":
                m = unitaries[let.index]
            elif let.kind == "V":
                m = _adj(unitaries[let.index])
            elif let.kind == "Z":
                m = matrices[let.index]
            else:
                m = _adj(matrices[let.index])
            cache[key] = m
        return m

    def atom(a: ExpAtom):
        R = eval_poly(a.poly, unitaries, matrices)
        lam = complex(a.scalar)
        herm = np.max(np.abs(R - _adj(R))) <= 1e-10 * max(1.0, float(np.max(np.abs(R))))
        if herm and lam.real == 0:
            w, V = np.linalg.eigh(R)
            return (V * np.exp(lam * w)[..., None, :]) @ _adj(V)
        if R.ndim == 2:
            return expm(lam * R)
        return np.stack([expm(lam * r) for r in R.reshape((-1, N, N))]).reshape(R.shape)

    out = np.zeros(batch + (N, N), dtype=complex)
    eye = np.eye(N)
    for w, c in P.terms.items():
        acc = None
        for f in w:
            m = letter(f) if isinstance(f, Letter) else atom(f)
            acc = m if acc is None else acc @ m
        out = out + c * (eye if acc is None else acc)
    return out


# ---------------------------------------------------------------------------
# Monte Carlo estimators


def _chunk_size(N: int) -> int:
    return int(max(1, min(512, 2 ** 16 // (N * N))))


def _run_chunks(fn: Callable[[int, int], np.ndarray], samples: int, chunk: int,
                threads: int) -> np.ndarray:
    """Evaluate ``fn(chunk_index, count)`` for every chunk, in order."""
    if samples < 1:
        raise ValueError("samples must be positive")
    jobs = []
    done = 0
    k = 0
    while done < samples:
        n = min(chunk, samples - done)
        jobs.append((k, n))
        done += n
        k += 1
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as ex:
            parts = list(ex.map(lambda job: fn(*job), jobs))
    else:
        parts = [fn(*job) for job in jobs]
    return np.concatenate([np.atleast_1d(p) for p in parts])


def _trace_of_f(M: np.ndarray, f, P: NCPoly):
    from .expansion import FourierSpec

    if f is None:
        return normalized_trace(M)
    if isinstance(f, FourierSpec) and f.moment is not None:
        return normalized_trace(np.linalg.matrix_power(M, f.moment))
    H = 0.5 * (M + _adj(M))
    lam = np.linalg.eigvalsh(H)
    return np.mean(np.asarray(f(lam)), axis=-1)


def _needs_selfadjoint(f) -> bool:
    from .expansion import FourierSpec

    if f is None:
        return False
    if isinstance(f, FourierSpec):
        return f.moment is None
    return True


def mc_expect_trace(P: NCPoly, f, Zs: Optional[Mapping] = None, N: int = None,
                    samples: int = 1000, rng: RngStream = None, threads: int = 1,
                    chunk: Optional[int] = None, return_samples: bool = False):
    """Monte Carlo estimate of ``E[ts_N f(P(U, Z))]`` over Haar unitaries.

    ``f`` is ``None`` (identity), a :class:`~haarexp.expansion.FourierSpec`
    or a scalar function; for anything but powers ``P`` must be
    self-adjoint.  ``Zs`` maps ``j`` (or ``"Z<j>"``) to ``N x N`` matrices.
    """
    mats = _matrix_dict(Zs)
    # symbolic test first; Hermitian matrix letters are confirmed numerically
    check = _needs_selfadjoint(f) and not P.is_selfadjoint(1e-12)
    if check and any(l.is_unitary for l in P.letters()) and not _selfadjoint_modulo_matrices(P, mats):
        raise ValueError("a non-polynomial f needs a self-adjoint P")
    if N is None:
        if not mats:
            raise ValueError("N is required when there are no matrices")
        N = next(iter(mats.values())).shape[-1]
    for m in mats.values():
        if m.shape != (N, N):
            raise ValueError("matrix sizes must equal N")
    rng = rng or RngStream(0)
    idx = sorted({l.index for l in P.letters() if l.is_unitary})
    chunk = chunk or _chunk_size(N)

    def run(k: int, n: int):
        g = rng.child(k)
        Us = {i: haar_sample(N, g, size=n) for i in idx}
        if not Us:
            M = eval_poly(P, {}, mats)
            if check:
                _require_hermitian(M)
            v = _trace_of_f(M, f, P)
            return np.full(n, complex(v))
        M = eval_poly(P, Us, mats)
        return np.asarray(_trace_of_f(M, f, P), dtype=complex)

    x = _run_chunks(run, samples, chunk, threads)
    est = McEstimate.from_samples(x)
    return (est, x) if return_samples else est


def _require_hermitian(M: np.ndarray) -> None:
    scale = max(1.0, float(np.max(np.abs(M))))
    if np.max(np.abs(M - _adj(M))) > 1e-10 * scale:
        raise ValueError("a non-polynomial f needs a self-adjoint P")


def _selfadjoint_modulo_matrices(P: NCPoly, mats: Mapping[int, np.ndarray]) -> bool:
    """``P = P^*`` once ``Z_j^*`` is identified with ``Z_j`` for Hermitian ``Z_j``."""
    herm = {j for j, m in mats.items() if np.allclose(m, _adj(m), atol=1e-14)}

    def fold(l: Letter) -> Letter:
        return Letter("Z", l.index, l.label) if l.kind == "Y" and l.index in herm else l

    Q = P.map_letters(fold)
    return (Q.adjoint().map_letters(fold) - Q).is_zero()


def _matrix_dict(Zs) -> Dict[int, np.ndarray]:
    out = {}
    for k, v in (Zs or {}).items():
        j = int(str(k).lstrip("Z")) if not isinstance(k, int) else k
        out[j] = np.asarray(v, dtype=complex)
    return out


def ubm_moment_mc(N: int, t: float, powers: Sequence[int], paths: int, rng: RngStream,
                  steps: int, scheme: str = "euler-polar", richardson: bool = False,
                  threads: int = 1, chunk: Optional[int] = None) -> Dict[int, McEstimate]:
    """``E[ts_N(U_t^n)]`` for each ``n`` in ``powers`` from simulated paths.

    With ``richardson`` each path is run with ``steps`` and ``steps/2``
    steps on shared noise and the sample is ``2 f(fine) - f(coarse)``,
    removing the first-order weak bias of the scheme.
    """
    chunk = chunk or max(1, min(64, 2 ** 14 // (N * N)))

    def run(k: int, n: int):
        g = rng.child(k)
        U0 = np.broadcast_to(np.eye(N, dtype=complex), (n, N, N))
        if richardson:
            Uf, Uc = ubm_coupled(U0, t, steps, g, scheme)
        else:
            Uf = ubm_evolve(U0, t, steps, g, scheme)
        rows = []
        for p in powers:
            vf = normalized_trace(np.linalg.matrix_power(Uf, p))
            if richardson:
                vc = normalized_trace(np.linalg.matrix_power(Uc, p))
                vf = 2 * vf - vc
            rows.append(vf)
        return np.stack(rows, axis=-1)

    data = _run_chunks_2d(run, paths, chunk, threads)
    return {p: McEstimate.from_samples(data[:, j]) for j, p in enumerate(powers)}


def _run_chunks_2d(fn, samples, chunk, threads):
    parts = []
    jobs = []
    done = 0
    k = 0
    while done < samples:
        n = min(chunk, samples - done)
        jobs.append((k, n))
        done += n
        k += 1
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as ex:
            parts = list(ex.map(lambda job: fn(*job), jobs))
    else:
        parts = [fn(*job) for job in jobs]
    return np.concatenate(parts, axis=0)


def covariance_check(P: NCPoly, Q: NCPoly, Zs, N: int, T: float, samples: int,
                     rng: RngStream, steps: Optional[int] = None, nodes: int = 11,
                     rhs_samples: Optional[int] = None, scheme: str = "euler-polar",
                     threads: int = 1) -> Tuple[McEstimate, McEstimate]:
    """Both sides of the covariance formula for unitary Brownian motion.

    ``lhs = cov(Tr P(U_T, A), Tr Q(U_T, A))`` and
    ``rhs = -(1/N) sum_i int_0^T E[Tr(D_i P(V_t U_{T-t}, A) D_i Q(W_t U_{T-t}, A))] dt``
    with ``V, W, U`` independent unitary Brownian motions (one per
    unitary index) and the time integral done by the trapezoid rule on
    ``nodes`` points.  The covariance is bilinear, without conjugation.
    """
    return covariance_check_pairs([(P, Q)], Zs, N, T, samples, rng, steps, nodes,
                                  rhs_samples, scheme, threads)[0]


def covariance_check_pairs(pairs: Sequence[Tuple[NCPoly, NCPoly]], Zs, N: int, T: float,
                           samples: int, rng: RngStream, steps: Optional[int] = None,
                           nodes: int = 11, rhs_samples: Optional[int] = None,
                           scheme: str = "euler-polar", threads: int = 1
                           ) -> List[Tuple[McEstimate, McEstimate]]:
    """:func:`covariance_check` for several pairs sharing the left-hand paths."""
    if T <= 0:
        raise ValueError("T must be positive")
    if nodes < 2:
        raise ValueError("need at least two time nodes")
    mats = _matrix_dict(Zs)
    if steps is None:
        steps = int(math.ceil(T / MAX_DT / (nodes - 1) - 1e-9)) * (nodes - 1)
    if steps % (nodes - 1):
        raise ValueError("steps must be a multiple of nodes - 1")
    _check_steps(T, steps)
    polys = [p for pq in pairs for p in pq]
    idx = sorted({l.index for p in polys for l in p.letters() if l.is_unitary})
    d = max(idx, default=0)
    rhs_samples = rhs_samples or samples
    chunk = max(1, min(256, 2 ** 15 // (N * N)))
    eye = np.eye(N, dtype=complex)

    def lhs_run(k: int, n: int):
        g = rng.child(0).child(k)
        U0 = np.broadcast_to(eye, (n, N, N))
        Us = {i: ubm_evolve(U0, T, steps, g, scheme) for i in idx}
        cols = []
        for p in polys:
            if Us:
                cols.append(np.trace(eval_poly(p, Us, mats), axis1=-2, axis2=-1))
            else:
                cols.append(np.full(n, np.trace(eval_poly(p, {}, mats))))
        return np.stack(cols, axis=-1)

    vals = _run_chunks_2d(lhs_run, samples, chunk, threads)
    out = []
    for m, (P, Q) in enumerate(pairs):
        x, y = vals[:, 2 * m], vals[:, 2 * m + 1]
        corr = samples / max(samples - 1, 1)
        lhs = McEstimate.from_samples((x - x.mean()) * (y - y.mean()) * corr)
        rhs = _covariance_rhs(P, Q, mats, N, T, steps, nodes, idx, d, rhs_samples,
                              rng.child(1 + m), scheme, chunk, threads)
        out.append((lhs, rhs))
    return out


def _covariance_rhs(P, Q, mats, N, T, steps, nodes, idx, d, samples, rng, scheme, chunk, threads):
    eye = np.eye(N, dtype=complex)
    DP = {i: cyclic(i, P, d) for i in idx}
    DQ = {i: cyclic(i, Q, d) for i in idx}
    live = [i for i in idx if not (DP[i].is_zero() or DQ[i].is_zero())]
    stride = steps // (nodes - 1)
    rec = [j * stride for j in range(nodes)]
    tw = np.full(nodes, T / (nodes - 1))
    tw[0] *= 0.5
    tw[-1] *= 0.5

    def rhs_run(k: int, n: int):
        g = rng.child(k)
        total = np.zeros(n, dtype=complex)
        if not live:
            return total
        U0 = np.broadcast_to(eye, (n, N, N))
        paths = {}
        for i in idx:
            _, sv = ubm_evolve(U0, T, steps, g, scheme, record=rec)
            _, sw = ubm_evolve(U0, T, steps, g, scheme, record=rec)
            _, su = ubm_evolve(U0, T, steps, g, scheme, record=rec)
            paths[i] = (sv, sw, su)
        for j in range(nodes):
            # t = rec[j] * dt, and U_{T - t} is the snapshot at step steps - rec[j]
            left = {i: paths[i][0][rec[j]] @ paths[i][2][steps - rec[j]] for i in idx}
            right = {i: paths[i][1][rec[j]] @ paths[i][2][steps - rec[j]] for i in idx}
            val = np.zeros(n, dtype=complex)
            for i in live:
                A = eval_poly(DP[i], left, mats)
                B = eval_poly(DQ[i], right, mats)
                val = val + np.einsum("bij,bji->b", A, B)
            total = total + tw[j] * val
        return -total / N

    return McEstimate.from_samples(_run_chunks(rhs_run, samples, chunk, threads))
