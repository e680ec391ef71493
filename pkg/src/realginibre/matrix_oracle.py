"""Brute-force ground truth: real Ginibre matrices and their spectra.

Eigenvalues come from an in-house solver: Householder reduction to upper
Hessenberg form followed by the Francis double-shift implicit QR iteration
(eigenvalues only, no Schur vectors).  Converged 1x1 blocks give real
eigenvalues and 2x2 blocks with negative discriminant give exact conjugate
pairs, so the real/complex split is decided by the block structure first and
the realness tolerance only matters for nearly defective 2x2 blocks.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .core import STREAM_ORACLE, SpectrumError, check_parity, rng_stream

MAX_N = 400
DEFLATION_TOL = 1e-12
REAL_TOL = 1e-8
CHUNK = 4096  # trials per derived RNG stream


class ConvergenceError(SpectrumError):
    """The QR iteration hit its iteration cap."""


class InfeasibleOracleError(SpectrumError):
    """Too few accepted matrices for a conditional ensemble."""


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray  # complex, length n
    residual: float

    @property
    def n(self) -> int:
        return self.eigenvalues.size

    def to_dict(self) -> dict:
        z = self.eigenvalues
        return {"eigenvalues": [[float(a), float(b)] for a, b in zip(z.real, z.imag)],
                "residual": float(self.residual)}

    @classmethod
    def from_dict(cls, d: dict) -> "Spectrum":
        e = np.asarray(d["eigenvalues"], dtype=float).reshape(-1, 2)
        return cls(e[:, 0] + 1j * e[:, 1], float(d["residual"]))


def sample_ginibre(n: int, rng: np.random.Generator) -> np.ndarray:
    """``n x n`` matrix of i.i.d. ``N(0, 1/n)`` entries."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return rng.standard_normal((n, n)) / math.sqrt(n)


# -- solver ---------------------------------------------------------------

@njit(cache=True)
def _hessenberg(a):
    """In-place Householder reduction of ``a`` to upper Hessenberg form."""
    n = a.shape[0]
    v = np.empty(n)
    for k in range(n - 2):
        m = n - k - 1
        nrm = 0.0
        for i in range(m):
            nrm += a[k + 1 + i, k] ** 2
        nrm = math.sqrt(nrm)
        if nrm == 0.0:
            continue
        x0 = a[k + 1, k]
        alpha = -nrm if x0 >= 0 else nrm
        for i in range(m):
            v[i] = a[k + 1 + i, k]
        v[0] -= alpha
        vn = 0.0
        for i in range(m):
            vn += v[i] * v[i]
        if vn == 0.0:
            continue
        beta = 2.0 / vn
        # left: rows k+1.., columns k..
        for j in range(k, n):
            s = 0.0
            for i in range(m):
                s += v[i] * a[k + 1 + i, j]
            s *= beta
            for i in range(m):
                a[k + 1 + i, j] -= s * v[i]
        # right: all rows, columns k+1..
        for r in range(n):
            s = 0.0
            for i in range(m):
                s += a[r, k + 1 + i] * v[i]
            s *= beta
            for i in range(m):
                a[r, k + 1 + i] -= s * v[i]
        a[k + 1, k] = alpha
        for i in range(1, m):
            a[k + 1 + i, k] = 0.0


@njit(cache=True)
def _sign(a, b):
    return abs(a) if b >= 0.0 else -abs(a)


@njit(cache=True)
def _hqr(h, wr, wi, defl_tol, max_iter):
    """Francis double-shift QR on a Hessenberg matrix (1-based copy inside).

    Returns the total iteration count, or -1 if ``max_iter`` was exceeded.
    """
    n = h.shape[0]
    a = np.zeros((n + 1, n + 1))
    for i in range(n):
        for j in range(n):
            a[i + 1, j + 1] = h[i, j]
    anorm = 0.0
    for i in range(1, n + 1):
        for j in range(max(i - 1, 1), n + 1):
            anorm += abs(a[i, j])
    nn = n
    t = 0.0
    total = 0
    p = q = r = s = w = x = y = z = 0.0
    while nn >= 1:
        its = 0
        while True:
            l = 1
            for ll in range(nn, 1, -1):
                s = abs(a[ll - 1, ll - 1]) + abs(a[ll, ll])
                if s == 0.0:
                    s = anorm
                if abs(a[ll, ll - 1]) <= defl_tol * s:
                    a[ll, ll - 1] = 0.0
                    l = ll
                    break
            x = a[nn, nn]
            if l == nn:
                wr[nn - 1] = x + t
                wi[nn - 1] = 0.0
                nn -= 1
                break
            y = a[nn - 1, nn - 1]
            w = a[nn, nn - 1] * a[nn - 1, nn]
            if l == nn - 1:
                p = 0.5 * (y - x)
                q = p * p + w
                z = math.sqrt(abs(q))
                x += t
                if q >= 0.0:
                    z = p + _sign(z, p)
                    wr[nn - 2] = x + z
                    wr[nn - 1] = x + z
                    if z != 0.0:
                        wr[nn - 1] = x - w / z
                    wi[nn - 2] = 0.0
                    wi[nn - 1] = 0.0
                else:
                    wr[nn - 2] = x + p
                    wr[nn - 1] = x + p
                    wi[nn - 2] = z
                    wi[nn - 1] = -z
                nn -= 2
                break
            if total >= max_iter:
                return -1
            if its > 0 and its % 10 == 0:
                # exceptional shift; the scale varies between attempts so a
                # block with a +-symmetric spectrum cannot cycle on it
                t += x
                for i in range(1, nn + 1):
                    a[i, i] -= x
                s = abs(a[nn, nn - 1]) + abs(a[nn - 1, nn - 2])
                x = 0.75 * s * (1.0 + 0.37 * (its // 10 - 1))
                y = x
                w = -0.4375 * s * s
            its += 1
            total += 1
            m = nn - 2
            while m >= l:
                z = a[m, m]
                r = x - z
                s = y - z
                p = (r * s - w) / a[m + 1, m] + a[m, m + 1]
                q = a[m + 1, m + 1] - z - r - s
                r = a[m + 2, m + 1]
                s = abs(p) + abs(q) + abs(r)
                p /= s
                q /= s
                r /= s
                if m == l:
                    break
                u = abs(a[m, m - 1]) * (abs(q) + abs(r))
                v = abs(p) * (abs(a[m - 1, m - 1]) + abs(z) + abs(a[m + 1, m + 1]))
                if u + v == v:
                    break
                m -= 1
            for i in range(m + 2, nn + 1):
                a[i, i - 2] = 0.0
                if i != m + 2:
                    a[i, i - 3] = 0.0
            for k in range(m, nn):
                if k != m:
                    p = a[k, k - 1]
                    q = a[k + 1, k - 1]
                    r = 0.0
                    if k != nn - 1:
                        r = a[k + 2, k - 1]
                    x = abs(p) + abs(q) + abs(r)
                    if x != 0.0:
                        p /= x
                        q /= x
                        r /= x
                s = _sign(math.sqrt(p * p + q * q + r * r), p)
                if s != 0.0:
                    if k == m:
                        if l != m:
                            a[k, k - 1] = -a[k, k - 1]
                    else:
                        a[k, k - 1] = -s * x
                    p += s
                    x = p / s
                    y = q / s
                    z = r / s
                    q /= p
                    r /= p
                    for j in range(k, nn + 1):
                        p = a[k, j] + q * a[k + 1, j]
                        if k != nn - 1:
                            p += r * a[k + 2, j]
                            a[k + 2, j] -= p * z
                        a[k + 1, j] -= p * y
                        a[k, j] -= p * x
                    mmin = nn if nn < k + 3 else k + 3
                    for i in range(l, mmin + 1):
                        p = x * a[i, k] + y * a[i, k + 1]
                        if k != nn - 1:
                            p += z * a[i, k + 2]
                            a[i, k + 2] -= p * r
                        a[i, k + 1] -= p * q
                        a[i, k] -= p
            if l >= nn - 1:
                break
    return total


@njit(cache=True)
def _eig_kernel(m, wr, wi, defl_tol):
    h = m.copy()
    _hessenberg(h)
    return _hqr(h, wr, wi, defl_tol, 40 * m.shape[0])


@njit(cache=True)
def _count_real_kernel(wr, wi, rel_tol):
    """Realness count with parity repair (see :func:`count_real`)."""
    n = wr.size
    rad = 0.0
    for i in range(n):
        rad = max(rad, math.hypot(wr[i], wi[i]))
    tol = rel_tol * rad
    kk = 0
    for i in range(n):
        if abs(wi[i]) <= tol:
            kk += 1
    if (n - kk) % 2 == 0:
        return kk
    # reclassify the eigenvalue whose |Im| is closest to tol
    best = np.inf
    flip_to_real = False
    for i in range(n):
        d = abs(abs(wi[i]) - tol)
        if d < best:
            best = d
            flip_to_real = abs(wi[i]) > tol
    return kk + 1 if flip_to_real else kk - 1


@njit(cache=True)
def _batch_counts(mats, defl_tol, rel_tol, out):
    n = mats.shape[1]
    wr = np.empty(n)
    wi = np.empty(n)
    for b in range(mats.shape[0]):
        it = _eig_kernel(mats[b], wr, wi, defl_tol)
        if it < 0:
            return b
        out[b] = _count_real_kernel(wr, wi, rel_tol)
    return -1


def _residual(matrix: np.ndarray, z: np.ndarray) -> float:
    # backward-error proxy from the first two power sums
    scale = max(np.abs(matrix).sum(), 1.0)
    r1 = abs(z.sum().real - np.trace(matrix)) / scale
    r2 = abs((z * z).sum().real - np.trace(matrix @ matrix)) / scale ** 2
    return float(max(r1, r2))


def eigenvalues(matrix, deflation_tol: float = DEFLATION_TOL) -> Spectrum:
    """All eigenvalues of a real square matrix.

    Raises
    ------
    ConvergenceError
        If the QR iteration exceeds ``40 n`` sweeps.
    """
    m = np.array(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("matrix must be square")
    n = m.shape[0]
    if n > MAX_N:
        raise ValueError(f"n={n} exceeds the desk-scale guard ({MAX_N})")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    wr = np.empty(n)
    wi = np.empty(n)
    if n and _eig_kernel(m, wr, wi, deflation_tol) < 0:
        raise ConvergenceError(f"QR iteration did not converge (n={n})")
    z = wr + 1j * wi
    return Spectrum(z, _residual(m, z) if n else 0.0)


def count_real(spectrum: Spectrum, tol: float | None = None) -> int:
    """Number of real eigenvalues with parity repair.

    Eigenvalues with ``|Im| <= tol`` count as real (default ``tol`` is
    ``1e-8`` times the spectral radius).  If the count has the wrong parity
    the eigenvalue whose ``|Im|`` lies closest to ``tol`` is reclassified.
    """
    z = np.asarray(spectrum.eigenvalues, dtype=complex)
    if z.size == 0:
        return 0
    if tol is None:
        return int(_count_real_kernel(z.real.copy(), z.imag.copy(), REAL_TOL))
    rad = float(np.abs(z).max())
    rel = tol / rad if rad > 0 else 0.0
    return int(_count_real_kernel(z.real.copy(), z.imag.copy(), rel))


# -- Monte Carlo estimates -------------------------------------------------

@dataclass
class RealCountPMF:
    n: int
    counts: dict = field(default_factory=dict)
    trials: int = 0

    def probability(self, k: int) -> float:
        return self.counts.get(k, 0) / self.trials if self.trials else 0.0

    def stderr(self, k: int) -> float:
        p = self.probability(k)
        return math.sqrt(p * (1.0 - p) / self.trials) if self.trials else 0.0

    def mean(self) -> float:
        return sum(k * c for k, c in self.counts.items()) / self.trials

    def mean_stderr(self) -> float:
        m = self.mean()
        var = sum(c * (k - m) ** 2 for k, c in self.counts.items()) / self.trials
        return math.sqrt(var / self.trials)

    def merge(self, other: "RealCountPMF") -> "RealCountPMF":
        if other.n != self.n:
            raise ValueError("cannot merge pmfs of different n")
        c = dict(self.counts)
        for k, v in other.counts.items():
            c[k] = c.get(k, 0) + v
        return RealCountPMF(self.n, dict(sorted(c.items())), self.trials + other.trials)

    def rows(self):
        for k in sorted(self.counts):
            yield k, self.counts[k], self.probability(k), self.stderr(k)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("k,count,probability,stderr\n")
            for k, c, p, se in self.rows():
                fh.write(f"{k},{c},{p!r},{se!r}\n")


def _chunk_counts(n: int, size: int, seed: int, chunk: int) -> np.ndarray:
    rng = rng_stream(seed, STREAM_ORACLE, chunk)
    mats = rng.standard_normal((size, n, n)) / math.sqrt(n)
    out = np.empty(size, dtype=np.int64)
    bad = _batch_counts(mats, DEFLATION_TOL, REAL_TOL, out)
    if bad >= 0:
        raise ConvergenceError(f"QR iteration did not converge (chunk {chunk}, trial {bad})")
    return out


def estimate_pnk(n: int, trials: int, seed: int = 0) -> RealCountPMF:
    """Empirical distribution of the number of real eigenvalues.

    Trials are generated in chunks of ``CHUNK`` matrices, chunk ``c`` drawing
    from its own derived stream, so the result does not depend on how chunks
    are scheduled.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    pmf = RealCountPMF(n)
    for c, start in enumerate(range(0, trials, CHUNK)):
        ks = _chunk_counts(n, min(CHUNK, trials - start), seed, c)
        vals, cnt = np.unique(ks, return_counts=True)
        pmf = pmf.merge(RealCountPMF(n, {int(a): int(b) for a, b in zip(vals, cnt)}, int(ks.size)))
    return pmf


def conditional_ensemble(n: int, k: int, trials_cap: int, seed: int = 0,
                         max_samples: int | None = None, min_accept: int = 1) -> list[Spectrum]:
    """Spectra of random matrices that have exactly ``k`` real eigenvalues.

    Stops after ``trials_cap`` matrices or once ``max_samples`` spectra were
    accepted.  Raises :class:`InfeasibleOracleError` when fewer than
    ``min_accept`` matrices qualify.
    """
    check_parity(n, k)
    accepted: list[Spectrum] = []
    done = 0
    c = 0
    while done < trials_cap:
        size = min(CHUNK, trials_cap - done)
        rng = rng_stream(seed, STREAM_ORACLE, 1 << 20, c)
        mats = rng.standard_normal((size, n, n)) / math.sqrt(n)
        ks = np.empty(size, dtype=np.int64)
        if _batch_counts(mats, DEFLATION_TOL, REAL_TOL, ks) >= 0:
            raise ConvergenceError("QR iteration did not converge")
        for b in np.flatnonzero(ks == k):
            sp = eigenvalues(mats[b])
            accepted.append(_snap(sp, k))
            if max_samples is not None and len(accepted) >= max_samples:
                return accepted
        done += size
        c += 1
    if len(accepted) < min_accept:
        raise InfeasibleOracleError(
            f"only {len(accepted)} of {trials_cap} matrices have k={k} real eigenvalues "
            f"(n={n}); use the Metropolis-Hastings sampler instead")
    return accepted


def _snap(sp: Spectrum, k: int) -> Spectrum:
    """Zero the imaginary parts of the ``k`` eigenvalues classified real."""
    z = sp.eigenvalues.copy()
    order = np.argsort(np.abs(z.imag), kind="stable")
    z[order[:k]] = z[order[:k]].real
    return Spectrum(z, sp.residual)


def save_spectra_jsonl(path, spectra) -> None:
    with open(Path(path), "w") as fh:
        for s in spectra:
            fh.write(json.dumps(s.to_dict()) + "\n")


def load_spectra_jsonl(path) -> list[Spectrum]:
    with open(Path(path)) as fh:
        return [Spectrum.from_dict(json.loads(line)) for line in fh if line.strip()]
