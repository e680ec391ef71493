"""Energy of the two-phase log-gas and its gradient.

The full system has ``n = k + 2l`` particles; only the ``k`` reals and the
``l`` upper points are stored.  With ``V(a, b) = -log|a - b|`` and

    U(x + iy) = x^2/2 - [y != 0] (y^2/2 + log(erfc(|y| sqrt(2n))) / (2n))

the energy is ``Phi = (1/n) sum_{unordered pairs} V + sum_i U(lambda_i)`` with
the sums over all ``n`` particles.  In the half representation the pair sum
splits into real-real pairs, real-upper pairs (twice, for the mirror),
upper-upper pairs (four mirror combinations, two distinct distances) and each
upper point against its own conjugate (distance ``2y``).

Gradients are taken with respect to the stored coordinates, so for an upper
point they include the motion of its implicit conjugate.  With that
convention the Langevin dynamics ``dq = -grad Phi dt + sigma/sqrt(n) dB`` has
stationary law ``exp(-2n Phi / sigma^2)``, which for ``sigma^2 = 2`` is the
joint eigenvalue density of the conditioned ensemble.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import CollisionError, SpectralConfiguration
from .special import erfcx_scalar, log_erfc

_SQRT_PI = math.sqrt(math.pi)


# gradient kernel only (the energy kernel's compensated sum must not be
# reassociated); no nnan/ninf since inf seeds the running minimum
_FAST = {"reassoc", "contract", "arcp", "nsz"}


@dataclass(frozen=True)
class EnergyBreakdown:
    interaction: float
    confinement: float
    total: float


@njit(cache=True)
def _two_sum(s, c, v):
    # Neumaier compensated accumulation
    t = s + v
    if abs(s) >= abs(v):
        c += (s - t) + v
    else:
        c += (v - t) + s
    return t, c


@njit(cache=True)
def _flush(s, c, prod, w):
    return _two_sum(s, c, w * math.log(prod))


@njit(cache=True)
def interaction_energy_pass(xr, xu, yu):
    """Sum of ``-log|a - b|`` over unordered pairs of the full system.

    Squared distances are multiplied in blocks of at most eight (flushed early
    if the running product leaves ``[1e-200, 1e200]``) and one logarithm per
    block is added to a Neumaier-compensated sum, in a fixed loop order.
    Returns ``(energy, min squared distance)``.
    """
    k = xr.size
    l = xu.size
    s = 0.0
    c = 0.0
    minsep2 = np.inf
    # weight -1/2 on squared distances: real-real pairs and self pairs (2y)^2
    ph = 1.0
    nh = 0
    # weight -1: real-upper pairs (two mirror copies) and upper-upper pairs
    pf = 1.0
    nf = 0
    for a in range(k):
        xa = xr[a]
        for b in range(a + 1, k):
            d = xa - xr[b]
            d2 = d * d
            minsep2 = min(minsep2, d2)
            ph *= d2
            nh += 1
            if nh == 8 or ph < 1e-200 or ph > 1e200:
                s, c = _flush(s, c, ph, -0.5)
                ph = 1.0
                nh = 0
        for b in range(l):
            dx = xa - xu[b]
            d2 = dx * dx + yu[b] * yu[b]
            minsep2 = min(minsep2, d2)
            pf *= d2
            nf += 1
            if nf == 8 or pf < 1e-200 or pf > 1e200:
                s, c = _flush(s, c, pf, -1.0)
                pf = 1.0
                nf = 0
    for b in range(l):
        xb = xu[b]
        yb = yu[b]
        for q in range(b + 1, l):
            dx = xb - xu[q]
            dy1 = yb - yu[q]
            dy2 = yb + yu[q]
            d1 = dx * dx + dy1 * dy1
            minsep2 = min(minsep2, d1)
            pf *= d1 * (dx * dx + dy2 * dy2)
            nf += 2
            if nf >= 8 or pf < 1e-200 or pf > 1e200:
                s, c = _flush(s, c, pf, -1.0)
                pf = 1.0
                nf = 0
        ds = 4.0 * yb * yb
        minsep2 = min(minsep2, ds)
        ph *= ds
        nh += 1
        if nh == 8 or ph < 1e-200 or ph > 1e200:
            s, c = _flush(s, c, ph, -0.5)
            ph = 1.0
            nh = 0
    if nh:
        s, c = _flush(s, c, ph, -0.5)
    if nf:
        s, c = _flush(s, c, pf, -1.0)
    return s + c, minsep2


@njit(cache=True, fastmath=_FAST)
def interaction_grad_pass(xr, xu, yu, n, gr, gx, gy):
    """Interaction gradient (divided by ``n``) into ``gr, gx, gy``.

    Returns the minimum squared pair distance of the full system.
    """
    k = xr.size
    l = xu.size
    for a in range(k):
        gr[a] = 0.0
    for b in range(l):
        gx[b] = 0.0
        gy[b] = 0.0
    minsep2 = np.inf
    for a in range(k):
        xa = xr[a]
        acc = 0.0
        for b in range(a + 1, k):
            d = xa - xr[b]
            d2 = d * d
            minsep2 = min(minsep2, d2)
            f = d / d2
            acc -= f
            gr[b] += f
        # real-upper, twice for the mirror
        for b in range(l):
            dx = xa - xu[b]
            dy = yu[b]
            d2 = dx * dx + dy * dy
            minsep2 = min(minsep2, d2)
            f = 2.0 / d2
            acc -= f * dx
            gx[b] += f * dx
            gy[b] -= f * dy
        gr[a] += acc
    for b in range(l):
        xb = xu[b]
        yb = yu[b]
        ax = 0.0
        ay = 0.0
        for q in range(b + 1, l):
            dx = xb - xu[q]
            dy1 = yb - yu[q]
            dy2 = yb + yu[q]
            d1 = dx * dx + dy1 * dy1
            d2 = dx * dx + dy2 * dy2
            minsep2 = min(minsep2, d1)
            f1 = 2.0 / d1
            f2 = 2.0 / d2
            fx = (f1 + f2) * dx
            ax -= fx
            gx[q] += fx
            ay -= f1 * dy1 + f2 * dy2
            gy[q] += f1 * dy1 - f2 * dy2
        minsep2 = min(minsep2, 4.0 * yb * yb)
        gx[b] += ax
        gy[b] += ay - 1.0 / yb
    inv = 1.0 / n
    for a in range(k):
        gr[a] *= inv
    for b in range(l):
        gx[b] *= inv
        gy[b] *= inv
    return minsep2


@njit(cache=True)
def interaction_energy_grad_pass(xr, xu, yu, n, gr, gx, gy):
    """Both passes above in one sweep over the pairs.

    The energy is accumulated in exactly the order of
    :func:`interaction_energy_pass`, so the two give identical bits.
    Returns ``(energy, min squared distance)``.
    """
    k = xr.size
    l = xu.size
    for a in range(k):
        gr[a] = 0.0
    for b in range(l):
        gx[b] = 0.0
        gy[b] = 0.0
    s = 0.0
    c = 0.0
    minsep2 = np.inf
    ph = 1.0
    nh = 0
    pf = 1.0
    nf = 0
    for a in range(k):
        xa = xr[a]
        acc = 0.0
        for b in range(a + 1, k):
            d = xa - xr[b]
            d2 = d * d
            minsep2 = min(minsep2, d2)
            f = d / d2
            acc -= f
            gr[b] += f
            ph *= d2
            nh += 1
            if nh == 8 or ph < 1e-200 or ph > 1e200:
                s, c = _flush(s, c, ph, -0.5)
                ph = 1.0
                nh = 0
        for b in range(l):
            dx = xa - xu[b]
            dy = yu[b]
            d2 = dx * dx + dy * dy
            minsep2 = min(minsep2, d2)
            f = 2.0 / d2
            acc -= f * dx
            gx[b] += f * dx
            gy[b] -= f * dy
            pf *= d2
            nf += 1
            if nf == 8 or pf < 1e-200 or pf > 1e200:
                s, c = _flush(s, c, pf, -1.0)
                pf = 1.0
                nf = 0
        gr[a] += acc
    for b in range(l):
        xb = xu[b]
        yb = yu[b]
        ax = 0.0
        ay = 0.0
        for q in range(b + 1, l):
            dx = xb - xu[q]
            dy1 = yb - yu[q]
            dy2 = yb + yu[q]
            d1 = dx * dx + dy1 * dy1
            d2 = dx * dx + dy2 * dy2
            minsep2 = min(minsep2, d1)
            f1 = 2.0 / d1
            f2 = 2.0 / d2
            fx = (f1 + f2) * dx
            ax -= fx
            gx[q] += fx
            ay -= f1 * dy1 + f2 * dy2
            gy[q] += f1 * dy1 - f2 * dy2
            pf *= d1 * d2
            nf += 2
            if nf >= 8 or pf < 1e-200 or pf > 1e200:
                s, c = _flush(s, c, pf, -1.0)
                pf = 1.0
                nf = 0
        ds = 4.0 * yb * yb
        minsep2 = min(minsep2, ds)
        gx[b] += ax
        gy[b] += ay - 1.0 / yb
        ph *= ds
        nh += 1
        if nh == 8 or ph < 1e-200 or ph > 1e200:
            s, c = _flush(s, c, ph, -0.5)
            ph = 1.0
            nh = 0
    if nh:
        s, c = _flush(s, c, ph, -0.5)
    if nf:
        s, c = _flush(s, c, pf, -1.0)
    inv = 1.0 / n
    for a in range(k):
        gr[a] *= inv
    for b in range(l):
        gx[b] *= inv
        gy[b] *= inv
    return s + c, minsep2


@njit(cache=True)
def closest_pair(xr, xu, yu):
    """Indices ``(i, j)`` of the closest pair (reals first, then uppers; ``i == j``
    is an upper point against its own conjugate) and their distance."""
    k = xr.size
    l = xu.size
    best = np.inf
    pi = -1
    pj = -1
    for a in range(k):
        for b in range(a + 1, k):
            d2 = (xr[a] - xr[b]) ** 2
            if d2 < best:
                best, pi, pj = d2, a, b
        for b in range(l):
            d2 = (xr[a] - xu[b]) ** 2 + yu[b] ** 2
            if d2 < best:
                best, pi, pj = d2, a, k + b
    for b in range(l):
        for q in range(b + 1, l):
            d2 = (xu[b] - xu[q]) ** 2 + (yu[b] - yu[q]) ** 2
            if d2 < best:
                best, pi, pj = d2, k + b, k + q
        d2 = 4.0 * yu[b] ** 2
        if d2 < best:
            best, pi, pj = d2, k + b, k + b
    return pi, pj, math.sqrt(best)


@njit(cache=True)
def confinement_pass(xr, xu, yu, n, want_energy, want_grad, gr, gx, gy):
    """Add the confinement gradient in place; return the confinement energy.

    One ``erfcx`` per upper point serves both the energy
    (``log erfc = log erfcx - t^2``) and the force.
    """
    s = 0.0
    c = 0.0
    rt = math.sqrt(2.0 * n)
    for a in range(xr.size):
        x = xr[a]
        if want_energy:
            s, c = _two_sum(s, c, 0.5 * x * x)
        if want_grad:
            gr[a] += x
    for b in range(xu.size):
        x = xu[b]
        y = yu[b]
        t = y * rt
        ex = erfcx_scalar(t)
        # the pair (z, conj z) contributes 2 U(z)
        if want_energy:
            s, c = _two_sum(s, c, x * x - y * y - (math.log(ex) - t * t) / n)
        if want_grad:
            gx[b] += 2.0 * x
            gy[b] += -2.0 * y + rt * (2.0 / _SQRT_PI) / (ex * n)
    return s + c


def _arrays(config: SpectralConfiguration):
    return (np.ascontiguousarray(config.reals), np.ascontiguousarray(config.xu),
            np.ascontiguousarray(config.yu))


def _raise_collision(config: SpectralConfiguration):
    i, j, sep = closest_pair(*_arrays(config))
    raise CollisionError(f"coincident particles {i} and {j} (separation {sep:.3g})", (i, j))


def confinement(point, n: int) -> float:
    """Single-particle confinement ``U`` at ``point = (x, y)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    x, y = float(point[0]), float(point[1])
    u = 0.5 * x * x
    if y != 0.0:
        u -= 0.5 * y * y + log_erfc(abs(y) * math.sqrt(2.0 * n)) / (2.0 * n)
    return u


def energy_arrays(xr, xu, yu, n):
    """``(interaction, confinement, min squared separation)`` on raw arrays."""
    inter, ms2 = interaction_energy_pass(xr, xu, yu)
    dummy = np.empty(0)
    conf = confinement_pass(xr, xu, yu, n, True, False, dummy, dummy, dummy)
    return inter / n, conf, ms2


def grad_arrays(xr, xu, yu, n, gr, gx, gy):
    """Fill the full gradient in place; return the min squared separation."""
    ms2 = interaction_grad_pass(xr, xu, yu, n, gr, gx, gy)
    confinement_pass(xr, xu, yu, n, False, True, gr, gx, gy)
    return ms2


def energy_grad_arrays(xr, xu, yu, n, gr, gx, gy):
    """Energy parts and gradient in one pass: ``(interaction, confinement, min sq. sep.)``."""
    inter, ms2 = interaction_energy_grad_pass(xr, xu, yu, n, gr, gx, gy)
    conf = confinement_pass(xr, xu, yu, n, True, True, gr, gx, gy)
    return inter / n, conf, ms2


def total_energy(config: SpectralConfiguration) -> EnergyBreakdown:
    """Energy ``Phi`` of the full (conjugate-closed) system.

    Raises :class:`CollisionError` on coincident particles.
    """
    inter, conf, ms2 = energy_arrays(*_arrays(config), config.n)
    if config.n >= 2 and ms2 == 0.0:
        _raise_collision(config)
    return EnergyBreakdown(inter, conf, inter + conf)


def grad_energy(config: SpectralConfiguration) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of ``Phi`` with respect to the stored coordinates.

    Returns
    -------
    g_reals : ndarray, shape (k,)
        ``dPhi/dx`` for each real particle (reals feel no y-force).
    g_uppers : ndarray, shape (l, 2)
        ``(dPhi/dx, dPhi/dy)`` for each upper particle, conjugate included.
    """
    gr = np.empty(config.k)
    gx = np.empty(config.l)
    gy = np.empty(config.l)
    ms2 = grad_arrays(*_arrays(config), config.n, gr, gx, gy)
    if config.n >= 2 and ms2 == 0.0:
        _raise_collision(config)
    return gr, np.column_stack([gx, gy])


def min_separation(config: SpectralConfiguration) -> float:
    """Smallest distance between two particles of the full system."""
    if config.n < 2:
        raise ValueError("need at least two particles")
    return closest_pair(*_arrays(config))[2]
