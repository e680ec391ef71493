"""Discrete rate functional, its constrained minimum, and related diagnostics.

For a probability measure ``mu`` on the plane

    I[mu] = 1/2 (int |z|^2 dmu - int int log|z - w| dmu dmu) - 3/8,

which vanishes at the circular law and equals ``log(2)/4`` at the semicircle
law on ``[-sqrt 2, sqrt 2]``.  On a discrete measure the double integral runs
over ordered pairs ``i != j``; the missing diagonal biases the value by
``O(log n / n)``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from numba import njit

from .core import (STREAM_GAS_INIT, EmpiricalMeasure, SpectrumError, k_for_alpha, rng_stream,
                   to_measure)

K_SHIFT = 3.0 / 8.0


class InconclusiveEstimateError(SpectrumError):
    """Relaxation stalled before reaching the gradient threshold."""


class QuadratureError(SpectrumError):
    """The y* bracket has no sign change."""


@dataclass
class RateReport:
    alpha: float
    rate_value: float
    self_energy_excluded: bool = True
    n_atoms: int = 0
    stderr: float = 0.0
    details: dict = field(default_factory=dict)

    def csv_row(self) -> str:
        return f"{self.alpha!r},{self.rate_value!r},{self.stderr!r},{self.n_atoms}"

    def to_dict(self) -> dict:
        return asdict(self)


def write_rate_csv(path, reports) -> None:
    with open(path, "w") as fh:
        fh.write("alpha,I,stderr,n_atoms\n")
        for r in reports:
            fh.write(r.csv_row() + "\n")


@njit(cache=True)
def _log_pair_sum(re, im, w):
    """``sum_{i<j} w_i w_j log|z_i - z_j|`` (compensated) and the min distance^2."""
    n = re.size
    s = 0.0
    c = 0.0
    m2 = np.inf
    for i in range(n):
        acc = 0.0
        for j in range(i + 1, n):
            dx = re[i] - re[j]
            dy = im[i] - im[j]
            d2 = dx * dx + dy * dy
            if d2 < m2:
                m2 = d2
            acc += w[j] * math.log(d2)
        v = 0.5 * w[i] * acc
        t = s + v
        if abs(s) >= abs(v):
            c += (s - t) + v
        else:
            c += (v - t) + s
        s = t
    return s + c, m2


def rate_function(measure: EmpiricalMeasure) -> RateReport:
    """``I[mu]`` of a discrete measure, weights renormalized to mass one.

    Raises
    ------
    SpectrumError
        Fewer than two atoms, or two coincident atoms.
    """
    if len(measure) < 2:
        raise SpectrumError("rate function needs at least two atoms")
    mu = measure.normalized()
    z = mu.points
    w = np.asarray(mu.weights, dtype=float)
    pair, m2 = _log_pair_sum(np.ascontiguousarray(z.real), np.ascontiguousarray(z.imag), w)
    if not m2 > 0.0:
        raise SpectrumError("coincident atoms: the discrete log energy is undefined")
    second = math.fsum(w * np.abs(z) ** 2)
    # ordered pairs i != j: twice the unordered sum
    value = 0.5 * (second - 2.0 * pair) - K_SHIFT
    return RateReport(alpha=float(mu.real_mass), rate_value=float(value), self_energy_excluded=True,
                      n_atoms=len(mu), details={"second_moment": second, "log_energy": -2.0 * pair})


# -- constrained minimum --------------------------------------------------

def _relaxed_rate(alpha: float, n: int, seed: int, grad_tol: float, flow_steps: int, accept_grad: float):
    from .gasdyn import initial_configuration, relax_to_minimum

    k = k_for_alpha(alpha, n)
    c0 = initial_configuration(n, k, rng_stream(seed, STREAM_GAS_INIT, n))
    cfg, stats = relax_to_minimum(c0, grad_tol=grad_tol, flow_steps=flow_steps)
    g = stats["final_grad_norm"]
    if not g <= accept_grad:
        raise InconclusiveEstimateError(
            f"relaxation at n={n}, k={k} stalled with max|grad| = {g:.3g} > {accept_grad:g}")
    return rate_function(to_measure(cfg)), cfg, stats


def minimum_estimate(alpha: float, n_particles: int, seed: int = 0, grad_tol: float = 1e-7,
                     flow_steps: int = 2000, accept_grad: float = 1e-5,
                     return_config: bool = False):
    """Estimate ``I[mu_alpha]`` by relaxing the gas at ``n`` and ``n/2`` particles.

    The discrete values carry a self-energy bias ``c log(n) / n``; fitting
    ``c`` to the two sizes gives the extrapolated ``rate_value``, and the size
    of the applied correction is reported as ``stderr``.

    Raises
    ------
    InconclusiveEstimateError
        If either relaxation ends with ``max |grad Phi| > accept_grad``.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    n = int(n_particles)
    m = n // 2
    if m < 2:
        raise ValueError("need at least 4 particles")
    rep_n, cfg, st_n = _relaxed_rate(alpha, n, seed, grad_tol, flow_steps, accept_grad)
    rep_m, _, st_m = _relaxed_rate(alpha, m, seed, grad_tol, flow_steps, accept_grad)
    i_n, i_m = rep_n.rate_value, rep_m.rate_value
    a_n, a_m = math.log(n) / n, math.log(m) / m
    c = (i_n - i_m) / (a_n - a_m)
    extrap = i_n - c * a_n
    report = RateReport(alpha=rep_n.alpha, rate_value=extrap, self_energy_excluded=True, n_atoms=n,
                        stderr=abs(extrap - i_n),
                        details={"I_n": i_n, "I_half": i_m, "n_half": m, "bias_coefficient": c,
                                 "grad_norm_n": st_n["final_grad_norm"],
                                 "grad_norm_half": st_m["final_grad_norm"]})
    return (report, cfg) if return_config else report


def log_pnk_asymptotic(alpha: float, n: int, rate_value: float, stderr: float | None = None):
    """Leading-order ``log p^n_k ~ -n^2 I[mu_alpha]``.

    With ``stderr`` given, returns ``(value, n^2 * stderr)``.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    v = -float(n) ** 2 * rate_value
    if stderr is None:
        return v
    return v, float(n) ** 2 * stderr


# -- y* --------------------------------------------------------------------

def semicircle_inverse_distance(y, quadrature_points: int = 200):
    """``int dmu_sc(x) / (x^2 + y^2)`` for the semicircle law on ``[-sqrt 2, sqrt 2]``.

    With ``x = sqrt(2) sin(t)`` the weight becomes ``(2/pi) cos^2 t`` and the
    integrand is analytic on ``[-pi/2, pi/2]``, so Gauss-Legendre converges
    geometrically.
    """
    t, wt = np.polynomial.legendre.leggauss(quadrature_points)
    t = 0.5 * math.pi * t
    wt = 0.5 * math.pi * wt
    y = np.asarray(y, dtype=float)
    f = (2.0 / math.pi) * np.cos(t) ** 2 / (2.0 * np.sin(t) ** 2 + y[..., None] ** 2)
    return f @ wt


def solve_ystar(quadrature_points: int = 200, bracket=(0.01, 2.0), xtol: float = 1e-13,
                rhs: float = 2.0) -> float:
    """Height ``y*`` where ``int dmu_sc / (x^2 + y^2) = rhs``, by bisection.

    The default ``rhs=2`` gives the reference root 1/2.  A
    lone pair over the semicircle in the gas actually balances at ``rhs=1``
    (root sqrt(2/3)), since its confinement force is ``y`` rather than ``2y``.
    """
    from scipy.optimize import bisect

    if quadrature_points < 100:
        raise ValueError("quadrature_points must be >= 100")

    def g(y):
        return float(semicircle_inverse_distance(y, quadrature_points)) - rhs

    lo, hi = bracket
    if g(lo) * g(hi) > 0:
        raise QuadratureError(f"no sign change on [{lo}, {hi}]")
    return float(bisect(g, lo, hi, xtol=xtol, maxiter=200))


# -- stationarity ------------------------------------------------------------

@dataclass
class StationarityResidual:
    probes: np.ndarray
    residuals: np.ndarray
    in_support: np.ndarray
    constants: dict

    @property
    def spread(self) -> float:
        r = self.residuals[self.in_support]
        return float(r.max() - r.min()) if r.size else 0.0


@njit(cache=True)
def _potential(pre, pim, re, im, w):
    """``|z|^2/2 - sum_j w_j log|z - z_j|``, skipping atoms at the probe itself."""
    out = np.empty(pre.size)
    for p in range(pre.size):
        acc = 0.0
        for j in range(re.size):
            dx = pre[p] - re[j]
            dy = pim[p] - im[j]
            d2 = dx * dx + dy * dy
            if d2 > 0.0:
                acc += w[j] * math.log(d2)
        out[p] = 0.5 * (pre[p] ** 2 + pim[p] ** 2) - 0.5 * acc
    return out


def effective_potential(measure: EmpiricalMeasure, probes) -> np.ndarray:
    """``W(z) = |z|^2/2 - int log|z - w| dmu(w)`` for the normalized measure."""
    mu = measure.normalized()
    z = np.atleast_1d(np.asarray(probes, dtype=complex))
    return _potential(np.ascontiguousarray(z.real), np.ascontiguousarray(z.imag),
                      np.ascontiguousarray(mu.points.real), np.ascontiguousarray(mu.points.imag),
                      np.asarray(mu.weights, dtype=float))


def _support_mask(mu: EmpiricalMeasure, z: np.ndarray) -> np.ndarray:
    mask = np.zeros(z.size, dtype=bool)
    on = z.imag == 0
    real_atoms = mu.points[mu.on_axis].real
    if real_atoms.size:
        mask[on] = (z[on].real >= real_atoms.min()) & (z[on].real <= real_atoms.max())
    off_atoms = mu.points[~mu.on_axis]
    if off_atoms.size >= 2 and (~on).any():
        from scipy.spatial import cKDTree

        pts = np.column_stack([off_atoms.real, off_atoms.imag])
        tree = cKDTree(pts)
        nn = tree.query(pts, k=2)[0][:, 1]
        reach = 2.0 * float(np.median(nn))
        d = tree.query(np.column_stack([z[~on].real, z[~on].imag]))[0]
        mask[~on] = d <= reach
    return mask


def stationarity_residual(measure: EmpiricalMeasure, alpha: float, probe_points) -> StationarityResidual:
    """Residuals of the first-order conditions for the constrained minimum.

    At the minimizer the effective potential ``W`` is constant on the real
    support and, separately, on the complex support (the two constants are the
    Lagrange multipliers of the mass constraint).  Real probes (zero imaginary
    part) test the first condition and off-axis probes the second; each group's
    constant is fitted by least squares (its mean) and subtracted.  Probes
    outside the respective support are flagged in ``in_support`` and left
    out of both the fit and ``spread``.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    z = np.atleast_1d(np.asarray(probe_points, dtype=complex))
    z = np.where(z.imag < 0, z.conj(), z)
    w = effective_potential(measure, z)
    inside = _support_mask(measure.normalized(), z)
    res = np.full(z.size, np.nan)
    consts = {}
    for name, grp in (("real", z.imag == 0), ("complex", z.imag != 0)):
        use = grp & inside
        if use.any():
            c = float(w[use].mean())
            consts[name] = c
            res[grp] = w[grp] - c
    return StationarityResidual(z, res, inside, consts)


def default_probes(measure: EmpiricalMeasure, max_probes: int = 400) -> np.ndarray:
    """Midpoints between consecutive real atoms plus the upper off-axis atoms.

    Probes within two spacings of either end of the real support (and the
    outermost complex atoms) are dropped, which keeps the edge singularity of
    the discrete potential out of the comparison.
    """
    mu = measure.normalized()
    xr = np.sort(mu.points[mu.on_axis].real)
    out = []
    if xr.size >= 6:
        mids = 0.5 * (xr[2:-3] + xr[3:-2])
        out.append(mids.astype(complex))
    up = mu.points[mu.points.imag > 0]
    if up.size:
        # drop the outer ring: points with the largest distance to the centroid
        c = up.mean()
        r = np.abs(up - c)
        out.append(up[r <= np.quantile(r, 0.9)])
    z = np.concatenate(out) if out else np.empty(0, dtype=complex)
    if z.size > max_probes:
        z = z[np.linspace(0, z.size - 1, max_probes).round().astype(int)]
    return z


# -- next-to-leading order ---------------------------------------------------

@dataclass(frozen=True)
class ExpansionInputs:
    kappa1: float
    kappa2: float
    entropy_real: float
    entropy_complex: float

    def __post_init__(self):
        for name in ("entropy_real", "entropy_complex"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


def renormalized_expansion(n: int, alpha: float, rate_value: float, inputs: ExpansionInputs) -> float:
    """Four-term large-``n`` expansion of the conditioned energy.

    ``n^2 I - (1+alpha)/2 n log n + n[(1-alpha) kappa2/(2 pi) + alpha kappa1/pi]
    - n[(1-alpha) S_C + alpha S_R]`` where ``S = int rho log rho`` are the
    entropies of the normalized complex and real densities.  ``kappa1`` and
    ``kappa2`` are caller-supplied constants.
    """
    a = alpha
    return (n * n * rate_value
            - 0.5 * (1.0 + a) * n * math.log(n)
            + n * ((1.0 - a) * inputs.kappa2 / (2.0 * math.pi) + a * inputs.kappa1 / math.pi)
            - n * ((1.0 - a) * inputs.entropy_complex + a * inputs.entropy_real))


def histogram_entropy(samples, bins=30, range=None) -> float:  # noqa: A002
    """``int rho log rho`` of a 1d or 2d sample, from a normalized histogram.

    ``samples`` is a 1d array (real density) or an ``(m, 2)`` array / complex
    array (planar density).  Empty bins contribute zero.  ``range`` is passed
    to numpy; the default spans the sample, which slightly overstates the
    density of a sample drawn from a known support.
    """
    s = np.asarray(samples)
    if np.iscomplexobj(s):
        s = np.column_stack([s.real, s.imag])
    if s.ndim == 1:
        rho, edges = np.histogram(s, bins=bins, range=range, density=True)
        vol = np.diff(edges)
    else:
        rho, ex, ey = np.histogram2d(s[:, 0], s[:, 1], bins=bins, range=range, density=True)
        vol = np.outer(np.diff(ex), np.diff(ey))
    pos = rho > 0
    return float(np.sum(rho[pos] * np.log(rho[pos]) * vol[pos]))


# -- reference discretizations ---------------------------------------------

def semicircle_quantiles(m: int) -> np.ndarray:
    """``m`` atoms at the mid-quantiles ``(i + 1/2)/m`` of the semicircle law."""
    from scipy.optimize import brentq

    r = math.sqrt(2.0)

    def cdf(x):
        return 0.5 + (x * math.sqrt(max(2.0 - x * x, 0.0)) + 2.0 * math.asin(x / r)) / (2.0 * math.pi)

    q = (np.arange(m) + 0.5) / m
    return np.array([brentq(lambda x, p=p: cdf(x) - p, -r, r, xtol=1e-15) for p in q])


def unit_disk_points(m: int) -> np.ndarray:
    """About ``m`` conjugate-symmetric points of a uniform unit-disk lattice.

    Rings of equal width ``1/R`` (``R = sqrt(m / pi)``) carry a count
    proportional to their area, rounded to an even number, with angles
    ``(i + 1/2) 2 pi / m_j``; the upper half is built and then mirrored, so the
    point set is exactly closed under conjugation and never touches the axis.
    The last ring absorbs the rounding so that the total equals ``m`` (``m``
    even).
    """
    if m % 2:
        raise ValueError("m must be even")
    rings = max(1, int(round(math.sqrt(m / math.pi))))
    area = np.array([(2 * j + 1) / rings ** 2 for j in range(rings)])
    counts = np.maximum(2, 2 * np.round(0.5 * m * area)).astype(int)
    counts[-1] += m - counts.sum()
    ups = []
    for j, mj in enumerate(counts):
        r = math.sqrt((j * j + (j + 1) ** 2) / 2.0) / rings
        th = (np.arange(mj // 2) + 0.5) * 2.0 * math.pi / mj
        ups.append(r * np.exp(1j * th))
    up = np.concatenate(ups)
    return np.concatenate([up, up.conj()])


def measure_from_points(z) -> EmpiricalMeasure:
    """Equal-weight measure on the given (conjugate-closed) points."""
    z = np.asarray(z, dtype=complex)
    return EmpiricalMeasure(z, np.full(z.size, 1.0 / z.size))
