"""Observables of simulated spectra: histograms, supports, gaps.

An *ensemble* is anything that yields configurations: a single
:class:`SpectralConfiguration`, a sequence of them, MCMC
:class:`~realginibre.mcmc.ChainSamples`, a gas
:class:`~realginibre.gasdyn.Trajectory` (its final 20% is used), or matrix
oracle spectra.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import SpectralConfiguration, SpectrumError

SQRT2 = math.sqrt(2.0)


@dataclass
class _Snap:
    reals: np.ndarray
    uppers: np.ndarray  # complex, Im > 0
    n: int


def _spectrum_snap(sp) -> _Snap:
    from .matrix_oracle import count_real

    z = np.asarray(sp.eigenvalues, dtype=complex)
    k = count_real(sp)
    order = np.argsort(np.abs(z.imag), kind="stable")
    rest = z[order[k:]]
    return _Snap(np.sort(z[order[:k]].real), rest[rest.imag > 0], z.size)


def snapshots(ensemble) -> list[_Snap]:
    """Normalize the supported ensemble types to a list of snapshots."""
    from .gasdyn import Trajectory
    from .matrix_oracle import Spectrum
    from .mcmc import ChainSamples

    if isinstance(ensemble, SpectralConfiguration):
        ensemble = [ensemble]
    elif isinstance(ensemble, Spectrum):
        ensemble = [ensemble]
    elif isinstance(ensemble, Trajectory):
        ensemble = ensemble.tail(0.2)
    if isinstance(ensemble, ChainSamples):
        n = ensemble.reals.shape[1] + 2 * ensemble.xu.shape[1]
        return [_Snap(ensemble.reals[i], ensemble.xu[i] + 1j * ensemble.yu[i], n)
                for i in range(len(ensemble))]
    out = []
    for item in ensemble:
        if isinstance(item, SpectralConfiguration):
            out.append(_Snap(np.asarray(item.reals), item.xu + 1j * item.yu, item.n))
        elif isinstance(item, Spectrum):
            out.append(_spectrum_snap(item))
        else:
            raise TypeError(f"unsupported ensemble item {type(item).__name__}")
    if not out:
        raise SpectrumError("empty ensemble")
    return out


# -- real axis ---------------------------------------------------------------

@dataclass
class Histogram:
    bin_left: np.ndarray
    bin_right: np.ndarray
    density: np.ndarray

    @property
    def mass(self) -> float:
        return float(np.sum(self.density * (self.bin_right - self.bin_left)))

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("bin_left,bin_right,density\n")
            for a, b, d in zip(self.bin_left, self.bin_right, self.density):
                fh.write(f"{a!r},{b!r},{d!r}\n")


def real_histogram(ensemble, bins=40, range=None) -> Histogram:  # noqa: A002
    """Histogram of real particles normalized by the total particle count.

    Its integral is the on-axis mass fraction ``sum k / sum n`` over the
    ensemble.  With no real particles the table is empty.
    """
    snaps = snapshots(ensemble)
    reals = np.concatenate([s.reals for s in snaps])
    total = sum(s.n for s in snaps)
    if reals.size == 0:
        e = np.empty(0)
        return Histogram(e, e, e)
    counts, edges = np.histogram(reals, bins=bins, range=range)
    if counts.sum() != reals.size:
        raise ValueError("histogram range excludes some real particles")
    dens = counts / (total * np.diff(edges))
    return Histogram(edges[:-1], edges[1:], dens)


def semicircle_cdf(x):
    x = np.clip(np.asarray(x, dtype=float), -SQRT2, SQRT2)
    return 0.5 + (x * np.sqrt(np.maximum(2.0 - x * x, 0.0)) + 2.0 * np.arcsin(x / SQRT2)) / (2.0 * math.pi)


def semicircle_bin_average(left, right) -> np.ndarray:
    """Average of the semicircle density ``sqrt(2 - x^2)/pi`` over each bin."""
    left = np.asarray(left, dtype=float)
    right = np.asarray(right, dtype=float)
    return (semicircle_cdf(right) - semicircle_cdf(left)) / (right - left)


def semicircle_sup_error(hist: Histogram, mass: float = 1.0) -> float:
    """Sup-norm distance between a histogram and ``mass`` times the semicircle."""
    ref = mass * semicircle_bin_average(hist.bin_left, hist.bin_right)
    return float(np.max(np.abs(hist.density - ref)))


# -- complex phase --------------------------------------------------------------

@dataclass
class SupportEstimate:
    boundary_points: np.ndarray  # complex, closed (first == last)
    area: float
    min_y: float
    flatness: float
    centroid: complex = 0j
    cell: float = 0.0
    interior_cells: int = 0
    details: dict = field(default_factory=dict)

    def mirrored(self) -> "SupportEstimate":
        """The lower component (conjugate boundary)."""
        b = np.conj(self.boundary_points)
        return SupportEstimate(b, self.area, self.min_y, self.flatness, np.conj(self.centroid),
                               self.cell, self.interior_cells, dict(self.details))

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("re,im\n")
            for z in self.boundary_points:
                fh.write(f"{z.real!r},{z.imag!r}\n")


def _polygon_area_centroid(z: np.ndarray):
    x, y = z.real, z.imag
    cross = x[:-1] * y[1:] - x[1:] * y[:-1]
    a = 0.5 * cross.sum()
    if a == 0:
        return 0.0, complex(x.mean(), y.mean())
    cx = ((x[:-1] + x[1:]) * cross).sum() / (6 * a)
    cy = ((y[:-1] + y[1:]) * cross).sum() / (6 * a)
    return abs(a), complex(cx, cy)


def _voronoi_areas(snap: _Snap) -> np.ndarray:
    """Voronoi cell area of each upper point within the full symmetric system."""
    from scipy.spatial import Voronoi

    up = snap.uppers
    pts = np.concatenate([up, np.conj(up), snap.reals.astype(complex)])
    vor = Voronoi(np.column_stack([pts.real, pts.imag]))
    areas = np.full(up.size, np.nan)
    for i in range(up.size):
        reg = vor.regions[vor.point_region[i]]
        if not reg or -1 in reg:
            continue
        v = vor.vertices[reg]
        c = v.mean(axis=0)
        ang = np.arctan2(v[:, 1] - c[1], v[:, 0] - c[0])
        v = v[np.argsort(ang)]
        x, y = v[:, 0], v[:, 1]
        areas[i] = 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
    return areas


def _cell_index(u, x0, h, nx, ny):
    ix = np.clip(((u.real - x0) / h).astype(int), 0, nx - 1)
    iy = np.clip((u.imag / h).astype(int), 0, ny - 1)
    return ix, iy


def complex_support(ensemble, grid_resolution: float | None = None, threshold: float = 1.0,
                    smoothing: float = 0.5, interior_margin: int = 2) -> SupportEstimate:
    """Estimate the support of the upper complex phase.

    The occupancy scale is ``h0 = 3 / sqrt(n)``.  Upper points of every
    snapshot are binned on a grid of spacing ``grid_resolution`` (default
    ``h0 / 2``) whose rows start at the real axis; counts are converted to
    particles per ``h0 x h0`` cell and per snapshot, smoothed by a Gaussian of
    width ``smoothing * h0`` (reflecting at the axis, i.e. the conjugate
    symmetry) and contoured by marching squares at ``threshold`` particles per
    cell.  Since threshold and smoothing live in physical units, refining the
    grid only sharpens the contour.

    Flatness is the interquartile range over the mean of per-cell densities on
    ``h0`` cells lying at least ``interior_margin`` cells inside the boundary.
    A cell's density is its particle count over the summed Voronoi areas of
    those particles (Voronoi cells of the full conjugate-closed system), which
    avoids the aliasing raw counts show on a crystalline arrangement with a
    few particles per cell.

    Raises
    ------
    SpectrumError
        If there are no upper points, or fewer than 8 occupied cells.
    """
    from scipy.ndimage import gaussian_filter
    from scipy.spatial import cKDTree
    from skimage.measure import find_contours, points_in_poly

    snaps = snapshots(ensemble)
    ups = [s.uppers for s in snaps]
    if sum(u.size for u in ups) == 0:
        raise SpectrumError("no off-axis particles")
    n = float(np.mean([s.n for s in snaps]))
    h0 = 3.0 / math.sqrt(n)
    h = float(grid_resolution) if grid_resolution else 0.5 * h0
    allu = np.concatenate(ups)
    margin = 4.0 * h0
    x0 = allu.real.min() - margin
    x1 = allu.real.max() + margin
    y1 = allu.imag.max() + margin
    nx, ny = int(math.ceil((x1 - x0) / h)), int(math.ceil(y1 / h))
    counts = np.zeros((nx, ny))
    for u in ups:
        np.add.at(counts, _cell_index(u, x0, h, nx, ny), 1.0)
    if np.count_nonzero(counts) < 8:
        raise SpectrumError("too few particles for the grid resolution")
    dens = counts / len(snaps) * (h0 / h) ** 2
    sig = smoothing * h0 / h
    if sig > 0:
        dens = gaussian_filter(dens, sigma=sig, mode=["constant", "reflect"])
    # the zero row below the axis closes contours that reach it
    padded = np.pad(dens, ((1, 1), (1, 1)))
    contours = find_contours(padded, threshold)
    if not contours:
        raise SpectrumError("no support contour found")
    c = max(contours, key=len)
    bx = x0 + (c[:, 0] - 0.5) * h
    by = np.maximum((c[:, 1] - 0.5) * h, 0.0)
    b = bx + 1j * by
    if b[0] != b[-1]:
        b = np.append(b, b[0])
    area, centroid = _polygon_area_centroid(b)

    # flatness on h0 cells well inside the boundary
    mx, my = int(math.ceil((x1 - x0) / h0)), int(math.ceil(y1 / h0))
    gx = x0 + (np.arange(mx) + 0.5) * h0
    gy = (np.arange(my) + 0.5) * h0
    cx, cy = np.meshgrid(gx, gy, indexing="ij")
    centers = np.column_stack([cx.ravel(), cy.ravel()])
    inside = points_in_poly(centers, np.column_stack([b.real, b.imag]))
    dense_b = _densify(b, 0.25 * h)
    dist = cKDTree(np.column_stack([dense_b.real, dense_b.imag])).query(centers)[0]
    interior = (inside & (dist >= interior_margin * h0)).reshape(mx, my)
    cell_n = np.zeros((mx, my))
    cell_a = np.zeros((mx, my))
    for s in snaps:
        if s.uppers.size == 0:
            continue
        ix, iy = _cell_index(s.uppers, x0, h0, mx, my)
        sel = interior[ix, iy]
        if not sel.any():
            continue
        areas = _voronoi_areas(s)
        ok = sel & np.isfinite(areas)
        np.add.at(cell_n, (ix[ok], iy[ok]), 1.0)
        np.add.at(cell_a, (ix[ok], iy[ok]), areas[ok])
    use = interior & (cell_a > 0)
    if use.sum() >= 4:
        rho = cell_n[use] / cell_a[use]
        q1, q3 = np.percentile(rho, [25, 75])
        flat = float((q3 - q1) / rho.mean())
        mean_rho = float(rho.mean())
    else:
        flat = mean_rho = math.nan
    return SupportEstimate(b, float(area), float(by.min()), flat, centroid, h, int(use.sum()),
                           {"h0": h0, "threshold": threshold, "smoothing": smoothing,
                            "snapshots": len(snaps), "interior_density": mean_rho,
                            "density_method": "voronoi"})


def _densify(b: np.ndarray, step: float) -> np.ndarray:
    out = [b[:1]]
    for a, c in zip(b[:-1], b[1:]):
        m = max(1, int(math.ceil(abs(c - a) / step)))
        out.append(a + (c - a) * np.arange(1, m + 1) / m)
    return np.concatenate(out)


def hausdorff(a, b) -> float:
    """Symmetric Hausdorff distance between two planar point sets (complex)."""
    from scipy.spatial.distance import directed_hausdorff

    pa = np.column_stack([np.real(a), np.imag(a)])
    pb = np.column_stack([np.real(b), np.imag(b)])
    return max(directed_hausdorff(pa, pb)[0], directed_hausdorff(pb, pa)[0])


def axis_gap(ensemble) -> float:
    """Smallest imaginary part among off-axis particles, averaged over snapshots."""
    vals = [float(s.uppers.imag.min()) for s in snapshots(ensemble) if s.uppers.size]
    if not vals:
        raise SpectrumError("no off-axis particles")
    return float(np.mean(vals))


# -- microscopic statistics ------------------------------------------------------

@dataclass
class GapStatistics:
    gaps: np.ndarray
    mean: float
    cv: float


def gap_statistics(config, bulk_fraction: float = 1.0, unfold: bool = False, window: int = 10) -> GapStatistics:
    """Nearest-neighbour gaps of the sorted real particles.

    Parameters
    ----------
    bulk_fraction : float
        Keep only the central fraction of gaps (edges are sparse).
    unfold : bool
        Divide each gap by the mean of its ``2 window + 1`` neighbours, which
        removes the slow variation of the macroscopic density.
    """
    if isinstance(config, SpectralConfiguration):
        x = np.sort(np.asarray(config.reals, dtype=float))
    else:
        x = np.sort(np.asarray(config, dtype=float))
    if x.size < 3:
        raise SpectrumError("need at least 3 real particles")
    g = np.diff(x)
    if unfold:
        ker = np.ones(2 * window + 1)
        num = np.convolve(g, ker, mode="same")
        den = np.convolve(np.ones_like(g), ker, mode="same")
        g = g / (num / den)
    if bulk_fraction < 1.0:
        m = g.size
        cut = int(round(0.5 * (1.0 - bulk_fraction) * m))
        g = g[cut:m - cut]
    mean = float(g.mean())
    cv = float(g.std() / mean) if mean > 0 else math.nan
    return GapStatistics(g, mean, cv)


def ensemble_gap_cv(ensemble, **kw) -> float:
    """Coefficient of variation of the pooled gaps over an ensemble."""
    gs = np.concatenate([gap_statistics(s.reals, **kw).gaps for s in snapshots(ensemble)])
    return float(gs.std() / gs.mean())
