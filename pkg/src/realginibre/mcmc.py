"""Metropolis-Hastings sampling of the conditioned eigenvalue density.

Target (unnormalized, variance ``1/n`` convention):

    log p = sum_{i<j} log|l_i - l_j| - n sum_real x^2/2
            - n sum_pairs (x^2 - y^2) + sum_pairs log erfc(y sqrt(2n))

which is exactly ``-n Phi`` with ``Phi`` the gas energy.  One stored particle
(real or upper) is picked uniformly per step and moved by a Gaussian
proposal; for upper particles the new height is folded, ``y -> |y|``, which
keeps the proposal symmetric.  Proposal scales (one for reals, one for
uppers) are tuned toward 40% acceptance during burn-in and frozen after.
"""
from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .core import (STREAM_MCMC, STREAM_MCMC_INIT, SpectralConfiguration, check_parity,
                   rng_stream)
from .potential import energy_arrays
from .special import log_erfc_scalar

TARGET_ACCEPT = 0.4
TUNE_EVERY = 500
RESYNC_EVERY = 10_000
BLOCK = 8192


def log_target_density(config: SpectralConfiguration, n: int | None = None, k: int | None = None) -> float:
    """Unnormalized log density of the conditioned ensemble at ``config``.

    Returns ``-inf`` for coincident points.
    """
    if n is not None and n != config.n or k is not None and k != config.k:
        raise ValueError("(n, k) does not match the configuration")
    xr, xu, yu = (np.ascontiguousarray(a) for a in (config.reals, config.xu, config.yu))
    inter, conf, ms2 = energy_arrays(xr, xu, yu, config.n)
    if config.n >= 2 and not ms2 > 0.0:
        return -math.inf
    return -config.n * (inter + conf)


@njit(cache=True)
def _delta(xr, xu, yu, n, p, nx, ny):
    """Change of the log target when stored particle ``p`` moves to ``(nx, ny)``."""
    k = xr.size
    l = xu.size
    d = 0.0
    if p < k:
        ox = xr[p]
        for b in range(k):
            if b != p:
                a2 = (nx - xr[b]) ** 2
                if a2 == 0.0:
                    return -np.inf
                d += 0.5 * math.log(a2 / (ox - xr[b]) ** 2)
        for b in range(l):
            y2 = yu[b] * yu[b]
            d += math.log(((nx - xu[b]) ** 2 + y2) / ((ox - xu[b]) ** 2 + y2))
        d -= 0.5 * n * (nx * nx - ox * ox)
        return d
    q = p - k
    ox = xu[q]
    oy = yu[q]
    if ny == 0.0:
        return -np.inf
    for a in range(k):
        d += math.log(((xr[a] - nx) ** 2 + ny * ny) / ((xr[a] - ox) ** 2 + oy * oy))
    for b in range(l):
        if b != q:
            dxn = nx - xu[b]
            dxo = ox - xu[b]
            n1 = dxn * dxn + (ny - yu[b]) ** 2
            if n1 == 0.0:
                return -np.inf
            n2 = dxn * dxn + (ny + yu[b]) ** 2
            o1 = dxo * dxo + (oy - yu[b]) ** 2
            o2 = dxo * dxo + (oy + yu[b]) ** 2
            d += math.log((n1 * n2) / (o1 * o2))
    d += math.log(ny / oy)
    rt = math.sqrt(2.0 * n)
    d -= n * ((nx * nx - ny * ny) - (ox * ox - oy * oy))
    d += log_erfc_scalar(ny * rt) - log_erfc_scalar(oy * rt)
    return d


@njit(cache=True)
def _block(xr, xu, yu, n, lt, pick, z, u, s_r, s_c, stats,
           countdown, thinning, rec_r, rec_x, rec_y, rec_lt, rpos, recording):
    """Run ``pick.size`` steps in place.

    ``stats`` accumulates ``[accepted real, proposed real, accepted upper,
    proposed upper]``.  When ``recording`` a sample is written every
    ``thinning`` steps (``countdown`` steps until the next one).
    """
    k = xr.size
    for t in range(pick.size):
        p = pick[t]
        if p < k:
            nx = xr[p] + s_r * z[t, 0]
            ny = 0.0
            stats[1] += 1
            d = _delta(xr, xu, yu, n, p, nx, ny)
            if d >= 0.0 or u[t] < math.exp(d):
                xr[p] = nx
                lt += d
                stats[0] += 1
        else:
            q = p - k
            nx = xu[q] + s_c * z[t, 0]
            ny = abs(yu[q] + s_c * z[t, 1])
            stats[3] += 1
            d = _delta(xr, xu, yu, n, p, nx, ny)
            if d >= 0.0 or u[t] < math.exp(d):
                xu[q] = nx
                yu[q] = ny
                lt += d
                stats[2] += 1
        if recording:
            countdown -= 1
            if countdown == 0:
                rec_r[rpos, :] = xr
                rec_x[rpos, :] = xu
                rec_y[rpos, :] = yu
                rec_lt[rpos] = lt
                rpos += 1
                countdown = thinning
    return lt, countdown, rpos


@dataclass
class ChainState:
    """Chain position with its log target, acceptance counters and RNG."""
    config: SpectralConfiguration
    log_target: float
    accept: dict = field(default_factory=lambda: {"real": [0, 0], "upper": [0, 0]})
    rng: np.random.Generator | None = None

    @classmethod
    def start(cls, config: SpectralConfiguration, rng: np.random.Generator) -> "ChainState":
        return cls(config, log_target_density(config), rng=rng)

    def acceptance_rate(self, cls_name: str | None = None) -> float:
        keys = [cls_name] if cls_name else list(self.accept)
        a = sum(self.accept[c][0] for c in keys)
        p = sum(self.accept[c][1] for c in keys)
        return a / p if p else math.nan


def _scales(proposal_scale):
    if np.ndim(proposal_scale) == 0:
        return float(proposal_scale), float(proposal_scale)
    s_r, s_c = proposal_scale
    return float(s_r), float(s_c)


def mh_step(state: ChainState, proposal_scale, rng: np.random.Generator | None = None) -> ChainState:
    """One Metropolis-Hastings transition (returns a new state).

    ``proposal_scale`` is a float or a ``(real, upper)`` pair of standard
    deviations.
    """
    rng = rng or state.rng
    cfg = state.config
    s_r, s_c = _scales(proposal_scale)
    xr, xu, yu = np.array(cfg.reals), np.array(cfg.xu), np.array(cfg.yu)
    pick = rng.integers(0, cfg.k + cfg.l, 1)
    z = rng.standard_normal((1, 2))
    u = rng.random(1)
    stats = np.zeros(4, dtype=np.int64)
    e = np.empty((0, 0))
    lt, _, _ = _block(xr, xu, yu, cfg.n, state.log_target, pick, z, u, s_r, s_c, stats,
                      1, 1, e, e, e, np.empty(0), 0, False)
    acc = {"real": [state.accept["real"][0] + int(stats[0]), state.accept["real"][1] + int(stats[1])],
           "upper": [state.accept["upper"][0] + int(stats[2]), state.accept["upper"][1] + int(stats[3])]}
    new = SpectralConfiguration(xr, np.column_stack([xu, yu]))
    return ChainState(new, lt, acc, rng)


class ChainSamples(Sequence):
    """Recorded configurations of one chain, stored as arrays.

    Behaves as a read-only sequence of :class:`SpectralConfiguration`.
    """

    def __init__(self, reals, xu, yu, log_target, steps, summary):
        self.reals = reals
        self.xu = xu
        self.yu = yu
        self.log_target = log_target
        self.steps = steps
        self.summary = summary

    def __len__(self):
        return self.reals.shape[0]

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        return SpectralConfiguration(self.reals[i], np.column_stack([self.xu[i], self.yu[i]]))

    def real_parts(self) -> np.ndarray:
        return self.reals.ravel()

    def complex_points(self) -> np.ndarray:
        """Upper points of all samples, as complex numbers."""
        return (self.xu + 1j * self.yu).ravel()

    def write_jsonl(self, path) -> None:
        import json

        with open(path, "w") as fh:
            for i in range(len(self)):
                fh.write(json.dumps({"step": int(self.steps[i]), "log_target": float(self.log_target[i]),
                                     **self[i].to_dict()}) + "\n")


def initial_state(n: int, k: int, seed: int) -> SpectralConfiguration:
    from .gasdyn import initial_configuration

    return initial_configuration(n, k, rng_stream(seed, STREAM_MCMC_INIT))


def sample_chain(n: int, k: int, steps: int, burn_in: int = 0, thinning: int = 1, seed: int = 0,
                 scales=(0.3, 0.3), tune: bool = True, init: SpectralConfiguration | None = None,
                 trace_every: int = 0) -> ChainSamples:
    """Run one chain of ``steps`` transitions and keep every ``thinning``-th
    state after ``burn_in``, i.e. ``(steps - burn_in) // thinning`` samples.

    Scales are tuned during burn-in (if ``tune``) every ``TUNE_EVERY`` steps
    and frozen afterwards.  The incremental log target is re-synchronized
    with a full evaluation every ``RESYNC_EVERY`` steps; the largest drift
    seen is reported in ``summary["max_drift"]``.  With ``trace_every > 0``
    the summary also carries rows ``(step, log_target, accept_rate)``.

    Raises
    ------
    ParityError
        If ``k`` and ``n`` have different parity.
    """
    check_parity(n, k)
    if steps < 0 or burn_in < 0 or thinning < 1:
        raise ValueError("need steps >= 0, burn_in >= 0, thinning >= 1")
    cfg = init if init is not None else initial_state(n, k, seed)
    if (cfg.n, cfg.k) != (n, k):
        raise ValueError("initial configuration does not match (n, k)")
    rng = rng_stream(seed, STREAM_MCMC)
    xr, xu, yu = np.array(cfg.reals), np.array(cfg.xu), np.array(cfg.yu)
    lt = log_target_density(cfg)
    s_r, s_c = _scales(scales)
    m = k + (n - k) // 2
    n_rec = max(0, (steps - burn_in) // thinning)
    rec_r = np.empty((n_rec, k))
    rec_x = np.empty((n_rec, xu.size))
    rec_y = np.empty((n_rec, yu.size))
    rec_lt = np.empty(n_rec)
    stats = np.zeros(4, dtype=np.int64)
    window = np.zeros(4, dtype=np.int64)
    countdown = thinning
    rpos = 0
    max_drift = 0.0
    trace = []
    t = 0
    while t < steps:
        # chunk boundaries at tuning, burn-in, resync and trace points
        stop = min(steps, t + BLOCK, (t // RESYNC_EVERY + 1) * RESYNC_EVERY)
        if t < burn_in:
            stop = min(stop, burn_in, (t // TUNE_EVERY + 1) * TUNE_EVERY if tune else stop)
        if trace_every:
            stop = min(stop, (t // trace_every + 1) * trace_every)
        b = stop - t
        pick = rng.integers(0, m, b) if m else np.zeros(b, dtype=np.int64)
        z = rng.standard_normal((b, 2))
        u = rng.random(b)
        before = stats.copy()
        lt, countdown, rpos = _block(xr, xu, yu, n, lt, pick, z, u, s_r, s_c, stats, countdown,
                                     thinning, rec_r, rec_x, rec_y, rec_lt, rpos, t >= burn_in)
        t = stop
        if t < burn_in or t == burn_in:
            window += stats - before
            if tune and t % TUNE_EVERY == 0 or t == burn_in:
                if tune:
                    s_r, s_c = _retune(window, s_r, s_c)
                window[:] = 0
        if t % RESYNC_EVERY == 0 or t == steps:
            full = log_target_density(SpectralConfiguration(xr, np.column_stack([xu, yu])))
            max_drift = max(max_drift, abs(full - lt))
            lt = full
        if trace_every and t % trace_every == 0:
            prop = stats[1] + stats[3]
            trace.append((t, float(lt), float((stats[0] + stats[2]) / prop) if prop else math.nan))
    prop = stats[1] + stats[3]
    summary = {
        "n": n, "k": k, "steps": steps, "burn_in": burn_in, "thinning": thinning, "seed": seed,
        "scale_real": s_r, "scale_upper": s_c,
        "accept_real": float(stats[0] / stats[1]) if stats[1] else math.nan,
        "accept_upper": float(stats[2] / stats[3]) if stats[3] else math.nan,
        "accept_rate": float((stats[0] + stats[2]) / prop) if prop else math.nan,
        "max_drift": float(max_drift), "final_log_target": float(lt), "samples": int(rpos),
    }
    if trace_every:
        summary["trace"] = trace
    rec_steps = burn_in + thinning * np.arange(1, rpos + 1) - 1
    return ChainSamples(rec_r[:rpos], rec_x[:rpos], rec_y[:rpos], rec_lt[:rpos], rec_steps, summary)


def _retune(window, s_r, s_c):
    # multiplicative Robbins-Monro style nudge toward the target rate
    if window[1]:
        s_r *= math.exp(window[0] / window[1] - TARGET_ACCEPT)
    if window[3]:
        s_c *= math.exp(window[2] / window[3] - TARGET_ACCEPT)
    return s_r, s_c


def integrated_autocorrelation_time(x, c: float = 5.0) -> float:
    """Integrated autocorrelation time with Sokal's self-consistent window."""
    x = np.asarray(x, dtype=float)
    m = x.size
    if m < 4:
        return 1.0
    x = x - x.mean()
    var = x @ x / m
    if var == 0:
        return 1.0
    f = np.fft.rfft(x, 2 * m)
    acf = np.fft.irfft(f * np.conj(f))[:m] / (m * var)
    tau = 1.0
    for w in range(1, m):
        tau += 2.0 * acf[w]
        if w >= c * tau:
            break
    return max(tau, 1.0)


def effective_sample_size(x) -> float:
    x = np.asarray(x, dtype=float)
    return x.size / integrated_autocorrelation_time(x)


def chain_ess(samples: ChainSamples) -> float:
    """Smallest ESS over a few scalar observables (sums of real parts,
    of their squares, of upper moduli, and the log target)."""
    obs = [samples.log_target]
    if samples.reals.shape[1]:
        obs += [samples.reals.sum(axis=1), (samples.reals ** 2).sum(axis=1)]
    if samples.xu.shape[1]:
        obs += [np.hypot(samples.xu, samples.yu).sum(axis=1), samples.yu.sum(axis=1)]
    return float(min(effective_sample_size(o) for o in obs))


def write_summary_csv(path, chains) -> None:
    """``chain,step,log_target,accept_rate`` rows from chains run with ``trace_every``."""
    with open(path, "w") as fh:
        fh.write("chain,step,log_target,accept_rate\n")
        for ci, ch in enumerate(chains):
            for step, lt, ar in ch.summary.get("trace", []):
                fh.write(f"{ci},{step},{lt!r},{ar!r}\n")
