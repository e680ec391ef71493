"""Time integration of the two-phase log-gas.

The stochastic scheme is Euler-Maruyama for

    dq = -grad Phi(q) dt + sigma / sqrt(n) dB,

with one-dimensional noise on the real particles and two-dimensional noise on
the upper particles (their conjugates move by the mirrored increment, which
the half representation gives for free).  ``sigma = 0`` is the gradient flow
used for zero-temperature relaxation.

:func:`evolve` caps every step at ``dt_safe = c_safe * min_sep^2 * n`` and
halves a step (at most ``max_halvings`` times) when it would bring two
particles closer than ``collision_eps`` or, in deterministic mode, raise the
energy.  Halving splits the Brownian increment with a Brownian bridge, so the
noise path is refined rather than redrawn.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numba import njit

from .core import (STREAM_GAS, STREAM_GAS_BRIDGE, STREAM_GAS_INIT, CollisionError, GasParams,
                   SpectralConfiguration, check_parity, rng_stream)
from .potential import closest_pair, energy_arrays, energy_grad_arrays, grad_arrays
from .potential import min_separation as _min_separation

COLLISION_EPS = 1e-10
C_SAFE = 0.1
MAX_HALVINGS = 20
ENERGY_SLACK = 1e-12
MAX_REFINE = 64


class GuardTripError(CollisionError):
    """A step still failed the collision guard at the smallest allowed dt."""


def min_separation(config: SpectralConfiguration) -> float:
    """Minimum pair distance, counting each upper point against its conjugate (``2y``)."""
    return _min_separation(config)


def initial_configuration(n: int, k: int, rng: np.random.Generator, y_min: float = 0.05) -> SpectralConfiguration:
    """Reals uniform on ``[-1, 1]``; uppers uniform on the unit upper half disk with ``y >= y_min``."""
    check_parity(n, k)
    l = (n - k) // 2
    reals = rng.uniform(-1.0, 1.0, k)
    pts = np.empty((0, 2))
    while pts.shape[0] < l:
        m = 2 * (l - pts.shape[0]) + 8
        cand = np.column_stack([rng.uniform(-1.0, 1.0, m), rng.uniform(y_min, 1.0, m)])
        cand = cand[np.hypot(cand[:, 0], cand[:, 1]) <= 1.0]
        pts = np.vstack([pts, cand])
    return SpectralConfiguration(reals, pts[:l])


@dataclass
class Trajectory:
    snapshots: list = field(default_factory=list)  # (time, SpectralConfiguration)
    energies: list = field(default_factory=list)
    min_separations: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    @property
    def times(self) -> list[float]:
        return [t for t, _ in self.snapshots]

    @property
    def final(self) -> SpectralConfiguration:
        return self.snapshots[-1][1]

    def tail(self, fraction: float = 0.2) -> list[SpectralConfiguration]:
        """Snapshots in the final ``fraction`` of the simulated time (at least one)."""
        t_end = self.snapshots[-1][0]
        t0 = self.snapshots[0][0]
        cut = t_end - fraction * (t_end - t0)
        out = [c for t, c in self.snapshots if t >= cut]
        return out or [self.final]

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for s, (t, c) in zip(self.steps, self.snapshots):
                fh.write(json.dumps({"step": s, "time": t, **c.to_dict()}) + "\n")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["step", "time", "energy", "min_sep"])
            for s, (t, _), e, m in zip(self.steps, self.snapshots, self.energies, self.min_separations):
                wr.writerow([s, repr(t), repr(e), repr(m)])


class _State:
    """Mutable integrator buffers for one trajectory."""

    def __init__(self, config: SpectralConfiguration):
        self.n = config.n
        self.xr = np.array(config.reals)
        self.xu = np.array(config.xu)
        self.yu = np.array(config.yu)
        self.gr = np.empty_like(self.xr)
        self.gx = np.empty_like(self.xu)
        self.gy = np.empty_like(self.yu)
        self.minsep2 = grad_arrays(self.xr, self.xu, self.yu, self.n, self.gr, self.gx, self.gy)
        self.energy = math.nan

    def refresh_energy(self):
        inter, conf, _ = energy_arrays(self.xr, self.xu, self.yu, self.n)
        self.energy = inter + conf
        return self.energy

    def copy(self) -> "_State":
        s = object.__new__(_State)
        s.n = self.n
        for name in ("xr", "xu", "yu", "gr", "gx", "gy"):
            setattr(s, name, getattr(self, name).copy())
        s.minsep2 = self.minsep2
        s.energy = self.energy
        return s

    def config(self) -> SpectralConfiguration:
        return SpectralConfiguration(self.xr.copy(), np.column_stack([self.xu, self.yu]))

    def grad_norm(self) -> float:
        g = np.concatenate([self.gr, self.gx, self.gy])
        return float(np.max(np.abs(g))) if g.size else 0.0


def _euler(state: _State, dt: float, amp: float, dw, with_energy: bool = False) -> _State:
    """Explicit step; ``dw`` holds Brownian increments (variance ``dt``) in
    particle order: reals, then (x, y) per upper.  Upper points that cross the
    axis are reflected."""
    out = object.__new__(_State)
    out.n = state.n
    k = state.xr.size
    out.xr = state.xr - dt * state.gr
    out.xu = state.xu - dt * state.gx
    yu = state.yu - dt * state.gy
    if amp != 0.0:
        out.xr += amp * dw[:k]
        out.xu += amp * dw[k::2]
        yu += amp * dw[k + 1::2]
    out.yu = np.abs(yu)
    out.gr = np.empty_like(out.xr)
    out.gx = np.empty_like(out.xu)
    out.gy = np.empty_like(out.yu)
    if with_energy:
        inter, conf, out.minsep2 = energy_grad_arrays(out.xr, out.xu, out.yu, out.n, out.gr, out.gx, out.gy)
        out.energy = inter + conf if out.minsep2 > 0.0 else math.inf
    else:
        out.minsep2 = grad_arrays(out.xr, out.xu, out.yu, out.n, out.gr, out.gx, out.gy)
        out.energy = math.nan
    return out


@njit(cache=True)
def _order_changed(before, after):
    o = np.argsort(before, kind="mergesort")
    for i in range(o.size - 1):
        if not after[o[i + 1]] > after[o[i]]:
            return True
    return False


def _crossed(before: np.ndarray, after: np.ndarray) -> bool:
    """True if a step changed the order of the real particles.

    Reals cannot pass each other without colliding, so a swap means the
    explicit step jumped through a collision."""
    return before.size >= 2 and bool(_order_changed(before, after))


def _guard(state: _State, eps: float):
    if state.n >= 2 and not state.minsep2 >= eps * eps:
        i, j, sep = closest_pair(state.xr, state.xu, state.yu)
        raise GuardTripError(f"particles {i} and {j} at separation {sep:.3g} < {eps:g}", (i, j))


def step_stochastic(config: SpectralConfiguration, params: GasParams, rng: np.random.Generator,
                    collision_eps: float = COLLISION_EPS) -> SpectralConfiguration:
    """One Euler-Maruyama step of size ``params.dt``.

    Raises :class:`GuardTripError` if the result has a pair closer than
    ``collision_eps``.
    """
    _check_sigma(params.sigma, False)
    state = _State(config)
    amp = params.sigma / math.sqrt(config.n)
    dw = rng.standard_normal(config.k + 2 * config.l) * math.sqrt(params.dt) if amp else None
    out = _euler(state, params.dt, amp, dw)
    _guard(out, collision_eps)
    return out.config()


def step_deterministic(config: SpectralConfiguration, dt: float,
                       collision_eps: float = COLLISION_EPS) -> SpectralConfiguration:
    """One explicit gradient-flow step ``q <- q - dt grad Phi(q)``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    out = _euler(_State(config), dt, 0.0, None)
    _guard(out, collision_eps)
    return out.config()


def dt_safe(minsep: float, n: int, c_safe: float = C_SAFE) -> float:
    return c_safe * minsep * minsep * n


def _check_sigma(sigma: float, experimental: bool):
    if sigma * sigma > 2.0 + 1e-12 and not experimental:
        raise ValueError("sigma^2 > 2 is outside the no-collision regime; pass experimental=True to run anyway")


class _Integrator:
    """Adaptive Euler-Maruyama stepper.

    A step is refined (split in two with a Brownian bridge, so the sampled
    path is kept) when it violates ``dt_safe`` at either end; refinements may
    nest ``MAX_REFINE`` deep.  A step that still fails the guard, reorders the
    reals or (deterministic mode) raises the energy is halved the same way, at
    most ``max_halvings`` times along one branch.
    """

    def __init__(self, params: GasParams, deterministic: bool, collision_eps: float, max_halvings: int,
                 c_safe: float = C_SAFE):
        self.n = params.n
        self.c_safe = c_safe
        self.deterministic = deterministic
        self.amp = 0.0 if deterministic else params.sigma / math.sqrt(params.n)
        self.eps = collision_eps
        self.max_halvings = max_halvings
        self.bridge = rng_stream(params.seed, STREAM_GAS_BRIDGE)
        self.guard_trips = 0
        self.crossing_retries = 0
        self.energy_retries = 0
        self.halvings = 0
        self.refinements = 0
        self.max_depth = 0

    def _too_long(self, dt: float, minsep2: float) -> bool:
        return self.n >= 2 and dt > dt_safe(math.sqrt(minsep2), self.n, self.c_safe)

    def advance(self, state: _State, dt: float, dw, depth: int = 0, halvings: int = 0) -> _State:
        # a sub-step that starts closer than its parent obeys its own dt_safe
        if depth and depth < MAX_REFINE and self._too_long(dt, state.minsep2):
            self.refinements += 1
            return self._split(state, dt, dw, depth, halvings)
        out = _euler(state, dt, self.amp, dw, self.deterministic)
        ok = out.minsep2 >= self.eps * self.eps
        if ok and depth < MAX_REFINE and self._too_long(dt, out.minsep2):
            # jumped into a near collision: resolve the same path more finely
            self.refinements += 1
            return self._split(state, dt, dw, depth, halvings)
        if not ok:
            self.guard_trips += 1
        elif _crossed(state.xr, out.xr):
            ok = False
            self.crossing_retries += 1
        elif self.deterministic:
            e = out.energy
            if e > state.energy + ENERGY_SLACK * abs(state.energy):
                ok = False
                self.energy_retries += 1
        if ok:
            return out
        if halvings >= self.max_halvings or depth >= MAX_REFINE:
            _guard(out, self.eps)
            if _crossed(state.xr, out.xr):
                raise GuardTripError(f"real particles still cross at dt={dt:.3g} after {halvings} halvings")
            raise GuardTripError(f"energy increase persists at dt={dt:.3g} after {halvings} halvings")
        self.halvings += 1
        return self._split(state, dt, dw, depth, halvings + 1)

    def _split(self, state: _State, dt: float, dw, depth: int, halvings: int) -> _State:
        """Two half steps; the noise increment is split with a Brownian bridge."""
        self.max_depth = max(self.max_depth, depth + 1)
        h = 0.5 * dt
        if dw is not None:
            dw1 = 0.5 * dw + 0.5 * math.sqrt(dt) * self.bridge.standard_normal(dw.size)
            dw2 = dw - dw1
        else:
            dw1 = dw2 = None
        mid = self.advance(state, h, dw1, depth + 1, halvings)
        return self.advance(mid, h, dw2, depth + 1, halvings)


def evolve(config: SpectralConfiguration, params: GasParams, mode: str = "deterministic",
           callbacks: Sequence[Callable] = (), snapshot_every: int | None = None,
           c_safe: float = C_SAFE, collision_eps: float = COLLISION_EPS,
           max_halvings: int = MAX_HALVINGS, grad_tol: float | None = None,
           experimental: bool = False, keep_snapshots: bool = True) -> Trajectory:
    """Integrate ``params.steps`` steps from ``config``.

    Parameters
    ----------
    mode : {"deterministic", "stochastic"}
        ``deterministic`` ignores ``params.sigma`` and enforces energy descent.
    callbacks : sequence of callables
        Called as ``cb(step, time, config)`` at every snapshot; a truthy
        return value stops the run.
    snapshot_every : int, optional
        Snapshot stride in steps (default: about 100 snapshots per run).
    grad_tol : float, optional
        Deterministic mode only: stop once ``max |grad Phi| <= grad_tol``.
    keep_snapshots : bool
        If False only the first and the latest snapshot (with their energy and
        separation) are kept.

    Raises
    ------
    GuardTripError
        When a step cannot be completed even after ``max_halvings`` halvings.
    """
    if mode not in ("deterministic", "stochastic"):
        raise ValueError(f"unknown mode {mode!r}")
    if (config.n, config.k) != (params.n, params.k):
        raise ValueError("configuration does not match params (n, k)")
    deterministic = mode == "deterministic" or params.sigma == 0.0
    if not deterministic:
        _check_sigma(params.sigma, experimental)
    stride = snapshot_every or max(1, params.steps // 100)
    integ = _Integrator(params, deterministic, collision_eps, max_halvings, c_safe)
    noise = rng_stream(params.seed, STREAM_GAS)
    m = config.k + 2 * config.l

    state = _State(config)
    _guard(state, collision_eps)
    state.refresh_energy()
    traj = Trajectory()
    t = 0.0

    def record(step):
        if not math.isfinite(state.energy):
            state.refresh_energy()
        cfg = state.config()
        row = ((t, cfg), step, state.energy, math.sqrt(state.minsep2) if config.n >= 2 else math.inf)
        lists = (traj.snapshots, traj.steps, traj.energies, traj.min_separations)
        replace = not keep_snapshots and len(traj.snapshots) >= 2
        for lst, v in zip(lists, row):
            if replace:
                lst[-1] = v
            else:
                lst.append(v)
        return any(cb(step, t, cfg) for cb in callbacks)

    stop = record(0)
    block = 256
    buf = None
    step = 0
    while step < params.steps and not stop:
        if not deterministic and (buf is None or step % block == 0):
            buf = noise.standard_normal((block, m))
        minsep = math.sqrt(state.minsep2) if config.n >= 2 else math.inf
        h = min(params.dt, dt_safe(minsep, config.n, c_safe))
        dw = None if deterministic else buf[step % block] * math.sqrt(h)
        state = integ.advance(state, h, dw)
        t += h
        step += 1
        if deterministic and grad_tol is not None and state.grad_norm() <= grad_tol:
            stop = True
        if step % stride == 0 or step == params.steps or stop:
            stop = record(step) or stop
    traj.stats = {
        "steps": step,
        "time": t,
        "guard_trips": integ.guard_trips,
        "crossing_retries": integ.crossing_retries,
        "energy_retries": integ.energy_retries,
        "halvings": integ.halvings,
        "refinements": integ.refinements,
        "max_halving_depth": integ.max_depth,
        "final_grad_norm": state.grad_norm(),
        "mode": "deterministic" if deterministic else "stochastic",
    }
    return traj


def relax(config: SpectralConfiguration, steps: int = 200_000, grad_tol: float = 1e-7,
          dt: float = 1.0, **kw) -> Trajectory:
    """Zero-temperature relaxation until ``max |grad Phi| <= grad_tol``."""
    params = GasParams(n=config.n, k=config.k, sigma=0.0, dt=dt, steps=steps)
    return evolve(config, params, "deterministic", grad_tol=grad_tol, **kw)


def _pack(config: SpectralConfiguration) -> np.ndarray:
    return np.concatenate([config.reals, config.xu, config.yu])


def _unpack(q: np.ndarray, k: int, l: int):
    return (np.ascontiguousarray(q[:k]), np.ascontiguousarray(q[k:k + l]),
            np.ascontiguousarray(q[k + l:]))


def minimize_energy(config: SpectralConfiguration, grad_tol: float = 1e-7,
                    maxiter: int = 50_000, history: int = 20) -> tuple[SpectralConfiguration, dict]:
    """Quasi-Newton (L-BFGS-B) minimization of ``Phi`` from ``config``.

    Reaches the same fixed point as the zero-temperature flow, without the
    ``dt_safe`` cap that the stiff real phase imposes on explicit steps.  Upper
    points are kept in ``y > 0`` by a bound; the conjugate repulsion keeps them
    away from it in practice.
    """
    from scipy.optimize import minimize

    k, l, n = config.k, config.l, config.n
    gr, gx, gy = np.empty(k), np.empty(l), np.empty(l)
    calls = [0]

    def fun(q):
        calls[0] += 1
        xr, xu, yu = _unpack(q, k, l)
        inter, conf, ms2 = energy_arrays(xr, xu, yu, n)
        if n >= 2 and not ms2 > 0.0:
            return np.inf, np.zeros_like(q)
        grad_arrays(xr, xu, yu, n, gr, gx, gy)
        return inter + conf, np.concatenate([gr, gx, gy])

    bounds = [(None, None)] * (k + l) + [(1e-12, None)] * l
    res = minimize(fun, _pack(config), jac=True, method="L-BFGS-B", bounds=bounds,
                   options={"maxiter": maxiter, "maxfun": 2 * maxiter, "maxcor": history,
                            "gtol": grad_tol, "ftol": 0.0})
    xr, xu, yu = _unpack(res.x, k, l)
    out = SpectralConfiguration(xr, np.column_stack([xu, yu]))
    g = fun(res.x)[1]
    info = {"iterations": int(res.nit), "evaluations": calls[0], "energy": float(res.fun),
            "final_grad_norm": float(np.max(np.abs(g))) if g.size else 0.0,
            "message": str(res.message)}
    return out, info


def relax_to_minimum(config: SpectralConfiguration, grad_tol: float = 1e-7, flow_steps: int = 2000,
                     maxiter: int = 50_000) -> tuple[SpectralConfiguration, dict]:
    """Gradient-flow warm-up (untangles the random start) then L-BFGS polish."""
    stats = {}
    if flow_steps:
        tr = relax(config, steps=flow_steps, grad_tol=grad_tol, keep_snapshots=False)
        config = tr.final
        stats["flow"] = tr.stats
    if config.n >= 2:
        config, stats["lbfgs"] = minimize_energy(config, grad_tol=grad_tol, maxiter=maxiter)
    stats["final_grad_norm"] = stats.get("lbfgs", stats.get("flow", {})).get("final_grad_norm", 0.0)
    return config, stats
