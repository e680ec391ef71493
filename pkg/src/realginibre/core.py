"""Shared domain types for the conditioned real Ginibre ensemble.

A spectrum of an ``n x n`` real matrix with ``k`` real eigenvalues is stored
in its half representation: ``k`` real coordinates plus ``l = (n - k) / 2``
points in the open upper half plane.  The conjugate of every upper point is
implicit and is only materialized when converting to an
:class:`EmpiricalMeasure`.
"""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np


class SpectrumError(ValueError):
    """Malformed configuration or measure."""


class CollisionError(SpectrumError):
    """Two particles coincide, so the log energy is infinite."""

    def __init__(self, message: str, pair: tuple | None = None):
        super().__init__(message)
        self.pair = pair


class ParityError(SpectrumError):
    """``k`` and ``n`` have different parity (complex eigenvalues come in pairs)."""


def check_parity(n: int, k: int) -> None:
    if n < 1 or k < 0 or k > n:
        raise ParityError(f"need 0 <= k <= n and n >= 1, got n={n}, k={k}")
    if (n - k) % 2:
        raise ParityError(f"k={k} and n={n} must have the same parity")


def k_for_alpha(alpha: float, n: int) -> int:
    """Closest integer to ``alpha * n`` with the parity of ``n`` (ties round up)."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    p = n % 2
    k = 2 * math.floor((alpha * n - p) / 2 + 0.5) + p
    return int(min(max(k, p), n))


# ---------------------------------------------------------------------------
# RNG plumbing
# ---------------------------------------------------------------------------

def rng_stream(seed: int, *key: int) -> np.random.Generator:
    """PCG64 generator for the sub-stream ``key`` of ``seed``.

    Streams are split with :class:`numpy.random.SeedSequence` spawn keys, so
    ``rng_stream(s, 3)`` is the same stream as ``SeedSequence(s).spawn(4)[3]``.
    Every consumer draws its noise in particle-index order (reals first, then
    uppers), which makes a run a pure function of ``(seed, key)``.
    """
    ss = np.random.SeedSequence(int(seed) & 0xFFFF_FFFF_FFFF_FFFF, spawn_key=tuple(int(x) for x in key))
    return np.random.Generator(np.random.PCG64(ss))


# Fixed stream ids, one per consumer.
STREAM_GAS = 1
STREAM_GAS_BRIDGE = 2
STREAM_GAS_INIT = 3
STREAM_MCMC = 4
STREAM_MCMC_INIT = 5
STREAM_ORACLE = 6


# ---------------------------------------------------------------------------
# Configurations
# ---------------------------------------------------------------------------

def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SpectralConfiguration:
    """``k`` real particles and ``l`` upper-half-plane particles; ``n = k + 2l``."""

    reals: np.ndarray
    uppers: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "reals", _frozen(np.reshape(self.reals, (-1,))))
        object.__setattr__(self, "uppers", _frozen(np.reshape(self.uppers, (-1, 2))))

    @property
    def k(self) -> int:
        return int(self.reals.size)

    @property
    def l(self) -> int:  # noqa: E743
        return int(self.uppers.shape[0])

    @property
    def n(self) -> int:
        return self.k + 2 * self.l

    @property
    def xu(self) -> np.ndarray:
        return self.uppers[:, 0]

    @property
    def yu(self) -> np.ndarray:
        return self.uppers[:, 1]

    def points(self) -> np.ndarray:
        """All ``n`` eigenvalues as complex numbers, conjugates included."""
        z = self.xu + 1j * self.yu
        return np.concatenate([self.reals.astype(complex), z, np.conj(z)])

    def mirrored(self) -> "SpectralConfiguration":
        """Image under ``x -> -x``."""
        return SpectralConfiguration(-self.reals, np.column_stack([-self.xu, self.yu]))

    def __eq__(self, other):
        if not isinstance(other, SpectralConfiguration):
            return NotImplemented
        return np.array_equal(self.reals, other.reals) and np.array_equal(self.uppers, other.uppers)

    def __repr__(self):
        return f"SpectralConfiguration(n={self.n}, k={self.k}, l={self.l})"

    # serialization -------------------------------------------------------
    def to_dict(self) -> dict:
        return {"reals": self.reals.tolist(), "uppers": self.uppers.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "SpectralConfiguration":
        return make_configuration(d.get("reals", []), d.get("uppers", []))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "SpectralConfiguration":
        return cls.from_dict(json.loads(s))


def make_configuration(reals: Iterable[float], uppers: Iterable[Sequence[float]]) -> SpectralConfiguration:
    """Validate and build a configuration.

    Raises
    ------
    SpectrumError
        On non-finite values, an upper point with ``y <= 0`` or duplicates.
    """
    r = np.asarray(list(reals) if not isinstance(reals, np.ndarray) else reals, dtype=float).reshape(-1)
    u = np.asarray(list(uppers) if not isinstance(uppers, np.ndarray) else uppers, dtype=float)
    u = u.reshape(-1, 2) if u.size else np.zeros((0, 2))
    if not (np.all(np.isfinite(r)) and np.all(np.isfinite(u))):
        raise SpectrumError("coordinates must be finite")
    if u.size and np.any(u[:, 1] <= 0):
        raise SpectrumError("upper particles need strictly positive imaginary part")
    if r.size != np.unique(r).size:
        raise SpectrumError("duplicate real particles")
    if u.shape[0] != np.unique(u, axis=0).shape[0]:
        raise SpectrumError("duplicate upper particles")
    return SpectralConfiguration(r, u)


def save_configurations_jsonl(path: str | Path, configs: Iterable[SpectralConfiguration], extra: Iterable[dict] | None = None) -> None:
    with open(path, "w") as fh:
        extras = iter(extra) if extra is not None else None
        for c in configs:
            rec = c.to_dict()
            if extras is not None:
                rec.update(next(extras))
            fh.write(json.dumps(rec) + "\n")


def load_configurations_jsonl(path: str | Path) -> list[SpectralConfiguration]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(SpectralConfiguration.from_dict(json.loads(line)))
    return out


# ---------------------------------------------------------------------------
# Empirical measures
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Weighted, conjugate-closed point set in the complex plane.

    ``points`` is a complex array and ``weights`` a positive real array of the
    same length.  The constructor checks conjugate symmetry bit-exactly.
    """

    points: np.ndarray
    weights: np.ndarray
    total_mass: float = field(init=False)

    def __post_init__(self):
        z = np.array(self.points, dtype=complex, copy=True).reshape(-1)
        w = np.array(self.weights, dtype=float, copy=True).reshape(-1)
        if z.shape != w.shape:
            raise SpectrumError("points and weights differ in length")
        if np.any(w <= 0) or not np.all(np.isfinite(w)) or not np.all(np.isfinite(z)):
            raise SpectrumError("weights must be positive and atoms finite")
        if not _conjugate_closed(z, w):
            raise SpectrumError("measure is not closed under complex conjugation")
        z.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", z)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "total_mass", math.fsum(w.tolist()))

    def __len__(self):
        return self.points.size

    @property
    def on_axis(self) -> np.ndarray:
        return self.points.imag == 0

    @property
    def real_mass(self) -> float:
        return math.fsum(self.weights[self.on_axis].tolist())

    def restrict(self, on_axis: bool) -> "EmpiricalMeasure":
        """Restriction to the real axis (``True``) or to its complement."""
        m = self.on_axis if on_axis else ~self.on_axis
        return EmpiricalMeasure(self.points[m], self.weights[m])

    def normalized(self) -> "EmpiricalMeasure":
        return EmpiricalMeasure(self.points, self.weights / self.total_mass)

    def conjugate(self) -> "EmpiricalMeasure":
        return EmpiricalMeasure(np.conj(self.points), self.weights)

    def mirrored(self) -> "EmpiricalMeasure":
        """Image under ``z -> -conj(z)`` (the ``x -> -x`` reflection)."""
        return EmpiricalMeasure(-np.conj(self.points), self.weights)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["re", "im", "weight"])
            for z, w in zip(self.points, self.weights):
                wr.writerow([repr(float(z.real)), repr(float(z.imag)), repr(float(w))])

    @classmethod
    def from_csv(cls, path: str | Path) -> "EmpiricalMeasure":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0] + 1j * data[:, 1], data[:, 2])


def _conjugate_closed(z: np.ndarray, w: np.ndarray) -> bool:
    off = z.imag != 0
    if not np.any(off):
        return True
    up = z.imag > 0
    lo = z.imag < 0
    if up.sum() != lo.sum():
        return False
    a = np.lexsort((w[up], z[up].imag, z[up].real))
    b = np.lexsort((w[lo], -z[lo].imag, z[lo].real))
    zu, wu = z[up][a], w[up][a]
    zl, wl = z[lo][b], w[lo][b]
    return bool(np.array_equal(zu, np.conj(zl)) and np.array_equal(wu, wl))


def mixture(mu: EmpiricalMeasure, nu: EmpiricalMeasure, t: float) -> EmpiricalMeasure:
    """Convex combination ``t*mu + (1-t)*nu`` of two probability measures."""
    if not 0.0 < t < 1.0:
        raise ValueError("t must lie strictly between 0 and 1")
    mu, nu = mu.normalized(), nu.normalized()
    return EmpiricalMeasure(np.concatenate([mu.points, nu.points]),
                            np.concatenate([t * mu.weights, (1 - t) * nu.weights]))


def to_measure(config: SpectralConfiguration) -> EmpiricalMeasure:
    """Uniform probability measure on all ``n`` eigenvalues."""
    n = config.n
    if n == 0:
        raise SpectrumError("empty configuration")
    return EmpiricalMeasure(config.points(), np.full(n, 1.0 / n))


def second_moment(measure: EmpiricalMeasure) -> float:
    """Normalized second moment ``sum w |z|^2 / sum w``."""
    if len(measure) == 0 or measure.total_mass <= 0:
        raise SpectrumError("second moment of an empty measure")
    z = measure.points
    return math.fsum((measure.weights * (z.real ** 2 + z.imag ** 2)).tolist()) / measure.total_mass


# ---------------------------------------------------------------------------
# Gas parameters and run manifests
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GasParams:
    n: int
    k: int
    sigma: float = math.sqrt(2.0)
    dt: float = 1e-2
    steps: int = 1000
    seed: int = 0

    def __post_init__(self):
        check_parity(self.n, self.k)
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.sigma >= 0:
            raise ValueError("sigma must be nonnegative")
        if self.steps < 0:
            raise ValueError("steps must be nonnegative")

    @property
    def l(self) -> int:  # noqa: E743
        return (self.n - self.k) // 2


@dataclass
class RunManifest:
    command: str
    parameters: dict[str, Any]
    seed: int | None = None
    outputs: dict[str, str] = field(default_factory=dict)
    duration: float = 0.0
    status: str = "running"
    extra: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, s: str) -> "RunManifest":
        return cls(**json.loads(s))

    def write(self, directory: str | Path) -> Path:
        p = Path(directory) / "manifest.json"
        p.write_text(self.to_json())
        return p


class Stopwatch:
    def __init__(self):
        self.t0 = time.perf_counter()

    def elapsed(self) -> float:
        return time.perf_counter() - self.t0
