import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from realginibre.core import CollisionError, SpectrumError, make_configuration, rng_stream
from realginibre.gasdyn import initial_configuration
from realginibre.potential import confinement, grad_energy, min_separation, total_energy
from realginibre.special import erfc, erfcx, log_erfc


# -- special functions -----------------------------------------------------------

def test_erfc_values():
    assert erfc(0.0) == 1.0
    assert erfc(1.0) == pytest.approx(0.15729920705, abs=1e-10)
    for t in (0.3, 1.7, 4.0):
        assert erfc(t) + erfc(-t) == pytest.approx(2.0, abs=1e-15)


@pytest.mark.parametrize("t", [-3.0, -0.5, 0.0, 0.1, 0.49, 0.51, 1.0, 2.5, 5.0, 12.0, 26.0])
def test_erfc_against_mpmath(t):
    ref = float(mpmath.erfc(t))
    assert erfc(t) == pytest.approx(ref, rel=5e-15)


@pytest.mark.parametrize("t", [0.0, 0.2, 1.0, 3.0, 10.0, 30.0, 100.0, 1e4])
def test_log_erfc_against_mpmath(t):
    ref = float(mpmath.log(mpmath.erfc(t)))
    assert log_erfc(t) == pytest.approx(ref, rel=1e-14, abs=1e-15)
    assert erfcx(t) == pytest.approx(float(mpmath.exp(t * t) * mpmath.erfc(t)), rel=1e-14)


def test_log_erfc_far_tail():
    assert log_erfc(0.0) == 0.0
    # asymptotic series -t^2 - log(t sqrt(pi)) + log(1 - 1/(2t^2) + 3/(4t^4))
    t = 30.0
    ref = -t * t - math.log(t * math.sqrt(math.pi)) + math.log1p(-1 / (2 * t * t) + 3 / (4 * t ** 4))
    assert log_erfc(t) == pytest.approx(ref, abs=1e-8)
    assert log_erfc(t) == pytest.approx(-903.974, abs=1e-3)
    t = np.linspace(-5, 60, 2001)
    assert np.all(np.diff(log_erfc(t)) < 0)


def test_vectorized_shapes():
    a = np.array([[0.0, 1.0], [2.0, 3.0]])
    assert erfc(a).shape == (2, 2)
    assert isinstance(erfc(1.0), float)


# -- confinement -------------------------------------------------------------------

def test_confinement_examples():
    assert confinement((2.0, 0.0), 7) == 2.0
    assert confinement((2.0, 0.0), 1000) == 2.0
    assert abs(confinement((0.0, 1e-14), 50)) < 1e-10
    # large y sqrt(n): U ~ y^2/2 + log(y sqrt(2 pi n)) / (2n)
    y, n = 1.0, 100
    assert confinement((0.0, y), n) == pytest.approx(y * y / 2 + math.log(y * math.sqrt(2 * math.pi * n)) / (2 * n), abs=1e-3)


def test_confinement_against_scipy():
    from scipy.special import erfcx as sp_erfcx

    for x, y, n in [(0.3, 0.2, 10), (-1.0, 0.7, 400), (0.0, 2.0, 3)]:
        t = y * math.sqrt(2 * n)
        ref = x * x / 2 - y * y / 2 - (math.log(sp_erfcx(t)) - t * t) / (2 * n)
        assert confinement((x, y), n) == pytest.approx(ref, rel=1e-13)


# -- energy ------------------------------------------------------------------------

def test_two_real_particles():
    a = 0.8
    e = total_energy(make_configuration([-a, a], []))
    assert e.interaction == pytest.approx(-0.5 * math.log(2 * a), rel=1e-14)
    assert e.confinement == pytest.approx(a * a, rel=1e-14)
    gr, _ = grad_energy(make_configuration([-a, a], []))
    assert gr[1] == pytest.approx(a - 1 / (2 * 2 * a), rel=1e-14)
    assert gr[0] == pytest.approx(-gr[1], rel=1e-14)


def test_lone_pair():
    y = 0.4
    c = make_configuration([], [(0.0, y)])
    e = total_energy(c)
    assert e.interaction == pytest.approx(-0.5 * math.log(2 * y), rel=1e-14)
    assert e.confinement == pytest.approx(2 * confinement((0.0, y), 2), rel=1e-14)


def test_collision_raises():
    with pytest.raises(CollisionError):
        total_energy(make_configuration([0.0, 0.5], [(0.5, 0.0 + 1e-300)]))
    c = make_configuration([0.1, 0.2], [(0.1, 1.0), (0.1, np.nextafter(1.0, 2.0))])
    assert min_separation(c) < 1e-15
    assert math.isfinite(total_energy(c).total)
    with pytest.raises(SpectrumError):
        make_configuration([0.1, 0.1], [])


def test_min_separation():
    assert min_separation(make_configuration([0, 1], [])) == 1.0
    assert min_separation(make_configuration([], [(0, 0.25)])) == 0.5
    assert min_separation(make_configuration([0, 1], [(5.0, 0.25)])) == 0.5


def _mirror(c):
    return make_configuration(-c.reals, np.column_stack([-c.xu, c.yu]))


def _fd_grad(c, h=1e-5):
    """Fourth-order central differences, step scaled to the closest pair."""
    h = h * min(1.0, min_separation(c))
    q = np.concatenate([c.reals, c.xu, c.yu])
    k, l = c.k, c.l
    g = np.empty_like(q)

    def f(v):
        return total_energy(make_configuration(v[:k], np.column_stack([v[k:k + l], v[k + l:]]))).total

    for i in range(q.size):
        e = np.zeros_like(q)
        e[i] = h
        g[i] = (8 * (f(q + e) - f(q - e)) - (f(q + 2 * e) - f(q - 2 * e))) / (12 * h)
    return g


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 40), st.floats(0, 1), st.integers(0, 2**31))
def test_gradient_central_difference(n, alpha, seed):
    k = int(alpha * n)
    if (n - k) % 2:
        k += 1 if k < n else -1
    c = initial_configuration(n, k, rng_stream(seed, 99))
    gr, gu = grad_energy(c)
    g = np.concatenate([gr, gu[:, 0], gu[:, 1]])
    fd = _fd_grad(c)
    assert np.linalg.norm(g - fd) <= 1e-6 * max(np.linalg.norm(fd), 1e-3)


def test_mirror_symmetry():
    c = initial_configuration(30, 10, rng_stream(5, 0))
    m = _mirror(c)
    assert total_energy(m).total == pytest.approx(total_energy(c).total, rel=1e-13)
    gr, gu = grad_energy(c)
    mr, mu = grad_energy(m)
    assert np.allclose(mr, -gr, rtol=1e-12, atol=1e-13)
    assert np.allclose(mu[:, 0], -gu[:, 0], rtol=1e-12, atol=1e-13)
    assert np.allclose(mu[:, 1], gu[:, 1], rtol=1e-12, atol=1e-13)


def test_energy_is_permutation_invariant():
    c = initial_configuration(25, 7, rng_stream(1, 0))
    rng = np.random.default_rng(0)
    p = make_configuration(rng.permutation(c.reals), c.uppers[rng.permutation(c.l)])
    assert total_energy(p).total == pytest.approx(total_energy(c).total, rel=1e-13)
