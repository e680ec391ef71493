import math

import numpy as np
import pytest
from scipy import integrate

from realginibre.core import EmpiricalMeasure, SpectrumError, mixture, rng_stream, to_measure
from realginibre.ratefn import (
    ExpansionInputs,
    QuadratureError,
    histogram_entropy,
    log_pnk_asymptotic,
    measure_from_points,
    minimum_estimate,
    rate_function,
    renormalized_expansion,
    semicircle_inverse_distance,
    semicircle_quantiles,
    solve_ystar,
    stationarity_residual,
    default_probes,
    unit_disk_points,
)

LOG2_4 = 0.25 * math.log(2.0)


@pytest.fixture(scope="module")
def disk():
    return measure_from_points(unit_disk_points(4000))


@pytest.fixture(scope="module")
def semicircle():
    return measure_from_points(semicircle_quantiles(4000).astype(complex))


# -- rate function --------------------------------------------------------------

def test_disk_is_zero(disk):
    assert abs(rate_function(disk).rate_value) < 0.01


def test_semicircle_value(semicircle):
    rep = rate_function(semicircle)
    assert abs(rep.rate_value - LOG2_4) < 0.01
    assert rep.alpha == 1.0


def test_semicircle_quadrature_oracle():
    # continuum value by direct quadrature of the log energy of the semicircle
    rho = lambda x: math.sqrt(max(2 - x * x, 0.0)) / math.pi  # noqa: E731
    r = math.sqrt(2)
    # inner potential int log|x-s| rho(s) ds = x^2/2 - 1/2 - log(2)/2 on the support
    xs = np.linspace(-1.3, 1.3, 5)
    for x in xs:
        v, _ = integrate.quad(lambda s: math.log(abs(x - s)) * rho(s), -r, r, points=[x], limit=200)
        assert abs(v - (x * x / 2 - 0.5 - 0.5 * math.log(2))) < 1e-7
    m2 = integrate.quad(lambda x: x * x * rho(x), -r, r)[0]
    loge = integrate.quad(lambda x: (x * x / 2 - 0.5 - 0.5 * math.log(2)) * rho(x), -r, r)[0]
    assert abs(0.5 * (m2 - loge) - 3 / 8 - LOG2_4) < 1e-9


@pytest.mark.parametrize("a", [0.3, 1.0, 2.5])
def test_two_atom_hand_value(a):
    mu = EmpiricalMeasure(np.array([-a, a], dtype=complex), np.array([0.5, 0.5]))
    hand = a * a / 2 - 0.25 * math.log(2 * a) - 3 / 8
    assert abs(rate_function(mu).rate_value - hand) < 1e-14


def test_rate_errors():
    with pytest.raises(SpectrumError):
        rate_function(EmpiricalMeasure(np.array([0j]), np.array([1.0])))


def test_rate_invariances():
    rng = rng_stream(0, 0)
    z = unit_disk_points(400)
    zr = np.concatenate([z, [0.3 + 0j, -0.7 + 0j]])
    base = rate_function(measure_from_points(zr)).rate_value
    assert abs(rate_function(measure_from_points(zr.conj())).rate_value - base) < 1e-12
    assert abs(rate_function(measure_from_points(-zr.conj())).rate_value - base) < 1e-12
    perm = rng.permutation(zr.size)
    assert abs(rate_function(measure_from_points(zr[perm])).rate_value - base) <= 1e-12 * abs(base)


def test_disk_discretization_consistency():
    ns = [500, 1000, 2000, 4000]
    vals = [rate_function(measure_from_points(unit_disk_points(m))).rate_value for m in ns]
    mags = np.abs(vals)
    assert np.all(np.diff(mags) < 0)
    c = max(m * abs(v) / math.log(m) for m, v in zip(ns, vals))
    assert c < 0.5  # fitted C of |I| <= C log n / n


@pytest.mark.parametrize("t", [0.25, 0.5, 0.75])
def test_convexity_probe(t):
    mu = measure_from_points(unit_disk_points(1000))
    nu = measure_from_points(semicircle_quantiles(1000).astype(complex))
    lhs = rate_function(mixture(mu, nu, t)).rate_value
    rhs = t * rate_function(mu).rate_value + (1 - t) * rate_function(nu).rate_value
    assert lhs <= rhs + 0.005


# -- minimum estimate -----------------------------------------------------------

def test_minimum_estimate_alpha0_small():
    rep = minimum_estimate(0.0, 200, seed=1)
    assert abs(rep.rate_value) < 0.01
    assert rep.alpha == 0.0


def test_minimum_estimate_mass():
    rep, cfg = minimum_estimate(0.5, 120, seed=2, return_config=True)
    assert abs(rep.alpha - 0.5) <= 1.0 / 120
    assert abs(to_measure(cfg).real_mass - 0.5) <= 1.0 / 120


def test_minimum_estimate_validation():
    with pytest.raises(ValueError):
        minimum_estimate(1.2, 100)
    with pytest.raises(ValueError):
        minimum_estimate(0.5, 3)


def test_log_pnk_asymptotic():
    assert abs(log_pnk_asymptotic(1.0, 10, LOG2_4) + 17.33) < 0.01
    assert log_pnk_asymptotic(0.0, 10, 0.0) == 0.0
    v, e = log_pnk_asymptotic(0.5, 10, 0.05, stderr=0.002)
    assert v == pytest.approx(-5.0) and e == pytest.approx(0.2)
    with pytest.raises(ValueError):
        log_pnk_asymptotic(-0.1, 10, 0.0)


# -- y* --------------------------------------------------------------------

def test_inverse_distance_closed_form():
    # Stieltjes transform of the semicircle: (sqrt(y^2 + 2) - y) / y
    for y, m in ((0.1, 800), (0.5, 200), (1.0, 200), (3.0, 200)):
        exact = (math.sqrt(y * y + 2) - y) / y
        assert abs(float(semicircle_inverse_distance(y, m)) - exact) < 1e-13 * exact


def test_ystar_value():
    assert abs(solve_ystar() - 0.5) < 1e-6


def test_ystar_quadrature_doubling():
    assert abs(solve_ystar(200) - solve_ystar(400)) < 1e-9


def test_inverse_distance_monotone():
    y = np.linspace(0.05, 3, 200)
    assert np.all(np.diff(semicircle_inverse_distance(y)) < 0)


def test_ystar_lone_pair_balance():
    assert abs(solve_ystar(rhs=1.0) - math.sqrt(2.0 / 3.0)) < 1e-9


def test_ystar_errors():
    with pytest.raises(QuadratureError):
        solve_ystar(bracket=(1.0, 2.0))
    with pytest.raises(ValueError):
        solve_ystar(quadrature_points=50)


# -- stationarity ------------------------------------------------------------

@pytest.fixture(scope="module")
def relaxed_pair():
    from realginibre.core import k_for_alpha
    from realginibre.gasdyn import initial_configuration, relax_to_minimum

    out = {}
    n = 400
    for a in (0.0, 1.0):
        c0 = initial_configuration(n, k_for_alpha(a, n), rng_stream(0, 9, n))
        c, _ = relax_to_minimum(c0)
        out[a] = (to_measure(c0), to_measure(c))
    return out


@pytest.mark.parametrize("alpha", [0.0, 1.0])
def test_stationarity_relaxed_vs_random(relaxed_pair, alpha):
    mu0, mu = relaxed_pair[alpha]
    good = stationarity_residual(mu, alpha, default_probes(mu)).spread
    bad = stationarity_residual(mu0, alpha, default_probes(mu0)).spread
    assert good < 0.02
    assert bad >= 5 * good


def test_stationarity_constants_on_semicircle(semicircle):
    x = semicircle_quantiles(4000)
    probes = (0.5 * (x[1:] + x[:-1]))[200:-200:40].astype(complex)
    res = stationarity_residual(semicircle, 1.0, probes)
    assert "real" in res.constants
    assert res.spread < 0.01


# -- next-to-leading order ---------------------------------------------------------

def test_expansion_nlogn_coefficient():
    z = ExpansionInputs(0.0, 0.0, 0.0, 0.0)
    n = 1000
    assert renormalized_expansion(n, 1.0, 0.0, z) == pytest.approx(-n * math.log(n))
    assert renormalized_expansion(n, 0.0, 0.0, z) == pytest.approx(-0.5 * n * math.log(n))
    k = ExpansionInputs(1.0, 2.0, 0.0, 0.0)
    assert renormalized_expansion(n, 0.0, 0.0, k) - renormalized_expansion(n, 0.0, 0.0, z) == pytest.approx(n / math.pi)


def test_expansion_rejects_nonfinite():
    with pytest.raises(ValueError):
        ExpansionInputs(0.0, 0.0, float("nan"), 0.0)


def test_flat_entropy():
    alpha = 0.5
    rho = 2.0 / ((1 - alpha) * math.pi)
    # uniform on a square of area 1/rho
    side = math.sqrt(1.0 / rho)
    g = (np.arange(200) + 0.5) / 200 * side
    xx, yy = np.meshgrid(g, g)
    s = histogram_entropy(np.column_stack([xx.ravel(), yy.ravel()]), bins=20, range=[[0, side], [0, side]])
    assert abs(s - math.log(rho)) < 1e-9
    s1 = histogram_entropy(np.linspace(0, 2, 10_000, endpoint=False) + 1e-4, bins=20, range=(0, 2))
    assert abs(s1 - math.log(0.5)) < 1e-12
