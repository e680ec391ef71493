import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from realginibre.core import (EmpiricalMeasure, GasParams, ParityError, RunManifest, SpectralConfiguration,
                              SpectrumError, check_parity, k_for_alpha, load_configurations_jsonl,
                              make_configuration, mixture, rng_stream, save_configurations_jsonl,
                              second_moment, to_measure)
from realginibre.ratefn import semicircle_quantiles, unit_disk_points


@pytest.mark.parametrize("reals, uppers, n, k, l", [
    ([0.0], [], 1, 1, 0),
    ([], [(0, 1)], 2, 0, 1),
    ([-1, 1], [(0, 0.5)], 4, 2, 1),
])
def test_counting(reals, uppers, n, k, l):
    c = make_configuration(reals, uppers)
    assert (c.n, c.k, c.l) == (n, k, l)


@pytest.mark.parametrize("uppers", [[(0, 0.0)], [(0, -1.0)], [(np.nan, 1.0)]])
def test_rejects_bad_uppers(uppers):
    with pytest.raises(SpectrumError):
        make_configuration([], uppers)


def test_rejects_nonfinite_real():
    with pytest.raises(SpectrumError):
        make_configuration([np.inf], [])


def test_configuration_is_immutable():
    c = make_configuration([0.0, 1.0], [(0.0, 1.0)])
    with pytest.raises(ValueError):
        c.reals[0] = 3.0


def test_points_and_json_roundtrip(tmp_path):
    c = make_configuration([-0.3, 0.7], [(0.1, 0.25), (-0.5, 1.5)])
    z = c.points()
    assert z.size == c.n
    assert np.sum(z.imag == 0) == c.k
    d = SpectralConfiguration.from_json(c.to_json())
    assert np.array_equal(d.reals, c.reals) and np.array_equal(d.uppers, c.uppers)
    save_configurations_jsonl(tmp_path / "c.jsonl", [c, d])
    back = load_configurations_jsonl(tmp_path / "c.jsonl")
    assert len(back) == 2 and np.array_equal(back[1].uppers, c.uppers)


def test_parity():
    check_parity(4, 2)
    with pytest.raises(ParityError):
        check_parity(4, 3)
    with pytest.raises(ParityError):
        check_parity(4, 6)


@given(st.integers(1, 500), st.floats(0.0, 1.0))
def test_k_for_alpha_parity_and_closeness(n, alpha):
    k = k_for_alpha(alpha, n)
    assert (n - k) % 2 == 0 and 0 <= k <= n
    assert abs(k - alpha * n) <= 1.0 + 1e-9


def test_k_for_alpha_examples():
    assert k_for_alpha(0.5, 1000) == 500
    assert k_for_alpha(1.0, 7) == 7
    assert k_for_alpha(0.0, 7) == 1


# -- measures ------------------------------------------------------------------

def test_measure_examples():
    m = to_measure(make_configuration([0.0], []))
    assert m.points.tolist() == [0j] and m.weights.tolist() == [1.0]
    m = to_measure(make_configuration([], [(0, 1)]))
    assert sorted(m.points.tolist(), key=lambda z: z.imag) == [-1j, 1j]
    assert np.allclose(m.weights, 0.5)
    m = to_measure(make_configuration([-1, 1], [(0, 0.5)]))
    assert m.real_mass == pytest.approx(0.5)


def test_measure_rejects_asymmetric():
    with pytest.raises(SpectrumError):
        EmpiricalMeasure([1j], [1.0])
    with pytest.raises(SpectrumError):
        EmpiricalMeasure([1j, -1j], [0.5, 0.25])
    with pytest.raises(SpectrumError):
        EmpiricalMeasure([0.0], [0.0])


def test_measure_operations(tmp_path):
    m = to_measure(make_configuration([-1, 1], [(0.3, 0.5)]))
    assert m.total_mass == pytest.approx(1.0, rel=1e-12)
    assert m.restrict(True).total_mass == pytest.approx(0.5)
    assert m.restrict(False).total_mass == pytest.approx(0.5)
    assert np.allclose(np.sort_complex(m.mirrored().points), np.sort_complex(-np.conj(m.points)))
    m.to_csv(tmp_path / "m.csv")
    back = EmpiricalMeasure.from_csv(tmp_path / "m.csv")
    assert np.array_equal(back.points, m.points) and np.array_equal(back.weights, m.weights)
    mix = mixture(m, to_measure(make_configuration([0.0], [])), 0.25)
    assert mix.total_mass == pytest.approx(1.0)
    with pytest.raises(ValueError):
        mixture(m, m, 1.0)


def test_second_moment_examples():
    assert second_moment(to_measure(make_configuration([0.0], []))) == 0.0
    disk = EmpiricalMeasure(unit_disk_points(10_000), np.full(10_000, 1e-4))
    assert second_moment(disk) == pytest.approx(0.5, abs=0.01)
    x = semicircle_quantiles(10_000)
    assert second_moment(EmpiricalMeasure(x, np.full(x.size, 1e-4))) == pytest.approx(0.5, abs=0.01)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=0, max_size=6, unique=True),
       st.lists(st.tuples(st.floats(-5, 5), st.floats(0.01, 5)), min_size=0, max_size=4, unique=True))
def test_measure_invariants(reals, uppers):
    if not reals and not uppers:
        return
    c = make_configuration(reals, uppers)
    m = to_measure(c)
    assert m.total_mass == pytest.approx(1.0, rel=1e-12)
    assert m.real_mass == pytest.approx(c.k / c.n, rel=1e-12)
    m.conjugate()


# -- plumbing ------------------------------------------------------------------

def test_rng_streams_are_independent_and_reproducible():
    a = rng_stream(7, 1).standard_normal(5)
    b = rng_stream(7, 1).standard_normal(5)
    c = rng_stream(7, 2).standard_normal(5)
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    d = np.random.Generator(np.random.PCG64(np.random.SeedSequence(7).spawn(3)[2])).standard_normal(5)
    assert np.array_equal(c, d)


def test_gas_params_validation():
    assert GasParams(n=5, k=1).l == 2
    assert GasParams(n=5, k=1).sigma == pytest.approx(math.sqrt(2))
    with pytest.raises(ParityError):
        GasParams(n=5, k=2)
    with pytest.raises(ValueError):
        GasParams(n=4, k=2, dt=0.0)


def test_manifest_roundtrip(tmp_path):
    m = RunManifest("gas", {"n": 10}, seed=3, outputs={"a": "a.csv"})
    p = m.write(tmp_path)
    back = RunManifest.from_json(p.read_text())
    assert back == m
    assert json.loads(p.read_text())["status"] == "running"
