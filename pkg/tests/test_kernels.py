import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gamma, kv

from gpactive import kernels
from gpactive.kernels import Family, KernelSpec

FAMILIES = list(Family)


def bessel_matern(nu, r):
    """General Matern form with the modified Bessel function K_nu."""
    z = math.sqrt(2 * nu) * r
    return 2 ** (1 - nu) / gamma(nu) * z**nu * kv(nu, z)


def spec(family, *ls):
    return KernelSpec(family, ls or (1.0,))


@pytest.mark.parametrize("family,expected", [
    (Family.SE, math.exp(-0.5)),
    (Family.Matern32, (1 + math.sqrt(3)) * math.exp(-math.sqrt(3))),
    (Family.Matern52, (1 + math.sqrt(5) + 5 / 3) * math.exp(-math.sqrt(5))),
])
def test_unit_distance_values(family, expected):
    assert kernels.eval(spec(family), [0.0], [1.0]) == pytest.approx(expected, rel=1e-12, abs=0)


def test_hand_values_to_five_decimals():
    # 0.48335 is the truncated, not rounded, form of 0.4833577...
    assert kernels.eval(spec("SE"), [0], [1]) == pytest.approx(0.60653, abs=1e-5)
    assert kernels.eval(spec("Matern32"), [0], [1]) == pytest.approx(0.48335, abs=1e-5)
    assert kernels.eval(spec("Matern52"), [0], [1]) == pytest.approx(0.52399, abs=1e-5)


@pytest.mark.parametrize("family", FAMILIES)
def test_unit_peak_is_exact(family):
    assert kernels.eval(spec(family), [0.3], [0.3]) == 1.0
    assert kernels.eval(spec(family, 0.2, 5.0), [0.1, 0.9], [0.1, 0.9]) == 1.0


@pytest.mark.parametrize("family,nu", [(Family.Matern32, 1.5), (Family.Matern52, 2.5)])
@pytest.mark.parametrize("r", [1e-3, 0.1, 0.5, 1.0, 2.7, 8.0])
def test_matern_closed_form_matches_bessel_definition(family, nu, r):
    got = kernels.eval(spec(family), [0.0], [r])
    assert got == pytest.approx(bessel_matern(nu, r), rel=1e-10)


def test_scaled_distance_uses_lengthscales():
    s = spec("SE", 2.0, 0.5)
    assert kernels.scaled_distance(s, [0, 0], [1, 1]) == pytest.approx(math.sqrt(0.25 + 4.0))
    assert kernels.scaled_distance(s, [0.4, 0.2], [0.4, 0.2]) == 0.0


def test_anisotropic_se_matches_quadratic_form():
    s = spec("SE", 0.3, 2.0)
    u, v = np.array([0.1, 0.7]), np.array([0.5, 0.2])
    M = np.diag(np.array(s.lengthscales) ** 2)
    expected = math.exp(-0.5 * (u - v) @ np.linalg.solve(M, u - v))
    assert kernels.eval(s, u, v) == pytest.approx(expected, rel=1e-14)


class TestErrors:
    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            kernels.eval(spec("SE", 1.0, 1.0), [0.0], [1.0])
        with pytest.raises(ValueError):
            kernels.gram_matrix(spec("SE"), np.zeros((3, 2)))
        with pytest.raises(ValueError):
            kernels.cross_vector(spec("SE"), np.zeros((3, 1)), [0.1, 0.2])

    def test_non_finite(self):
        with pytest.raises(ValueError):
            kernels.eval(spec("SE"), [np.nan], [0.0])
        with pytest.raises(ValueError):
            kernels.eval(spec("Matern32"), [0.0], [np.inf])

    @pytest.mark.parametrize("bad", [0.0, -1.0, np.nan, np.inf])
    def test_lengthscales_positive(self, bad):
        with pytest.raises(ValueError):
            KernelSpec(Family.SE, (1.0, bad))

    def test_unknown_family(self):
        with pytest.raises(ValueError):
            KernelSpec("periodic", (1.0,))


def test_gram_matrix_examples():
    assert kernels.gram_matrix(spec("Matern52"), [[0.4]]).tolist() == [[1.0]]
    K = kernels.gram_matrix(spec("SE"), [[0.0], [1.0]])
    e = math.exp(-0.5)
    np.testing.assert_allclose(K, [[1, e], [e, 1]], rtol=1e-14)
    np.testing.assert_array_equal(kernels.gram_matrix(spec("Matern32"), [[0.5]] * 3), np.ones((3, 3)))


def test_cross_vector_examples():
    X = [[0.0], [1.0]]
    np.testing.assert_allclose(kernels.cross_vector(spec("SE"), X, [0.5]), [math.exp(-0.125)] * 2, rtol=1e-14)
    assert kernels.cross_vector(spec("SE"), X, [1.0])[1] == 1.0
    assert kernels.cross_vector(spec("SE"), np.empty((0, 1)), [0.5]).shape == (0,)


@pytest.mark.parametrize("family", FAMILIES)
def test_cross_vector_entries_equal_eval(family):
    rng = np.random.default_rng(3)
    s = spec(family, 0.3, 0.8, 1.5)
    X = rng.random((6, 3))
    u = rng.random(3)
    expected = [kernels.eval(s, x, u) for x in X]
    np.testing.assert_allclose(kernels.cross_vector(s, X, u), expected, rtol=1e-13)


# -- gradients -----------------------------------------------------------

def fd_gram_gradient(s, X, h=1e-6):
    theta = np.log(s.lengthscales)
    out = []
    for j in range(len(theta)):
        tp, tm = theta.copy(), theta.copy()
        tp[j] += h
        tm[j] -= h
        Kp = kernels.gram_matrix(s.with_lengthscales(np.exp(tp)), X)
        Km = kernels.gram_matrix(s.with_lengthscales(np.exp(tm)), X)
        out.append((Kp - Km) / (2 * h))
    return np.array(out)


def test_gram_gradient_single_point_is_zero():
    g = kernels.gram_gradient(spec("Matern52", 0.5, 2.0), [[0.1, 0.2]])
    assert g.shape == (2, 1, 1)
    assert np.all(g == 0)


def test_gram_gradient_se_hand_value():
    g = kernels.gram_gradient(spec("SE"), [[0.0], [1.0]])
    assert g[0, 0, 1] == pytest.approx(math.exp(-0.5), rel=1e-14)
    assert g[0, 1, 0] == g[0, 0, 1]


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("seed", range(5))
def test_gram_gradient_matches_finite_differences(family, seed):
    rng = np.random.default_rng(seed)
    d = 1 + seed % 3
    s = KernelSpec(family, tuple(np.exp(rng.uniform(-1.5, 1.0, d))))
    X = rng.random((4, d))
    analytic = kernels.gram_gradient(s, X)
    numeric = fd_gram_gradient(s, X)
    big = np.abs(numeric) > 1e-8
    assert np.all(np.abs(analytic[~big]) < 1e-7)
    rel = np.abs(analytic[big] - numeric[big]) / np.abs(numeric[big])
    assert rel.max() < 1e-5
    for g in analytic:
        np.testing.assert_array_equal(g, g.T)
        assert np.all(np.diag(g) == 0)


# -- properties ----------------------------------------------------------

unit = st.floats(0.0, 1.0, allow_nan=False)
lengths = st.floats(0.01, 100.0, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(FAMILIES), st.lists(st.tuples(unit, unit, lengths), min_size=1, max_size=4))
def test_symmetry_and_range(family, coords):
    u = [c[0] for c in coords]
    v = [c[1] for c in coords]
    s = KernelSpec(family, tuple(c[2] for c in coords))
    a, b = kernels.eval(s, u, v), kernels.eval(s, v, u)
    assert a == b
    assert 0.0 <= a <= 1.0


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(FAMILIES), unit, unit, st.floats(-5, 5), lengths)
def test_stationarity(family, u, v, shift, ell):
    s = KernelSpec(family, (ell,))
    assert kernels.eval(s, [u + shift], [v + shift]) == pytest.approx(kernels.eval(s, [u], [v]), abs=1e-12)


@pytest.mark.parametrize("family", FAMILIES)
def test_monotone_decay(family):
    s = KernelSpec(family, (0.4,))
    dist = np.linspace(0.0, 3.0, 400)
    vals = np.array([kernels.eval(s, [0.0], [x]) for x in dist])
    assert np.all(np.diff(vals) < 0)


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("d", [1, 2, 6])
def test_gram_admits_cholesky_with_small_nugget(family, d):
    rng = np.random.default_rng(d)
    for _ in range(20):
        X = rng.random((10, d))
        s = KernelSpec(family, tuple(np.exp(rng.uniform(np.log(0.05), np.log(2.0), d))))
        np.linalg.cholesky(kernels.gram_matrix(s, X) + 1e-10 * np.eye(10))
