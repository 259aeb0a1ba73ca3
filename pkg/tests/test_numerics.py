import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neurocomp.numerics import (
    RandomStream,
    SymmetricMatrix,
    as_stream,
    batch_means_stderr,
    binomial_stderr,
    erf,
    erfc,
    finite_diff_gradient,
    gaussian_expectation,
    symmetric_eigen,
)


def test_erf_fixed_points():
    assert erf(0.0) == 0.0
    assert erf(-1.0) == -erf(1.0)
    assert erf(1.0) == pytest.approx(0.8427007929497149, abs=1e-15)


@given(st.floats(min_value=-8, max_value=8, allow_nan=False))
def test_erf_agrees_with_stdlib(x):
    assert erf(x) == pytest.approx(math.erf(x), abs=2e-15)


@pytest.mark.parametrize("x", [0.5, 2.9, 3.0, 3.1, 6.0, 22.4])
def test_erfc_keeps_relative_precision_in_the_tail(x):
    assert erfc(x) == pytest.approx(math.erfc(x), rel=1e-12)


def test_gaussian_expectation_moments():
    assert gaussian_expectation(lambda z: np.ones_like(z), 0.7, 2.0) == pytest.approx(1.0, abs=1e-14)
    assert gaussian_expectation(lambda z: z, -1.3, 0.4) == pytest.approx(-1.3, abs=1e-13)
    assert gaussian_expectation(lambda z: z * z, 0.0, 2.5) == pytest.approx(2.5, abs=1e-13)


def test_gaussian_expectation_rejects_bad_variance():
    with pytest.raises(ValueError):
        gaussian_expectation(lambda z: z, 0.0, 0.0)


def test_symmetric_matrix_rejects_asymmetric_entries():
    with pytest.raises(ValueError):
        SymmetricMatrix(np.array([[1.0, 2.0], [0.0, 1.0]]))
    assert SymmetricMatrix.from_array([[1.0, 2.0], [0.0, 1.0]]).entries[0, 1] == 1.0


def test_eigen_identity_and_worked_examples():
    vals, _ = symmetric_eigen(np.eye(2))
    assert np.allclose(vals, [1.0, 1.0])

    vals, vecs = symmetric_eigen(np.array([[2.0, 1.0], [1.0, 2.0]]) / 3)
    assert vals == pytest.approx([1.0, 1.0 / 3.0], abs=1e-14)
    assert np.allclose(vecs[:, 0], np.array([1, 1]) / math.sqrt(2))
    assert np.allclose(abs(vecs[:, 1] @ np.array([-1, 1]) / math.sqrt(2)), 1.0)

    vals, vecs = symmetric_eigen(np.array([[10.0, 5.0], [5.0, 10.0 / 4.0]]) / 4)
    assert vals == pytest.approx([25.0 / 8.0, 0.0], abs=1e-14)
    assert np.allclose(vecs[:, 0], np.array([2, 1]) / math.sqrt(5))


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=1, max_value=7), st.integers(min_value=0, max_value=10_000))
def test_eigen_reconstructs_random_matrices(n, seed):
    a = RandomStream(seed).normal(size=(n, n)) * 10
    a = a + a.T
    vals, vecs = symmetric_eigen(a)
    assert np.all(np.diff(vals) <= 1e-12)
    assert np.allclose(vecs.T @ vecs, np.eye(n), atol=1e-12)
    assert np.allclose(vecs @ np.diag(vals) @ vecs.T, a, atol=1e-10 * max(1.0, np.abs(a).max()))


def test_finite_differences():
    assert finite_diff_gradient(lambda w: float(w[0] ** 2), [3.0])[0] == pytest.approx(6.0, abs=1e-8)
    assert np.all(finite_diff_gradient(lambda w: 4.0, np.ones(3)) == 0.0)
    assert np.allclose(finite_diff_gradient(lambda w: float(w[0] * w[1]), [2.0, 5.0]), [5.0, 2.0], atol=1e-8)
    with pytest.raises(ValueError):
        finite_diff_gradient(lambda w: 0.0, [1.0], h=0.0)


def test_finite_differences_keep_parameter_shape():
    g = finite_diff_gradient(lambda w: float(np.sum(w * w)), np.arange(6.0).reshape(2, 3))
    assert g.shape == (2, 3)
    assert np.allclose(g, 2 * np.arange(6.0).reshape(2, 3), atol=1e-8)


def test_streams_are_reproducible_and_independent():
    a, b = RandomStream(42), RandomStream(42)
    assert np.array_equal(a.normal(size=20), b.normal(size=20))
    assert np.array_equal(a.spins(10), b.spins(10))
    c1, c2 = RandomStream(42).spawn(2)
    assert not np.array_equal(c1.uniform(size=5), c2.uniform(size=5))
    d1, _ = RandomStream(42).spawn(2)
    assert np.array_equal(RandomStream(42).spawn(2)[0].uniform(size=5), d1.uniform(size=5))
    assert as_stream(7).uniform() == RandomStream(7).uniform()


def test_stream_draw_ranges_and_moments():
    s = RandomStream(3)
    u = s.uniform(size=100_000)
    assert u.min() >= 0.0 and u.max() < 1.0
    z = s.normal(size=200_000)
    assert abs(z.mean()) < 5 / math.sqrt(200_000)
    assert abs(z.var() - 1.0) < 0.02
    assert set(np.unique(s.spins(1000))) == {-1, 1}


def test_standard_errors():
    assert binomial_stderr(0.5, 100) == pytest.approx(0.05)
    rng = RandomStream(0)
    x = rng.normal(size=20_000)
    assert batch_means_stderr(x) == pytest.approx(1 / math.sqrt(20_000), rel=0.5)
