from math import factorial

import numpy as np
import pytest

from dritz.quadrature import (REFERENCE_MEASURE, ReferenceBasis, gauss_interval, gauss_triangle,
                              local_dimension)


@pytest.mark.parametrize("degree", range(0, 12))
def test_interval_rule_exact_for_monomials(degree):
    x, w = gauss_interval(degree)
    assert len(w) % 2 == 0
    for a in range(degree + 1):
        assert np.sum(w * x[:, 0] ** a) == pytest.approx(1.0 / (a + 1), rel=1e-13)


def test_interval_rule_avoids_midpoint():
    for degree in range(0, 12):
        x, _ = gauss_interval(degree)
        assert np.min(np.abs(x[:, 0] - 0.5)) > 1e-3


@pytest.mark.parametrize("degree", range(0, 9))
def test_triangle_rule_exact_for_monomials(degree):
    x, w = gauss_triangle(degree)
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            exact = factorial(a) * factorial(b) / factorial(a + b + 2)
            assert np.sum(w * x[:, 0] ** a * x[:, 1] ** b) == pytest.approx(exact, rel=1e-12)


@pytest.mark.parametrize("dim,k", [(1, 0), (1, 1), (1, 3), (2, 0), (2, 1), (2, 2), (2, 3)])
def test_basis_is_orthonormal_on_reference(dim, k):
    basis = ReferenceBasis(dim, k)
    assert basis.size == local_dimension(dim, k)
    x, w = gauss_interval(2 * k + 2) if dim == 1 else gauss_triangle(2 * k + 2)
    phi = basis.values(x)
    gram = phi.T @ (w[:, None] * phi)
    np.testing.assert_allclose(gram, REFERENCE_MEASURE[dim] * np.eye(basis.size), atol=1e-13)
    np.testing.assert_allclose(phi[:, 0], 1.0, atol=1e-14)


def test_basis_gradients_match_finite_differences():
    basis = ReferenceBasis(2, 3)
    x = np.array([[0.2, 0.3], [0.1, 0.7]])
    g = basis.gradients(x)
    step = 1e-6
    for i in range(2):
        e = np.zeros(2)
        e[i] = step
        fd = (basis.values(x + e) - basis.values(x - e)) / (2 * step)
        np.testing.assert_allclose(g[..., i], fd, atol=1e-7)
