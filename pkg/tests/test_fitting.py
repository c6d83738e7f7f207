"""
Tests for least-squares quadratic fitting
"""

import numpy as np
import pytest

from lagflow.core.cone import sample_cone
from lagflow.core.grid import ScalarField
from lagflow.services.fitting import fit_quadratic, quadratic_fit_distance


def test_recovers_coefficients(grid):
    u = ScalarField.from_function(
        grid, lambda x: 0.25 * x[0] ** 2 + 0.1 * x[0] * x[1] - 0.15 * x[1] ** 2 + 0.3 * x[0] - 0.2 * x[1] + 1.5
    )
    fit = fit_quadratic(u, margin=2)
    np.testing.assert_allclose(fit.hessian.to_array(), [[0.5, 0.1], [0.1, -0.3]], atol=1e-12)
    np.testing.assert_allclose(fit.linear, [0.3, -0.2], atol=1e-12)
    assert fit.constant == pytest.approx(1.5, abs=1e-12)
    np.testing.assert_allclose(fit.evaluate(grid.coordinates()), u.values, atol=1e-11)


def test_distance_vanishes_on_quadratics(grid, quadratic_cone):
    assert quadratic_fit_distance(sample_cone(quadratic_cone, grid), margin=2) <= 1e-11


def test_distance_is_positive_for_a_nonsmooth_cone(grid, two_sector_cone):
    assert quadratic_fit_distance(sample_cone(two_sector_cone, grid), margin=2) > 0.1
