"""
Tests for cone specs, sampling and compact bumps
"""

import numpy as np
import pytest

from lagflow.core.cone import ConeSector, ConeSpec, add_compact_bump, bump_hessian_bound, sample_cone
from lagflow.core.exceptions import ConeCoverageError, GridError
from lagflow.core.grid import Grid
from lagflow.services.kernels import SymMatrix


class TestConeSpec:
    def test_two_sector_values(self, two_sector_cone):
        points = np.array([[1.0, -1.0, 0.0], [2.0, 2.0, 2.0]])
        np.testing.assert_allclose(two_sector_cone.evaluate(points), [0.85, 0.35, 0.6])

    def test_first_matching_sector_wins_on_interfaces(self, two_sector_cone):
        index = two_sector_cone.sector_index(np.array([[0.0, -0.5], [1.0, 1.0]]))
        assert index.tolist() == [0, 1]

    def test_interface_is_continuous(self, two_sector_cone):
        assert two_sector_cone.interface_defect() == 0.0

    def test_discontinuous_cone_is_detected(self):
        cone = ConeSpec(
            dim=2,
            sectors=(
                ConeSector(sign_pattern=(1, 0), hessian=SymMatrix.diag([0.5, 0.3])),
                ConeSector(sign_pattern=(-1, 0), hessian=SymMatrix.diag([0.5, -0.3])),
            ),
        )
        assert cone.interface_defect() == pytest.approx(0.3, rel=1e-12)

    def test_coverage_gap(self):
        cone = ConeSpec(dim=2, sectors=(ConeSector(sign_pattern=(1, 0), hessian=SymMatrix.diag([0.5, 0.3])),))
        with pytest.raises(ConeCoverageError):
            cone.evaluate(np.array([[-1.0], [0.0]]))

    def test_sign_pattern_validation(self):
        with pytest.raises(ValueError):
            ConeSector(sign_pattern=(2, 0), hessian=SymMatrix.diag([0.5, 0.3]))
        with pytest.raises(ValueError):
            ConeSector(sign_pattern=(1,), hessian=SymMatrix.diag([0.5, 0.3]))

    def test_quadratic_detection(self, quadratic_cone, two_sector_cone):
        assert quadratic_cone.is_quadratic()
        assert not two_sector_cone.is_quadratic()

    def test_angles(self, two_sector_cone):
        plus, minus = two_sector_cone.sector_angles()
        assert plus == pytest.approx(np.arctan(0.5) + np.arctan(0.3))
        assert minus == pytest.approx(-np.arctan(0.5) + np.arctan(0.3))
        assert two_sector_cone.max_spectral_radius() == pytest.approx(0.5)

    def test_sampling_is_homogeneous(self, two_sector_cone, grid):
        u = sample_cone(two_sector_cone, grid)
        assert u.value_at((2.0, -1.0)) == pytest.approx(4.0 * u.value_at((1.0, -0.5)))

    def test_sampling_dimension_mismatch(self, two_sector_cone):
        with pytest.raises(GridError):
            sample_cone(two_sector_cone, Grid(dim=3, radius=1.0, points_per_axis=5))


class TestBump:
    def test_peak_and_cutoff(self, quadratic_cone, grid):
        u = sample_cone(quadratic_cone, grid)
        bumped = add_compact_bump(u, (0.0, 0.0), 0.1, 0.5)
        diff = bumped.values - u.values
        assert diff[grid.origin] == pytest.approx(0.1)
        assert bumped.value_at((2.0, 0.0)) == u.value_at((2.0, 0.0))

    def test_zero_amplitude_is_identity(self, quadratic_cone, grid):
        u = sample_cone(quadratic_cone, grid)
        assert add_compact_bump(u, (0.0, 0.0), 0.0, 0.5) is u

    @pytest.mark.parametrize(
        "center, width",
        [((0.0, 0.0), 1.5), ((1.0, 0.0), 1.0), ((0.0, 0.0), 0.0), ((0.0, 0.0), 1.0), ((0.0, 3.0), 0.25)],
    )
    def test_support_must_fit(self, quadratic_cone, grid, center, width):
        u = sample_cone(quadratic_cone, grid)
        with pytest.raises(GridError):
            add_compact_bump(u, center, 0.1, width)

    def test_hessian_bound(self):
        assert bump_hessian_bound(0.1, 1.0) == pytest.approx(0.2)
        assert bump_hessian_bound(-0.01, 0.5) == pytest.approx(0.08)
