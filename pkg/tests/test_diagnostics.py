"""
Tests for derivative monitors, the minimality diagnostic and FlowReport
"""

import math

import numpy as np
import pandas as pd
import pytest

from lagflow.core.cone import sample_cone
from lagflow.core.config import RunConfig
from lagflow.core.exceptions import GridError, MissingSnapshotError, ReportError
from lagflow.core.grid import Grid, ScalarField
from lagflow.services.closure import BoundaryClosure
from lagflow.services.diagnostics import (
    D4_COLUMNS,
    REPORT_COLUMNS,
    FlowReport,
    ReportRow,
    d3_sup,
    d4_sup,
    decay_monitor,
    gradient_drift,
    graph_export,
    graph_points,
    minimality_defect,
)
from lagflow.services.flow_engine import run_flow


def _row(step, time=0.0, d3_sqrt_t=0.0):
    return ReportRow(
        step=step,
        time=time,
        residual_sup=0.0,
        hess_min=0.0,
        hess_max=0.0,
        d3_sup=0.0,
        d3_sqrt_t=d3_sqrt_t,
        defect=0.0,
        change_rate=0.0,
    )


def _report(grid, kind="physical", **kwargs):
    return FlowReport(kind=kind, grid=grid, closure=BoundaryClosure.periodic_none(), margin=2, **kwargs)


class TestDerivativeMonitors:
    def test_quadratic_has_no_third_derivative(self, grid, quadratic_cone):
        u = sample_cone(quadratic_cone, grid)
        assert d3_sup(u, BoundaryClosure.frozen(quadratic_cone)) <= 1e-10
        assert d4_sup(u, BoundaryClosure.fitted_quadratic()) <= 1e-8

    def test_cubic(self, grid):
        u = ScalarField.from_function(grid, lambda x: x[0] ** 3 / 6.0)
        # NaN ghosts only touch the excluded rim
        assert d3_sup(u, BoundaryClosure.periodic_none(), margin=2) == pytest.approx(1.0, abs=1e-9)

    def test_two_sector_cone_is_not_smooth(self, grid, two_sector_cone):
        u = sample_cone(two_sector_cone, grid)
        assert d3_sup(u, BoundaryClosure.frozen(two_sector_cone)) > 1.0

    def test_needs_seven_points(self):
        small = Grid(dim=1, radius=1.0, points_per_axis=5)
        with pytest.raises(GridError):
            d3_sup(ScalarField.zeros(small), BoundaryClosure.periodic_none())


class TestMinimality:
    def test_quadratic_is_minimal(self, grid, quadratic_cone):
        u = sample_cone(quadratic_cone, grid)
        assert minimality_defect(u, BoundaryClosure.frozen(quadratic_cone)) <= 1e-12

    def test_two_sector_defect(self, grid, two_sector_cone):
        # sector angles are arctan(0.3) +- arctan(0.5), and the column x1 = 0 has angle arctan(0.3)
        u = sample_cone(two_sector_cone, grid)
        defect = minimality_defect(u, BoundaryClosure.frozen(two_sector_cone))
        assert defect == pytest.approx(math.atan(0.5), abs=1e-12)


class TestGradient:
    def test_drift_of_a_constant_shift_is_zero(self, grid, quadratic_cone):
        u0 = sample_cone(quadratic_cone, grid)
        closure = BoundaryClosure.frozen(quadratic_cone)
        assert gradient_drift(u0 + 0.3, u0, closure.shifted(0.3)) <= 1e-12

    def test_graph_points(self, grid, quadratic_cone):
        u = sample_cone(quadratic_cone, grid)
        frame = graph_points(u, BoundaryClosure.frozen(quadratic_cone), margin=1)
        assert list(frame.columns) == ["x1", "x2", "du1", "du2"]
        assert len(frame) == 31 * 31
        np.testing.assert_allclose(frame["du1"], 0.5 * frame["x1"], atol=1e-12)
        np.testing.assert_allclose(frame["du2"], 0.3 * frame["x2"], atol=1e-12)

    def test_graph_export(self, grid, quadratic_cone, tmp_path):
        u = sample_cone(quadratic_cone, grid)
        path = graph_export(u, BoundaryClosure.frozen(quadratic_cone), tmp_path / "graph.csv")
        frame = pd.read_csv(path)
        assert len(frame) == 33 * 33


class TestFlowReport:
    def test_rows_must_increase(self, grid):
        report = _report(grid)
        report.append(_row(0))
        report.append(_row(3))
        with pytest.raises(ReportError):
            report.append(_row(3))

    def test_final_of_empty_report(self, grid):
        with pytest.raises(ReportError):
            _ = _report(grid).final

    def test_missing_snapshot(self, grid):
        report = _report(grid)
        report.add_snapshot(1.0, ScalarField.zeros(grid))
        assert report.snapshot(1.0 + 1e-14) is report.snapshots[1.0]
        with pytest.raises(MissingSnapshotError):
            report.snapshot(2.0)

    def test_frame_columns(self, grid):
        report = _report(grid)
        report.append(_row(0))
        assert list(report.to_frame().columns) == REPORT_COLUMNS
        with_d4 = _report(grid, with_d4=True)
        with_d4.append(_row(0))
        assert list(with_d4.to_frame().columns) == REPORT_COLUMNS + D4_COLUMNS

    def test_flow_report_with_d4(self, grid, quadratic_cone):
        u0 = sample_cone(quadratic_cone, grid)
        config = RunConfig(t_end=0.1, snapshot_stride=2, monitor_d4=True)
        _, report = run_flow(u0, BoundaryClosure.frozen(quadratic_cone), config)
        frame = report.to_frame()
        assert "d4_t" in frame.columns
        assert np.all(frame["d4_sup"] <= 1e-6)


class TestDecayMonitor:
    def test_constant_and_trend(self, grid):
        report = _report(grid)
        for step, value in enumerate([0.0, 0.5, 0.4, 0.3]):
            report.append(_row(step * 10, time=float(step), d3_sqrt_t=value))
        constant, trend = decay_monitor(report, 3)
        assert constant == 0.5
        assert trend

    def test_increase_after_transient(self, grid):
        report = _report(grid)
        for step, value in enumerate([0.0, 0.3, 0.4]):
            report.append(_row(step * 10, time=float(step), d3_sqrt_t=value))
        _, trend = decay_monitor(report, 3)
        assert not trend

    @pytest.mark.parametrize("l", [2, 5])
    def test_unsupported_order(self, grid, l):
        with pytest.raises(ReportError):
            decay_monitor(_report(grid), l)

    def test_rescaled_report_is_rejected(self, grid):
        report = _report(grid, kind="rescaled_expander")
        report.append(_row(0))
        report.append(_row(1))
        with pytest.raises(ReportError):
            decay_monitor(report)

    def test_needs_two_rows(self, grid):
        report = _report(grid)
        report.append(_row(0))
        with pytest.raises(ReportError):
            decay_monitor(report)

    def test_needs_positive_times(self, grid):
        report = _report(grid)
        report.append(_row(0))
        report.append(_row(1))
        with pytest.raises(ReportError):
            decay_monitor(report)

    def _self_similar_report(self, grid, decay):
        # u(x, t) = x1^3 / sqrt(t) keeps |D^3u| sqrt t fixed; without decay it grows
        report = FlowReport(kind="physical", grid=grid, closure=BoundaryClosure.extrapolated(), margin=2)
        for step, value in enumerate([0.0, 0.3, 0.4]):
            report.append(_row(step * 10, time=float(step), d3_sqrt_t=value))
        for t in (1.0, 4.0):
            scale = 1.0 / np.sqrt(t) if decay else 1.0
            report.add_snapshot(t, ScalarField.from_function(grid, lambda x: 0.05 * scale * x[0] ** 3))
        return report

    def test_snapshot_trend_ignores_the_early_rows(self, grid):
        report = self._self_similar_report(grid, decay=True)
        assert not decay_monitor(report, 3)[1]
        constant, trend = decay_monitor(report, 3, times=[4.0, 1.0])
        assert trend
        assert constant == pytest.approx(d3_sup(report.snapshot(1.0), report.closure, 2), rel=1e-12)

    def test_snapshot_trend_sees_growth(self, grid):
        report = self._self_similar_report(grid, decay=False)
        _, trend = decay_monitor(report, 3, times=[1.0, 4.0])
        assert not trend

    def test_snapshot_times_must_be_positive(self, grid):
        report = self._self_similar_report(grid, decay=True)
        with pytest.raises(ReportError):
            decay_monitor(report, 3, times=[0.0, 1.0])

    def test_physical_flow_is_flat_for_a_quadratic(self, grid, quadratic_cone, fast_config):
        u0 = sample_cone(quadratic_cone, grid)
        _, report = run_flow(u0, BoundaryClosure.frozen(quadratic_cone), fast_config)
        constant, _ = decay_monitor(report)
        assert constant <= 1e-9
