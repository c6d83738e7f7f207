"""
Tests for time stepping, run_flow, self-similarity and scaling
"""

import numpy as np
import pandas as pd
import pytest

from lagflow.core.cone import ConeSpec, add_compact_bump, sample_cone
from lagflow.core.config import RunConfig
from lagflow.core.exceptions import GridError, NumericalBlowUpError, UsageError
from lagflow.core.grid import Grid, ScalarField
from lagflow.services.closure import BoundaryClosure, cone_closure
from lagflow.services.flow_engine import (
    FlowEngine,
    FlowKind,
    FlowState,
    GaugeReference,
    run_flow,
    scaling_transform,
    self_similarity_defect,
    self_similarity_gap,
    step_normalized_shrinker,
    step_physical,
    step_rescaled_expander,
)
from lagflow.services.kernels import SymMatrix, angle
from lagflow.services.operator import expander_residual, sup_interior
from lagflow.services.solitons import quadratic_soliton

G_DIAG = 0.7551044034786732


class TestEngine:
    def test_refuses_periodic_none(self, grid, fast_config):
        with pytest.raises(UsageError):
            FlowEngine(grid, BoundaryClosure.periodic_none(), fast_config)

    def test_implicit_is_physical_only(self, grid, quadratic_cone):
        config = RunConfig(integrator="linearized_implicit")
        with pytest.raises(UsageError):
            FlowEngine(grid, BoundaryClosure.expander(quadratic_cone), config, FlowKind.RESCALED_EXPANDER)

    def test_time_steps(self, grid, quadratic_cone, fast_config):
        closure = BoundaryClosure.frozen(quadratic_cone)
        physical = FlowEngine(grid, closure, fast_config)
        assert physical.time_step == pytest.approx(0.9 * 0.0625 / 4)
        rescaled = FlowEngine(grid, closure, fast_config, FlowKind.RESCALED_EXPANDER)
        assert rescaled.time_step == pytest.approx(0.9 * min(0.0625 / 4, 0.25 / 2.0))
        implicit = FlowEngine(grid, closure, RunConfig(integrator="linearized_implicit", implicit_dt_multiplier=8))
        assert implicit.time_step == pytest.approx(8 * physical.time_step)

    def test_single_physical_step_adds_the_angle(self, grid, quadratic_cone, fast_config):
        u0 = sample_cone(quadratic_cone, grid)
        state = step_physical(FlowState(u0, 0.0, 0, fast_config), BoundaryClosure.frozen(quadratic_cone), dt=0.01)
        assert state.step_count == 1
        assert state.time == pytest.approx(0.01)
        np.testing.assert_allclose(state.field.values, u0.values + 0.01 * G_DIAG, atol=1e-13)

    def test_expander_soliton_is_a_fixed_point(self, grid, diag_hessian, fast_config):
        soliton = quadratic_soliton(diag_hessian, "expander")
        v = soliton.sample(grid)
        state = step_rescaled_expander(FlowState(v, 0.0, 0, fast_config), soliton.closure())
        assert np.max(np.abs(state.field.values - v.values)) <= 1e-13

    def test_default_drift_is_centered(self, grid, diag_hessian):
        soliton = quadratic_soliton(diag_hessian, "expander")
        v = soliton.sample(grid)
        centered = step_rescaled_expander(FlowState(v, 0.0, 0, RunConfig()), soliton.closure())
        upwind = step_rescaled_expander(FlowState(v, 0.0, 0, RunConfig(drift_scheme="upwind")), soliton.closure())
        assert centered.field.sup_distance(v) <= 1e-13
        # one-sided differences are first order and miss the quadratic's drift
        assert upwind.field.sup_distance(v) > 1e-6

    def test_shrinker_gauge_pins_origin(self, grid, diag_hessian, fast_config):
        soliton = quadratic_soliton(diag_hessian, "shrinker")
        w0 = add_compact_bump(soliton.sample(grid), (0.0, 0.0), 0.01, 0.5)
        state = FlowState(w0, 0.0, 0, fast_config)
        closure = BoundaryClosure.fitted_quadratic()
        for _ in range(3):
            state = step_normalized_shrinker(state, closure, soliton.gauge())
        assert state.field.values[grid.origin] == pytest.approx(soliton.constant, abs=1e-13)
        assert GaugeReference.of_field(state.field).gradient == pytest.approx((0.0, 0.0), abs=1e-13)

    def test_blow_up_is_reported(self, grid, quadratic_cone):
        config = RunConfig(blowup_threshold=1.0)
        u0 = sample_cone(quadratic_cone, grid)
        with pytest.raises(NumericalBlowUpError) as info:
            step_physical(FlowState(u0, 0.0, 0, config), BoundaryClosure.frozen(quadratic_cone))
        assert info.value.step == 1
        assert info.value.exit_code == 2


class TestRunFlow:
    def test_exact_quadratic_flow(self, grid, quadratic_cone, fast_config):
        u0 = sample_cone(quadratic_cone, grid)
        state, report = run_flow(u0, BoundaryClosure.frozen(quadratic_cone), fast_config)
        assert state.time == pytest.approx(0.25, abs=1e-14)
        error = np.max(np.abs(state.field.values - (u0.values + state.time * G_DIAG)))
        assert error <= 1e-11
        assert report.final.step == state.step_count

    def test_linearized_implicit_quadratic_flow(self, grid, quadratic_cone):
        config = RunConfig(t_end=0.25, integrator="linearized_implicit", implicit_dt_multiplier=10)
        u0 = sample_cone(quadratic_cone, grid)
        state, _ = run_flow(u0, BoundaryClosure.frozen(quadratic_cone), config)
        error = np.max(np.abs(state.field.values - (u0.values + 0.25 * G_DIAG)))
        assert error <= 1e-9

    def test_snapshots_land_exactly(self, grid, two_sector_cone, fast_config):
        u0 = sample_cone(two_sector_cone, grid)
        _, report = run_flow(u0, cone_closure(two_sector_cone), fast_config, snapshot_times=[0.0, 0.1, 0.25])
        assert sorted(report.snapshots) == pytest.approx([0.0, 0.1, 0.25])
        assert report.snapshot(0.0) is u0
        steps = report.column("step")
        assert np.all(np.diff(steps) > 0)

    def test_report_semantics_for_physical_flow(self, grid, two_sector_cone, fast_config):
        u0 = sample_cone(two_sector_cone, grid)
        _, report = run_flow(u0, cone_closure(two_sector_cone), fast_config)
        frame = report.to_frame()
        first = frame.iloc[0]
        assert np.isnan(first["residual_sup"])
        assert np.isnan(first["defect"])
        assert first["d3_sqrt_t"] == 0.0
        assert np.all(np.isfinite(frame["residual_sup"].iloc[1:]))
        assert np.all(frame["hess_max"] <= 0.5 + 1e-3)

    def test_rescaled_flow_stops_when_stationary(self, grid, diag_hessian):
        soliton = quadratic_soliton(diag_hessian, "expander")
        config = RunConfig(s_end=50.0, stationarity_checks=5)
        state, report = run_flow(soliton.sample(grid), soliton.closure(), config, FlowKind.RESCALED_EXPANDER)
        assert state.step_count == 5
        assert state.time < config.s_end
        assert np.isnan(report.final.d3_sqrt_t)

    def test_rescaled_expander_damps_a_bump(self, grid, diag_hessian):
        soliton = quadratic_soliton(diag_hessian, "expander")
        v = soliton.sample(grid)
        bumped = add_compact_bump(v, (0.0, 0.0), 0.1, 0.5)
        state, _ = run_flow(bumped, soliton.closure(), RunConfig(s_end=1.0), FlowKind.RESCALED_EXPANDER)
        # the zeroth-order term alone contracts the perturbation by e^-s
        assert state.field.sup_distance(v) <= 0.05

    def test_end_time_must_follow_start(self, grid, quadratic_cone, fast_config):
        u0 = sample_cone(quadratic_cone, grid)
        with pytest.raises(UsageError):
            run_flow(u0, BoundaryClosure.frozen(quadratic_cone), fast_config, start_time=1.0)

    def test_worker_count_is_bitwise_invisible(self, two_sector_cone):
        grid = Grid(dim=2, radius=4.0, points_per_axis=97)
        u0 = sample_cone(two_sector_cone, grid)
        closure = BoundaryClosure.expander(two_sector_cone)
        runs = []
        for workers in (1, 4):
            config = RunConfig(s_end=0.01, snapshot_stride=2, workers=workers)
            runs.append(run_flow(u0, closure, config, FlowKind.RESCALED_EXPANDER))
        (s1, r1), (s4, r4) = runs
        np.testing.assert_array_equal(s1.field.values, s4.field.values)
        pd.testing.assert_frame_equal(r1.to_frame(), r4.to_frame(), check_exact=True)


class TestSelfSimilarity:
    def test_gap_vanishes_for_self_similar_fields(self, grid, quadratic_cone, diag_hessian):
        g = angle(diag_hessian)
        cone = sample_cone(quadratic_cone, grid)
        at_one = cone + 1.0 * g
        at_four = cone + 4.0 * g
        assert self_similarity_gap(at_one, 1.0, at_four, 4.0, 4) <= 1e-12

    def test_gap_sees_a_bump(self, grid, quadratic_cone):
        cone = sample_cone(quadratic_cone, grid)
        bumped = add_compact_bump(cone, (0.0, 0.0), 0.1, 0.5)
        assert self_similarity_gap(bumped, 1.0, cone, 4.0, 4) == pytest.approx(0.1, abs=1e-12)

    def test_defect_uses_report_snapshots(self, grid, quadratic_cone):
        u0 = sample_cone(quadratic_cone, grid)
        _, report = run_flow(
            u0, BoundaryClosure.frozen(quadratic_cone), RunConfig(t_end=4.0, snapshot_stride=50), snapshot_times=[1.0, 4.0]
        )
        assert self_similarity_defect(report, 1.0, 4.0) <= 1e-10
        assert self_similarity_defect(report, 4.0, 4.0) == 0.0

    def test_positive_times_only(self, grid):
        field = ScalarField.zeros(grid)
        with pytest.raises(UsageError):
            self_similarity_gap(field, 0.0, field, 1.0, 2)


class TestScaling:
    def test_cone_is_invariant(self, grid, two_sector_cone):
        u = sample_cone(two_sector_cone, grid)
        scaled = scaling_transform(u, 2.0)
        window = scaled.window()
        assert window.radius == 2.0
        assert not scaled.uses_interpolation(window.coordinates())
        np.testing.assert_allclose(scaled.on_window().values, sample_cone(two_sector_cone, window).values, atol=1e-13)

    def test_invalid_factor(self, grid):
        with pytest.raises(GridError):
            scaling_transform(ScalarField.zeros(grid), 0.0)


def _shifted_cone(cone, grid, offset):
    a = (np.asarray(offset, dtype=float) * grid.spacing).reshape(-1, 1, 1)
    return ScalarField.from_function(grid, lambda x: cone.evaluate(x - a))


class TestEquivariance:
    @pytest.mark.parametrize("kind", ["quadratic", "two_sector"])
    def test_constant_shift(self, grid, quadratic_cone, two_sector_cone, fast_config, kind):
        if kind == "quadratic":
            u0, closure = sample_cone(quadratic_cone, grid), BoundaryClosure.frozen(quadratic_cone)
        else:
            u0, closure = sample_cone(two_sector_cone, grid), BoundaryClosure.cone_relative(two_sector_cone)
        c = 1.75
        plain = step_physical(FlowState(u0, 0.0, 0, fast_config), closure, dt=0.01)
        lifted = step_physical(FlowState(u0 + c, 0.0, 0, fast_config), closure.shifted(c), dt=0.01)
        np.testing.assert_allclose(lifted.field.values, plain.field.values + c, rtol=0, atol=1e-12)

    @pytest.mark.parametrize(
        "kind, offset",
        [("quadratic", (2, -1)), ("two_sector", (0, 2))],
    )
    def test_lattice_translation(self, grid, quadratic_cone, two_sector_cone, fast_config, kind, offset):
        cone = quadratic_cone if kind == "quadratic" else two_sector_cone
        closure = BoundaryClosure.frozen(cone) if kind == "quadratic" else BoundaryClosure.cone_relative(cone)
        # the large grid holds the translated field with its own rim far away
        large = Grid(dim=2, radius=6.0, points_per_axis=49)
        reference = step_physical(FlowState(sample_cone(cone, large), 0.0, 0, fast_config), closure, dt=0.01)

        moved = _shifted_cone(cone, grid, offset)
        stepped = step_physical(FlowState(moved, 0.0, 0, fast_config), closure.translated(offset), dt=0.01)

        lo = large.center_index - grid.center_index
        window = tuple(slice(lo - o, lo - o + grid.points_per_axis) for o in offset)
        np.testing.assert_allclose(stepped.field.values, reference.field.values[window], rtol=0, atol=1e-12)

    def test_parabolic_scaling(self, grid, fast_config):
        cone = ConeSpec.quadratic(SymMatrix.from_array([[0.4, 0.2], [0.2, -0.3]]))
        closure = BoundaryClosure.frozen(cone)
        dt = 0.01
        stepped = step_physical(FlowState(sample_cone(cone, grid), 0.0, 0, fast_config), closure, dt=dt)
        then_scaled = scaling_transform(stepped.field, 2.0).on_window()

        scaled = scaling_transform(sample_cone(cone, grid), 2.0).on_window()
        scaled_then = step_physical(FlowState(scaled, 0.0, 0, fast_config), closure, dt=dt / 4)
        assert then_scaled.grid == scaled_then.field.grid
        assert then_scaled.sup_distance(scaled_then.field) <= 1e-11

    def test_rescaled_step_reduces_the_expander_residual(self, grid, two_sector_cone, fast_config):
        closure = cone_closure(two_sector_cone, "expander")
        v0 = sample_cone(two_sector_cone, grid)
        before = sup_interior(expander_residual(v0, closure), grid, 4)
        v1 = step_rescaled_expander(FlowState(v0, 0.0, 0, fast_config), closure).field
        after = sup_interior(expander_residual(v1, closure), grid, 4)
        assert after < before
