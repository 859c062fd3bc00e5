"""Online safety checks: prediction, verdicts, severity metrics, batching."""

import math

import numpy as np
import pytest

from oracles import point_trajectory_first_violation
from reachmon.errors import DimensionError, DomainError
from reachmon.geometry import HalfSpace, UnsafeSet, cap_shrink_factor
from reachmon.monitor import (
    ClosedLoopPredictor,
    MonitorConfig,
    baseline_metrics,
    check_safety,
    impact_metric,
    monitor_trace,
    predict_control_flow,
    time_to_unsafe,
    trailing_rate,
    verdicts_from_series,
)
from reachmon.plant import PIOutputController, PlantModel, StaticOutputController
from reachmon.reachability import ReachCertificate


def scalar_cert(pi=1.0):
    return ReachCertificate(pi=[[pi]], b_star=0.5, p=0.95, w_bar=1.0,
                            objective=0.0, beta=0.05, tau=3.84, gain=[[0.1]],
                            innovation_cov=[[1.0]])


def scalar_model(a=0.5, dt=1.0):
    return PlantModel(a=[[a]], b=[[0.0]], c=[[1.0]], process_cov=[[0.0]],
                      measurement_cov=[[0.0]], dt=dt)


def scalar_config(a=0.5, dt=1.0, pi=1.0, threshold=0.5, k_horizon=0, **kw):
    return MonitorConfig(
        model=scalar_model(a, dt),
        controller=StaticOutputController(gain=[[0.0]]),
        cert=scalar_cert(pi),
        unsafe=UnsafeSet([HalfSpace(normal=[1.0], offset=threshold)]),
        k_horizon=k_horizon, **kw)


class TestPrediction:
    def test_one_step_flow(self):
        model = scalar_model()
        model = PlantModel(a=[[0.5]], b=[[1.0]], c=[[1.0]],
                           process_cov=[[0.0]], measurement_cov=[[0.0]], dt=1.0)
        ctrl = StaticOutputController(gain=[[-0.2]])
        out = predict_control_flow(model, ctrl, np.array([1.0]))
        assert out == pytest.approx([0.3], abs=1e-15)

    def test_predictor_matches_sequential_rollout(self):
        model = PlantModel(a=[[0.9, 0.2], [0.0, 0.7]], b=[[1.0], [0.3]],
                           c=[[1.0, 0.0]], process_cov=np.zeros((2, 2)),
                           measurement_cov=np.zeros((1, 1)), dt=1.0)
        ctrl = StaticOutputController(gain=[[-0.1]])
        pred = ClosedLoopPredictor(model, ctrl, 10)
        states = pred.states(np.array([1.0, -0.5]), 10)
        x = np.array([1.0, -0.5])
        for l in range(11):
            assert states[l] == pytest.approx(x, abs=1e-12)
            x = predict_control_flow(model, ctrl, x)

    def test_predictor_bounds(self):
        model = scalar_model()
        ctrl = StaticOutputController(gain=[[0.0]])
        with pytest.raises(DomainError):
            ClosedLoopPredictor(model, ctrl, -1)
        pred = ClosedLoopPredictor(model, ctrl, 3)
        with pytest.raises(DomainError):
            pred.states(np.array([1.0]), 4)


class TestSeverityMetrics:
    def test_time_to_unsafe(self):
        assert time_to_unsafe(0, 0.1) == 0.0
        assert time_to_unsafe(500, 1.8) == pytest.approx(900.0, abs=1e-12)
        assert time_to_unsafe(1, 0.5) == 0.5
        with pytest.raises(DomainError):
            time_to_unsafe(-1, 0.1)

    def test_impact_far_from_unsafe_is_zero(self):
        cert = ReachCertificate(pi=np.eye(2), b_star=0.5, p=0.95, w_bar=1.0,
                                objective=0.0, beta=0.05, tau=3.84,
                                gain=np.zeros((2, 1)), innovation_cov=[[1.0]])
        unsafe = UnsafeSet([HalfSpace([1.0, 0.0], 10.0)])
        assert impact_metric(cert, np.zeros(2), unsafe) == 0.0

    def test_impact_at_halfway_cut(self):
        """Plane through the center in 2-D: covering ratio 16/27."""
        cert = ReachCertificate(pi=np.eye(2), b_star=0.5, p=0.95, w_bar=1.0,
                                objective=0.0, beta=0.05, tau=3.84,
                                gain=np.zeros((2, 1)), innovation_cov=[[1.0]])
        unsafe = UnsafeSet([HalfSpace([1.0, 0.0], 0.0)])
        assert impact_metric(cert, np.zeros(2), unsafe) == pytest.approx(
            16.0 / 27.0, abs=1e-12)

    def test_impact_saturates_deep_inside(self):
        cert = scalar_cert()
        unsafe = UnsafeSet([HalfSpace([1.0], 0.5)])
        assert impact_metric(cert, np.array([5.0]), unsafe) == 1.0

    def test_impact_empty_unsafe(self):
        assert impact_metric(scalar_cert(), np.array([0.0]), UnsafeSet([])) == 0.0

    def test_baseline_distance_and_time(self):
        unsafe = UnsafeSet([HalfSpace([1.0, 0.0], 2.0)])
        d_u, t_u = baseline_metrics(np.zeros(2), unsafe, 0.5)
        assert d_u == pytest.approx(2.0, abs=1e-15)
        assert t_u == pytest.approx(4.0, abs=1e-12)

    def test_baseline_inside_unsafe(self):
        unsafe = UnsafeSet([HalfSpace([1.0], 0.5)])
        d_u, t_u = baseline_metrics(np.array([3.0]), unsafe, 1.0)
        assert d_u == 0.0
        assert t_u == 0.0

    def test_baseline_undefined_rate(self):
        unsafe = UnsafeSet([HalfSpace([1.0], 0.5)])
        assert baseline_metrics(np.zeros(1), unsafe, None)[1] is None
        assert baseline_metrics(np.zeros(1), unsafe, 1e-15)[1] is None

    def test_baseline_empty_unsafe(self):
        d_u, t_u = baseline_metrics(np.zeros(2), UnsafeSet([]), 1.0)
        assert d_u == math.inf
        assert t_u is None

    def test_trailing_rate_window(self):
        xhat = np.array([[0.0], [1.0], [3.0]])
        rates = trailing_rate(xhat, 0.5)
        assert rates == pytest.approx([0.0, 2.0, 3.0], abs=1e-12)
        assert trailing_rate(xhat, 0.5, window=1)[2] == pytest.approx(4.0,
                                                                      abs=1e-12)


class TestCheckSafety:
    def test_immediate_overlap_verdict(self):
        """K = 0, unit ellipsoid at the origin, unsafe beyond 0.5."""
        verdict = check_safety(scalar_config(), np.array([0.0]))
        assert not verdict.safe
        assert verdict.k_f == 0
        assert verdict.violated_constraint == 0
        assert not verdict.center_unsafe
        assert verdict.tc_seconds == 0.0
        assert verdict.impact == pytest.approx(0.0625, abs=1e-12)
        assert verdict.per_step_min_distance == pytest.approx((-0.5,), abs=1e-12)
        assert verdict.baseline_du == pytest.approx(0.5, abs=1e-15)
        assert verdict.baseline_tu is None

    def test_center_inside_unsafe(self):
        verdict = check_safety(scalar_config(), np.array([2.0]))
        assert verdict.center_unsafe
        assert not verdict.safe
        assert verdict.k_f == 0
        assert verdict.impact == 1.0
        assert verdict.baseline_du == 0.0

    def test_safe_verdict_fields(self):
        cfg = scalar_config(a=0.5, pi=0.01, threshold=5.0, k_horizon=4)
        verdict = check_safety(cfg, np.array([0.1]), rate=2.0)
        assert verdict.safe
        assert verdict.k_f is None
        assert verdict.tc_seconds is None
        assert verdict.impact == 0.0
        assert len(verdict.per_step_min_distance) == 5
        assert min(verdict.per_step_min_distance) > 0.0
        assert verdict.baseline_tu == pytest.approx(4.9 / 2.0, abs=1e-12)

    def test_unstable_drift_hits_at_the_predicted_step(self):
        """2^l 0.01 + 0.1 crosses 1.0 first at l = 7."""
        cfg = scalar_config(a=2.0, dt=0.1, pi=0.01, threshold=1.0, k_horizon=12)
        verdict = check_safety(cfg, np.array([0.01]))
        assert verdict.k_f == 7
        assert verdict.tc_seconds == pytest.approx(0.7, abs=1e-12)
        assert len(verdict.per_step_min_distance) == 8
        assert verdict.impact == 1.0

    def test_longer_horizon_sees_what_a_short_one_misses(self):
        short = scalar_config(a=2.0, dt=0.1, pi=0.01, threshold=1.0, k_horizon=5)
        assert check_safety(short, np.array([0.01])).safe
        long = scalar_config(a=2.0, dt=0.1, pi=0.01, threshold=1.0, k_horizon=20)
        assert check_safety(long, np.array([0.01])).k_f == 7

    def test_early_exit_only_truncates_the_profile(self):
        kwargs = dict(a=2.0, dt=0.1, pi=0.01, threshold=1.0, k_horizon=12)
        lazy = check_safety(scalar_config(**kwargs), np.array([0.01]))
        eager = check_safety(scalar_config(early_exit=False, **kwargs),
                             np.array([0.01]))
        assert (lazy.k_f, lazy.tc_seconds, lazy.impact) == (
            eager.k_f, eager.tc_seconds, eager.impact)
        assert len(eager.per_step_min_distance) == 13
        assert eager.per_step_min_distance[:8] == pytest.approx(
            lazy.per_step_min_distance, abs=1e-15)

    def test_smaller_reach_set_never_warns_earlier(self):
        rng = np.random.default_rng(17)
        for _ in range(20):
            a = rng.uniform(1.1, 1.9)
            x0 = rng.uniform(0.005, 0.05)
            threshold = rng.uniform(0.3, 3.0)
            pi = rng.uniform(0.002, 0.5)
            wide = check_safety(
                scalar_config(a=a, pi=pi, threshold=threshold, k_horizon=30),
                np.array([x0]))
            tight = check_safety(
                scalar_config(a=a, pi=0.25 * pi, threshold=threshold,
                              k_horizon=30),
                np.array([x0]))
            k_wide = math.inf if wide.k_f is None else wide.k_f
            k_tight = math.inf if tight.k_f is None else tight.k_f
            assert k_tight >= k_wide

    def test_degenerate_certificate_acts_like_a_point(self):
        """With a vanishing ellipsoid the monitor is plain trajectory checking."""
        rng = np.random.default_rng(44)
        for _ in range(10):
            a = rng.uniform(1.2, 1.9)
            x0 = rng.uniform(0.005, 0.02)
            threshold = rng.uniform(0.5, 2.0)
            cfg = scalar_config(a=a, dt=0.1, pi=1e-20, threshold=threshold,
                                k_horizon=40)
            verdict = check_safety(cfg, np.array([x0]))
            states = cfg.predictor.states(np.array([x0]), 40)
            expected = point_trajectory_first_violation(
                states, np.array([[1.0]]), np.array([threshold]))
            assert verdict.k_f == expected

    def test_empty_unsafe_set_is_always_safe(self):
        cfg = MonitorConfig(model=scalar_model(), cert=scalar_cert(),
                            controller=StaticOutputController(gain=[[0.0]]),
                            unsafe=UnsafeSet([]), k_horizon=3)
        verdict = check_safety(cfg, np.array([100.0]), rate=1.0)
        assert verdict.safe
        assert verdict.baseline_du == math.inf
        assert verdict.baseline_tu is None
        assert verdict.per_step_min_distance == (math.inf,) * 4

    def test_rejects_wrong_estimate_shape(self):
        with pytest.raises(DimensionError):
            check_safety(scalar_config(), np.zeros(2))


class TestConfigValidation:
    def test_certificate_dimension_mismatch(self):
        cert2 = ReachCertificate(pi=np.eye(2), b_star=0.5, p=0.95, w_bar=1.0,
                                 objective=0.0, beta=0.05, tau=3.84,
                                 gain=np.zeros((2, 1)), innovation_cov=[[1.0]])
        with pytest.raises(DimensionError):
            MonitorConfig(model=scalar_model(), cert=cert2,
                          controller=StaticOutputController(gain=[[0.0]]),
                          unsafe=UnsafeSet([]), k_horizon=1)

    def test_unsafe_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            MonitorConfig(model=scalar_model(), cert=scalar_cert(),
                          controller=StaticOutputController(gain=[[0.0]]),
                          unsafe=UnsafeSet([HalfSpace([1.0, 0.0], 1.0)]),
                          k_horizon=1)

    def test_negative_horizon_and_bad_window(self):
        with pytest.raises(DomainError):
            scalar_config(k_horizon=-1)
        with pytest.raises(DomainError):
            scalar_config(rate_window=0)


class TestBatching:
    @staticmethod
    def two_state_setup():
        model = PlantModel(a=[[0.9, 0.1], [0.0, 0.85]], b=[[1.0], [0.4]],
                           c=[[1.0, 0.0]], process_cov=np.zeros((2, 2)),
                           measurement_cov=np.zeros((1, 1)), dt=0.5)
        cert = ReachCertificate(pi=0.04 * np.eye(2), b_star=0.5, p=0.95,
                                w_bar=1.0, objective=0.0, beta=0.05, tau=3.84,
                                gain=np.array([[0.1], [0.05]]),
                                innovation_cov=[[1.0]])
        unsafe = UnsafeSet([HalfSpace([1.0, 0.3], 1.4, "lid"),
                            HalfSpace([-1.0, 0.2], 2.0)])
        return model, cert, unsafe

    def test_trace_matches_stepwise_monitoring_with_pi_state(self):
        """Batched monitoring must replay the controller's integrator."""
        model, cert, unsafe = self.two_state_setup()
        rng = np.random.default_rng(7)
        xhat = np.cumsum(rng.normal(0.0, 0.12, (60, 2)), axis=0)
        ybar = xhat @ model.c.T + rng.normal(0.0, 0.05, (60, 1))

        cfg_batch = MonitorConfig(
            model=model, cert=cert, unsafe=unsafe, k_horizon=15,
            controller=PIOutputController(kp=[[0.3]], ki=[[0.02]], dt=0.5,
                                          reference=[0.2]))
        series = monitor_trace(cfg_batch, xhat, ybar, keep_profiles=True)
        assert 0 < (~series.safe).sum() < len(series)

        live = PIOutputController(kp=[[0.3]], ki=[[0.02]], dt=0.5,
                                  reference=[0.2])
        cfg_live = MonitorConfig(model=model, cert=cert, unsafe=unsafe,
                                 k_horizon=15, controller=live)
        rates = trailing_rate(xhat, model.dt, cfg_live.rate_window)
        for k, batched in verdicts_from_series(cfg_batch, series):
            stepped = check_safety(cfg_live, xhat[k], rate=float(rates[k]))
            live.act(ybar[k])
            assert batched.safe == stepped.safe
            assert batched.k_f == stepped.k_f
            assert batched.violated_constraint == stepped.violated_constraint
            assert batched.center_unsafe == stepped.center_unsafe
            assert batched.per_step_min_distance == pytest.approx(
                stepped.per_step_min_distance, abs=1e-10)
            assert batched.impact == pytest.approx(stepped.impact, abs=1e-12)
            assert batched.baseline_du == pytest.approx(stepped.baseline_du,
                                                        abs=1e-12)
            if stepped.baseline_tu is None:
                assert batched.baseline_tu is None
            else:
                assert batched.baseline_tu == pytest.approx(stepped.baseline_tu,
                                                            abs=1e-9)

    def test_series_layout_and_warning_step(self):
        cfg = scalar_config(a=2.0, dt=0.1, pi=0.01, threshold=1.0, k_horizon=12)
        xhat = np.array([[0.0001], [0.001], [0.01], [0.95]])
        series = monitor_trace(cfg, xhat)
        assert len(series) == 4
        assert series.safe[0] and not series.safe[3]
        assert series.k_f[0] == -1
        assert np.isnan(series.tc_seconds[0])
        # Later monitoring steps start closer, so the violation offset shrinks.
        hits = series.k_f[series.k_f >= 0]
        assert all(a >= b for a, b in zip(hits, hits[1:]))
        assert series.warning_step() == int(np.flatnonzero(series.k_f >= 0)[0])
        assert series.warning_step(k_max=0) == int(
            np.flatnonzero(series.k_f == 0)[0])

    def test_batched_impact_matches_pointwise_formula(self):
        grid = np.linspace(-1.5, 1.5, 61)
        from reachmon.monitor import _shrink_factors
        for n in (1, 2, 3, 5):
            vec = _shrink_factors(grid, n)
            ref = [cap_shrink_factor(float(a), n) for a in grid]
            assert vec == pytest.approx(ref, abs=1e-12)

    def test_empty_unsafe_series_matches_stepwise(self):
        cfg = MonitorConfig(model=scalar_model(), cert=scalar_cert(),
                            controller=StaticOutputController(gain=[[0.0]]),
                            unsafe=UnsafeSet([]), k_horizon=2)
        series = monitor_trace(cfg, np.array([[0.0], [1.0]]))
        assert series.safe.all()
        assert np.all(np.isinf(series.d_u))
        assert np.all(np.isnan(series.t_u))

    def test_verdict_expansion_requires_profiles(self):
        cfg = scalar_config(k_horizon=1)
        series = monitor_trace(cfg, np.array([[0.0]]))
        with pytest.raises(DomainError):
            next(verdicts_from_series(cfg, series))
