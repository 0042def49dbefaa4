import math

import numpy as np
import pytest

from polarnav.frames import (
    EulerAngles,
    GeodeticPosition,
    curvature_radii,
    dcm_from_euler,
    gravity,
)
from polarnav.sins_mech import ImuSample, NavSolution, mechanize, nav_rates

LAT0 = math.radians(32.0)
POS0 = GeodeticPosition(LAT0, math.radians(118.8), 50.0)


def stationary_imu(nav):
    """Ideal IMU at rest: Earth rate in body axes, gravity reaction."""
    omega_ie, _ = nav_rates(nav.pos, nav.vel)
    gyro = nav.c_bn.T @ omega_ie
    accel = nav.c_bn.T @ np.array([0.0, 0.0, gravity(nav.pos.lat, nav.pos.height)])
    return gyro, accel


def turn_profile_arrays(duration, dt):
    """Open-loop smooth turn-like IMU signal sampled at dt: constant yaw
    rate with a rotating horizontal specific force. Used purely as a fixed
    right-hand side for the step-refinement oracle (same ODE, two steps).
    Midpoint sampling, like an integrating IMU: each sample represents its
    interval, so coarse and fine runs see the same underlying signal."""
    t = np.arange(0.0, duration, dt) + dt / 2
    g0 = gravity(POS0.lat, POS0.height)
    gyro = np.column_stack([
        np.full_like(t, 1e-4),
        np.full_like(t, 5e-5),
        np.full_like(t, -math.radians(3.0)),
    ])
    accel = np.column_stack([
        0.5 * np.cos(0.05 * t),
        0.5 * np.sin(0.05 * t),
        np.full_like(t, g0),
    ])
    return gyro, accel


def run(nav, imu_func, duration, dt):
    t = 0.0
    while t < duration - 1e-12:
        gyro, accel = imu_func(t, nav)
        nav = mechanize(nav, ImuSample(t, gyro, accel), dt)
        t += dt
    return nav


def horizontal_distance_m(p1, p2):
    r_m, r_n = curvature_radii(p1.lat)
    dn = (p2.lat - p1.lat) * (r_m + p1.height)
    de = (p2.lon - p1.lon) * (r_n + p1.height) * math.cos(p1.lat)
    return math.hypot(dn, de)


class TestStationary:
    def test_equilibrium_10s(self):
        c0 = dcm_from_euler(EulerAngles(0.7, 0.02, -0.01))
        nav0 = NavSolution(POS0, np.zeros(3), c0, 0.0)
        nav = run(nav0, lambda t, n: stationary_imu(n), 10.0, 0.005)
        assert horizontal_distance_m(nav0.pos, nav.pos) < 1e-6
        assert abs(nav.pos.height - nav0.pos.height) < 1e-6
        assert np.max(np.abs(nav.vel)) < 1e-7
        # attitude drift below 1e-7 rad
        err = nav.c_bn @ c0.T - np.eye(3)
        assert np.max(np.abs(err)) < 1e-7

    def test_attitude_stays_orthonormal(self):
        nav = NavSolution(POS0, np.zeros(3), np.eye(3), 0.0)
        for k in range(200):
            gyro, accel = stationary_imu(nav)
            nav = mechanize(nav, ImuSample(nav.t, gyro + 1e-4, accel), 0.005)
            defect = np.max(np.abs(nav.c_bn @ nav.c_bn.T - np.eye(3)))
            assert defect < 1e-12


class TestKinematics:
    def test_northward_velocity_advances_latitude(self):
        v = 30.0
        nav = NavSolution(POS0, np.array([0.0, v, 0.0]), np.eye(3), 0.0)
        r_m, _ = curvature_radii(POS0.lat)
        dt = 0.005

        def imu(t, n):
            omega_ie, omega_en = nav_rates(n.pos, n.vel)
            gyro = n.c_bn.T @ (omega_ie + omega_en)
            # cancel Coriolis and gravity so ENU velocity stays constant
            f_n = np.cross(2.0 * omega_ie + omega_en, n.vel) \
                + np.array([0.0, 0.0, gravity(n.pos.lat, n.pos.height)])
            return gyro, n.c_bn.T @ f_n

        out = run(nav, imu, 10.0, dt)
        expected_dlat = v * 10.0 / (r_m + POS0.height)
        assert out.pos.lat - POS0.lat == pytest.approx(expected_dlat, rel=1e-4)
        np.testing.assert_allclose(out.vel, [0.0, v, 0.0], atol=1e-6)

    def test_eastward_velocity_advances_longitude(self):
        v = 20.0
        nav = NavSolution(POS0, np.array([v, 0.0, 0.0]), np.eye(3), 0.0)
        _, r_n = curvature_radii(POS0.lat)

        def imu(t, n):
            omega_ie, omega_en = nav_rates(n.pos, n.vel)
            f_n = np.cross(2.0 * omega_ie + omega_en, n.vel) \
                + np.array([0.0, 0.0, gravity(n.pos.lat, n.pos.height)])
            return n.c_bn.T @ (omega_ie + omega_en), n.c_bn.T @ f_n

        out = run(nav, imu, 10.0, 0.005)
        expected_dlon = v * 10.0 / ((r_n + POS0.height) * math.cos(POS0.lat))
        assert out.pos.lon - POS0.lon == pytest.approx(expected_dlon, rel=1e-4)


class TestRefinement:
    def test_turn_profile_vs_100x_finer(self):
        from polarnav.sins_mech import mechanize_block
        nav0 = NavSolution(POS0, np.array([5.0, 5.0, 0.0]),
                           dcm_from_euler(EulerAngles(0.3, 0.0, 0.0)), 0.0)
        g, a = turn_profile_arrays(60.0, 0.005)
        coarse = mechanize_block(nav0, g, a, 0.005)
        gf, af = turn_profile_arrays(60.0, 0.00005)
        fine = mechanize_block(nav0, gf, af, 0.00005)
        d_h = horizontal_distance_m(fine.pos, coarse.pos)
        d_v = abs(fine.pos.height - coarse.pos.height)
        assert math.hypot(d_h, d_v) < 0.1

    def test_first_order_dt_consistency(self):
        from polarnav.sins_mech import mechanize_block
        nav0 = NavSolution(POS0, np.array([5.0, 5.0, 0.0]),
                           dcm_from_euler(EulerAngles(0.3, 0.0, 0.0)), 0.0)

        def endpoint(dt):
            g, a = turn_profile_arrays(20.0, dt)
            return mechanize_block(nav0, g, a, dt)

        ref = endpoint(0.0005)

        def err(out):
            return horizontal_distance_m(ref.pos, out.pos) \
                + np.linalg.norm(out.vel - ref.vel)

        e1, e2 = err(endpoint(0.02)), err(endpoint(0.01))
        assert e2 < e1 * 0.65  # at least ~first-order convergence

    def test_single_step_matches_block(self):
        g, a = turn_profile_arrays(1.0, 0.01)
        from polarnav.sins_mech import mechanize_block
        nav0 = NavSolution(POS0, np.array([1.0, 2.0, 0.0]), np.eye(3), 0.0)
        blocked = mechanize_block(nav0, g, a, 0.01)
        stepped = nav0
        for k in range(len(g)):
            stepped = mechanize(stepped, ImuSample(stepped.t, g[k], a[k]), 0.01)
        assert stepped.pos.lat == blocked.pos.lat
        assert stepped.pos.lon == blocked.pos.lon
        np.testing.assert_array_equal(stepped.vel, blocked.vel)
        np.testing.assert_array_equal(stepped.c_bn, blocked.c_bn)

    def test_free_drift_conserves_speed(self):
        # gravity-reaction-only specific force, no body rotation beyond
        # compensation: horizontal speed is conserved (Coriolis only bends)
        v0 = np.array([10.0, -4.0, 0.0])
        nav0 = NavSolution(POS0, v0, np.eye(3), 0.0)

        def imu(t, n):
            omega_ie, omega_en = nav_rates(n.pos, n.vel)
            g_b = n.c_bn.T @ np.array([0.0, 0.0, gravity(n.pos.lat, n.pos.height)])
            return n.c_bn.T @ (omega_ie + omega_en), g_b

        coarse = run(nav0, imu, 30.0, 0.005)
        fine = run(nav0, imu, 30.0, 0.0005)
        assert abs(np.linalg.norm(coarse.vel) - np.linalg.norm(v0)) < 1e-3
        assert np.linalg.norm(coarse.vel - fine.vel) < 1e-4


class TestValidation:
    def test_dt_bounds(self):
        nav = NavSolution(POS0, np.zeros(3), np.eye(3), 0.0)
        sample = ImuSample(0.0, np.zeros(3), np.zeros(3))
        with pytest.raises(ValueError):
            mechanize(nav, sample, 0.0)
        with pytest.raises(ValueError):
            mechanize(nav, sample, 0.2)
