"""Strapdown inertial mechanization in the local ENU frame.

Single-sample update per IMU period: attitude by body-rate rotation-vector
update with Earth-rate and transport-rate compensation, velocity from the
specific force rotated with the trapezoidal attitude, Coriolis terms and
normal gravity, position by trapezoidal velocity integration scaled with the
local curvature radii. The attitude is re-orthonormalized every step.

Coning/sculling corrections are deliberately omitted: at the 200 Hz sensor
rate and bench-scale dynamics the step-refinement error stays far below the
sensor error budget (bounded in the test suite by integrating the same
equations at a 100x finer step).

``nav_derivative`` exposes the continuous-time right-hand side so the error
model's Jacobian can be checked against this exact mechanization by finite
differences instead of against transcribed tables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._mech_kernel import mech_steps, pack_earth, pack_state, unpack_state
from .frames import (
    EarthModel,
    GeodeticPosition,
    WGS84,
    curvature_radii,
    gravity,
    skew,
)

__all__ = ["ImuSample", "NavSolution", "mechanize", "mechanize_block",
           "nav_derivative", "nav_rates"]


@dataclass(frozen=True)
class ImuSample:
    """One inertial sample: angular rate (rad/s) and specific force (m/s^2),
    both on body axes."""

    t: float
    gyro: np.ndarray
    accel: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "gyro", np.asarray(self.gyro, dtype=float))
        object.__setattr__(self, "accel", np.asarray(self.accel, dtype=float))


@dataclass(frozen=True)
class NavSolution:
    """Position, ENU velocity and body-to-ENU attitude at time ``t``."""

    pos: GeodeticPosition
    vel: np.ndarray
    c_bn: np.ndarray
    t: float

    def __post_init__(self):
        object.__setattr__(self, "vel", np.asarray(self.vel, dtype=float))
        object.__setattr__(self, "c_bn", np.asarray(self.c_bn, dtype=float))


def nav_rates(pos: GeodeticPosition, vel: np.ndarray,
              earth: EarthModel = WGS84) -> tuple[np.ndarray, np.ndarray]:
    """Earth rate and transport rate resolved in ENU."""
    r_m, r_n = curvature_radii(pos.lat, earth)
    sl, cl = math.sin(pos.lat), math.cos(pos.lat)
    omega_ie = np.array([0.0, earth.omega_ie * cl, earth.omega_ie * sl])
    omega_en = np.array([
        -vel[1] / (r_m + pos.height),
        vel[0] / (r_n + pos.height),
        vel[0] * sl / (cl * (r_n + pos.height)),
    ])
    return omega_ie, omega_en


def nav_derivative(nav: NavSolution, gyro: np.ndarray, accel: np.ndarray,
                   earth: EarthModel = WGS84):
    """Continuous-time derivatives (c_bn_dot, vel_dot, (lat_dot, lon_dot,
    h_dot)) of the mechanization equations at the given state and inputs."""
    pos, vel, c = nav.pos, nav.vel, nav.c_bn
    omega_ie, omega_en = nav_rates(pos, vel, earth)
    omega_in = omega_ie + omega_en

    c_dot = c @ skew(gyro) - skew(omega_in) @ c
    g_n = np.array([0.0, 0.0, -gravity(pos.lat, pos.height, earth)])
    v_dot = c @ accel - np.cross(2.0 * omega_ie + omega_en, vel) + g_n

    r_m, r_n = curvature_radii(pos.lat, earth)
    p_dot = np.array([
        vel[1] / (r_m + pos.height),
        vel[0] / ((r_n + pos.height) * math.cos(pos.lat)),
        vel[2],
    ])
    return c_dot, v_dot, p_dot


def _wrap_lon(lon: float) -> float:
    if lon > math.pi:
        lon -= 2.0 * math.pi
    elif lon <= -math.pi:
        lon += 2.0 * math.pi
    return lon


def mechanize(prev: NavSolution, imu: ImuSample, dt: float,
              earth: EarthModel = WGS84) -> NavSolution:
    """Advance the navigation solution by one IMU period.

    ``imu`` holds the angular rate and specific force over the step;
    0 < dt <= 0.1 s.
    """
    return mechanize_block(prev, imu.gyro[None, :], imu.accel[None, :], dt, earth)


def mechanize_block(prev: NavSolution, gyro: np.ndarray, accel: np.ndarray,
                    dt: float, earth: EarthModel = WGS84) -> NavSolution:
    """Advance through a contiguous block of IMU samples (rows of
    ``gyro``/``accel``) with the compiled kernel. Numerically identical to
    calling :func:`mechanize` per row."""
    if not 0.0 < dt <= 0.1:
        raise ValueError(f"dt {dt} outside (0, 0.1] s")
    gyro = np.ascontiguousarray(gyro, dtype=float)
    accel = np.ascontiguousarray(accel, dtype=float)
    if gyro.shape != accel.shape or gyro.ndim != 2 or gyro.shape[1] != 3:
        raise ValueError("gyro/accel must both be (n, 3)")

    state = pack_state(prev.pos.lat, prev.pos.lon, prev.pos.height,
                       prev.vel, prev.c_bn)
    mech_steps(state, gyro, accel, dt, pack_earth(earth))
    lat, lon, h, vel, c_bn = unpack_state(state)
    return NavSolution(
        pos=GeodeticPosition(lat, lon, h),
        vel=vel,
        c_bn=c_bn,
        t=prev.t + dt * len(gyro),
    )
