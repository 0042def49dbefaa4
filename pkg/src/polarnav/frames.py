"""Coordinate frames, rotations and Earth geodesy.

Conventions used throughout the package:

- Navigation frame: local ENU (x East, y North, z Up).
- Body frame: x and y in the image plane (column / row directions of the
  polarization imager), z along the optical axis. ``C_b^n`` (here ``c_bn``)
  maps body coordinates to ENU.
- Euler angles: yaw-pitch-roll applied in Z-X-Y order for the body-to-ENU
  map. Yaw is a compass angle, positive clockwise from north when seen from
  above (yaw = +90 deg turns the body y axis from north to east). Pitch is
  about the body x axis, positive nose-up; roll about the body y axis,
  positive right-side-down. All angles in radians.
- Misalignment angles ``phi`` are small rotations applied as ``I + skew(phi)``
  on the left of a DCM; no re-orthonormalization, so products stay exactly
  first order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GimbalLock

__all__ = [
    "EarthModel",
    "WGS84",
    "EulerAngles",
    "GeodeticPosition",
    "skew",
    "misalignment_dcm",
    "dcm_from_euler",
    "euler_from_dcm",
    "curvature_radii",
    "gravity",
    "unit",
    "rotvec_to_dcm",
    "orthonormalize",
    "is_rotation",
]


@dataclass(frozen=True)
class EarthModel:
    """Reference ellipsoid plus rotation-rate and normal-gravity constants."""

    a: float                # semi-major axis, m
    e2: float               # first eccentricity squared
    omega_ie: float         # Earth rotation rate, rad/s
    gamma_e: float          # normal gravity at the equator, m/s^2
    somigliana_k: float     # Somigliana formula constant
    m_ratio: float          # omega^2 a^2 b / GM, for the height correction
    flattening: float

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("semi-major axis must be positive")
        if not 0 <= self.e2 < 1:
            raise ValueError("eccentricity squared must lie in [0, 1)")


WGS84 = EarthModel(
    a=6378137.0,
    e2=6.69437999014e-3,
    omega_ie=7.2921151467e-5,
    gamma_e=9.7803253359,
    somigliana_k=1.931852652458e-3,
    m_ratio=3.449786506841e-3,
    flattening=1.0 / 298.257223563,
)


@dataclass(frozen=True)
class EulerAngles:
    """Yaw / pitch / roll in radians (see module docstring for conventions)."""

    yaw: float
    pitch: float
    roll: float

    def __post_init__(self):
        if not (-math.pi < self.yaw <= math.pi):
            raise ValueError(f"yaw {self.yaw} outside (-pi, pi]")
        if not (-math.pi / 2 <= self.pitch <= math.pi / 2):
            raise ValueError(f"pitch {self.pitch} outside [-pi/2, pi/2]")
        if not (-math.pi < self.roll <= math.pi):
            raise ValueError(f"roll {self.roll} outside (-pi, pi]")


@dataclass(frozen=True)
class GeodeticPosition:
    """Latitude and longitude in radians, height in meters."""

    lat: float
    lon: float
    height: float = 0.0

    def __post_init__(self):
        if not abs(self.lat) <= math.pi / 2:
            raise ValueError(f"latitude {self.lat} outside [-pi/2, pi/2]")
        if not (-math.pi < self.lon <= math.pi):
            raise ValueError(f"longitude {self.lon} outside (-pi, pi]")


def unit(v):
    """Return ``v`` scaled to unit norm."""
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return v / n


def skew(a):
    """Cross-product matrix: ``skew(a) @ v == np.cross(a, v)``."""
    a = np.asarray(a, dtype=float)
    return np.array([
        [0.0, -a[2], a[1]],
        [a[2], 0.0, -a[0]],
        [-a[1], a[0], 0.0],
    ])


def misalignment_dcm(phi):
    """First-order attitude error matrix ``I + skew(phi)``.

    ``phi`` may be a length-3 array or anything with ``phi_e/phi_n/phi_u``
    semantics passed as a sequence (E, N, U). The result is deliberately not
    re-orthonormalized: the error-state filter consumes the linearized form,
    and composing with a DCM must differ from it by exactly ``skew(phi) @ C``.
    """
    phi = np.asarray(phi, dtype=float)
    return np.eye(3) + skew(phi)


def _rz(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _rx(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _ry(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def dcm_from_euler(e: EulerAngles) -> np.ndarray:
    """Body-to-ENU direction cosine matrix from yaw/pitch/roll.

    Composition is Z(-yaw) * X(pitch) * Y(roll); the negated yaw implements
    the compass sign convention (positive clockwise from north).
    """
    return _rz(-e.yaw) @ _rx(e.pitch) @ _ry(e.roll)


GIMBAL_LOCK_MARGIN = 1e-6


def euler_from_dcm(c_bn: np.ndarray) -> EulerAngles:
    """Inverse of :func:`dcm_from_euler` away from gimbal lock.

    Raises
    ------
    GimbalLock
        When ``|pitch|`` is within ``GIMBAL_LOCK_MARGIN`` of pi/2, where yaw
        and roll are no longer separable.
    """
    c = np.asarray(c_bn, dtype=float)
    s_pitch = min(1.0, max(-1.0, c[2, 1]))
    pitch = math.asin(s_pitch)
    if abs(pitch) > math.pi / 2 - GIMBAL_LOCK_MARGIN:
        raise GimbalLock(f"pitch {pitch} within {GIMBAL_LOCK_MARGIN} of +/-pi/2")
    yaw = math.atan2(c[0, 1], c[1, 1])
    roll = math.atan2(-c[2, 0], c[2, 2])
    # atan2 returns -pi for angles on the branch cut; fold onto (-pi, pi]
    if yaw == -math.pi:
        yaw = math.pi
    if roll == -math.pi:
        roll = math.pi
    return EulerAngles(yaw=yaw, pitch=pitch, roll=roll)


def curvature_radii(lat: float, earth: EarthModel = WGS84) -> tuple[float, float]:
    """Meridian and prime-vertical radii of curvature at latitude ``lat``.

    Returns the height-free base values ``(r_m, r_n)``; callers converting
    angular position errors to meters add the local height themselves
    (``r_m + h``, ``r_n + h``).
    """
    s2 = math.sin(lat) ** 2
    w = math.sqrt(1.0 - earth.e2 * s2)
    r_n = earth.a / w
    r_m = earth.a * (1.0 - earth.e2) / w**3
    return r_m, r_n


def gravity(lat: float, height: float = 0.0, earth: EarthModel = WGS84) -> float:
    """Normal gravity magnitude (Somigliana) with first-order height fade."""
    s2 = math.sin(lat) ** 2
    g0 = earth.gamma_e * (1.0 + earth.somigliana_k * s2) / math.sqrt(1.0 - earth.e2 * s2)
    f = earth.flattening
    h_term = 1.0 - 2.0 * height / earth.a * (1.0 + f + earth.m_ratio - 2.0 * f * s2) \
        + 3.0 * height**2 / earth.a**2
    return g0 * h_term


def rotvec_to_dcm(theta):
    """Rotation matrix ``exp(skew(theta))`` for a rotation vector ``theta``."""
    theta = np.asarray(theta, dtype=float)
    angle = np.linalg.norm(theta)
    k = skew(theta)
    if angle < 1e-12:
        # second-order series; below this angle the closed form loses digits
        return np.eye(3) + k + 0.5 * (k @ k)
    return np.eye(3) + math.sin(angle) / angle * k \
        + (1.0 - math.cos(angle)) / angle**2 * (k @ k)


def orthonormalize(c: np.ndarray) -> np.ndarray:
    """Pull a nearly-orthonormal matrix back onto SO(3).

    One symmetric Newton step, ``C <- C (3I - C^T C) / 2``, cuts the
    orthogonality defect quadratically; two steps take the per-step
    integration drift of the mechanization far below 1e-12.
    """
    for _ in range(2):
        c = c @ (3.0 * np.eye(3) - c.T @ c) / 2.0
    return c


def is_rotation(c: np.ndarray, tol: float = 1e-9) -> bool:
    """True when ``c`` is orthonormal with determinant +1 within ``tol``."""
    c = np.asarray(c, dtype=float)
    if c.shape != (3, 3):
        return False
    return (
        np.max(np.abs(c @ c.T - np.eye(3))) < tol
        and abs(np.linalg.det(c) - 1.0) < tol
    )
