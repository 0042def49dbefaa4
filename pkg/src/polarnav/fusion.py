"""Error-state Kalman fusion of inertial, satellite and solar-vector data.

State vector (fixed ordering, index constants in :class:`StateIndex`):

    x = [phi_e, phi_n, phi_u,          attitude errors, rad
         dv_e, dv_n, dv_u,             velocity errors, m/s
         dlat, dlon, dh,               position errors, rad / rad / m
         eps_x, eps_y, eps_z,          gyro drifts, rad/s, body axes
         nab_x, nab_y, nab_z]          accel biases, m/s^2, body axes

Sign conventions (documented once, used consistently everywhere):

- Attitude error: ``C_sins = (I + skew(phi)) C_true`` - phi rotates the true
  navigation frame onto the computed one.
- Sensor errors add to truth: measured = true + eps (gyro), + nabla (accel).
- Every error is SINS minus truth (dv = v_sins - v_true, dlat = lat_sins -
  lat_true, ...), and every measurement residual is SINS-predicted minus
  reference, so all three measurement models share one orientation:
  z ~ H x + noise with the H blocks below.
- Closed-loop correction removes the estimated errors
  (``C <- (I - skew(phi_hat)) C``, ``v <- v - dv_hat``, ...) and zeroes the
  corrected states; bias states persist as the running sensor-error estimate.

The continuous model is x_dot = F x + G w with

    F = [[F_N, F_S], [0, 0]],     F_S = [[C, 0], [0, C], [0, 0]]  (9 x 6)
    G = [[C, 0], [0, C], [0, 0]]  (15 x 6)

where F_N is the 9x9 ENU error dynamics. Every nonzero F entry is validated
against a finite-difference Jacobian of the nonlinear mechanization in the
test suite; the mechanization, not a transcription, is the authority.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import AmbiguousSign, EmptyMeasurement, SingularInnovation, StaleMeasurement
from .frames import (
    EarthModel,
    GeodeticPosition,
    WGS84,
    curvature_radii,
    gravity,
    misalignment_dcm,
    orthonormalize,
    skew,
)
from .sins_mech import NavSolution, nav_rates

__all__ = [
    "StateIndex",
    "STATE_LABELS",
    "N_STATES",
    "SystemMatrices",
    "MeasurementBundle",
    "KfState",
    "GnssFix",
    "build_F",
    "discretize",
    "position_measurement",
    "velocity_measurement",
    "solar_measurement",
    "assemble_measurement",
    "kf_predict",
    "kf_update",
    "correct_nav",
    "DEFAULT_SIGN_MARGIN",
]

N_STATES = 15


class StateIndex(enum.IntEnum):
    PHI_E = 0
    PHI_N = 1
    PHI_U = 2
    DV_E = 3
    DV_N = 4
    DV_U = 5
    DLAT = 6
    DLON = 7
    DH = 8
    EPS_X = 9
    EPS_Y = 10
    EPS_Z = 11
    NAB_X = 12
    NAB_Y = 13
    NAB_Z = 14


STATE_LABELS = [
    "phi_e", "phi_n", "phi_u", "dv_e", "dv_n", "dv_u",
    "dlat", "dlon", "dh", "eps_x", "eps_y", "eps_z",
    "nab_x", "nab_y", "nab_z",
]

DEFAULT_SIGN_MARGIN = 0.1


@dataclass(frozen=True)
class SystemMatrices:
    """Continuous model: 15x15 F, 15x6 G and the white-noise PSD diag
    (gyro^2 x3, accel^2 x3) driving G."""

    f: np.ndarray
    g: np.ndarray
    noise_psd: np.ndarray


@dataclass(frozen=True)
class GnssFix:
    """Satellite position/velocity fix at time ``t``."""

    t: float
    pos: GeodeticPosition
    vel: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vel", np.asarray(self.vel, dtype=float))


@dataclass(frozen=True)
class MeasurementBundle:
    """Stacked measurement ``z = H x + noise`` with block-diagonal R."""

    z: np.ndarray
    h: np.ndarray
    r: np.ndarray
    blocks: tuple[str, ...]


@dataclass(frozen=True)
class KfState:
    """Error estimate, covariance and the discrete model used to predict."""

    x: np.ndarray
    p: np.ndarray
    phi: np.ndarray
    gamma: np.ndarray
    qd: np.ndarray

    @classmethod
    def initial(cls, p0: np.ndarray) -> "KfState":
        p0 = np.asarray(p0, dtype=float)
        return cls(x=np.zeros(N_STATES), p=p0.copy(),
                   phi=np.eye(N_STATES),
                   gamma=np.zeros((N_STATES, 6)),
                   qd=np.zeros((N_STATES, N_STATES)))


def build_F(nav: NavSolution, accel_body: np.ndarray,
            earth: EarthModel = WGS84,
            noise_psd: np.ndarray | None = None) -> SystemMatrices:
    """Continuous error dynamics linearized at the current solution.

    ``accel_body`` is the (bias-compensated) specific force driving the
    velocity/attitude cross coupling.
    """
    lat, h = nav.pos.lat, nav.pos.height
    ve, vn, vu = nav.vel
    c = nav.c_bn
    r_m0, r_n0 = curvature_radii(lat, earth)
    rm, rn = r_m0 + h, r_n0 + h
    sl, cl = math.sin(lat), math.cos(lat)
    tl = sl / cl
    sec = 1.0 / cl
    omega = earth.omega_ie

    omega_ie, omega_en = nav_rates(nav.pos, nav.vel, earth)
    omega_in = omega_ie + omega_en
    f_n = c @ np.asarray(accel_body, dtype=float)

    f = np.zeros((N_STATES, N_STATES))

    # attitude rows: phi_dot = -omega_in x phi - d(omega_in) + C eps
    f[0:3, 0:3] = -skew(omega_in)
    f[0, 4] = 1.0 / rm
    f[1, 3] = -1.0 / rn
    f[2, 3] = -tl / rn
    f[1, 6] = omega * sl
    f[2, 6] = -(omega * cl + ve * sec**2 / rn)
    f[0, 8] = -vn / rm**2
    f[1, 8] = ve / rn**2
    f[2, 8] = ve * tl / rn**2
    f[0:3, 9:12] = c

    # velocity rows: dv_dot = phi x f_n - (2w_ie + w_en) x dv
    #                - (2 dw_ie + dw_en) x v + d(g) + C nabla
    f[3:6, 0:3] = -skew(f_n)
    f[3, 3] = (vn * tl - vu) / rn
    f[3, 4] = 2.0 * omega * sl + ve * tl / rn
    f[3, 5] = -(2.0 * omega * cl + ve / rn)
    f[4, 3] = -2.0 * (omega * sl + ve * tl / rn)
    f[4, 4] = -vu / rm
    f[4, 5] = -vn / rm
    f[5, 3] = 2.0 * (omega * cl + ve / rn)
    f[5, 4] = 2.0 * vn / rm

    dg_dlat = (gravity(lat + 5e-7, h, earth) - gravity(lat - 5e-7, h, earth)) / 1e-6
    dg_dh = (gravity(lat, h + 0.5, earth) - gravity(lat, h - 0.5, earth))
    f[3, 6] = 2.0 * omega * (sl * vu + cl * vn) + ve * vn * sec**2 / rn
    f[4, 6] = -ve * (2.0 * omega * cl + ve * sec**2 / rn)
    f[5, 6] = -2.0 * omega * sl * ve - dg_dlat
    f[3, 8] = ve * (vu - vn * tl) / rn**2
    f[4, 8] = ve**2 * tl / rn**2 + vn * vu / rm**2
    f[5, 8] = -(vn**2 / rm**2 + ve**2 / rn**2) - dg_dh
    f[3:6, 12:15] = c

    # position rows
    f[6, 4] = 1.0 / rm
    f[6, 8] = -vn / rm**2
    f[7, 3] = sec / rn
    f[7, 6] = ve * sec * tl / rn
    f[7, 8] = -ve * sec / rn**2
    f[8, 5] = 1.0

    g = np.zeros((N_STATES, 6))
    g[0:3, 0:3] = c
    g[3:6, 3:6] = c

    if noise_psd is None:
        noise_psd = np.zeros(6)
    return SystemMatrices(f=f, g=g, noise_psd=np.asarray(noise_psd, dtype=float))


def discretize(system: SystemMatrices, dt: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Second-order transition matrix and trapezoidal process noise.

    Phi = I + F dt + (F dt)^2 / 2; Qd = (Phi G Q G^T Phi^T + G Q G^T) dt / 2,
    symmetrized. Gamma = G dt to first order.
    """
    if not 0.0 < dt <= 1.0:
        raise ValueError(f"dt {dt} outside (0, 1] s")
    fdt = system.f * dt
    phi = np.eye(N_STATES) + fdt + 0.5 * (fdt @ fdt)
    gqg = system.g @ np.diag(system.noise_psd) @ system.g.T
    qd = 0.5 * dt * (phi @ gqg @ phi.T + gqg)
    qd = 0.5 * (qd + qd.T)
    gamma = system.g * dt
    return phi, gamma, qd


def position_measurement(sins: NavSolution, fix: GnssFix,
                         earth: EarthModel = WGS84,
                         max_age: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Position residual in meters (E, N, U) and its 3x15 H block.

    z = (R_mh (lat_s - lat_g), R_nh cos(lat) (lon_s - lon_g), h_s - h_g)
    """
    if abs(sins.t - fix.t) > max_age:
        raise StaleMeasurement(
            f"fix at {fix.t} vs nav at {sins.t} exceeds {max_age} s")
    r_m0, r_n0 = curvature_radii(sins.pos.lat, earth)
    rm, rn = r_m0 + sins.pos.height, r_n0 + sins.pos.height
    cl = math.cos(sins.pos.lat)

    dlon = sins.pos.lon - fix.pos.lon
    if dlon > math.pi:
        dlon -= 2.0 * math.pi
    elif dlon < -math.pi:
        dlon += 2.0 * math.pi

    z = np.array([
        rm * (sins.pos.lat - fix.pos.lat),
        rn * cl * dlon,
        sins.pos.height - fix.pos.height,
    ])
    h = np.zeros((3, N_STATES))
    h[0, StateIndex.DLAT] = rm
    h[1, StateIndex.DLON] = rn * cl
    h[2, StateIndex.DH] = 1.0
    return z, h


def velocity_measurement(sins: NavSolution, fix: GnssFix,
                         max_age: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Velocity residual (SINS minus fix) and its 3x15 H block
    ``[0 I3 0]``."""
    if abs(sins.t - fix.t) > max_age:
        raise StaleMeasurement(
            f"fix at {fix.t} vs nav at {sins.t} exceeds {max_age} s")
    z = sins.vel - fix.vel
    h = np.zeros((3, N_STATES))
    h[:, 3:6] = np.eye(3)
    return z, h


def solar_measurement(s_enu: np.ndarray, s_body: np.ndarray, c_bn: np.ndarray,
                      margin: float = DEFAULT_SIGN_MARGIN,
                      ) -> tuple[np.ndarray, np.ndarray, int]:
    """Solar-vector residual with bi-directional sign disambiguation.

    For both signs of the body-frame candidate the residual
    ``C s_body_signed - s_enu`` is formed and the smaller-norm sign wins;
    with a small attitude error the wrong sign leaves a residual of length
    ~2 while the right one is near zero. With ``A = C s_chosen`` the
    attitude sensitivity is ``z ~ -skew(A) phi + noise``, nonzero only in
    the first three columns.

    Returns (z, H, chosen_sign).

    Raises
    ------
    AmbiguousSign
        When the two residual norms differ by less than ``margin`` (relative
        to the larger): both fits are comparable and the epoch is dropped.
    """
    s_enu = np.asarray(s_enu, dtype=float)
    s_body = np.asarray(s_body, dtype=float)
    mapped = c_bn @ s_body
    r_plus = mapped - s_enu
    r_minus = -mapped - s_enu
    n_plus = float(np.linalg.norm(r_plus))
    n_minus = float(np.linalg.norm(r_minus))

    larger = max(n_plus, n_minus)
    if larger == 0.0 or abs(n_plus - n_minus) < margin * larger:
        raise AmbiguousSign(
            f"residual norms {n_plus:.4g} / {n_minus:.4g} within {margin:.0%}")

    sign = 1 if n_plus < n_minus else -1
    z = r_plus if sign == 1 else r_minus
    a = mapped if sign == 1 else -mapped
    h = np.zeros((3, N_STATES))
    h[0:3, 0:3] = -skew(a)
    return z, h, sign


def assemble_measurement(velocity=None, position=None, solar=None,
                         r_velocity=None, r_position=None, r_solar=None,
                         ) -> MeasurementBundle:
    """Stack the available (z, H) blocks in the fixed order velocity,
    position, solar, with the matching block-diagonal R.

    Each present block needs its R (3x3 or diagonal 3-vector).

    Raises
    ------
    EmptyMeasurement
        When no block is supplied.
    """
    zs, hs, rs, names = [], [], [], []
    for name, block, r in (("velocity", velocity, r_velocity),
                           ("position", position, r_position),
                           ("solar", solar, r_solar)):
        if block is None:
            continue
        z, h = block[0], block[1]
        if r is None:
            raise ValueError(f"{name} block supplied without its R")
        r = np.asarray(r, dtype=float)
        if r.ndim == 1:
            r = np.diag(r)
        zs.append(np.asarray(z, dtype=float))
        hs.append(np.asarray(h, dtype=float))
        rs.append(r)
        names.append(name)
    if not zs:
        raise EmptyMeasurement("no measurement block available")

    k = sum(len(z) for z in zs)
    z_all = np.concatenate(zs)
    h_all = np.vstack(hs)
    r_all = np.zeros((k, k))
    at = 0
    for r in rs:
        n = r.shape[0]
        r_all[at:at + n, at:at + n] = r
        at += n
    return MeasurementBundle(z=z_all, h=h_all, r=r_all, blocks=tuple(names))


def kf_predict(state: KfState) -> KfState:
    """Time update: x <- Phi x, P <- Phi P Phi^T + Qd (symmetrized)."""
    x = state.phi @ state.x
    p = state.phi @ state.p @ state.phi.T + state.qd
    return replace(state, x=x, p=0.5 * (p + p.T))


MAX_INNOVATION_CONDITION = 1e12


def kf_update(state: KfState, m: MeasurementBundle, *,
              joseph: bool = False) -> KfState:
    """Measurement update with the standard (or Joseph-form) covariance.

    Raises
    ------
    SingularInnovation
        When the innovation covariance is numerically singular.
    """
    h, r = m.h, m.r
    s = h @ state.p @ h.T + r
    s = 0.5 * (s + s.T)
    cond = np.linalg.cond(s)
    if not np.isfinite(cond) or cond > MAX_INNOVATION_CONDITION:
        raise SingularInnovation(f"innovation covariance condition {cond:.3e}")

    k = np.linalg.solve(s, h @ state.p).T
    x = state.x + k @ (m.z - h @ state.x)
    ikh = np.eye(N_STATES) - k @ h
    if joseph:
        p = ikh @ state.p @ ikh.T + k @ r @ k.T
    else:
        p = ikh @ state.p
    return replace(state, x=x, p=0.5 * (p + p.T))


def correct_nav(nav: NavSolution, x: np.ndarray) -> tuple[NavSolution, np.ndarray]:
    """Feed the estimated errors back into the navigation solution.

    Removes the attitude misalignment to first order (then
    re-orthonormalizes), subtracts velocity and position errors, and zeroes
    those states; the gyro/accel bias states are retained in the returned
    vector as the persistent sensor-error estimate.
    """
    x = np.asarray(x, dtype=float)
    phi = x[0:3]
    c_new = orthonormalize(misalignment_dcm(-phi) @ nav.c_bn)
    vel_new = nav.vel - x[3:6]
    lon = nav.pos.lon - x[7]
    if lon > math.pi:
        lon -= 2.0 * math.pi
    elif lon <= -math.pi:
        lon += 2.0 * math.pi
    pos_new = GeodeticPosition(nav.pos.lat - x[6], lon, nav.pos.height - x[8])

    x_out = x.copy()
    x_out[0:9] = 0.0
    nav_new = NavSolution(pos=pos_new, vel=vel_new, c_bn=c_new, t=nav.t)
    return nav_new, x_out
