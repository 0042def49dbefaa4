"""Scenario engine: truth trajectories, sensor simulation, fused runs.

A scenario is a pure function of (profile, sensor suite, filter config,
seed): the master seed is split into independent per-sensor streams, so
enabling or disabling one sensor never changes another sensor's noise.

Hardware-style "less than" error bounds are interpreted as 3-sigma values
when drawing noise (documented per field on the sensor dataclasses).

The run loop mechanizes the inertial solution at the IMU rate, predicts the
error filter at a configurable rate, applies satellite and solar-vector
updates on their own schedules (stacked into one update when they coincide),
and feeds corrections back closed-loop. Estimated sensor biases are moved
into a cumulative IMU compensation at each update, keeping the small-error
assumptions of the linear model valid.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import AmbiguousSign, ConfigError, DegenerateGeometry, InsufficientSamples
from .frames import (
    EarthModel,
    EulerAngles,
    GeodeticPosition,
    WGS84,
    curvature_radii,
    dcm_from_euler,
    euler_from_dcm,
    misalignment_dcm,
)
from .fusion import (
    GnssFix,
    KfState,
    N_STATES,
    assemble_measurement,
    build_F,
    correct_nav,
    discretize,
    kf_predict,
    kf_update,
    position_measurement,
    solar_measurement,
    velocity_measurement,
)
from .polarimetry import CameraIntrinsics, extract_solar_vector
from .sins_mech import NavSolution, mechanize_block
from .sky_synth import SkyScene, render_frame
from .sun_ephemeris import UtcInstant, solar_position

__all__ = [
    "TrajectoryProfile",
    "ImuSpec",
    "GnssSpec",
    "PsnsSpec",
    "SensorSuiteSpec",
    "FilterConfig",
    "TruthTimeline",
    "RunRecord",
    "gen_truth",
    "simulate_imu",
    "simulate_gnss",
    "simulate_psns",
    "run_scenario",
    "fuse_streams",
    "run_batch",
    "PsnsEpoch",
    "CSV_COLUMNS",
]

DEG = math.pi / 180.0
DEG_PER_HOUR = DEG / 3600.0
MILLI_G = 9.80665e-3


@dataclass(frozen=True)
class TrajectoryProfile:
    """Truth trajectory description.

    kind: stationary | constant_velocity | coordinated_turn | waypoint_spline.
    speed moves along the initial heading; turn_rate is the (flat) heading
    rate of the coordinated turn; waypoints are (t, east, north) meters
    relative to the start, required for waypoint_spline.
    """

    kind: str
    start: GeodeticPosition
    attitude: EulerAngles
    duration: float
    speed: float = 0.0
    climb_rate: float = 0.0
    turn_rate: float = 0.0
    waypoints: tuple[tuple[float, float, float], ...] = ()

    def __post_init__(self):
        kinds = ("stationary", "constant_velocity", "coordinated_turn",
                 "waypoint_spline")
        if self.kind not in kinds:
            raise ConfigError(f"unknown profile kind {self.kind!r}", key="kind")
        if self.duration <= 0:
            raise ConfigError("duration must be positive", key="duration")
        if self.kind == "waypoint_spline" and len(self.waypoints) < 2:
            raise ConfigError("waypoint_spline needs >= 2 waypoints",
                              key="waypoints")


@dataclass(frozen=True)
class ImuSpec:
    """Inertial sensor errors; bound-style fields are 3-sigma draws.

    gyro_bias_repeatability: rad/s (constant per run);
    gyro_bias_stability: rad/s (random-walk level over tau_stability);
    gyro_arw: rad/s/sqrt(Hz) white noise; gyro_range: rad/s clip.
    Accelerometer fields mirror these in m/s^2.
    """

    rate: float = 200.0
    gyro_bias_repeatability: float = 40.0 * DEG_PER_HOUR
    gyro_bias_stability: float = 20.0 * DEG_PER_HOUR
    gyro_arw: float = 0.15 * DEG / 60.0          # 0.15 deg/sqrt(h)
    gyro_range: float = 400.0 * DEG
    accel_bias_repeatability: float = 7.0 * MILLI_G
    accel_bias_stability: float = 3.5 * MILLI_G
    accel_vrw: float = 1.0e-3                    # ~100 ug/sqrt(Hz)
    accel_range: float = 25.0 * 9.80665
    tau_stability: float = 300.0


@dataclass(frozen=True)
class GnssSpec:
    """Satellite fix errors (3-sigma bounds) and rate."""

    rate: float = 1.0
    pos_sigma_enu: tuple[float, float, float] = (10.0 / 3, 10.0 / 3, 15.0 / 3)
    vel_sigma_enu: tuple[float, float, float] = (0.1 / 3, 0.1 / 3, 0.2 / 3)


@dataclass(frozen=True)
class PsnsSpec:
    """Polarized-sky sensor model.

    path 'direct' perturbs the true body-frame solar vector with tangent-
    plane Gaussian noise of ``ang_sigma`` rad per axis and flips its sign at
    random per epoch (the defining bi-directionality). Path 'image' renders
    a synthetic sky and runs the full mosaic pipeline.

    The default ``ang_sigma`` is the pinned Monte-Carlo accuracy of the
    image path on the default camera at 1% intensity noise (median angular
    error 0.0413 deg over 100 seeds), so both paths carry one error budget.
    """

    rate: float = 1.0
    path: str = "direct"
    ang_sigma: float = 7.2e-4
    cam: CameraIntrinsics = CameraIntrinsics(dx=1e-5, dy=1e-5, nx=64, ny=64, f=2e-4)
    max_dop: float = 0.75
    s0_base: float = 20000.0
    intensity_noise: float = 0.01
    aop_jitter: float = 0.0

    def __post_init__(self):
        if self.path not in ("direct", "image"):
            raise ConfigError(f"unknown psns path {self.path!r}", key="path")


@dataclass(frozen=True)
class SensorSuiteSpec:
    imu: ImuSpec = ImuSpec()
    gnss: GnssSpec | None = GnssSpec()
    psns: PsnsSpec | None = PsnsSpec()


@dataclass(frozen=True)
class FilterConfig:
    """Error-filter tuning and scheduling.

    Rates must divide the IMU rate; measurement rates must divide the
    predict rate. R defaults follow the sensor-suite 3-sigma bounds; the
    solar-vector R treats the tangent-plane angular noise as an isotropic
    per-axis sigma on the unit-vector residual.
    """

    predict_rate: float = 10.0
    joseph: bool = False
    sign_margin: float = 0.1
    feedback_biases: bool = True
    init_att_sigma: tuple[float, float, float] = (1.0 * DEG, 1.0 * DEG, 2.0 * DEG)
    init_vel_sigma: tuple[float, float, float] = (0.1, 0.1, 0.1)
    init_pos_sigma_m: tuple[float, float, float] = (5.0, 5.0, 10.0)
    r_solar_sigma: float | None = None     # default: suite psns ang_sigma
    q_gyro_psd: float | None = None        # default: imu arw^2
    q_accel_psd: float | None = None       # default: imu vrw^2
    # bias random-walk PSDs keep the bias covariance alive: the noise map
    # drives only attitude/velocity rows, so without these the filter locks
    # its bias estimate while the true bias wanders (the stability spec).
    # None derives (stability/3)^2 / tau from the sensor suite.
    q_gyro_bias_psd: float | None = None
    q_accel_bias_psd: float | None = None


@dataclass(frozen=True)
class TruthTimeline:
    """Truth state at epochs k*dt plus the ideal IMU per interval
    (midpoint-sampled, like an integrating sensor)."""

    dt: float
    t: np.ndarray            # (n+1,)
    lat: np.ndarray
    lon: np.ndarray
    h: np.ndarray
    vel: np.ndarray          # (n+1, 3)
    c_bn: np.ndarray         # (n+1, 3, 3)
    gyro: np.ndarray         # (n, 3)
    accel: np.ndarray        # (n, 3)

    def nav(self, k: int) -> NavSolution:
        return NavSolution(
            pos=GeodeticPosition(float(self.lat[k]), float(self.lon[k]),
                                 float(self.h[k])),
            vel=self.vel[k].copy(),
            c_bn=self.c_bn[k].copy(),
            t=float(self.t[k]),
        )

    @property
    def n_intervals(self) -> int:
        return len(self.gyro)


class _Kinematics:
    """Analytic velocity/attitude profile in the navigation frame."""

    def __init__(self, profile: TrajectoryProfile):
        self.p = profile
        if profile.kind == "waypoint_spline":
            pts = sorted(profile.waypoints)
            t = np.array([w[0] for w in pts])
            if len(np.unique(t)) != len(t):
                raise ConfigError("waypoint times must be distinct",
                                  key="waypoints")
            e = np.array([w[1] for w in pts])
            n = np.array([w[2] for w in pts])
            self._spl_t = t
            self._spl_e = self._hermite_coeffs(t, e)
            self._spl_n = self._hermite_coeffs(t, n)

    @staticmethod
    def _hermite_coeffs(t, y):
        """Catmull-Rom style cubic Hermite segments (value + slope pairs)."""
        n = len(t)
        slopes = np.empty(n)
        for i in range(n):
            lo = max(i - 1, 0)
            hi = min(i + 1, n - 1)
            slopes[i] = (y[hi] - y[lo]) / (t[hi] - t[lo])
        return y.copy(), slopes

    def state(self, tq: float):
        """(vel_enu, accel_enu, yaw, yaw_rate) at time tq."""
        vel, acc, yaw, yaw_rate = self.state_arrays(np.array([tq]))
        return vel[0], acc[0], float(yaw[0]), float(yaw_rate[0])

    def state_arrays(self, t: np.ndarray):
        """Vectorized (vel (n,3), accel (n,3), yaw (n,), yaw_rate (n,))."""
        p = self.p
        n = len(t)
        if p.kind == "stationary":
            return (np.zeros((n, 3)), np.zeros((n, 3)),
                    np.full(n, p.attitude.yaw), np.zeros(n))
        if p.kind == "constant_velocity":
            yaw = p.attitude.yaw
            vel = np.tile([p.speed * math.sin(yaw), p.speed * math.cos(yaw),
                           p.climb_rate], (n, 1))
            return vel, np.zeros((n, 3)), np.full(n, yaw), np.zeros(n)
        if p.kind == "coordinated_turn":
            yaw = p.attitude.yaw + p.turn_rate * t
            s, c = np.sin(yaw), np.cos(yaw)
            vel = np.column_stack([p.speed * s, p.speed * c,
                                   np.full(n, p.climb_rate)])
            acc = np.column_stack([p.speed * p.turn_rate * c,
                                   -p.speed * p.turn_rate * s, np.zeros(n)])
            return vel, acc, yaw, np.full(n, p.turn_rate)
        # waypoint_spline
        _, ve, ae = self._spline_eval_arrays(self._spl_e, t)
        _, vn, an = self._spline_eval_arrays(self._spl_n, t)
        speed2 = ve * ve + vn * vn
        if np.any(speed2 < 1e-4):
            raise ConfigError("waypoint spline speed fell below 0.01 m/s",
                              key="waypoints")
        yaw = np.arctan2(ve, vn)
        yaw_rate = (ae * vn - ve * an) / speed2
        vel = np.column_stack([ve, vn, np.full(n, p.climb_rate)])
        acc = np.column_stack([ae, an, np.zeros(n)])
        return vel, acc, yaw, yaw_rate

    def _spline_eval_arrays(self, coeffs, tq: np.ndarray):
        y, m = coeffs
        t = self._spl_t
        i = np.clip(np.searchsorted(t, tq, side="right") - 1, 0, len(t) - 2)
        h = t[i + 1] - t[i]
        s = (tq - t[i]) / h
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        val = h00 * y[i] + h10 * h * m[i] + h01 * y[i + 1] + h11 * h * m[i + 1]
        vel = ((6 * s**2 - 6 * s) / h) * y[i] + (3 * s**2 - 4 * s + 1) * m[i] \
            + ((-6 * s**2 + 6 * s) / h) * y[i + 1] + (3 * s**2 - 2 * s) * m[i + 1]
        acc = ((12 * s - 6) / h**2) * y[i] + ((6 * s - 4) / h) * m[i] \
            + ((-12 * s + 6) / h**2) * y[i + 1] + ((6 * s - 2) / h) * m[i + 1]
        return val, vel, acc


def _gravity_arrays(lat: np.ndarray, h: np.ndarray, earth: EarthModel) -> np.ndarray:
    s2 = np.sin(lat) ** 2
    g0 = earth.gamma_e * (1.0 + earth.somigliana_k * s2) / np.sqrt(1.0 - earth.e2 * s2)
    f = earth.flattening
    return g0 * (1.0 - 2.0 * h / earth.a * (1.0 + f + earth.m_ratio - 2.0 * f * s2)
                 + 3.0 * h**2 / earth.a**2)


def _radii_arrays(lat: np.ndarray, earth: EarthModel):
    s2 = np.sin(lat) ** 2
    w = np.sqrt(1.0 - earth.e2 * s2)
    return earth.a * (1.0 - earth.e2) / w**3, earth.a / w


def gen_truth(profile: TrajectoryProfile, dt: float,
              earth: EarthModel = WGS84) -> TruthTimeline:
    """Analytically consistent truth timeline at IMU resolution.

    Velocity, acceleration and attitude come from the closed-form profile
    kinematics; position is a cumulative midpoint integral of the geodetic
    rates with one corrector pass for the latitude feedback in the radii.
    The ideal IMU for interval k is sampled at the interval midpoint (an
    integrating sensor's effective sample).
    """
    n = int(round(profile.duration / dt))
    kin = _Kinematics(profile)

    t_arr = np.arange(n + 1) * dt
    t_mid = t_arr[:-1] + dt / 2.0

    vel, _, yaw_e, _ = kin.state_arrays(t_arr)
    v_m, a_m, yaw_m, yaw_rate_m = kin.state_arrays(t_mid)

    lat0, lon0, h0 = profile.start.lat, profile.start.lon, profile.start.height
    h = np.empty(n + 1)
    h[0] = h0
    h[1:] = h0 + np.cumsum(v_m[:, 2]) * dt
    h_m = 0.5 * (h[:-1] + h[1:])

    # predictor with the start latitude, one corrector for radii feedback
    lat = np.full(n + 1, lat0)
    for _ in range(2):
        lat_m = 0.5 * (lat[:-1] + lat[1:])
        r_m_mid, r_n_mid = _radii_arrays(lat_m, earth)
        lat = np.concatenate(([lat0],
                              lat0 + np.cumsum(v_m[:, 1] / (r_m_mid + h_m)) * dt))
    lat_m = 0.5 * (lat[:-1] + lat[1:])
    r_m_mid, r_n_mid = _radii_arrays(lat_m, earth)
    lon = np.concatenate(([lon0], lon0 + np.cumsum(
        v_m[:, 0] / ((r_n_mid + h_m) * np.cos(lat_m))) * dt))

    # attitude: C(t) = Rz(-yaw) @ M with constant pitch/roll part M
    m_const = dcm_from_euler(EulerAngles(0.0, profile.attitude.pitch,
                                         profile.attitude.roll))

    def attitude_mats(yaw_arr):
        c, s = np.cos(yaw_arr), np.sin(yaw_arr)
        out = np.empty((len(yaw_arr), 3, 3))
        out[:, 0, :] = c[:, None] * m_const[0] + s[:, None] * m_const[1]
        out[:, 1, :] = -s[:, None] * m_const[0] + c[:, None] * m_const[1]
        out[:, 2, :] = m_const[2]
        return out

    c_bn = attitude_mats(yaw_e)

    # navigation-frame rates at interval midpoints
    sl, cl = np.sin(lat_m), np.cos(lat_m)
    omega_ie = np.column_stack([np.zeros(n), earth.omega_ie * cl,
                                earth.omega_ie * sl])
    omega_en = np.column_stack([
        -v_m[:, 1] / (r_m_mid + h_m),
        v_m[:, 0] / (r_n_mid + h_m),
        v_m[:, 0] * sl / (cl * (r_n_mid + h_m)),
    ])
    omega_nb = np.column_stack([np.zeros(n), np.zeros(n), -yaw_rate_m])
    omega_ib_n = omega_ie + omega_en + omega_nb
    f_n = a_m + np.cross(2.0 * omega_ie + omega_en, v_m)
    f_n[:, 2] += _gravity_arrays(lat_m, h_m, earth)

    c_mid = attitude_mats(yaw_m)
    gyro = np.einsum("kij,kj->ki", c_mid.transpose(0, 2, 1), omega_ib_n)
    accel = np.einsum("kij,kj->ki", c_mid.transpose(0, 2, 1), f_n)

    return TruthTimeline(dt=dt, t=t_arr, lat=lat, lon=lon, h=h, vel=vel,
                         c_bn=c_bn, gyro=gyro, accel=accel)


def simulate_imu(truth: TruthTimeline, spec: ImuSpec, seed) -> tuple[np.ndarray, np.ndarray]:
    """Measured gyro/accel streams: truth + constant bias (repeatability) +
    bias random walk (stability over tau) + white noise, then range clip.
    Deterministic per seed."""
    rng = np.random.default_rng(seed)
    n = truth.n_intervals
    dt = truth.dt

    gyro_bias0 = rng.standard_normal(3) * (spec.gyro_bias_repeatability / 3.0)
    accel_bias0 = rng.standard_normal(3) * (spec.accel_bias_repeatability / 3.0)

    q_g = (spec.gyro_bias_stability / 3.0) / math.sqrt(spec.tau_stability)
    q_a = (spec.accel_bias_stability / 3.0) / math.sqrt(spec.tau_stability)
    gyro_walk = np.cumsum(rng.standard_normal((n, 3)) * (q_g * math.sqrt(dt)), axis=0)
    accel_walk = np.cumsum(rng.standard_normal((n, 3)) * (q_a * math.sqrt(dt)), axis=0)

    gyro_white = rng.standard_normal((n, 3)) * (spec.gyro_arw / math.sqrt(dt))
    accel_white = rng.standard_normal((n, 3)) * (spec.accel_vrw / math.sqrt(dt))

    gyro = truth.gyro + gyro_bias0 + gyro_walk + gyro_white
    accel = truth.accel + accel_bias0 + accel_walk + accel_white
    np.clip(gyro, -spec.gyro_range, spec.gyro_range, out=gyro)
    np.clip(accel, -spec.accel_range, spec.accel_range, out=accel)
    return gyro, accel


def simulate_gnss(truth: TruthTimeline, spec: GnssSpec, seed,
                  earth: EarthModel = WGS84) -> dict[int, GnssFix]:
    """Fixes keyed by truth epoch index, at the spec rate."""
    rng = np.random.default_rng(seed)
    every = int(round(1.0 / (spec.rate * truth.dt)))
    fixes: dict[int, GnssFix] = {}
    sig_p = np.asarray(spec.pos_sigma_enu)
    sig_v = np.asarray(spec.vel_sigma_enu)
    for k in range(every, truth.n_intervals + 1, every):
        noise_p = rng.standard_normal(3) * sig_p
        noise_v = rng.standard_normal(3) * sig_v
        lat_k = float(truth.lat[k])
        h_k = float(truth.h[k])
        r_m, r_n = curvature_radii(lat_k, earth)
        pos = GeodeticPosition(
            lat_k + noise_p[1] / (r_m + h_k),
            float(truth.lon[k]) + noise_p[0] / ((r_n + h_k) * math.cos(lat_k)),
            h_k + noise_p[2],
        )
        fixes[k] = GnssFix(t=float(truth.t[k]), pos=pos,
                           vel=truth.vel[k] + noise_v)
    return fixes


@dataclass(frozen=True)
class PsnsEpoch:
    t: float
    s_body: np.ndarray      # bi-directional unit vector, random sign
    s_enu: np.ndarray       # reference vector from the sun model


def _shift_instant(base: UtcInstant, offset_s: float) -> UtcInstant:
    from datetime import datetime, timedelta
    whole_us = int(round((base.second + offset_s) * 1e6))
    dt0 = datetime(base.year, base.month, base.day, base.hour, base.minute) \
        + timedelta(microseconds=whole_us)
    return UtcInstant(dt0.year, dt0.month, dt0.day, dt0.hour, dt0.minute,
                      dt0.second + dt0.microsecond * 1e-6, delta_t=base.delta_t)


def _sun_at(start_time: UtcInstant, offset_s: float,
            pos: GeodeticPosition) -> "np.ndarray | None":
    sv = solar_position(_shift_instant(start_time, offset_s), pos)
    if sv.elevation <= 0.0:
        return None
    return sv.vector


def simulate_psns(truth: TruthTimeline, spec: PsnsSpec, seed,
                  start_time: UtcInstant) -> dict[int, PsnsEpoch]:
    """Bi-directional solar-vector epochs keyed by truth epoch index.

    Epochs with the sun below the horizon are dropped; image-path epochs
    that fail extraction (degenerate geometry) are dropped likewise. The
    returned body vectors carry a random sign per epoch: downstream code
    must never rely on the sign.
    """
    rng = np.random.default_rng(seed)
    every = int(round(1.0 / (spec.rate * truth.dt)))
    out: dict[int, PsnsEpoch] = {}
    for k in range(every, truth.n_intervals + 1, every):
        pos = GeodeticPosition(float(truth.lat[k]), float(truth.lon[k]),
                               float(truth.h[k]))
        # one draw per epoch regardless of visibility keeps the stream
        # aligned: dropping an epoch must not shift later noise
        tangent_noise = rng.standard_normal(2)
        flip = rng.uniform() < 0.5
        img_seed = int(rng.integers(0, 2**31 - 1))

        s_enu = _sun_at(start_time, float(truth.t[k]), pos)
        if s_enu is None:
            continue
        c_bn = truth.c_bn[k]
        s_body_true = c_bn.T @ s_enu

        if spec.path == "direct":
            u1 = np.cross(s_body_true, [0.0, 0.0, 1.0])
            n1 = np.linalg.norm(u1)
            if n1 < 1e-9:
                u1 = np.cross(s_body_true, [0.0, 1.0, 0.0])
                n1 = np.linalg.norm(u1)
            u1 /= n1
            u2 = np.cross(s_body_true, u1)
            s_body = s_body_true + spec.ang_sigma * (
                tangent_noise[0] * u1 + tangent_noise[1] * u2)
            s_body /= np.linalg.norm(s_body)
        else:
            scene = SkyScene(sun_enu=s_enu, c_bn=c_bn, cam=spec.cam,
                             max_dop=spec.max_dop, s0_base=spec.s0_base,
                             intensity_noise=spec.intensity_noise,
                             aop_jitter=spec.aop_jitter)
            try:
                frame = render_frame(scene, seed=img_seed)
                s_body = extract_solar_vector(frame, spec.cam).solar.vector
            except (DegenerateGeometry, InsufficientSamples):
                continue

        if flip:
            s_body = -s_body
        out[k] = PsnsEpoch(t=float(truth.t[k]), s_body=s_body, s_enu=s_enu)
    return out


CSV_COLUMNS = (
    ["t"]
    + [f"true_{c}" for c in ("lat_deg", "lon_deg", "h", "ve", "vn", "vu",
                             "yaw_deg", "pitch_deg", "roll_deg")]
    + [f"sins_{c}" for c in ("lat_deg", "lon_deg", "h", "ve", "vn", "vu",
                             "yaw_deg", "pitch_deg", "roll_deg")]
    + [f"fused_{c}" for c in ("lat_deg", "lon_deg", "h", "ve", "vn", "vu",
                              "yaw_deg", "pitch_deg", "roll_deg")]
    + [f"x_{i}" for i in range(N_STATES)]
    + [f"p_{i}" for i in range(N_STATES)]
    + ["res_ve", "res_vn", "res_vu", "res_pe", "res_pn", "res_pu",
       "res_se", "res_sn", "res_su", "psns_sign"]
)


@dataclass
class RunRecord:
    """Per-epoch series of one fused run (epochs at the filter predict
    rate; see CSV_COLUMNS for the export order)."""

    t: np.ndarray
    truth: np.ndarray        # (n, 9) lat, lon, h, ve, vn, vu, yaw, pitch, roll
    sins: np.ndarray         # (n, 9) open-loop inertial-only solution
    fused: np.ndarray        # (n, 9)
    x: np.ndarray            # (n, 15) error estimates (post-update)
    p_diag: np.ndarray       # (n, 15)
    residuals: np.ndarray    # (n, 9) nan where absent
    psns_sign: np.ndarray    # (n,) +-1, 0 when no solar update
    seed: int

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(",".join(CSV_COLUMNS) + "\n")
        n = len(self.t)
        rad2deg = 180.0 / math.pi

        def fmt(v):
            if np.isnan(v):
                return "nan"
            return repr(float(v))

        for i in range(n):
            row = [fmt(self.t[i])]
            for block in (self.truth, self.sins, self.fused):
                vals = block[i].copy()
                vals[0] *= rad2deg
                vals[1] *= rad2deg
                vals[6] *= rad2deg
                vals[7] *= rad2deg
                vals[8] *= rad2deg
                row.extend(fmt(v) for v in vals)
            row.extend(fmt(v) for v in self.x[i])
            row.extend(fmt(v) for v in self.p_diag[i])
            row.extend(fmt(v) for v in self.residuals[i])
            row.append(repr(int(self.psns_sign[i])))
            out.write(",".join(row) + "\n")
        return out.getvalue()

    def _errors(self, series: np.ndarray) -> dict[str, np.ndarray]:
        r_m, r_n = curvature_radii(float(self.truth[0, 0]))
        h0 = float(self.truth[0, 2])
        dn = (series[:, 0] - self.truth[:, 0]) * (r_m + h0)
        de = (series[:, 1] - self.truth[:, 1]) * (r_n + h0) \
            * np.cos(self.truth[:, 0])
        dh = series[:, 2] - self.truth[:, 2]
        dv = series[:, 3:6] - self.truth[:, 3:6]
        datt = series[:, 6:9] - self.truth[:, 6:9]
        datt = (datt + math.pi) % (2.0 * math.pi) - math.pi
        return {
            "horizontal_m": np.hypot(de, dn),
            "height_m": np.abs(dh),
            "speed_mps": np.linalg.norm(dv, axis=1),
            "yaw_deg": np.abs(datt[:, 0]) * 180.0 / math.pi,
            "pitch_deg": np.abs(datt[:, 1]) * 180.0 / math.pi,
            "roll_deg": np.abs(datt[:, 2]) * 180.0 / math.pi,
        }

    def terminal_errors(self) -> dict[str, dict[str, float]]:
        out = {}
        for name, series in (("sins", self.sins), ("fused", self.fused)):
            errs = self._errors(series)
            out[name] = {k: float(v[-1]) for k, v in errs.items()}
        return out

    def summary(self) -> str:
        lines = [f"run seed={self.seed} epochs={len(self.t)} "
                 f"t_final={self.t[-1]:.1f}s"]
        for name, series in (("sins", self.sins), ("fused", self.fused)):
            errs = self._errors(series)
            lines.append(f"[{name}]")
            for key, v in errs.items():
                rms = float(np.sqrt(np.mean(v**2)))
                lines.append(
                    f"  {key:14s} terminal={v[-1]:.6g} rms={rms:.6g}")
        return "\n".join(lines) + "\n"


def _nav_row(nav: NavSolution) -> np.ndarray:
    e = euler_from_dcm(nav.c_bn)
    return np.array([nav.pos.lat, nav.pos.lon, nav.pos.height,
                     nav.vel[0], nav.vel[1], nav.vel[2],
                     e.yaw, e.pitch, e.roll])


def _draw_initial_errors(truth_nav: NavSolution, cfg: FilterConfig, rng,
                         earth: EarthModel) -> NavSolution:
    att = rng.standard_normal(3) * np.asarray(cfg.init_att_sigma)
    vel = rng.standard_normal(3) * np.asarray(cfg.init_vel_sigma)
    pos_m = rng.standard_normal(3) * np.asarray(cfg.init_pos_sigma_m)
    r_m, r_n = curvature_radii(truth_nav.pos.lat, earth)
    pos = GeodeticPosition(
        truth_nav.pos.lat + pos_m[1] / (r_m + truth_nav.pos.height),
        truth_nav.pos.lon + pos_m[0] / ((r_n + truth_nav.pos.height)
                                        * math.cos(truth_nav.pos.lat)),
        truth_nav.pos.height + pos_m[2],
    )
    return NavSolution(pos=pos, vel=truth_nav.vel + vel,
                       c_bn=misalignment_dcm(att) @ truth_nav.c_bn,
                       t=truth_nav.t)


def _initial_covariance(suite: SensorSuiteSpec, cfg: FilterConfig,
                        start: GeodeticPosition, earth: EarthModel) -> np.ndarray:
    r_m, r_n = curvature_radii(start.lat, earth)
    rm, rn = r_m + start.height, r_n + start.height
    att = np.asarray(cfg.init_att_sigma)
    vel = np.asarray(cfg.init_vel_sigma)
    pos_m = np.asarray(cfg.init_pos_sigma_m)
    pos = np.array([pos_m[1] / rm, pos_m[0] / (rn * math.cos(start.lat)),
                    pos_m[2]])
    gyro_b = suite.imu.gyro_bias_repeatability / 3.0
    accel_b = suite.imu.accel_bias_repeatability / 3.0
    diag = np.concatenate([att**2, vel**2, pos**2,
                           np.full(3, gyro_b**2), np.full(3, accel_b**2)])
    return np.diag(diag)


def run_scenario(profile: TrajectoryProfile, suite: SensorSuiteSpec,
                 cfg: FilterConfig, seed: int, start_time: UtcInstant,
                 earth: EarthModel = WGS84) -> RunRecord:
    """One full fused run; bit-reproducible per (inputs, seed)."""
    dt = 1.0 / suite.imu.rate
    truth = gen_truth(profile, dt, earth)

    root = np.random.SeedSequence(seed)
    ss_init, ss_imu, ss_gnss, ss_psns = root.spawn(4)

    gyro_meas, accel_meas = simulate_imu(truth, suite.imu, ss_imu)
    gnss = simulate_gnss(truth, suite.gnss, ss_gnss, earth) if suite.gnss else {}
    psns = simulate_psns(truth, suite.psns, ss_psns, start_time) \
        if suite.psns else {}

    rng_init = np.random.default_rng(ss_init)
    nav0 = _draw_initial_errors(truth.nav(0), cfg, rng_init, earth)
    return fuse_streams(truth, gyro_meas, accel_meas, gnss, psns, suite, cfg,
                        nav0, seed, earth)


def fuse_streams(truth: TruthTimeline, gyro_meas: np.ndarray,
                 accel_meas: np.ndarray, gnss: dict[int, GnssFix],
                 psns: dict[int, PsnsEpoch], suite: SensorSuiteSpec,
                 cfg: FilterConfig, nav0: NavSolution, seed: int,
                 earth: EarthModel = WGS84) -> RunRecord:
    """Fusion loop over prebuilt sensor streams (the deterministic tail of
    :func:`run_scenario`, exposed for stream-level experiments)."""
    dt = truth.dt

    predict_every = int(round(suite.imu.rate / cfg.predict_rate))
    if predict_every < 1 or abs(suite.imu.rate / cfg.predict_rate
                                - predict_every) > 1e-9:
        raise ConfigError("predict_rate must divide the imu rate",
                          key="predict_rate")
    for name, sensor in (("gnss", suite.gnss), ("psns", suite.psns)):
        if sensor is None:
            continue
        every = int(round(suite.imu.rate / sensor.rate))
        if every % predict_every:
            raise ConfigError(
                f"{name} rate must divide the filter predict rate",
                key=f"{name}.rate")

    nav = nav0
    nav_open = nav0           # open-loop inertial-only twin
    p0 = _initial_covariance(suite, cfg, nav0.pos, earth)
    state = KfState.initial(p0)

    q_gyro = cfg.q_gyro_psd if cfg.q_gyro_psd is not None else suite.imu.gyro_arw**2
    q_accel = cfg.q_accel_psd if cfg.q_accel_psd is not None \
        else suite.imu.accel_vrw**2
    noise_psd = np.concatenate([np.full(3, q_gyro), np.full(3, q_accel)])

    q_gb = cfg.q_gyro_bias_psd if cfg.q_gyro_bias_psd is not None else \
        (suite.imu.gyro_bias_stability / 3.0) ** 2 / suite.imu.tau_stability
    q_ab = cfg.q_accel_bias_psd if cfg.q_accel_bias_psd is not None else \
        (suite.imu.accel_bias_stability / 3.0) ** 2 / suite.imu.tau_stability
    qd_bias = np.zeros(N_STATES)
    qd_bias[9:12] = q_gb
    qd_bias[12:15] = q_ab

    # R floors keep the innovation well conditioned when a synthetic suite
    # declares noise-free sensors
    r_pos = np.maximum(np.asarray(suite.gnss.pos_sigma_enu), 1e-2) ** 2 \
        if suite.gnss else None
    r_vel = np.maximum(np.asarray(suite.gnss.vel_sigma_enu), 1e-3) ** 2 \
        if suite.gnss else None
    sig_s = cfg.r_solar_sigma if cfg.r_solar_sigma is not None \
        else (suite.psns.ang_sigma if suite.psns else 0.0)
    r_sol = np.full(3, max(sig_s, 1e-4) ** 2)

    gyro_comp = np.zeros(3)
    accel_comp = np.zeros(3)

    n_epochs = truth.n_intervals // predict_every
    rec_t = np.empty(n_epochs)
    rec_truth = np.empty((n_epochs, 9))
    rec_sins = np.empty((n_epochs, 9))
    rec_fused = np.empty((n_epochs, 9))
    rec_x = np.empty((n_epochs, N_STATES))
    rec_p = np.empty((n_epochs, N_STATES))
    rec_res = np.full((n_epochs, 9), np.nan)
    rec_sign = np.zeros(n_epochs, dtype=int)

    dt_pred = predict_every * dt
    for e in range(n_epochs):
        k0 = e * predict_every
        k1 = k0 + predict_every

        g_blk = gyro_meas[k0:k1] - gyro_comp
        a_blk = accel_meas[k0:k1] - accel_comp
        nav = mechanize_block(nav, g_blk, a_blk, dt, earth)
        nav_open = mechanize_block(nav_open, gyro_meas[k0:k1],
                                   accel_meas[k0:k1], dt, earth)

        accel_now = accel_meas[k1 - 1] - accel_comp
        sys_m = build_F(nav, accel_now, earth, noise_psd=noise_psd)
        phi, gamma, qd = discretize(sys_m, dt_pred)
        qd = qd + np.diag(qd_bias * dt_pred)
        state = KfState(x=state.x, p=state.p, phi=phi, gamma=gamma, qd=qd)
        state = kf_predict(state)

        fix = gnss.get(k1)
        sol = psns.get(k1)
        vel_block = pos_block = sol_block = None
        sign = 0
        if fix is not None:
            vel_block = velocity_measurement(nav, fix)
            pos_block = position_measurement(nav, fix, earth)
        if sol is not None:
            try:
                zs, hs, sign = solar_measurement(sol.s_enu, sol.s_body,
                                                 nav.c_bn, cfg.sign_margin)
                sol_block = (zs, hs)
            except AmbiguousSign:
                sol_block = None
                sign = 0

        if vel_block or pos_block or sol_block:
            m = assemble_measurement(
                velocity=vel_block, position=pos_block, solar=sol_block,
                r_velocity=r_vel if vel_block else None,
                r_position=r_pos if pos_block else None,
                r_solar=r_sol if sol_block else None)
            state = kf_update(state, m, joseph=cfg.joseph)
            nav, x_post = correct_nav(nav, state.x)
            if cfg.feedback_biases:
                gyro_comp = gyro_comp + x_post[9:12]
                accel_comp = accel_comp + x_post[12:15]
                x_post = x_post.copy()
                x_post[9:15] = 0.0
            state = KfState(x=x_post, p=state.p, phi=state.phi,
                            gamma=state.gamma, qd=state.qd)
            if vel_block is not None:
                rec_res[e, 0:3] = vel_block[0]
            if pos_block is not None:
                rec_res[e, 3:6] = pos_block[0]
            if sol_block is not None:
                rec_res[e, 6:9] = sol_block[0]

        rec_sign[e] = sign
        rec_t[e] = truth.t[k1]
        rec_truth[e] = _nav_row(truth.nav(k1))
        rec_sins[e] = _nav_row(nav_open)
        rec_fused[e] = _nav_row(nav)
        rec_x[e] = state.x
        rec_p[e] = np.diag(state.p)

    return RunRecord(t=rec_t, truth=rec_truth, sins=rec_sins, fused=rec_fused,
                     x=rec_x, p_diag=rec_p, residuals=rec_res,
                     psns_sign=rec_sign, seed=seed)


def run_batch(profile: TrajectoryProfile, suite: SensorSuiteSpec,
              cfg: FilterConfig, seeds, start_time: UtcInstant,
              earth: EarthModel = WGS84) -> tuple[list[RunRecord], str]:
    """Monte-Carlo batch over the given seeds; returns the records plus an
    aggregate statistics text (per-seed terminal errors and percentiles)."""
    records = [run_scenario(profile, suite, cfg, int(s), start_time, earth)
               for s in seeds]
    keys = ["horizontal_m", "height_m", "speed_mps", "yaw_deg", "pitch_deg",
            "roll_deg"]
    out = io.StringIO()
    out.write("seed," + ",".join(f"fused_{k}" for k in keys)
              + "," + ",".join(f"sins_{k}" for k in keys) + "\n")
    table = {k: [] for k in keys}
    for rec in records:
        terms = rec.terminal_errors()
        for k in keys:
            table[k].append(terms["fused"][k])
        out.write(str(rec.seed) + ","
                  + ",".join(repr(terms["fused"][k]) for k in keys) + ","
                  + ",".join(repr(terms["sins"][k]) for k in keys) + "\n")
    out.write("# aggregate over %d seeds (fused terminal errors)\n" % len(records))
    for k in keys:
        v = np.array(table[k])
        out.write(f"# {k}: median={float(np.median(v))!r} "
                  f"p10={float(np.percentile(v, 10))!r} "
                  f"p90={float(np.percentile(v, 90))!r}\n")
    return records, out.getvalue()
