"""Plain-text configuration: parsing, schema validation, object building.

Format: line-oriented ``key = value`` entries grouped under ``[section]``
headers; ``#`` starts a comment; blank lines ignored. Unknown sections or
keys are rejected with the offending name and line number. All angles in
config files are degrees (gyro bias in deg/h, ARW in deg/sqrt(h)); values
convert to SI radians at this boundary only.

Three schemas cover the external surfaces: ``scenario`` (fusion runs and
batches), ``camera`` (solar-vector extraction from an image), ``scene``
(synthetic sky generation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError
from .frames import EulerAngles, GeodeticPosition
from .polarimetry import (
    DEFAULT_DOP_FLOOR,
    DEFAULT_MAX_SAMPLES,
    CameraIntrinsics,
    MosaicPattern,
)
from .simulator import (
    DEG,
    FilterConfig,
    GnssSpec,
    ImuSpec,
    PsnsSpec,
    SensorSuiteSpec,
    TrajectoryProfile,
)
from .sky_synth import SkyScene
from .sun_ephemeris import DEFAULT_DELTA_T, UtcInstant, enu_from_az_el

__all__ = [
    "parse_config",
    "validate_scenario",
    "validate_camera",
    "validate_scene",
    "build_scenario",
    "build_camera",
    "build_scene",
    "ScenarioSetup",
    "CameraSetup",
    "SceneSetup",
]

DEG_PER_HOUR = DEG / 3600.0
MILLI_G = 9.80665e-3


def parse_config(text: str) -> dict[str, dict[str, tuple[str, int]]]:
    """Parse into {section: {key: (raw value, line number)}}.

    Raises
    ------
    ConfigError
        On malformed lines, duplicate keys, or entries before any section.
    """
    sections: dict[str, dict[str, tuple[str, int]]] = {}
    current: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().lower()
            if not current:
                raise ConfigError("empty section name", line=lineno)
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}",
                              line=lineno)
        if current is None:
            raise ConfigError("entry before any [section]", line=lineno)
        key, _, value = line.partition("=")
        key = key.strip().lower()
        value = value.strip()
        if not key:
            raise ConfigError("empty key", line=lineno)
        if key in sections[current]:
            raise ConfigError("duplicate key", key=f"{current}.{key}",
                              line=lineno)
        sections[current][key] = (value, lineno)
    return sections


def _conv_float(v: str) -> float:
    return float(v)


def _conv_int(v: str) -> int:
    return int(v)


def _conv_bool(v: str) -> bool:
    low = v.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _conv_str(v: str) -> str:
    return v


def _conv_floats3(v: str) -> tuple[float, float, float]:
    parts = [float(p) for p in v.replace(";", ",").split(",")]
    if len(parts) != 3:
        raise ValueError(f"need 3 comma-separated numbers, got {len(parts)}")
    return tuple(parts)  # type: ignore[return-value]


def _conv_waypoints(v: str) -> tuple[tuple[float, float, float], ...]:
    out = []
    for chunk in v.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = [float(p) for p in chunk.split(",")]
        if len(parts) != 3:
            raise ValueError("each waypoint is 't,east,north'")
        out.append(tuple(parts))
    return tuple(out)  # type: ignore[return-value]


def _conv_utc(v: str) -> UtcInstant:
    # 2026-04-14T23:00:00 or '2026-04-14 23:00:00'
    from datetime import datetime
    stamp = datetime.fromisoformat(v.replace(" ", "T"))
    return UtcInstant.from_datetime(stamp)


def _conv_pattern(v: str) -> MosaicPattern:
    return MosaicPattern.from_string(v)


_REQUIRED = object()

# schema entries: key -> (converter, default); _REQUIRED marks mandatory keys
_SCENARIO_SCHEMA: dict[str, dict] = {
    "scenario": {
        "kind": (_conv_str, "stationary"),
        "lat_deg": (_conv_float, _REQUIRED),
        "lon_deg": (_conv_float, _REQUIRED),
        "height_m": (_conv_float, 0.0),
        "yaw_deg": (_conv_float, 0.0),
        "pitch_deg": (_conv_float, 0.0),
        "roll_deg": (_conv_float, 0.0),
        "duration_s": (_conv_float, _REQUIRED),
        "speed_mps": (_conv_float, 0.0),
        "climb_rate_mps": (_conv_float, 0.0),
        "turn_rate_dps": (_conv_float, 0.0),
        "waypoints": (_conv_waypoints, ()),
        "start_utc": (_conv_utc, _REQUIRED),
        "delta_t_s": (_conv_float, DEFAULT_DELTA_T),
    },
    "imu": {
        "rate_hz": (_conv_float, 200.0),
        "gyro_bias_repeatability_dph": (_conv_float, 40.0),
        "gyro_bias_stability_dph": (_conv_float, 20.0),
        "gyro_arw_dpsh": (_conv_float, 0.15),
        "gyro_range_dps": (_conv_float, 400.0),
        "accel_bias_repeatability_mg": (_conv_float, 7.0),
        "accel_bias_stability_mg": (_conv_float, 3.5),
        "accel_vrw": (_conv_float, 1.0e-3),
        "accel_range_g": (_conv_float, 25.0),
        "tau_stability_s": (_conv_float, 300.0),
    },
    "gnss": {
        "enabled": (_conv_bool, True),
        "rate_hz": (_conv_float, 1.0),
        "pos_sigma_enu_m": (_conv_floats3, (10.0 / 3, 10.0 / 3, 15.0 / 3)),
        "vel_sigma_enu_mps": (_conv_floats3, (0.1 / 3, 0.1 / 3, 0.2 / 3)),
    },
    "psns": {
        "enabled": (_conv_bool, True),
        "rate_hz": (_conv_float, 1.0),
        "path": (_conv_str, "direct"),
        "ang_sigma_deg": (_conv_float, math.degrees(7.2e-4)),
        "nx": (_conv_int, 64),
        "ny": (_conv_int, 64),
        "pixel_um": (_conv_float, 10.0),
        "focal_mm": (_conv_float, 0.2),
        "pattern": (_conv_pattern, MosaicPattern.TL90_TR45_BL135_BR0),
        "max_dop": (_conv_float, 0.75),
        "s0_base": (_conv_float, 20000.0),
        "intensity_noise": (_conv_float, 0.01),
        "aop_jitter_deg": (_conv_float, 0.0),
    },
    "filter": {
        "predict_rate_hz": (_conv_float, 10.0),
        "joseph": (_conv_bool, False),
        "sign_margin": (_conv_float, 0.1),
        "feedback_biases": (_conv_bool, True),
        "init_att_sigma_deg": (_conv_floats3, (1.0, 1.0, 2.0)),
        "init_vel_sigma_mps": (_conv_floats3, (0.1, 0.1, 0.1)),
        "init_pos_sigma_m": (_conv_floats3, (5.0, 5.0, 10.0)),
        "r_solar_sigma": (_conv_float, None),
        "q_gyro_psd": (_conv_float, None),
        "q_accel_psd": (_conv_float, None),
        "q_gyro_bias_psd": (_conv_float, None),
        "q_accel_bias_psd": (_conv_float, None),
    },
    "run": {
        "seed": (_conv_int, 0),
        "out_prefix": (_conv_str, "run"),
    },
}

_CAMERA_SCHEMA: dict[str, dict] = {
    "camera": {
        "nx": (_conv_int, _REQUIRED),
        "ny": (_conv_int, _REQUIRED),
        "pixel_um": (_conv_float, _REQUIRED),
        "focal_mm": (_conv_float, _REQUIRED),
        "pattern": (_conv_pattern, MosaicPattern.TL90_TR45_BL135_BR0),
        "dop_floor": (_conv_float, DEFAULT_DOP_FLOOR),
        "max_samples": (_conv_int, DEFAULT_MAX_SAMPLES),
        "weighting": (_conv_str, "dop"),
    },
}

_SCENE_SCHEMA: dict[str, dict] = {
    "scene": {
        "sun_azimuth_deg": (_conv_float, _REQUIRED),
        "sun_elevation_deg": (_conv_float, _REQUIRED),
        "yaw_deg": (_conv_float, 0.0),
        "pitch_deg": (_conv_float, 0.0),
        "roll_deg": (_conv_float, 0.0),
        "nx": (_conv_int, 64),
        "ny": (_conv_int, 64),
        "pixel_um": (_conv_float, 10.0),
        "focal_mm": (_conv_float, 0.2),
        "pattern": (_conv_pattern, MosaicPattern.TL90_TR45_BL135_BR0),
        "max_dop": (_conv_float, 0.75),
        "s0_base": (_conv_float, 20000.0),
        "intensity_noise": (_conv_float, 0.0),
        "aop_jitter_deg": (_conv_float, 0.0),
        "seed": (_conv_int, 0),
    },
}


def _apply_schema(parsed, schema, config_name: str) -> dict[str, dict]:
    for section, entries in parsed.items():
        if section not in schema:
            first_line = min(line for _, line in entries.values()) if entries else None
            raise ConfigError(
                f"unknown section [{section}] for a {config_name} config",
                key=section, line=first_line)
        for key, (_, lineno) in entries.items():
            if key not in schema[section]:
                raise ConfigError("unknown key", key=f"{section}.{key}",
                                  line=lineno)
    out: dict[str, dict] = {}
    for section, keys in schema.items():
        got = parsed.get(section, {})
        out[section] = {}
        for key, (conv, default) in keys.items():
            if key in got:
                raw, lineno = got[key]
                try:
                    out[section][key] = conv(raw)
                except (ValueError, ConfigError) as exc:
                    raise ConfigError(f"bad value {raw!r}: {exc}",
                                      key=f"{section}.{key}",
                                      line=lineno) from exc
            elif default is _REQUIRED:
                raise ConfigError("missing required key",
                                  key=f"{section}.{key}")
            else:
                out[section][key] = default
    return out


def validate_scenario(text: str) -> dict[str, dict]:
    return _apply_schema(parse_config(text), _SCENARIO_SCHEMA, "scenario")


def validate_camera(text: str) -> dict[str, dict]:
    return _apply_schema(parse_config(text), _CAMERA_SCHEMA, "camera")


def validate_scene(text: str) -> dict[str, dict]:
    return _apply_schema(parse_config(text), _SCENE_SCHEMA, "scene")


@dataclass(frozen=True)
class ScenarioSetup:
    profile: TrajectoryProfile
    suite: SensorSuiteSpec
    filter_config: FilterConfig
    seed: int
    start_time: UtcInstant
    out_prefix: str


@dataclass(frozen=True)
class CameraSetup:
    cam: CameraIntrinsics
    pattern: MosaicPattern
    dop_floor: float
    max_samples: int
    weighting: str


@dataclass(frozen=True)
class SceneSetup:
    scene: SkyScene
    seed: int


def _camera_from(v: dict) -> CameraIntrinsics:
    return CameraIntrinsics(dx=v["pixel_um"] * 1e-6, dy=v["pixel_um"] * 1e-6,
                            nx=v["nx"], ny=v["ny"], f=v["focal_mm"] * 1e-3)


def build_scenario(text: str) -> ScenarioSetup:
    """Validate and convert a scenario config into runnable objects."""
    v = validate_scenario(text)
    sc = v["scenario"]
    try:
        start = GeodeticPosition(math.radians(sc["lat_deg"]),
                                 math.radians(sc["lon_deg"]), sc["height_m"])
        attitude = EulerAngles(math.radians(sc["yaw_deg"]),
                               math.radians(sc["pitch_deg"]),
                               math.radians(sc["roll_deg"]))
    except ValueError as exc:
        raise ConfigError(str(exc), key="scenario") from exc
    profile = TrajectoryProfile(
        kind=sc["kind"], start=start, attitude=attitude,
        duration=sc["duration_s"], speed=sc["speed_mps"],
        climb_rate=sc["climb_rate_mps"],
        turn_rate=math.radians(sc["turn_rate_dps"]),
        waypoints=sc["waypoints"])

    im = v["imu"]
    imu = ImuSpec(
        rate=im["rate_hz"],
        gyro_bias_repeatability=im["gyro_bias_repeatability_dph"] * DEG_PER_HOUR,
        gyro_bias_stability=im["gyro_bias_stability_dph"] * DEG_PER_HOUR,
        gyro_arw=im["gyro_arw_dpsh"] * DEG / 60.0,
        gyro_range=im["gyro_range_dps"] * DEG,
        accel_bias_repeatability=im["accel_bias_repeatability_mg"] * MILLI_G,
        accel_bias_stability=im["accel_bias_stability_mg"] * MILLI_G,
        accel_vrw=im["accel_vrw"],
        accel_range=im["accel_range_g"] * 9.80665,
        tau_stability=im["tau_stability_s"])

    gn = v["gnss"]
    gnss = GnssSpec(rate=gn["rate_hz"], pos_sigma_enu=gn["pos_sigma_enu_m"],
                    vel_sigma_enu=gn["vel_sigma_enu_mps"]) \
        if gn["enabled"] else None

    ps = v["psns"]
    psns = PsnsSpec(
        rate=ps["rate_hz"], path=ps["path"],
        ang_sigma=math.radians(ps["ang_sigma_deg"]),
        cam=_camera_from(ps), max_dop=ps["max_dop"], s0_base=ps["s0_base"],
        intensity_noise=ps["intensity_noise"],
        aop_jitter=math.radians(ps["aop_jitter_deg"])) \
        if ps["enabled"] else None

    fl = v["filter"]
    filter_config = FilterConfig(
        predict_rate=fl["predict_rate_hz"], joseph=fl["joseph"],
        sign_margin=fl["sign_margin"],
        feedback_biases=fl["feedback_biases"],
        init_att_sigma=tuple(math.radians(a) for a in fl["init_att_sigma_deg"]),
        init_vel_sigma=fl["init_vel_sigma_mps"],
        init_pos_sigma_m=fl["init_pos_sigma_m"],
        r_solar_sigma=fl["r_solar_sigma"],
        q_gyro_psd=fl["q_gyro_psd"], q_accel_psd=fl["q_accel_psd"],
        q_gyro_bias_psd=fl["q_gyro_bias_psd"],
        q_accel_bias_psd=fl["q_accel_bias_psd"])

    start_time = sc["start_utc"]
    if sc["delta_t_s"] != start_time.delta_t:
        start_time = UtcInstant(start_time.year, start_time.month,
                                start_time.day, start_time.hour,
                                start_time.minute, start_time.second,
                                delta_t=sc["delta_t_s"])
    return ScenarioSetup(profile=profile, suite=SensorSuiteSpec(
        imu=imu, gnss=gnss, psns=psns), filter_config=filter_config,
        seed=v["run"]["seed"], start_time=start_time,
        out_prefix=v["run"]["out_prefix"])


def build_camera(text: str) -> CameraSetup:
    v = validate_camera(text)["camera"]
    if v["weighting"] not in ("dop", "dop2", "binary"):
        raise ConfigError(f"unknown weighting {v['weighting']!r}",
                          key="camera.weighting")
    try:
        cam = _camera_from(v)
    except ValueError as exc:
        raise ConfigError(str(exc), key="camera") from exc
    return CameraSetup(cam=cam, pattern=v["pattern"],
                       dop_floor=v["dop_floor"],
                       max_samples=v["max_samples"],
                       weighting=v["weighting"])


def build_scene(text: str) -> SceneSetup:
    v = validate_scene(text)["scene"]
    from .frames import dcm_from_euler
    try:
        cam = _camera_from(v)
        c_bn = dcm_from_euler(EulerAngles(math.radians(v["yaw_deg"]),
                                          math.radians(v["pitch_deg"]),
                                          math.radians(v["roll_deg"])))
        scene = SkyScene(
            sun_enu=enu_from_az_el(math.radians(v["sun_azimuth_deg"]),
                                   math.radians(v["sun_elevation_deg"])),
            c_bn=c_bn, cam=cam, max_dop=v["max_dop"], s0_base=v["s0_base"],
            intensity_noise=v["intensity_noise"],
            aop_jitter=math.radians(v["aop_jitter_deg"]),
            pattern=v["pattern"])
    except ValueError as exc:
        raise ConfigError(str(exc), key="scene") from exc
    return SceneSetup(scene=scene, seed=v["seed"])
