import math

import pytest

from polarnav.config import (
    build_camera,
    build_scenario,
    build_scene,
    parse_config,
    validate_scenario,
)
from polarnav.errors import ConfigError

SCENARIO = """\
# stationary bench scenario
[scenario]
kind = stationary
lat_deg = 32.0
lon_deg = 118.8
height_m = 50.0
yaw_deg = 40.0
duration_s = 60.0
start_utc = 2026-04-14T23:00:00

[run]
seed = 11
out_prefix = bench
"""

CAMERA = """\
[camera]
nx = 64
ny = 64
pixel_um = 10.0
focal_mm = 0.2
pattern = 90-45-135-0
"""

SCENE = """\
[scene]
sun_azimuth_deg = 120.0
sun_elevation_deg = 35.0
yaw_deg = 25.0
intensity_noise = 0.01
seed = 3
"""


class TestParser:
    def test_sections_and_lines(self):
        parsed = parse_config(SCENARIO)
        assert parsed["scenario"]["kind"] == ("stationary", 3)
        assert parsed["run"]["seed"] == ("11", 12)

    def test_comments_and_blanks_ignored(self):
        parsed = parse_config("[a]\n# comment\n\nx = 1  # trailing\n")
        assert parsed["a"]["x"] == ("1", 4)

    def test_entry_before_section(self):
        with pytest.raises(ConfigError) as ei:
            parse_config("x = 1\n")
        assert ei.value.line == 1

    def test_missing_equals(self):
        with pytest.raises(ConfigError) as ei:
            parse_config("[a]\njunk line\n")
        assert ei.value.line == 2

    def test_duplicate_key(self):
        with pytest.raises(ConfigError) as ei:
            parse_config("[a]\nx = 1\nx = 2\n")
        assert ei.value.key == "a.x"
        assert ei.value.line == 3


class TestScenarioSchema:
    def test_defaults_filled(self):
        v = validate_scenario(SCENARIO)
        assert v["imu"]["rate_hz"] == 200.0
        assert v["gnss"]["enabled"] is True
        assert v["filter"]["predict_rate_hz"] == 10.0

    def test_unknown_key_named_with_line(self):
        bad = SCENARIO + "\n[imu]\nbogus_key = 1\n"
        with pytest.raises(ConfigError) as ei:
            validate_scenario(bad)
        assert ei.value.key == "imu.bogus_key"
        assert ei.value.line is not None

    def test_unknown_section(self):
        with pytest.raises(ConfigError) as ei:
            validate_scenario(SCENARIO + "\n[surprise]\nx = 1\n")
        assert "surprise" in str(ei.value)

    def test_missing_required(self):
        with pytest.raises(ConfigError) as ei:
            validate_scenario("[scenario]\nkind = stationary\n")
        assert "scenario." in ei.value.key

    def test_bad_value_conversion(self):
        bad = SCENARIO.replace("seed = 11", "seed = eleven")
        with pytest.raises(ConfigError) as ei:
            validate_scenario(bad)
        assert ei.value.key == "run.seed"

    def test_build(self):
        setup = build_scenario(SCENARIO)
        assert setup.profile.kind == "stationary"
        assert setup.profile.start.lat == pytest.approx(math.radians(32.0))
        assert setup.seed == 11
        assert setup.out_prefix == "bench"
        assert setup.start_time.year == 2026 and setup.start_time.hour == 23
        # degrees-per-hour converted to rad/s
        assert setup.suite.imu.gyro_bias_repeatability == pytest.approx(
            math.radians(40.0) / 3600.0)

    def test_disabled_sensors(self):
        text = SCENARIO + "\n[psns]\nenabled = false\n[gnss]\nenabled = no\n"
        setup = build_scenario(text)
        assert setup.suite.psns is None
        assert setup.suite.gnss is None

    def test_waypoint_conversion(self):
        text = SCENARIO.replace("kind = stationary",
                                "kind = waypoint_spline\n"
                                "waypoints = 0,0,0; 30,50,80; 60,200,100")
        setup = build_scenario(text)
        assert setup.profile.waypoints == ((0.0, 0.0, 0.0), (30.0, 50.0, 80.0),
                                           (60.0, 200.0, 100.0))


class TestCameraScene:
    def test_camera_build(self):
        setup = build_camera(CAMERA)
        assert setup.cam.nx == 64
        assert setup.cam.dx == pytest.approx(1e-5)
        assert setup.cam.f == pytest.approx(2e-4)
        assert setup.weighting == "dop"

    def test_camera_bad_weighting(self):
        with pytest.raises(ConfigError):
            build_camera(CAMERA + "weighting = sometimes\n")

    def test_camera_odd_pixels_rejected(self):
        with pytest.raises(ConfigError):
            build_camera(CAMERA.replace("nx = 64", "nx = 63"))

    def test_scene_build(self):
        setup = build_scene(SCENE)
        assert setup.seed == 3
        assert setup.scene.intensity_noise == 0.01
        assert setup.scene.sun_enu[2] == pytest.approx(math.sin(math.radians(35.0)))
