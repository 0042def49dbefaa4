"""Service operations behind the API endpoints.

Plain functions over the pydantic models: the HTTP layer (app.py) and the
in-process CLI client both call these, so every front end shares one code
path. Domain failures propagate as PolarNavError subclasses; the callers
map them to HTTP errors or exit codes.
"""

from __future__ import annotations

import base64
import binascii
import math

from .. import config as cfgmod
from ..errors import ConfigError, PolarNavError
from ..frames import euler_from_dcm
from ..pgm import parse_pgm, pgm_bytes, truth_sidecar_text
from ..polarimetry import extract_solar_vector, superpixel_csv
from ..simulator import run_batch, run_scenario
from ..sky_synth import render_frame
from ..sun_ephemeris import az_el_from_enu
from .models import (
    BatchRequest,
    BatchResponse,
    ExtractRequest,
    ExtractResponse,
    RunRequest,
    RunResponse,
    SynthRequest,
    SynthResponse,
    ValidateRequest,
    ValidateResponse,
)

__all__ = ["handle_extract", "handle_run", "handle_batch", "handle_synth",
           "handle_validate"]


def handle_extract(req: ExtractRequest) -> ExtractResponse:
    setup = cfgmod.build_camera(req.camera_config)
    try:
        raw = base64.b64decode(req.image_b64, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise ConfigError(f"invalid base64 image payload: {exc}") from exc
    frame = parse_pgm(raw, setup.pattern)
    result = extract_solar_vector(
        frame, setup.cam, weighting=setup.weighting,
        dop_floor=setup.dop_floor, max_samples=setup.max_samples)
    debug = superpixel_csv(result.grid) if req.include_debug_csv else None
    return ExtractResponse(
        vector=[float(v) for v in result.solar.vector],
        min_eigenvalue=result.solar.min_eigenvalue,
        eigen_gap=result.solar.eigen_gap,
        sample_count=result.solar.sample_count,
        used_samples=result.used_samples,
        total_superpixels=result.total_superpixels,
        debug_csv=debug)


def handle_run(req: RunRequest) -> RunResponse:
    setup = cfgmod.build_scenario(req.config)
    seed = setup.seed if req.seed is None else req.seed
    record = run_scenario(setup.profile, setup.suite, setup.filter_config,
                          seed, setup.start_time)
    return RunResponse(seed=seed, csv=record.to_csv(), summary=record.summary())


def handle_batch(req: BatchRequest) -> BatchResponse:
    setup = cfgmod.build_scenario(req.config)
    base = setup.seed if req.base_seed is None else req.base_seed
    _, stats = run_batch(setup.profile, setup.suite, setup.filter_config,
                         range(base, base + req.n_seeds), setup.start_time)
    return BatchResponse(base_seed=base, n_seeds=req.n_seeds, stats=stats)


def handle_synth(req: SynthRequest) -> SynthResponse:
    setup = cfgmod.build_scene(req.config)
    seed = setup.seed if req.seed is None else req.seed
    scene = setup.scene
    frame = render_frame(scene, seed=seed)

    az, el = az_el_from_enu(scene.sun_enu)
    e = euler_from_dcm(scene.c_bn)
    truth = truth_sidecar_text({
        "sun_e": float(scene.sun_enu[0]),
        "sun_n": float(scene.sun_enu[1]),
        "sun_u": float(scene.sun_enu[2]),
        "sun_azimuth_deg": math.degrees(az),
        "sun_elevation_deg": math.degrees(el),
        "yaw_deg": math.degrees(e.yaw),
        "pitch_deg": math.degrees(e.pitch),
        "roll_deg": math.degrees(e.roll),
        "nx": scene.cam.nx,
        "ny": scene.cam.ny,
        "pixel_um": scene.cam.dx * 1e6,
        "focal_mm": scene.cam.f * 1e3,
        "pattern": str(scene.pattern),
        "max_dop": scene.max_dop,
        "s0_base": scene.s0_base,
        "intensity_noise": scene.intensity_noise,
        "aop_jitter_deg": math.degrees(scene.aop_jitter),
        "seed": seed,
    })
    return SynthResponse(seed=seed,
                         pgm_b64=base64.b64encode(pgm_bytes(frame)).decode("ascii"),
                         truth=truth)


_VALIDATORS = {
    "scenario": cfgmod.validate_scenario,
    "camera": cfgmod.validate_camera,
    "scene": cfgmod.validate_scene,
}


def handle_validate(req: ValidateRequest) -> ValidateResponse:
    try:
        _VALIDATORS[req.kind](req.config)
    except PolarNavError as exc:
        return ValidateResponse(valid=False, error=str(exc))
    return ValidateResponse(valid=True)
