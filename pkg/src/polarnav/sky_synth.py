"""Synthetic single-scattering Rayleigh sky and mosaic renderer.

Serves two roles: ground-truth oracle for the polarimetry pipeline (every
generated E-vector is exactly perpendicular to both the view ray and the sun
direction) and image source for the image-path solar sensor simulation.

Per sky point with scattering angle ``gamma`` between view ray and sun:

- E-vector direction in the body frame: ``unit(V x S)``;
- angle of polarization: angle between the body y axis and the image-plane
  projection of E, folded to (-pi/2, pi/2];
- degree of polarization: ``max_dop * sin^2(gamma) / (1 + cos^2(gamma))``;
- channel intensities invert the Stokes relations:
  ``I_0 = S0 (1 + d cos 2a) / 2``, ``I_90 = S0 (1 - d cos 2a) / 2``,
  ``I_45 = S0 (1 + d sin 2a) / 2``, ``I_135 = S0 (1 - d sin 2a) / 2``.

Noise (optional, seeded): Gaussian angle-of-polarization jitter applied
before the inversion, then additive Gaussian intensity noise per raw pixel.
The random stream is drawn as whole per-frame arrays in a fixed order, so
results are a pure function of (scene, seed) regardless of evaluation order.

Pixels whose view ray points below the ENU horizon, and superpixels aligned
with the sun (scattering angle ~ 0 or pi, where the E-vector is undefined),
are written as zero intensity; the zero marks them for downstream gating.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import SunAligned
from .frames import is_rotation
from .polarimetry import (
    DEFAULT_PATTERN,
    CameraIntrinsics,
    MosaicFrame,
    MosaicPattern,
    view_direction,
)

__all__ = [
    "SkyScene",
    "SyntheticSample",
    "synth_sample",
    "render_frame",
    "SUN_ALIGN_SIN_LIMIT",
]

SUN_ALIGN_SIN_LIMIT = 1e-6


@dataclass(frozen=True)
class SkyScene:
    """Geometry and radiometry of one synthetic sky capture.

    sun_enu: unit solar vector in ENU; c_bn: body-to-ENU attitude of the
    imager; s0_base: total-intensity level in digital numbers (the PGM
    writer clips at 65535); intensity_noise: per-pixel Gaussian sigma as a
    fraction of s0_base; aop_jitter: Gaussian sigma in radians.
    """

    sun_enu: np.ndarray
    c_bn: np.ndarray
    cam: CameraIntrinsics
    max_dop: float = 0.75
    s0_base: float = 20000.0
    intensity_noise: float = 0.0
    aop_jitter: float = 0.0
    pattern: MosaicPattern = DEFAULT_PATTERN

    def __post_init__(self):
        sun = np.asarray(self.sun_enu, dtype=float)
        object.__setattr__(self, "sun_enu", sun)
        object.__setattr__(self, "c_bn", np.asarray(self.c_bn, dtype=float))
        if abs(np.linalg.norm(sun) - 1.0) > 1e-9:
            raise ValueError("sun_enu must be a unit vector")
        if not is_rotation(self.c_bn, tol=1e-6):
            raise ValueError("c_bn must be a rotation matrix")
        if not 0.0 < self.max_dop <= 1.0:
            raise ValueError("max_dop must lie in (0, 1]")
        if self.s0_base <= 0:
            raise ValueError("s0_base must be positive")

    def with_noise(self, intensity_noise: float, aop_jitter: float = 0.0) -> "SkyScene":
        return replace(self, intensity_noise=intensity_noise, aop_jitter=aop_jitter)


@dataclass(frozen=True)
class SyntheticSample:
    """Truth polarization state and channel intensities at one image point
    (1-based pixel-center coordinates)."""

    x: float
    y: float
    aop: float
    dop: float
    i0: float
    i45: float
    i90: float
    i135: float


def _fold_axial(a):
    """Fold angles to the axial range (-pi/2, pi/2]."""
    a = np.where(a > math.pi / 2, a - math.pi, a)
    a = np.where(a <= -math.pi / 2, a + math.pi, a)
    return a


def _rayleigh_fields(scene: SkyScene, x, y):
    """Vectorized truth (aop, dop, visible, sun_aligned) at 1-based pixel
    coordinates. ``visible`` is False below the ENU horizon."""
    v = view_direction(x, y, scene.cam)
    v_hat = v / np.linalg.norm(v, axis=-1, keepdims=True)
    s_b = scene.c_bn.T @ scene.sun_enu

    e = np.cross(v, np.broadcast_to(s_b, v.shape))
    e_norm = np.linalg.norm(e, axis=-1)
    cosg = v_hat @ s_b
    sing = np.linalg.norm(np.cross(v_hat, np.broadcast_to(s_b, v_hat.shape)), axis=-1)
    aligned = sing < SUN_ALIGN_SIN_LIMIT

    safe_norm = np.where(e_norm > 0, e_norm, 1.0)
    ex = e[..., 0] / safe_norm
    ey = e[..., 1] / safe_norm
    aop = _fold_axial(np.arctan2(ex, ey))

    dop = scene.max_dop * sing**2 / (1.0 + cosg**2)

    up = (v_hat @ scene.c_bn.T)[..., 2] if v_hat.ndim > 1 else (scene.c_bn @ v_hat)[2]
    visible = np.asarray(up) >= 0.0
    return aop, dop, visible, aligned


def _invert_stokes(s0, d, a):
    c2, s2 = np.cos(2.0 * a), np.sin(2.0 * a)
    i0 = s0 * (1.0 + d * c2) / 2.0
    i90 = s0 * (1.0 - d * c2) / 2.0
    i45 = s0 * (1.0 + d * s2) / 2.0
    i135 = s0 * (1.0 - d * s2) / 2.0
    return i0, i45, i90, i135


def synth_sample(scene: SkyScene, x: float, y: float,
                 rng: np.random.Generator | None = None) -> SyntheticSample:
    """Single sky point at 1-based pixel-center coordinates ``(x, y)``.

    Raises
    ------
    SunAligned
        When the view ray is within ~1e-6 rad of the sun or anti-sun, where
        the scattering E-vector is undefined.
    """
    aop, dop, _, aligned = _rayleigh_fields(scene, float(x), float(y))
    if aligned:
        raise SunAligned(f"pixel ({x}, {y}) looks along the solar axis")
    aop = float(aop)
    dop = float(dop)

    if rng is not None and scene.aop_jitter > 0.0:
        aop = float(_fold_axial(aop + scene.aop_jitter * rng.standard_normal()))
    i0, i45, i90, i135 = _invert_stokes(scene.s0_base, dop, aop)
    if rng is not None and scene.intensity_noise > 0.0:
        sigma = scene.intensity_noise * scene.s0_base
        i0, i45, i90, i135 = (
            max(0.0, v + sigma * rng.standard_normal())
            for v in (i0, i45, i90, i135))
    return SyntheticSample(x=float(x), y=float(y), aop=aop, dop=dop,
                           i0=i0, i45=i45, i90=i90, i135=i135)


def render_frame(scene: SkyScene, seed: int = 0) -> MosaicFrame:
    """Render the full mosaic frame; deterministic in (scene, seed).

    One polarization state per 2x2 superpixel, sampled at the block center;
    the four channel intensities land on the pattern's pixel positions.
    """
    cam = scene.cam
    nsx, nsy = cam.nx // 2, cam.ny // 2
    ys, xs = np.mgrid[0:nsy, 0:nsx]
    # superpixel block centers in 1-based pixel-center coordinates
    cx = 2.0 * xs + 1.5
    cy = 2.0 * ys + 1.5

    aop, dop, visible, aligned = _rayleigh_fields(scene, cx, cy)
    good = visible & ~aligned

    rng = np.random.default_rng(seed)
    # fixed draw order: jitter field first, then the intensity noise plane
    if scene.aop_jitter > 0.0:
        aop = _fold_axial(aop + scene.aop_jitter * rng.standard_normal(aop.shape))

    i0, i45, i90, i135 = _invert_stokes(scene.s0_base, dop, aop)

    mosaic = np.zeros((cam.ny, cam.nx))
    tl, tr, bl, br = scene.pattern.value
    channels = {0: i0, 45: i45, 90: i90, 135: i135}
    mosaic[0::2, 0::2] = channels[tl]
    mosaic[0::2, 1::2] = channels[tr]
    mosaic[1::2, 0::2] = channels[bl]
    mosaic[1::2, 1::2] = channels[br]

    if scene.intensity_noise > 0.0:
        mosaic = mosaic + scene.intensity_noise * scene.s0_base \
            * rng.standard_normal(mosaic.shape)

    good_pixels = np.repeat(np.repeat(good, 2, axis=0), 2, axis=1)
    mosaic = np.where(good_pixels, np.clip(mosaic, 0.0, None), 0.0)
    return MosaicFrame(mosaic, scene.pattern)
