"""From polarized intensity mosaics to the bi-directional solar vector.

Pipeline stages (all pure functions):

1. :func:`demosaic` splits a division-of-focal-plane mosaic into 2x2
   superpixels carrying the four polarizer-channel intensities.
2. :func:`stokes`, :func:`dop`, :func:`aop` compute the linear polarization
   state per superpixel (circular component fixed to zero for skylight).
3. :func:`view_direction` and :func:`evector_body` lift each superpixel's
   angle of polarization into a 3-D E-vector in the body frame, perpendicular
   to the view ray by construction.
4. :func:`estimate_bidir_solar` finds the direction most nearly orthogonal
   to all weighted E-vectors: the unit eigenvector of the smallest eigenvalue
   of ``K = sum_i w_i E_i E_i^T``. Single-scattering geometry makes the sun
   (and anti-sun) perpendicular to every sky E-vector, so the recovered
   direction is inherently bi-directional; :func:`canonicalize_sign` picks a
   deterministic representative.

Pixel coordinate conventions: the mosaic array is indexed ``[row, col]`` =
``[y, x]``. Superpixel centers from :func:`demosaic` are in corner-origin
units (pixel *centers* sit at half-integers, so a 2x2 block covering pixels
0..1 has its center at 1.0). The projection in :func:`view_direction` uses
1-based pixel-center coordinates (frame center at ``(n + 1) / 2``); convert
with ``x_1based = x_corner + 0.5``.
"""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .eig3 import eigh3
from .errors import (
    BadDimensions,
    DegenerateGeometry,
    InsufficientSamples,
    UndefinedAop,
    ZeroIntensity,
)

__all__ = [
    "CameraIntrinsics",
    "MosaicPattern",
    "MosaicFrame",
    "SuperPixelIntensities",
    "SuperPixelGrid",
    "StokesVector",
    "PolarSample",
    "BidirSolarVector",
    "demosaic",
    "stokes",
    "stokes_arrays",
    "dop",
    "dop_raw",
    "aop",
    "view_direction",
    "evector_body",
    "estimate_bidir_solar",
    "canonicalize_sign",
    "extract_solar_vector",
    "superpixel_csv",
    "DEFAULT_DOP_FLOOR",
    "DEFAULT_MAX_SAMPLES",
    "DEFAULT_EIGENGAP_RATIO",
]

DEFAULT_DOP_FLOOR = 0.05
DEFAULT_MAX_SAMPLES = 4096
DEFAULT_EIGENGAP_RATIO = 1e-6
INTENSITY_EPS = 1e-12


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole + mosaic geometry of the polarization imager.

    dx, dy: pixel pitch in meters; nx, ny: pixel counts (even, the mosaic
    needs whole 2x2 superpixels); f: focal length in meters.
    """

    dx: float
    dy: float
    nx: int
    ny: int
    f: float

    def __post_init__(self):
        for name in ("dx", "dy", "f"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("nx", "ny"):
            n = getattr(self, name)
            if n < 2 or n % 2:
                raise ValueError(f"{name} must be even and >= 2, got {n}")


class MosaicPattern(enum.Enum):
    """2x2 polarizer layouts as (top-left, top-right, bottom-left,
    bottom-right) filter angles in degrees. The four members are the four
    phases of the repeating tile."""

    TL90_TR45_BL135_BR0 = (90, 45, 135, 0)
    TL45_TR90_BL0_BR135 = (45, 90, 0, 135)
    TL135_TR0_BL90_BR45 = (135, 0, 90, 45)
    TL0_TR135_BL45_BR90 = (0, 135, 45, 90)

    @classmethod
    def from_string(cls, text: str) -> "MosaicPattern":
        angles = tuple(int(a) for a in text.replace(",", "-").split("-"))
        for member in cls:
            if member.value == angles:
                return member
        raise ValueError(f"unknown mosaic pattern {text!r}")

    def __str__(self) -> str:
        return "-".join(str(a) for a in self.value)


DEFAULT_PATTERN = MosaicPattern.TL90_TR45_BL135_BR0


@dataclass(frozen=True)
class MosaicFrame:
    """Raw mosaic intensities (float, arbitrary radiometric units) plus the
    polarizer layout. ``intensities[row, col]``; nonnegative."""

    intensities: np.ndarray
    pattern: MosaicPattern = DEFAULT_PATTERN

    def __post_init__(self):
        arr = np.asarray(self.intensities, dtype=float)
        object.__setattr__(self, "intensities", arr)
        if arr.ndim != 2:
            raise BadDimensions(f"expected a 2-D array, got shape {arr.shape}")
        if np.any(arr < 0):
            raise ValueError("mosaic intensities must be nonnegative")

    @property
    def width(self) -> int:
        return self.intensities.shape[1]

    @property
    def height(self) -> int:
        return self.intensities.shape[0]


@dataclass(frozen=True)
class SuperPixelIntensities:
    """One 2x2 block's four channel intensities and its center coordinates
    (corner-origin pixel units)."""

    i0: float
    i45: float
    i90: float
    i135: float
    x: float
    y: float


@dataclass(frozen=True)
class SuperPixelGrid:
    """Structure-of-arrays form of the demosaiced frame; indexable as a
    sequence of :class:`SuperPixelIntensities`."""

    i0: np.ndarray
    i45: np.ndarray
    i90: np.ndarray
    i135: np.ndarray
    x: np.ndarray
    y: np.ndarray

    def __len__(self) -> int:
        return self.i0.size

    def __getitem__(self, idx: int) -> SuperPixelIntensities:
        return SuperPixelIntensities(
            float(self.i0.flat[idx]), float(self.i45.flat[idx]),
            float(self.i90.flat[idx]), float(self.i135.flat[idx]),
            float(self.x.flat[idx]), float(self.y.flat[idx]))

    def __iter__(self):
        for k in range(len(self)):
            yield self[k]


@dataclass(frozen=True)
class StokesVector:
    """Linear Stokes parameters; s3 = 0 by construction for skylight."""

    s0: float
    s1: float
    s2: float
    s3: float = 0.0


@dataclass(frozen=True)
class PolarSample:
    """One observation point: un-normalized view ray and E-vector in body
    coordinates (E defined up to global sign), polarization state, weight."""

    view_dir: np.ndarray
    evec: np.ndarray
    aop: float
    dop: float
    weight: float


@dataclass(frozen=True)
class BidirSolarVector:
    """Sign-canonical unit solar direction with fit quality metrics.

    ``min_eigenvalue`` is the weighted sum of squared E-vector projections on
    the recovered direction (0 for perfect single-scattering data);
    ``eigen_gap`` is the separation to the next eigenvalue, the observability
    margin of the fit.
    """

    vector: np.ndarray
    min_eigenvalue: float
    eigen_gap: float
    sample_count: int


def demosaic(frame: MosaicFrame) -> SuperPixelGrid:
    """Split the mosaic into non-overlapping 2x2 superpixels.

    Raises
    ------
    BadDimensions
        On odd frame width or height.
    """
    arr = frame.intensities
    h, w = arr.shape
    if h % 2 or w % 2:
        raise BadDimensions(f"frame {w}x{h} not divisible into 2x2 blocks")

    quads = {
        (0, 0): arr[0::2, 0::2],
        (0, 1): arr[0::2, 1::2],
        (1, 0): arr[1::2, 0::2],
        (1, 1): arr[1::2, 1::2],
    }
    tl, tr, bl, br = frame.pattern.value
    by_angle = {tl: quads[(0, 0)], tr: quads[(0, 1)],
                bl: quads[(1, 0)], br: quads[(1, 1)]}

    ys, xs = np.mgrid[0:h // 2, 0:w // 2]
    return SuperPixelGrid(
        i0=by_angle[0].astype(float),
        i45=by_angle[45].astype(float),
        i90=by_angle[90].astype(float),
        i135=by_angle[135].astype(float),
        x=2.0 * xs + 1.0,
        y=2.0 * ys + 1.0,
    )


def stokes(sp: SuperPixelIntensities) -> StokesVector:
    """Stokes parameters of one superpixel:
    ``s0 = (i0+i45+i90+i135)/2, s1 = i0-i90, s2 = i45-i135, s3 = 0``."""
    return StokesVector(
        s0=0.5 * (sp.i0 + sp.i45 + sp.i90 + sp.i135),
        s1=sp.i0 - sp.i90,
        s2=sp.i45 - sp.i135,
    )


def stokes_arrays(grid: SuperPixelGrid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized Stokes parameters ``(s0, s1, s2)`` over a grid."""
    s0 = 0.5 * (grid.i0 + grid.i45 + grid.i90 + grid.i135)
    s1 = grid.i0 - grid.i90
    s2 = grid.i45 - grid.i135
    return s0, s1, s2


def dop_raw(s: StokesVector, eps: float = INTENSITY_EPS) -> float:
    """Unclamped degree of polarization; may exceed 1 under noise.

    ``eps`` is the intensity floor below which the ratio is meaningless
    (same units as the intensities).
    """
    if s.s0 <= eps:
        raise ZeroIntensity(f"s0 = {s.s0} at or below the {eps} floor")
    return math.sqrt(s.s1**2 + s.s2**2 + s.s3**2) / s.s0


def dop(s: StokesVector, eps: float = INTENSITY_EPS) -> float:
    """Degree of polarization clamped to [0, 1] (see :func:`dop_raw` for the
    diagnostic unclamped value)."""
    return min(1.0, dop_raw(s, eps))


def aop(s: StokesVector) -> float:
    """Angle of polarization ``atan2(s2, s1) / 2`` in (-pi/2, pi/2].

    Equals the three-branch arctan form with +/-90 deg corrections wherever
    that form is defined.

    Raises
    ------
    UndefinedAop
        For unpolarized input (s1 = s2 = 0).
    """
    if s.s1 == 0.0 and s.s2 == 0.0:
        raise UndefinedAop("angle of polarization undefined for s1 = s2 = 0")
    a = 0.5 * math.atan2(s.s2, s.s1)
    if a == -math.pi / 2:
        # atan2(-0.0, s1<0) lands on the branch cut; fold onto (-pi/2, pi/2]
        a = math.pi / 2
    return a


def view_direction(x, y, cam: CameraIntrinsics) -> np.ndarray:
    """Un-normalized view ray of pixel-center coordinates ``(x, y)`` (1-based)
    in the body frame: ``(dx (x - (nx+1)/2), dy (y - (ny+1)/2), f)``.

    Accepts scalars or equal-shaped arrays; returns shape ``(..., 3)``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    vx = cam.dx * (x - (cam.nx + 1) / 2.0)
    vy = cam.dy * (y - (cam.ny + 1) / 2.0)
    vz = np.broadcast_to(cam.f, vx.shape).astype(float)
    return np.stack([vx, vy, vz], axis=-1)


def evector_body(aop_value, view_dir, cam: CameraIntrinsics) -> np.ndarray:
    """E-vector in the body frame for a measured angle of polarization.

    The in-plane components are ``(sin aop, cos aop)``; the z component is
    fixed by perpendicularity to the view ray:
    ``ez = -(vx sin aop + vy cos aop) / f``, so ``E . V = 0`` exactly.
    The overall sign is physically meaningless (bi-directional E-vector).

    Accepts scalars or arrays (``view_dir`` shaped ``(..., 3)``).
    """
    a = np.asarray(aop_value, dtype=float)
    v = np.asarray(view_dir, dtype=float)
    sa, ca = np.sin(a), np.cos(a)
    ez = -(v[..., 0] * sa + v[..., 1] * ca) / cam.f
    return np.stack([np.broadcast_to(sa, ez.shape),
                     np.broadcast_to(ca, ez.shape), ez], axis=-1)


def canonicalize_sign(v: np.ndarray) -> np.ndarray:
    """Deterministic representative of a bi-directional unit vector: negate
    when the largest-magnitude component is negative, ties broken in
    component order z, y, x."""
    v = np.asarray(v, dtype=float)
    m = np.max(np.abs(v))
    for k in (2, 1, 0):
        if abs(v[k]) == m:
            return -v if v[k] < 0 else v.copy()
    return v.copy()


def _as_evec_weight_arrays(samples, weights):
    if isinstance(samples, np.ndarray) and samples.ndim == 2:
        e = np.asarray(samples, dtype=float)
        w = np.ones(len(e)) if weights is None else np.asarray(weights, dtype=float)
    else:
        sample_list = list(samples)
        e = np.array([s.evec for s in sample_list], dtype=float)
        if weights is None:
            w = np.array([s.weight for s in sample_list], dtype=float)
        else:
            w = np.asarray(weights, dtype=float)
    if len(w) != len(e):
        raise ValueError("weights and samples length mismatch")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    return e, w


def estimate_bidir_solar(samples, weights=None, *,
                         eigengap_ratio: float = DEFAULT_EIGENGAP_RATIO,
                         ) -> BidirSolarVector:
    """Weighted least-squares bi-directional solar vector.

    Minimizes ``sum_i w_i (E_i . s)^2`` over unit ``s``: builds the weighted
    scatter ``K = sum_i w_i E_i E_i^T`` (E-vectors normalized first, so
    weights keep their meaning) and returns the eigenvector of the smallest
    eigenvalue, sign-canonicalized.

    Parameters
    ----------
    samples : sequence of PolarSample or (n, 3) ndarray of E-vectors
    weights : optional (n,) array; defaults to the samples' own weights
        (or uniform for a raw E-vector array).

    Raises
    ------
    InsufficientSamples
        Fewer than two samples with positive weight.
    DegenerateGeometry
        Eigen-gap below ``eigengap_ratio * trace(K)``: the E-vectors are
        near-parallel and the null space is two-dimensional.
    """
    e, w = _as_evec_weight_arrays(samples, weights)
    active = w > 0
    if int(np.count_nonzero(active)) < 2:
        raise InsufficientSamples(
            f"need >= 2 samples with positive weight, got {int(np.count_nonzero(active))}")
    e = e[active]
    w = w[active]

    norms = np.linalg.norm(e, axis=1)
    if np.any(norms == 0):
        raise ValueError("zero-length E-vector")
    eu = e / norms[:, None]

    k = (eu * w[:, None]).T @ eu
    vals, vecs = eigh3(k)
    trace = float(np.trace(k))
    gap = float(vals[1] - vals[0])
    if gap < eigengap_ratio * trace:
        raise DegenerateGeometry(
            f"eigen-gap {gap:.3e} below {eigengap_ratio:.1e} * trace {trace:.3e}")

    lam = max(0.0, float(vals[0]))
    return BidirSolarVector(
        vector=canonicalize_sign(vecs[:, 0]),
        min_eigenvalue=lam,
        eigen_gap=gap,
        sample_count=len(eu),
    )


def _decimate(n: int, max_samples: int) -> np.ndarray:
    if n <= max_samples:
        return np.arange(n)
    stride = int(math.ceil(n / max_samples))
    return np.arange(0, n, stride)


def _weights_from_dop(dop_values: np.ndarray, policy: str, floor: float) -> np.ndarray:
    if policy == "dop":
        w = dop_values.copy()
    elif policy == "dop2":
        w = dop_values**2
    elif policy == "binary":
        w = np.ones_like(dop_values)
    else:
        raise ValueError(f"unknown weighting policy {policy!r}")
    w[dop_values < floor] = 0.0
    return w


@dataclass(frozen=True)
class ExtractionResult:
    """Full pipeline output for one frame."""

    solar: BidirSolarVector
    used_samples: int
    total_superpixels: int
    grid: SuperPixelGrid = field(repr=False)


def extract_solar_vector(frame: MosaicFrame, cam: CameraIntrinsics, *,
                         weighting: str = "dop",
                         dop_floor: float = DEFAULT_DOP_FLOOR,
                         max_samples: int = DEFAULT_MAX_SAMPLES,
                         eigengap_ratio: float = DEFAULT_EIGENGAP_RATIO,
                         ) -> ExtractionResult:
    """Run the whole frame-to-solar-vector pipeline.

    Superpixels with too little light or with undefined polarization angle
    get zero weight; the remainder is decimated to ``max_samples`` by uniform
    striding before the eigen fit. A frame with fewer than two usable
    superpixels (uniform/unpolarized or dark) carries no direction
    information and raises DegenerateGeometry.
    """
    grid = demosaic(frame)
    s0, s1, s2 = stokes_arrays(grid)
    s0f, s1f, s2f = s0.ravel(), s1.ravel(), s2.ravel()

    lit = s0f > INTENSITY_EPS
    defined = lit & ((s1f != 0.0) | (s2f != 0.0))
    dop_values = np.zeros_like(s0f)
    dop_values[defined] = np.minimum(
        1.0, np.hypot(s1f[defined], s2f[defined]) / s0f[defined])
    aop_values = np.zeros_like(s0f)
    aop_values[defined] = 0.5 * np.arctan2(s2f[defined], s1f[defined])

    weights = np.zeros_like(s0f)
    weights[defined] = _weights_from_dop(dop_values[defined], weighting, dop_floor)

    idx = _decimate(s0f.size, max_samples)
    sel = idx[weights[idx] > 0]
    if sel.size < 2:
        raise DegenerateGeometry(
            f"only {sel.size} usable superpixels after gating "
            "(unpolarized or dark frame)")

    v = view_direction(grid.x.ravel()[sel] + 0.5, grid.y.ravel()[sel] + 0.5, cam)
    e = evector_body(aop_values[sel], v, cam)
    solar = estimate_bidir_solar(e, weights[sel], eigengap_ratio=eigengap_ratio)
    return ExtractionResult(solar=solar, used_samples=int(sel.size),
                            total_superpixels=int(s0f.size), grid=grid)


def superpixel_csv(grid: SuperPixelGrid) -> str:
    """Debug CSV of per-superpixel polarization state, one row per
    superpixel, header included. Undefined DOP/AOP cells are left empty."""
    s0, s1, s2 = stokes_arrays(grid)
    out = io.StringIO()
    out.write("x,y,s0,s1,s2,dop,aop\n")
    for k in range(len(grid)):
        s0k, s1k, s2k = s0.flat[k], s1.flat[k], s2.flat[k]
        if s0k > INTENSITY_EPS and (s1k != 0.0 or s2k != 0.0):
            d = min(1.0, math.hypot(s1k, s2k) / s0k)
            a = 0.5 * math.atan2(s2k, s1k)
            tail = f"{d!r},{a!r}"
        else:
            tail = ","
        out.write(f"{grid.x.flat[k]!r},{grid.y.flat[k]!r},"
                  f"{s0k!r},{s1k!r},{s2k!r},{tail}\n")
    return out.getvalue()
