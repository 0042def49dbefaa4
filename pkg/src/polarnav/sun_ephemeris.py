"""Solar position in local ENU coordinates from UTC time and location.

Implements the classic truncated-series solar ephemeris (mean longitude /
mean anomaly / equation of center, first nutation term, aberration): apparent
geocentric right ascension and declination, rotated into the local horizon
frame via apparent sidereal time. Stated accuracy of the series is about
0.01 deg in solar longitude, comfortably inside this package's 0.05 deg
budget over the supported 1950-2250 span; an independently implemented
high-precision ephemeris cross-checks it in the test suite.

Elevation is geometric (refraction-free) by default, matching the scattering
geometry of the Rayleigh sky model; pass ``refraction=True`` for the apparent
elevation using the standard 1.02'/tan(...) formula at nominal conditions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .errors import OutOfRange
from .frames import GeodeticPosition

__all__ = [
    "UtcInstant",
    "SolarVectorEnu",
    "solar_position",
    "enu_from_az_el",
    "az_el_from_enu",
    "SUPPORTED_YEARS",
    "DEFAULT_DELTA_T",
]

# TT - UTC, seconds. Constant is adequate: 100 s of time error moves the
# sun by at most ~0.0007 deg in azimuth.
DEFAULT_DELTA_T = 69.0

SUPPORTED_YEARS = (1950, 2250)


@dataclass(frozen=True)
class UtcInstant:
    """Calendar UTC instant plus the TT-UTC offset used for the ephemeris."""

    year: int
    month: int
    day: int
    hour: int = 0
    minute: int = 0
    second: float = 0.0
    delta_t: float = DEFAULT_DELTA_T

    def __post_init__(self):
        # datetime validates the Gregorian calendar fields for us
        datetime(self.year, self.month, self.day, self.hour, self.minute,
                 min(int(self.second), 59))
        if not 0.0 <= self.second < 61.0:
            raise ValueError(f"second {self.second} outside [0, 61)")

    @classmethod
    def from_datetime(cls, dt: datetime, delta_t: float = DEFAULT_DELTA_T) -> "UtcInstant":
        if dt.tzinfo is not None:
            dt = dt.astimezone(timezone.utc)
        return cls(dt.year, dt.month, dt.day, dt.hour, dt.minute,
                   dt.second + dt.microsecond * 1e-6, delta_t)

    def to_julian_date(self) -> float:
        """Julian date of this UTC instant (UT time scale)."""
        y, m = self.year, self.month
        if m <= 2:
            y -= 1
            m += 12
        a = y // 100
        b = 2 - a + a // 4
        day_frac = (self.hour + self.minute / 60.0 + self.second / 3600.0) / 24.0
        return (math.floor(365.25 * (y + 4716)) + math.floor(30.6001 * (m + 1))
                + self.day + b - 1524.5 + day_frac)


@dataclass(frozen=True)
class SolarVectorEnu:
    """Unit solar vector in ENU with its azimuth/elevation decomposition.

    Azimuth is clockwise from north in radians; elevation above the horizon.
    ``vector == (sin az cos el, cos az cos el, sin el)``.
    """

    vector: np.ndarray
    azimuth: float
    elevation: float


def enu_from_az_el(az: float, el: float) -> np.ndarray:
    """Unit ENU vector for an azimuth (clockwise from north) and elevation."""
    ce = math.cos(el)
    return np.array([math.sin(az) * ce, math.cos(az) * ce, math.sin(el)])


def az_el_from_enu(v) -> tuple[float, float]:
    """Inverse of :func:`enu_from_az_el`; azimuth is 0 at the zenith limit."""
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    el = math.asin(min(1.0, max(-1.0, v[2] / n)))
    if abs(v[0]) < 1e-15 and abs(v[1]) < 1e-15:
        return 0.0, el
    az = math.atan2(v[0], v[1])
    if az < 0.0:
        az += 2.0 * math.pi
    return az, el


def _sun_ra_dec(jde: float) -> tuple[float, float, float]:
    """Apparent geocentric right ascension, declination (radians) and the
    nutation-in-longitude correction to sidereal time (degrees)."""
    t = (jde - 2451545.0) / 36525.0

    l0 = (280.46646 + 36000.76983 * t + 0.0003032 * t * t) % 360.0
    m = math.radians((357.52911 + 35999.05029 * t - 0.0001537 * t * t) % 360.0)
    center = ((1.914602 - 0.004817 * t - 0.000014 * t * t) * math.sin(m)
              + (0.019993 - 0.000101 * t) * math.sin(2 * m)
              + 0.000289 * math.sin(3 * m))
    true_lon = l0 + center

    omega = math.radians(125.04 - 1934.136 * t)
    # -0.00569 aberration, -0.00478 sin(omega) principal nutation term
    app_lon = math.radians(true_lon - 0.00569 - 0.00478 * math.sin(omega))

    eps0 = (23.43929111 - 0.01300416667 * t
            - 1.63889e-7 * t * t + 5.03611e-7 * t**3)
    eps = math.radians(eps0 + 0.00256 * math.cos(omega))

    ra = math.atan2(math.cos(eps) * math.sin(app_lon), math.cos(app_lon))
    dec = math.asin(math.sin(eps) * math.sin(app_lon))
    nut_lon_deg = -0.00478 * math.sin(omega)
    sidereal_corr = nut_lon_deg * math.cos(eps)
    return ra, dec, sidereal_corr


def _gmst_deg(jd_ut: float) -> float:
    t = (jd_ut - 2451545.0) / 36525.0
    gmst = (280.46061837 + 360.98564736629 * (jd_ut - 2451545.0)
            + 0.000387933 * t * t - t**3 / 38710000.0)
    return gmst % 360.0


def solar_position(t: UtcInstant, p: GeodeticPosition, *,
                   refraction: bool = False) -> SolarVectorEnu:
    """Apparent solar direction in local ENU coordinates.

    Parameters
    ----------
    t : UtcInstant
        UTC time; ``t.delta_t`` supplies TT-UTC.
    p : GeodeticPosition
        Observer latitude/longitude (height is not used; the geocentric
        direction is accurate to well under the module's error budget).
    refraction : bool
        When True, elevation is increased by the standard atmospheric
        refraction at 1010 mbar / 10 C. Default False (geometric sun).

    Raises
    ------
    OutOfRange
        If ``t.year`` falls outside ``SUPPORTED_YEARS``.
    """
    if not SUPPORTED_YEARS[0] <= t.year <= SUPPORTED_YEARS[1]:
        raise OutOfRange(
            f"year {t.year} outside supported span {SUPPORTED_YEARS}")

    jd_ut = t.to_julian_date()
    jde = jd_ut + t.delta_t / 86400.0
    ra, dec, sidereal_corr = _sun_ra_dec(jde)

    gast = math.radians(_gmst_deg(jd_ut) + sidereal_corr)
    hour_angle = gast + p.lon - ra

    sl, cl = math.sin(p.lat), math.cos(p.lat)
    sd, cd = math.sin(dec), math.cos(dec)
    ch, sh = math.cos(hour_angle), math.sin(hour_angle)

    e = -cd * sh
    n = cl * sd - sl * cd * ch
    u = sl * sd + cl * cd * ch

    el = math.asin(min(1.0, max(-1.0, u)))
    if refraction:
        el_deg = math.degrees(el)
        if el_deg > -1.0:
            r_arcmin = 1.02 / math.tan(math.radians(el_deg + 10.3 / (el_deg + 5.11)))
            el = math.radians(el_deg + r_arcmin / 60.0)

    if abs(e) < 1e-15 and abs(n) < 1e-15:
        az = 0.0
    else:
        az = math.atan2(e, n)
        if az < 0.0:
            az += 2.0 * math.pi

    return SolarVectorEnu(vector=enu_from_az_el(az, el), azimuth=az, elevation=el)
