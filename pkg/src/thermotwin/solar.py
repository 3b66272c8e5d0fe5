"""Solar geometry from timestamp and location.

Uses the USNO low-precision solar coordinate algorithm (good to a few
hundredths of a degree), which is plenty for shadow casting and clear-sky
radiation shapes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timezone


@dataclass(frozen=True)
class SunPosition:
    elevation: float  # degrees above horizon, [-90, 90]
    azimuth: float    # degrees clockwise from north, [0, 360)

    @property
    def up(self) -> bool:
        return self.elevation > 0.0


def _to_utc(ts: datetime) -> datetime:
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def solar_position(timestamp: datetime, latitude: float, longitude: float) -> SunPosition:
    """Sun elevation/azimuth for a UTC timestamp at (latitude, longitude).

    Ecliptic longitude, declination and the equation of time come from the
    USNO "approximate solar coordinates" series on the J2000 epoch; the sun
    vector is then assembled in local east/north/up coordinates, so azimuth
    falls out of atan2(east, north), measured clockwise from north.
    """
    ts = _to_utc(timestamp)
    # days since J2000 (2000-01-01 12:00 UTC), including the day fraction
    jd = ts.timestamp() / 86400.0 + 2440587.5
    d = jd - 2451545.0

    g = math.radians((357.529 + 0.98560028 * d) % 360.0)   # mean anomaly
    q = (280.459 + 0.98564736 * d) % 360.0                 # mean longitude
    lam = math.radians(q + 1.915 * math.sin(g) + 0.020 * math.sin(2 * g))
    eps = math.radians(23.439 - 0.00000036 * d)            # obliquity

    decl = math.asin(math.sin(eps) * math.sin(lam))
    ra = math.degrees(math.atan2(math.cos(eps) * math.sin(lam), math.cos(lam)))
    # equation of time in minutes, wrapped to +-20 min
    eot_min = 4.0 * (((q - ra) + 180.0) % 360.0 - 180.0)

    frac_hour = ts.hour + ts.minute / 60.0 + ts.second / 3600.0
    solar_time = frac_hour + longitude / 15.0 + eot_min / 60.0
    hour_angle = math.radians(15.0 * (solar_time - 12.0))

    lat = math.radians(latitude)
    sin_el = (math.sin(lat) * math.sin(decl)
              + math.cos(lat) * math.cos(decl) * math.cos(hour_angle))
    sin_el = max(-1.0, min(1.0, sin_el))
    east = -math.cos(decl) * math.sin(hour_angle)
    north = (math.cos(lat) * math.sin(decl)
             - math.sin(lat) * math.cos(decl) * math.cos(hour_angle))
    azimuth = math.degrees(math.atan2(east, north)) % 360.0
    return SunPosition(math.degrees(math.asin(sin_el)), azimuth)
