"""WGS84 <-> ellipsoidal Mercator (EPSG:3395) conversion."""
from __future__ import annotations

import math
from typing import NamedTuple

from .errors import LatitudeOutOfRange, NoConvergence
from .geometry import PlanarPolygon

SEMI_MAJOR = 6378137.0
ECCENTRICITY = 0.0818191908426215
LATITUDE_LIMIT = 89.5
MAX_ITERATIONS = 25


class GeoCoord(NamedTuple):
    longitude: float
    latitude: float


class MercatorXY(NamedTuple):
    x: float
    y: float


def wgs84_to_mercator(g: GeoCoord | tuple[float, float]) -> MercatorXY:
    """Project (longitude, latitude) in degrees to Mercator meters."""
    lon, lat = g
    if not abs(lat) < LATITUDE_LIMIT:
        raise LatitudeOutOfRange(f"latitude {lat!r} outside (-{LATITUDE_LIMIT}, {LATITUDE_LIMIT})")
    if not abs(lon) <= 180.0:
        raise ValueError(f"longitude {lon!r} outside [-180, 180]")
    phi = math.radians(lat)
    s = math.sin(phi)
    # atanh form of ln(tan(pi/4 + phi/2) * ((1 - e sin)/(1 + e sin))^(e/2)); exactly odd in phi
    y = SEMI_MAJOR * (math.atanh(s) - ECCENTRICITY * math.atanh(ECCENTRICITY * s))
    return MercatorXY(SEMI_MAJOR * math.radians(lon), y)


def mercator_to_wgs84(m: MercatorXY | tuple[float, float]) -> GeoCoord:
    """Invert the projection by fixed-point iteration on latitude."""
    x, y = m
    if not abs(x) <= math.pi * SEMI_MAJOR * (1 + 1e-15):
        raise ValueError(f"x {x!r} outside the projection range")
    ts = math.exp(-y / SEMI_MAJOR)
    phi = math.pi / 2 - 2 * math.atan(ts)
    for _ in range(MAX_ITERATIONS):
        es = ECCENTRICITY * math.sin(phi)
        nxt = math.pi / 2 - 2 * math.atan(ts * ((1 - es) / (1 + es)) ** (ECCENTRICITY / 2))
        if abs(nxt - phi) < 1e-15:
            phi = nxt
            break
        phi = nxt
    else:
        raise NoConvergence(f"latitude iteration did not converge for y={y!r}")
    lat = math.degrees(phi)
    if not abs(lat) < LATITUDE_LIMIT:
        raise LatitudeOutOfRange(f"latitude {lat!r} outside (-{LATITUDE_LIMIT}, {LATITUDE_LIMIT})")
    return GeoCoord(math.degrees(x / SEMI_MAJOR), lat)


def project_footprint(footprint) -> PlanarPolygon:
    """Project every vertex of a GeoFootprint; name and vertex count are kept."""
    ring = [wgs84_to_mercator(v) for v in footprint.ring]
    return PlanarPolygon(footprint.name, ring)
