"""Geographic primitives: equirectangular projection and the rectangular zone grid."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

from .errors import EncodingError

EARTH_KM_PER_DEG = 6371.0 * math.pi / 180.0  # ~111.195 km per degree of latitude


class Point(NamedTuple):
    lat: float
    lon: float


def euclidean_km(a: Point, b: Point) -> float:
    """Straight-line distance in km under an equirectangular projection."""
    mean_lat = math.radians(0.5 * (a.lat + b.lat))
    dx = (b.lon - a.lon) * EARTH_KM_PER_DEG * math.cos(mean_lat)
    dy = (b.lat - a.lat) * EARTH_KM_PER_DEG
    return math.hypot(dx, dy)


def rectilinear_km(a: Point, b: Point) -> float:
    """L1 (street-grid) distance in km under the same projection."""
    mean_lat = math.radians(0.5 * (a.lat + b.lat))
    dx = (b.lon - a.lon) * EARTH_KM_PER_DEG * math.cos(mean_lat)
    dy = (b.lat - a.lat) * EARTH_KM_PER_DEG
    return abs(dx) + abs(dy)


@dataclass(frozen=True)
class ZoneGrid:
    """Disjoint square zones covering the study area.

    ``origin`` is the south-west corner. Zones are numbered row-major from 1
    (south-west cell) to ``rows * cols``; id 0 is reserved as the door-to-door
    action sentinel and ``rows * cols + 1`` is the dummy zone used when a
    vehicle has no candidate rider.
    """

    origin: Point
    rows: int
    cols: int
    cell_size_m: float = 800.0

    def __post_init__(self) -> None:
        if self.rows < 1 or self.cols < 1 or self.cell_size_m <= 0:
            raise ValueError("grid must have positive dimensions")

    @property
    def n_zones(self) -> int:
        return self.rows * self.cols

    @property
    def dummy_zone(self) -> int:
        return self.n_zones + 1

    @property
    def cell_km(self) -> float:
        return self.cell_size_m / 1000.0

    def _offsets_km(self, p: Point) -> tuple[float, float]:
        lat0 = math.radians(self.origin.lat)
        east = (p.lon - self.origin.lon) * EARTH_KM_PER_DEG * math.cos(lat0)
        north = (p.lat - self.origin.lat) * EARTH_KM_PER_DEG
        return east, north

    def contains(self, p: Point) -> bool:
        east, north = self._offsets_km(p)
        return 0 <= east < self.cols * self.cell_km and 0 <= north < self.rows * self.cell_km

    def zone_of(self, p: Point) -> int:
        east, north = self._offsets_km(p)
        col = math.floor(east / self.cell_km)
        row = math.floor(north / self.cell_km)
        if not (0 <= col < self.cols and 0 <= row < self.rows):
            raise EncodingError(f"point {p} lies outside the {self.rows}x{self.cols} grid")
        return row * self.cols + col + 1

    def cell_of(self, zone: int) -> tuple[int, int]:
        if not 1 <= zone <= self.n_zones:
            raise EncodingError(f"zone id {zone} out of range 1..{self.n_zones}")
        return (zone - 1) // self.cols, (zone - 1) % self.cols

    def center_of(self, zone: int) -> Point:
        row, col = self.cell_of(zone)
        return self.point_at(row + 0.5, col + 0.5)

    def point_at(self, row: float, col: float) -> Point:
        """Geo point at fractional cell coordinates (row/col measured from origin)."""
        lat0 = math.radians(self.origin.lat)
        lat = self.origin.lat + (row * self.cell_km) / EARTH_KM_PER_DEG
        lon = self.origin.lon + (col * self.cell_km) / (EARTH_KM_PER_DEG * math.cos(lat0))
        return Point(lat, lon)
