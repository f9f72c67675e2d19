"""Synthetic desk-scale city: grid zones, transit lines and Poisson demand."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import Order
from .errors import ConfigError
from .geo import Point, ZoneGrid, euclidean_km
from .transit import Line, Station, Timetable, Transfer


@dataclass
class SyntheticCitySpec:
    """Everything needed to build a reproducible toy city.

    ``station_zones`` places one station at each listed zone's center; lines
    are ordered chains over those zones with distance-proportional segment
    times. Demand is an independent Poisson stream per origin zone per minute,
    with destinations drawn from ``dest_weights`` (excluding the origin zone).
    """

    rows: int = 5
    cols: int = 5
    cell_size_m: float = 800.0
    origin_lat: float = 40.70
    origin_lon: float = -74.02
    station_zones: list[int] = field(default_factory=list)
    lines: list[list[int]] = field(default_factory=list)
    transit_kmh: float = 40.0
    transfer_seconds: float = 120.0
    transfer_pairs: list[list[int]] = field(default_factory=list)
    demand_per_min: list[float] = field(default_factory=list)  # per zone, orders/min
    dest_weights: list[float] = field(default_factory=list)  # per zone
    horizon_min: float = 60.0
    deadline_slack_min: float = 15.0
    road_kmh: float = 20.0

    def validate(self) -> None:
        n = self.rows * self.cols
        if not self.lines:
            raise ConfigError("at least one transit line is required")
        for z in self.station_zones:
            if not 1 <= z <= n:
                raise ConfigError(f"station zone {z} out of range")
        for line in self.lines:
            for z in line:
                if z not in self.station_zones:
                    raise ConfigError(f"line references zone {z} without a station")
        if len(self.demand_per_min) != n:
            raise ConfigError(f"demand_per_min must list all {n} zones")
        if len(self.dest_weights) != n:
            raise ConfigError(f"dest_weights must list all {n} zones")
        if any(x < 0 for x in self.demand_per_min) or any(x < 0 for x in self.dest_weights):
            raise ConfigError("demand intensities must be non-negative")
        if sum(1 for w in self.dest_weights if w > 0) < 2:
            raise ConfigError(
                "dest_weights needs positive mass in at least two zones "
                "(destinations always differ from the origin zone)"
            )

    def to_json(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, path: str) -> "SyntheticCitySpec":
        with open(path) as fh:
            data = json.load(fh)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown city spec keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class DemandModel:
    """Seedable Poisson order stream over the grid."""

    grid: ZoneGrid
    demand_per_min: np.ndarray
    dest_weights: np.ndarray
    horizon_min: float
    deadline_slack_min: float
    road_kmh: float

    def generate(self, seed: int) -> list[Order]:
        rng = np.random.default_rng(seed)
        orders: list[Order] = []
        oid = 0
        n = self.grid.n_zones
        dest_p = self.dest_weights / self.dest_weights.sum()
        for minute in range(int(np.ceil(self.horizon_min))):
            for zone in range(1, n + 1):
                lam = self.demand_per_min[zone - 1]
                if lam <= 0:
                    continue
                for _ in range(rng.poisson(lam)):
                    origin = self._point_in_zone(zone, rng)
                    dest_zone = zone
                    while dest_zone == zone:
                        dest_zone = int(rng.choice(n, p=dest_p)) + 1
                    dest = self._point_in_zone(dest_zone, rng)
                    e_m = minute + float(rng.uniform(0.0, 1.0))
                    direct_min = (
                        euclidean_km(origin, dest) / self.road_kmh * 60.0
                    )
                    orders.append(
                        Order(
                            oid=oid,
                            origin=origin,
                            dest=dest,
                            origin_zone=zone,
                            dest_zone=dest_zone,
                            request_min=e_m,
                            deadline_min=e_m + direct_min + self.deadline_slack_min,
                        )
                    )
                    oid += 1
        orders.sort(key=lambda o: (o.request_min, o.oid))
        return orders

    def _point_in_zone(self, zone: int, rng: np.random.Generator) -> Point:
        row, col = self.grid.cell_of(zone)
        return self.grid.point_at(row + rng.uniform(0.05, 0.95), col + rng.uniform(0.05, 0.95))


def build_synthetic_city(spec: SyntheticCitySpec) -> tuple[ZoneGrid, Timetable, DemandModel]:
    """Deterministic city from a spec: grid, station/line timetable, demand model."""
    spec.validate()
    grid = ZoneGrid(
        origin=Point(spec.origin_lat, spec.origin_lon),
        rows=spec.rows,
        cols=spec.cols,
        cell_size_m=spec.cell_size_m,
    )
    stations = {
        zone: Station(sid=zone, point=grid.center_of(zone), zone=zone)
        for zone in sorted(set(spec.station_zones))
    }
    lines = []
    for i, chain in enumerate(spec.lines):
        segs = []
        for a, b in zip(chain[:-1], chain[1:]):
            km = euclidean_km(stations[a].point, stations[b].point)
            segs.append(km / spec.transit_kmh * 3600.0)
        lines.append(Line(line_id=f"L{i + 1}", stations=tuple(chain), segment_s=tuple(segs)))
    transfers = [
        Transfer(int(a), int(b), spec.transfer_seconds) for a, b in spec.transfer_pairs
    ]
    tt = Timetable(stations=stations, lines=lines, transfers=transfers)
    tt.validate()
    demand = DemandModel(
        grid=grid,
        demand_per_min=np.asarray(spec.demand_per_min, dtype=np.float64),
        dest_weights=np.asarray(spec.dest_weights, dtype=np.float64),
        horizon_min=spec.horizon_min,
        deadline_slack_min=spec.deadline_slack_min,
        road_kmh=spec.road_kmh,
    )
    return grid, tt, demand


def default_city_spec() -> SyntheticCitySpec:
    """A 5x5 morning-commute city: heavy demand in the southern rows heading to
    the northern rows, one transit line per column plus two east-west
    connectors (a station in every zone). Slow streets and a fast network make
    hand-offs to transit worthwhile on the long hauls."""
    rows = cols = 5
    n = rows * cols
    verticals = [[c + 1, c + 6, c + 11, c + 16, c + 21] for c in range(cols)]
    lines = verticals + [[6, 7, 8, 9, 10], [16, 17, 18, 19, 20]]
    demand = [0.06] * n
    for z in range(1, 11):
        demand[z - 1] = 3.2
    dest = [0.1] * n
    for z in range(16, 26):
        dest[z - 1] = 1.0
    for z in (21, 22, 24, 25):
        dest[z - 1] += 1.0
    for z in (11, 15):
        dest[z - 1] = 0.5
    return SyntheticCitySpec(
        rows=rows,
        cols=cols,
        station_zones=list(range(1, n + 1)),
        lines=lines,
        transit_kmh=55.0,
        demand_per_min=demand,
        dest_weights=dest,
        road_kmh=20.0,
    )
