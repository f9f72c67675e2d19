"""Transit timetable graph: construction, fastest paths and door-to-door ETAs.

Each (station, line) incidence expands into two direction nodes; boarding,
exiting, travel and transfer edges carry second-valued weights. Queries run
Dijkstra from station nodes, with single-source results memoized per origin.
"""

from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import TimetableError, TransitQueryError
from .geo import EARTH_KM_PER_DEG, Point, ZoneGrid, euclidean_km

BOARDING_S = 160.0
EXITING_S = 40.0
WALK_KMH = 3.6

Node = int | tuple[int, str, int]  # station id, or (station id, line id, direction)


@dataclass(frozen=True)
class Station:
    sid: int
    point: Point
    zone: int = 0


@dataclass(frozen=True)
class Line:
    line_id: str
    stations: tuple[int, ...]
    segment_s: tuple[float, ...]  # seconds between consecutive stations

    def __post_init__(self) -> None:
        if len(self.segment_s) != max(len(self.stations) - 1, 0):
            raise TimetableError(f"line {self.line_id}: segment count mismatch")


@dataclass(frozen=True)
class Transfer:
    a: int
    b: int
    seconds: float


@dataclass
class Timetable:
    stations: dict[int, Station]
    lines: list[Line]
    transfers: list[Transfer]

    def validate(self) -> None:
        for line in self.lines:
            if len(line.stations) < 2:
                raise TimetableError(f"line {line.line_id} needs at least two stations")
            for sid in line.stations:
                if sid not in self.stations:
                    raise TimetableError(f"line {line.line_id} references unknown station {sid}")
            if any(s <= 0 for s in line.segment_s):
                raise TimetableError(f"line {line.line_id}: travel seconds must be positive")
        for tr in self.transfers:
            if tr.a not in self.stations or tr.b not in self.stations:
                raise TimetableError(f"transfer {tr.a}-{tr.b} references an unknown station")
            if tr.seconds < 0:
                raise TimetableError("transfer seconds must be non-negative")

    def assign_zones(self, grid: ZoneGrid) -> None:
        self.stations = {
            sid: Station(sid, st.point, grid.zone_of(st.point))
            for sid, st in self.stations.items()
        }

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["[stations]"])
            w.writerow(["id", "lat", "lon"])
            for sid in sorted(self.stations):
                st = self.stations[sid]
                w.writerow([sid, repr(st.point.lat), repr(st.point.lon)])
            w.writerow(["[lines]"])
            w.writerow(["line_id", "seq", "station_id", "segment_seconds"])
            for line in self.lines:
                for seq, sid in enumerate(line.stations):
                    seg = "" if seq == 0 else repr(line.segment_s[seq - 1])
                    w.writerow([line.line_id, seq, sid, seg])
            w.writerow(["[transfers]"])
            w.writerow(["a", "b", "seconds"])
            for tr in self.transfers:
                w.writerow([tr.a, tr.b, repr(tr.seconds)])

    @classmethod
    def from_csv(cls, path: str, grid: ZoneGrid | None = None) -> "Timetable":
        stations: dict[int, Station] = {}
        line_rows: dict[str, list[tuple[int, int, float]]] = {}
        transfers: list[Transfer] = []
        section = None
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or not any(tok.strip() for tok in row):
                    continue
                head = row[0].strip()
                if head in ("[stations]", "[lines]", "[transfers]"):
                    section = head
                    expect_header = True
                    continue
                if section is None:
                    raise TimetableError(f"{path}: data before any section marker")
                if expect_header:
                    expect_header = False
                    continue
                try:
                    if section == "[stations]":
                        sid = int(row[0])
                        stations[sid] = Station(sid, Point(float(row[1]), float(row[2])))
                    elif section == "[lines]":
                        seg = float(row[3]) if len(row) > 3 and row[3].strip() else 0.0
                        line_rows.setdefault(row[0], []).append((int(row[1]), int(row[2]), seg))
                    else:
                        transfers.append(Transfer(int(row[0]), int(row[1]), float(row[2])))
                except (ValueError, IndexError) as exc:
                    raise TimetableError(f"{path}: malformed row {row}: {exc}") from exc
        lines = []
        for line_id, rows in line_rows.items():
            rows.sort(key=lambda r: r[0])
            lines.append(
                Line(
                    line_id,
                    tuple(sid for _, sid, _ in rows),
                    tuple(seg for _, _, seg in rows[1:]),
                )
            )
        tt = cls(stations=stations, lines=lines, transfers=transfers)
        tt.validate()
        if grid is not None:
            tt.assign_zones(grid)
        return tt


@dataclass
class TransitGraph:
    stations: dict[int, Station]
    adj: dict[Node, list[tuple[Node, float]]]
    _sid_arr: np.ndarray = field(repr=False, default=None)  # type: ignore[assignment]
    _lat_arr: np.ndarray = field(repr=False, default=None)  # type: ignore[assignment]
    _lon_arr: np.ndarray = field(repr=False, default=None)  # type: ignore[assignment]
    _dijkstra_cache: dict[int, tuple[dict[Node, float], dict[Node, Node]]] = field(
        default_factory=dict, repr=False
    )

    def __post_init__(self) -> None:
        sids = sorted(self.stations)
        self._sid_arr = np.array(sids, dtype=np.int64)
        self._lat_arr = np.array([self.stations[s].point.lat for s in sids])
        self._lon_arr = np.array([self.stations[s].point.lon for s in sids])

    @property
    def n_nodes(self) -> int:
        return len(self.adj)

    def edges(self) -> list[tuple[Node, Node, float]]:
        return [(u, v, w) for u, nbrs in self.adj.items() for v, w in nbrs]

    def stations_in_zone(self, zone: int) -> list[int]:
        return sorted(s.sid for s in self.stations.values() if s.zone == zone)

    def station_zones(self) -> frozenset[int]:
        return frozenset(s.zone for s in self.stations.values())

    def nearest_stations(self, p: Point, k: int | None) -> list[int]:
        """Station ids ordered by walking distance from ``p`` (ties by id)."""
        if not self.stations:
            return []
        mean_lat = np.radians(0.5 * (self._lat_arr + p.lat))
        dx = (self._lon_arr - p.lon) * EARTH_KM_PER_DEG * np.cos(mean_lat)
        dy = (self._lat_arr - p.lat) * EARTH_KM_PER_DEG
        dist = np.hypot(dx, dy)
        order = np.lexsort((self._sid_arr, dist))
        picked = order if k is None else order[:k]
        return [int(self._sid_arr[i]) for i in picked]


def build_graph(tt: Timetable) -> TransitGraph:
    """Expand a timetable into the direction-node graph with the four edge classes."""
    tt.validate()
    adj: dict[Node, list[tuple[Node, float]]] = {sid: [] for sid in sorted(tt.stations)}
    incident_lines: dict[int, list[str]] = {sid: [] for sid in tt.stations}

    def ensure(node: Node) -> None:
        adj.setdefault(node, [])

    for line in tt.lines:
        for sid in line.stations:
            if line.line_id in incident_lines[sid]:
                raise TimetableError(
                    f"line {line.line_id} visits station {sid} twice"
                )
            incident_lines[sid].append(line.line_id)
            for direction in (1, -1):
                node = (sid, line.line_id, direction)
                ensure(node)
                adj[sid].append((node, BOARDING_S))
                adj[node].append((sid, EXITING_S))
        for i in range(len(line.stations) - 1):
            a, b, w = line.stations[i], line.stations[i + 1], line.segment_s[i]
            adj[(a, line.line_id, 1)].append(((b, line.line_id, 1), w))
            adj[(b, line.line_id, -1)].append(((a, line.line_id, -1), w))

    for tr in tt.transfers:
        for la in incident_lines[tr.a]:
            for lb in incident_lines[tr.b]:
                if tr.a == tr.b and la == lb:
                    continue
                for da in (1, -1):
                    for db in (1, -1):
                        adj[(tr.a, la, da)].append(((tr.b, lb, db), tr.seconds))
                        adj[(tr.b, lb, db)].append(((tr.a, la, da), tr.seconds))

    return TransitGraph(stations=dict(tt.stations), adj=adj)


def _dijkstra(g: TransitGraph, source: int) -> tuple[dict[Node, float], dict[Node, Node]]:
    if source in g._dijkstra_cache:
        return g._dijkstra_cache[source]
    dist: dict[Node, float] = {source: 0.0}
    prev: dict[Node, Node] = {}
    heap: list[tuple[float, int, Node]] = [(0.0, 0, source)]
    counter = 1
    while heap:
        d, _, u = heapq.heappop(heap)
        if d > dist.get(u, math.inf):
            continue
        for v, w in g.adj[u]:
            nd = d + w
            if nd < dist.get(v, math.inf):
                dist[v] = nd
                prev[v] = u
                heapq.heappush(heap, (nd, counter, v))
                counter += 1
    g._dijkstra_cache[source] = (dist, prev)
    return dist, prev


def fastest_path(
    g: TransitGraph, from_station: int, to_station: int
) -> tuple[float, list[Node]]:
    """Minimum-seconds path between two station nodes; (inf, []) when unreachable."""
    for sid in (from_station, to_station):
        if sid not in g.stations:
            raise TransitQueryError(f"unknown station {sid}")
    if from_station == to_station:
        return 0.0, [from_station]
    dist, prev = _dijkstra(g, from_station)
    if to_station not in dist:
        return math.inf, []
    path: list[Node] = [to_station]
    while path[-1] != from_station:
        path.append(prev[path[-1]])
    return dist[to_station], path[::-1]


def transit_seconds(g: TransitGraph, from_station: int, to_station: int) -> float:
    return fastest_path(g, from_station, to_station)[0]


def walk_minutes(a: Point, b: Point) -> float:
    return euclidean_km(a, b) / WALK_KMH * 60.0


def station_to_dest_minutes(
    g: TransitGraph, station: int, dest: Point, k_exit: int | None = None
) -> float:
    """Best time from a station to a destination point: ride to some exit station
    and walk, or walk the whole way from the station."""
    if station not in g.stations:
        raise TransitQueryError(f"unknown station {station}")
    best = walk_minutes(g.stations[station].point, dest)
    for exit_sid in g.nearest_stations(dest, k_exit):
        seconds = transit_seconds(g, station, exit_sid)
        if math.isfinite(seconds):
            total = seconds / 60.0 + walk_minutes(g.stations[exit_sid].point, dest)
            best = min(best, total)
    return best


def door_to_door_eta(
    g: TransitGraph,
    dropoff: Point,
    dest: Point,
    k_entry: int | None = 5,
    k_exit: int | None = 5,
) -> float:
    """Minutes from a drop-off point to the destination: walk-transit-walk over
    candidate entry/exit stations, never worse than walking directly."""
    best = walk_minutes(dropoff, dest)
    for entry in g.nearest_stations(dropoff, k_entry):
        entry_walk = walk_minutes(dropoff, g.stations[entry].point)
        if entry_walk >= best:
            continue
        best = min(best, entry_walk + station_to_dest_minutes(g, entry, dest, k_exit))
    return best


def best_station_in_zone(
    g: TransitGraph, zone: int, dest: Point, k_exit: int | None = None
) -> int | None:
    """The station in ``zone`` minimizing transit-plus-walk time to ``dest``;
    None when the zone has no station. Ties break toward the smaller id."""
    sids = g.stations_in_zone(zone)
    if not sids:
        return None
    return min(sids, key=lambda sid: (station_to_dest_minutes(g, sid, dest, k_exit), sid))
