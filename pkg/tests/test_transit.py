"""Transit graph construction, Dijkstra queries, door-to-door ETAs."""

import math

import numpy as np
import pytest

from poolnet.errors import TimetableError, TransitQueryError
from poolnet.geo import Point, ZoneGrid
from poolnet.transit import (
    BOARDING_S,
    EXITING_S,
    Line,
    Station,
    Timetable,
    Transfer,
    best_station_in_zone,
    build_graph,
    door_to_door_eta,
    fastest_path,
    station_to_dest_minutes,
    walk_minutes,
)

GRID = ZoneGrid(origin=Point(40.70, -74.02), rows=6, cols=6, cell_size_m=800.0)


def station_at(sid, zone):
    return Station(sid=sid, point=GRID.center_of(zone), zone=zone)


def three_station_line():
    stations = {1: station_at(1, 1), 2: station_at(2, 2), 3: station_at(3, 3)}
    lines = [Line("A", (1, 2, 3), (300.0, 240.0))]
    return Timetable(stations=stations, lines=lines, transfers=[])


def edge_class(u, v):
    if isinstance(u, int):
        return "boarding"
    if isinstance(v, int):
        return "exiting"
    if u[1] == v[1] and u[0] != v[0]:
        return "travel"
    return "transfer"


class TestBuildGraph:
    def test_single_line_counting(self):
        g = build_graph(three_station_line())
        # 3 station nodes + 2 direction nodes per (station, line) incidence
        assert g.n_nodes == 3 + 6
        by_class = {"boarding": 0, "exiting": 0, "travel": 0, "transfer": 0}
        for u, v, w in g.edges():
            by_class[edge_class(u, v)] += 1
        assert by_class == {"boarding": 6, "exiting": 6, "travel": 4, "transfer": 0}
        for u, v, w in g.edges():
            cls = edge_class(u, v)
            if cls == "boarding":
                assert w == BOARDING_S
            elif cls == "exiting":
                assert w == EXITING_S

    def test_empty_timetable_gives_empty_graph(self):
        g = build_graph(Timetable(stations={}, lines=[], transfers=[]))
        assert g.n_nodes == 0 and g.edges() == []

    def test_crossing_lines_transfer_edges_bidirectional(self):
        stations = {
            1: station_at(1, 1),
            2: station_at(2, 2),
            3: station_at(3, 8),
            4: station_at(4, 14),
        }
        lines = [Line("A", (1, 2), (120.0,)), Line("B", (3, 4), (150.0,))]
        tt = Timetable(stations=stations, lines=lines, transfers=[Transfer(2, 3, 90.0)])
        g = build_graph(tt)
        transfer_edges = [
            (u, v, w) for u, v, w in g.edges() if edge_class(u, v) == "transfer"
        ]
        # 2 directions on A at station 2 x 2 directions on B at station 3, both ways
        assert len(transfer_edges) == 8
        assert all(w == 90.0 for _, _, w in transfer_edges)
        froms = {u[0] for u, v, w in transfer_edges}
        assert froms == {2, 3}

    def test_dangling_line_reference(self):
        tt = Timetable(stations={1: station_at(1, 1)}, lines=[Line("A", (1, 9), (60.0,))], transfers=[])
        with pytest.raises(TimetableError):
            build_graph(tt)

    def test_deterministic_construction(self):
        tt = three_station_line()
        g1, g2 = build_graph(tt), build_graph(tt)
        assert g1.edges() == g2.edges()


class TestFastestPath:
    def test_same_station(self):
        g = build_graph(three_station_line())
        assert fastest_path(g, 2, 2) == (0.0, [2])

    def test_three_station_end_to_end(self):
        g = build_graph(three_station_line())
        seconds, path = fastest_path(g, 1, 3)
        assert seconds == BOARDING_S + 300.0 + 240.0 + EXITING_S  # 740
        assert path[0] == 1 and path[-1] == 3

    def test_unknown_station(self):
        g = build_graph(three_station_line())
        with pytest.raises(TransitQueryError):
            fastest_path(g, 1, 99)

    def test_unreachable_is_explicit(self):
        stations = {1: station_at(1, 1), 2: station_at(2, 2), 3: station_at(3, 8), 4: station_at(4, 14)}
        tt = Timetable(
            stations=stations,
            lines=[Line("A", (1, 2), (60.0,)), Line("B", (3, 4), (60.0,))],
            transfers=[],
        )
        g = build_graph(tt)
        seconds, path = fastest_path(g, 1, 4)
        assert math.isinf(seconds) and path == []

    def _enumerate_min(self, g, src, dst):
        # oracle: DFS over simple paths in the expanded graph
        best = math.inf
        def dfs(node, used, acc):
            nonlocal best
            if acc >= best:
                return
            if node == dst:
                best = acc
                return
            for nxt, w in g.adj[node]:
                if nxt not in used:
                    dfs(nxt, used | {nxt}, acc + w)
        dfs(src, {src}, 0.0)
        return best

    def test_random_graphs_match_enumeration(self):
        rng = np.random.default_rng(99)
        for trial in range(60):
            n_st = int(rng.integers(3, 8))
            zones = rng.choice(GRID.n_zones, size=n_st, replace=False) + 1
            stations = {i + 1: station_at(i + 1, int(z)) for i, z in enumerate(zones)}
            sids = list(stations)
            n_lines = int(rng.integers(1, 3))
            lines = []
            for li in range(n_lines):
                k = int(rng.integers(2, n_st + 1))
                chain = list(rng.choice(sids, size=k, replace=False))
                segs = tuple(float(rng.integers(60, 400)) for _ in range(k - 1))
                lines.append(Line(f"L{li}", tuple(chain), segs))
            transfers = []
            if rng.random() < 0.5 and n_st >= 2:
                a, b = rng.choice(sids, size=2, replace=False)
                transfers.append(Transfer(int(a), int(b), float(rng.integers(30, 200))))
            tt = Timetable(stations=stations, lines=lines, transfers=transfers)
            g = build_graph(tt)
            src, dst = (int(x) for x in rng.choice(sids, size=2, replace=False))
            got, _ = fastest_path(g, src, dst)
            want = self._enumerate_min(g, src, dst)
            assert got == pytest.approx(want), f"trial {trial}"

    def test_adding_transfer_never_slows_paths(self):
        stations = {
            1: station_at(1, 1), 2: station_at(2, 2), 3: station_at(3, 3),
            4: station_at(4, 8), 5: station_at(5, 14),
        }
        lines = [Line("A", (1, 2, 3), (200.0, 200.0)), Line("B", (4, 5), (200.0,))]
        base = Timetable(stations=stations, lines=lines, transfers=[])
        more = Timetable(stations=stations, lines=lines, transfers=[Transfer(2, 4, 60.0)])
        g0, g1 = build_graph(base), build_graph(more)
        for a in stations:
            for b in stations:
                t0, _ = fastest_path(g0, a, b)
                t1, _ = fastest_path(g1, a, b)
                assert t1 <= t0 + 1e-9


class TestDoorToDoor:
    def test_zero_distance(self):
        g = build_graph(three_station_line())
        p = GRID.center_of(9)
        assert door_to_door_eta(g, p, p) == 0.0

    def test_pure_walk_wins_short_hops(self):
        # destination 0.3 km away while the nearest station is ~1 km off
        stations = {1: station_at(1, 22), 2: station_at(2, 24)}
        tt = Timetable(stations=stations, lines=[Line("A", (1, 2), (300.0,))], transfers=[])
        g = build_graph(tt)
        drop = GRID.center_of(3)
        km_deg = 0.3 / 111.19492664455873
        dest = Point(drop.lat + km_deg, drop.lon)
        assert door_to_door_eta(g, drop, dest) == pytest.approx(5.0, rel=1e-6)

    def test_composite_trip(self):
        g = build_graph(three_station_line())
        km_deg = 0.06 / 111.19492664455873
        drop = Point(g.stations[1].point.lat + km_deg, g.stations[1].point.lon)
        dest = Point(g.stations[3].point.lat + km_deg, g.stations[3].point.lon)
        got = door_to_door_eta(g, drop, dest, k_entry=None, k_exit=None)
        assert got == pytest.approx(740.0 / 60.0 + 2.0, rel=1e-6)

    def test_never_worse_than_walking(self):
        g = build_graph(three_station_line())
        rng = np.random.default_rng(5)
        for _ in range(40):
            a = GRID.point_at(rng.uniform(0, 6), rng.uniform(0, 6))
            b = GRID.point_at(rng.uniform(0, 6), rng.uniform(0, 6))
            assert door_to_door_eta(g, a, b) <= walk_minutes(a, b) + 1e-9


class TestBestStation:
    def test_single_station_zone(self):
        g = build_graph(three_station_line())
        assert best_station_in_zone(g, 1, GRID.center_of(3)) == 1

    def test_stationless_zone(self):
        g = build_graph(three_station_line())
        assert best_station_in_zone(g, 30, GRID.center_of(3)) is None

    def test_two_station_zone_matches_exhaustive(self):
        stations = {
            1: Station(1, GRID.point_at(0.3, 0.3), 1),
            2: Station(2, GRID.point_at(0.7, 0.7), 1),
            3: station_at(3, 14),
            4: station_at(4, 20),
        }
        lines = [Line("A", (1, 3), (240.0,)), Line("B", (2, 4), (600.0,))]
        tt = Timetable(stations=stations, lines=lines, transfers=[])
        g = build_graph(tt)
        dest = GRID.center_of(14)
        got = best_station_in_zone(g, 1, dest)
        want = min(
            (sid for sid in (1, 2)),
            key=lambda sid: (station_to_dest_minutes(g, sid, dest), sid),
        )
        assert got == want


class TestTimetableCsv:
    def test_round_trip(self, tmp_path):
        stations = {
            1: station_at(1, 1), 2: station_at(2, 2), 3: station_at(3, 8), 4: station_at(4, 14),
        }
        tt = Timetable(
            stations=stations,
            lines=[Line("A", (1, 2), (120.0,)), Line("B", (3, 4), (150.0,))],
            transfers=[Transfer(2, 3, 90.0)],
        )
        path = tmp_path / "tt.csv"
        tt.to_csv(str(path))
        back = Timetable.from_csv(str(path), GRID)
        assert sorted(back.stations) == sorted(tt.stations)
        for sid in tt.stations:
            assert back.stations[sid].point == tt.stations[sid].point
            assert back.stations[sid].zone == tt.stations[sid].zone
        assert {(l.line_id, l.stations, l.segment_s) for l in back.lines} == {
            (l.line_id, l.stations, l.segment_s) for l in tt.lines
        }
        assert [(t.a, t.b, t.seconds) for t in back.transfers] == [(2, 3, 90.0)]

    def test_nonpositive_segment_rejected(self):
        tt = Timetable(
            stations={1: station_at(1, 1), 2: station_at(2, 2)},
            lines=[Line("A", (1, 2), (0.0,))],
            transfers=[],
        )
        with pytest.raises(TimetableError):
            tt.validate()
