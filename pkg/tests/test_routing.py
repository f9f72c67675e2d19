"""Route planning: exhaustive optimality, insertion deltas, time advancement."""

import itertools
import math

import numpy as np
import pytest

from poolnet.errors import RoutingError
from poolnet.geo import Point, ZoneGrid
from poolnet.routing import (
    DROPOFF,
    GridRouter,
    MockRouter,
    PICKUP,
    RoutePlan,
    Stop,
    TableRouter,
    advance,
    insert_order,
    plan_route,
    _search_farthest_insertion,
    _leg_matrix,
    _precedence_pairs,
)

P = [Point(40.70 + 0.01 * i, -74.0 + 0.003 * (i * i % 7)) for i in range(12)]


def random_mock(rng, points):
    legs = {}
    for a, b in itertools.combinations(points, 2):
        legs[(a, b)] = float(rng.uniform(1.0, 10.0))
    return MockRouter(legs, symmetric=True)


def brute_force_best(start, stops, provider):
    """Oracle: full permutation scan honoring pickup-before-dropoff."""
    needs = _precedence_pairs(list(stops))
    best = math.inf
    for perm in itertools.permutations(range(len(stops))):
        pos = {idx: i for i, idx in enumerate(perm)}
        if any(pos[drop] < pos[pick] for drop, pick in needs.items()):
            continue
        total, last = 0.0, start
        for idx in perm:
            total += provider.travel_time(last, stops[idx].point)
            last = stops[idx].point
        best = min(best, total)
    return best


class TestPlanRoute:
    def test_single_stop(self):
        provider = MockRouter({(P[0], P[1]): 7.5})
        plan = plan_route(P[0], [Stop(P[1], DROPOFF, 1)], provider)
        assert plan.duration_min == 7.5
        assert [s.eta_min for s in plan.stops] == [7.5]

    def test_four_stops_match_brute_force(self):
        rng = np.random.default_rng(3)
        pts = P[:5]
        provider = random_mock(rng, pts)
        stops = [
            Stop(pts[1], PICKUP, 1),
            Stop(pts[2], DROPOFF, 1),
            Stop(pts[3], PICKUP, 2),
            Stop(pts[4], DROPOFF, 2),
        ]
        plan = plan_route(pts[0], stops, provider)
        assert plan.duration_min == pytest.approx(brute_force_best(pts[0], stops, provider))

    def test_worked_three_leg_route(self):
        # pickup, station drop, passenger drop with scripted legs 4, 5, 6
        start, pick, drop_a, drop_b = P[0], P[1], P[2], P[3]
        provider = MockRouter(
            {
                (start, pick): 4.0,
                (pick, drop_a): 5.0,
                (drop_a, drop_b): 6.0,
            },
            default=50.0,
        )
        stops = [Stop(pick, PICKUP, 2), Stop(drop_a, DROPOFF, 1), Stop(drop_b, DROPOFF, 2)]
        plan = plan_route(start, stops, provider)
        assert plan.duration_min == pytest.approx(15.0)
        assert [s.eta_min for s in plan.stops] == [4.0, 9.0, 15.0]

    def test_exhaustive_matches_oracle_many_trials(self):
        rng = np.random.default_rng(11)
        for trial in range(1000):
            n = int(rng.integers(2, 8))
            pts = [P[i] for i in rng.choice(len(P), size=n + 1, replace=False)]
            provider = random_mock(rng, pts)
            n_riders = max(n // 2, 1)
            stops = []
            for r in range(n_riders):
                stops.append(Stop(pts[1 + 2 * r], PICKUP, r))
                if 2 + 2 * r <= n:
                    stops.append(Stop(pts[2 + 2 * r], DROPOFF, r))
            stops = stops[:n]
            plan = plan_route(pts[0], stops, provider)
            assert plan.duration_min == pytest.approx(
                brute_force_best(pts[0], stops, provider)
            ), f"trial {trial}"

    def test_pickup_always_precedes_dropoff(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            pts = [P[i] for i in rng.choice(len(P), size=7, replace=False)]
            provider = random_mock(rng, pts)
            stops = [
                Stop(pts[1], PICKUP, 1),
                Stop(pts[2], DROPOFF, 1),
                Stop(pts[3], PICKUP, 2),
                Stop(pts[4], DROPOFF, 2),
                Stop(pts[5], PICKUP, 3),
                Stop(pts[6], DROPOFF, 3),
            ]
            plan = plan_route(pts[0], stops, provider)
            for rider in (1, 2, 3):
                order = [s for s in plan.stops if s.rider_id == rider]
                assert [s.kind for s in order] == [PICKUP, DROPOFF]

    def test_farthest_insertion_admissible(self):
        rng = np.random.default_rng(17)
        for _ in range(20):
            pts = [P[i] for i in rng.choice(len(P), size=7, replace=False)]
            provider = random_mock(rng, pts)
            stops = [
                Stop(pts[1], PICKUP, 1),
                Stop(pts[2], DROPOFF, 1),
                Stop(pts[3], PICKUP, 2),
                Stop(pts[4], DROPOFF, 2),
                Stop(pts[5], PICKUP, 3),
                Stop(pts[6], DROPOFF, 3),
            ]
            mat = _leg_matrix(pts[0], stops, provider)
            needs = _precedence_pairs(stops)
            order = _search_farthest_insertion(mat, needs, len(stops))
            heur = 0.0
            last = 0
            for idx in order:
                heur += mat[last, idx + 1]
                last = idx + 1
            exact = plan_route(pts[0], stops, provider).duration_min
            assert heur >= exact - 1e-9
            pos = {idx: i for i, idx in enumerate(order)}
            for drop, pick in needs.items():
                assert pos[pick] < pos[drop]

    def test_unreachable_leg_raises(self):
        provider = MockRouter({(P[0], P[1]): math.inf})
        with pytest.raises(RoutingError):
            plan_route(P[0], [Stop(P[1], DROPOFF, 1)], provider)


class TestInsertOrder:
    def test_insert_into_empty_plan(self):
        provider = MockRouter({(P[0], P[1]): 3.0, (P[1], P[2]): 6.0}, default=40.0)
        plan = RoutePlan(start=P[0], stops=())
        out = insert_order(plan, Stop(P[1], PICKUP, 1), Stop(P[2], DROPOFF, 1), provider)
        assert out.pickup_eta_min == 3.0
        assert out.onboard_min == 6.0
        assert out.existing_delta == {}

    def test_worked_insertion_delta(self):
        # rider 1 already riding toward P[3] (8 min direct); inserting rider 2's
        # pickup and station drop re-routes and delays rider 1 by one minute
        start, pick2, station, dest1 = P[0], P[1], P[2], P[3]
        provider = MockRouter(
            {
                (start, dest1): 8.0,
                (start, pick2): 4.0,
                (pick2, dest1): 5.0,
                (dest1, station): 6.0,
                (pick2, station): 30.0,
                (start, station): 30.0,
            }
        )
        plan = plan_route(start, [Stop(dest1, DROPOFF, 1)], provider)
        assert plan.duration_min == 8.0
        out = insert_order(plan, Stop(pick2, PICKUP, 2), Stop(station, DROPOFF, 2), provider)
        assert out.existing_delta == {1: pytest.approx(1.0)}
        assert out.existing_remaining == {1: pytest.approx(9.0)}
        assert out.onboard_min == pytest.approx(11.0)

    def test_random_insertions_match_recomputation(self):
        rng = np.random.default_rng(23)
        for _ in range(40):
            pts = [P[i] for i in rng.choice(len(P), size=8, replace=False)]
            provider = random_mock(rng, pts)
            base = [
                Stop(pts[1], PICKUP, 1),
                Stop(pts[2], DROPOFF, 1),
                Stop(pts[3], DROPOFF, 2),
            ]
            plan = plan_route(pts[0], base, provider)
            old = {
                1: plan.remaining_eta(1, DROPOFF) - plan.remaining_eta(1, PICKUP),
                2: plan.remaining_eta(2, DROPOFF),
            }
            out = insert_order(plan, Stop(pts[4], PICKUP, 3), Stop(pts[5], DROPOFF, 3), provider)
            for rid in (1, 2):
                assert out.existing_delta[rid] == pytest.approx(
                    out.existing_remaining[rid] - old[rid]
                )


class TestAdvance:
    def mk_plan(self):
        provider = MockRouter({(P[0], P[1]): 4.0, (P[1], P[2]): 5.0}, default=30.0)
        return plan_route(P[0], [Stop(P[1], PICKUP, 1), Stop(P[2], DROPOFF, 1)], provider)

    def test_full_advance_emits_everything(self):
        plan = self.mk_plan()
        plan, events = advance(plan, 100.0)
        assert [e.kind for e in events] == [PICKUP, DROPOFF]
        assert plan.done

    def test_partial_advance_no_events(self):
        plan = self.mk_plan()
        plan, events = advance(plan, 2.0)
        assert events == []
        pos = plan.position()
        assert pos != P[0] and pos != P[1]

    def test_composition(self):
        rng = np.random.default_rng(31)
        for _ in range(30):
            plan = self.mk_plan()
            a, b = float(rng.uniform(0.5, 6)), float(rng.uniform(0.5, 6))
            one, ev1 = advance(plan, a)
            one, ev2 = advance(one, b)
            two, ev12 = advance(plan, a + b)
            assert one.clock == pytest.approx(two.clock)
            assert one.emitted == two.emitted
            assert one.position() == two.position()
            assert [(e.rider_id, e.kind) for e in ev1 + ev2] == [
                (e.rider_id, e.kind) for e in ev12
            ]

    def test_boundary_event_emitted_once(self):
        plan = self.mk_plan()
        plan, ev1 = advance(plan, 4.0)
        assert [e.kind for e in ev1] == [PICKUP]
        plan, ev2 = advance(plan, 0.5)
        assert ev2 == []


class TestProviders:
    def test_grid_router_rectilinear(self):
        grid = ZoneGrid(origin=Point(40.70, -74.02), rows=5, cols=5, cell_size_m=800.0)
        r = GridRouter(speed_kmh=24.0)
        a, b = grid.center_of(1), grid.center_of(7)  # one cell east + one north
        assert r.travel_time(a, b) == pytest.approx(1.6 / 24.0 * 60.0, rel=1e-3)

    def test_table_router_round_trip(self, tmp_path):
        grid = ZoneGrid(origin=Point(40.70, -74.02), rows=2, cols=2, cell_size_m=800.0)
        mat = np.array(
            [
                [0.0, 3.0, 4.0, 7.0],
                [3.0, 0.0, 7.0, 4.0],
                [4.0, 7.0, 0.0, 3.0],
                [7.0, 4.0, 3.0, 0.0],
            ]
        )
        path = tmp_path / "zz.csv"
        with open(path, "w") as fh:
            fh.write("1,2,3,4\n")
            for row in mat:
                fh.write(",".join(str(x) for x in row) + "\n")
        router = TableRouter.from_csv(str(path), grid)
        assert router.travel_time(grid.center_of(1), grid.center_of(4)) == 7.0
        assert router.travel_time(grid.center_of(3), grid.center_of(3)) == 0.0

    def test_mock_router_unknown_leg(self):
        r = MockRouter({})
        with pytest.raises(RoutingError):
            r.travel_time(P[0], P[1])
