"""Core MDP model: encoding, rewards, match application, augmentation."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poolnet.core import (
    DOOR_TO_DOOR,
    MatchDelta,
    NonPoolingState,
    Order,
    PassengerRecord,
    RewardParams,
    SEAT_CAPACITY,
    VACANT_RECORD,
    VehicleState,
    apply_match,
    augment_nonpooling,
    compute_euclidean_km,
    compute_reward,
    decode_state,
    delay_penalty,
    encode_state,
    idle_state,
)
from poolnet.errors import ContractError, EncodingError, StateError
from poolnet.geo import Point, ZoneGrid

GRID = ZoneGrid(origin=Point(40.70, -74.02), rows=8, cols=7, cell_size_m=800.0)
HORIZON = 60.0
DUMMY = GRID.dummy_zone  # 57
PAPER_PARAMS = RewardParams(beta0=100.0, beta1=40.0, beta2=5.0, beta3=0.0, beta4=10.0, kappa_min=15.0)


def mk_order(o_zone=2, d_zone=5, oid=1, pooling_only=False, km_apart=1.0):
    origin = GRID.center_of(o_zone)
    dest = GRID.center_of(d_zone)
    return Order(
        oid=oid,
        origin=origin,
        dest=dest,
        origin_zone=o_zone,
        dest_zone=d_zone,
        request_min=0.0,
        deadline_min=60.0,
        pooling_only=pooling_only,
    )


def records(*triples):
    recs = [PassengerRecord(z, t, dt) for z, t, dt in triples]
    recs += [VACANT_RECORD] * (SEAT_CAPACITY - len(recs))
    return tuple(recs)


class TestEncodeState:
    def test_worked_example_denormalizes_exactly(self):
        # one rider on board heading to zone 3 with 8 min left, candidate 2 -> 5
        state = VehicleState(
            t_min=10.0,
            zone=1,
            vacant=2,
            records=records((3, 8.0, 0.0)),
            origin_zone=2,
            dest_zone=5,
        )
        vec = encode_state(state, GRID, HORIZON)
        raw = vec * np.array([HORIZON, DUMMY, 3, DUMMY, DUMMY, DUMMY, HORIZON, HORIZON, HORIZON, HORIZON, HORIZON, HORIZON, DUMMY, DUMMY])
        expected = [10, 1, 2, 3, 0, 0, 8, 0, 0, 0, 0, 0, 2, 5]
        assert np.allclose(raw, expected, atol=1e-9)

    def test_dummy_sentinel_encodes_to_one(self):
        state = idle_state(0.0, 1, DUMMY)
        vec = encode_state(state, GRID, HORIZON)
        assert vec[12] == 1.0 and vec[13] == 1.0
        assert np.all(vec[3:12] == 0.0)

    def test_zone_out_of_range_raises(self):
        state = VehicleState(
            t_min=0.0, zone=GRID.n_zones + 1, vacant=3,
            records=records(), origin_zone=DUMMY, dest_zone=DUMMY,
        )
        with pytest.raises(EncodingError):
            encode_state(state, GRID, HORIZON)

    @given(st.data())
    @settings(max_examples=60, deadline=None)
    def test_round_trip(self, data):
        # zone ids are exact; times quantized to 0.01 min survive the round trip
        n_pax = data.draw(st.integers(0, 3))
        triples = [
            (
                data.draw(st.integers(1, GRID.n_zones)),
                data.draw(st.integers(0, 5900)) / 100.0,
                data.draw(st.integers(0, 2000)) / 100.0,
            )
            for _ in range(n_pax)
        ]
        triples = [(z, max(t, 0.01), dt) for z, t, dt in triples]
        vacant = SEAT_CAPACITY - n_pax
        if vacant == 0:
            o = d = DUMMY
        else:
            o = data.draw(st.integers(1, GRID.n_zones))
            d = data.draw(st.integers(1, GRID.n_zones))
        state = VehicleState(
            t_min=data.draw(st.integers(0, 6000)) / 100.0,
            zone=data.draw(st.integers(1, GRID.n_zones)),
            vacant=vacant,
            records=records(*triples),
            origin_zone=o,
            dest_zone=d,
        )
        back = decode_state(encode_state(state, GRID, HORIZON), GRID, HORIZON)
        assert back.zone == state.zone and back.vacant == state.vacant
        assert back.origin_zone == state.origin_zone and back.dest_zone == state.dest_zone
        assert math.isclose(back.t_min, state.t_min, abs_tol=1e-9)
        for ours, theirs in zip(state.records, back.records):
            assert theirs.dropoff_zone == ours.dropoff_zone
            assert math.isclose(theirs.remaining_min, ours.remaining_min, abs_tol=1e-9)
            assert math.isclose(theirs.detour_min, ours.detour_min, abs_tol=1e-9)


def reference_reward(p, dis, wait, after, before):
    # independent oracle: literal piecewise formula
    def pen(x):
        return p.beta3 * min(x, p.kappa_min) + p.beta4 * max(x - p.kappa_min, 0.0)

    return p.beta0 + p.beta1 * dis - p.beta2 * wait - pen(sum(after)) + pen(sum(before))


class TestComputeReward:
    def test_paper_parameter_case(self):
        got = compute_reward(PAPER_PARAMS, 2.0, 4.0, [6.0, 1.0], [0.0])
        assert got == pytest.approx(160.0, abs=1e-12)

    def test_piecewise_penalty_crossing_tolerance(self):
        got = compute_reward(PAPER_PARAMS, 2.0, 4.0, [20.0], [])
        assert got == pytest.approx(110.0, abs=1e-12)

    def test_zero_trip_collapses_to_flag_fare(self):
        assert compute_reward(PAPER_PARAMS, 0.0, 0.0, [0.0], []) == PAPER_PARAMS.beta0

    def test_negative_inputs_rejected(self):
        with pytest.raises(ValueError):
            compute_reward(PAPER_PARAMS, -1.0, 0.0, [], [])
        with pytest.raises(ValueError):
            compute_reward(PAPER_PARAMS, 1.0, 0.0, [-2.0], [])

    def test_randomized_against_oracle(self):
        rng = np.random.default_rng(1234)
        for _ in range(50):
            p = RewardParams(
                beta0=rng.uniform(0, 200),
                beta1=rng.uniform(0, 80),
                beta2=rng.uniform(0, 20),
                beta3=rng.uniform(0, 5),
                beta4=rng.uniform(5, 20),
                kappa_min=rng.uniform(1, 30),
            )
            dis = rng.uniform(0, 10)
            wait = rng.uniform(0, 10)
            after = list(rng.uniform(0, 12, size=rng.integers(1, 4)))
            before = list(rng.uniform(0, 12, size=rng.integers(0, 3)))
            assert compute_reward(p, dis, wait, after, before) == pytest.approx(
                reference_reward(p, dis, wait, after, before), abs=1e-9
            )

    def test_monotonicity(self):
        base = compute_reward(PAPER_PARAMS, 2.0, 4.0, [6.0, 1.0], [0.0])
        assert compute_reward(PAPER_PARAMS, 2.0, 5.0, [6.0, 1.0], [0.0]) <= base
        assert compute_reward(PAPER_PARAMS, 2.0, 4.0, [16.0, 1.0], [0.0]) <= base
        assert compute_reward(PAPER_PARAMS, 3.0, 4.0, [6.0, 1.0], [0.0]) >= base
        assert compute_reward(PAPER_PARAMS, 2.0, 4.0, [6.0, 1.0], [3.0]) >= base

    def test_penalty_continuity_at_tolerance(self):
        p = RewardParams(beta3=2.0, beta4=10.0, kappa_min=15.0)
        eps = 1e-7
        gap = abs(delay_penalty(p, p.kappa_min + eps) - delay_penalty(p, p.kappa_min))
        assert gap <= p.beta4 * eps + 1e-12

    def test_invalid_params_rejected(self):
        with pytest.raises(ContractError):
            RewardParams(beta3=5.0, beta4=1.0)
        with pytest.raises(ContractError):
            RewardParams(kappa_min=0.0)


class TestEuclidean:
    def test_identity(self):
        p = Point(40.75, -74.0)
        assert compute_euclidean_km(p, p) == 0.0

    def test_one_cell_east_west(self):
        a = GRID.center_of(1)
        b = GRID.center_of(2)  # one cell east
        assert compute_euclidean_km(a, b) == pytest.approx(0.8, rel=0.01)

    def test_symmetry(self):
        a, b = Point(40.71, -74.01), Point(40.76, -73.95)
        assert compute_euclidean_km(a, b) == compute_euclidean_km(b, a)


class TestApplyMatch:
    def test_worked_transition(self):
        # rider 1 on board (zone 3, 8 min left); rider 2 joins, dropped at a
        # zone-4 station; scripted legs: 4 to pickup, 5 to rider-1 drop, 6 to
        # the station; transit 6 + walk 1; direct solo ride would be 12.
        state = VehicleState(
            t_min=0.0,
            zone=1,
            vacant=2,
            records=records((3, 8.0, 0.0)),
            origin_zone=2,
            dest_zone=5,
        )
        order = mk_order(o_zone=2, d_zone=5, oid=2)
        delta = MatchDelta(
            wait_min=4.0,
            rider_onboard_min=11.0,  # 5 + 6 after pickup
            rider_direct_min=12.0,
            rider_transit_min=7.0,  # 6 transit + 1 walk
            passenger_remaining=(9.0,),  # 4 + 5
        )
        nxt, reward = apply_match(state, order, 4, delta, PAPER_PARAMS, DUMMY)
        got = [r.dropoff_zone for r in nxt.records]
        assert got == [3, 4, 0]
        assert [r.remaining_min for r in nxt.records] == [9.0, 11.0, 0.0]
        assert [r.detour_min for r in nxt.records] == [1.0, 6.0, 0.0]
        assert nxt.vacant == 1
        assert nxt.origin_zone == DUMMY and nxt.dest_zone == DUMMY
        # detour total 7 stays within the tolerance; with beta3 = 0 no penalty
        dis = compute_euclidean_km(order.origin, order.dest)
        assert reward == pytest.approx(100.0 + 40.0 * dis - 5.0 * 4.0, abs=1e-9)

    def test_empty_vehicle_direct_ride(self):
        state = idle_state(0.0, 1, DUMMY)
        state = VehicleState(
            t_min=0.0, zone=1, vacant=3, records=records(), origin_zone=2, dest_zone=5
        )
        order = mk_order(o_zone=2, d_zone=5, oid=9)
        delta = MatchDelta(
            wait_min=2.0, rider_onboard_min=7.0, rider_direct_min=7.0,
            rider_transit_min=0.0, passenger_remaining=(),
        )
        nxt, _ = apply_match(state, order, DOOR_TO_DOOR, delta, PAPER_PARAMS, DUMMY)
        assert [r.dropoff_zone for r in nxt.records] == [order.dest_zone, 0, 0]
        assert [r.remaining_min for r in nxt.records] == [7.0, 0.0, 0.0]
        assert [r.detour_min for r in nxt.records] == [0.0, 0.0, 0.0]

    def test_seat_conservation_over_random_sequences(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            state = VehicleState(
                t_min=0.0, zone=1, vacant=3, records=records(),
                origin_zone=1, dest_zone=2,
            )
            n_matches = rng.integers(1, 4)
            for k in range(n_matches):
                occupied = state.occupied_slots()
                delta = MatchDelta(
                    wait_min=float(rng.uniform(0, 5)),
                    rider_onboard_min=float(rng.uniform(1, 20)),
                    rider_direct_min=1.0,
                    passenger_remaining=tuple(
                        float(rng.uniform(1, 20)) for _ in occupied
                    ),
                )
                order = mk_order(o_zone=1, d_zone=2, oid=int(k + 10))
                state, _ = apply_match(state, order, DOOR_TO_DOOR, delta, PAPER_PARAMS, DUMMY)
                state = VehicleState(
                    t_min=state.t_min, zone=state.zone, vacant=state.vacant,
                    records=state.records,
                    origin_zone=1 if state.vacant else DUMMY,
                    dest_zone=2 if state.vacant else DUMMY,
                )
                assert state.vacant + len(state.occupied_slots()) == SEAT_CAPACITY

    def test_full_vehicle_rejected(self):
        state = VehicleState(
            t_min=0.0, zone=1, vacant=0,
            records=records((2, 5.0, 0.0), (3, 6.0, 0.0), (4, 7.0, 0.0)),
            origin_zone=DUMMY, dest_zone=DUMMY,
        )
        with pytest.raises(StateError):
            apply_match(state, mk_order(), DOOR_TO_DOOR, MatchDelta(0, 1, 1), PAPER_PARAMS, DUMMY)

    def test_pooling_only_contract(self):
        state = VehicleState(
            t_min=0.0, zone=1, vacant=3, records=records(), origin_zone=2, dest_zone=5
        )
        order = mk_order(pooling_only=True)
        with pytest.raises(ContractError):
            apply_match(state, order, 4, MatchDelta(0, 1, 1), PAPER_PARAMS, DUMMY)


class TestAugmentNonpooling:
    def test_footnote_layout(self):
        rec = PassengerRecord(dropoff_zone=5, remaining_min=9.0, detour_min=2.0)
        np_state = NonPoolingState(
            t_min=3.0, zone=4, vacant=0, record=rec, origin_zone=DUMMY, dest_zone=DUMMY
        )
        out = augment_nonpooling(np_state)
        assert out.vacant == 2
        assert [r.dropoff_zone for r in out.records] == [5, 0, 0]
        assert [r.remaining_min for r in out.records] == [9.0, 0.0, 0.0]
        assert [r.detour_min for r in out.records] == [2.0, 0.0, 0.0]

    def test_empty_nonpooling_vehicle(self):
        np_state = NonPoolingState(
            t_min=0.0, zone=1, vacant=1, record=VACANT_RECORD, origin_zone=2, dest_zone=3
        )
        out = augment_nonpooling(np_state)
        assert out.vacant == 3
        assert all(r.vacant for r in out.records)

    def test_candidate_fields_preserved(self):
        np_state = NonPoolingState(
            t_min=1.0, zone=2, vacant=1, record=VACANT_RECORD, origin_zone=4, dest_zone=9
        )
        out = augment_nonpooling(np_state)
        assert (out.t_min, out.zone) == (1.0, 2.0)
        assert (out.origin_zone, out.dest_zone) == (4, 9)


class TestOrderInvariants:
    def test_deadline_before_request_rejected(self):
        with pytest.raises(ContractError):
            Order(1, Point(40.7, -74.0), Point(40.71, -74.0), 1, 2, 10.0, 5.0)

    def test_zone_ids_must_be_real(self):
        with pytest.raises(ContractError):
            Order(1, Point(40.7, -74.0), Point(40.71, -74.0), 0, 2, 0.0, 5.0)
