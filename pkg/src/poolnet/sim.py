"""Discrete-time multimodal dispatch environment.

Every ``dt_min`` the world ingests new orders, expires stale ones, solves one
matching round, books rewards, advances vehicles (emitting pickups/drop-offs)
and records experience tuples for vehicles that received a match. Transit
drop-offs hand riders to the timetable graph for the rest of their trip.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import (
    DOOR_TO_DOOR,
    SEAT_CAPACITY,
    Experience,
    MatchDelta,
    NonPoolingState,
    Order,
    PassengerRecord,
    RewardParams,
    VACANT_RECORD,
    VehicleState,
    apply_match,
    augment_nonpooling,
    encode_state,
)
from .errors import ContractError, SimulationError
from .geo import Point, ZoneGrid, euclidean_km
from .matching import (
    InsertionVehicle,
    MatchContext,
    MatchPair,
    MatchResult,
    MatchVehicle,
    build_edges,
    sequential_insertion_match,
    solve_assignment,
)
from .routing import DROPOFF, PICKUP, RoutePlan, Stop, TravelTimeProvider, advance, insert_order
from .transit import TransitGraph, best_station_in_zone, station_to_dest_minutes

LOG = logging.getLogger(__name__)

# seed-stream tags so every random decision hangs off one root seed
STREAM_DEMAND = 11
STREAM_PPOOL = 12
STREAM_FLEET = 13
STREAM_EDGES = 14


@dataclass
class SimConfig:
    horizon_min: float = 60.0
    dt_min: float = 1.0
    n_vehicles: int = 50
    capacity: int = SEAT_CAPACITY
    r_match_km: float = 1.2
    wait_tolerance_min: float = 5.0
    reward: RewardParams = field(default_factory=RewardParams)
    p_pool: float = 0.0
    demand_subsample: float = 0.95
    k_transit: int | None = 5  # nearest-station candidates for transit ETAs
    log_rounds: bool = False

    def __post_init__(self) -> None:
        if self.dt_min <= 0 or self.horizon_min <= 0:
            raise ContractError("horizon and dt must be positive")
        if abs(self.horizon_min / self.dt_min - round(self.horizon_min / self.dt_min)) > 1e-9:
            raise ContractError("horizon must be a whole number of rounds")
        if self.n_vehicles < 0:
            raise ContractError("fleet size must be non-negative")
        if self.capacity not in (1, SEAT_CAPACITY):
            raise ContractError("seat capacity must be 1 (non-pooling) or 3")
        if self.wait_tolerance_min <= 0:
            raise ContractError("matching-wait tolerance must be positive")
        if not 0.0 <= self.p_pool <= 1.0:
            raise ContractError("p_pool must lie in [0, 1]")

    @property
    def n_rounds(self) -> int:
        return int(round(self.horizon_min / self.dt_min))


@dataclass
class EpisodeMetrics:
    service_rate: float
    total_reward: float
    avg_detour_min: float
    n_orders: int
    n_served: int
    n_expired: int
    overestimation_rate: float = math.nan
    episode: int = 0
    epsilon: float = math.nan


@dataclass
class DecisionRecord:
    """One executed match: the agent's value estimate and the booked reward."""

    vehicle_id: int
    round_idx: int
    q_value: float
    reward: float
    explored: bool


@dataclass
class SeatBooking:
    rider_id: int
    dropoff_zone: int
    remaining_min: float
    detour_min: float
    dest: Point
    via_transit: bool
    transit_min: float
    picked: bool = False


@dataclass
class PendingDecision:
    s: np.ndarray
    a: int
    r: float


class SimVehicle:
    def __init__(self, vid: int, capacity: int, pos: Point):
        self.vid = vid
        self.capacity = capacity
        self.pos = pos
        self.plan = RoutePlan(start=pos, stops=())
        self.slots: list[SeatBooking | None] = [None] * capacity

    @property
    def physical_vacant(self) -> int:
        return sum(1 for s in self.slots if s is None)

    def booking(self, rider_id: int) -> SeatBooking:
        for b in self.slots:
            if b is not None and b.rider_id == rider_id:
                return b
        raise SimulationError(f"vehicle {self.vid} has no booking for rider {rider_id}")


class World:
    """One episode's mutable state; deterministic given (inputs, seed, episode)."""

    def __init__(
        self,
        grid: ZoneGrid,
        tgraph: TransitGraph,
        provider: TravelTimeProvider,
        orders: list[Order],
        config: SimConfig,
        seed: int = 0,
        episode_idx: int = 0,
    ):
        self.grid = grid
        self.tgraph = tgraph
        self.provider = provider
        self.config = config
        self.seed = seed
        self.episode_idx = episode_idx
        self.t_min = 0.0
        self.round_idx = 0

        in_horizon = [o for o in orders if o.request_min <= config.horizon_min]
        rng_demand = np.random.default_rng((seed, STREAM_DEMAND, episode_idx))
        if config.demand_subsample < 1.0:
            keep = int(round(len(in_horizon) * config.demand_subsample))
            picked = rng_demand.permutation(len(in_horizon))[:keep]
            in_horizon = [in_horizon[i] for i in sorted(picked)]
        if config.p_pool > 0.0:
            rng_pool = np.random.default_rng((seed, STREAM_PPOOL, episode_idx))
            flags = rng_pool.random(len(in_horizon)) < config.p_pool
            in_horizon = [
                replace(o, pooling_only=bool(f)) for o, f in zip(in_horizon, flags)
            ]
        self.orders = sorted(in_horizon, key=lambda o: (o.request_min, o.oid))
        self._order_ptr = 0
        self.waiting: list[Order] = []

        rng_fleet = np.random.default_rng((seed, STREAM_FLEET, episode_idx))
        self.vehicles = [
            SimVehicle(
                vid,
                config.capacity,
                grid.point_at(
                    rng_fleet.uniform(0.0, grid.rows), rng_fleet.uniform(0.0, grid.cols)
                ),
            )
            for vid in range(config.n_vehicles)
        ]
        self._by_vid = {v.vid: v for v in self.vehicles}

        self.n_served = 0
        self.n_expired = 0
        self.total_reward = 0.0
        self.final_detour: dict[int, float] = {}
        self.executed_actions: dict[int, int] = {}  # rider id -> executed action
        self.decision_log: list[DecisionRecord] = []
        self.round_log: list[tuple] = []
        self.pending: dict[int, PendingDecision] = {}

    # ---- state views -----------------------------------------------------

    def vehicle_state(self, veh: SimVehicle, rider: Order | None) -> VehicleState:
        dummy = self.grid.dummy_zone
        o_zone = rider.origin_zone if rider is not None else dummy
        d_zone = rider.dest_zone if rider is not None else dummy
        records = tuple(
            PassengerRecord(
                dropoff_zone=b.dropoff_zone,
                remaining_min=max(b.remaining_min, 0.0),
                detour_min=max(b.detour_min, 0.0),
                rider_id=b.rider_id,
                dest=b.dest,
                via_transit=b.via_transit,
            )
            if b is not None
            else VACANT_RECORD
            for b in veh.slots
        )
        zone = self.grid.zone_of(veh.pos)
        if veh.capacity == 1:
            return augment_nonpooling(
                NonPoolingState(
                    t_min=self.t_min,
                    zone=zone,
                    vacant=veh.physical_vacant,
                    record=records[0],
                    origin_zone=o_zone,
                    dest_zone=d_zone,
                )
            )
        return VehicleState(
            t_min=self.t_min,
            zone=zone,
            vacant=veh.physical_vacant,
            records=records,  # type: ignore[arg-type]
            origin_zone=o_zone,
            dest_zone=d_zone,
        )

    def eligible_match_vehicles(self) -> list[MatchVehicle]:
        return [
            MatchVehicle(v.vid, self.vehicle_state(v, None), v.pos)
            for v in self.vehicles
            if v.physical_vacant > 0
        ]

    # ---- one matching round ----------------------------------------------

    def step(self, dispatcher) -> list[Experience]:
        if self.round_idx >= self.config.n_rounds:
            raise SimulationError("episode horizon already reached")
        self.round_idx += 1
        self.t_min = self.round_idx * self.config.dt_min

        while (
            self._order_ptr < len(self.orders)
            and self.orders[self._order_ptr].request_min <= self.t_min
        ):
            self.waiting.append(self.orders[self._order_ptr])
            self._order_ptr += 1
        kept: list[Order] = []
        for o in self.waiting:
            if self.t_min - o.request_min > self.config.wait_tolerance_min:
                self.n_expired += 1
            else:
                kept.append(o)
        self.waiting = kept

        result = dispatcher.match(self)
        experiences: list[Experience] = []
        waiting_by_id = {o.oid: o for o in self.waiting}
        for pair in result.pairs:
            rider = waiting_by_id.get(pair.rider_id)
            if rider is None:
                raise SimulationError(f"matched unknown rider {pair.rider_id}")
            flushed = self._execute_match(pair, rider)
            if flushed is not None:
                experiences.append(flushed)
            self.waiting.remove(rider)

        for veh in self.vehicles:
            self._advance_vehicle(veh)
        return experiences

    def _execute_match(self, pair: MatchPair, rider: Order) -> Experience | None:
        veh = self._by_vid[pair.vehicle_id]
        if veh.physical_vacant <= 0:
            raise SimulationError(f"vehicle {veh.vid} matched while full")
        action = pair.action
        vs = self.vehicle_state(veh, rider)
        s_vec = encode_state(vs, self.grid, self.config.horizon_min)

        if action == DOOR_TO_DOOR:
            drop_point, transit_min = rider.dest, 0.0
        else:
            sid = best_station_in_zone(self.tgraph, action, rider.dest, self.config.k_transit)
            if sid is None:
                raise SimulationError(f"action {action} names a zone without stations")
            drop_point = self.tgraph.stations[sid].point
            transit_min = station_to_dest_minutes(
                self.tgraph, sid, rider.dest, self.config.k_transit
            )

        outcome = insert_order(
            veh.plan,
            Stop(rider.origin, PICKUP, rider.oid),
            Stop(drop_point, DROPOFF, rider.oid),
            self.provider,
        )
        occupied_ids = [rec.rider_id for rec in vs.records if not rec.vacant]
        delta = MatchDelta(
            wait_min=max(self.t_min + outcome.pickup_eta_min - rider.request_min, 0.0),
            rider_onboard_min=outcome.onboard_min,
            rider_direct_min=self.provider.travel_time(rider.origin, rider.dest),
            rider_transit_min=transit_min,
            passenger_remaining=tuple(outcome.existing_remaining[rid] for rid in occupied_ids),
        )
        next_vs, reward = apply_match(
            vs, rider, action, delta, self.config.reward, self.grid.dummy_zone
        )

        for rec in next_vs.records:
            if rec.vacant:
                continue
            if rec.rider_id == rider.oid:
                slot = veh.slots.index(None)
                veh.slots[slot] = SeatBooking(
                    rider_id=rider.oid,
                    dropoff_zone=rec.dropoff_zone,
                    remaining_min=rec.remaining_min,
                    detour_min=rec.detour_min,
                    dest=rider.dest,
                    via_transit=rec.via_transit,
                    transit_min=transit_min,
                )
            else:
                booking = veh.booking(rec.rider_id)
                booking.remaining_min = rec.remaining_min
                booking.detour_min = rec.detour_min
        veh.plan = outcome.plan

        self.total_reward += reward
        self.n_served += 1
        self.executed_actions[rider.oid] = action
        self.decision_log.append(
            DecisionRecord(veh.vid, self.round_idx, pair.q_value, reward, pair.explored)
        )
        if self.config.log_rounds:
            self.round_log.append(
                (self.round_idx, veh.vid, rider.oid, action, pair.weight, int(pair.explored))
            )

        flushed = None
        if veh.vid in self.pending:
            prev = self.pending.pop(veh.vid)
            flushed = Experience(prev.s, prev.a, prev.r, s_vec, done=False)
        self.pending[veh.vid] = PendingDecision(s=s_vec, a=action, r=reward)
        return flushed

    def _advance_vehicle(self, veh: SimVehicle) -> None:
        if veh.plan.stops and not veh.plan.done:
            veh.plan, events = advance(veh.plan, self.config.dt_min)
            for ev in events:
                if ev.kind == PICKUP:
                    veh.booking(ev.rider_id).picked = True
                else:
                    booking = veh.booking(ev.rider_id)
                    self.final_detour[ev.rider_id] = booking.detour_min
                    veh.slots[veh.slots.index(booking)] = None
            veh.pos = veh.plan.position()
            if veh.plan.done:
                veh.plan = RoutePlan(start=veh.pos, stops=())
        for booking in veh.slots:
            if booking is None:
                continue
            drop = veh.plan.remaining_eta(booking.rider_id, DROPOFF)
            if drop is None:
                raise SimulationError(
                    f"booking for rider {booking.rider_id} has no drop-off stop"
                )
            pick = veh.plan.remaining_eta(booking.rider_id, PICKUP)
            booking.remaining_min = max(drop - pick if pick is not None else drop, 0.0)

    def flush_pending(self) -> list[Experience]:
        """Terminal experiences at the horizon for vehicles still awaiting their
        next decision."""
        out = []
        for vid in sorted(self.pending):
            prev = self.pending[vid]
            vs = self.vehicle_state(self._by_vid[vid], None)
            s_next = encode_state(vs, self.grid, self.config.horizon_min)
            out.append(Experience(prev.s, prev.a, prev.r, s_next, done=True))
        self.pending.clear()
        return out

    def detours_of_served(self) -> list[float]:
        done = dict(self.final_detour)
        for veh in self.vehicles:
            for booking in veh.slots:
                if booking is not None:
                    done[booking.rider_id] = booking.detour_min
        return [done[rid] for rid in sorted(done)]


class RLDispatcher:
    """Edge weights from a Q-scorer with eps-greedy (optionally Guider-filtered)
    exploration; the assignment is solved per round."""

    def __init__(
        self,
        scorer,
        guider,
        ctx: MatchContext,
        epsilon: float,
        r_hat: float,
        q_bar: float,
        seed: int = 0,
    ):
        self.scorer = scorer
        self.guider = guider
        self.ctx = ctx
        self.epsilon = epsilon
        self.r_hat = r_hat
        self.q_bar = q_bar
        self.seed = seed

    def match(self, world: World) -> MatchResult:
        vehicles = world.eligible_match_vehicles()
        if not vehicles or not world.waiting:
            return MatchResult(pairs=(), total_weight=0.0)
        edges = build_edges(
            vehicles,
            world.waiting,
            self.scorer,
            self.guider,
            self.epsilon,
            self.r_hat,
            self.q_bar,
            world.config.r_match_km,
            self.ctx,
            seed=self.seed,
            round_idx=world.round_idx,
        )
        return solve_assignment(edges)


class InsertionDispatcher:
    """Myopic insertion-cost baseline (no learning)."""

    def __init__(self, deadline_min: float = 15.0):
        self.deadline_min = deadline_min

    def match(self, world: World) -> MatchResult:
        vehicles = [
            InsertionVehicle(v.vid, v.plan, v.pos)
            for v in world.vehicles
            if v.physical_vacant > 0
        ]
        if not vehicles or not world.waiting:
            return MatchResult(pairs=(), total_weight=0.0)
        return sequential_insertion_match(
            vehicles,
            world.waiting,
            world.provider,
            world.tgraph,
            world.config.r_match_km,
            self.deadline_min,
        )


class ZeroScorer:
    """All-zero action values: with eps=1 this yields the pure random policy."""

    def __init__(self, n_actions: int):
        self.n_actions = n_actions

    def scores(self, states: np.ndarray) -> np.ndarray:
        return np.zeros((states.shape[0], self.n_actions))


def run_episode(world: World, dispatcher, on_round=None) -> EpisodeMetrics:
    """Drive the world to the horizon and assemble episode metrics.

    ``on_round(world, experiences)`` fires after every round and once more with
    the terminal flush; overestimation is left for the caller, which owns the
    discount factor.
    """
    for _ in range(world.config.n_rounds):
        exps = world.step(dispatcher)
        if on_round is not None:
            on_round(world, exps)
    final = world.flush_pending()
    if on_round is not None:
        on_round(world, final)

    accounted = world.n_served + world.n_expired + len(world.waiting)
    if accounted != len(world.orders):
        raise SimulationError(
            f"order conservation violated: {accounted} accounted, {len(world.orders)} arrived"
        )
    detours = world.detours_of_served()
    return EpisodeMetrics(
        service_rate=world.n_served / len(world.orders) if world.orders else 0.0,
        total_reward=world.total_reward,
        avg_detour_min=float(np.mean(detours)) if detours else 0.0,
        n_orders=len(world.orders),
        n_served=world.n_served,
        n_expired=world.n_expired,
    )


@dataclass
class WorldBuilder:
    """Factory producing per-episode worlds from shared inputs and one seed."""

    grid: ZoneGrid
    tgraph: TransitGraph
    provider: TravelTimeProvider
    orders: list[Order]
    config: SimConfig
    seed: int = 0

    def build(self, episode_idx: int, capacity: int | None = None) -> World:
        cfg = self.config if capacity is None else replace(self.config, capacity=capacity)
        return World(
            self.grid,
            self.tgraph,
            self.provider,
            self.orders,
            cfg,
            seed=self.seed,
            episode_idx=episode_idx,
        )

    def match_context(self, door_only: bool = False) -> MatchContext:
        return MatchContext(
            grid=self.grid,
            horizon_min=self.config.horizon_min,
            station_zones=self.tgraph.station_zones(),
            door_only=door_only,
        )


def parse_request_time(token: str) -> float:
    """Minutes since midnight from '8:10am', '08:10', or a plain float of minutes."""
    tok = token.strip().lower()
    try:
        return float(tok)
    except ValueError:
        pass
    suffix = None
    if tok.endswith(("am", "pm")):
        suffix, tok = tok[-2:], tok[:-2]
    parts = tok.split(":")
    if len(parts) != 2:
        raise ValueError(f"unparseable request time {token!r}")
    hours, minutes = int(parts[0]), float(parts[1])
    if suffix == "pm" and hours != 12:
        hours += 12
    if suffix == "am" and hours == 12:
        hours = 0
    return hours * 60.0 + minutes


ORDER_COLUMNS = [
    "request_time",
    "origin_lat",
    "origin_lon",
    "dest_lat",
    "dest_lon",
    "origin_zone",
    "dest_zone",
]


def load_orders(
    path: str,
    grid: ZoneGrid,
    time_origin_min: float = 0.0,
    road_kmh: float = 20.0,
    deadline_slack_min: float = 15.0,
) -> list[Order]:
    """Read an order CSV, validating zone columns against the grid.

    Zone mismatches are logged and the recomputed zone wins; the arrival
    deadline is the request time plus the direct drive plus a fixed slack.
    """
    orders: list[Order] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        if [h.strip() for h in header] != ORDER_COLUMNS:
            raise ContractError(f"{path}: unexpected order header {header}")
        for line_no, row in enumerate(reader, start=2):
            if not row or not any(tok.strip() for tok in row):
                continue
            try:
                e_m = parse_request_time(row[0]) - time_origin_min
                origin = Point(float(row[1]), float(row[2]))
                dest = Point(float(row[3]), float(row[4]))
                claimed_o, claimed_d = int(row[5]), int(row[6])
            except (ValueError, IndexError) as exc:
                raise ContractError(f"{path}:{line_no}: malformed order row: {exc}") from exc
            o_zone = grid.zone_of(origin)
            d_zone = grid.zone_of(dest)
            if o_zone != claimed_o or d_zone != claimed_d:
                LOG.warning(
                    "%s:%d: zone mismatch (claimed %d->%d, computed %d->%d); using computed",
                    path,
                    line_no,
                    claimed_o,
                    claimed_d,
                    o_zone,
                    d_zone,
                )
            direct_min = euclidean_km(origin, dest) / road_kmh * 60.0
            orders.append(
                Order(
                    oid=len(orders),
                    origin=origin,
                    dest=dest,
                    origin_zone=o_zone,
                    dest_zone=d_zone,
                    request_min=e_m,
                    deadline_min=e_m + direct_min + deadline_slack_min,
                )
            )
    orders.sort(key=lambda o: (o.request_min, o.oid))
    return orders


def save_orders(orders: list[Order], path: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ORDER_COLUMNS)
        for o in orders:
            w.writerow(
                [
                    repr(float(o.request_min)),
                    repr(o.origin.lat),
                    repr(o.origin.lon),
                    repr(o.dest.lat),
                    repr(o.dest.lon),
                    o.origin_zone,
                    o.dest_zone,
                ]
            )


def write_round_log(world: World, path: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["round", "vehicle", "rider", "action", "weight", "explored"])
        for row in world.round_log:
            w.writerow(row)
