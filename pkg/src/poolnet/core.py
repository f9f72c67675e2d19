"""Domain types and pure functions for the per-vehicle dispatch MDP.

A vehicle's state is the tuple (time, zone, vacant seats, three passenger
records, candidate rider origin/destination zones). Matching a candidate
rider books a reward immediately and rewrites the passenger records; both
operations here are pure so they can be unit-checked against worked examples.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ContractError, EncodingError, StateError
from .geo import Point, ZoneGrid, euclidean_km

SEAT_CAPACITY = 3
STATE_DIM = 14
DOOR_TO_DOOR = 0  # action 0: deliver the rider to her destination directly


@dataclass(frozen=True)
class Order:
    """A rider request: origin/destination, request time and arrival deadline."""

    oid: int
    origin: Point
    dest: Point
    origin_zone: int
    dest_zone: int
    request_min: float
    deadline_min: float
    pooling_only: bool = False

    def __post_init__(self) -> None:
        if self.request_min > self.deadline_min:
            raise ContractError(f"order {self.oid}: request time after arrival deadline")
        if self.origin_zone < 1 or self.dest_zone < 1:
            raise ContractError(f"order {self.oid}: zones must be real (>= 1)")


@dataclass(frozen=True)
class PassengerRecord:
    """One seat's booking: drop-off zone, remaining onboard minutes, accrued detour.

    A vacant seat is all-zero. ``rider_id``, ``dest`` and ``via_transit`` are
    bookkeeping that never enters the encoded state vector.
    """

    dropoff_zone: int = 0
    remaining_min: float = 0.0
    detour_min: float = 0.0
    rider_id: int | None = None
    dest: Point | None = None
    via_transit: bool = False

    @property
    def vacant(self) -> bool:
        return self.dropoff_zone == 0 and self.remaining_min == 0.0 and self.detour_min == 0.0


VACANT_RECORD = PassengerRecord()


@dataclass(frozen=True)
class VehicleState:
    """Per-vehicle MDP state. ``origin_zone``/``dest_zone`` describe the candidate
    rider under consideration and hold the dummy zone when there is none."""

    t_min: float
    zone: int
    vacant: int
    records: tuple[PassengerRecord, PassengerRecord, PassengerRecord]
    origin_zone: int
    dest_zone: int

    def occupied_slots(self) -> list[int]:
        return [k for k, rec in enumerate(self.records) if not rec.vacant]

    def validate(self, grid: ZoneGrid) -> None:
        dummy = grid.dummy_zone
        if not 1 <= self.zone <= grid.n_zones:
            raise EncodingError(f"vehicle zone {self.zone} out of range")
        if self.vacant != SEAT_CAPACITY - len(self.occupied_slots()):
            raise StateError("vacant-seat count disagrees with passenger records")
        if self.vacant == 0 and (self.origin_zone != dummy or self.dest_zone != dummy):
            raise StateError("fully occupied vehicle must carry the dummy candidate O/D")
        for z in (self.origin_zone, self.dest_zone):
            if not 1 <= z <= dummy:
                raise EncodingError(f"candidate zone {z} out of range")
        for rec in self.records:
            if rec.vacant:
                continue
            if not 1 <= rec.dropoff_zone <= grid.n_zones:
                raise EncodingError(f"drop-off zone {rec.dropoff_zone} out of range")
            if rec.remaining_min < 0 or rec.detour_min < 0:
                raise StateError("passenger times must be non-negative")


@dataclass(frozen=True)
class NonPoolingState:
    """Capacity-1 vehicle state as logged by non-pooling services."""

    t_min: float
    zone: int
    vacant: int  # 0 or 1
    record: PassengerRecord
    origin_zone: int
    dest_zone: int


@dataclass(frozen=True)
class RewardParams:
    """Coefficients of the matching reward: flag fare, distance fare, waiting and
    piecewise detour penalties with tolerance ``kappa_min``."""

    beta0: float = 100.0
    beta1: float = 40.0
    beta2: float = 5.0
    beta3: float = 0.0
    beta4: float = 10.0
    kappa_min: float = 15.0

    def __post_init__(self) -> None:
        if not (self.beta4 >= self.beta3 >= 0.0):
            raise ContractError("detour penalties must satisfy beta4 >= beta3 >= 0")
        if self.kappa_min <= 0:
            raise ContractError("delay tolerance must be positive")


@dataclass(frozen=True)
class MatchDelta:
    """Routing/transit outcome of one candidate match, in minutes.

    ``passenger_remaining`` lists the re-planned remaining onboard time of each
    currently occupied record, in slot order.
    """

    wait_min: float
    rider_onboard_min: float
    rider_direct_min: float
    rider_transit_min: float = 0.0
    passenger_remaining: tuple[float, ...] = ()


@dataclass(frozen=True)
class Experience:
    """One transition (s, a, r, s', done) with encoded 14-vectors."""

    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray
    done: bool

    def __post_init__(self) -> None:
        for vec in (self.s, self.s_next):
            if vec.shape != (STATE_DIM,) or not np.all(np.isfinite(vec)):
                raise ContractError("experience vectors must be finite 14-vectors")


def delay_penalty(params: RewardParams, total_detour_min: float) -> float:
    """Piecewise-linear trip-delay cost around the tolerance kappa."""
    kappa = params.kappa_min
    return params.beta3 * min(total_detour_min, kappa) + params.beta4 * max(
        total_detour_min - kappa, 0.0
    )


def compute_reward(
    params: RewardParams,
    dis_od_km: float,
    wait_min: float,
    detours_after: list[float],
    detours_before: list[float],
) -> float:
    """Reward booked when a vehicle is matched with a new rider.

    ``detours_after`` covers the new rider plus all existing passengers after
    the match; ``detours_before`` covers the existing passengers only.
    """
    inputs = [dis_od_km, wait_min, *detours_after, *detours_before]
    if any(x < 0 for x in inputs):
        raise ValueError("reward inputs must be non-negative")
    return (
        params.beta0
        + params.beta1 * dis_od_km
        - params.beta2 * wait_min
        - delay_penalty(params, sum(detours_after))
        + delay_penalty(params, sum(detours_before))
    )


def compute_euclidean_km(a: Point, b: Point) -> float:
    """Projected straight-line distance used by the distance fare."""
    return euclidean_km(a, b)


def encode_state(state: VehicleState, grid: ZoneGrid, horizon_min: float) -> np.ndarray:
    """Pack a vehicle state into the 14-vector consumed by the value networks.

    Layout: [t, l, v, i1..i3, t1..t3, dt1..dt3, o, d]; times are scaled by the
    horizon, zone ids by Z+1 and the seat count by the capacity.
    """
    state.validate(grid)
    if horizon_min <= 0:
        raise EncodingError("horizon must be positive")
    zscale = float(grid.dummy_zone)
    vec = np.empty(STATE_DIM, dtype=np.float64)
    vec[0] = state.t_min / horizon_min
    vec[1] = state.zone / zscale
    vec[2] = state.vacant / SEAT_CAPACITY
    for k, rec in enumerate(state.records):
        vec[3 + k] = rec.dropoff_zone / zscale
        vec[6 + k] = rec.remaining_min / horizon_min
        vec[9 + k] = rec.detour_min / horizon_min
    vec[12] = state.origin_zone / zscale
    vec[13] = state.dest_zone / zscale
    return vec


def decode_state(vec: np.ndarray, grid: ZoneGrid, horizon_min: float) -> VehicleState:
    """Inverse of :func:`encode_state`; zone ids are rounded back to integers."""
    if vec.shape != (STATE_DIM,):
        raise EncodingError(f"expected a {STATE_DIM}-vector, got shape {vec.shape}")
    zscale = float(grid.dummy_zone)
    records = tuple(
        PassengerRecord(
            dropoff_zone=int(round(vec[3 + k] * zscale)),
            remaining_min=float(vec[6 + k] * horizon_min),
            detour_min=float(vec[9 + k] * horizon_min),
        )
        for k in range(SEAT_CAPACITY)
    )
    return VehicleState(
        t_min=float(vec[0] * horizon_min),
        zone=int(round(vec[1] * zscale)),
        vacant=int(round(vec[2] * SEAT_CAPACITY)),
        records=records,  # type: ignore[arg-type]
        origin_zone=int(round(vec[12] * zscale)),
        dest_zone=int(round(vec[13] * zscale)),
    )


def apply_match(
    state: VehicleState,
    order: Order,
    action: int,
    delta: MatchDelta,
    params: RewardParams,
    dummy_zone: int,
) -> tuple[VehicleState, float]:
    """Book rider ``order`` onto the vehicle under ``action`` and return the
    post-match state plus the reward.

    The new rider takes the lowest-index vacant record. Existing passengers'
    remaining times come from ``delta.passenger_remaining``; their accrued
    detours grow by the induced change (floored at zero).
    """
    if state.vacant <= 0:
        raise StateError("no vacant seat to accept a new rider")
    if order.pooling_only and action != DOOR_TO_DOOR:
        raise ContractError(f"order {order.oid} demands door-to-door service (action 0)")
    occupied = state.occupied_slots()
    if len(delta.passenger_remaining) != len(occupied):
        raise ContractError(
            f"expected {len(occupied)} re-planned passenger times, got "
            f"{len(delta.passenger_remaining)}"
        )

    detours_before = [state.records[k].detour_min for k in occupied]
    records = list(state.records)
    for j, k in enumerate(occupied):
        rec = records[k]
        new_remaining = delta.passenger_remaining[j]
        records[k] = replace(
            rec,
            remaining_min=new_remaining,
            detour_min=max(rec.detour_min + (new_remaining - rec.remaining_min), 0.0),
        )

    new_detour = max(
        delta.rider_onboard_min + delta.rider_transit_min - delta.rider_direct_min, 0.0
    )
    slot = next(k for k, rec in enumerate(records) if rec.vacant)
    records[slot] = PassengerRecord(
        dropoff_zone=order.dest_zone if action == DOOR_TO_DOOR else action,
        remaining_min=delta.rider_onboard_min,
        detour_min=new_detour,
        rider_id=order.oid,
        dest=order.dest,
        via_transit=action != DOOR_TO_DOOR,
    )

    detours_after = [new_detour] + [records[k].detour_min for k in occupied]
    reward = compute_reward(
        params,
        compute_euclidean_km(order.origin, order.dest),
        delta.wait_min,
        detours_after,
        detours_before,
    )
    next_state = replace(
        state,
        vacant=state.vacant - 1,
        records=tuple(records),  # type: ignore[arg-type]
        origin_zone=dummy_zone,
        dest_zone=dummy_zone,
    )
    return next_state, reward


def augment_nonpooling(state_np: NonPoolingState) -> VehicleState:
    """Lift a capacity-1 state into the 3-seat representation: the single record
    keeps slot 1, slots 2-3 stay vacant and the seat count gains two."""
    return VehicleState(
        t_min=state_np.t_min,
        zone=state_np.zone,
        vacant=state_np.vacant + (SEAT_CAPACITY - 1),
        records=(state_np.record, VACANT_RECORD, VACANT_RECORD),
        origin_zone=state_np.origin_zone,
        dest_zone=state_np.dest_zone,
    )


def idle_state(t_min: float, zone: int, dummy_zone: int) -> VehicleState:
    """An empty vehicle with no candidate rider."""
    return VehicleState(
        t_min=t_min,
        zone=zone,
        vacant=SEAT_CAPACITY,
        records=(VACANT_RECORD, VACANT_RECORD, VACANT_RECORD),
        origin_zone=dummy_zone,
        dest_zone=dummy_zone,
    )
