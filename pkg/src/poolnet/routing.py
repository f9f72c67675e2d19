"""Road travel times and multi-stop vehicle route scheduling.

Routes are re-planned from scratch on every insertion: an exhaustive
precedence-respecting search for small stop counts, a farthest-insertion
heuristic beyond that. Plans are advanced in discrete time, emitting each
pickup/drop-off event exactly once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import RoutingError
from .geo import Point, ZoneGrid, rectilinear_km

PICKUP = "pickup"
DROPOFF = "dropoff"

EXHAUSTIVE_MAX_STOPS = 10  # beyond this, fall back to farthest insertion


class TravelTimeProvider:
    """Minutes of driving between two geo points. Implementations must be
    read-only after construction; the triangle inequality is not assumed."""

    def travel_time(self, a: Point, b: Point) -> float:
        raise NotImplementedError


class GridRouter(TravelTimeProvider):
    """Rectilinear (street-grid) distance at a fixed cruising speed."""

    def __init__(self, speed_kmh: float = 20.0):
        if speed_kmh <= 0:
            raise ValueError("speed must be positive")
        self.speed_kmh = speed_kmh

    def travel_time(self, a: Point, b: Point) -> float:
        return rectilinear_km(a, b) / self.speed_kmh * 60.0


class TableRouter(TravelTimeProvider):
    """Zone-to-zone minutes from a precomputed matrix."""

    def __init__(self, grid: ZoneGrid, minutes: np.ndarray):
        z = grid.n_zones
        if minutes.shape != (z, z):
            raise ValueError(f"matrix must be {z}x{z}, got {minutes.shape}")
        if np.any(minutes < 0):
            raise ValueError("travel times must be non-negative")
        self.grid = grid
        self.minutes = minutes.astype(np.float64)

    def travel_time(self, a: Point, b: Point) -> float:
        return float(self.minutes[self.grid.zone_of(a) - 1, self.grid.zone_of(b) - 1])

    @classmethod
    def from_csv(cls, path: str, grid: ZoneGrid) -> "TableRouter":
        """Load a matrix whose header row lists zone ids and whose rows are minutes."""
        with open(path, newline="") as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
        header = [int(tok) for tok in lines[0].split(",")]
        if sorted(header) != list(range(1, grid.n_zones + 1)):
            raise ValueError("header must list every zone id exactly once")
        z = grid.n_zones
        minutes = np.zeros((z, z))
        if len(lines) != z + 1:
            raise ValueError(f"expected {z} data rows, got {len(lines) - 1}")
        for i, ln in enumerate(lines[1:]):
            row = [float(tok) for tok in ln.split(",")]
            if len(row) != z:
                raise ValueError(f"row {i + 1} has {len(row)} columns, expected {z}")
            for j, val in enumerate(row):
                minutes[header[i] - 1, header[j] - 1] = val
        return cls(grid, minutes)


class MockRouter(TravelTimeProvider):
    """Scripted leg times for tests; falls back to ``default`` when a pair is unknown."""

    def __init__(
        self,
        legs: dict[tuple[Point, Point], float] | None = None,
        default: float | None = None,
        symmetric: bool = True,
    ):
        self.legs = dict(legs or {})
        self.default = default
        self.symmetric = symmetric

    def travel_time(self, a: Point, b: Point) -> float:
        if a == b:
            return 0.0
        if (a, b) in self.legs:
            return self.legs[(a, b)]
        if self.symmetric and (b, a) in self.legs:
            return self.legs[(b, a)]
        if self.default is not None:
            return self.default
        raise RoutingError(f"no scripted leg between {a} and {b}")


@dataclass(frozen=True)
class Stop:
    point: Point
    kind: str  # PICKUP or DROPOFF
    rider_id: int
    eta_min: float = math.nan  # minutes from plan creation, filled by the planner


@dataclass(frozen=True)
class RoutePlan:
    """An ordered stop schedule anchored at ``start``. ``clock`` is the time
    elapsed since planning; the first ``emitted`` stops are already completed."""

    start: Point
    stops: tuple[Stop, ...]
    clock: float = 0.0
    emitted: int = 0

    @property
    def duration_min(self) -> float:
        return self.stops[-1].eta_min if self.stops else 0.0

    @property
    def remaining_min(self) -> float:
        """Travel time still ahead of the vehicle."""
        return max(self.duration_min - self.clock, 0.0)

    @property
    def done(self) -> bool:
        return self.emitted >= len(self.stops)

    def pending_stops(self) -> tuple[Stop, ...]:
        return self.stops[self.emitted :]

    def remaining_eta(self, rider_id: int, kind: str) -> float | None:
        """Minutes from now until the rider's pending stop of the given kind."""
        for stop in self.stops[self.emitted :]:
            if stop.rider_id == rider_id and stop.kind == kind:
                return stop.eta_min - self.clock
        return None

    def position(self) -> Point:
        """Current location: interpolated along the active leg in travel time."""
        if not self.stops:
            return self.start
        if self.clock >= self.stops[-1].eta_min:
            return self.stops[-1].point
        prev_pt, prev_eta = self.start, 0.0
        for stop in self.stops:
            if stop.eta_min > self.clock:
                leg = stop.eta_min - prev_eta
                frac = 0.0 if leg <= 0 else (self.clock - prev_eta) / leg
                return Point(
                    prev_pt.lat + frac * (stop.point.lat - prev_pt.lat),
                    prev_pt.lon + frac * (stop.point.lon - prev_pt.lon),
                )
            prev_pt, prev_eta = stop.point, stop.eta_min
        return self.stops[-1].point


def _precedence_pairs(stops: list[Stop]) -> dict[int, int]:
    """Map dropoff index -> pickup index for riders with both stops present."""
    pickups = {s.rider_id: i for i, s in enumerate(stops) if s.kind == PICKUP}
    return {
        i: pickups[s.rider_id]
        for i, s in enumerate(stops)
        if s.kind == DROPOFF and s.rider_id in pickups
    }


def _leg_matrix(start: Point, stops: list[Stop], provider: TravelTimeProvider) -> np.ndarray:
    """Pairwise minutes over {start} + stops; index 0 is the start."""
    points = [start] + [s.point for s in stops]
    n = len(points)
    mat = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                t = provider.travel_time(points[i], points[j])
                if not math.isfinite(t) or t < 0:
                    raise RoutingError(f"unreachable leg {points[i]} -> {points[j]}")
                mat[i, j] = t
    return mat


def _search_exhaustive(mat: np.ndarray, needs: dict[int, int], n: int) -> list[int]:
    """Minimum-duration precedence-feasible order; first-found (lexicographically
    smallest) sequence wins among ties."""
    best_seq: list[int] = []
    best = math.inf
    seq: list[int] = []
    visited = [False] * n

    def dfs(last: int, elapsed: float) -> None:
        nonlocal best, best_seq
        if elapsed >= best:
            return
        if len(seq) == n:
            best, best_seq = elapsed, list(seq)
            return
        for idx in range(n):
            if visited[idx]:
                continue
            pre = needs.get(idx)
            if pre is not None and not visited[pre]:
                continue
            visited[idx] = True
            seq.append(idx)
            dfs(idx + 1, elapsed + mat[last, idx + 1])
            seq.pop()
            visited[idx] = False

    dfs(0, 0.0)
    return best_seq


def _route_duration(mat: np.ndarray, order: list[int]) -> float:
    total, last = 0.0, 0
    for idx in order:
        total += mat[last, idx + 1]
        last = idx + 1
    return total


def _valid_positions(order: list[int], stop_idx: int, needs: dict[int, int]) -> list[int]:
    """Positions where ``stop_idx`` can be inserted without breaking precedence."""
    lo, hi = 0, len(order)
    pre = needs.get(stop_idx)
    if pre is not None and pre in order:
        lo = order.index(pre) + 1
    for drop, pick in needs.items():
        if pick == stop_idx and drop in order:
            hi = min(hi, order.index(drop))
    return list(range(lo, hi + 1)) if lo <= hi else []


def _search_farthest_insertion(mat: np.ndarray, needs: dict[int, int], n: int) -> list[int]:
    order: list[int] = []
    remaining = list(range(n))
    while remaining:
        anchor_pts = [0] + [i + 1 for i in order]
        far = max(
            remaining,
            key=lambda idx: (min(mat[a, idx + 1] for a in anchor_pts), -idx),
        )
        best_pos, best_dur = None, math.inf
        for pos in _valid_positions(order, far, needs):
            cand = order[:pos] + [far] + order[pos:]
            dur = _route_duration(mat, cand)
            if dur < best_dur:
                best_pos, best_dur = pos, dur
        if best_pos is None:
            raise RoutingError("no precedence-feasible insertion position")
        order.insert(best_pos, far)
        remaining.remove(far)
    return order


def plan_route(start: Point, stops: list[Stop], provider: TravelTimeProvider) -> RoutePlan:
    """Order the stops into a minimum-duration route honoring pickup-before-dropoff.

    Up to ``EXHAUSTIVE_MAX_STOPS`` waypoints the search is exact; beyond that a
    farthest-insertion heuristic is used.
    """
    if not stops:
        return RoutePlan(start=start, stops=())
    needs = _precedence_pairs(list(stops))
    mat = _leg_matrix(start, list(stops), provider)
    n = len(stops)
    if n <= EXHAUSTIVE_MAX_STOPS:
        order = _search_exhaustive(mat, needs, n)
    else:
        order = _search_farthest_insertion(mat, needs, n)
    planned = []
    elapsed, last = 0.0, 0
    for idx in order:
        elapsed += mat[last, idx + 1]
        planned.append(replace(stops[idx], eta_min=elapsed))
        last = idx + 1
    return RoutePlan(start=start, stops=tuple(planned))


@dataclass(frozen=True)
class InsertOutcome:
    plan: RoutePlan
    pickup_eta_min: float  # minutes until the new rider is picked up
    onboard_min: float  # new rider's pickup -> dropoff time
    existing_remaining: dict[int, float]  # rider id -> new remaining onboard minutes
    existing_delta: dict[int, float]  # rider id -> change vs the old plan


def _remaining_onboard(plan: RoutePlan, rider_id: int) -> float | None:
    drop = plan.remaining_eta(rider_id, DROPOFF)
    if drop is None:
        return None
    pick = plan.remaining_eta(rider_id, PICKUP)
    return drop - pick if pick is not None else drop


def insert_order(
    plan: RoutePlan,
    pickup: Stop,
    dropoff: Stop,
    provider: TravelTimeProvider,
) -> InsertOutcome:
    """Re-plan the route with the new rider's stops added and report per-passenger
    remaining-onboard changes."""
    if pickup.rider_id != dropoff.rider_id:
        raise RoutingError("pickup and dropoff must belong to the same rider")
    pending = [replace(s, eta_min=math.nan) for s in plan.pending_stops()]
    existing_ids = sorted({s.rider_id for s in pending})
    old_remaining = {rid: _remaining_onboard(plan, rid) for rid in existing_ids}
    new_plan = plan_route(plan.position(), pending + [pickup, dropoff], provider)
    new_remaining: dict[int, float] = {}
    delta: dict[int, float] = {}
    for rid in existing_ids:
        now = _remaining_onboard(new_plan, rid)
        if now is None or old_remaining[rid] is None:
            raise RoutingError(f"rider {rid} lost a stop during re-planning")
        new_remaining[rid] = now
        delta[rid] = now - old_remaining[rid]
    pick_eta = new_plan.remaining_eta(pickup.rider_id, PICKUP)
    drop_eta = new_plan.remaining_eta(pickup.rider_id, DROPOFF)
    assert pick_eta is not None and drop_eta is not None
    return InsertOutcome(
        plan=new_plan,
        pickup_eta_min=pick_eta,
        onboard_min=drop_eta - pick_eta,
        existing_remaining=new_remaining,
        existing_delta=delta,
    )


def advance(plan: RoutePlan, dt_min: float) -> tuple[RoutePlan, list[Stop]]:
    """Move ``dt_min`` of travel time along the route; stops whose ETA has been
    reached are emitted exactly once."""
    if dt_min <= 0:
        raise ValueError("dt must be positive")
    clock = plan.clock + dt_min
    emitted = plan.emitted
    events = []
    while emitted < len(plan.stops) and plan.stops[emitted].eta_min <= clock:
        events.append(plan.stops[emitted])
        emitted += 1
    return replace(plan, clock=clock, emitted=emitted), events
