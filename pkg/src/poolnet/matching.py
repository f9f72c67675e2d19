"""Vehicle-rider bipartite matching with eps-greedy / reward-guided edge weights.

Each feasible pair gets a candidate action chosen per-edge: the argmax of the
Q-network with probability 1-eps, otherwise a random action (optionally
filtered by the Guider's reward estimate) carrying a large sentinel weight.
The assignment itself is a maximum-weight bipartite matching with optional
participation; a brute-force reference solver ships for verification.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import neural
from .core import DOOR_TO_DOOR, Order, VehicleState, encode_state
from .errors import ContractError
from .geo import Point, ZoneGrid, euclidean_km
from .routing import DROPOFF, PICKUP, RoutePlan, Stop, TravelTimeProvider, insert_order
from .transit import TransitGraph, station_to_dest_minutes

DEFAULT_Q_BAR = 1e6


@dataclass(frozen=True)
class MatchContext:
    """Static facts the edge builder needs about the world."""

    grid: ZoneGrid
    horizon_min: float
    station_zones: frozenset[int]
    door_only: bool = False  # pooling-only service mode: mask every action but 0

    @property
    def n_actions(self) -> int:
        return self.grid.n_zones + 1

    def base_action_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_actions, dtype=bool)
        mask[DOOR_TO_DOOR] = True
        if not self.door_only:
            for z in self.station_zones:
                if 1 <= z <= self.grid.n_zones:
                    mask[z] = True
        return mask


@dataclass(frozen=True)
class MatchVehicle:
    vid: int
    state: VehicleState  # candidate O/D fields hold the dummy zone
    pos: Point


@dataclass(frozen=True)
class CandidateEdge:
    vehicle_id: int
    rider_id: int
    weight: float
    action: int
    explored: bool
    q_value: float  # Q-network's estimate of the chosen action
    feasible: bool = True


@dataclass(frozen=True)
class MatchPair:
    vehicle_id: int
    rider_id: int
    action: int
    weight: float
    explored: bool
    q_value: float


@dataclass(frozen=True)
class MatchResult:
    pairs: tuple[MatchPair, ...]
    total_weight: float


class QNetScorer:
    """Scores all actions of a batch of encoded states with the Q-network."""

    def __init__(self, net: neural.Mlp):
        self.net = net

    def scores(self, states: np.ndarray) -> np.ndarray:
        return neural.forward_batch(self.net, states).astype(np.float64)


class GuiderScorer:
    """Scores actions by the estimated instant reward (myopic greedy mode)."""

    def __init__(self, guider: neural.Mlp, n_actions: int, zone_scale: float):
        self.guider = guider
        self.n_actions = n_actions
        self.zone_scale = zone_scale

    def scores(self, states: np.ndarray) -> np.ndarray:
        b = states.shape[0]
        actions = np.arange(self.n_actions, dtype=np.float64)
        tiled = np.repeat(states, self.n_actions, axis=0)
        acts = np.tile(actions, b)
        x = guider_inputs(tiled, acts, self.zone_scale)
        return neural.forward_batch(self.guider, x)[:, 0].reshape(b, self.n_actions).astype(np.float64)


def guider_inputs(states: np.ndarray, actions: np.ndarray, zone_scale: float) -> np.ndarray:
    """Guider feature rows: the encoded state with the normalized action appended."""
    return np.concatenate(
        [states, (np.asarray(actions, dtype=np.float64) / zone_scale)[:, None]], axis=1
    )


def guider_action_values(
    guider: neural.Mlp, state_vec: np.ndarray, actions: np.ndarray, zone_scale: float
) -> np.ndarray:
    x = guider_inputs(np.tile(state_vec, (len(actions), 1)), actions, zone_scale)
    return neural.forward_batch(guider, x)[:, 0].astype(np.float64)


def edge_draw(seed: int, round_idx: int, vehicle_id: int, rider_id: int) -> tuple[float, int]:
    """Deterministic per-edge randomness keyed by (round, vehicle, rider)."""
    words = np.random.SeedSequence((seed, round_idx, vehicle_id, rider_id)).generate_state(2)
    return float(words[0]) / 2.0**32, int(words[1])


def build_edges(
    vehicles: list[MatchVehicle],
    riders: list[Order],
    scorer,
    guider: neural.Mlp | None,
    epsilon: float,
    r_hat: float,
    q_bar: float,
    r_match_km: float,
    ctx: MatchContext,
    seed: int = 0,
    round_idx: int = 0,
) -> list[CandidateEdge]:
    """Candidate edges for every feasible (vehicle, rider) pair.

    Exploitation edges carry the best valid Q-value and its argmax action;
    exploration edges carry the sentinel weight ``q_bar`` and a random action,
    drawn uniformly from the Guider-filtered set when a guider is supplied.
    """
    if not vehicles or not riders:
        return []
    grid = ctx.grid
    zscale = float(grid.dummy_zone)
    pairs = [
        (i, j)
        for i, veh in enumerate(vehicles)
        for j, rider in enumerate(riders)
        if euclidean_km(veh.pos, rider.origin) <= r_match_km
    ]
    if not pairs:
        return []
    base_vecs = np.stack([encode_state(v.state, grid, ctx.horizon_min) for v in vehicles])
    vi = np.array([p[0] for p in pairs])
    rj = np.array([p[1] for p in pairs])
    states = base_vecs[vi].copy()
    states[:, 12] = np.array([riders[j].origin_zone for j in rj]) / zscale
    states[:, 13] = np.array([riders[j].dest_zone for j in rj]) / zscale

    q = scorer.scores(states)
    if q.shape != (len(pairs), ctx.n_actions):
        raise ContractError(f"scorer returned shape {q.shape}")
    base_mask = ctx.base_action_mask()
    masks = np.tile(base_mask, (len(pairs), 1))
    for k, j in enumerate(rj):
        if riders[j].pooling_only:
            masks[k, :] = False
            masks[k, DOOR_TO_DOOR] = True
    q_masked = np.where(masks, q, -np.inf)
    argmax_actions = np.argmax(q_masked, axis=1)
    argmax_weights = q_masked[np.arange(len(pairs)), argmax_actions]

    edges: list[CandidateEdge] = []
    for k, (i, j) in enumerate(pairs):
        veh, rider = vehicles[i], riders[j]
        if not np.isfinite(argmax_weights[k]):
            continue  # no valid action for this pair
        coin, pick = edge_draw(seed, round_idx, veh.vid, rider.oid)
        action, weight, explored = int(argmax_actions[k]), float(argmax_weights[k]), False
        if coin < epsilon:
            valid = np.flatnonzero(masks[k])
            if guider is None:
                action, weight, explored = int(valid[pick % valid.size]), q_bar, True
            else:
                estimates = guider_action_values(guider, states[k], valid, zscale)
                allowed = valid[estimates > r_hat]
                if allowed.size:
                    action, weight, explored = int(allowed[pick % allowed.size]), q_bar, True
        edges.append(
            CandidateEdge(
                vehicle_id=veh.vid,
                rider_id=rider.oid,
                weight=weight,
                action=action,
                explored=explored,
                q_value=float(q[k, action]),
            )
        )
    return edges


def solve_assignment(edges: list[CandidateEdge]) -> MatchResult:
    """Maximum-total-weight matching with each vehicle/rider used at most once.

    Matching is optional (the degree constraints are inequalities), so edges
    with non-positive weight are never part of the returned solution.
    """
    if not edges:
        return MatchResult(pairs=(), total_weight=0.0)
    for e in edges:
        if not np.isfinite(e.weight):
            raise ContractError("edge weights must be finite")
    vids = sorted({e.vehicle_id for e in edges})
    rids = sorted({e.rider_id for e in edges})
    vidx = {v: i for i, v in enumerate(vids)}
    ridx = {r: j for j, r in enumerate(rids)}
    n, m = len(vids), len(rids)
    size = n + m
    cost = np.zeros((size, size))
    cost[:n, :m] = np.inf  # forbidden unless an edge exists
    best_edge: dict[tuple[int, int], CandidateEdge] = {}
    for e in edges:
        key = (vidx[e.vehicle_id], ridx[e.rider_id])
        if key not in best_edge or e.weight > best_edge[key].weight:
            best_edge[key] = e
            cost[key] = -e.weight
    rows, cols = linear_sum_assignment(cost)
    pairs = []
    total = 0.0
    for i, j in zip(rows, cols):
        edge = best_edge.get((i, j))
        if i < n and j < m and edge is not None and edge.weight > 0:
            pairs.append(
                MatchPair(
                    vehicle_id=edge.vehicle_id,
                    rider_id=edge.rider_id,
                    action=edge.action,
                    weight=edge.weight,
                    explored=edge.explored,
                    q_value=edge.q_value,
                )
            )
            total += edge.weight
    pairs.sort(key=lambda p: p.vehicle_id)
    return MatchResult(pairs=tuple(pairs), total_weight=total)


def brute_force_assignment(edges: list[CandidateEdge]) -> MatchResult:
    """Exact reference solver: enumerate all partial matchings (small instances)."""
    vids = sorted({e.vehicle_id for e in edges})
    rids = sorted({e.rider_id for e in edges})
    if len(rids) > 20:
        raise ContractError("brute-force solver is limited to 20 riders")
    ridx = {r: j for j, r in enumerate(rids)}
    by_vehicle: dict[int, list[CandidateEdge]] = {v: [] for v in vids}
    for e in edges:
        by_vehicle[e.vehicle_id].append(e)

    memo: dict[tuple[int, int], tuple[float, tuple[CandidateEdge, ...]]] = {}

    def best(i: int, used: int) -> tuple[float, tuple[CandidateEdge, ...]]:
        if i == len(vids):
            return 0.0, ()
        key = (i, used)
        if key in memo:
            return memo[key]
        total, picks = best(i + 1, used)  # leave vehicle i unmatched
        for e in by_vehicle[vids[i]]:
            bit = 1 << ridx[e.rider_id]
            if used & bit:
                continue
            sub_total, sub_picks = best(i + 1, used | bit)
            if e.weight + sub_total > total:
                total, picks = e.weight + sub_total, (e,) + sub_picks
        memo[key] = (total, picks)
        return memo[key]

    _, picks = best(0, 0)
    ordered = sorted(picks, key=lambda e: e.vehicle_id)
    pairs = tuple(
        MatchPair(e.vehicle_id, e.rider_id, e.action, e.weight, e.explored, e.q_value)
        for e in ordered
    )
    # canonical vehicle-ordered summation, matching solve_assignment's arithmetic
    total = 0.0
    for e in ordered:
        total += e.weight
    return MatchResult(pairs=pairs, total_weight=total)


@dataclass(frozen=True)
class InsertionVehicle:
    vid: int
    plan: RoutePlan
    pos: Point


def sequential_insertion_match(
    vehicles: list[InsertionVehicle],
    riders: list[Order],
    provider: TravelTimeProvider,
    tgraph: TransitGraph,
    r_match_km: float,
    deadline_min: float = 15.0,
    weight_offset: float = DEFAULT_Q_BAR,
    max_riders_per_vehicle: int = 10,
) -> MatchResult:
    """Myopic one-to-one insertion baseline.

    Per feasible pair, the drop-off option (door-to-door, or any transit station
    keeping the rider within ``deadline_min`` extra trip time) with the smallest
    added route duration is chosen; the assignment then minimizes total added
    duration. Weights are ``weight_offset`` minus the insertion cost so that
    serving a rider always beats leaving her unmatched.

    Station options failing the window on a direct-drive lower bound are pruned
    before any re-planning, and each vehicle only prices its
    ``max_riders_per_vehicle`` nearest waiting riders.
    """
    # deadline-feasible drop options per rider, shared by all vehicles
    rider_options: dict[int, tuple[float, list[tuple[int, Point, float]]]] = {}
    for rider in riders:
        direct = provider.travel_time(rider.origin, rider.dest)
        cands: list[tuple[int, Point, float]] = [(DOOR_TO_DOOR, rider.dest, 0.0)]
        if not rider.pooling_only:
            for sid in sorted(tgraph.stations):
                st = tgraph.stations[sid]
                transit = station_to_dest_minutes(tgraph, sid, rider.dest)
                lower_bound = provider.travel_time(rider.origin, st.point) + transit
                if lower_bound <= direct + deadline_min:
                    cands.append((st.zone, st.point, transit))
        rider_options[rider.oid] = (direct, cands)

    edges: list[CandidateEdge] = []
    for veh in vehicles:
        in_radius = sorted(
            (r for r in riders if euclidean_km(veh.pos, r.origin) <= r_match_km),
            key=lambda r: (euclidean_km(veh.pos, r.origin), r.oid),
        )[:max_riders_per_vehicle]
        old_duration = veh.plan.remaining_min
        for rider in in_radius:
            direct, cands = rider_options[rider.oid]
            options: list[tuple[float, int]] = []
            for action, drop_point, transit in cands:
                pickup = Stop(rider.origin, PICKUP, rider.oid)
                dropoff = Stop(drop_point, DROPOFF, rider.oid)
                outcome = insert_order(veh.plan, pickup, dropoff, provider)
                if action != DOOR_TO_DOOR and (
                    outcome.onboard_min + transit > direct + deadline_min
                ):
                    continue
                cost = outcome.plan.duration_min - old_duration
                options.append((cost, action))
            if not options:
                continue
            cost, action = min(options)
            edges.append(
                CandidateEdge(
                    vehicle_id=veh.vid,
                    rider_id=rider.oid,
                    weight=weight_offset - cost,
                    action=action,
                    explored=False,
                    q_value=float("nan"),
                )
            )
    return solve_assignment(edges)
