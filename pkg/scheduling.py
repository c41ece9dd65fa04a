"""
Room scheduling: collision graphs, the occupancy ledger, the Greedy and Hybrid
schedulers, an exact full-problem search, and the failure harness.

Stays are half-open day ranges [start_day, start_day + duration). A room holds
at most one request per day; an accepted request holds rooms whose capacities
add up to at least its bed count.

The failure harness simulates 60 days per seed: the first 30 build the campus'
initial state, the last 30 are the test period. Each rejection in the test
period records the filling factor of the test window at that moment.
"""
import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import networkx as nx
import numpy as np
import pandas as pd

from demand_model import BookingRequest, CampusConfig, DemandModel, RoomSpec, generate_stream
from errors import ArgumentError, CapacityError
from qubo_ising import MvvcProblem
from seeding import rng_for
from solvers import exact_mvvc, repair_selection

logger = logging.getLogger(__name__)

METHODS = ("greedy", "hybrid1", "hybrid2", "exact")
WARMUP_DAYS = 30
TEST_DAYS = 30
EXHAUSTIVE_ROOM_LIMIT = 20
DEFAULT_NODE_BUDGET = 200_000


def build_collision_graph(requests) -> nx.Graph:
    """Vertices are request ids; an edge joins two requests sharing at least one day."""
    graph = nx.Graph()
    ordered = sorted(requests, key=lambda r: (r.start_day, r.id))
    for request in ordered:
        graph.add_node(request.id, duration=request.duration, beds=request.beds_requested)
    # sweep by start day: only requests still running can overlap the next one
    active = []
    for request in ordered:
        active = [other for other in active if other.end_day > request.start_day]
        for other in active:
            graph.add_edge(other.id, request.id)
        active.append(request)
    return graph


@dataclass(frozen=True)
class ValueParams:
    alpha: float = 2.0
    occupancy_exponent: float = 3.0
    hybrid2_alpha: float = 2.0
    # "expected": committed plus still-unassigned demand; "committed": assigned beds only
    occupancy_mode: str = "expected"

    def __post_init__(self):
        if self.alpha <= 0 or self.hybrid2_alpha <= 0:
            raise ArgumentError("alpha must be > 0")
        if self.occupancy_mode not in ("expected", "committed"):
            raise ArgumentError(f"Unknown occupancy mode {self.occupancy_mode!r}")


def hybrid_value(kind: int, room_capacity: int, unassigned: int, duration: int, occupancy=(),
                 params: ValueParams = ValueParams()) -> float:
    """
    Hybrid 1: min(R, U)^alpha * D.
    Hybrid 2: min(R, U)^2 * D * max(F_t)^3 over the request's days.

    With occupancy_mode="committed" F_t counts assigned beds only, so on an empty
    campus every Hybrid 2 value is 0 and hybrid_schedule rejects every request:
    one 4-bed team and one 4-bed room give rejected=[0]. The default "expected"
    mode adds still-unassigned demand to F_t and accepts that team.
    """
    if unassigned < 0:
        raise ArgumentError("unassigned must be >= 0")
    fill = min(room_capacity, unassigned)
    if kind == 1:
        return float(fill) ** params.alpha * duration
    if kind == 2:
        peak = float(np.max(occupancy)) if np.size(occupancy) else 0.0
        return float(fill) ** params.hybrid2_alpha * duration * peak ** params.occupancy_exponent
    raise ArgumentError(f"Unknown hybrid kind {kind}")


@dataclass(frozen=True)
class Feasibility:
    accept: bool
    reason: str = ""


class OccupancyState:
    """Per (room, day) ledger of which request holds the room, plus accepted flags."""

    def __init__(self, rooms, horizon_days: int):
        if horizon_days < 1:
            raise ArgumentError("horizon_days must be >= 1")
        self.rooms = {room.id: room for room in rooms}
        self.row = {room_id: i for i, room_id in enumerate(self.rooms)}
        self.horizon_days = horizon_days
        self.grid = np.full((len(self.rooms), horizon_days), -1, dtype=np.int64)
        self.requests = {}
        self.assignments = {}
        self.accepted = set()

    @property
    def total_beds(self) -> int:
        return sum(room.capacity for room in self.rooms.values())

    def _room_row(self, room_id) -> int:
        if room_id not in self.row:
            raise ArgumentError(f"Unknown room id {room_id}")
        return self.row[room_id]

    def _check_days(self, request: BookingRequest):
        if request.start_day < 0 or request.end_day > self.horizon_days:
            raise ArgumentError(
                f"Request {request.id} spans days [{request.start_day}, {request.end_day}) "
                f"outside the horizon of {self.horizon_days} days"
            )

    def is_free(self, room_id, request: BookingRequest) -> bool:
        self._check_days(request)
        cells = self.grid[self._room_row(room_id), request.start_day:request.end_day]
        return bool(np.all(cells == -1))

    def free_rooms(self, request: BookingRequest) -> list[RoomSpec]:
        self._check_days(request)
        window = self.grid[:, request.start_day:request.end_day]
        free = np.all(window == -1, axis=1)
        return [room for room_id, room in self.rooms.items() if free[self.row[room_id]]]

    def assigned_capacity(self, request_id) -> int:
        return sum(self.rooms[r].capacity for r in self.assignments.get(request_id, ()))

    def assign(self, request: BookingRequest, room_ids):
        """Add rooms to a request's holding; every room must be free on all its days."""
        for room_id in room_ids:
            if not self.is_free(room_id, request):
                raise ArgumentError(f"Room {room_id} is not free for request {request.id}")
        self.requests[request.id] = request
        held = self.assignments.setdefault(request.id, [])
        for room_id in room_ids:
            self.grid[self.row[room_id], request.start_day:request.end_day] = request.id
            held.append(room_id)

    def accept(self, request_id):
        request = self.requests.get(request_id)
        if request is None or self.assigned_capacity(request_id) < request.beds_requested:
            raise ArgumentError(f"Request {request_id} does not hold enough beds to be accepted")
        self.accepted.add(request_id)

    def release(self, request_id):
        for room_id in self.assignments.pop(request_id, []):
            row = self.grid[self.row[room_id]]
            row[row == request_id] = -1
        self.accepted.discard(request_id)
        self.requests.pop(request_id, None)

    def committed_beds(self, day: int) -> int:
        """Beds in use on `day`, counting each request at most at its bed count."""
        total = 0
        for request_id, rooms in self.assignments.items():
            request = self.requests[request_id]
            if request.start_day <= day < request.end_day:
                total += min(request.beds_requested, sum(self.rooms[r].capacity for r in rooms))
        return total

    def occupancy_factor(self, day: int, pending_beds: float = 0.0) -> float:
        return min(1.0, (self.committed_beds(day) + pending_beds) / self.total_beds)

    def filling_factor(self, start: int = 0, end: int | None = None) -> float:
        """Occupied bed-days of accepted requests within [start, end) over total bed-days."""
        end = self.horizon_days if end is None else end
        if end <= start:
            raise ArgumentError("Empty filling-factor window")
        occupied = 0
        for request_id in self.accepted:
            request = self.requests[request_id]
            overlap = min(end, request.end_day) - max(start, request.start_day)
            if overlap > 0:
                occupied += request.beds_requested * overlap
        return occupied / (self.total_beds * (end - start))

    def snapshot(self):
        return (
            self.grid.copy(),
            dict(self.requests),
            {k: list(v) for k, v in self.assignments.items()},
            set(self.accepted),
        )

    def restore(self, snap):
        grid, requests, assignments, accepted = snap
        self.grid = grid.copy()
        self.requests = dict(requests)
        self.assignments = {k: list(v) for k, v in assignments.items()}
        self.accepted = set(accepted)

    def violations(self) -> list[str]:
        """Direct scan for bed shortfalls and double-booked room-days."""
        problems = []
        for request_id in sorted(self.accepted):
            request = self.requests[request_id]
            if self.assigned_capacity(request_id) < request.beds_requested:
                problems.append(f"request {request_id}: capacity below {request.beds_requested} beds")
        seen = {}
        for request_id, rooms in self.assignments.items():
            request = self.requests[request_id]
            for room_id in rooms:
                for day in request.days:
                    holder = seen.setdefault((room_id, day), request_id)
                    if holder != request_id:
                        problems.append(f"room {room_id} day {day}: requests {holder} and {request_id}")
                    if self.grid[self.row[room_id], day] != request_id:
                        problems.append(f"room {room_id} day {day}: ledger does not show request {request_id}")
        return problems


def check_feasibility(state: OccupancyState, request: BookingRequest, room_ids) -> Feasibility:
    """Would assigning `room_ids` to `request` satisfy both the bed count and the no-overlap rule?"""
    room_ids = list(room_ids)
    for room_id in room_ids:
        if room_id not in state.rooms:
            raise ArgumentError(f"Unknown room id {room_id}")
    for room_id in room_ids:
        if not state.is_free(room_id, request):
            return Feasibility(False, f"conflict: room {room_id} is booked during the stay")
    capacity = sum(state.rooms[r].capacity for r in room_ids)
    if capacity < request.beds_requested:
        return Feasibility(False, f"capacity: {capacity} beds for {request.beds_requested} requested")
    return Feasibility(True)


def _by_capacity_class(rooms):
    classes = {}
    for room in sorted(rooms, key=lambda r: r.id):
        classes.setdefault(room.capacity, []).append(room)
    return classes


def greedy_rooms(beds: int, free_rooms) -> tuple | None:
    """
    Cheapest room set for `beds`: least waste, then fewest rooms, then lowest ids.

    Exhaustive over per-capacity counts up to EXHAUSTIVE_ROOM_LIMIT free rooms,
    first-fit-decreasing beyond that.
    """
    free_rooms = list(free_rooms)
    if sum(room.capacity for room in free_rooms) < beds:
        return None
    if len(free_rooms) > EXHAUSTIVE_ROOM_LIMIT:
        return _first_fit_decreasing(beds, free_rooms)
    classes = _by_capacity_class(free_rooms)
    capacities = sorted(classes)
    best, best_key = None, None
    for counts in itertools.product(*(range(len(classes[c]) + 1) for c in capacities)):
        total = sum(c * k for c, k in zip(capacities, counts))
        if total < beds:
            continue
        chosen = tuple(sorted(room.id for c, k in zip(capacities, counts) for room in classes[c][:k]))
        key = (total - beds, len(chosen), chosen)
        if best_key is None or key < best_key:
            best, best_key = chosen, key
    return best


def _first_fit_decreasing(beds, free_rooms):
    remaining = beds
    chosen = []
    unused = sorted(free_rooms, key=lambda r: (-r.capacity, r.id))
    for room in list(unused):
        if room.capacity <= remaining:
            chosen.append(room.id)
            remaining -= room.capacity
            unused.remove(room)
        if remaining == 0:
            break
    while remaining > 0:
        fitting = [room for room in unused if room.capacity >= remaining]
        room = min(fitting, key=lambda r: (r.capacity, r.id)) if fitting else unused[0]
        chosen.append(room.id)
        remaining -= room.capacity
        unused.remove(room)
    return tuple(sorted(chosen))


def greedy_schedule(state: OccupancyState, request: BookingRequest, rooms=None) -> tuple | None:
    """Assign `request` to its cheapest free room set, or reject it (None) leaving state untouched."""
    free = state.free_rooms(request)
    if rooms is not None:
        allowed = {room.id for room in rooms}
        free = [room for room in free if room.id in allowed]
    chosen = greedy_rooms(request.beds_requested, free)
    if chosen is None:
        return None
    state.assign(request, chosen)
    state.accept(request.id)
    return chosen


@dataclass
class HybridResult:
    accepted: list = field(default_factory=list)
    rejected: list = field(default_factory=list)
    rounds: int = 0


def _occupancy_over(state, request, pending, unassigned, params):
    factors = []
    for day in request.days:
        expected = 0.0
        if params.occupancy_mode == "expected":
            expected = sum(unassigned[p.id] for p in pending if p.start_day <= day < p.end_day)
        factors.append(state.occupancy_factor(day, expected))
    return factors


def hybrid_schedule(state: OccupancyState, pending, rooms=None, mvvc_solver=exact_mvvc, kind: int = 1,
                    params: ValueParams = ValueParams()) -> HybridResult:
    """
    Fill rooms one at a time, largest first.

    For each room the pending teams that still need beds and find the room free on
    all their days form an MVVC instance over their collision graph; the selected
    teams each move min(R, U_i) members into the room. Passes over the rooms repeat
    until a full pass assigns nothing. Teams left short of beds are rolled back.
    """
    pending = sorted(pending, key=lambda r: r.id)
    by_id = {request.id: request for request in pending}
    rooms = sorted(rooms if rooms is not None else state.rooms.values(), key=lambda r: (-r.capacity, r.id))
    unassigned = {request.id: request.beds_requested for request in pending}
    result = HybridResult()

    progress = True
    while progress:
        progress = False
        result.rounds += 1
        for room in rooms:
            candidates = [r for r in pending if unassigned[r.id] > 0 and state.is_free(room.id, r)]
            if not candidates:
                continue
            values = {}
            for request in candidates:
                occupancy = _occupancy_over(state, request, pending, unassigned, params) if kind == 2 else ()
                values[request.id] = hybrid_value(
                    kind, room.capacity, unassigned[request.id], request.duration, occupancy, params
                )
            if all(v <= 0 for v in values.values()):
                continue
            problem = MvvcProblem(build_collision_graph(candidates), values)
            selected = repair_selection(problem, mvvc_solver(problem))
            for request_id in sorted(selected):
                if values[request_id] <= 0:
                    continue
                state.assign(by_id[request_id], [room.id])
                unassigned[request_id] -= min(room.capacity, unassigned[request_id])
                progress = True
            logger.debug("room %s: selected %s", room.id, sorted(selected))

    for request in pending:
        if unassigned[request.id] == 0:
            state.accept(request.id)
            result.accepted.append(request.id)
        else:
            state.release(request.id)
            result.rejected.append(request.id)
    return result


def _minimal_count_vectors(beds, sizes) -> list[tuple]:
    """
    Room counts per class, given (capacity, available) per class, that cover `beds`
    and lose coverage if any one room is dropped; least waste first.
    """
    options = []

    def extend(k, counts, total):
        if total >= beds or k == len(sizes):
            if total >= beds:
                smallest = min(sizes[i][0] for i, n in enumerate(counts) if n)
                if total - smallest < beds:
                    padded = tuple(counts) + (0,) * (len(sizes) - len(counts))
                    options.append((total - beds, sum(counts), padded))
            return
        capacity, available = sizes[k]
        for n in range(available + 1):
            extend(k + 1, counts + [n], total + n * capacity)
            if total + n * capacity >= beds:
                break

    extend(0, [], 0)
    options.sort()
    return [counts for _, _, counts in options]


def exact_room_assignment(state: OccupancyState, requests, rooms=None,
                          node_budget: int = DEFAULT_NODE_BUDGET) -> dict | None:
    """
    Room sets that accept every request in `requests` on top of `state`, or None.

    Depth-first over requests by start day. Rooms with equal capacity and equal
    bookings from the request's start onward are interchangeable, so only counts per
    such class are branched on. A branch dies when some day's remaining demand
    exceeds its free beds. Raises CapacityError after `node_budget` nodes.
    """
    order = sorted(requests, key=lambda r: (r.start_day, -r.beds_requested, r.id))
    if not order:
        return {}
    allowed = {room.id for room in (rooms if rooms is not None else state.rooms.values())}
    work = OccupancyState(state.rooms.values(), state.horizon_days)
    work.restore(state.snapshot())
    room_capacity = np.array([room.capacity for room in work.rooms.values()])
    allowed_mask = np.array([room_id in allowed for room_id in work.rooms])

    demand = np.zeros(work.horizon_days, dtype=np.int64)
    for request in order:
        work._check_days(request)
        demand[request.start_day:request.end_day] += request.beds_requested

    nodes = [0]
    chosen = {}

    def free_beds():
        free = (work.grid == -1) & allowed_mask[:, None]
        return (free * room_capacity[:, None]).sum(axis=0)

    def search(k):
        nodes[0] += 1
        if nodes[0] > node_budget:
            raise CapacityError(f"exact_room_assignment exceeded its budget of {node_budget} nodes")
        if np.any(demand > free_beds()):
            return False
        if k == len(order):
            return True
        request = order[k]
        classes = {}
        for room in work.free_rooms(request):
            if room.id not in allowed:
                continue
            signature = (room.capacity, work.grid[work.row[room.id], request.start_day:].tobytes())
            classes.setdefault(signature, []).append(room)
        if not classes:
            return False
        groups = sorted(
            (sorted(rooms_in_class, key=lambda r: r.id) for rooms_in_class in classes.values()),
            key=lambda g: (-g[0].capacity, g[0].id),
        )
        sizes = [(g[0].capacity, len(g)) for g in groups]
        for counts in _minimal_count_vectors(request.beds_requested, sizes):
            picked = [room.id for g, n in zip(groups, counts) for room in g[:n]]
            work.assign(request, picked)
            demand[request.start_day:request.end_day] -= request.beds_requested
            chosen[request.id] = tuple(sorted(picked))
            if search(k + 1):
                return True
            demand[request.start_day:request.end_day] += request.beds_requested
            work.release(request.id)
            del chosen[request.id]
        return False

    found = search(0)
    logger.debug("exact_room_assignment: %d nodes, found=%s", nodes[0], found)
    return dict(chosen) if found else None


def exact_schedule(state: OccupancyState, requests, rooms=None, node_budget: int = DEFAULT_NODE_BUDGET) -> bool:
    """Apply an exact assignment of every request in `requests`; False (state untouched) if none exists."""
    assignment = exact_room_assignment(state, requests, rooms, node_budget)
    if assignment is None:
        return False
    by_id = {request.id: request for request in requests}
    for request_id, room_ids in assignment.items():
        state.assign(by_id[request_id], room_ids)
        state.accept(request_id)
    return True


@dataclass
class SeedRun:
    seed: int
    filling_factors: list
    accepted: int
    rejected: int
    budget_exhausted: int = 0


class _Simulation:
    """One method over one stream: frozen base bookings plus a re-plannable set."""

    def __init__(self, method, campus, horizon, params, mvvc_solver, node_budget):
        self.method = method
        self.state = OccupancyState(campus.rooms, horizon)
        self.params = params
        self.mvvc_solver = mvvc_solver
        self.node_budget = node_budget
        self.base = self.state.snapshot()
        self.planned = []
        self.budget_exhausted = 0

    def freeze(self):
        self.base = self.state.snapshot()
        self.planned = []

    def offer(self, request) -> bool:
        if self.method == "greedy":
            return greedy_schedule(self.state, request) is not None
        previous = self.state.snapshot()
        self.state.restore(self.base)
        batch = self.planned + [request]
        if self.method == "exact":
            try:
                ok = exact_schedule(self.state, batch, node_budget=self.node_budget)
            except CapacityError:
                self.budget_exhausted += 1
                ok = False
        else:
            kind = 1 if self.method == "hybrid1" else 2
            ok = not hybrid_schedule(self.state, batch, mvvc_solver=self.mvvc_solver, kind=kind,
                                     params=self.params).rejected
        if ok:
            self.planned = batch
        else:
            self.state.restore(previous)
        return ok


def schedule_stream(method: str, stream, campus: CampusConfig, params: ValueParams = ValueParams(),
                    mvvc_solver=exact_mvvc, node_budget: int = DEFAULT_NODE_BUDGET) -> tuple[OccupancyState, dict]:
    """Offer every request in arrival order; returns the final ledger and request id -> accepted."""
    if method not in METHODS:
        raise ArgumentError(f"Unknown method {method!r}; expected one of {', '.join(METHODS)}")
    horizon = max((r.end_day for r in stream), default=1)
    sim = _Simulation(method, campus, horizon, params, mvvc_solver, node_budget)
    decisions = {request.id: sim.offer(request) for request in stream}
    return sim.state, decisions


def simulate_stream(method: str, stream, campus: CampusConfig, warmup_method: str | None = None,
                    params: ValueParams = ValueParams(), mvvc_solver=exact_mvvc,
                    node_budget: int = DEFAULT_NODE_BUDGET, seed: int = 0) -> SeedRun:
    """Warm up on days [0, 30) then record the test-window filling factor at every test-period rejection."""
    if method not in METHODS:
        raise ArgumentError(f"Unknown method {method!r}; expected one of {', '.join(METHODS)}")
    horizon = WARMUP_DAYS + TEST_DAYS
    warmup = _Simulation(warmup_method or method, campus, horizon, params, mvvc_solver, node_budget)
    for request in (r for r in stream if r.start_day < WARMUP_DAYS):
        warmup.offer(request)

    sim = _Simulation(method, campus, horizon, params, mvvc_solver, node_budget)
    sim.state.restore(warmup.state.snapshot())
    sim.freeze()
    factors, accepted = [], 0
    for request in (r for r in stream if WARMUP_DAYS <= r.start_day < horizon):
        if sim.offer(request):
            accepted += 1
        else:
            factors.append(sim.state.filling_factor(WARMUP_DAYS, horizon))
    return SeedRun(seed, factors, accepted, len(factors), sim.budget_exhausted + warmup.budget_exhausted)


def _run_seed(args) -> SeedRun:
    method, seed, campus, demand, warmup_method, params, node_budget = args
    stream = generate_stream(demand, WARMUP_DAYS + TEST_DAYS, rng_for(seed, "stream"), scale=campus.scaling_factor)
    return simulate_stream(method, stream, campus, warmup_method, params, exact_mvvc, node_budget, seed)


def failure_curve(runs) -> pd.DataFrame:
    """Mean filling factor per rejection index across seeds (index 1 is the first failure)."""
    rows = [
        {"seed": run.seed, "rejection_index": k, "filling_factor": ff}
        for run in runs
        for k, ff in enumerate(run.filling_factors, start=1)
    ]
    if not rows:
        return pd.DataFrame(columns=["rejection_index", "mean_filling_factor", "stderr", "n"])
    frame = pd.DataFrame(rows)
    grouped = frame.groupby("rejection_index")["filling_factor"]
    curve = grouped.agg(mean_filling_factor="mean", std="std", n="count").reset_index()
    curve["stderr"] = (curve["std"] / np.sqrt(curve["n"])).fillna(0.0)
    return curve[["rejection_index", "mean_filling_factor", "stderr", "n"]]


def run_failure_harness(method: str, seeds, campus: CampusConfig, demand: DemandModel = DemandModel(),
                        warmup: str = "same", params: ValueParams = ValueParams(), workers: int = 1,
                        node_budget: int = DEFAULT_NODE_BUDGET) -> tuple[pd.DataFrame, list[SeedRun]]:
    """
    Failure curve of `method` averaged over reservation streams, one per seed.

    Every method sees the same stream for a given seed. `warmup="greedy"` builds the
    initial state with Greedy for all methods. Seeds run in worker processes and
    come back in seed order.
    """
    if method not in METHODS:
        raise ArgumentError(f"Unknown method {method!r}; expected one of {', '.join(METHODS)}")
    if warmup not in ("same", "greedy"):
        raise ArgumentError("warmup must be 'same' or 'greedy'")
    seeds = list(range(seeds)) if isinstance(seeds, int) else list(seeds)
    warmup_method = method if warmup == "same" else "greedy"
    jobs = [(method, seed, campus, demand, warmup_method, params, node_budget) for seed in seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_run_seed, jobs))
    else:
        runs = [_run_seed(job) for job in jobs]
    for run in runs:
        logger.info("%s seed %d: %d accepted, %d rejected", method, run.seed, run.accepted, run.rejected)
    return failure_curve(runs), runs


def first_failure_mean(runs) -> float:
    """Mean filling factor at the first rejection over seeds that had one."""
    firsts = [run.filling_factors[0] for run in runs if run.filling_factors]
    return float(np.mean(firsts)) if firsts else math.nan
