"""Shared fixtures."""
import networkx as nx
import numpy as np
import pytest

from demand_model import BookingRequest, RoomSpec, build_campus, DEFAULT_ROOM_MIX
from qubo_ising import MvvcProblem


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def campus_s1():
    return build_campus(DEFAULT_ROOM_MIX, 1)


@pytest.fixture
def toy_rooms() -> list[RoomSpec]:
    """Three rooms of 8, 4 and 2 beds."""
    return [RoomSpec(0, 8), RoomSpec(1, 4), RoomSpec(2, 2)]


@pytest.fixture
def toy_requests() -> list[BookingRequest]:
    """Six teams that tile the toy rooms exactly over six days."""
    return [
        BookingRequest(0, 8, 0, 3),
        BookingRequest(1, 8, 3, 3),
        BookingRequest(2, 4, 0, 2),
        BookingRequest(3, 4, 2, 4),
        BookingRequest(4, 2, 0, 3),
        BookingRequest(5, 2, 3, 3),
    ]


@pytest.fixture
def triangle() -> MvvcProblem:
    return MvvcProblem(nx.complete_graph(3), {0: 1.0, 1: 1.0, 2: 1.0})


def random_graph(n: int, p: float, seed: int) -> nx.Graph:
    return nx.gnp_random_graph(n, p, seed=seed)


def independent_sets(graph: nx.Graph) -> list[frozenset]:
    """Every independent set, the empty one included."""
    return [frozenset()] + [frozenset(c) for c in nx.enumerate_all_cliques(nx.complement(graph))]


def best_independent_sets(problem: MvvcProblem, tol: float = 1e-9) -> set:
    sets = independent_sets(problem.graph)
    best = max(problem.value_of(s) for s in sets)
    return {s for s in sets if problem.value_of(s) >= best - tol}
