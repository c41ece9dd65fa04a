"""
Reference solvers and the classical annealer stand-in.

  - exact_solve: every global minimum of a QUBO / Ising model (enumeration, then
    branch and bound for larger models)
  - sa_sample: simulated annealing with a geometric beta schedule; `sweeps` plays the
    role of annealing time
  - steepest_descent: single-flip post-processing of samples
  - quantile_energy: the q-quantile of a sample's energy distribution
  - exact_mvvc: maximum-value vertex cover (independent set) by branch and bound

Samples CSV columns: energy,count,bitstring
"""
import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import networkx as nx
import numpy as np

from errors import ArgumentError, CapacityError, ConfigurationError
from qubo_ising import (
    BINARY,
    SPIN,
    IsingModel,
    MvvcProblem,
    QuadraticModel,
    QuboModel,
    bits_to_spins,
    decode_auxiliary,
    mvvc_chain,
    qubo_to_ising,
    spins_to_bits,
)
from seeding import seed_sequence

logger = logging.getLogger(__name__)

ENUMERATION_LIMIT = 24
BRANCH_AND_BOUND_LIMIT = 60
ENERGY_TOL = 1e-9
SAMPLES_COLUMNS = ["energy", "count", "bitstring"]


@dataclass
class SolverConfig:
    num_samples: int = 1000
    sweeps: int = 1000
    beta_initial: float = 0.1
    beta_final: float = 10.0
    seed: int = 0
    workers: int = 1
    chunk_size: int = 250

    def __post_init__(self):
        if self.sweeps < 1:
            raise ConfigurationError("sweeps must be >= 1")
        if self.num_samples < 1:
            raise ConfigurationError("num_samples must be >= 1")
        if not (0 < self.beta_initial <= self.beta_final):
            raise ConfigurationError("Need 0 < beta_initial <= beta_final")
        if self.chunk_size < 1 or self.workers < 1:
            raise ConfigurationError("chunk_size and workers must be >= 1")

    def betas(self) -> np.ndarray:
        return np.geomspace(self.beta_initial, self.beta_final, self.sweeps)


@dataclass
class SampleSet:
    """Distinct configurations with their model energies and occurrence counts."""

    samples: np.ndarray
    energies: np.ndarray
    counts: np.ndarray
    vartype: str
    model: QuadraticModel | None = None

    @classmethod
    def from_samples(cls, model: QuadraticModel, samples, counts=None):
        samples = np.asarray(samples, dtype=np.int8)
        if samples.ndim == 1:
            samples = samples.reshape(1, -1)
        if counts is None:
            counts = np.ones(samples.shape[0], dtype=np.int64)
        if samples.shape[0] == 0:
            return cls(samples, np.zeros(0), np.zeros(0, dtype=np.int64), model.vartype, model)
        unique, inverse = np.unique(samples, axis=0, return_inverse=True)
        merged = np.bincount(inverse.ravel(), weights=np.asarray(counts, dtype=float)).astype(np.int64)
        energies = model.energies(unique)
        order = np.argsort(energies, kind="stable")
        return cls(unique[order], energies[order], merged[order], model.vartype, model)

    def __len__(self):
        return int(self.samples.shape[0])

    @property
    def num_samples(self) -> int:
        return int(self.counts.sum())

    @property
    def lowest_energy(self) -> float:
        if len(self) == 0:
            raise ArgumentError("Empty sample set")
        return float(self.energies[0])

    def expanded_energies(self) -> np.ndarray:
        return np.repeat(self.energies, self.counts)

    def expanded_samples(self) -> np.ndarray:
        return np.repeat(self.samples, self.counts, axis=0)

    def bits(self) -> np.ndarray:
        return spins_to_bits(self.samples) if self.vartype == SPIN else self.samples.copy()

    def check_energies(self, tol: float = ENERGY_TOL) -> bool:
        if self.model is None or len(self) == 0:
            return True
        return bool(np.allclose(self.model.energies(self.samples), self.energies, atol=tol, rtol=0))


def write_samples(sampleset: SampleSet, path) -> Path:
    out_path = Path(path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    bits = sampleset.bits()
    with out_path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(SAMPLES_COLUMNS)
        for row, energy, count in zip(bits, sampleset.energies, sampleset.counts):
            writer.writerow([repr(float(energy)), int(count), "".join(str(int(b)) for b in row)])
    return out_path


def read_samples(path, model: QuadraticModel | None = None, vartype: str = BINARY) -> SampleSet:
    """Read a samples CSV. With a model, energies are recomputed and checked against the file."""
    in_path = Path(path)
    if not in_path.exists():
        raise ConfigurationError(f"Samples file not found: {in_path}")
    rows, energies, counts = [], [], []
    with in_path.open(newline="", encoding="utf-8") as f:
        for record in csv.DictReader(f):
            rows.append([int(c) for c in record["bitstring"]])
            energies.append(float(record["energy"]))
            counts.append(int(record["count"]))
    width = len(rows[0]) if rows else (model.num_vars if model else 0)
    bits = np.array(rows, dtype=np.int8).reshape(len(rows), width)
    vartype = model.vartype if model is not None else vartype
    samples = bits_to_spins(bits) if vartype == SPIN else bits
    result = SampleSet(samples, np.array(energies), np.array(counts, dtype=np.int64), vartype, model)
    if model is not None and not result.check_energies():
        raise ConfigurationError(f"{in_path}: stored energies do not match the model")
    return result


def _domain_values(vartype):
    return (0, 1) if vartype == BINARY else (-1, 1)


def exact_solve(model: QuadraticModel) -> SampleSet:
    """All global minima; enumeration up to ENUMERATION_LIMIT variables, branch and bound beyond."""
    n = model.num_vars
    if n == 0:
        return SampleSet.from_samples(model, np.zeros((1, 0), dtype=np.int8))
    if n <= ENUMERATION_LIMIT:
        minima = _enumerate_minima(model)
    elif n <= BRANCH_AND_BOUND_LIMIT:
        minima = _branch_and_bound_minima(model)
    else:
        raise CapacityError(f"exact_solve supports at most {BRANCH_AND_BOUND_LIMIT} variables, got {n}")
    return SampleSet.from_samples(model, minima)


def enumerate_states(n: int, vartype: str, start: int = 0, stop: int | None = None) -> np.ndarray:
    """Rows for state indices [start, stop); variable i is bit i of the index."""
    stop = 2 ** n if stop is None else stop
    idx = np.arange(start, stop, dtype=np.int64)
    bits = ((idx[:, None] >> np.arange(n, dtype=np.int64)) & 1).astype(np.int8)
    return bits if vartype == BINARY else 2 * bits - 1


def _enumerate_minima(model: QuadraticModel, chunk: int = 2 ** 14) -> np.ndarray:
    n = model.num_vars
    best = np.inf
    keep = []
    for start in range(0, 2 ** n, chunk):
        states = enumerate_states(n, model.vartype, start, min(start + chunk, 2 ** n))
        energies = model.energies(states)
        low = energies.min()
        if low < best - ENERGY_TOL:
            best = low
            keep = []
        if low <= best + ENERGY_TOL:
            keep.append(states[energies <= best + ENERGY_TOL])
    return np.vstack(keep)


def _branch_and_bound_minima(model: QuadraticModel) -> np.ndarray:
    n = model.num_vars
    coupling = model.coupling_matrix()
    order = np.argsort(-np.abs(coupling).sum(axis=0), kind="stable")
    lin = model.linear_vector()[order]
    coupling = coupling[np.ix_(order, order)]
    spin = model.vartype == SPIN
    values = _domain_values(model.vartype)

    upper = np.triu(coupling, 1)
    if spin:
        pair_bound = -np.abs(upper)
    else:
        pair_bound = np.minimum(upper, 0.0)
    # pair_tail[k]: bound contribution of pairs among variables k..n-1
    pair_tail = np.zeros(n + 1)
    for k in range(n - 1, -1, -1):
        pair_tail[k] = pair_tail[k + 1] + pair_bound[k, k + 1:].sum()

    best = [np.inf]
    found = []
    assignment = np.zeros(n, dtype=np.int8)

    def search(k, fixed, eff):
        rest = eff[k:]
        bound = fixed + (-np.abs(rest).sum() if spin else np.minimum(rest, 0.0).sum()) + pair_tail[k]
        if bound > best[0] + ENERGY_TOL:
            return
        if k == n:
            if fixed < best[0] - ENERGY_TOL:
                best[0] = fixed
                found.clear()
            found.append(assignment.copy())
            return
        for v in sorted(values, key=lambda val: eff[k] * val):
            assignment[k] = v
            search(k + 1, fixed + eff[k] * v, eff + coupling[k] * v if v else eff)

    search(0, 0.0, lin.copy())
    minima = np.array(found, dtype=np.int8)
    inverse = np.empty(n, dtype=np.int64)
    inverse[order] = np.arange(n)
    return minima[:, inverse]


def _anneal_chunk(h, coupling, betas, num, rng):
    n = h.shape[0]
    spins = rng.choice(np.array([-1.0, 1.0]), size=(num, n))
    if n == 0:
        return spins.astype(np.int8)
    rows = np.arange(num)
    for beta in betas:
        for _ in range(n):
            sites = rng.integers(n, size=num)
            field = h[sites] + np.einsum("ij,ij->i", coupling[sites], spins)
            delta = -2.0 * spins[rows, sites] * field
            accept = (delta <= 0) | (rng.random(num) < np.exp(-beta * np.maximum(delta, 0.0)))
            spins[rows[accept], sites[accept]] *= -1.0
    return spins.astype(np.int8)


def anneal_spins(ising: IsingModel, config: SolverConfig) -> np.ndarray:
    """Raw spin rows (num_samples x n) from independent Metropolis anneals."""
    h = ising.linear_vector()
    coupling = ising.coupling_matrix()
    betas = config.betas()
    sizes = [min(config.chunk_size, config.num_samples - start)
             for start in range(0, config.num_samples, config.chunk_size)]

    def run(chunk_index):
        rng = np.random.default_rng(seed_sequence(config.seed, "sa", chunk_index))
        return _anneal_chunk(h, coupling, betas, sizes[chunk_index], rng)

    if config.workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            chunks = list(pool.map(run, range(len(sizes))))
    else:
        chunks = [run(c) for c in range(len(sizes))]
    return np.vstack(chunks)


def sa_sample(ising: IsingModel, config: SolverConfig) -> SampleSet:
    """Simulated annealing samples; energies are exact re-evaluations of `ising`."""
    logger.debug("sa_sample: %d spins, %d samples, %d sweeps", ising.num_spins, config.num_samples, config.sweeps)
    return SampleSet.from_samples(ising, anneal_spins(ising, config))


def sample_qubo(qubo: QuboModel, config: SolverConfig) -> SampleSet:
    """Anneal the Ising form of `qubo`, report samples and energies in binary form."""
    spins = anneal_spins(qubo_to_ising(qubo), config)
    return SampleSet.from_samples(qubo, spins_to_bits(spins))


def steepest_descent(model: QuadraticModel, configuration) -> np.ndarray:
    """Flip the single variable with the largest energy drop until none lowers the energy."""
    state = np.array(configuration, dtype=np.int8)
    spin = model.vartype == SPIN
    while state.size:
        deltas = model.flip_deltas(state)
        k = int(np.argmin(deltas))
        if deltas[k] >= -ENERGY_TOL:
            break
        state[k] = -state[k] if spin else 1 - state[k]
    return state


def descend_sampleset(model: QuadraticModel, sampleset: SampleSet) -> SampleSet:
    if len(sampleset) == 0:
        return sampleset
    refined = np.array([steepest_descent(model, row) for row in sampleset.samples], dtype=np.int8)
    return SampleSet.from_samples(model, refined, sampleset.counts)


def quantile_energy(sampleset: SampleSet, q: float) -> float:
    """q-quantile of the energy multiset, lower interpolation."""
    if not 0 < q <= 1:
        raise ArgumentError("q must be in (0, 1]")
    if len(sampleset) == 0 or sampleset.num_samples == 0:
        raise ArgumentError("Cannot take a quantile of an empty sample set")
    return float(np.quantile(sampleset.expanded_energies(), q, method="lower"))


def exact_mvvc(problem: MvvcProblem) -> set:
    """Maximum-value independent set; ties go to the lexicographically lowest id set."""
    graph = problem.graph
    values = problem.values
    positive = sorted(v for v in graph.nodes if values[v] > 0)
    sub = graph.subgraph(positive)
    selected = set()
    for component in sorted(nx.connected_components(sub), key=min):
        adjacency = {v: set(sub.neighbors(v)) for v in component}
        selected |= _mwis_component(adjacency, values)
    return selected


def _mwis_component(adjacency: dict, values: dict) -> set:
    best = {"value": -np.inf, "key": ()}

    def consider(chosen, value):
        key = tuple(sorted(chosen))
        if value > best["value"] + ENERGY_TOL or (
            abs(value - best["value"]) <= ENERGY_TOL and key < best["key"]
        ):
            best["value"], best["key"] = value, key

    def search(cands, chosen, value):
        if value + sum(values[v] for v in cands) < best["value"] - ENERGY_TOL:
            return
        if not cands:
            consider(chosen, value)
            return
        v = max(sorted(cands), key=lambda u: len(adjacency[u] & cands))
        if not adjacency[v] & cands:
            consider(chosen + tuple(cands), value + sum(values[u] for u in cands))
            return
        search(cands - adjacency[v] - {v}, chosen + (v,), value + values[v])
        search(cands - {v}, chosen, value)

    search(frozenset(adjacency), (), 0.0)
    return set(best["key"])


def repair_selection(problem: MvvcProblem, selected) -> set:
    """Drop the lower-value endpoint of every violated edge until the set is independent."""
    selected = set(selected)
    while True:
        broken = [(u, v) for u, v in problem.graph.edges if u in selected and v in selected]
        if not broken:
            return selected
        u, v = min(broken, key=lambda e: (min(problem.values[e[0]], problem.values[e[1]]), e))
        drop = u if (problem.values[u], -u) < (problem.values[v], -v) else v
        selected.discard(drop)


def annealer_mvvc_solver(config: SolverConfig, sampler=None, m_aux: int = 1, xor: bool = False):
    """
    MVVC solver backed by annealing: reformulate, sample, descend, repair, keep the best.

    `sampler(ising)` returns a SampleSet; the default is sa_sample with `config`.
    """
    sample = sampler or (lambda ising: sa_sample(ising, config))

    def solve(problem: MvvcProblem) -> set:
        qubo, ising = mvvc_chain(problem, redistribute=True, xor=xor, m_aux=m_aux)
        sampleset = sample(ising)
        bits = spins_to_bits(decode_auxiliary(sampleset.samples, ising))
        best, best_key = set(), (0.0, ())
        for row in bits:
            chosen = repair_selection(problem, problem.selection(steepest_descent(qubo, row)))
            key = (problem.value_of(chosen), tuple(-v for v in sorted(chosen)))
            if key > best_key:
                best, best_key = chosen, key
        return best

    return solve
