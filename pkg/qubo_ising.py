"""
Quadratic binary / spin models and every reformulation used by the pipeline.

  - full-problem QUBO (rooms x requests with slack-encoded bed counts)
  - Maximum Value Vertex Cover QUBO: sum_<ij> x_i x_j - sum_i E_i x_i
  - value redistribution onto edges (identity on independent sets)
  - QUBO <-> Ising with x = (s + 1) / 2
  - removal of linear terms with an auxiliary XOR spin, and splitting that
    spin into M ferromagnetically coupled copies with J (M - 1) = 1
  - chain strength bound and clique embedding size estimate

Models serialize to a small text format:

    qubo <num_vars> <offset>
    aux <i> [<j> ...]
    lin <i> <coefficient>
    quad <i> <j> <coefficient>
"""
import json
import math
from dataclasses import dataclass
from pathlib import Path

import networkx as nx
import numpy as np

from errors import ArgumentError, ConfigurationError

BINARY = "BINARY"
SPIN = "SPIN"


class QuadraticModel:
    """offset + sum_i linear_i v_i + sum_{i<j} quadratic_ij v_i v_j over a fixed domain."""

    vartype = None
    kind = None

    def __init__(self, num_vars: int, linear=None, quadratic=None, offset: float = 0.0,
                 aux=(), labels=None):
        if num_vars < 0:
            raise ArgumentError("num_vars must be >= 0")
        self.num_vars = int(num_vars)
        self.linear = {}
        self.quadratic = {}
        self.offset = float(offset)
        self.aux = tuple(int(a) for a in aux)
        self.labels = list(labels) if labels is not None else None
        for i, c in (linear or {}).items():
            self.add_linear(i, c)
        for (i, j), c in (quadratic or {}).items():
            self.add_quadratic(i, j, c)

    def _check_index(self, i):
        if not 0 <= i < self.num_vars:
            raise ArgumentError(f"Variable {i} out of range for a model of {self.num_vars} variables")

    def add_linear(self, i, coefficient):
        i = int(i)
        self._check_index(i)
        self.linear[i] = self.linear.get(i, 0.0) + float(coefficient)

    def add_quadratic(self, i, j, coefficient):
        i, j = int(i), int(j)
        self._check_index(i)
        self._check_index(j)
        if i == j:
            # x*x = x for bits, s*s = 1 for spins
            if self.vartype == BINARY:
                self.add_linear(i, coefficient)
            else:
                self.offset += float(coefficient)
            return
        key = (i, j) if i < j else (j, i)
        self.quadratic[key] = self.quadratic.get(key, 0.0) + float(coefficient)

    def add_offset(self, value):
        self.offset += float(value)

    def copy(self):
        return type(self)(self.num_vars, dict(self.linear), dict(self.quadratic), self.offset,
                          aux=self.aux, labels=self.labels)

    def scaled(self, factor: float):
        return type(self)(
            self.num_vars,
            {i: c * factor for i, c in self.linear.items()},
            {k: c * factor for k, c in self.quadratic.items()},
            self.offset * factor,
            aux=self.aux,
            labels=self.labels,
        )

    def linear_vector(self) -> np.ndarray:
        vec = np.zeros(self.num_vars)
        for i, c in self.linear.items():
            vec[i] = c
        return vec

    def coupling_matrix(self) -> np.ndarray:
        """Symmetric dense matrix with quadratic_ij in both (i, j) and (j, i)."""
        mat = np.zeros((self.num_vars, self.num_vars))
        for (i, j), c in self.quadratic.items():
            mat[i, j] += c
            mat[j, i] += c
        return mat

    def energies(self, samples) -> np.ndarray:
        samples = np.atleast_2d(np.asarray(samples, dtype=float))
        if samples.shape[1] != self.num_vars:
            raise ArgumentError(f"Samples have {samples.shape[1]} variables, model has {self.num_vars}")
        result = np.full(samples.shape[0], self.offset)
        if self.linear:
            result += samples @ self.linear_vector()
        if self.quadratic:
            keys = np.array(list(self.quadratic.keys()), dtype=np.int64)
            coefs = np.fromiter(self.quadratic.values(), dtype=float, count=len(self.quadratic))
            result += (samples[:, keys[:, 0]] * samples[:, keys[:, 1]]) @ coefs
        return result

    def energy(self, sample) -> float:
        return float(self.energies(np.asarray(sample).reshape(1, -1))[0])

    def flip_deltas(self, sample) -> np.ndarray:
        """Energy change for flipping each variable of one configuration."""
        sample = np.asarray(sample, dtype=float)
        field = self.linear_vector() + self.coupling_matrix() @ sample
        if self.vartype == SPIN:
            return -2.0 * sample * field
        return (1.0 - 2.0 * sample) * field

    def degree(self, i) -> int:
        return sum(1 for key in self.quadratic if i in key)

    def __eq__(self, other):
        return (
            type(self) is type(other)
            and self.num_vars == other.num_vars
            and self.offset == other.offset
            and self.aux == other.aux
            and {k: v for k, v in self.linear.items() if v != 0} == {k: v for k, v in other.linear.items() if v != 0}
            and {k: v for k, v in self.quadratic.items() if v != 0}
            == {k: v for k, v in other.quadratic.items() if v != 0}
        )

    def __repr__(self):
        return (f"{type(self).__name__}(num_vars={self.num_vars}, linear={len(self.linear)}, "
                f"quadratic={len(self.quadratic)}, offset={self.offset})")


class QuboModel(QuadraticModel):
    vartype = BINARY
    kind = "qubo"


class IsingModel(QuadraticModel):
    vartype = SPIN
    kind = "ising"

    @property
    def num_spins(self) -> int:
        return self.num_vars

    @property
    def h(self) -> dict:
        return self.linear

    @property
    def J(self) -> dict:
        return self.quadratic


def bits_to_spins(bits) -> np.ndarray:
    return 2 * np.asarray(bits, dtype=np.int8) - 1


def spins_to_bits(spins) -> np.ndarray:
    return ((np.asarray(spins, dtype=np.int8) + 1) // 2).astype(np.int8)


@dataclass
class MvvcProblem:
    """Collision graph plus one value E_i per vertex."""

    graph: nx.Graph
    values: dict

    def __post_init__(self):
        if self.graph.number_of_nodes() == 0:
            raise ArgumentError("MVVC problem needs a nonempty graph")
        missing = [v for v in self.graph.nodes if v not in self.values]
        if missing:
            raise ArgumentError(f"No value for vertices {missing[:5]}")
        if not all(math.isfinite(float(self.values[v])) for v in self.graph.nodes):
            raise ArgumentError("MVVC values must be finite")

    @property
    def variables(self) -> list:
        return sorted(self.graph.nodes)

    @property
    def index(self) -> dict:
        return {v: i for i, v in enumerate(self.variables)}

    def selection(self, bits) -> set:
        """Vertex set picked by a bit vector in `variables` order."""
        return {v for v, b in zip(self.variables, bits) if b}

    def value_of(self, selected) -> float:
        return float(sum(self.values[v] for v in selected))

    def is_independent(self, selected) -> bool:
        selected = set(selected)
        return not any(u in selected and v in selected for u, v in self.graph.edges)


def full_problem_qubo(requests, rooms, penalty: float = 10.0, reward: float = 1.0,
                      acceptance_bits: bool = False) -> QuboModel:
    """
    Whole scheduling problem as one QUBO.

    Variables are N*M room-assignment bits followed by ceil(log2(S_max)) slack bits per
    request (and one acceptance bit per request when `acceptance_bits` is set). The bed
    constraint sum_i cap_i x_i = R + H is a squared penalty; two overlapping requests in
    the same room cost `penalty`. Without acceptance bits each request earns
    -reward * (sum_i cap_i x_i - H) / R, which equals -reward whenever its constraint
    holds. With acceptance bits a request earns -reward * a and rooms may only be used
    by accepted requests.
    """
    if penalty <= 0:
        raise ArgumentError("penalty must be > 0")
    requests = list(requests)
    rooms = list(rooms)
    n_req, n_rooms = len(requests), len(rooms)
    if n_req == 0:
        return QuboModel(0)
    if n_rooms == 0:
        raise ArgumentError("full_problem_qubo needs at least one room")

    s_max = max(room.capacity for room in rooms)
    n_slack = (s_max - 1).bit_length()
    slack_weights = [2 ** k for k in range(max(n_slack - 1, 0))]
    if n_slack:
        # top bit weight keeps H in [0, S_max - 1] when S_max is not a power of two
        slack_weights.append((s_max - 1) - (2 ** (n_slack - 1) - 1))

    labels = []
    for request in requests:
        labels.extend(("x", request.id, room.id) for room in rooms)
    for request in requests:
        labels.extend(("h", request.id, k) for k in range(n_slack))
    if acceptance_bits:
        labels.extend(("a", request.id) for request in requests)

    model = QuboModel(len(labels), labels=labels)

    def x_var(r, i):
        return r * n_rooms + i

    def h_var(r, k):
        return n_req * n_rooms + r * n_slack + k

    def a_var(r):
        return n_req * (n_rooms + n_slack) + r

    for r, request in enumerate(requests):
        terms = [(x_var(r, i), room.capacity) for i, room in enumerate(rooms)]
        terms += [(h_var(r, k), -w) for k, w in enumerate(slack_weights)]
        if acceptance_bits:
            terms.append((a_var(r), -request.beds_requested))
            _add_squared_penalty(model, terms, 0.0, penalty)
            for i in range(n_rooms):
                model.add_linear(x_var(r, i), penalty)
                model.add_quadratic(x_var(r, i), a_var(r), -penalty)
            model.add_linear(a_var(r), -reward)
        else:
            _add_squared_penalty(model, terms, -request.beds_requested, penalty)
            for var, coef in terms:
                model.add_linear(var, -reward * coef / request.beds_requested)

    for r in range(n_req):
        for s in range(r + 1, n_req):
            if requests[r].overlaps(requests[s]):
                for i in range(n_rooms):
                    model.add_quadratic(x_var(r, i), x_var(s, i), penalty)
    return model


def _add_squared_penalty(model, terms, constant, weight):
    """Add weight * (sum_k c_k z_k + constant)^2 for binary z."""
    for var, coef in terms:
        model.add_linear(var, weight * (coef * coef + 2.0 * coef * constant))
    for a in range(len(terms)):
        for b in range(a + 1, len(terms)):
            model.add_quadratic(terms[a][0], terms[b][0], 2.0 * weight * terms[a][1] * terms[b][1])
    model.add_offset(weight * constant * constant)


def mvvc_qubo(problem: MvvcProblem, edge_penalty: float = 1.0) -> QuboModel:
    """edge_penalty * sum_<ij> x_i x_j - sum_i E_i x_i, variables in sorted vertex order."""
    if edge_penalty < 1:
        raise ArgumentError("edge_penalty must be >= 1")
    index = problem.index
    model = QuboModel(len(index), labels=problem.variables)
    for v, i in index.items():
        if problem.values[v] != 0:
            model.add_linear(i, -float(problem.values[v]))
    for u, v in problem.graph.edges:
        model.add_quadratic(index[u], index[v], edge_penalty)
    return model


def random_values(graph: nx.Graph, max_duration: float, durations: dict, rng: np.random.Generator) -> dict:
    """E_i = (duration_i + randInt(-3, 3)) / max_duration, drawn in sorted vertex order."""
    if max_duration <= 0:
        raise ArgumentError("max_duration must be > 0")
    values = {}
    for v in sorted(graph.nodes):
        values[v] = (float(durations[v]) + int(rng.integers(-3, 4))) / float(max_duration)
    return values


def redistribute_values(qubo: QuboModel, problem: MvvcProblem, weights: dict | None = None) -> QuboModel:
    """
    Move each vertex value onto its edges: E_i x_i -> sum_j w_ij E_i x_i (1 - x_j).

    With sum_j w_ij = 1 the linear part is unchanged and edge (i, j) gains
    w_ij E_i + w_ji E_j, so energies of independent sets are untouched while a broken
    edge no longer collects either value. Default weights are 1 / O_i. Isolated
    vertices keep their plain linear term.
    """
    graph = problem.graph
    index = problem.index
    if weights is None:
        weights = {}
        for u, v in graph.edges:
            weights[(u, v)] = 1.0 / graph.degree(u)
            weights[(v, u)] = 1.0 / graph.degree(v)

    for v in graph.nodes:
        if graph.degree(v) == 0:
            continue
        total = sum(weights.get((v, u), 0.0) for u in graph.neighbors(v))
        if abs(total - 1.0) > 1e-9:
            raise ArgumentError(f"Weights around vertex {v} sum to {total}, expected 1")

    out = qubo.copy()
    for u, v in graph.edges:
        i, j = index[u], index[v]
        e_u = -qubo.linear.get(i, 0.0)
        e_v = -qubo.linear.get(j, 0.0)
        out.add_quadratic(i, j, weights[(u, v)] * e_u + weights[(v, u)] * e_v)
    return out


def qubo_to_ising(qubo: QuboModel) -> IsingModel:
    """Substitute x_i = (s_i + 1) / 2; energies match state by state."""
    ising = IsingModel(qubo.num_vars, offset=qubo.offset, labels=qubo.labels)
    for i, a in qubo.linear.items():
        ising.add_linear(i, a / 2.0)
        ising.add_offset(a / 2.0)
    for (i, j), b in qubo.quadratic.items():
        ising.add_quadratic(i, j, b / 4.0)
        ising.add_linear(i, b / 4.0)
        ising.add_linear(j, b / 4.0)
        ising.add_offset(b / 4.0)
    return ising


def ising_to_qubo(ising: IsingModel) -> QuboModel:
    """Substitute s_i = 2 x_i - 1."""
    qubo = QuboModel(ising.num_vars, offset=ising.offset, labels=ising.labels)
    for i, h in ising.h.items():
        qubo.add_linear(i, 2.0 * h)
        qubo.add_offset(-h)
    for (i, j), coupling in ising.J.items():
        qubo.add_quadratic(i, j, 4.0 * coupling)
        qubo.add_linear(i, -2.0 * coupling)
        qubo.add_linear(j, -2.0 * coupling)
        qubo.add_offset(coupling)
    return qubo


def eliminate_linear_terms(ising: IsingModel) -> IsingModel:
    """
    Replace every field h_i s_i by a coupling h_i s_i X to a new auxiliary spin X.

    States (s, X=+1) keep their energy and (-s, X=-1) repeat it, so the spectrum is the
    original one with every multiplicity doubled.
    """
    n = ising.num_spins
    labels = ising.labels + ["X"] if ising.labels is not None else None
    out = IsingModel(n + 1, quadratic=dict(ising.J), offset=ising.offset, aux=(n,), labels=labels)
    for i, h in ising.h.items():
        if h != 0:
            out.add_quadratic(i, n, h)
    return out


def split_aux_spin(ising: IsingModel, m_aux: int) -> IsingModel:
    """
    Replace the auxiliary spin by M copies X_k, each carrying 1/M of its couplings, held
    together by -J X_k X_l on every pair with J (M - 1) = 1.

    The offset absorbs the aligned-sector bond energy, so aligned configurations keep the
    energy they had in the unsplit model.
    """
    if m_aux < 1:
        raise ArgumentError("M must be >= 1")
    if len(ising.aux) != 1:
        raise ArgumentError("Model needs exactly one designated auxiliary spin to split")
    if m_aux == 1:
        return ising.copy()

    aux = ising.aux[0]
    keep = [i for i in range(ising.num_spins) if i != aux]
    remap = {old: new for new, old in enumerate(keep)}
    base = len(keep)
    copies = [base + k for k in range(m_aux)]
    labels = None
    if ising.labels is not None:
        labels = [ising.labels[i] for i in keep] + [f"X{k}" for k in range(m_aux)]
    out = IsingModel(base + m_aux, offset=ising.offset, aux=copies, labels=labels)

    for i, h in ising.h.items():
        if i == aux:
            for c in copies:
                out.add_linear(c, h / m_aux)
        else:
            out.add_linear(remap[i], h)
    for (i, j), coupling in ising.J.items():
        if aux in (i, j):
            other = remap[j if i == aux else i]
            for c in copies:
                out.add_quadratic(other, c, coupling / m_aux)
        else:
            out.add_quadratic(remap[i], remap[j], coupling)

    bond = 1.0 / (m_aux - 1)
    for a in range(m_aux):
        for b in range(a + 1, m_aux):
            out.add_quadratic(copies[a], copies[b], -bond)
    out.add_offset(bond * m_aux * (m_aux - 1) / 2.0)
    return out


def decode_auxiliary(spins, model: IsingModel) -> np.ndarray:
    """Logical spins from samples of an XOR / split model: flip rows whose aux majority is -1."""
    spins = np.atleast_2d(np.asarray(spins, dtype=np.int8))
    if not model.aux:
        return spins.copy()
    aux = list(model.aux)
    keep = [i for i in range(model.num_spins) if i not in set(aux)]
    sign = np.where(spins[:, aux].sum(axis=1) >= 0, 1, -1).astype(np.int8)
    return spins[:, keep] * sign[:, None]


def chain_strength(model: IsingModel, chain) -> float:
    """
    Per-bond chain coupling that no chain break can beat.

    Sums |h_i| plus |J_ij| to spins outside the chain over every chain member (the most
    a broken chain can gain) and spreads it over the len(chain) - 1 internal bonds.
    """
    chain = set(int(c) for c in chain)
    if not chain:
        raise ArgumentError("Chain must contain at least one spin")
    if len(chain) == 1:
        return 0.0
    total = sum(abs(model.h.get(i, 0.0)) for i in chain)
    for (i, j), coupling in model.J.items():
        if (i in chain) != (j in chain):
            total += abs(coupling)
    return total / (len(chain) - 1)


def clique_embedding_estimate(k: int) -> int:
    """Physical qubits for a K-clique on a Zephyr-like graph: ceil(K^2 / 8 + K)."""
    if k < 1:
        raise ArgumentError("Clique size must be >= 1")
    return (k * k + 8 * k + 7) // 8


def mvvc_chain(problem: MvvcProblem, redistribute: bool = True, xor: bool = False, m_aux: int = 1,
               edge_penalty: float = 1.0):
    """Run the reformulation chain; returns (qubo, ising) where ising may carry aux spins."""
    qubo = mvvc_qubo(problem, edge_penalty)
    if redistribute:
        qubo = redistribute_values(qubo, problem)
    ising = qubo_to_ising(qubo)
    if xor or m_aux > 1:
        ising = eliminate_linear_terms(ising)
        ising = split_aux_spin(ising, m_aux)
    return qubo, ising


def write_model(model: QuadraticModel, path) -> Path:
    out_path = Path(path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"{model.kind} {model.num_vars} {model.offset!r}"]
    if model.aux:
        lines.append("aux " + " ".join(str(a) for a in model.aux))
    for i in sorted(model.linear):
        lines.append(f"lin {i} {model.linear[i]!r}")
    for i, j in sorted(model.quadratic):
        lines.append(f"quad {i} {j} {model.quadratic[(i, j)]!r}")
    out_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return out_path


def read_model(path) -> QuadraticModel:
    in_path = Path(path)
    if not in_path.exists():
        raise ConfigurationError(f"Model file not found: {in_path}")
    lines = [line.split() for line in in_path.read_text(encoding="utf-8").splitlines() if line.strip()]
    if not lines or lines[0][0] not in ("qubo", "ising") or len(lines[0]) != 3:
        raise ConfigurationError(f"{in_path}: header must be '<qubo|ising> <num_vars> <offset>'")
    kind, num_vars, offset = lines[0]
    cls = QuboModel if kind == "qubo" else IsingModel
    try:
        model = cls(int(num_vars), offset=float(offset))
        for parts in lines[1:]:
            if parts[0] == "aux":
                model.aux = tuple(int(a) for a in parts[1:])
            elif parts[0] == "lin" and len(parts) == 3:
                model.add_linear(int(parts[1]), float(parts[2]))
            elif parts[0] == "quad" and len(parts) == 4:
                model.add_quadratic(int(parts[1]), int(parts[2]), float(parts[3]))
            else:
                raise ConfigurationError(f"{in_path}: cannot parse line {' '.join(parts)!r}")
    except (ValueError, ArgumentError) as e:
        if isinstance(e, ConfigurationError):
            raise
        raise ConfigurationError(f"{in_path}: {e}") from e
    return model


def problem_to_json(problem: MvvcProblem, durations: dict | None = None) -> dict:
    data = {
        "vertices": problem.variables,
        "edges": sorted([sorted(edge) for edge in problem.graph.edges]),
        "values": {str(v): float(problem.values[v]) for v in problem.variables},
    }
    if durations is not None:
        data["durations"] = {str(v): int(durations[v]) for v in problem.variables}
    return data


def write_problem(problem: MvvcProblem, path, durations: dict | None = None) -> Path:
    out_path = Path(path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(problem_to_json(problem, durations), indent=2) + "\n", encoding="utf-8")
    return out_path


def read_problem(path) -> MvvcProblem:
    """Load problem JSON; missing values default to 0 (zero-value cover problem)."""
    in_path = Path(path)
    if not in_path.exists():
        raise ConfigurationError(f"Problem file not found: {in_path}")
    try:
        data = json.loads(in_path.read_text(encoding="utf-8"))
        graph = nx.Graph()
        graph.add_nodes_from(int(v) for v in data["vertices"])
        graph.add_edges_from((int(u), int(v)) for u, v in data.get("edges", []))
        values = {int(v): float(e) for v, e in data.get("values", {}).items()}
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigurationError(f"{in_path}: malformed problem file ({e})") from e
    for v in graph.nodes:
        values.setdefault(v, 0.0)
    return MvvcProblem(graph, values)
