"""
Problem-aware calibration of an annealer for cover problems on one graph.

  1. flux offsets: zero-weight model, nudge each qubit until its mean
     magnetization sits inside the shot-noise band 3/sqrt(shots)
  2. pairwise corrections: sample the zero-value cover problem, compare joint
     bit statistics Q against a Monte Carlo reference P that is uniform over
     independent sets, and add eps * D * erf(|D| / sigma) on the (1-x_i)(1-x_j),
     (1-x_i) x_j and x_i (1-x_j) monomials; eps is in units of the sampler
     temperature 1 / beta_final and decays geometrically
  3. value scaling: inclusion probability of one vertex under an offset term
     -V x_v is fitted to b + (a - b) / 2 * (tanh((V - V0) / w) + 1); values are
     then divided by 3w (multiplied with width_direction="multiply")

Statistic columns are ordered 00, 01, 10, 11 for (x_i, x_j).
Corrections depend only on the graph, never on vertex values.
"""
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import networkx as nx
import numpy as np
from scipy.optimize import least_squares
from scipy.special import erf

from annealer_sim import DeviceState, device_sample
from errors import ArgumentError, CalibrationError, ConfigurationError
from qubo_ising import IsingModel, MvvcProblem, QuboModel, decode_auxiliary, mvvc_qubo, qubo_to_ising, spins_to_bits
from seeding import child_seed, rng_for
from solvers import SampleSet, SolverConfig

logger = logging.getLogger(__name__)

COLUMNS = ("00", "01", "10", "11")
# E|x - y| for independent zero-mean Gaussians of standard deviation sigma, in units of sigma
STOP_CONSTANT = 2.0 / math.sqrt(math.pi)
SIGMOID_HALF_SPAN = 2.0 * math.atanh(0.5)


@dataclass
class PairStatistics:
    vertices: list
    pairs: list
    probs: np.ndarray
    inclusion: np.ndarray
    stderr: np.ndarray | None = None

    def __post_init__(self):
        self.pairs = [tuple(p) for p in self.pairs]
        self.probs = np.asarray(self.probs, dtype=float).reshape(len(self.pairs), 4)

    def check(self, tol: float = 1e-9) -> bool:
        return bool(
            np.all(np.abs(self.probs.sum(axis=1) - 1.0) <= tol)
            and np.all(self.probs >= -tol)
            and np.all(self.probs <= 1 + tol)
        )

    def delta(self, reference: "PairStatistics") -> np.ndarray:
        """self - reference, entry by entry."""
        if self.pairs != reference.pairs:
            raise ArgumentError("Pair statistics cover different pairs")
        return self.probs - reference.probs

    def as_dict(self) -> dict:
        return {f"{i}-{j}": dict(zip(COLUMNS, map(float, row))) for (i, j), row in zip(self.pairs, self.probs)}


def _vertex_order(graph: nx.Graph) -> list:
    if graph.number_of_nodes() == 0:
        raise ArgumentError("Graph has no vertices")
    return sorted(graph.nodes)


def _default_pairs(graph: nx.Graph) -> list:
    return sorted(tuple(sorted(edge)) for edge in graph.edges)


def _pair_columns(vertices, pairs):
    index = {v: k for k, v in enumerate(vertices)}
    try:
        first = np.array([index[i] for i, _ in pairs], dtype=np.int64)
        second = np.array([index[j] for _, j in pairs], dtype=np.int64)
    except KeyError as e:
        raise ArgumentError(f"Pair refers to unknown vertex {e.args[0]}") from e
    return first, second


def _weighted_tables(bits, weights, first, second):
    """Unnormalized (pairs x 4) joint weights and per-vertex inclusion weights."""
    b = np.asarray(bits, dtype=float)
    w = np.asarray(weights, dtype=float)
    xi, xj = b[:, first], b[:, second]
    table = np.stack(
        [w @ ((1 - xi) * (1 - xj)), w @ ((1 - xi) * xj), w @ (xi * (1 - xj)), w @ (xi * xj)], axis=1
    ) if len(first) else np.zeros((0, 4))
    return table, w @ b


def _statistics(vertices, pairs, bits, weights) -> PairStatistics:
    first, second = _pair_columns(vertices, pairs)
    table, inclusion = _weighted_tables(bits, weights, first, second)
    total = float(np.sum(weights))
    return PairStatistics(vertices, pairs, table / total, inclusion / total)


def _masks_to_bits(masks, n):
    masks = np.asarray(masks, dtype=np.int64)
    return ((masks[:, None] >> np.arange(n, dtype=np.int64)) & 1).astype(np.int8)


def exact_cover_statistics(graph: nx.Graph, pairs=None, include_empty: bool = False) -> PairStatistics:
    """Pair statistics of the uniform distribution over independent sets (enumeration oracle)."""
    vertices = _vertex_order(graph)
    pairs = _default_pairs(graph) if pairs is None else [tuple(p) for p in pairs]
    index = {v: k for k, v in enumerate(vertices)}
    masks = [sum(1 << index[v] for v in clique) for clique in nx.enumerate_all_cliques(nx.complement(graph))]
    if include_empty:
        masks.append(0)
    bits = _masks_to_bits(masks, len(vertices))
    return _statistics(vertices, pairs, bits, np.ones(len(masks)))


def _grow_covers(closed, n, count, rng, weighting, include_empty, acc):
    for _ in range(count):
        if include_empty:
            acc[0] = acc.get(0, 0.0) + 1.0
        choices = (1 << n) - 1
        cover, weight, step = 0, 1.0, 0
        while choices:
            options = [v for v in range(n) if choices >> v & 1]
            weight *= len(options)
            v = options[int(rng.random() * len(options))]
            cover |= 1 << v
            choices &= ~closed[v]
            step += 1
            if weighting == "ordered":
                weight /= step
            else:
                weight *= step
            acc[cover] = acc.get(cover, 0.0) + weight


def mc_cover_sample(graph: nx.Graph, num_trajectories: int, rng: np.random.Generator, pairs=None,
                    weighting: str = "ordered", include_empty: bool = False,
                    batches: int | None = None) -> PairStatistics:
    """
    Weighted pair statistics from random cover-growth trajectories.

    Each trajectory adds uniformly chosen non-conflicting vertices until none is left
    and records every intermediate cover. The "ordered" weight multiplies by the number
    of choices and divides by the cover size at each step, which makes every nonempty
    independent set equally likely; "literal" multiplies by both. Standard errors come
    from batch means over min(100, S) batches.
    """
    if num_trajectories < 1:
        raise ArgumentError("num_trajectories must be >= 1")
    if weighting not in ("ordered", "literal"):
        raise ArgumentError(f"Unknown weighting {weighting!r}")
    vertices = _vertex_order(graph)
    if len(vertices) > 62:
        raise ArgumentError("mc_cover_sample supports at most 62 vertices")
    pairs = _default_pairs(graph) if pairs is None else [tuple(p) for p in pairs]
    index = {v: k for k, v in enumerate(vertices)}
    n = len(vertices)
    closed = [(1 << index[v]) | sum(1 << index[u] for u in graph.neighbors(v)) for v in vertices]
    first, second = _pair_columns(vertices, pairs)

    num_batches = max(1, min(batches or 100, num_trajectories))
    sizes = np.full(num_batches, num_trajectories // num_batches)
    sizes[: num_trajectories % num_batches] += 1
    tables, inclusions, totals = [], [], []
    for size in sizes:
        acc = {}
        _grow_covers(closed, n, int(size), rng, weighting, include_empty, acc)
        masks = list(acc)
        table, inclusion = _weighted_tables(_masks_to_bits(masks, n), [acc[m] for m in masks], first, second)
        tables.append(table)
        inclusions.append(inclusion)
        totals.append(sum(acc.values()))

    totals = np.array(totals)
    stats = PairStatistics(vertices, pairs, sum(tables) / totals.sum(), sum(inclusions) / totals.sum())
    if num_batches > 1:
        per_batch = np.stack([t / w for t, w in zip(tables, totals)])
        stats.stderr = per_batch.std(axis=0, ddof=1) / math.sqrt(num_batches)
    return stats


def pairwise_stats(samples, pairs, vertices=None) -> PairStatistics:
    """
    Empirical joint frequencies per pair, counts respected.

    `samples` is one SampleSet or a list of batches taken with rest() between them;
    batches are averaged with equal weight and their spread gives the standard error.
    Samples of XOR / split models are decoded to logical bits first.
    """
    batches = [samples] if isinstance(samples, SampleSet) else list(samples)
    if not batches or any(s.num_samples == 0 for s in batches):
        raise ArgumentError("pairwise_stats needs nonempty samples")
    pairs = [tuple(p) for p in pairs]
    per_batch = []
    for batch in batches:
        if batch.model is not None and batch.model.aux:
            bits = spins_to_bits(decode_auxiliary(batch.samples, batch.model))
        else:
            bits = batch.bits()
        order = vertices if vertices is not None else list(range(bits.shape[1]))
        per_batch.append(_statistics(order, pairs, bits, batch.counts))
    if len(per_batch) == 1:
        return per_batch[0]
    probs = np.stack([s.probs for s in per_batch])
    result = PairStatistics(
        per_batch[0].vertices, pairs, probs.mean(axis=0), np.mean([s.inclusion for s in per_batch], axis=0)
    )
    result.stderr = probs.std(axis=0, ddof=1) / math.sqrt(len(per_batch))
    return result


def estimate_sigma(replicates, shots: int = 1000) -> float:
    """Pooled per-entry standard deviation across replicate measurements; 1/sqrt(shots) if they agree exactly."""
    replicates = list(replicates)
    if len(replicates) < 2:
        raise ArgumentError("estimate_sigma needs at least two replicates")
    pairs = replicates[0].pairs
    if any(r.pairs != pairs for r in replicates):
        raise ArgumentError("Replicates cover different pairs")
    stack = np.stack([r.probs for r in replicates])
    if stack.size == 0:
        raise ArgumentError("Replicates have no pair statistics")
    sigma = float(np.sqrt(np.mean(stack.var(axis=0, ddof=1))))
    return sigma if sigma > 0 else 1.0 / math.sqrt(shots)


def correction_step(reference: PairStatistics, measured: PairStatistics, sigma: float, epsilon: float) -> QuboModel:
    """
    QUBO corrections over the vertex order of `reference`.

    For each pair, D_ab = Q_ab - P_ab and c_ab = eps * D_ab * erf(|D_ab| / sigma) is put on
    (1-x_i)(1-x_j), (1-x_i) x_j and x_i (1-x_j); x_i x_j gets no direct term.
    """
    if sigma <= 0 or epsilon <= 0:
        raise ArgumentError("sigma and epsilon must be > 0")
    delta = measured.delta(reference)
    coeffs = epsilon * delta * erf(np.abs(delta) / sigma)
    index = {v: k for k, v in enumerate(reference.vertices)}
    model = QuboModel(len(reference.vertices))
    for (u, v), (c00, c01, c10, _) in zip(reference.pairs, coeffs):
        i, j = index[u], index[v]
        if c00:
            model.add_offset(c00)
        if c10 - c00:
            model.add_linear(i, c10 - c00)
        if c01 - c00:
            model.add_linear(j, c01 - c00)
        if c00 - c01 - c10:
            model.add_quadratic(i, j, c00 - c01 - c10)
    return model


@dataclass(frozen=True)
class CalibrationSchedule:
    epsilon0: float = 1.0
    decay: float = 0.8
    max_iterations: int = 50
    divergence_patience: int = 5
    shots: int = 1000
    replicates: int = 3
    stop_constant: float = STOP_CONSTANT
    trajectories: int = 20000
    weighting: str = "ordered"
    flux_max_iterations: int = 20
    offset_grid: tuple = tuple(np.round(np.linspace(-0.5, 0.5, 11), 6))
    width_direction: str = "divide"
    seed: int = 0

    def __post_init__(self):
        if self.epsilon0 <= 0 or not 0 < self.decay <= 1:
            raise ConfigurationError("Need epsilon0 > 0 and 0 < decay <= 1")
        if self.max_iterations < 1 or self.shots < 1 or self.replicates < 2:
            raise ConfigurationError("Need max_iterations >= 1, shots >= 1 and replicates >= 2")
        if self.width_direction not in ("multiply", "divide"):
            raise ConfigurationError("width_direction must be 'multiply' or 'divide'")
        if len(self.offset_grid) < 4:
            raise ConfigurationError("At least four offsets are needed for a sigmoid fit")


@dataclass
class SigmoidFit:
    a: float
    b: float
    v0: float
    w: float
    residual: float

    def __call__(self, v):
        return sigmoid(v, self.a, self.b, self.v0, self.w)

    @property
    def scale(self) -> float:
        return 3.0 * self.w


@dataclass
class CalibrationState:
    vertices: list
    flux_offsets: np.ndarray
    corrections: QuboModel
    sigma: float = 0.0
    epsilon: float = 1.0
    iterations: int = 0
    trace: list = field(default_factory=list)
    converged: bool = False
    widths: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict)
    failed_vertices: dict = field(default_factory=dict)

    @property
    def scales(self) -> dict:
        return {v: 3.0 * w for v, w in self.widths.items()}


def _calibration_config(config: SolverConfig, shots: int, seed: int, *names) -> SolverConfig:
    return replace(config, num_samples=shots, seed=child_seed(seed, "calibration", *names))


def flux_bias_calibrate(device: DeviceState, num_spins: int, config: SolverConfig = SolverConfig(),
                        shots: int = 1000, max_iterations: int = 20, seed: int = 0) -> np.ndarray:
    """
    Zero the mean magnetization of every spin under an all-zero model.

    Each round adds arctanh(m) / beta_final to the offsets, which cancels a static field
    h with m = -tanh(beta h). Offsets are applied to the device as they are found.
    """
    zero = IsingModel(num_spins)
    band = 3.0 / math.sqrt(shots)
    offsets = np.zeros(num_spins)
    magnetization = np.zeros(num_spins)
    for iteration in range(max_iterations):
        device.rest()
        sampleset = device_sample(device, zero, _calibration_config(config, shots, seed, "flux", iteration))
        magnetization = (sampleset.samples * sampleset.counts[:, None]).sum(axis=0) / sampleset.num_samples
        logger.debug("flux round %d: max |m| = %.4f", iteration, float(np.max(np.abs(magnetization), initial=0.0)))
        if np.all(np.abs(magnetization) < band):
            logger.info("Flux offsets converged after %d rounds", iteration + 1)
            return offsets
        step = np.arctanh(np.clip(magnetization, -0.95, 0.95)) / config.beta_final
        device.apply_flux_offsets(step)
        offsets += step
    raise CalibrationError(
        f"Flux offsets did not converge in {max_iterations} rounds",
        {"offsets": offsets.tolist(), "magnetization": magnetization.tolist(), "band": band},
    )


def cover_problem_ising(graph: nx.Graph) -> tuple[QuboModel, IsingModel]:
    """Zero-value cover problem: edge penalties only, gamma = 1."""
    problem = MvvcProblem(graph, {v: 0.0 for v in graph.nodes})
    qubo = mvvc_qubo(problem, 1.0)
    return qubo, qubo_to_ising(qubo)


def _measure(device, ising, config, schedule, vertices, pairs, *names) -> PairStatistics:
    device.rest()
    sampleset = device_sample(device, ising, _calibration_config(config, schedule.shots, schedule.seed, *names))
    return pairwise_stats(sampleset, pairs, vertices)


def calibrate_pairwise(device: DeviceState, graph: nx.Graph, schedule: CalibrationSchedule = CalibrationSchedule(),
                       config: SolverConfig = SolverConfig(), pairs=None,
                       reference: PairStatistics | None = None) -> CalibrationState:
    """
    Iterate corrections on the zero-value cover problem until mean |D| < stop_constant * sigma.

    sigma comes from `replicates` batches taken before any correction; their mean is
    the first measurement. Each round applies correction_step with eps_t / beta_final, so
    eps is measured in units of the sampler temperature. Raises CalibrationError (with
    the trace) when mean |D| grows for `divergence_patience` rounds in a row; running
    out of rounds only logs a warning and leaves `converged` False.
    """
    vertices = _vertex_order(graph)
    pairs = _default_pairs(graph) if pairs is None else [tuple(p) for p in pairs]
    if not pairs:
        raise ArgumentError("Graph has no edges to calibrate")
    _, ising = cover_problem_ising(graph)
    if reference is None:
        reference = mc_cover_sample(graph, schedule.trajectories, rng_for(schedule.seed, "calibration", "reference"),
                                    pairs, weighting=schedule.weighting, include_empty=True)

    replicates = [_measure(device, ising, config, schedule, vertices, pairs, "sigma", r)
                  for r in range(schedule.replicates)]
    sigma = estimate_sigma(replicates, schedule.shots)
    measured = PairStatistics(vertices, pairs, np.mean([r.probs for r in replicates], axis=0),
                              np.mean([r.inclusion for r in replicates], axis=0))

    state = CalibrationState(vertices, device.flux_offsets[: len(vertices)].copy(), QuboModel(len(vertices)),
                             sigma=sigma, epsilon=schedule.epsilon0)
    threshold = schedule.stop_constant * sigma
    rising = 0
    for iteration in range(schedule.max_iterations):
        if iteration:
            measured = _measure(device, ising, config, schedule, vertices, pairs, "pairwise", iteration)
        mean_delta = float(np.mean(np.abs(measured.delta(reference))))
        state.trace.append(mean_delta)
        state.iterations = iteration + 1
        logger.info("pairwise round %d: mean |D| = %.5f (stop below %.5f)", iteration + 1, mean_delta, threshold)
        if mean_delta < threshold:
            state.converged = True
            break
        rising = rising + 1 if len(state.trace) > 1 and mean_delta > state.trace[-2] else 0
        if rising >= schedule.divergence_patience:
            raise CalibrationError(
                f"Pairwise calibration diverged after {iteration + 1} rounds",
                {"trace": state.trace, "sigma": sigma, "epsilon": state.epsilon},
            )
        state.epsilon = schedule.epsilon0 * schedule.decay ** iteration
        step = correction_step(reference, measured, sigma, state.epsilon / config.beta_final)
        device.apply_corrections(step)
        _accumulate(state.corrections, step)
    if not state.converged:
        logger.warning("Pairwise calibration stopped after %d rounds at mean |D| = %.5f (stop below %.5f)",
                       state.iterations, state.trace[-1], threshold)
    return state


def _accumulate(target: QuboModel, step: QuboModel):
    for i, c in step.linear.items():
        target.add_linear(i, c)
    for (i, j), c in step.quadratic.items():
        target.add_quadratic(i, j, c)
    target.add_offset(step.offset)


def sigmoid(v, a, b, v0, w):
    return b + (a - b) / 2.0 * (np.tanh((np.asarray(v, dtype=float) - v0) / w) + 1.0)


def fit_sigmoid(offsets, inclusion) -> SigmoidFit:
    """Damped least-squares fit of the tanh step; CalibrationError for flat or degenerate responses."""
    v = np.asarray(offsets, dtype=float)
    y = np.asarray(inclusion, dtype=float)
    if v.shape != y.shape or v.size < 4:
        raise ArgumentError("Need at least four (offset, inclusion) points of equal length")
    order = np.argsort(v)
    v, y = v[order], y[order]
    span = v[-1] - v[0]
    low, high = float(np.mean(y[:2])), float(np.mean(y[-2:]))
    if abs(high - low) < 0.05 or span <= 0:
        raise CalibrationError("Flat inclusion response; no transition to fit", {"offsets": v.tolist(), "inclusion": y.tolist()})

    def crossing(level):
        frac = (y - low) / (high - low)
        above = np.flatnonzero(frac >= level)
        k = int(above[0]) if above.size else len(v) - 1
        if k == 0:
            return float(v[0])
        f0, f1 = frac[k - 1], frac[k]
        return float(v[k - 1] + (level - f0) * (v[k] - v[k - 1]) / (f1 - f0)) if f1 != f0 else float(v[k])

    v0 = crossing(0.5)
    w0 = (crossing(0.75) - crossing(0.25)) / SIGMOID_HALF_SPAN
    if not w0 > 0:
        w0 = span / 10.0

    fit = least_squares(lambda p: sigmoid(v, *p) - y, x0=[high, low, v0, w0], method="lm")
    a, b, center, width = map(float, fit.x)
    if width < 0:
        a, b, width = b, a, -width
    residual = float(np.sqrt(np.mean(fit.fun ** 2)))
    diagnostics = {"params": [a, b, center, width], "residual": residual}
    if not (fit.success and np.all(np.isfinite(fit.x))):
        raise CalibrationError("Sigmoid fit did not converge", diagnostics)
    if not 1e-6 * span < width < 10.0 * span or abs(a - b) < 1e-3:
        raise CalibrationError("Sigmoid fit is degenerate", diagnostics)
    return SigmoidFit(a, b, center, width, residual)


def offset_scale_calibrate(device: DeviceState, graph: nx.Graph, vertex, offsets,
                           config: SolverConfig = SolverConfig(), shots: int = 1000,
                           seed: int = 0) -> tuple[SigmoidFit, float]:
    """Inclusion of `vertex` under the QUBO term -V x_v for each offset V, fitted; returns (fit, 3w)."""
    vertices = _vertex_order(graph)
    if vertex not in graph:
        raise ArgumentError(f"Vertex {vertex} is not in the graph")
    k = vertices.index(vertex)
    base, _ = cover_problem_ising(graph)
    inclusion = []
    for p, offset in enumerate(offsets):
        qubo = base.copy()
        qubo.add_linear(k, -float(offset))
        device.rest()
        sampleset = device_sample(device, qubo_to_ising(qubo), _calibration_config(config, shots, seed, "offset", vertex, p))
        bits = sampleset.bits()
        inclusion.append(float(sampleset.counts @ bits[:, k]) / sampleset.num_samples)
    fit = fit_sigmoid(offsets, inclusion)
    logger.debug("vertex %s: w = %.4f, V0 = %.4f", vertex, fit.w, fit.v0)
    return fit, fit.scale


def scaled_values(values: dict, widths: dict, direction: str = "divide") -> dict:
    """value / 3w per vertex, or value * 3w with direction="multiply"."""
    missing = [v for v in values if v not in widths]
    if missing:
        raise ArgumentError(f"No fitted width for vertices {missing[:5]}")
    if direction == "multiply":
        return {v: values[v] * 3.0 * widths[v] for v in values}
    if direction == "divide":
        return {v: values[v] / (3.0 * widths[v]) for v in values}
    raise ArgumentError(f"Unknown scaling direction {direction!r}")


def calibrate_device(device: DeviceState, graph: nx.Graph, schedule: CalibrationSchedule = CalibrationSchedule(),
                     config: SolverConfig = SolverConfig(), fit_widths: bool = True) -> CalibrationState:
    """Flux offsets, then pairwise corrections, then one sigmoid width per vertex."""
    vertices = _vertex_order(graph)
    flux = flux_bias_calibrate(device, len(vertices), config, schedule.shots, schedule.flux_max_iterations, schedule.seed)
    state = calibrate_pairwise(device, graph, schedule, config)
    state.flux_offsets = flux
    if fit_widths:
        for vertex in vertices:
            try:
                fit, _ = offset_scale_calibrate(device, graph, vertex, schedule.offset_grid, config,
                                                schedule.shots, schedule.seed)
            except CalibrationError as e:
                logger.warning("vertex %s: %s", vertex, e)
                state.failed_vertices[vertex] = str(e)
                continue
            state.widths[vertex] = fit.w
            state.fits[vertex] = fit
    return state


def apply_calibration(device: DeviceState, state: CalibrationState) -> DeviceState:
    device.apply_flux_offsets(state.flux_offsets)
    device.apply_corrections(state.corrections)
    return device


def calibration_to_json(state: CalibrationState) -> dict:
    corrections = state.corrections
    return {
        "vertices": list(state.vertices),
        "flux_offsets": [float(x) for x in state.flux_offsets],
        "corrections": {
            "offset": corrections.offset,
            "linear": [[i, c] for i, c in sorted(corrections.linear.items())],
            "quadratic": [[i, j, c] for (i, j), c in sorted(corrections.quadratic.items())],
        },
        "sigma": state.sigma,
        "epsilon": state.epsilon,
        "iterations": state.iterations,
        "converged": state.converged,
        "trace": list(state.trace),
        "widths": {str(v): w for v, w in state.widths.items()},
        "fits": {str(v): {"a": f.a, "b": f.b, "v0": f.v0, "w": f.w, "residual": f.residual} for v, f in state.fits.items()},
        "failed_vertices": {str(v): msg for v, msg in state.failed_vertices.items()},
    }


def write_calibration(state: CalibrationState, path) -> Path:
    out_path = Path(path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(calibration_to_json(state), indent=2) + "\n", encoding="utf-8")
    return out_path


def read_calibration(path) -> CalibrationState:
    in_path = Path(path)
    if not in_path.exists():
        raise ConfigurationError(f"Calibration file not found: {in_path}")
    try:
        data = json.loads(in_path.read_text(encoding="utf-8"))
        vertices = data["vertices"]
        corrections = QuboModel(len(vertices), offset=data["corrections"]["offset"])
        for i, c in data["corrections"]["linear"]:
            corrections.add_linear(i, c)
        for i, j, c in data["corrections"]["quadratic"]:
            corrections.add_quadratic(i, j, c)
        label = {str(v): v for v in vertices}
        state = CalibrationState(
            vertices=vertices,
            flux_offsets=np.array(data["flux_offsets"], dtype=float),
            corrections=corrections,
            sigma=data["sigma"],
            epsilon=data["epsilon"],
            iterations=data["iterations"],
            trace=data["trace"],
            converged=data["converged"],
            widths={label[k]: w for k, w in data["widths"].items()},
        )
        state.fits = {label[k]: SigmoidFit(**f) for k, f in data.get("fits", {}).items()}
        state.failed_vertices = {label[k]: m for k, m in data.get("failed_vertices", {}).items()}
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, ConfigurationError):
            raise
        raise ConfigurationError(f"{in_path}: malformed calibration file ({e})") from e
    return state
