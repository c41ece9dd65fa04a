"""
Experiment runs behind the CLI.

  - compare_methods: failure curves of several scheduling methods on shared streams
  - sweep_anneal: quantile energies of annealer samples against anneal length
  - scale_values_experiment: success rate with and without width-scaled values
  - calibration_effect: quantile energy of one instance before and after calibration
  - problem_from_stream: MVVC instance (collision graph + duration values) for a stream
"""
import logging
import math
from dataclasses import replace
from pathlib import Path

import networkx as nx
import numpy as np
import pandas as pd

from annealer_sim import DeviceState, create_device, device_sample
from calibration import CalibrationSchedule, calibrate_device, scaled_values
from demand_model import CampusConfig, DemandModel, generate_stream
from errors import CalibrationError, UsageError
from qubo_ising import MvvcProblem, decode_auxiliary, mvvc_chain, random_values, spins_to_bits
from scheduling import METHODS, ValueParams, build_collision_graph, first_failure_mean, run_failure_harness
from seeding import child_seed, rng_for
from solvers import ENERGY_TOL, SolverConfig, descend_sampleset, exact_mvvc, exact_solve, quantile_energy, sa_sample

logger = logging.getLogger(__name__)

CURVE_COLUMNS = ["rejection_index", "mean_filling_factor", "stderr", "n"]
SWEEP_COLUMNS = ["scale", "sweeps", "sample_size", "quantile", "variant", "mean_energy", "stderr", "n"]
EFFECT_COLUMNS = [
    "instance", "ground_energy", "pre_quantile", "post_quantile", "pre_ground_share", "post_ground_share",
    "below_fraction", "z", "improved", "converged", "iterations", "first_delta", "last_delta",
]


def problem_from_stream(stream, rng: np.random.Generator, max_duration: float | None = None):
    """Collision graph of `stream` with values (D_i + U{-3..3}) / max D; returns (problem, durations)."""
    if not stream:
        raise UsageError("Stream is empty")
    graph = build_collision_graph(stream)
    durations = {r.id: r.duration for r in stream}
    max_duration = max_duration or max(durations.values())
    return MvvcProblem(graph, random_values(graph, max_duration, durations, rng)), durations


def compare_methods(methods, seeds, campus: CampusConfig, demand: DemandModel = DemandModel(),
                    warmup: str = "same", params: ValueParams = ValueParams(), workers: int = 1,
                    node_budget: int | None = None, out_dir=None) -> dict:
    """Failure curve per method, every method fed the same stream per seed; optionally written as curve_<method>.csv."""
    methods = list(methods)
    seeds = list(seeds)
    if not seeds:
        raise UsageError("At least one seed is required")
    unknown = [m for m in methods if m not in METHODS]
    if unknown or not methods:
        raise UsageError(f"Unknown methods {unknown}; expected some of {', '.join(METHODS)}")
    extra = {"node_budget": node_budget} if node_budget else {}
    curves = {}
    for method in methods:
        print(f"Running {method} over {len(seeds)} seeds...")
        curve, runs = run_failure_harness(method, seeds, campus, demand, warmup=warmup, params=params,
                                          workers=workers, **extra)
        curves[method] = curve
        print(f"  {method}: mean filling factor at first failure {first_failure_mean(runs):.4f}")
        if out_dir is not None:
            path = Path(out_dir) / f"curve_{method}.csv"
            path.parent.mkdir(parents=True, exist_ok=True)
            curve.to_csv(path, index=False, lineterminator="\n", float_format="%.10g")
    return curves


def sweep_anneal(scales, sweeps_grid, sample_sizes, quantiles=(0.05, 0.25), realizations: int = 7,
                 demand: DemandModel = DemandModel(), base: SolverConfig = SolverConfig(), seed: int = 0,
                 days: int | None = None) -> pd.DataFrame:
    """
    Quantile energy against anneal length, raw and after steepest descent.

    One MVVC instance per (scale, realization) from a `days`-long stream, the demand
    model's horizon by default. Energies are divided by the scale factor and averaged
    over realizations.
    """
    if not (scales and sweeps_grid and sample_sizes and quantiles):
        raise UsageError("Sweep grid is empty")
    rows = []
    for s in scales:
        for r in range(realizations):
            rng = rng_for(seed, "sweep", s, r)
            stream = generate_stream(demand, days, rng, scale=s)
            if not stream:
                logger.warning("scale %d realization %d: empty stream, skipped", s, r)
                continue
            problem, _ = problem_from_stream(stream, rng)
            _, ising = mvvc_chain(problem, redistribute=True)
            for sweeps in sweeps_grid:
                for size in sample_sizes:
                    config = replace(base, num_samples=size, sweeps=sweeps,
                                     seed=child_seed(seed, "sweep", s, r, sweeps, size))
                    raw = sa_sample(ising, config)
                    descended = descend_sampleset(ising, raw)
                    for q in quantiles:
                        for variant, sampleset in (("raw", raw), ("descent", descended)):
                            rows.append({
                                "scale": s, "sweeps": sweeps, "sample_size": size, "quantile": q,
                                "variant": variant, "realization": r,
                                "energy": quantile_energy(sampleset, q) / s,
                            })
            logger.info("scale %d realization %d done (%d spins)", s, r, ising.num_spins)
    frame = pd.DataFrame(rows)
    if frame.empty:
        return pd.DataFrame(columns=SWEEP_COLUMNS)
    keys = ["scale", "sweeps", "sample_size", "quantile", "variant"]
    grouped = frame.groupby(keys, sort=True)["energy"]
    out = grouped.agg(mean_energy="mean", std="std", n="count").reset_index()
    out["stderr"] = (out["std"] / np.sqrt(out["n"])).fillna(0.0)
    return out[SWEEP_COLUMNS]


def random_instance(num_vertices: int, edge_prob: float, rng: np.random.Generator) -> MvvcProblem:
    """G(n, p) graph with at least one edge; values (D + U{-3..3}) / max D for durations D drawn from 1..7."""
    if not 0 < edge_prob <= 1 or num_vertices < 2:
        raise UsageError("Need edge_prob in (0, 1] and at least two vertices")
    graph = nx.empty_graph(num_vertices)
    while graph.number_of_edges() == 0:
        graph = nx.gnp_random_graph(num_vertices, edge_prob, seed=int(rng.integers(2 ** 31)))
    durations = {v: int(rng.integers(1, 8)) for v in graph.nodes}
    return MvvcProblem(graph, random_values(graph, max(durations.values()), durations, rng))


def success_rate(problem: MvvcProblem, device: DeviceState, config: SolverConfig, optimum: float,
                 values_for_device: dict | None = None) -> float:
    """Fraction of raw device samples whose selection is independent and reaches the optimum value."""
    submitted = MvvcProblem(problem.graph, values_for_device or problem.values)
    _, ising = mvvc_chain(submitted, redistribute=True)
    device.rest()
    sampleset = device_sample(device, ising, config)
    bits = spins_to_bits(decode_auxiliary(sampleset.samples, ising))
    hits = 0
    for row, count in zip(bits, sampleset.counts):
        chosen = problem.selection(row)
        if problem.is_independent(chosen) and problem.value_of(chosen) >= optimum - 1e-9:
            hits += int(count)
    return hits / sampleset.num_samples


def scale_values_experiment(instances: int, noise, config: SolverConfig, schedule: CalibrationSchedule = CalibrationSchedule(),
                            num_vertices: int = 8, edge_prob: float = 0.3, seed: int = 0,
                            num_qubits: int = 64) -> pd.DataFrame:
    """
    Paired success rates on seeded random instances: unscaled values against values
    scaled by the fitted widths, both on the same calibrated device.
    """
    rows = []
    for k in range(instances):
        rng = rng_for(seed, "scale-values", k)
        problem = random_instance(num_vertices, edge_prob, rng)
        optimum = problem.value_of(exact_mvvc(problem))
        device = create_device(replace(noise, seed=child_seed(seed, "scale-values", "device", k)), num_qubits)
        try:
            state = calibrate_device(device, problem.graph, replace(schedule, seed=child_seed(seed, "calibration", k)),
                                     config)
        except CalibrationError as e:
            logger.warning("instance %d: calibration failed: %s", k, e)
            continue
        if not state.widths:
            logger.warning("instance %d: no vertex width could be fitted", k)
            continue
        fallback = float(np.median(list(state.widths.values())))
        widths = {v: state.widths.get(v, fallback) for v in problem.graph.nodes}
        scaled = scaled_values(problem.values, widths, schedule.width_direction)
        run = replace(config, seed=child_seed(seed, "scale-values", "run", k))
        rows.append({
            "instance": k,
            "optimum": optimum,
            "unscaled_rate": success_rate(problem, device, run, optimum),
            "scaled_rate": success_rate(problem, device, run, optimum, scaled),
        })
        print(f"  instance {k}: unscaled {rows[-1]['unscaled_rate']:.3f}, scaled {rows[-1]['scaled_rate']:.3f}")
    return pd.DataFrame(rows, columns=["instance", "optimum", "unscaled_rate", "scaled_rate"])


def _share_below(sampleset, energy: float) -> float:
    return float(sampleset.counts @ (sampleset.energies < energy)) / sampleset.num_samples


def calibration_effect(instances: int, noise, config: SolverConfig, schedule: CalibrationSchedule = CalibrationSchedule(),
                       num_vertices: int = 16, edge_prob: float = 0.3, quantile: float = 0.25, seed: int = 0,
                       num_qubits: int = 64) -> pd.DataFrame:
    """
    Quantile energy of seeded random instances on a fresh noisy device, before and after
    calibrating it on the instance graph.

    `below_fraction` is the share of post-calibration samples strictly below the
    pre-calibration quantile. Without any change it would be at most `quantile`, so
    `z` measures it against the spread of two independent quantile estimates;
    `improved` needs a lower quantile and z >= 3.
    """
    if not 0 < quantile < 1:
        raise UsageError("quantile must be in (0, 1)")
    rows = []
    for k in range(instances):
        problem = random_instance(num_vertices, edge_prob, rng_for(seed, "calibration-effect", k))
        _, ising = mvvc_chain(problem, redistribute=True)
        ground = exact_solve(ising).lowest_energy
        device = create_device(replace(noise, seed=child_seed(seed, "calibration-effect", "device", k)), num_qubits)
        run = replace(config, seed=child_seed(seed, "calibration-effect", "run", k))
        device.rest()
        before = device_sample(device, ising, run)
        try:
            state = calibrate_device(device, problem.graph,
                                     replace(schedule, seed=child_seed(seed, "calibration-effect", "calibration", k)),
                                     config, fit_widths=False)
        except CalibrationError as e:
            logger.warning("instance %d: calibration failed: %s", k, e)
            continue
        device.rest()
        after = device_sample(device, ising, run)

        pre, post = quantile_energy(before, quantile), quantile_energy(after, quantile)
        below = _share_below(after, pre - ENERGY_TOL)
        spread = math.sqrt(quantile * (1 - quantile) * (1 / before.num_samples + 1 / after.num_samples))
        z = (below - quantile) / spread
        rows.append({
            "instance": k,
            "ground_energy": ground,
            "pre_quantile": pre,
            "post_quantile": post,
            "pre_ground_share": _share_below(before, ground + ENERGY_TOL),
            "post_ground_share": _share_below(after, ground + ENERGY_TOL),
            "below_fraction": below,
            "z": z,
            "improved": bool(post < pre - ENERGY_TOL and z >= 3.0),
            "converged": state.converged,
            "iterations": state.iterations,
            "first_delta": state.trace[0],
            "last_delta": state.trace[-1],
        })
        print(f"  instance {k}: quantile {pre:.4f} -> {post:.4f} (z = {z:.1f}), "
              f"{state.iterations} calibration round(s)")
    return pd.DataFrame(rows, columns=EFFECT_COLUMNS)
