#!/usr/bin/env python3
"""
CLI for room-scheduling experiments and the annealer pipeline.

Usage:
  uv run annealsched_cli.py gen-stream [--days N] [--scale S] [--seed N] [--out stream.csv]
  uv run annealsched_cli.py schedule --method METHOD --stream stream.csv [--scale S] [--out results.csv]
  uv run annealsched_cli.py compare [--methods M1,M2] [--seeds N] [--scale S] [--warmup same|greedy] [--out-dir DIR]
  uv run annealsched_cli.py qubo (--in problem.json | --stream stream.csv) [--xor] [--m-aux M] [--ising] [--out model.txt]
  uv run annealsched_cli.py solve --model model.txt [--solver exact|sa] [--samples N] [--sweeps K] [--device SPEC] [--out samples.csv]
  uv run annealsched_cli.py calibrate --graph problem.json [--device noisy:SEED] [--trajectories S] [--out calib.json]
  uv run annealsched_cli.py sweep-anneal [--scales 1,2] [--sweeps 10,100,1000] [--samples 1000] [--out sweep.csv]
  uv run annealsched_cli.py scale-values [--instances N] [--device noisy:SEED] [--out scale_values.csv]
  uv run annealsched_cli.py calibration-effect [--instances N] [--device noisy:SEED] [--out calibration_effect.csv]

Examples:
  # Two months of reservations for a campus twice the base size
  uv run annealsched_cli.py gen-stream --days 60 --scale 2 --seed 7 --out output/stream.csv

  # Failure curves for every method over 50 streams
  uv run annealsched_cli.py compare --seeds 50 --scale 2 --workers 4

  # Collision-graph QUBO of a stream, annealed 1000 times
  uv run annealsched_cli.py qubo --stream output/stream.csv --out output/model.txt --problem-out output/problem.json
  uv run annealsched_cli.py solve --model output/model.txt --solver sa --samples 1000 --sweeps 1000

  # Calibrate a simulated noisy device on that graph, then solve with it
  uv run annealsched_cli.py calibrate --graph output/problem.json --device noisy:3 --out output/calib.json
  uv run annealsched_cli.py solve --model output/model.txt --device noisy:3 --calibration output/calib.json

Exit codes: 0 ok, 1 unexpected error, 2 usage, 3 configuration, 4 capacity, 5 calibration.
"""
import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

from annealer_sim import parse_device_spec
from calibration import apply_calibration, calibrate_device, read_calibration, write_calibration
from config import load_config
from demand_model import generate_stream, read_stream, write_stream
from errors import AnnealSchedError, UsageError
from experiments import calibration_effect, compare_methods, problem_from_stream, scale_values_experiment, sweep_anneal
from qubo_ising import (
    IsingModel,
    full_problem_qubo,
    mvvc_chain,
    qubo_to_ising,
    read_model,
    read_problem,
    spins_to_bits,
    write_model,
    write_problem,
)
from scheduling import METHODS, schedule_stream
from seeding import rng_for
from solvers import SampleSet, descend_sampleset, exact_solve, sa_sample, sample_qubo, write_samples


def _out_path(args, config, default_name) -> Path:
    return Path(args.out) if args.out else config.output_dir / default_name


def _number_list(text, kind=int):
    try:
        return [kind(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise UsageError(f"Cannot parse list {text!r}: {e}") from e


def cmd_gen_stream(config, args):
    """Generate a reservation stream."""
    scale = args.scale or config.scale
    days = args.days if args.days is not None else config.demand.horizon_days
    stream = generate_stream(config.demand, days, rng_for(args.seed, "stream"), scale=scale)
    path = write_stream(stream, _out_path(args, config, "stream.csv"))
    print(f"Wrote {len(stream)} requests over {days} days (scale {scale}) to {path}")


def cmd_schedule(config, args):
    """Run one scheduling method over a stream."""
    scale = args.scale or config.scale
    stream = read_stream(args.stream)
    campus = config.campus(scale)
    print(f"Scheduling {len(stream)} requests with {args.method} on {campus.total_beds} beds...")
    state, decisions = schedule_stream(args.method, stream, campus, config.values, node_budget=config.node_budget)
    path = _out_path(args, config, f"schedule_{args.method}.csv")
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["id", "start_day", "duration", "beds", "accepted", "rooms"])
        for request in stream:
            rooms = " ".join(str(r) for r in sorted(state.assignments.get(request.id, []))) if decisions[request.id] else ""
            writer.writerow([request.id, request.start_day, request.duration, request.beds_requested,
                             int(decisions[request.id]), rooms])
    accepted = sum(decisions.values())
    print(f"Accepted {accepted}/{len(stream)}; filling factor {state.filling_factor():.4f}")
    print(f"Wrote {path}")


def cmd_compare(config, args):
    """Failure curves of several methods on identical streams."""
    methods = [m.strip() for m in args.methods.split(",")] if args.methods else list(config.methods)
    seeds = list(range(args.seeds)) if args.seeds is not None else list(config.seeds)
    campus = config.campus(args.scale or config.scale)
    out_dir = Path(args.out_dir) if args.out_dir else config.output_dir
    compare_methods(methods, seeds, campus, config.demand, warmup=args.warmup, params=config.values,
                    workers=args.workers or config.workers, node_budget=config.node_budget, out_dir=out_dir)
    print(f"Wrote {len(methods)} curve file(s) to {out_dir}")


def cmd_qubo(config, args):
    """Build a QUBO (or Ising) model from a problem file or a stream."""
    if bool(args.input) == bool(args.stream):
        raise UsageError("Give exactly one of --in and --stream")
    if args.transform:
        _apply_transform(args)
    if args.formulation == "full":
        if not args.stream:
            raise UsageError("The full formulation needs --stream")
        stream = read_stream(args.stream)
        model = full_problem_qubo(stream, config.campus(args.scale or config.scale).rooms,
                                  penalty=args.penalty, acceptance_bits=args.acceptance_bits)
        if args.ising:
            model = qubo_to_ising(model)
    else:
        if args.input:
            problem = read_problem(args.input)
            durations = None
        else:
            problem, durations = problem_from_stream(read_stream(args.stream), rng_for(args.seed, "values"))
        if args.problem_out:
            write_problem(problem, args.problem_out, durations)
            print(f"Wrote problem ({problem.graph.number_of_nodes()} vertices) to {args.problem_out}")
        qubo, ising = mvvc_chain(problem, redistribute=not args.no_redistribute, xor=args.xor,
                                 m_aux=args.m_aux, edge_penalty=args.penalty)
        model = ising if (args.ising or args.xor or args.m_aux > 1) else qubo
    path = write_model(model, _out_path(args, config, "model.txt"))
    print(f"Wrote {model.kind} model with {model.num_vars} variables to {path}")


def _apply_transform(args):
    """Map --transform {mvvc|redistribute|ising|xor|split:M} onto the individual flags."""
    name, _, count = args.transform.partition(":")
    if name == "mvvc":
        args.no_redistribute = True
    elif name == "ising":
        args.ising = True
    elif name == "xor":
        args.xor = True
    elif name == "split" and count.isdigit() and int(count) >= 1:
        args.xor, args.m_aux = True, int(count)
    elif name != "redistribute":
        raise UsageError(f"Unknown transform {args.transform!r}")


def cmd_solve(config, args):
    """Solve a model exactly or by annealing."""
    model = read_model(args.model)
    solver = replace(config.solver, seed=args.seed if args.seed is not None else config.solver.seed)
    if args.samples:
        solver = replace(solver, num_samples=args.samples)
    if args.sweeps:
        solver = replace(solver, sweeps=args.sweeps)
    if args.workers:
        solver = replace(solver, workers=args.workers)

    if args.solver == "exact":
        if args.device or args.calibration:
            raise UsageError("--device and --calibration only apply to the sa solver")
        print(f"Solving {model.num_vars}-variable {model.kind} model exactly...")
        result = exact_solve(model)
    else:
        spec = args.device or config.device
        print(f"Annealing {model.num_vars}-variable {model.kind} model: {solver.num_samples} samples, "
              f"{solver.sweeps} sweeps, device {spec}")
        result = _anneal(model, solver, spec, config, args.calibration)
        if args.descend:
            result = descend_sampleset(model, result)
    path = write_samples(result, _out_path(args, config, "samples.csv"))
    print(f"Lowest energy {result.lowest_energy!r} ({len(result)} distinct configurations); wrote {path}")


def _anneal(model, solver, spec, config, calibration_path) -> SampleSet:
    if spec == "ideal" and not calibration_path:
        return sa_sample(model, solver) if isinstance(model, IsingModel) else sample_qubo(model, solver)
    device = parse_device_spec(spec, config.noise, config.num_qubits)
    if calibration_path:
        apply_calibration(device, read_calibration(calibration_path))
    ising = model if isinstance(model, IsingModel) else qubo_to_ising(model)
    spins = device.sample(ising, solver)
    if isinstance(model, IsingModel):
        return spins
    return SampleSet.from_samples(model, spins_to_bits(spins.samples), spins.counts)


def cmd_calibrate(config, args):
    """Calibrate a device against the cover problem of one graph."""
    problem = read_problem(args.graph)
    device = parse_device_spec(args.device or config.device, config.noise, config.num_qubits)
    schedule = config.calibration
    if args.trajectories:
        schedule = replace(schedule, trajectories=args.trajectories)
    if args.shots:
        schedule = replace(schedule, shots=args.shots)
    if args.seed is not None:
        schedule = replace(schedule, seed=args.seed)
    print(f"Calibrating {args.device or config.device} on {problem.graph.number_of_nodes()} vertices, "
          f"{problem.graph.number_of_edges()} edges...")
    state = calibrate_device(device, problem.graph, schedule, config.solver, fit_widths=not args.no_widths)
    path = write_calibration(state, _out_path(args, config, "calib.json"))
    print(f"sigma {state.sigma:.5f}; {state.iterations} round(s); mean |D| trace "
          + " ".join(f"{d:.4f}" for d in state.trace))
    if state.failed_vertices:
        print(f"Width fit failed for vertices {sorted(state.failed_vertices)}")
    print(f"Wrote {path}")


def cmd_sweep_anneal(config, args):
    """Quantile energy against anneal length."""
    scales = _number_list(args.scales) if args.scales else list(config.scales)
    sweeps = _number_list(args.sweeps) if args.sweeps else list(config.sweeps_grid)
    sizes = _number_list(args.samples) if args.samples else list(config.sample_sizes)
    quantiles = _number_list(args.quantiles, float) if args.quantiles else list(config.quantiles)
    realizations = args.realizations or config.realizations
    seed = args.seed if args.seed is not None else config.seed
    print(f"Sweeping {len(scales)} scale(s) x {len(sweeps)} anneal length(s) x {len(sizes)} sample size(s), "
          f"{realizations} realizations...")
    frame = sweep_anneal(scales, sweeps, sizes, quantiles, realizations, config.demand, config.solver, seed)
    path = _out_path(args, config, "sweep_anneal.csv")
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n", float_format="%.10g")
    print(f"Wrote {len(frame)} rows to {path}")


def cmd_scale_values(config, args):
    """Success rate with and without width-scaled values."""
    spec = args.device or config.device
    device_noise = parse_device_spec(spec, config.noise).noise
    seed = args.seed if args.seed is not None else config.seed
    solver = replace(config.solver, num_samples=args.samples) if args.samples else config.solver
    print(f"Comparing scaled and unscaled values on {args.instances} instances, device {spec}...")
    frame = scale_values_experiment(args.instances, device_noise, solver, config.calibration,
                                    num_vertices=args.vertices, seed=seed, num_qubits=config.num_qubits)
    path = _out_path(args, config, "scale_values.csv")
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n", float_format="%.10g")
    if len(frame):
        print(f"Mean success: unscaled {frame['unscaled_rate'].mean():.3f}, scaled {frame['scaled_rate'].mean():.3f}")
    print(f"Wrote {path}")


def cmd_calibration_effect(config, args):
    """Quantile energy before and after calibration."""
    spec = args.device or config.device
    device_noise = parse_device_spec(spec, config.noise).noise
    seed = args.seed if args.seed is not None else config.seed
    print(f"Calibrating a fresh device for each of {args.instances} instances, device {spec}...")
    frame = calibration_effect(args.instances, device_noise, config.solver, config.calibration,
                               num_vertices=args.vertices, quantile=args.quantile, seed=seed,
                               num_qubits=config.num_qubits)
    path = _out_path(args, config, "calibration_effect.csv")
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n", float_format="%.10g")
    print(f"Improved on {int(frame['improved'].sum())} of {len(frame)} instances")
    print(f"Wrote {path}")


def build_parser():
    parser = argparse.ArgumentParser(
        description="Room scheduling with annealer-style solvers",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__,
    )
    parser.add_argument("--config", help="Config file (default: $ANNEALSCHED_CONFIG or ./annealsched.ini)")
    parser.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    subparsers = parser.add_subparsers(dest="command", help="Command to run")

    gen_parser = subparsers.add_parser("gen-stream", help="Generate a reservation stream")
    gen_parser.add_argument("--days", type=int, help="Days of arrivals (default: horizon_days from config)")
    gen_parser.add_argument("--scale", type=int, help="Campus scaling factor (default: from config)")
    gen_parser.add_argument("--seed", type=int, default=0, help="Random seed (default: 0)")
    gen_parser.add_argument("--out", help="Output CSV")

    schedule_parser = subparsers.add_parser("schedule", help="Schedule a stream with one method")
    schedule_parser.add_argument("--method", required=True, choices=METHODS)
    schedule_parser.add_argument("--stream", required=True, help="Stream CSV")
    schedule_parser.add_argument("--scale", type=int, help="Campus scaling factor (default: from config)")
    schedule_parser.add_argument("--out", help="Output CSV")

    compare_parser = subparsers.add_parser("compare", help="Failure curves per method")
    compare_parser.add_argument("--methods", help=f"Comma-separated methods from {','.join(METHODS)}")
    compare_parser.add_argument("--seeds", type=int, help="Number of streams (default: from config)")
    compare_parser.add_argument("--scale", type=int, help="Campus scaling factor (default: from config)")
    compare_parser.add_argument("--warmup", choices=["same", "greedy"], default="same",
                                help="Warm-up method (default: same as the method under test)")
    compare_parser.add_argument("--workers", type=int, help="Worker processes")
    compare_parser.add_argument("--out-dir", help="Directory for curve_<method>.csv")

    qubo_parser = subparsers.add_parser("qubo", help="Build a model file")
    qubo_parser.add_argument("--in", dest="input", help="Problem JSON (vertices, edges, values)")
    qubo_parser.add_argument("--stream", help="Stream CSV")
    qubo_parser.add_argument("--formulation", choices=["mvvc", "full"], default="mvvc")
    qubo_parser.add_argument("--no-redistribute", action="store_true", help="Keep values on vertices")
    qubo_parser.add_argument("--xor", action="store_true", help="Move linear terms onto an auxiliary spin")
    qubo_parser.add_argument("--m-aux", type=int, default=1, help="Copies of the auxiliary spin (default: 1)")
    qubo_parser.add_argument("--ising", action="store_true", help="Write the Ising form")
    qubo_parser.add_argument("--penalty", type=float, default=None, help="Edge / constraint penalty")
    qubo_parser.add_argument("--acceptance-bits", action="store_true", help="Full formulation with rejection bits")
    qubo_parser.add_argument("--scale", type=int, help="Campus scaling factor for the full formulation")
    qubo_parser.add_argument("--seed", type=int, default=0, help="Seed for stream values (default: 0)")
    qubo_parser.add_argument("--transform", help="mvvc | redistribute | ising | xor | split:M")
    qubo_parser.add_argument("--problem-out", help="Also write the problem JSON")
    qubo_parser.add_argument("--out", help="Output model file")

    solve_parser = subparsers.add_parser("solve", help="Solve a model file")
    solve_parser.add_argument("--model", required=True, help="Model file")
    solve_parser.add_argument("--solver", choices=["exact", "sa"], default="sa")
    solve_parser.add_argument("--samples", type=int, help="Number of anneals")
    solve_parser.add_argument("--sweeps", type=int, help="Sweeps per anneal")
    solve_parser.add_argument("--seed", type=int, help="Sampler seed")
    solve_parser.add_argument("--workers", type=int, help="Sampler threads")
    solve_parser.add_argument("--device", help="ideal or noisy:<seed>")
    solve_parser.add_argument("--calibration", help="calib.json to apply to the device")
    solve_parser.add_argument("--descend", action="store_true", help="Steepest-descent post-processing")
    solve_parser.add_argument("--out", help="Output samples CSV")

    calibrate_parser = subparsers.add_parser("calibrate", help="Calibrate a simulated device")
    calibrate_parser.add_argument("--graph", required=True, help="Problem JSON with the graph")
    calibrate_parser.add_argument("--device", help="ideal or noisy:<seed>")
    calibrate_parser.add_argument("--trajectories", type=int, help="Monte Carlo trajectories")
    calibrate_parser.add_argument("--shots", type=int, help="Samples per batch")
    calibrate_parser.add_argument("--seed", type=int, help="Calibration seed")
    calibrate_parser.add_argument("--no-widths", action="store_true", help="Skip per-vertex sigmoid fits")
    calibrate_parser.add_argument("--out", help="Output calib.json")

    sweep_parser = subparsers.add_parser("sweep-anneal", help="Quantile energy against anneal length")
    sweep_parser.add_argument("--scales", help="Comma-separated scaling factors")
    sweep_parser.add_argument("--sweeps", help="Comma-separated sweep counts")
    sweep_parser.add_argument("--samples", help="Comma-separated sample sizes")
    sweep_parser.add_argument("--quantiles", help="Comma-separated quantiles")
    sweep_parser.add_argument("--realizations", type=int, help="Instances per scale (default: 7)")
    sweep_parser.add_argument("--seed", type=int, help="Seed")
    sweep_parser.add_argument("--out", help="Output CSV")

    scale_parser = subparsers.add_parser("scale-values", help="Scaled against unscaled values")
    scale_parser.add_argument("--instances", type=int, default=20, help="Random instances (default: 20)")
    scale_parser.add_argument("--vertices", type=int, default=8, help="Vertices per instance (default: 8)")
    scale_parser.add_argument("--samples", type=int, help="Samples per run")
    scale_parser.add_argument("--device", help="noisy:<seed>")
    scale_parser.add_argument("--seed", type=int, help="Seed")
    scale_parser.add_argument("--out", help="Output CSV")

    effect_parser = subparsers.add_parser("calibration-effect", help="Quantile energy before and after calibration")
    effect_parser.add_argument("--instances", type=int, default=10, help="Random instances (default: 10)")
    effect_parser.add_argument("--vertices", type=int, default=16, help="Vertices per instance (default: 16)")
    effect_parser.add_argument("--quantile", type=float, default=0.25, help="Energy quantile (default: 0.25)")
    effect_parser.add_argument("--device", help="noisy:<seed>")
    effect_parser.add_argument("--seed", type=int, help="Seed")
    effect_parser.add_argument("--out", help="Output CSV")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        sys.exit(UsageError.exit_code)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    if getattr(args, "penalty", 0) is None:
        args.penalty = 10.0 if args.formulation == "full" else 1.0

    try:
        config = load_config(args.config)

        commands = {
            "gen-stream": cmd_gen_stream,
            "schedule": cmd_schedule,
            "compare": cmd_compare,
            "qubo": cmd_qubo,
            "solve": cmd_solve,
            "calibrate": cmd_calibrate,
            "sweep-anneal": cmd_sweep_anneal,
            "scale-values": cmd_scale_values,
            "calibration-effect": cmd_calibration_effect,
        }

        commands[args.command](config, args)

    except AnnealSchedError as e:
        print(f"{e.category} error: {e}", file=sys.stderr)
        if getattr(e, "diagnostics", None):
            for key, value in e.diagnostics.items():
                print(f"  {key}: {value}", file=sys.stderr)
        if e.exit_code == 3:
            print("\nCheck annealsched.ini (copy annealsched.ini.example to start).", file=sys.stderr)
        sys.exit(e.exit_code)
    except Exception as e:
        print(f"Error: {e}", file=sys.stderr)
        import traceback
        traceback.print_exc()
        sys.exit(1)
    return 0


if __name__ == "__main__":
    main()
