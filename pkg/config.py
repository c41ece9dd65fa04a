"""
Configuration for annealsched runs.

Reads annealsched.ini (copy annealsched.ini.example to start). The file is
found through ANNEALSCHED_CONFIG, then the working directory; without one the
built-in defaults below apply. ANNEALSCHED_OUTPUT_DIR overrides output_dir.
"""
import configparser
import os
from dataclasses import dataclass, field
from pathlib import Path

from annealer_sim import DEFAULT_NOISY, NoiseModel
from calibration import CalibrationSchedule
from demand_model import DEFAULT_DURATION_HISTOGRAM, DEFAULT_ROOM_MIX, DemandModel, build_campus
from errors import ConfigurationError
from scheduling import DEFAULT_NODE_BUDGET, METHODS, ValueParams
from solvers import SolverConfig

CONFIG_ENV = "ANNEALSCHED_CONFIG"
OUTPUT_ENV = "ANNEALSCHED_OUTPUT_DIR"
CONFIG_NAME = "annealsched.ini"


@dataclass(frozen=True)
class ExperimentConfig:
    demand: DemandModel = field(default_factory=DemandModel)
    room_mix: dict = field(default_factory=lambda: dict(DEFAULT_ROOM_MIX))
    scale: int = 2
    values: ValueParams = field(default_factory=ValueParams)
    node_budget: int = DEFAULT_NODE_BUDGET
    solver: SolverConfig = field(default_factory=SolverConfig)
    device: str = "ideal"
    noise: NoiseModel = DEFAULT_NOISY
    num_qubits: int = 64
    calibration: CalibrationSchedule = field(default_factory=CalibrationSchedule)
    methods: tuple = METHODS
    seeds: tuple = tuple(range(50))
    seed: int = 0
    sweeps_grid: tuple = (10, 100, 1000)
    sample_sizes: tuple = (1000,)
    quantiles: tuple = (0.05, 0.25)
    scales: tuple = (1, 2)
    realizations: int = 7
    workers: int = 1
    output_dir: Path = Path("output")

    def __post_init__(self):
        if not self.seeds:
            raise ConfigurationError("At least one seed is required")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ConfigurationError(f"Unknown methods {unknown}; expected {', '.join(METHODS)}")

    def campus(self, scale: int | None = None):
        return build_campus(self.room_mix, scale or self.scale)


def _pairs(text, key=int, value=float) -> dict:
    """Parse 'k:v, k:v' lists."""
    out = {}
    for item in filter(None, (part.strip() for part in text.split(","))):
        k, _, v = item.partition(":")
        out[key(k.strip())] = value(v.strip())
    return out


def _numbers(text, kind=int) -> tuple:
    return tuple(kind(part.strip()) for part in text.split(",") if part.strip())


def parse_seeds(text: str) -> tuple:
    """'50' means seeds 0..49; '3,7,11' lists seeds."""
    text = text.strip()
    if "," in text:
        return _numbers(text)
    return tuple(range(int(text)))


def find_config_file() -> Path | None:
    env = os.environ.get(CONFIG_ENV)
    if env:
        return Path(env)
    local = Path.cwd() / CONFIG_NAME
    return local if local.exists() else None


def load_config(path=None) -> ExperimentConfig:
    """ExperimentConfig from an INI file; defaults for anything the file leaves out."""
    path = Path(path) if path is not None else find_config_file()
    parser = configparser.ConfigParser()
    if path is not None:
        if not path.exists():
            raise ConfigurationError(f"Config file not found: {path}")
        parser.read(path, encoding="utf-8")

    try:
        config = _from_parser(parser)
    except (ValueError, KeyError) as e:
        if isinstance(e, ConfigurationError):
            raise
        raise ConfigurationError(f"{path}: {e}") from e

    override = os.environ.get(OUTPUT_ENV)
    if override:
        object.__setattr__(config, "output_dir", Path(override))
    return config


def _from_parser(parser: configparser.ConfigParser) -> ExperimentConfig:
    def section(name):
        return parser[name] if parser.has_section(name) else {}

    demand = section("demand")
    campus = section("campus")
    solver = section("solver")
    device = section("device")
    calib = section("calibration")
    experiment = section("experiment")
    base = ExperimentConfig()

    demand_model = DemandModel(
        gamma_shape=float(demand.get("gamma_shape", 5.86)),
        gamma_scale=float(demand.get("gamma_scale", 5.72)),
        duration_histogram=_pairs(demand["durations"]) if "durations" in demand else dict(DEFAULT_DURATION_HISTOGRAM),
        horizon_days=int(demand.get("horizon_days", 30)),
        arrival_rate=float(demand.get("arrival_rate", 0.6)),
    )
    values = ValueParams(
        alpha=float(campus.get("alpha", 2.0)),
        occupancy_exponent=float(campus.get("occupancy_exponent", 3.0)),
        hybrid2_alpha=float(campus.get("hybrid2_alpha", 2.0)),
        occupancy_mode=campus.get("occupancy_mode", "expected"),
    )
    solver_config = SolverConfig(
        num_samples=int(solver.get("num_samples", 1000)),
        sweeps=int(solver.get("sweeps", 1000)),
        beta_initial=float(solver.get("beta_initial", 0.1)),
        beta_final=float(solver.get("beta_final", 10.0)),
        seed=int(solver.get("seed", 0)),
        workers=int(solver.get("workers", 1)),
    )
    noise = NoiseModel(
        field_bias=float(device.get("field_bias", DEFAULT_NOISY.field_bias)),
        coupling_bias=float(device.get("coupling_bias", DEFAULT_NOISY.coupling_bias)),
        readout_flip_prob=float(device.get("readout_flip_prob", DEFAULT_NOISY.readout_flip_prob)),
        autocorrelation_strength=float(device.get("autocorrelation_strength", DEFAULT_NOISY.autocorrelation_strength)),
    )
    defaults = CalibrationSchedule()
    schedule = CalibrationSchedule(
        epsilon0=float(calib.get("epsilon0", defaults.epsilon0)),
        decay=float(calib.get("decay", defaults.decay)),
        max_iterations=int(calib.get("max_iterations", defaults.max_iterations)),
        divergence_patience=int(calib.get("divergence_patience", defaults.divergence_patience)),
        shots=int(calib.get("shots", defaults.shots)),
        replicates=int(calib.get("replicates", defaults.replicates)),
        stop_constant=float(calib.get("stop_constant", defaults.stop_constant)),
        trajectories=int(calib.get("trajectories", defaults.trajectories)),
        weighting=calib.get("weighting", defaults.weighting),
        flux_max_iterations=int(calib.get("flux_max_iterations", defaults.flux_max_iterations)),
        offset_grid=_numbers(calib["offset_grid"], float) if "offset_grid" in calib else defaults.offset_grid,
        width_direction=calib.get("width_direction", defaults.width_direction),
        seed=int(calib.get("seed", defaults.seed)),
    )
    return ExperimentConfig(
        demand=demand_model,
        room_mix=_pairs(campus["rooms"], int, int) if "rooms" in campus else dict(DEFAULT_ROOM_MIX),
        scale=int(campus.get("scale", base.scale)),
        values=values,
        node_budget=int(campus.get("node_budget", base.node_budget)),
        solver=solver_config,
        device=device.get("spec", base.device),
        noise=noise,
        num_qubits=int(device.get("num_qubits", base.num_qubits)),
        calibration=schedule,
        methods=tuple(m.strip() for m in experiment["methods"].split(",")) if "methods" in experiment else base.methods,
        seeds=parse_seeds(experiment["seeds"]) if "seeds" in experiment else base.seeds,
        seed=int(experiment.get("seed", base.seed)),
        sweeps_grid=_numbers(experiment["sweeps"]) if "sweeps" in experiment else base.sweeps_grid,
        sample_sizes=_numbers(experiment["sample_sizes"]) if "sample_sizes" in experiment else base.sample_sizes,
        quantiles=_numbers(experiment["quantiles"], float) if "quantiles" in experiment else base.quantiles,
        scales=_numbers(experiment["scales"]) if "scales" in experiment else base.scales,
        realizations=int(experiment.get("realizations", base.realizations)),
        workers=int(experiment.get("workers", base.workers)),
        output_dir=Path(experiment.get("output_dir", str(base.output_dir))),
    )
