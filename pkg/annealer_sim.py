"""
An imperfect annealer: the classical sampler behind a device that quietly
distorts what it is given.

A device draws, once, a systematic field offset per qubit and a coupler offset
per qubit pair. Every batch is annealed on

    submitted model + applied QUBO corrections + flux offsets
                    + hidden offsets + transient field

and each read-out spin flips with probability readout_flip_prob. The transient
field is -autocorrelation_strength times the previous batch's magnetization and
is cleared by rest(). Returned energies are those of the submitted model.

Logical spin i runs on qubit i; there is no embedding.
"""
import logging
from dataclasses import dataclass, replace

import numpy as np

from errors import ArgumentError, CapacityError, ConfigurationError
from qubo_ising import IsingModel, QuboModel, qubo_to_ising
from seeding import child_seed, rng_for
from solvers import SampleSet, SolverConfig, anneal_spins

logger = logging.getLogger(__name__)

DEFAULT_NUM_QUBITS = 64


@dataclass(frozen=True)
class NoiseModel:
    field_bias: float = 0.0
    coupling_bias: float = 0.0
    readout_flip_prob: float = 0.0
    autocorrelation_strength: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.field_bias < 0 or self.coupling_bias < 0:
            raise ConfigurationError("Bias standard deviations must be >= 0")
        if not 0 <= self.readout_flip_prob < 0.5:
            raise ConfigurationError("readout_flip_prob must be in [0, 0.5)")
        if self.autocorrelation_strength < 0:
            raise ConfigurationError("autocorrelation_strength must be >= 0")

    @property
    def is_ideal(self) -> bool:
        return not (self.field_bias or self.coupling_bias or self.readout_flip_prob or self.autocorrelation_strength)


# Pre-calibration degradation is visible at these levels but recoverable.
DEFAULT_NOISY = NoiseModel(field_bias=0.05, coupling_bias=0.05, readout_flip_prob=0.01, autocorrelation_strength=0.05)


class DeviceState:
    def __init__(self, noise: NoiseModel, num_qubits: int = DEFAULT_NUM_QUBITS):
        if num_qubits < 1:
            raise ConfigurationError("num_qubits must be >= 1")
        self.noise = noise
        self.num_qubits = num_qubits
        rng = rng_for(noise.seed, "device", "hidden")
        self._hidden_fields = rng.normal(0.0, noise.field_bias, size=num_qubits) if noise.field_bias else np.zeros(num_qubits)
        couplers = rng.normal(0.0, noise.coupling_bias, size=(num_qubits, num_qubits)) if noise.coupling_bias \
            else np.zeros((num_qubits, num_qubits))
        self._hidden_couplers = np.triu(couplers, 1)
        self._transient = np.zeros(num_qubits)
        self.flux_offsets = np.zeros(num_qubits)
        self.corrections = QuboModel(num_qubits)
        self.calls = 0

    def rest(self):
        """Let the device sit idle long enough for residual fields to decay."""
        self._transient = np.zeros(self.num_qubits)

    def apply_flux_offsets(self, offsets):
        offsets = np.asarray(offsets, dtype=float)
        if offsets.ndim != 1 or offsets.shape[0] > self.num_qubits:
            raise ArgumentError(f"Expected at most {self.num_qubits} flux offsets")
        self.flux_offsets[: offsets.shape[0]] += offsets

    def apply_corrections(self, corrections: QuboModel):
        if corrections.num_vars > self.num_qubits:
            raise CapacityError(f"Corrections address {corrections.num_vars} qubits; device has {self.num_qubits}")
        for i, c in corrections.linear.items():
            self.corrections.add_linear(i, c)
        for (i, j), c in corrections.quadratic.items():
            self.corrections.add_quadratic(i, j, c)
        self.corrections.add_offset(corrections.offset)

    def clear_corrections(self):
        self.flux_offsets = np.zeros(self.num_qubits)
        self.corrections = QuboModel(self.num_qubits)

    def effective_model(self, ising: IsingModel) -> IsingModel:
        """The model the device actually anneals for `ising`."""
        n = ising.num_spins
        if n > self.num_qubits:
            raise CapacityError(f"Model has {n} spins; device has {self.num_qubits} qubits")
        effective = IsingModel(n, linear=ising.h, quadratic=ising.J, offset=ising.offset)
        correction = qubo_to_ising(self.corrections)
        for i, c in correction.h.items():
            if i < n:
                effective.add_linear(i, c)
        for (i, j), c in correction.J.items():
            if j < n:
                effective.add_quadratic(i, j, c)
        extra = self._hidden_fields[:n] + self.flux_offsets[:n] + self._transient[:n]
        for i in np.flatnonzero(extra):
            effective.add_linear(int(i), float(extra[i]))
        for i, j in ising.J:
            if self._hidden_couplers[i, j]:
                effective.add_quadratic(i, j, float(self._hidden_couplers[i, j]))
        return effective

    def sample(self, ising: IsingModel, config: SolverConfig) -> SampleSet:
        effective = self.effective_model(ising)
        run_seed = child_seed(self.noise.seed, "device", "run", config.seed, self.calls)
        readout = rng_for(self.noise.seed, "device", "readout", config.seed, self.calls)
        self.calls += 1
        spins = anneal_spins(effective, replace(config, seed=run_seed))
        if self.noise.readout_flip_prob:
            flips = readout.random(spins.shape) < self.noise.readout_flip_prob
            spins = np.where(flips, -spins, spins).astype(np.int8)
        self._transient = np.zeros(self.num_qubits)
        if self.noise.autocorrelation_strength and spins.shape[1]:
            self._transient[: spins.shape[1]] = -self.noise.autocorrelation_strength * spins.mean(axis=0)
        logger.debug("device call %d: %d spins, %d samples", self.calls, ising.num_spins, config.num_samples)
        return SampleSet.from_samples(ising, spins)


def create_device(noise: NoiseModel, num_qubits: int = DEFAULT_NUM_QUBITS) -> DeviceState:
    return DeviceState(noise, num_qubits)


def device_sample(device: DeviceState, ising: IsingModel, config: SolverConfig) -> SampleSet:
    return device.sample(ising, config)


def apply_flux_offsets(device: DeviceState, offsets) -> DeviceState:
    device.apply_flux_offsets(offsets)
    return device


def apply_corrections(device: DeviceState, corrections: QuboModel) -> DeviceState:
    device.apply_corrections(corrections)
    return device


def parse_device_spec(spec: str, noisy: NoiseModel = DEFAULT_NOISY, num_qubits: int = DEFAULT_NUM_QUBITS) -> DeviceState:
    """`ideal` or `noisy:<seed>`; noise levels come from `noisy`."""
    if spec == "ideal":
        return create_device(NoiseModel(), num_qubits)
    kind, _, seed = spec.partition(":")
    if kind != "noisy" or not seed.lstrip("-").isdigit():
        raise ArgumentError(f"Device must be 'ideal' or 'noisy:<seed>', got {spec!r}")
    return create_device(replace(noisy, seed=int(seed)), num_qubits)


def _inspect_hidden(device: DeviceState) -> dict:
    """Test-only view of the hidden distortions."""
    return {
        "fields": device._hidden_fields.copy(),
        "couplers": device._hidden_couplers.copy(),
        "transient": device._transient.copy(),
    }
