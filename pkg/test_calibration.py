"""
Tests for calibration.py.

Covers:
  - exact and Monte Carlo cover statistics (ordered and literal weighting)
  - pairwise statistics of samples, sigma estimation and the correction step
  - flux-offset calibration, pairwise calibration on ideal and scripted devices
  - sigmoid fitting and width-scaled values
  - calibration file round trip
"""
import math
from dataclasses import replace

import networkx as nx
import numpy as np
import pytest
from scipy.special import erf

from annealer_sim import DEFAULT_NOISY, DeviceState, NoiseModel, _inspect_hidden, create_device
from calibration import (
    STOP_CONSTANT,
    CalibrationSchedule,
    CalibrationState,
    PairStatistics,
    SigmoidFit,
    calibrate_device,
    calibrate_pairwise,
    correction_step,
    estimate_sigma,
    exact_cover_statistics,
    fit_sigmoid,
    flux_bias_calibrate,
    mc_cover_sample,
    offset_scale_calibrate,
    pairwise_stats,
    read_calibration,
    scaled_values,
    sigmoid,
    write_calibration,
)
from errors import ArgumentError, CalibrationError
from qubo_ising import IsingModel, QuboModel
from solvers import SampleSet, SolverConfig


def pair_stats(probs, pairs=((0, 1),), vertices=(0, 1)):
    return PairStatistics(list(vertices), list(pairs), np.asarray(probs, dtype=float), np.zeros(len(vertices)))


def stderr_scores(estimate, oracle):
    """|estimate - oracle| in units of the estimate's standard error; exact entries must agree."""
    diff = np.abs(estimate.probs - oracle.probs)
    se = estimate.stderr
    exact = se == 0
    assert np.all(diff[exact] < 1e-12)
    return diff[~exact] / se[~exact]


def within_stderr(estimate, oracle):
    assert np.all(stderr_scores(estimate, oracle) <= 4)


def connected_graph(seed: int) -> nx.Graph:
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 9))
    while True:
        graph = nx.gnp_random_graph(n, 0.4, seed=int(rng.integers(2 ** 31)))
        if nx.is_connected(graph):
            return graph


@pytest.fixture
def quick_config():
    return SolverConfig(sweeps=60, seed=0)


# ---------------------------------------------------------------------------
# Reference statistics
# ---------------------------------------------------------------------------

class TestExactStatistics:
    def test_two_isolated_vertices(self):
        stats = exact_cover_statistics(nx.empty_graph(2), pairs=[(0, 1)])
        assert stats.probs[0] == pytest.approx([0, 1 / 3, 1 / 3, 1 / 3])

    def test_single_edge(self):
        stats = exact_cover_statistics(nx.Graph([(0, 1)]))
        assert stats.probs[0] == pytest.approx([0, 0.5, 0.5, 0])

    def test_single_vertex(self):
        stats = exact_cover_statistics(nx.empty_graph(1), pairs=[])
        assert stats.inclusion == pytest.approx([1.0])

    def test_empty_set_included(self):
        stats = exact_cover_statistics(nx.Graph([(0, 1)]), include_empty=True)
        assert stats.probs[0] == pytest.approx([1 / 3, 1 / 3, 1 / 3, 0])
        assert stats.check()

    def test_unknown_pair_vertex(self):
        with pytest.raises(ArgumentError):
            exact_cover_statistics(nx.empty_graph(2), pairs=[(0, 5)])


class TestMonteCarlo:
    @pytest.mark.parametrize("graph", [nx.path_graph(4), nx.cycle_graph(5), nx.star_graph(3)],
                             ids=["path4", "cycle5", "star3"])
    def test_ordered_weighting_matches_enumeration(self, graph):
        pairs = [(u, v) for u in graph.nodes for v in graph.nodes if u < v]
        estimate = mc_cover_sample(graph, 20000, np.random.default_rng(1), pairs)
        within_stderr(estimate, exact_cover_statistics(graph, pairs))
        assert estimate.check()

    def test_include_empty_matches_enumeration(self):
        graph = nx.path_graph(3)
        estimate = mc_cover_sample(graph, 20000, np.random.default_rng(2), include_empty=True)
        within_stderr(estimate, exact_cover_statistics(graph, include_empty=True))

    @pytest.mark.slow
    def test_connected_graphs_at_full_sample_size(self):
        scores = []
        for seed in range(20):
            graph = connected_graph(seed)
            pairs = [(u, v) for u in graph.nodes for v in graph.nodes if u < v]
            estimate = mc_cover_sample(graph, 100_000, np.random.default_rng(seed), pairs)
            scores.append(stderr_scores(estimate, exact_cover_statistics(graph, pairs)))
        scores = np.concatenate(scores)
        # about 0.3% of entries land beyond 3 standard errors by chance
        assert np.mean(scores > 3) <= 0.01
        assert scores.max() <= 5

    def test_ordered_weighting_on_isolated_pair(self):
        estimate = mc_cover_sample(nx.empty_graph(2), 500, np.random.default_rng(3), pairs=[(0, 1)])
        assert estimate.probs[0, 3] == pytest.approx(1 / 3)

    def test_literal_weighting_is_biased_to_large_sets(self):
        estimate = mc_cover_sample(nx.empty_graph(2), 500, np.random.default_rng(3), pairs=[(0, 1)],
                                   weighting="literal")
        assert estimate.probs[0, 3] == pytest.approx(2 / 3)

    def test_invalid_arguments(self):
        with pytest.raises(ArgumentError):
            mc_cover_sample(nx.path_graph(3), 0, np.random.default_rng(0))
        with pytest.raises(ArgumentError):
            mc_cover_sample(nx.path_graph(3), 10, np.random.default_rng(0), weighting="uniform")


# ---------------------------------------------------------------------------
# Sample statistics and corrections
# ---------------------------------------------------------------------------

class TestPairwiseStats:
    def test_counts_are_respected(self):
        samples = SampleSet.from_samples(QuboModel(2), [[0, 0], [1, 1]], counts=[3, 1])
        stats = pairwise_stats(samples, [(0, 1)])
        assert stats.probs[0] == pytest.approx([0.75, 0, 0, 0.25])
        assert stats.inclusion == pytest.approx([0.25, 0.25])

    def test_batches_are_averaged(self):
        model = QuboModel(2)
        batches = [SampleSet.from_samples(model, [[1, 0]]), SampleSet.from_samples(model, [[0, 1]])]
        stats = pairwise_stats(batches, [(0, 1)])
        assert stats.probs[0] == pytest.approx([0, 0.5, 0.5, 0])
        assert stats.stderr[0, 1] > 0

    def test_auxiliary_spins_are_decoded(self):
        model = IsingModel(3, aux=(2,))
        samples = SampleSet.from_samples(model, [[1, -1, -1]])
        assert pairwise_stats(samples, [(0, 1)]).probs[0] == pytest.approx([0, 1, 0, 0])

    def test_empty_samples(self):
        with pytest.raises(ArgumentError):
            pairwise_stats([], [(0, 1)])


class TestSigma:
    def test_identical_replicates_fall_back_to_shot_noise(self):
        stats = pair_stats([0.25, 0.25, 0.25, 0.25])
        assert estimate_sigma([stats, stats], shots=1000) == pytest.approx(1 / math.sqrt(1000))

    def test_recovers_injected_noise(self):
        rng = np.random.default_rng(0)
        pairs = [(i, i + 1) for i in range(10)]
        base = np.full((10, 4), 0.25)
        replicates = [
            pair_stats(base + rng.normal(0, 0.03, size=base.shape), pairs, range(11)) for _ in range(50)
        ]
        assert estimate_sigma(replicates) == pytest.approx(0.03, rel=0.15)
        assert estimate_sigma(replicates[::-1]) == pytest.approx(estimate_sigma(replicates))

    def test_needs_two_replicates(self):
        with pytest.raises(ArgumentError):
            estimate_sigma([pair_stats([0.25] * 4)])

    def test_stop_constant(self):
        rng = np.random.default_rng(1)
        x, y = rng.normal(size=(2, 1_000_000))
        assert np.mean(np.abs(x - y)) == pytest.approx(STOP_CONSTANT, rel=0.01)


class TestCorrectionStep:
    def test_no_difference_no_correction(self):
        stats = pair_stats([0.1, 0.4, 0.4, 0.1])
        step = correction_step(stats, stats, 0.1, 1.0)
        assert step.linear == {} and step.quadratic == {} and step.offset == 0

    def test_coefficients_land_on_the_right_monomials(self):
        reference = pair_stats([0.25, 0.25, 0.25, 0.25])
        measured = pair_stats([0.35, 0.15, 0.25, 0.25])
        step = correction_step(reference, measured, 0.1, 1.0)
        c = 0.1 * erf(1.0)
        assert step.offset == pytest.approx(c)
        energies = step.energies([[0, 0], [0, 1], [1, 0], [1, 1]])
        assert energies == pytest.approx([c, -c, 0.0, 0.0])

    def test_small_differences_are_suppressed_quadratically(self):
        reference = pair_stats([0.25, 0.25, 0.25, 0.25])
        measured = pair_stats([0.2501, 0.2499, 0.25, 0.25])
        step = correction_step(reference, measured, 0.1, 1.0)
        assert step.offset == pytest.approx(1e-8 * 2 / (0.1 * math.sqrt(math.pi)), rel=1e-5)

    def test_epsilon_scales_the_step(self):
        reference = pair_stats([0.25, 0.25, 0.25, 0.25])
        measured = pair_stats([0.35, 0.15, 0.25, 0.25])
        full = correction_step(reference, measured, 0.1, 1.0)
        half = correction_step(reference, measured, 0.1, 0.5)
        assert half.offset == pytest.approx(full.offset / 2)

    def test_mismatched_pairs(self):
        with pytest.raises(ArgumentError):
            correction_step(pair_stats([0.25] * 4), pair_stats([0.25] * 4, pairs=[(1, 0)]), 0.1, 1.0)

    def test_sigma_must_be_positive(self):
        stats = pair_stats([0.25] * 4)
        with pytest.raises(ArgumentError):
            correction_step(stats, stats, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Device calibration
# ---------------------------------------------------------------------------

class TestFluxCalibration:
    def test_ideal_device_needs_no_offsets(self, quick_config):
        offsets = flux_bias_calibrate(create_device(NoiseModel(), 4), 4, quick_config, shots=1000)
        assert np.all(np.abs(offsets) < 0.05)

    def test_offsets_cancel_hidden_field(self, quick_config):
        device = create_device(NoiseModel(field_bias=0.05, seed=3), 16)
        fields = _inspect_hidden(device)["fields"]
        offsets = flux_bias_calibrate(device, 16, quick_config, shots=1000)
        k = int(np.argmax(np.abs(fields)))
        assert abs(offsets[k] + fields[k]) <= max(0.2 * abs(fields[k]), 0.01)

    def test_deterministic(self, quick_config):
        first = flux_bias_calibrate(create_device(NoiseModel(field_bias=0.05, seed=3), 6), 6, quick_config)
        second = flux_bias_calibrate(create_device(NoiseModel(field_bias=0.05, seed=3), 6), 6, quick_config)
        assert np.array_equal(first, second)

    def test_non_convergence_reports_diagnostics(self, quick_config):
        device = create_device(NoiseModel(field_bias=0.5, seed=1), 4)
        with pytest.raises(CalibrationError) as info:
            flux_bias_calibrate(device, 4, quick_config, max_iterations=1)
        assert "offsets" in info.value.diagnostics


class ScriptedDevice(DeviceState):
    """Two-qubit device whose samples follow a script of call number, not the model it is given."""

    def __init__(self, script):
        super().__init__(NoiseModel(), 4)
        self.script = script

    def sample(self, ising, config):
        self.calls += 1
        spins = [[-1, -1], [-1, 1], [1, -1], [1, 1]]
        return SampleSet.from_samples(ising, spins, counts=self.script(self.calls))


def more_broken_pairs(call):
    # 5% more (1, 1) rows per call, the rest spread evenly
    broken = 150 * call
    rest = (3000 - broken) // 3
    return [rest, rest, rest, broken]


class TestPairwiseCalibration:
    def test_ideal_device_converges_quickly(self, quick_config):
        schedule = CalibrationSchedule(shots=500, trajectories=5000)
        state = calibrate_pairwise(create_device(NoiseModel(), 8), nx.path_graph(4), schedule, quick_config)
        assert state.converged
        assert state.iterations <= 3
        assert state.trace[-1] < schedule.stop_constant * state.sigma

    def test_graph_without_edges(self, quick_config):
        with pytest.raises(ArgumentError):
            calibrate_pairwise(create_device(NoiseModel(), 4), nx.empty_graph(3), CalibrationSchedule(), quick_config)

    def test_growing_deviation_raises_with_trace(self, quick_config):
        graph = nx.path_graph(2)
        with pytest.raises(CalibrationError) as info:
            calibrate_pairwise(ScriptedDevice(more_broken_pairs), graph, CalibrationSchedule(), quick_config,
                               reference=exact_cover_statistics(graph, include_empty=True))
        trace = info.value.diagnostics["trace"]
        # replicates at 5, 10 and 15% broken average to 10%, then 20, 25, ... 40%
        assert trace == pytest.approx([0.05, 0.1, 0.125, 0.15, 0.175, 0.2])
        assert info.value.diagnostics["sigma"] > 0

    def test_running_out_of_rounds_is_reported(self, quick_config, caplog):
        graph = nx.path_graph(2)
        device = ScriptedDevice(lambda call: [700, 0, 0, 300])
        schedule = CalibrationSchedule(max_iterations=3)
        state = calibrate_pairwise(device, graph, schedule, quick_config,
                                   reference=exact_cover_statistics(graph, include_empty=True))
        assert not state.converged
        assert state.iterations == 3
        assert state.trace == pytest.approx([1 / 3] * 3)
        assert "stopped after 3 rounds" in caplog.text

    def test_corrections_scale_with_sampler_temperature(self, quick_config):
        graph = nx.path_graph(2)
        reference = exact_cover_statistics(graph, include_empty=True)
        schedule = CalibrationSchedule(max_iterations=2)
        cold = calibrate_pairwise(ScriptedDevice(lambda call: [700, 0, 0, 300]), graph, schedule,
                                  replace(quick_config, beta_final=20.0), reference=reference)
        warm = calibrate_pairwise(ScriptedDevice(lambda call: [700, 0, 0, 300]), graph, schedule,
                                  quick_config, reference=reference)
        assert cold.corrections.linear[0] == pytest.approx(warm.corrections.linear[0] / 2)

    @pytest.mark.slow
    def test_noisy_device_converges(self):
        schedule = CalibrationSchedule(shots=1000, trajectories=20000, seed=2)
        device = create_device(replace(DEFAULT_NOISY, seed=5), 8)
        state = calibrate_device(device, nx.cycle_graph(5), schedule, SolverConfig(sweeps=200), fit_widths=False)
        assert state.converged
        assert state.iterations <= schedule.max_iterations
        assert state.trace[-1] < state.trace[0]


class TestSigmoid:
    def test_recovers_parameters(self):
        offsets = np.linspace(-1.5, 0.5, 201)
        rng = np.random.default_rng(0)
        y = sigmoid(offsets, 1.0, 0.2, -0.5, 0.15) + rng.normal(0, 0.01, size=offsets.size)
        fit = fit_sigmoid(offsets, y)
        assert fit.a == pytest.approx(1.0, rel=0.05)
        assert fit.b == pytest.approx(0.2, rel=0.05)
        assert fit.v0 == pytest.approx(-0.5, abs=0.025)
        assert fit.w == pytest.approx(0.15, rel=0.05)
        assert fit.scale == pytest.approx(3 * fit.w)

    @pytest.mark.slow
    def test_recovers_parameters_over_many_draws(self):
        offsets = np.linspace(-2.0, 2.0, 1001)
        rng = np.random.default_rng(1)
        for _ in range(100):
            a, b, w = rng.uniform(0.9, 1.0), rng.uniform(0.2, 0.3), rng.uniform(0.15, 0.3)
            v0 = rng.choice([-1, 1]) * rng.uniform(0.3, 0.8)
            y = sigmoid(offsets, a, b, v0, w) + rng.normal(0, 0.01, size=offsets.size)
            fit = fit_sigmoid(offsets, y)
            assert fit.a == pytest.approx(a, rel=0.05)
            assert fit.b == pytest.approx(b, rel=0.05)
            assert fit.v0 == pytest.approx(v0, rel=0.05)
            assert fit.w == pytest.approx(w, rel=0.05)

    def test_flat_response(self):
        with pytest.raises(CalibrationError):
            fit_sigmoid(np.linspace(-1, 1, 11), np.full(11, 0.5))

    def test_too_few_points(self):
        with pytest.raises(ArgumentError):
            fit_sigmoid([0.0, 1.0], [0.0, 1.0])

    def test_ideal_device_inclusion_curve(self, quick_config):
        fit, scale = offset_scale_calibrate(create_device(NoiseModel(), 4), nx.path_graph(3), 0,
                                            np.linspace(-0.5, 0.5, 11), quick_config, shots=500)
        assert fit.a > 0.9
        assert fit.b < 0.1
        assert 0.02 < fit.w < 0.6
        assert scale == pytest.approx(3 * fit.w)

    def test_unknown_vertex(self, quick_config):
        with pytest.raises(ArgumentError):
            offset_scale_calibrate(create_device(NoiseModel(), 4), nx.path_graph(3), 9, [0, 1, 2, 3], quick_config)


class TestScaledValues:
    def test_one_third_width_is_neutral(self):
        assert scaled_values({0: 2.0}, {0: 1 / 3}) == pytest.approx({0: 2.0})

    def test_divides_by_default(self):
        assert scaled_values({0: 2.0}, {0: 0.5}) == pytest.approx({0: 2.0 / 1.5})

    def test_multiply(self):
        assert scaled_values({0: 2.0}, {0: 0.5}, "multiply") == pytest.approx({0: 3.0})

    def test_missing_width(self):
        with pytest.raises(ArgumentError):
            scaled_values({0: 1.0, 1: 1.0}, {0: 0.2})

    def test_unknown_direction(self):
        with pytest.raises(ArgumentError):
            scaled_values({0: 1.0}, {0: 0.2}, "square")


def test_calibration_file_round_trip(tmp_path):
    corrections = QuboModel(3, linear={0: 0.125}, quadratic={(0, 2): -0.25}, offset=0.5)
    state = CalibrationState(
        vertices=[0, 1, 2],
        flux_offsets=np.array([0.01, -0.02, 0.0]),
        corrections=corrections,
        sigma=0.02,
        epsilon=0.64,
        iterations=3,
        trace=[0.1, 0.05, 0.01],
        converged=True,
        widths={0: 0.2, 2: 0.3},
        fits={0: SigmoidFit(1.0, 0.0, 0.1, 0.2, 0.01)},
        failed_vertices={1: "flat"},
    )
    loaded = read_calibration(write_calibration(state, tmp_path / "calibration.json"))
    assert loaded.corrections == corrections
    assert np.array_equal(loaded.flux_offsets, state.flux_offsets)
    assert loaded.widths == state.widths
    assert loaded.fits == state.fits
    assert loaded.failed_vertices == {1: "flat"}
    assert loaded.converged and loaded.iterations == 3
