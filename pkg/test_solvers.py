"""
Tests for solvers.py: exact minima, simulated annealing, steepest descent,
quantile energies, the exact MVVC search and sample files.
"""
import networkx as nx
import numpy as np
import pytest

from conftest import best_independent_sets, random_graph
from errors import ArgumentError, CapacityError, ConfigurationError
from qubo_ising import IsingModel, MvvcProblem, QuboModel, mvvc_chain, mvvc_qubo, qubo_to_ising
from solvers import (
    SampleSet,
    SolverConfig,
    _branch_and_bound_minima,
    _enumerate_minima,
    annealer_mvvc_solver,
    descend_sampleset,
    exact_mvvc,
    exact_solve,
    quantile_energy,
    read_samples,
    repair_selection,
    sa_sample,
    sample_qubo,
    steepest_descent,
    write_samples,
)


def random_ising(n, seed, density=0.5):
    rng = np.random.default_rng(seed)
    linear = {i: rng.normal(scale=0.5) for i in range(n)}
    quadratic = {(i, j): rng.normal() for i in range(n) for j in range(i + 1, n) if rng.random() < density}
    return IsingModel(n, linear, quadratic)


def mvvc_ising(n, p, seed):
    rng = np.random.default_rng(seed)
    graph = random_graph(n, p, seed)
    problem = MvvcProblem(graph, {v: float(rng.uniform(0.1, 1.0)) for v in graph.nodes})
    return problem, mvvc_chain(problem, redistribute=True)


def as_rows(samples):
    return sorted(map(tuple, np.asarray(samples).tolist()))


@pytest.fixture
def small_config():
    return SolverConfig(num_samples=200, sweeps=100, seed=3)


# ---------------------------------------------------------------------------
# exact_solve
# ---------------------------------------------------------------------------

class TestExactSolve:
    def test_empty_model(self):
        result = exact_solve(QuboModel(0, offset=1.5))
        assert len(result) == 1
        assert result.lowest_energy == 1.5

    def test_triangle(self, triangle):
        qubo, _ = mvvc_chain(triangle, redistribute=True)
        result = exact_solve(qubo)
        assert len(result) == 3
        assert np.all(result.energies == pytest.approx(-1.0))

    def test_relabeling_permutes_minima(self):
        ising = random_ising(9, 4)
        perm = np.random.default_rng(0).permutation(9)
        relabeled = IsingModel(
            9,
            {int(perm[i]): h for i, h in ising.h.items()},
            {(int(perm[i]), int(perm[j])): c for (i, j), c in ising.J.items()},
        )
        original = exact_solve(ising).samples
        moved = exact_solve(relabeled).samples
        mapped = np.empty_like(original)
        mapped[:, perm] = original
        assert as_rows(mapped) == as_rows(moved)

    @pytest.mark.parametrize("seed", range(4))
    def test_branch_and_bound_agrees_with_enumeration(self, seed):
        ising = random_ising(12, seed)
        assert as_rows(_branch_and_bound_minima(ising)) == as_rows(_enumerate_minima(ising))

    def test_branch_and_bound_on_degenerate_qubo(self, triangle):
        qubo = mvvc_qubo(triangle)
        assert as_rows(_branch_and_bound_minima(qubo)) == as_rows(_enumerate_minima(qubo))

    def test_mid_size_model_uses_branch_and_bound(self):
        graph = nx.path_graph(26)
        problem = MvvcProblem(graph, {v: 1.0 for v in graph.nodes})
        qubo, _ = mvvc_chain(problem, redistribute=True)
        result = exact_solve(qubo)
        assert result.lowest_energy == pytest.approx(-13.0)
        assert len(result) == 14
        assert all(problem.is_independent(problem.selection(row)) for row in result.samples)

    def test_too_many_variables(self):
        with pytest.raises(CapacityError):
            exact_solve(QuboModel(61))


# ---------------------------------------------------------------------------
# Simulated annealing
# ---------------------------------------------------------------------------

class TestAnnealing:
    def test_single_spin_field(self):
        result = sa_sample(IsingModel(1, linear={0: -1.0}), SolverConfig(num_samples=200, sweeps=50, seed=1))
        up = int(result.counts[result.samples[:, 0] == 1].sum())
        assert up / result.num_samples >= 0.99

    def test_same_seed_same_samples(self, small_config):
        _, (_, ising) = mvvc_ising(10, 0.3, 1)
        first = sa_sample(ising, small_config)
        second = sa_sample(ising, small_config)
        assert np.array_equal(first.samples, second.samples)
        assert np.array_equal(first.counts, second.counts)

    def test_workers_do_not_change_samples(self):
        _, (_, ising) = mvvc_ising(8, 0.3, 2)
        serial = sa_sample(ising, SolverConfig(num_samples=300, sweeps=30, seed=5, chunk_size=100))
        threaded = sa_sample(ising, SolverConfig(num_samples=300, sweeps=30, seed=5, chunk_size=100, workers=3))
        assert np.array_equal(serial.samples, threaded.samples)
        assert np.array_equal(serial.counts, threaded.counts)

    def test_energies_are_re_evaluated(self, small_config):
        ising = random_ising(10, 7)
        result = sa_sample(ising, small_config)
        assert result.num_samples == small_config.num_samples
        np.testing.assert_allclose(result.energies, ising.energies(result.samples))
        assert list(result.energies) == sorted(result.energies)

    def test_longer_anneals_reach_lower_energy(self):
        _, (_, ising) = mvvc_ising(20, 0.2, 3)
        short = sa_sample(ising, SolverConfig(num_samples=200, sweeps=1, seed=2))
        long = sa_sample(ising, SolverConfig(num_samples=200, sweeps=200, seed=2))
        assert long.expanded_energies().mean() < short.expanded_energies().mean()

    @pytest.mark.slow
    @pytest.mark.parametrize("seed", range(100))
    def test_mean_energy_does_not_rise_with_sweeps(self, seed):
        _, (_, ising) = mvvc_ising(20, 0.2, 700 + seed)
        means, errors = [], []
        for sweeps in (1, 10, 100):
            energies = sa_sample(ising, SolverConfig(num_samples=200, sweeps=sweeps, seed=seed)).expanded_energies()
            means.append(energies.mean())
            errors.append(energies.std(ddof=1) / np.sqrt(energies.size))
        for k in range(2):
            assert means[k + 1] <= means[k] + 3 * np.hypot(errors[k], errors[k + 1])

    def test_finds_the_optimum_on_small_instances(self):
        hits = 0
        for seed in range(10):
            _, (_, ising) = mvvc_ising(12, 0.3, 20 + seed)
            optimum = exact_solve(ising).lowest_energy
            result = sa_sample(ising, SolverConfig(num_samples=100, sweeps=200, seed=seed))
            hits += result.lowest_energy <= optimum + 1e-9
        assert hits >= 8

    @pytest.mark.slow
    def test_finds_the_optimum_on_twenty_vertex_instances(self):
        hits = 0
        for seed in range(100):
            _, (_, ising) = mvvc_ising(20, 0.2, 500 + seed)
            optimum = exact_solve(ising).lowest_energy
            result = sa_sample(ising, SolverConfig(num_samples=100, sweeps=1000, seed=seed))
            hits += result.lowest_energy <= optimum + 1e-9
        assert hits >= 90

    def test_qubo_samples_are_binary(self, triangle, small_config):
        qubo = mvvc_qubo(triangle)
        result = sample_qubo(qubo, small_config)
        assert set(np.unique(result.samples)) <= {0, 1}
        np.testing.assert_allclose(result.energies, qubo.energies(result.samples))

    def test_config_validation(self):
        with pytest.raises(ConfigurationError):
            SolverConfig(sweeps=0)
        with pytest.raises(ConfigurationError):
            SolverConfig(beta_initial=2.0, beta_final=1.0)

    def test_beta_schedule_is_geometric(self):
        betas = SolverConfig(sweeps=3, beta_initial=0.1, beta_final=10.0).betas()
        np.testing.assert_allclose(betas, [0.1, 1.0, 10.0])


# ---------------------------------------------------------------------------
# Steepest descent and quantiles
# ---------------------------------------------------------------------------

class TestDescent:
    def test_single_flip_improvement(self):
        model = IsingModel(2, linear={0: 1.0, 1: -1.0})
        assert steepest_descent(model, [1, 1]).tolist() == [-1, 1]

    def test_local_minimum_is_fixed(self):
        model = IsingModel(2, quadratic={(0, 1): -1.0})
        assert steepest_descent(model, [1, 1]).tolist() == [1, 1]

    def test_idempotent(self):
        model = random_ising(12, 9)
        once = steepest_descent(model, np.ones(12, dtype=np.int8))
        assert np.array_equal(steepest_descent(model, once), once)

    def test_never_raises_energy(self):
        model = random_ising(16, 10)
        rng = np.random.default_rng(4)
        for _ in range(200):
            start = rng.choice(np.array([-1, 1], dtype=np.int8), size=16)
            assert model.energy(steepest_descent(model, start)) <= model.energy(start) + 1e-12

    def test_descended_sampleset_keeps_counts(self):
        ising = random_ising(10, 12)
        raw = sa_sample(ising, SolverConfig(num_samples=100, sweeps=2, seed=1))
        descended = descend_sampleset(ising, raw)
        assert descended.num_samples == raw.num_samples
        assert np.sort(descended.expanded_energies())[0] <= np.sort(raw.expanded_energies())[0]


class TestQuantile:
    @pytest.fixture
    def four_energies(self):
        return SampleSet(np.zeros((4, 1), dtype=np.int8), np.array([1.0, 2.0, 3.0, 4.0]),
                         np.ones(4, dtype=np.int64), "SPIN")

    def test_lower_quartile(self, four_energies):
        assert quantile_energy(four_energies, 0.25) == 1.0

    def test_maximum(self, four_energies):
        assert quantile_energy(four_energies, 1.0) == 4.0

    def test_counts_weight_the_quantile(self):
        sampleset = SampleSet(np.zeros((2, 1), dtype=np.int8), np.array([0.0, 5.0]),
                              np.array([1, 9]), "SPIN")
        assert quantile_energy(sampleset, 0.25) == 5.0

    def test_empty_sample_set(self):
        empty = SampleSet(np.zeros((0, 1), dtype=np.int8), np.zeros(0), np.zeros(0, dtype=np.int64), "SPIN")
        with pytest.raises(ArgumentError):
            quantile_energy(empty, 0.5)

    @pytest.mark.parametrize("q", [0.0, -0.1, 1.5])
    def test_q_out_of_range(self, four_energies, q):
        with pytest.raises(ArgumentError):
            quantile_energy(four_energies, q)


# ---------------------------------------------------------------------------
# MVVC search
# ---------------------------------------------------------------------------

class TestExactMvvc:
    def test_triangle_picks_highest_value(self):
        problem = MvvcProblem(nx.complete_graph(3), {0: 1.0, 1: 2.0, 2: 3.0})
        assert exact_mvvc(problem) == {2}

    def test_path_prefers_both_ends(self):
        problem = MvvcProblem(nx.path_graph(3), {0: 1.0, 1: 1.5, 2: 1.0})
        assert exact_mvvc(problem) == {0, 2}

    def test_ties_go_to_lowest_ids(self, triangle):
        assert exact_mvvc(triangle) == {0}

    def test_non_positive_values_are_never_selected(self):
        graph = nx.empty_graph(3)
        problem = MvvcProblem(graph, {0: 0.0, 1: -1.0, 2: 0.5})
        assert exact_mvvc(problem) == {2}

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        graph = random_graph(11, 0.3, seed)
        problem = MvvcProblem(graph, {v: float(rng.uniform(0.1, 1.0)) for v in graph.nodes})
        assert frozenset(exact_mvvc(problem)) in best_independent_sets(problem)

    def test_repair_drops_lower_value_endpoint(self):
        problem = MvvcProblem(nx.Graph([(0, 1), (1, 2)]), {0: 1.0, 1: 0.5, 2: 1.0})
        assert repair_selection(problem, {0, 1, 2}) == {0, 2}

    def test_repair_on_equal_values_drops_higher_id(self):
        problem = MvvcProblem(nx.Graph([(0, 1)]), {0: 1.0, 1: 1.0})
        assert repair_selection(problem, {0, 1}) == {0}

    def test_annealer_solver_finds_optimum(self):
        rng = np.random.default_rng(1)
        graph = random_graph(9, 0.3, 1)
        problem = MvvcProblem(graph, {v: float(rng.uniform(0.1, 1.0)) for v in graph.nodes})
        solve = annealer_mvvc_solver(SolverConfig(num_samples=100, sweeps=100, seed=0))
        chosen = solve(problem)
        assert problem.is_independent(chosen)
        assert problem.value_of(chosen) == pytest.approx(problem.value_of(exact_mvvc(problem)))


class TestSampleFiles:
    def test_round_trip_with_energy_check(self, tmp_path, small_config):
        ising = random_ising(6, 2)
        result = sa_sample(ising, small_config)
        loaded = read_samples(write_samples(result, tmp_path / "s.csv"), ising)
        assert np.array_equal(loaded.samples, result.samples)
        assert np.array_equal(loaded.counts, result.counts)

    def test_tampered_energy_is_rejected(self, tmp_path, small_config):
        qubo = mvvc_qubo(MvvcProblem(nx.path_graph(3), {0: 1.0, 1: 1.0, 2: 1.0}))
        path = write_samples(sample_qubo(qubo, small_config), tmp_path / "s.csv")
        lines = path.read_text().splitlines()
        energy, rest = lines[1].split(",", 1)
        lines[1] = f"{float(energy) + 1.0!r},{rest}"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ConfigurationError):
            read_samples(path, qubo)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            read_samples(tmp_path / "none.csv")


def test_sa_and_exact_agree_on_ground_energy_distribution():
    ising = qubo_to_ising(mvvc_qubo(MvvcProblem(nx.path_graph(4), {v: 1.0 for v in range(4)})))
    result = sa_sample(ising, SolverConfig(num_samples=400, sweeps=100, seed=9))
    ground = exact_solve(ising)
    share = result.counts[np.isclose(result.energies, ground.lowest_energy)].sum() / result.num_samples
    assert share > 0.95
