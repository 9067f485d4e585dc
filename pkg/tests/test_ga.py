"""Tests for the genetic algorithm: fitness, operators, stopping and runs."""

import json
import math
import time
import sys
import os

import numpy as np
import pytest

# Add src to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from eeg_gafs import ga
from eeg_gafs.errors import ConfigurationError, DegenerateError, EvaluationError
from eeg_gafs.ga import (
    FitnessFamily,
    GaConfig,
    Mode,
    RunReport,
    StoppingMachine,
    StopReason,
    combine_fitness,
    crossover,
    fitness,
    init_population,
    mutate,
    run,
    select_parents,
    summarize_trace,
)
from eeg_gafs.models import FeatureMatrix, LabeledData


def _bits(text):
    return np.array([c == "1" for c in text])


def _matrix_data(n_rows=12, n_cols=10, seed=0):
    rng = np.random.default_rng(seed)
    labels = ["REST", "MAT"] * (n_rows // 2)
    return LabeledData.from_matrix(FeatureMatrix.from_array(rng.normal(size=(n_rows, n_cols)), labels))


def _weighted_stub(n_cols, seed):
    """Deterministic performance: mean weight of the selected columns."""
    weights = np.random.default_rng(seed).random(n_cols)

    def perf(data, _seed):
        idx = [int(name[1:]) for name in data.matrix.columns]
        return float(weights[idx].mean())

    return perf


# --- configuration --------------------------------------------------------

def test_default_config_is_valid():
    cfg = GaConfig()
    assert cfg.violations() == []
    assert (cfg.population_size, cfg.mating_pool, cfg.mutations, cfg.lam) == (8, 4, 3, 0.88)


def test_config_violations_are_named():
    cfg = GaConfig(lam=1.3, mating_pool=3, population_size=8)
    fields = [name for name, _ in cfg.violations()]

    assert "lambda" in fields
    assert "mating_pool" in fields
    with pytest.raises(ConfigurationError) as excinfo:
        cfg.validate()
    assert "lambda" in str(excinfo.value)


def test_unsupervised_config_needs_k():
    assert ("k" in [n for n, _ in GaConfig(mode="unsupervised").violations()])
    assert GaConfig(mode=Mode.UNSUPERVISED, k=3).violations() == []


# --- fitness --------------------------------------------------------------

def test_vmff_examples():
    assert abs(combine_fitness(1.0, 35, 209, FitnessFamily.VMFF) - 0.12 * (1 - 35 / 209)) < 1e-12
    assert round(combine_fitness(1.0, 35, 209, FitnessFamily.VMFF), 2) == 0.10
    assert combine_fitness(1.0, 209, 209, FitnessFamily.VMFF) == 0.0
    assert 0.17 <= combine_fitness(0.87, 291, 576, FitnessFamily.VMFF) <= 0.18


def test_vmff_matches_independent_evaluation():
    rng = np.random.default_rng(0)
    for _ in range(100):
        perf, n_total = rng.random(), int(rng.integers(1, 600))
        n_sel = int(rng.integers(1, n_total + 1))
        lam = rng.random()
        expected = lam * (1 - perf) + (1 - lam) * (1 - n_sel / n_total)
        assert abs(combine_fitness(perf, n_sel, n_total, "VMFF", lam) - expected) < 1e-12


def test_nff_and_poff():
    assert combine_fitness(0.93, 576, 576, FitnessFamily.NFF) == 0.0
    assert abs(combine_fitness(0.9, 1, 10000, FitnessFamily.NFF) - 0.9) < 1e-3
    assert combine_fitness(0.77, 10, 20, FitnessFamily.POFF) == 0.77


def test_fitness_rejects_bad_masks():
    data = _matrix_data()
    cfg = GaConfig()
    with pytest.raises(ConfigurationError):
        fitness(np.zeros(10, dtype=bool), data, cfg)
    with pytest.raises(ConfigurationError):
        fitness(np.ones(9, dtype=bool), data, cfg)


def test_fitness_with_wrapped_models():
    """Supervised SVM accuracy and unsupervised silhouette both land in range."""
    rng = np.random.default_rng(3)
    X = np.vstack([rng.normal(0, 1, (20, 4)), rng.normal(6, 1, (20, 4))])
    data = LabeledData.from_matrix(FeatureMatrix.from_array(X, ["a"] * 20 + ["b"] * 20))
    mask = _bits("1100")

    supervised = fitness(mask, data, GaConfig(fitness_family="POFF", folds=5))
    unsupervised = fitness(mask, data, GaConfig(mode="unsupervised", k=2, fitness_family="NFF"))

    assert supervised >= 0.95
    assert 0 < unsupervised <= 0.5


# --- operators ------------------------------------------------------------

def test_init_population_shape_and_determinism():
    cfg = GaConfig(seed=4)
    a = init_population(cfg, 209)
    b = init_population(cfg, 209)

    assert a.shape == (8, 209)
    assert np.array_equal(a, b)
    assert a.any(axis=1).all()


def test_init_population_single_feature():
    assert init_population(GaConfig(), 1).all()


def test_select_parents_rank_order():
    fits = [0.1, 0.9, 0.5, 0.7, 0.2, 0.3, 0.4, 0.6]
    population = np.ones((8, 5), dtype=bool)
    assert select_parents(population, fits, 4).tolist() == [1, 3, 7, 2]


def test_select_parents_ties():
    population = np.ones((8, 5), dtype=bool)
    assert select_parents(population, [0.5] * 8, 4).tolist() == [0, 1, 2, 3]

    population[2, :4] = False
    fits = [0.1, 0.2, 0.9, 0.9, 0.0, 0.0, 0.0, 0.0]
    assert select_parents(population, fits, 2).tolist() == [2, 3]


def test_crossover_midpoint_splice():
    children = crossover(np.array([_bits("11110000"), _bits("00001111")]))
    assert children.astype(int).tolist() == [[1] * 8, [0] * 8]

    same = np.array([_bits("1011"), _bits("1011")])
    assert np.array_equal(crossover(same), same)

    odd = crossover(np.array([_bits("111"), _bits("000")]))
    assert odd.astype(int).tolist() == [[1, 1, 0], [0, 0, 1]]


def test_crossover_pairs_ranked_parents():
    parents = np.array([_bits("1111"), _bits("0000"), _bits("1010"), _bits("0101")])
    children = crossover(parents)
    assert children.astype(int).tolist() == [[1, 1, 0, 0], [0, 0, 1, 1], [1, 0, 0, 1], [0, 1, 1, 0]]


def test_uniform_crossover_preserves_genes():
    parents = np.array([_bits("1111000011"), _bits("0011110000")])
    children = crossover(parents, np.random.default_rng(1), uniform=True)
    assert np.array_equal(children.sum(axis=0), parents.sum(axis=0))


def test_crossover_needs_pairs():
    with pytest.raises(ConfigurationError):
        crossover(np.ones((3, 4), dtype=bool))


def test_mutate_flips_exact_count():
    rng = np.random.default_rng(0)
    c = init_population(GaConfig(), 209)[0]
    out = mutate(c, 3, rng)
    assert int((out != c).sum()) == 3


def test_mutate_full_complement_and_repair():
    rng = np.random.default_rng(0)
    c = _bits("10110010")
    assert np.array_equal(mutate(c, 8, rng), ~c)

    assert mutate(np.zeros(6, dtype=bool), 1, rng).any()
    assert mutate(np.ones(4, dtype=bool), 4, rng).sum() == 1
    with pytest.raises(ConfigurationError):
        mutate(c, 9, rng)


# --- stopping -------------------------------------------------------------

def _drive(machine, improvements, start=0.5, limit=5000):
    """Feed a best-fitness schedule rising by 0.03 at the given generations."""
    best = start
    for generation in range(1, limit):
        if generation in improvements:
            best += 0.03
        reason = machine.update(generation, best, 0.0)
        if reason is not None:
            return generation, reason
    raise AssertionError("machine never stopped")


def test_repeated_extensions_reach_675():
    machine = StoppingMachine(200, 60.0)
    generation, reason = _drive(machine, {101, 151, 226})

    assert machine.history == [200, 300, 450, 675]
    assert generation == 675
    assert reason is StopReason.MAX_GENERATIONS


def test_single_extension_reaches_300():
    machine = StoppingMachine(200, 60.0)
    generation, reason = _drive(machine, {101})

    assert machine.history == [200, 300]
    assert generation == 300


def test_small_improvement_does_not_extend():
    machine = StoppingMachine(200, 60.0)
    best = 0.5
    for generation in range(1, 300):
        if generation == 120:
            best += 0.01
        if machine.update(generation, best, 0.0):
            break
    assert machine.history == [200]
    assert generation == 200


def test_stagnation_window():
    """No improvement after generation 1 stops after ⌈0.8 × 200⌉ generations."""
    machine = StoppingMachine(200, 60.0)
    generation, reason = _drive(machine, set())

    assert reason is StopReason.STAGNATION
    assert generation == 161


def test_saturation_and_time_budget():
    assert StoppingMachine(1200, 60.0).update(1, 1.0, 0.0) is StopReason.SATURATION
    assert StoppingMachine(200, 0.001).update(1, 0.4, 0.01) is StopReason.TIME_BUDGET


# --- trace summary --------------------------------------------------------

def test_summarize_trace():
    summary = summarize_trace([0.2, 0.4, 0.6, 0.8, 1.0])
    std = float(np.std([0.2, 0.4, 0.6, 0.8, 1.0], ddof=1))

    assert abs(summary.mean - 0.6) < 1e-12
    assert abs(summary.std - std) < 1e-12
    assert summary.max == 1.0
    assert summary.final == 0.8
    assert summary.final_index == 3


def test_summarize_constant_and_single():
    assert summarize_trace([0.5, 0.5, 0.5]).final == 0.5
    single = summarize_trace([0.3])
    assert (single.std, single.final) == (0.0, 0.3)
    with pytest.raises(ConfigurationError):
        summarize_trace([])


# --- runs -----------------------------------------------------------------

def test_randomized_micro_runs_hold_invariants():
    """Monotone global best, reproducible runs, final within one std of the mean."""
    rng = np.random.default_rng(2024)
    started = time.perf_counter()
    for trial in range(50):
        n_if = int(rng.integers(2, 31))
        pool = int(rng.choice([2, 4]))
        cfg = GaConfig(
            population_size=2 * pool,
            mating_pool=pool,
            mutations=int(rng.integers(0, min(3, n_if) + 1)),
            max_generations=int(rng.integers(3, 40)),
            seed=trial,
            fitness_family=str(rng.choice(["POFF", "VMFF", "NFF"])),
            uniform_crossover=bool(rng.random() < 0.3),
        )
        data = _matrix_data(n_cols=n_if, seed=trial)
        stub = _weighted_stub(n_if, trial)

        report = run(data, cfg, performance=stub)
        again = run(data, cfg, performance=stub)

        gb = report.global_best_trace
        assert all(b >= a for a, b in zip(gb, gb[1:]))
        assert gb[-1] == report.best_fitness == max(report.trace)
        assert len(report.generation_best) == report.generations_run
        assert all(g.shape == (n_if,) and g.any() for g in report.generation_best)
        assert report.mean - report.std - 1e-12 <= report.final <= report.mean + report.std + 1e-12
        assert report.final <= report.max
        assert report.trace == again.trace
        assert np.array_equal(report.best_chromosome, again.best_chromosome)
    assert time.perf_counter() - started < 60


def test_nff_with_perfect_learner_prunes_features():
    n_if = 20
    data = _matrix_data(n_cols=n_if)
    report = run(data, GaConfig(max_generations=30, seed=5), performance=lambda d, s: 1.0)

    assert report.best_fitness == 1.0 - report.best_chromosome.sum() / n_if
    # a rising global best means a shrinking global-best mask
    counts = [round((1.0 - f) * n_if) for f in report.global_best_trace]
    assert all(b <= a for a, b in zip(counts, counts[1:]))


def test_run_stops_on_time_budget():
    def slow(data, seed):
        time.sleep(0.02)
        return 0.5

    report = run(_matrix_data(), GaConfig(max_minutes=0.001), performance=slow)

    assert report.stop_reason is StopReason.TIME_BUDGET
    assert report.generations_run >= 1


def test_run_workers_do_not_change_result():
    data = _matrix_data(n_cols=15)
    stub = _weighted_stub(15, 1)
    serial = run(data, GaConfig(max_generations=10, seed=3), performance=stub)
    threaded = run(data, GaConfig(max_generations=10, seed=3, workers=4), performance=stub)

    assert serial.trace == threaded.trace


def test_run_wraps_model_failures():
    def broken(data, seed):
        raise DegenerateError("constant input")

    with pytest.raises(EvaluationError) as excinfo:
        run(_matrix_data(), GaConfig(), performance=broken)
    assert excinfo.value.generation == 1
    assert excinfo.value.chromosome == 0


def test_duplicates_in_a_generation_are_scored_once():
    calls = []

    def seeded(data, seed):
        calls.append(seed)
        return (seed % 97) / 97.0

    population = np.array([_bits("1100000000"), _bits("0011000000"), _bits("1100000000"), _bits("0000110000")])

    fits = ga._evaluate_generation(population, 1, _matrix_data(), GaConfig(), seeded)

    assert len(calls) == 3
    assert fits[2] == fits[0]


def test_run_rejects_too_many_mutations():
    with pytest.raises(ConfigurationError):
        run(_matrix_data(n_cols=2), GaConfig())


def test_run_report_dict_round_trip():
    data = _matrix_data(n_cols=12)
    report = run(data, GaConfig(max_generations=8, seed=2), performance=_weighted_stub(12, 2))

    payload = json.loads(json.dumps(report.to_dict()))
    back = RunReport.from_dict(payload)

    assert back.trace == report.trace
    assert np.array_equal(back.best_chromosome, report.best_chromosome)
    assert np.array_equal(back.final_chromosome, report.final_chromosome)
    assert back.stop_reason is report.stop_reason
    assert back.final == report.final
    assert report.selected_features(data.matrix.columns) == [
        n for n, keep in zip(data.matrix.columns, report.best_chromosome) if keep
    ]
    assert payload["config"]["lambda"] == 0.88
    assert math.isclose(payload["mean"], report.mean)


if __name__ == "__main__":
    test_vmff_examples()
    test_select_parents_rank_order()
    test_crossover_midpoint_splice()
    test_mutate_flips_exact_count()
    test_repeated_extensions_reach_675()
    test_single_extension_reaches_300()
    test_stagnation_window()
    test_summarize_trace()
    test_randomized_micro_runs_hold_invariants()
    print("All tests passed!")
