"""
Binary-mask genetic algorithm for wrapper feature selection.

Each generation evaluates every chromosome through the wrapped model,
keeps the p_m fittest as parents, splices them pairwise at the midpoint
and flips n_m genes of every child. Fitness is always maximised.

VMFF is maximised exactly as written, so its λ(1 − perf) term rewards a
*weaker* model; keep this in mind when reading VMFF fitness values.
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError, EegGafsError, EvaluationError
from .learners import kmeans, svm_cv_accuracy
from .models import LabeledData

logger = logging.getLogger(__name__)

EXTENSION_MARGIN = 0.02
SATURATION_GENERATIONS = 1000

# (masked data, model seed) -> model performance
Performance = Callable[[LabeledData, int], float]


class Mode(str, Enum):
    SUPERVISED = "supervised"
    UNSUPERVISED = "unsupervised"


class FitnessFamily(str, Enum):
    POFF = "POFF"   # performance only
    VMFF = "VMFF"   # λ-weighted trade-off
    NFF = "NFF"     # performance × (1 − selected fraction)


class StopReason(str, Enum):
    MAX_GENERATIONS = "max_generations"
    TIME_BUDGET = "time_budget"
    STAGNATION = "stagnation"
    SATURATION = "saturation"


@dataclass
class GaConfig:
    """GA parameters; defaults follow n_p=8, p_m=4, n_m=3, λ=0.88."""
    population_size: int = 8
    mating_pool: int = 4
    mutations: int = 3
    lam: float = 0.88
    max_generations: int = 200
    max_minutes: float = 60.0
    seed: int = 0
    mode: Mode = Mode.SUPERVISED
    fitness_family: FitnessFamily = FitnessFamily.NFF
    k: Optional[int] = None
    folds: int = 10
    uniform_crossover: bool = False
    workers: int = 1

    def __post_init__(self):
        self.mode = Mode(self.mode)
        self.fitness_family = FitnessFamily(self.fitness_family)

    def violations(self) -> List[Tuple[str, str]]:
        """Every broken constraint as (field, problem) pairs."""
        problems = []
        if self.mating_pool < 2 or self.mating_pool % 2:
            problems.append(("mating_pool", f"must be an even count >= 2 (got {self.mating_pool})"))
        if self.mating_pool > self.population_size:
            problems.append(("mating_pool", f"exceeds population_size {self.population_size}"))
        if self.population_size != 2 * self.mating_pool:
            problems.append((
                "population_size",
                f"must equal parents + offspring = 2 x mating_pool "
                f"(got {self.population_size} with mating_pool {self.mating_pool})",
            ))
        if self.mutations < 0:
            problems.append(("mutations", f"must be >= 0 (got {self.mutations})"))
        if not (0.0 <= self.lam <= 1.0):
            problems.append(("lambda", f"must be in [0, 1] (got {self.lam})"))
        if self.max_generations < 1:
            problems.append(("max_generations", f"must be >= 1 (got {self.max_generations})"))
        if self.max_minutes <= 0:
            problems.append(("max_minutes", f"must be > 0 (got {self.max_minutes})"))
        if self.mode is Mode.UNSUPERVISED and (self.k is None or self.k < 2):
            problems.append(("k", f"unsupervised mode needs a cluster count >= 2 (got {self.k})"))
        if self.mode is Mode.SUPERVISED and self.folds < 2:
            problems.append(("folds", f"must be >= 2 (got {self.folds})"))
        if self.workers < 1:
            problems.append(("workers", f"must be >= 1 (got {self.workers})"))
        return problems

    def validate(self) -> None:
        problems = self.violations()
        if problems:
            raise ConfigurationError("; ".join(f"{name}: {problem}" for name, problem in problems))


# --- fitness --------------------------------------------------------------

def combine_fitness(perf: float, n_selected: int, n_total: int, family: FitnessFamily, lam: float = 0.88) -> float:
    """Fold model performance and selected-feature ratio into one fitness value."""
    ratio_kept = 1.0 - n_selected / n_total
    family = FitnessFamily(family)
    if family is FitnessFamily.POFF:
        return float(perf)
    if family is FitnessFamily.VMFF:
        return float(lam * (1.0 - perf) + (1.0 - lam) * ratio_kept)
    return float(perf * ratio_kept)


def model_performance(data: LabeledData, cfg: GaConfig, seed: int) -> float:
    """CV accuracy (supervised) or average silhouette of K-means (unsupervised)."""
    if cfg.mode is Mode.SUPERVISED:
        return svm_cv_accuracy(data, folds=cfg.folds, seed=seed)
    return kmeans(data.X, cfg.k, seed=seed).avg_silhouette


def fitness(
    c: np.ndarray,
    data: LabeledData,
    cfg: GaConfig,
    seed: Optional[int] = None,
    performance: Optional[Performance] = None,
) -> float:
    """
    Fitness of one chromosome: mask the data, run the wrapped model, combine.

    Raises:
        ConfigurationError: Empty mask or length mismatch
    """
    c = np.asarray(c).astype(bool)
    if c.shape != (data.n_features,):
        raise ConfigurationError(f"chromosome length {c.size} != {data.n_features} features")
    n_selected = int(c.sum())
    if n_selected == 0:
        raise ConfigurationError("empty feature mask cannot be evaluated")
    evaluate = performance or (lambda d, s: model_performance(d, cfg, s))
    perf = evaluate(data.masked(c), cfg.seed if seed is None else seed)
    return combine_fitness(perf, n_selected, data.n_features, cfg.fitness_family, cfg.lam)


def evaluation_seed(run_seed: int, generation: int, index: int) -> int:
    """Model seed derived from (run seed, generation, chromosome index)."""
    return int(np.random.SeedSequence([run_seed, generation, index]).generate_state(1)[0])


# --- operators ------------------------------------------------------------

def _rng(cfg_or_seed) -> np.random.Generator:
    return np.random.default_rng(cfg_or_seed)


def init_population(cfg: GaConfig, n_if: int, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """n_p random masks with P(1)=0.5 per gene; all-zero masks are redrawn."""
    if n_if < 1:
        raise ConfigurationError(f"need at least one feature (got {n_if})")
    rng = rng or _rng(cfg.seed)
    population = np.zeros((cfg.population_size, n_if), dtype=bool)
    for i in range(cfg.population_size):
        genes = rng.random(n_if) < 0.5
        while not genes.any():
            genes = rng.random(n_if) < 0.5
        population[i] = genes
    return population


def select_parents(population: np.ndarray, fitnesses: Sequence[float], p_m: int) -> np.ndarray:
    """Indices of the p_m fittest chromosomes in rank order (ties: lower index, then fewer genes)."""
    fitnesses = np.asarray(fitnesses, dtype=float)
    popcounts = np.asarray(population).sum(axis=1)
    order = sorted(range(len(fitnesses)), key=lambda i: (-fitnesses[i], i, popcounts[i]))
    return np.array(order[:p_m], dtype=int)


def crossover(parents: np.ndarray, rng: Optional[np.random.Generator] = None, uniform: bool = False) -> np.ndarray:
    """
    Pair ranked parents (1st-2nd, 3rd-4th, …); each pair yields two children.

    The midpoint splice takes the first ⌈N/2⌉ genes from one parent and the
    rest from the other; `uniform` swaps a random per-gene choice instead.
    """
    parents = np.asarray(parents, dtype=bool)
    if parents.shape[0] % 2:
        raise ConfigurationError(f"crossover needs an even number of parents (got {parents.shape[0]})")
    n_if = parents.shape[1]
    cut = math.ceil(n_if / 2)
    children = []
    for x, y in zip(parents[0::2], parents[1::2]):
        if uniform:
            take_x = (rng or _rng(None)).random(n_if) < 0.5
            children.append(np.where(take_x, x, y))
            children.append(np.where(take_x, y, x))
        else:
            children.append(np.concatenate([x[:cut], y[cut:]]))
            children.append(np.concatenate([y[:cut], x[cut:]]))
    return np.array(children, dtype=bool).reshape(-1, n_if)


def mutate(c: np.ndarray, n_m: int, rng: np.random.Generator) -> np.ndarray:
    """Flip n_m distinct genes; an all-zero result gets one random gene set."""
    c = np.asarray(c, dtype=bool).copy()
    if n_m > c.size:
        raise ConfigurationError(f"cannot flip {n_m} of {c.size} genes")
    if n_m:
        positions = rng.choice(c.size, size=n_m, replace=False)
        c[positions] = ~c[positions]
    if not c.any():
        c[rng.integers(c.size)] = True
    return c


# --- stopping -------------------------------------------------------------

class StoppingMachine:
    """
    Dynamic generation budget.

    Stops on the generation cap, the wall-clock budget, a no-improvement
    window of ⌈0.8 × cap⌉ generations, or a cap above 1000 with a perfect
    best fitness. Once half the cap has passed the best fitness is
    recorded; beating that record by more than 0.02 raises the cap by 50%
    and the record is taken again at the new halfway point.
    """

    def __init__(self, max_generations: int, max_minutes: float):
        self.max_generations = max_generations
        self.max_minutes = max_minutes
        self.history: List[int] = [max_generations]
        self.fitness_check: Optional[float] = None
        self.best = -math.inf
        self.last_improvement = 0

    def _halfway(self) -> int:
        return math.ceil(0.5 * self.max_generations)

    def update(self, generation: int, global_best: float, elapsed_minutes: float) -> Optional[StopReason]:
        """Feed the state after `generation`; returns a reason to stop, or None."""
        if global_best > self.best:
            self.best = global_best
            self.last_improvement = generation

        if self.fitness_check is None:
            if generation >= self._halfway():
                self.fitness_check = global_best
                logger.debug(f"Generation {generation}: fitness check recorded at {global_best:.4f}")
        elif global_best > self.fitness_check + EXTENSION_MARGIN:
            self.max_generations = math.ceil(1.5 * self.max_generations)
            self.history.append(self.max_generations)
            self.fitness_check = global_best if generation >= self._halfway() else None
            logger.info(f"Generation {generation}: best {global_best:.4f} -> max generations {self.max_generations}")

        if self.max_generations > SATURATION_GENERATIONS and global_best >= 1.0:
            return StopReason.SATURATION
        if generation - self.last_improvement >= math.ceil(0.8 * self.max_generations):
            return StopReason.STAGNATION
        if generation >= self.max_generations:
            return StopReason.MAX_GENERATIONS
        if elapsed_minutes > self.max_minutes:
            return StopReason.TIME_BUDGET
        return None


# --- report ---------------------------------------------------------------

@dataclass
class TraceSummary:
    mean: float
    std: float
    max: float
    final: float
    final_index: int


def summarize_trace(trace: Sequence[float]) -> TraceSummary:
    """
    mean, sample std, max, and final = the largest value inside
    [mean − std, mean + std].

    Raises:
        ConfigurationError: Empty trace
    """
    values = np.asarray(trace, dtype=float)
    if values.size == 0:
        raise ConfigurationError("cannot summarise an empty fitness trace")
    mean = float(values.mean())
    std = float(values.std(ddof=1)) if values.size > 1 else 0.0
    tol = 1e-12
    inside = np.flatnonzero((values >= mean - std - tol) & (values <= mean + std + tol))
    final_index = int(inside[np.argmax(values[inside])])
    return TraceSummary(mean=mean, std=std, max=float(values.max()), final=float(values[final_index]),
                        final_index=final_index)


@dataclass
class RunReport:
    """Outcome of one GA run."""
    trace: List[float]
    global_best_trace: List[float]
    generation_best: List[np.ndarray]
    best_chromosome: np.ndarray
    best_fitness: float
    best_generation: int
    stop_reason: StopReason
    elapsed_minutes: float
    minutes_to_best: float
    max_generations_history: List[int]
    mean: float = 0.0
    std: float = 0.0
    max: float = 0.0
    final: float = 0.0
    final_chromosome: Optional[np.ndarray] = None
    config: Dict = field(default_factory=dict)

    def __post_init__(self):
        summary = summarize_trace(self.trace)
        self.mean, self.std, self.max, self.final = summary.mean, summary.std, summary.max, summary.final
        if self.final_chromosome is None:
            self.final_chromosome = self.generation_best[summary.final_index]

    @property
    def generations_run(self) -> int:
        return len(self.trace)

    def selected_features(self, names: Sequence[str], final: bool = False) -> List[str]:
        genes = self.final_chromosome if final else self.best_chromosome
        return [n for n, keep in zip(names, genes) if keep]

    def summary_row(self) -> Dict[str, float]:
        return {"mean": self.mean, "std": self.std, "max": self.max, "final": self.final}

    def to_dict(self) -> dict:
        return {
            "trace": list(self.trace),
            "global_best_trace": list(self.global_best_trace),
            "generation_best": [np.flatnonzero(g).tolist() for g in self.generation_best],
            "n_features": int(self.best_chromosome.size),
            "best_chromosome": np.flatnonzero(self.best_chromosome).tolist(),
            "best_fitness": self.best_fitness,
            "best_generation": self.best_generation,
            "final_chromosome": np.flatnonzero(self.final_chromosome).tolist(),
            "stop_reason": self.stop_reason.value,
            "elapsed_minutes": self.elapsed_minutes,
            "minutes_to_best": self.minutes_to_best,
            "generations_run": self.generations_run,
            "max_generations_history": list(self.max_generations_history),
            **self.summary_row(),
            "config": dict(self.config),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunReport":
        n = int(data["n_features"])

        def mask(indices):
            genes = np.zeros(n, dtype=bool)
            genes[list(indices)] = True
            return genes

        return cls(
            trace=list(data["trace"]),
            global_best_trace=list(data["global_best_trace"]),
            generation_best=[mask(g) for g in data["generation_best"]],
            best_chromosome=mask(data["best_chromosome"]),
            best_fitness=float(data["best_fitness"]),
            best_generation=int(data["best_generation"]),
            stop_reason=StopReason(data["stop_reason"]),
            elapsed_minutes=float(data["elapsed_minutes"]),
            minutes_to_best=float(data["minutes_to_best"]),
            max_generations_history=list(data["max_generations_history"]),
            final_chromosome=mask(data["final_chromosome"]),
            config=dict(data.get("config", {})),
        )


# --- driver ---------------------------------------------------------------

def _evaluate_generation(
    population: np.ndarray,
    generation: int,
    data: LabeledData,
    cfg: GaConfig,
    performance: Optional[Performance],
) -> np.ndarray:
    """Fitness of every chromosome; duplicates reuse the first occurrence's value."""
    first_index: Dict[bytes, int] = {}
    unique = []
    for i, genes in enumerate(population):
        key = np.packbits(genes).tobytes()
        if key not in first_index:
            first_index[key] = i
            unique.append(i)

    def score(i: int) -> float:
        try:
            return fitness(population[i], data, cfg, evaluation_seed(cfg.seed, generation, i), performance)
        except EegGafsError as e:
            raise EvaluationError(str(e), generation=generation, chromosome=i) from e

    if cfg.workers > 1 and len(unique) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            values = dict(zip(unique, pool.map(score, unique)))
    else:
        values = {i: score(i) for i in unique}

    return np.array([values[first_index[np.packbits(g).tobytes()]] for g in population])


def run(data: LabeledData, cfg: GaConfig, performance: Optional[Performance] = None) -> RunReport:
    """
    Evolve feature masks until a stopping criterion fires.

    Args:
        data: Feature matrix with labels (labels unused in unsupervised mode)
        cfg: GA configuration
        performance: Optional replacement for the wrapped model

    Returns:
        RunReport with the per-generation best trace and statistics

    Raises:
        ConfigurationError: Invalid configuration for this data
        EvaluationError: The wrapped model failed (with generation context)
    """
    cfg.validate()
    n_if = data.n_features
    if cfg.mutations > n_if:
        raise ConfigurationError(f"mutations ({cfg.mutations}) exceeds the {n_if} features")

    rng = _rng(cfg.seed)
    population = init_population(cfg, n_if, rng)
    machine = StoppingMachine(cfg.max_generations, cfg.max_minutes)

    trace: List[float] = []
    global_trace: List[float] = []
    generation_best: List[np.ndarray] = []
    best_fitness = -math.inf
    best_chromosome = population[0].copy()
    best_generation = 0
    minutes_to_best = 0.0

    logger.info(
        f"GA start: {n_if} features, mode={cfg.mode.value}, fitness={cfg.fitness_family.value}, "
        f"max_generations={cfg.max_generations}, max_minutes={cfg.max_minutes}"
    )
    start = time.perf_counter()
    generation = 0
    while True:
        generation += 1
        fits = _evaluate_generation(population, generation, data, cfg, performance)
        local = int(np.argmax(fits))
        trace.append(float(fits[local]))
        generation_best.append(population[local].copy())

        elapsed = (time.perf_counter() - start) / 60.0
        if fits[local] > best_fitness:
            best_fitness = float(fits[local])
            best_chromosome = population[local].copy()
            best_generation = generation
            minutes_to_best = elapsed
            logger.debug(
                f"Generation {generation}: new global best {best_fitness:.4f} "
                f"({int(best_chromosome.sum())} features)"
            )
        global_trace.append(best_fitness)

        reason = machine.update(generation, best_fitness, elapsed)
        if reason is not None:
            break

        parents = population[select_parents(population, fits, cfg.mating_pool)]
        children = crossover(parents, rng, uniform=cfg.uniform_crossover)
        children = np.array([mutate(child, cfg.mutations, rng) for child in children])
        population = np.vstack([parents, children])

    elapsed = (time.perf_counter() - start) / 60.0
    report = RunReport(
        trace=trace,
        global_best_trace=global_trace,
        generation_best=generation_best,
        best_chromosome=best_chromosome,
        best_fitness=best_fitness,
        best_generation=best_generation,
        stop_reason=reason,
        elapsed_minutes=elapsed,
        minutes_to_best=minutes_to_best,
        max_generations_history=list(machine.history),
        config={
            "population_size": cfg.population_size,
            "mating_pool": cfg.mating_pool,
            "mutations": cfg.mutations,
            "lambda": cfg.lam,
            "seed": cfg.seed,
            "mode": cfg.mode.value,
            "fitness_family": cfg.fitness_family.value,
            "k": cfg.k,
            "folds": cfg.folds,
            "uniform_crossover": cfg.uniform_crossover,
        },
    )
    logger.info(
        f"GA stop ({reason.value}) after {report.generations_run} generations, "
        f"{elapsed:.3f} min: best {best_fitness:.4f} with {int(best_chromosome.sum())}/{n_if} features, "
        f"final {report.final:.4f}"
    )
    return report
