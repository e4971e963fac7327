"""GEP 유전 연산자, 토너먼트 선택, 세대 루프."""
import logging
import math
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from bench.records import RunRecord
from gep.dimension import DimResult
from gep.errors import ConfigurationError, EvolutionError
from gep.fitness import EvaluationBudget, Problem, dimension_penalty, evaluate_batch, fit_coefficients, mse
from gep.genome import (
    COEFFICIENT_RANGE,
    Chromosome,
    ExprTree,
    SymbolTable,
    link,
    random_gene,
    resize_coefficients,
    to_infix,
)
from gep.semantics import DEFAULT_EPS, CorrectionStats, SemanticLibrary, correct_population
from utils.seeding import derive_rng

logger = logging.getLogger(__name__)

# ============================================================================
# 설정 모델
# ============================================================================


class HomogeneityMode(str, Enum):
    NONE = "none"
    PENALTY = "penalty"
    SBP = "sbp"
    DISCARD = "discard"


class EvolutionConfig(BaseModel):
    """세대 루프 설정. 기본값은 표준 GEP 실험 설정을 따른다."""
    model_config = ConfigDict(extra="forbid", use_enum_values=False)

    population_size: int = Field(500, ge=1)
    generations: int = Field(1000, ge=0)
    head_length: int = Field(8, ge=1)
    gene_count: int = Field(3, ge=1)
    linker: str = "+"
    tournament_size: int = Field(3, ge=1)
    mating_fraction: float = Field(0.5, gt=0.0, le=1.0)
    p_mutation: float = Field(0.2, ge=0.0, le=1.0)
    p_inversion: float = Field(0.1, ge=0.0, le=1.0)
    p_xover1: float = Field(0.5, ge=0.0, le=1.0)
    p_xover2: float = Field(0.4, ge=0.0, le=1.0)
    mode: HomogeneityMode = HomogeneityMode.NONE
    lam: float = Field(0.0, ge=0.0)
    correction_cycles: int = Field(5, ge=1)
    eps: float = Field(DEFAULT_EPS, gt=0.0)
    max_evaluations: int = Field(1_000_000, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)
    loss_tolerance: float = Field(1e-12, ge=0.0)
    optimize_top_k: int = Field(10, ge=0)
    optimize_iterations: int = Field(30, ge=1)

    @model_validator(mode="after")
    def _check_consistency(self) -> "EvolutionConfig":
        if self.tournament_size > self.population_size:
            raise ValueError("tournament_size 는 population_size 이하여야 합니다")
        if self.max_evaluations < self.population_size:
            raise ValueError("max_evaluations 는 population_size 이상이어야 합니다")
        if self.linker not in ("+", "*"):
            raise ValueError(f"지원하지 않는 linker: {self.linker}")
        if self.mode == HomogeneityMode.NONE and self.lam != 0:
            raise ValueError("mode=none 에서는 lam 을 쓸 수 없습니다 (penalty 모드 사용)")
        if self.mode == HomogeneityMode.PENALTY and self.lam <= 0:
            raise ValueError("mode=penalty 는 lam > 0 이 필요합니다")
        return self


# ============================================================================
# 개체
# ============================================================================

@dataclass(eq=False)
class Individual:
    chromosome: Chromosome
    coefficients: np.ndarray = field(default_factory=lambda: np.zeros(0))
    fitness: float = math.inf
    dim_of_root: Optional[DimResult] = None
    evaluated: bool = False
    optimized: bool = False
    _tree: Optional[ExprTree] = field(default=None, repr=False)

    def tree(self, table: SymbolTable) -> ExprTree:
        if self._tree is None:
            self._tree = link(self.chromosome, table)
            self._tree.index_coefficients()
            self.dim_of_root = self._tree.infer_dimensions()
        return self._tree

    def root_dim(self, table: SymbolTable) -> DimResult:
        self.tree(table)
        return self.dim_of_root

    def complexity(self, table: SymbolTable) -> int:
        return self.tree(table).size()

    def with_genome(self, chromosome: Chromosome, coefficients: np.ndarray) -> "Individual":
        """유전형이 바뀐 새 개체 (적합도는 다시 계산해야 함)"""
        return Individual(chromosome=chromosome, coefficients=np.asarray(coefficients, dtype=float))

    def clone(self) -> "Individual":
        return replace(self, coefficients=self.coefficients.copy())


def random_individual(config: EvolutionConfig, table: SymbolTable, rng: np.random.Generator) -> Individual:
    genes = tuple(random_gene(table, config.head_length, rng) for _ in range(config.gene_count))
    individual = Individual(Chromosome(genes, config.linker))
    count = individual.tree(table).index_coefficients()
    individual.coefficients = rng.uniform(*COEFFICIENT_RANGE, size=count)
    return individual


def _offspring(parent: Individual, symbols: Sequence[int], table: SymbolTable, rng: np.random.Generator) -> Individual:
    chromosome = parent.chromosome.with_flat(symbols).validate(table)
    child = Individual(chromosome)
    count = child.tree(table).index_coefficients()
    child.coefficients = resize_coefficients(parent.coefficients, count, rng)
    return child


# ============================================================================
# 유전 연산자 (유전형에만 작용)
# ============================================================================

def mutate(individual: Individual, p: float, table: SymbolTable, rng: np.random.Generator) -> Individual:
    """위치별 확률 p 로 기호를 다시 뽑는다. head 는 모든 기호, tail 은 단말만."""
    if p <= 0:
        return individual
    head_len = individual.chromosome.head_len
    gene_length = individual.chromosome.gene_length
    symbols = list(individual.chromosome.flat())
    heads = np.asarray(table.head_ids)
    terminals = np.asarray(table.terminal_ids)
    changed = False
    for pos in range(len(symbols)):
        if rng.random() < p:
            pool = heads if pos % gene_length < head_len else terminals
            symbols[pos] = int(rng.choice(pool))
            changed = True
    if not changed:
        return individual
    return _offspring(individual, symbols, table, rng)


def invert(individual: Individual, p: float, table: SymbolTable, rng: np.random.Generator,
           *, segment: Optional[Tuple[int, int]] = None) -> Individual:
    """유전자별 확률 p 로 head 내부의 연속 구간을 뒤집는다."""
    if p <= 0:
        return individual
    chromosome = individual.chromosome
    head_len, gene_length = chromosome.head_len, chromosome.gene_length
    symbols = list(chromosome.flat())
    changed = False
    for g in range(len(chromosome.genes)):
        if rng.random() >= p:
            continue
        if segment is None:
            start, end = sorted(int(v) for v in rng.integers(0, head_len, size=2))
        else:
            start, end = segment
        if not 0 <= start <= end < head_len:
            raise EvolutionError(f"역전 구간 {start}..{end} 이 head 밖입니다")
        offset = g * gene_length
        symbols[offset + start:offset + end + 1] = symbols[offset + start:offset + end + 1][::-1]
        changed = changed or end > start
    if not changed:
        return individual
    return _offspring(individual, symbols, table, rng)


def _check_shapes(a: Individual, b: Individual) -> None:
    ca, cb = a.chromosome, b.chromosome
    if (len(ca.genes), ca.head_len) != (len(cb.genes), cb.head_len):
        raise EvolutionError("교차하려면 두 부모의 유전체 형태가 같아야 합니다")


def crossover_one_point(a: Individual, b: Individual, table: SymbolTable, rng: np.random.Generator,
                        *, cut: Optional[int] = None) -> Tuple[Individual, Individual]:
    _check_shapes(a, b)
    sa, sb = a.chromosome.flat(), b.chromosome.flat()
    if cut is None:
        cut = int(rng.integers(0, len(sa) + 1))
    return (
        _offspring(a, sa[:cut] + sb[cut:], table, rng),
        _offspring(b, sb[:cut] + sa[cut:], table, rng),
    )


def crossover_two_point(a: Individual, b: Individual, table: SymbolTable, rng: np.random.Generator,
                        *, cuts: Optional[Tuple[int, int]] = None) -> Tuple[Individual, Individual]:
    _check_shapes(a, b)
    sa, sb = a.chromosome.flat(), b.chromosome.flat()
    if cuts is None:
        cuts = tuple(sorted(int(v) for v in rng.integers(0, len(sa) + 1, size=2)))
    lo, hi = sorted(cuts)
    return (
        _offspring(a, sa[:lo] + sb[lo:hi] + sa[hi:], table, rng),
        _offspring(b, sb[:lo] + sa[lo:hi] + sb[hi:], table, rng),
    )


def tournament_select(population: Sequence[Individual], k: int, rng: np.random.Generator,
                      table: Optional[SymbolTable] = None) -> Individual:
    """k 명을 비복원 추출해 적합도 최소 개체를 고른다 (동률: 복잡도, 인덱스 순)."""
    if not population:
        raise EvolutionError("빈 개체군에서는 선택할 수 없습니다")
    if not 1 <= k <= len(population):
        raise EvolutionError(f"토너먼트 크기 {k} 가 개체군 크기 {len(population)} 와 맞지 않습니다")
    contenders = rng.choice(len(population), size=k, replace=False)

    def rank(index: int):
        individual = population[index]
        complexity = individual.complexity(table) if table is not None else 0
        return individual.fitness, complexity, index

    return population[min((int(i) for i in contenders), key=rank)]


# ============================================================================
# 평가
# ============================================================================

def score(individual: Individual, problem: Problem, config: EvolutionConfig) -> float:
    """모드별 적합도: none → MSE, penalty/sbp → MSE + λ·penalty, discard → 비동차면 inf"""
    tree = individual.tree(problem.table)
    return _mode_fitness(mse(problem.y, evaluate_batch(tree, problem.X, individual.coefficients)), tree, problem, config)


def _mode_fitness(error: float, tree: ExprTree, problem: Problem, config: EvolutionConfig) -> float:
    if config.mode == HomogeneityMode.NONE:
        return error
    penalty = dimension_penalty(tree, problem.target_dim)
    if config.mode == HomogeneityMode.DISCARD:
        return error if penalty == 0 else math.inf
    if config.lam == 0:
        return error
    return error + config.lam * penalty


def _evaluate_population(population: List[Individual], problem: Problem, config: EvolutionConfig,
                         budget: EvaluationBudget) -> None:
    for individual in population:
        if individual.evaluated:
            continue
        if not budget.try_charge(1):
            return
        individual.fitness = score(individual, problem, config)
        individual.evaluated = True


def _optimize_top(population: List[Individual], problem: Problem, config: EvolutionConfig,
                  budget: EvaluationBudget) -> None:
    if config.optimize_top_k == 0:
        return
    ranked = sorted((ind for ind in population if ind.evaluated and math.isfinite(ind.fitness)),
                    key=lambda ind: ind.fitness)
    for individual in ranked[: config.optimize_top_k]:
        if individual.optimized or individual.coefficients.size == 0 or budget.exhausted:
            continue
        tree = individual.tree(problem.table)
        fit = fit_coefficients(problem, tree, individual.coefficients,
                               max_iter=config.optimize_iterations, budget=budget)
        if fit.evaluations == 0:
            return
        # fit.loss 는 이미 청구된 평가의 MSE 이므로 다시 평가하지 않는다
        individual.coefficients = fit.coefficients
        individual.fitness = _mode_fitness(fit.loss, tree, problem, config)
        individual.optimized = True


def _vary(parents: Tuple[Individual, Individual], config: EvolutionConfig, table: SymbolTable,
          rng: np.random.Generator) -> Tuple[Individual, Individual]:
    """선택 → 1점 교차 → 2점 교차 → 역전 → 돌연변이 순서"""
    a, b = parents
    if rng.random() < config.p_xover1:
        a, b = crossover_one_point(a, b, table, rng)
    if rng.random() < config.p_xover2:
        a, b = crossover_two_point(a, b, table, rng)
    a = mutate(invert(a, config.p_inversion, table, rng), config.p_mutation, table, rng)
    b = mutate(invert(b, config.p_inversion, table, rng), config.p_mutation, table, rng)
    return a, b


def _next_generation(population: List[Individual], elite: Individual, config: EvolutionConfig,
                     table: SymbolTable, generation: int) -> List[Individual]:
    size = config.population_size
    n_varied = int(round(config.mating_fraction * (size - 1)))
    offspring: List[Individual] = [elite]
    slot = 1
    while len(offspring) < 1 + n_varied:
        rng = derive_rng(config.seed, generation, slot, "vary")
        parents = (tournament_select(population, config.tournament_size, rng, table),
                   tournament_select(population, config.tournament_size, rng, table))
        for child in _vary(parents, config, table, rng):
            if len(offspring) < 1 + n_varied:
                offspring.append(child if child not in parents else child.clone())
        slot += 2
    while len(offspring) < size:
        rng = derive_rng(config.seed, generation, len(offspring), "copy")
        offspring.append(tournament_select(population, config.tournament_size, rng, table).clone())
    return offspring


# ============================================================================
# 세대 루프
# ============================================================================

def _best(population: Sequence[Individual], table: SymbolTable) -> Individual:
    return min(enumerate(population), key=lambda p: (p[1].fitness, p[1].complexity(table), p[0]))[1]


GenerationHook = Callable[[int, Individual, Optional[CorrectionStats]], None]


@dataclass
class EvolutionResult:
    record: RunRecord
    best: Individual


def evolve(config: EvolutionConfig, problem: Problem, library: Optional[SemanticLibrary] = None,
           *, on_generation: Optional[GenerationHook] = None) -> RunRecord:
    """교정 → 평가 → 엘리트 보존 → 선택/변이 를 반복한다."""
    return run_evolution(config, problem, library, on_generation=on_generation).record


def run_evolution(config: EvolutionConfig, problem: Problem, library: Optional[SemanticLibrary] = None,
                  *, on_generation: Optional[GenerationHook] = None) -> EvolutionResult:
    """``evolve`` 와 같지만 최종 엘리트 개체도 함께 돌려준다."""
    if config.mode == HomogeneityMode.SBP and library is None:
        raise ConfigurationError("sbp 모드에는 의미 라이브러리가 필요합니다")
    started = time.perf_counter()
    table = problem.table
    init_rng = derive_rng(config.seed, "init")
    population = [random_individual(config, table, init_rng) for _ in range(config.population_size)]
    budget = EvaluationBudget(config.max_evaluations)

    homogeneous_initial = float(np.mean([ind.root_dim(table) == problem.target_dim for ind in population]))
    history: List[float] = []
    correction_before: List[float] = []
    correction_after: List[float] = []
    elite: Optional[Individual] = None
    stagnated = False
    generation = 0

    while True:
        stats = None
        if config.mode == HomogeneityMode.SBP:
            skip = (0,) if elite is not None else ()
            population, stats = correct_population(
                population, library, problem.target_dim, config.correction_cycles, config.eps,
                table=table, seed=config.seed, generation=generation, skip=skip,
            )
            correction_before.append(stats.fraction_before)
            correction_after.append(stats.fraction_after)

        _evaluate_population(population, problem, config, budget)
        _optimize_top(population, problem, config, budget)
        if generation == 0 and not any(math.isfinite(ind.fitness) for ind in population):
            stagnated = True
            logger.info("초기 개체군에 유효한 개체가 없음 (모든 적합도 inf)")

        best = _best(population, table)
        if elite is None or (best.fitness, best.complexity(table)) < (elite.fitness, elite.complexity(table)):
            elite = best
        history.append(elite.fitness)
        if on_generation is not None:
            on_generation(generation, elite, stats)

        if generation >= config.generations or budget.exhausted or elite.fitness < config.loss_tolerance:
            break
        generation += 1
        population = _next_generation(population, elite, config, table, generation)

    tree = elite.tree(table)
    record = RunRecord(
        mode=config.mode.value,
        lam=config.lam,
        seed=config.seed,
        best_expression=to_infix(tree, elite.coefficients),
        best_preorder=[node.symbol.name for node in tree.preorder()],
        best_coefficients=[float(c) for c in elite.coefficients],
        best_loss=elite.fitness,
        loss_history=history,
        generations=generation,
        evaluations=budget.used,
        wall_time_s=time.perf_counter() - started,
        homogeneous_initial=homogeneous_initial,
        homogeneous_best=elite.root_dim(table) == problem.target_dim,
        correction_before=float(np.mean(correction_before)) if correction_before else None,
        correction_after=float(np.mean(correction_after)) if correction_after else None,
        stagnated=stagnated,
        config=config.model_dump(mode="json"),
    )
    return EvolutionResult(record=record, best=elite)
