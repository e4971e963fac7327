"""축소된 비교 실험. 방향성만 확인한다 (기본 실행에서 제외)."""
import asyncio
import os

import numpy as np
import pytest

from bench.datasets import build_problem, load_dataset, load_problem_spec, split
from bench.report import records_frame
from core.config import RunConfig
from core.storage import read_records
from core.trial_manager import run_trials
from gep.dimension import parse_unit
from gep.evolution import EvolutionConfig, random_individual, run_evolution
from gep.genome import SymbolTable
from gep.semantics import build_library, correct_population
from utils.seeding import derive_rng

from conftest import PROBLEMS_DIR

pytestmark = pytest.mark.slow

SEEDS = range(6)


def _problem(name: str):
    spec = load_problem_spec(PROBLEMS_DIR / f"{name}.json")
    X, y = load_dataset(spec)
    (X_train, y_train), _ = split(X, y, 0.75, derive_rng(0, spec.name, "split"))
    table = spec.symbol_table(["+", "-", "*", "/", "sqrt"])
    return build_problem(spec, X_train, y_train, table)


def _config(mode: str, seed: int) -> EvolutionConfig:
    return EvolutionConfig(population_size=100, generations=40, head_length=5, gene_count=2, mode=mode,
                           max_evaluations=60_000, optimize_top_k=3, optimize_iterations=10, seed=seed)


@pytest.mark.parametrize("name", ["coulomb_force", "velocity", "center_of_gravity"])
def test_sbp_finds_homogeneous_models_more_often(name):
    problem = _problem(name)
    library = build_library(problem.table, 5, 50, derive_rng(0, "library"))
    homogeneous = {"none": 0, "sbp": 0}
    for seed in SEEDS:
        for mode in homogeneous:
            result = run_evolution(_config(mode, seed), problem, library if mode == "sbp" else None)
            homogeneous[mode] += result.record.homogeneous_best
    assert homogeneous["sbp"] >= homogeneous["none"]
    assert homogeneous["sbp"] >= len(SEEDS) // 2


def test_correction_raises_homogeneous_fraction():
    problem = _problem("kinetic_energy")
    library = build_library(problem.table, 5, 50, derive_rng(0, "library"))
    gains = []
    for seed in SEEDS:
        record = run_evolution(_config("sbp", seed), problem, library).record
        gains.append(record.correction_after - record.correction_before)
    assert min(gains) >= 0.0
    assert np.mean(gains) > 0.0


def test_correction_over_random_populations():
    rng = np.random.default_rng(0)
    units = ["kg", "m", "s", "A*s", "V/m", "m/s", "J"]
    config = EvolutionConfig(population_size=500, head_length=8, gene_count=1)
    before, after = [], []
    for trial in range(20):
        chosen = rng.choice(len(units), size=int(rng.integers(3, 8)), replace=False)
        table = SymbolTable.build([(f"x{i}", parse_unit(units[k])) for i, k in enumerate(chosen)],
                                  ["+", "-", "*", "/"], constant=True)
        target = table.terminals[0].dim + table.terminals[1].dim
        library = build_library(table, 8, 50, derive_rng(trial, "library"))
        population = [random_individual(config, table, derive_rng(trial, i)) for i in range(500)]
        _, stats = correct_population(population, library, target, 5, table=table, seed=trial)
        before.append(stats.fraction_before)
        after.append(stats.fraction_after)
    assert all(b <= a for b, a in zip(before, after))
    assert np.median(after) >= 0.90
    assert np.median(after) > np.median(before)


# ============================================================================
# 쉬운 문제 묶음: 모드별 비교 (none / sbp / discard, γ ∈ {0, 0.1}, 10 seed)
# ============================================================================

SUITE_SEEDS = 10


@pytest.fixture(scope="module")
def suite_records(tmp_path_factory):
    root = tmp_path_factory.mktemp("suite")
    config = RunConfig.model_validate({
        "evolution": {"population_size": 500, "generations": 300, "head_length": 8, "gene_count": 3,
                      "max_evaluations": 300_000, "seed": 0},
        "modes": ["none", "sbp", "discard"],
        "gammas": [0.0, 0.1],
        "trials": SUITE_SEEDS,
        "problems": [str(PROBLEMS_DIR / "*.json")],
        "output_dir": str(root / "out"),
        "library_cache": str(root / "library"),
        "jobs": os.cpu_count() or 1,
    })
    assert asyncio.run(run_trials(config)).ok
    return read_records([str(root / "out" / "records" / "*.json")])


@pytest.fixture(scope="module")
def suite_frame(suite_records):
    return records_frame(suite_records)


def test_sbp_recovers_easy_problems(suite_frame):
    runs = suite_frame[(suite_frame["mode"] == "sbp") & (suite_frame["gamma"] == 0.0)]
    solved = runs.groupby("problem")["solution"].sum()
    assert len(solved) == 5
    assert (solved >= 7).all(), solved.to_dict()


def test_sbp_is_not_worse_under_noise(suite_frame):
    noisy = suite_frame[suite_frame["gamma"] == 0.1]
    by_mode = noisy.groupby("mode").agg(r2=("r2_test", "median"), complexity=("complexity", "median"))
    assert by_mode.loc["sbp", "r2"] >= by_mode.loc["none", "r2"]
    assert by_mode.loc["sbp", "complexity"] <= by_mode.loc["none", "complexity"]


def test_discard_lowers_solution_rate(suite_frame):
    rates = suite_frame.groupby("mode")["solution"].mean()
    assert rates["discard"] < rates["none"]
    assert rates["discard"] < rates["sbp"]


def test_discard_runs_without_valid_start_stagnate(suite_records):
    discard = [r for r in suite_records if r.mode == "discard"]
    assert len(discard) == 5 * 2 * SUITE_SEEDS
    assert all(r.stagnated for r in discard if r.homogeneous_initial == 0.0)
