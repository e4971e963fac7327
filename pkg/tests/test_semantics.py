import copy

import numpy as np
import pytest

from gep.dimension import DIMENSIONLESS, UNDEFINED, parse_unit
from gep.errors import LibraryCacheError
from gep.evolution import EvolutionConfig, Individual, random_individual
from gep.genome import Chromosome, Gene, SymbolTable, decode, from_preorder
from gep.semantics import (
    SemanticLibrary,
    build_library,
    correct_population,
    target_coverage,
    library_from_document,
    library_to_document,
    lookup,
    propagate_change,
)

NEWTON = parse_unit("N")


@pytest.fixture
def charge_field_table() -> SymbolTable:
    """q=0, E=1, *=2"""
    return SymbolTable.build([("q", parse_unit("A*s")), ("E", parse_unit("V/m"))], ["*"])


def _ids(table, *names):
    lookup_ = {symbol.name: symbol.id for symbol in table.symbols}
    return tuple(lookup_[name] for name in names)


def _tree(table, *names):
    tree, _ = from_preorder(_ids(table, *names), table)
    tree.infer_dimensions()
    return tree


# ============================================================================
# 라이브러리 구성 / 조회
# ============================================================================

def test_library_holds_composed_force(charge_field_table):
    library = build_library(charge_field_table, 3, 50, np.random.default_rng(0))
    assert _ids(charge_field_table, "*", "q", "E") in library.entries[(NEWTON, 3)]
    assert library.entries[(parse_unit("A*s"), 1)] == [_ids(charge_field_table, "q")]


def test_library_without_operators_has_only_terminals():
    table = SymbolTable.build([("q", parse_unit("A*s")), ("E", parse_unit("V/m"))], [])
    library = build_library(table, 4, 50, np.random.default_rng(0))
    assert set(library.size_counts()) == {1}
    assert len(library) == 2


def test_library_cap_bounds_every_key(coulomb_table):
    library = build_library(coulomb_table, 4, 1, np.random.default_rng(0))
    assert all(len(items) <= 1 for items in library.entries.values())


def test_library_skips_undefined_and_nested_transcendentals():
    table = SymbolTable.build([("x", DIMENSIONLESS), ("m", parse_unit("m"))], ["+", "sin", "exp"])
    library = build_library(table, 4, 200, np.random.default_rng(0))
    for (_, _), items in library.entries.items():
        for symbols in items:
            tree = _tree(table, *[table[s].name for s in symbols])
            assert not tree.has_undefined()
            names = tree.signature()
            assert ("sin", "exp") != names[:2] and ("exp", "sin") != names[:2]


def test_lookup_cases(charge_field_table):
    rng = np.random.default_rng(0)
    library = SemanticLibrary(charge_field_table, head_len=3, cap=5,
                              entries={(NEWTON, 3): [_ids(charge_field_table, "*", "q", "E")]})
    assert lookup(library, parse_unit("kg"), 3, rng) is None
    assert lookup(library, NEWTON, 3, rng).signature() == ("*", "q", "E")
    assert lookup(library, NEWTON, 2, rng) is None

    built = build_library(charge_field_table, 3, 50, np.random.default_rng(1))
    assert lookup(built, NEWTON, 3, rng).signature() in {("*", "q", "E"), ("*", "E", "q")}


def test_library_document_round_trip_and_checksum(coulomb_table):
    library = build_library(coulomb_table, 3, 20, np.random.default_rng(5))
    library.seed = 5
    document = library_to_document(library)
    restored = library_from_document(copy.deepcopy(document), coulomb_table)
    assert restored.entries == library.entries
    assert restored.seed == 5
    rebuilt = library_to_document(build_library(coulomb_table, 3, 20, np.random.default_rng(5)))
    assert rebuilt["payload"]["entries"] == document["payload"]["entries"]

    tampered = copy.deepcopy(document)
    tampered["payload"]["cap"] = 21
    with pytest.raises(LibraryCacheError):
        library_from_document(tampered, coulomb_table)

    other = SymbolTable.build([("q", parse_unit("A*s")), ("E", parse_unit("m"))], ["+", "-", "*", "/", "sqrt"],
                              constant=True, literals=[1.0])
    with pytest.raises(LibraryCacheError):
        library_from_document(document, other)


# ============================================================================
# 교정
# ============================================================================

def test_homogeneous_tree_is_left_alone(charge_field_table):
    tree = _tree(charge_field_table, "*", "q", "E")
    library = build_library(charge_field_table, 3, 50, np.random.default_rng(0))
    assert propagate_change(tree, NEWTON, library, np.random.default_rng(0))
    assert tree.signature() == ("*", "q", "E")


def test_center_of_gravity_denominator_is_repaired():
    table = SymbolTable.build([("m0", parse_unit("kg")), ("r0", parse_unit("m"))], ["+", "*", "/"], constant=True)
    library = build_library(table, 3, 50, np.random.default_rng(0))
    tree = _tree(table, "/", "*", "m0", "r0", "+", "m0", "c")
    assert tree.infer_dimensions() is UNDEFINED

    assert propagate_change(tree, parse_unit("m"), library, np.random.default_rng(0))
    assert tree.infer_dimensions() == parse_unit("m")
    numerator, denominator = tree.children
    assert numerator.signature() == ("*", "m0", "r0")
    assert denominator.dim == parse_unit("kg")


def test_failed_repair_restores_tree(coulomb_table):
    library = SemanticLibrary(coulomb_table, head_len=3, cap=10)
    tree = _tree(coulomb_table, "*", "+", "1", "q", "E")
    before = tree.signature()
    assert not propagate_change(tree, NEWTON, library, np.random.default_rng(0))
    assert tree.signature() == before


def _individual(table, *names):
    gene = Gene(_ids(table, *names), head_len=(len(names) - 1) // 2)
    return Individual(Chromosome((gene,), "+"), coefficients=np.zeros(0))


def test_population_correction_repairs_violating_mutant(coulomb_table):
    library = build_library(coulomb_table, 2, 50, np.random.default_rng(0))
    mutant = _individual(coulomb_table, "*", "+", "1", "q", "E")
    corrected, stats = correct_population([mutant], library, NEWTON, 5, table=coulomb_table, seed=1)
    assert stats.fraction_before == 0.0
    assert stats.fraction_after == 1.0
    assert stats.repaired == 1
    repaired = corrected[0]
    assert repaired is not mutant
    tree, _ = decode(repaired.chromosome.genes[0], coulomb_table)
    assert tree.infer_dimensions() == NEWTON
    assert repaired.root_dim(coulomb_table) == NEWTON


def test_homogeneous_population_is_unchanged(coulomb_table):
    library = build_library(coulomb_table, 2, 50, np.random.default_rng(0))
    population = [_individual(coulomb_table, "*", "q", "E", "q", "q") for _ in range(4)]
    corrected, stats = correct_population(population, library, NEWTON, 5, table=coulomb_table)
    assert all(a is b for a, b in zip(corrected, population))
    assert stats.fraction_after == 1.0 and stats.repaired == 0


def test_correction_is_deterministic_and_respects_skip(coulomb_table):
    library = build_library(coulomb_table, 4, 30, np.random.default_rng(0))
    config = EvolutionConfig(population_size=20, head_length=4, gene_count=2)
    population = [random_individual(config, coulomb_table, np.random.default_rng(i)) for i in range(20)]
    first, _ = correct_population(population, library, NEWTON, 3, table=coulomb_table, seed=9, skip=[0])
    second, _ = correct_population(population, library, NEWTON, 3, table=coulomb_table, seed=9, skip=[0])
    assert first[0] is population[0]
    assert [i.chromosome for i in first] == [i.chromosome for i in second]


def test_repaired_individuals_still_fit_their_genes(coulomb_table):
    library = build_library(coulomb_table, 4, 30, np.random.default_rng(0))
    config = EvolutionConfig(population_size=40, head_length=4, gene_count=2)
    population = [random_individual(config, coulomb_table, np.random.default_rng(i)) for i in range(40)]
    corrected, stats = correct_population(population, library, NEWTON, 5, table=coulomb_table, seed=3)
    for individual in corrected:
        individual.chromosome.validate(coulomb_table)
        assert individual.coefficients.size == individual.tree(coulomb_table).index_coefficients()
    homogeneous = sum(ind.root_dim(coulomb_table) == NEWTON for ind in corrected)
    assert homogeneous == stats.homogeneous_after


def test_more_cycles_never_lower_homogeneity(coulomb_table):
    library = build_library(coulomb_table, 4, 30, np.random.default_rng(0))
    config = EvolutionConfig(population_size=30, head_length=4, gene_count=2)
    for seed in range(20):
        rng = np.random.default_rng(seed)
        population = [random_individual(config, coulomb_table, rng) for _ in range(30)]
        _, one = correct_population(population, library, NEWTON, 1, table=coulomb_table, seed=seed)
        _, five = correct_population(population, library, NEWTON, 5, table=coulomb_table, seed=seed)
        assert five.fraction_after >= one.fraction_after


def test_population_correction_reports_unreachable_target(coulomb_table, caplog):
    library = SemanticLibrary(coulomb_table, head_len=3, cap=10)
    mutants = [_individual(coulomb_table, "*", "+", "1", "q", "E") for _ in range(3)]
    with caplog.at_level("WARNING", logger="gep.semantics"):
        corrected, stats = correct_population(mutants, library, NEWTON, 3, table=coulomb_table, seed=2, generation=7)
    assert all(a is b for a, b in zip(corrected, mutants))
    assert stats.fraction_after == 0.0
    assert stats.unrepaired == 3 and stats.repaired == 0 and stats.reverted == 0
    assert stats.target_sizes == ()
    assert any("세대 7" in record.getMessage() for record in caplog.records)


def test_target_coverage_lists_size_classes(coulomb_table, caplog):
    library = build_library(coulomb_table, 3, 50, np.random.default_rng(0))
    assert 3 in target_coverage(library, NEWTON)
    assert 1 not in target_coverage(library, NEWTON)
    mutant = _individual(coulomb_table, "*", "+", "1", "q", "E")
    with caplog.at_level("WARNING", logger="gep.semantics"):
        _, stats = correct_population([mutant], library, NEWTON, 5, table=coulomb_table, seed=1)
    assert stats.target_sizes == target_coverage(library, NEWTON)
    assert stats.fraction_after == 1.0
    assert not [r for r in caplog.records if r.name == "gep.semantics"]
