import math
from itertools import product

import numpy as np
import pytest
from scipy.stats import rankdata

from bench.expr_parser import parse_expression
from bench.metrics import probe_points, r2_score, symbolic_solution
from bench.simplify import complexity, simplify
from bench.stats import signed_rank, wilcoxon_report
from gep.dimension import DIMENSIONLESS
from gep.errors import ExpressionSyntaxError, MetricError
from gep.fitness import evaluate_batch
from gep.genome import SymbolTable, decode, random_gene, to_infix


@pytest.fixture
def table() -> SymbolTable:
    return SymbolTable.build([("x1", DIMENSIONLESS), ("x2", DIMENSIONLESS)], ["+", "-", "*", "/", "log", "exp"])


@pytest.fixture
def sample_rows() -> np.ndarray:
    return np.random.default_rng(0).uniform(1, 5, size=(128, 2))


# ============================================================================
# 식 파서
# ============================================================================

def test_parse_expression_builds_dimensioned_tree(coulomb_table):
    tree = parse_expression("q*E", coulomb_table)
    assert to_infix(tree) == "(q * E)"
    assert tree.dim == coulomb_table.feature("q").dim + coulomb_table.feature("E").dim


def test_parse_expression_powers_and_constants(table):
    tree = parse_expression("x1^2 / (4*pi*x2)", table)
    assert to_infix(tree) == "((x1)^2 / ((4 * 3.14159265359) * x2))"
    assert to_infix(parse_expression("-x1^1", table)) == "-(x1)"


@pytest.mark.parametrize("text", ["x3 + 1", "x1 +", "x1 ^ x2", "foo(x1)", ""])
def test_parse_expression_rejects_bad_input(table, text):
    with pytest.raises(ExpressionSyntaxError):
        parse_expression(text, table)


# ============================================================================
# 단순화 / 복잡도
# ============================================================================

@pytest.mark.parametrize("text, expected", [
    ("(x1+0)*1", "x1"),
    ("2*3", "6"),
    ("exp(log(x1))", "x1"),
    ("x1 - x1", "0"),
    ("x1 / x1", "1"),
    ("-(-x1)", "x1"),
    ("(x1^2)^3", "(x1)^6"),
    ("2 + (3 + x1)", "(5 + x1)"),
])
def test_simplify_rewrites(table, text, expected):
    assert to_infix(simplify(parse_expression(text, table))) == expected


@pytest.mark.parametrize("text, size", [("x1", 1), ("x1*x2", 3), ("(x1+0)*x2", 3)])
def test_complexity_counts_simplified_nodes(table, text, size):
    assert complexity(parse_expression(text, table)) == size


def test_simplify_keeps_domain_sensitive_powers(table):
    tree = parse_expression("(x1^2)^0.5", table)
    assert to_infix(simplify(tree)) == "((x1)^2)^1/2"



def test_simplify_preserves_values():
    table = SymbolTable.build([("x1", DIMENSIONLESS), ("x2", DIMENSIONLESS)],
                              ["+", "-", "*", "/", "log", "exp", "neg", "pow(2)"], literals=[0.0, 1.0, 2.0])
    rng = np.random.default_rng(21)
    X = rng.uniform(0.5, 3.0, size=(256, 2))
    for _ in range(500):
        tree, _ = decode(random_gene(table, 6, rng), table)
        before = evaluate_batch(tree, X)
        after = evaluate_batch(simplify(tree), X)
        both = np.isfinite(before) & np.isfinite(after)
        scale = max(1.0, float(np.max(np.abs(before[both]), initial=0.0)))
        np.testing.assert_allclose(after[both], before[both], rtol=1e-8, atol=1e-8 * scale,
                                   err_msg=to_infix(tree))


# ============================================================================
# R²
# ============================================================================

def test_r2_examples():
    y = np.array([1.0, 2.0, 3.0])
    assert r2_score(y, y) == 1.0
    assert r2_score(y, np.full(3, y.mean())) == 0.0
    assert r2_score(y, np.array([1.0, 2.0, 4.0])) == pytest.approx(0.5, abs=1e-12)
    assert r2_score(y, np.array([1.0, np.nan, 3.0])) == -math.inf


def test_r2_errors():
    with pytest.raises(MetricError):
        r2_score([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
    with pytest.raises(MetricError):
        r2_score([1.0, 2.0], [1.0, 2.0, 3.0])
    with pytest.raises(MetricError):
        r2_score([1.0], [1.0])


# ============================================================================
# 기호적 해
# ============================================================================

def test_identical_candidate_is_a_solution(table, sample_rows):
    truth = parse_expression("x1*x2", table)
    assert symbolic_solution(truth, parse_expression("x1*x2", table), sample_rows)


def test_constant_offset_is_a_solution(table, sample_rows):
    truth = parse_expression("x1*x2", table)
    assert symbolic_solution(truth, parse_expression("x1*x2 + 3", table), sample_rows)


def test_constant_factor_is_a_solution(table, sample_rows):
    truth = parse_expression("x1*x2", table)
    assert symbolic_solution(truth, parse_expression("0.5*x2*x1", table), sample_rows)


@pytest.mark.parametrize("text", ["x1*x2", "x1/(x2 + 1)", "log(x1)*x2", "exp(x1/x2)", "x1 - x2^2"])
def test_solution_is_reflexive_and_scale_invariant(table, sample_rows, text):
    truth = parse_expression(text, table)
    assert symbolic_solution(truth, parse_expression(text, table), sample_rows)
    assert symbolic_solution(truth, parse_expression(f"2.5*({text})", table), sample_rows)
    assert symbolic_solution(truth, parse_expression(f"({text})/7", table), sample_rows)


def test_variable_offset_is_not_a_solution(table, sample_rows):
    truth = parse_expression("x1*x2", table)
    assert not symbolic_solution(truth, parse_expression("x1*x2 + x1", table), sample_rows)


def test_solution_needs_enough_sample_rows(table):
    truth = parse_expression("x1", table)
    with pytest.raises(MetricError):
        symbolic_solution(truth, truth, np.ones((10, 2)))


def test_sample_points_stay_inside_training_box():
    rng = np.random.default_rng(0)
    X = rng.uniform([1, -5], [2, 5], size=(50, 2))
    rows = probe_points(X, 10, np.random.default_rng(1))
    assert rows.shape == (64, 2)
    assert np.all(rows >= X.min(axis=0)) and np.all(rows <= X.max(axis=0))


# ============================================================================
# Wilcoxon 부호순위
# ============================================================================

def _enumerated_p(a, b) -> float:
    """모든 부호 배정을 나열한 양측 정확 p"""
    d = np.asarray(a) - np.asarray(b)
    ranks = rankdata(np.abs(d))
    observed = min(ranks[d > 0].sum(), ranks[d < 0].sum())
    hits = 0
    total = 0
    for signs in product((0, 1), repeat=len(d)):
        w = sum(r for r, s in zip(ranks, signs) if s)
        hits += w <= observed
        total += 1
    return min(1.0, 2 * hits / total)


def test_identical_samples_are_degenerate():
    statistic, p_value, test, degenerate = signed_rank([1.0] * 8, [1.0] * 8)
    assert p_value == 1.0 and degenerate and test == "none"


def test_textbook_pairs_match_enumeration():
    d = np.array([1.5, -2.5, 3.5, 4.5, -0.5, 6.5, 7.5, 8.5, -9.5, 10.5])
    a, b = d + 20.0, np.full(10, 20.0)
    statistic, p_value, test, degenerate = signed_rank(a, b)
    assert test == "exact" and not degenerate
    assert statistic == 13.0
    assert p_value == pytest.approx(_enumerated_p(a, b), abs=1e-12)


@pytest.mark.parametrize("n", [6, 8, 10, 12])
def test_exact_p_matches_enumeration(n):
    rng = np.random.default_rng(n)
    magnitudes = rng.permutation(np.arange(1, n + 1)) + 0.25
    d = magnitudes * rng.choice([-1.0, 1.0], size=n)
    a, b = d, np.zeros(n)
    _, p_value, test, _ = signed_rank(a, b)
    assert test == "exact"
    assert p_value == pytest.approx(_enumerated_p(a, b), abs=1e-12)


def test_ties_fall_back_to_normal_approximation():
    a = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0])
    b = np.array([0.0, 1.0, 2.0, 3.0, 3.0, 6.0, 9.0])
    _, p_value, test, _ = signed_rank(a, b)
    assert test == "approx"
    assert 0.0 < p_value <= 1.0


def test_too_few_pairs_is_an_error():
    with pytest.raises(MetricError):
        signed_rank([1.0, 2.0], [2.0, 3.0])


def test_bonferroni_over_three_methods():
    rng = np.random.default_rng(0)
    results = {name: rng.normal(size=10) for name in ("sbp", "none", "penalty")}
    report = wilcoxon_report(results, alpha_base=0.05)
    assert len(report) == 3
    assert all(r.alpha == pytest.approx(0.05 / 3) for r in report)
    assert [(r.method_a, r.method_b) for r in report] == [("none", "penalty"), ("none", "sbp"), ("penalty", "sbp")]
    assert all((r.grade == "ns") == (r.p_value >= r.alpha) for r in report)
