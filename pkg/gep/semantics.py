"""의미 라이브러리와 차원 교정(semantic backpropagation).

라이브러리는 (차원 벡터, 크기) 를 키로 교체용 부분 트리의 전위 기호열을 보관한다.
교정은 목표 차원을 루트에서 자식으로 역전파하면서, 어긋난 자식을 왼쪽→오른쪽
순서로 라이브러리 항목으로 교체하거나 더 깊이 내려가 고친다.
"""
import hashlib
import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from itertools import product
from typing import TYPE_CHECKING, Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from gep.dimension import (
    TRANSCENDENTAL_OPS,
    UNDEFINED,
    DimensionVector,
    backward_split,
    distance,
    forward_apply,
)
from gep.errors import GeneCapacityError, LibraryCacheError, NonInvertibleError
from gep.genome import (
    Chromosome,
    ExprTree,
    Function,
    SymbolTable,
    Terminal,
    decode,
    encode,
    fits_gene,
    from_preorder,
    link_trees,
    resize_coefficients,
)
from utils.seeding import derive_rng

if TYPE_CHECKING:
    from gep.evolution import Individual

logger = logging.getLogger(__name__)

DEFAULT_EPS = 1e-9
SHORTFALL_FRACTION = 0.5
LIBRARY_SCHEMA = "sbp-gep-library/1"
DEFAULT_BANNED: Tuple[Tuple[str, str], ...] = tuple(
    (outer, inner) for outer in sorted(TRANSCENDENTAL_OPS) for inner in sorted(TRANSCENDENTAL_OPS)
)

Key = Tuple[DimensionVector, int]

# ============================================================================
# 라이브러리
# ============================================================================


@dataclass
class SemanticLibrary:
    table: SymbolTable
    head_len: int
    cap: int
    entries: Dict[Key, List[Tuple[int, ...]]] = field(default_factory=dict)
    seed: Optional[int] = None

    def __post_init__(self):
        self._by_dim: Dict[DimensionVector, Dict[int, List[Tuple[int, ...]]]] = defaultdict(dict)
        for (dim, size), items in self.entries.items():
            self._by_dim[dim][size] = items

    def add(self, dim: DimensionVector, symbols: Tuple[int, ...]) -> bool:
        key = (dim, len(symbols))
        items = self.entries.setdefault(key, [])
        if len(items) >= self.cap:
            return False
        items.append(symbols)
        self._by_dim[dim][len(symbols)] = items
        return True

    def classes_for(self, dim: DimensionVector) -> Dict[int, List[Tuple[int, ...]]]:
        return self._by_dim.get(dim, {})

    def size_counts(self) -> Dict[int, int]:
        counts: Dict[int, int] = defaultdict(int)
        for (_, size), items in self.entries.items():
            counts[size] += len(items)
        return dict(counts)

    def __len__(self) -> int:
        return sum(len(items) for items in self.entries.values())


def _is_banned(function: Function, child_root: Function | None, banned: Iterable[Tuple[str, str]]) -> bool:
    if function.arity != 1 or child_root is None:
        return False
    return (function.op, child_root.op) in set(banned)


def build_library(
    table: SymbolTable,
    head_len: int,
    cap: int,
    rng: np.random.Generator,
    *,
    banned: Sequence[Tuple[str, str]] = DEFAULT_BANNED,
    sample_factor: int = 20,
) -> SemanticLibrary:
    """크기 1(단말)부터 head 길이까지 크기별로 후보 부분 트리를 키운다.

    크기 클래스의 전체 조합 수가 cap 이하이면 모두 열거하고, 넘으면 조합 공간에서
    균등 추출한다(시도 횟수 cap * sample_factor). 차원이 정의되지 않거나 금지된
    중첩을 가진 후보는 버린다.
    """
    if cap < 1:
        raise ValueError(f"cap 은 1 이상이어야 합니다: {cap}")
    banned = tuple(banned)
    library = SemanticLibrary(table=table, head_len=head_len, cap=cap)
    by_size: Dict[int, List[Tuple[Tuple[int, ...], DimensionVector]]] = {}

    first: List[Tuple[Tuple[int, ...], DimensionVector]] = []
    # 크기 1 은 키별 cap 만 적용 (모든 차원의 단말이 조합 재료로 남는다)
    for terminal in table.terminals:
        if library.add(terminal.dim, (terminal.id,)):
            first.append(((terminal.id,), terminal.dim))
    by_size[1] = first

    for size in range(2, head_len + 1):
        blocks = []
        for function in table.nonterminals:
            if function.arity == 1:
                blocks.append((function, (size - 1,)))
            elif function.arity == 2:
                blocks.extend((function, (left, size - 1 - left)) for left in range(1, size - 1))
        blocks = [(f, sizes, int(np.prod([len(by_size[s]) for s in sizes]))) for f, sizes in blocks]
        blocks = [b for b in blocks if b[2] > 0]
        total = sum(b[2] for b in blocks)
        accepted: List[Tuple[Tuple[int, ...], DimensionVector]] = []
        seen: set[Tuple[int, ...]] = set()

        def consider(function: Function, parts: Sequence[Tuple[Tuple[int, ...], DimensionVector]]) -> None:
            symbols = (function.id,) + tuple(s for part, _ in parts for s in part)
            if symbols in seen:
                return
            seen.add(symbols)
            child_root = table[parts[0][0][0]]
            if _is_banned(function, child_root if isinstance(child_root, Function) else None, banned):
                return
            dim = forward_apply(function.op, *(d for _, d in parts))
            if dim is UNDEFINED:
                return
            if library.add(dim, symbols):
                accepted.append((symbols, dim))

        if total <= cap:
            for function, sizes, _ in blocks:
                for parts in product(*(by_size[s] for s in sizes)):
                    if len(accepted) >= cap:
                        break
                    consider(function, parts)
        elif blocks:
            weights = np.array([b[2] for b in blocks], dtype=float)
            weights /= weights.sum()
            for _ in range(cap * sample_factor):
                if len(accepted) >= cap:
                    break
                function, sizes, _ = blocks[int(rng.choice(len(blocks), p=weights))]
                parts = [by_size[s][int(rng.integers(len(by_size[s])))] for s in sizes]
                consider(function, parts)
        by_size[size] = accepted
        logger.debug("라이브러리 크기 %d: 후보 %d 중 %d 채택", size, total, len(accepted))

    return library


def lookup(library: SemanticLibrary, dim: DimensionVector, max_size: int, rng: np.random.Generator) -> Optional[ExprTree]:
    """크기 ≤ max_size 인 비어있지 않은 클래스를 균등 선택한 뒤 항목을 균등 선택한다."""
    if max_size < 1:
        raise ValueError(f"max_size 는 1 이상이어야 합니다: {max_size}")
    classes = sorted(size for size, items in library.classes_for(dim).items() if items and size <= max_size)
    if not classes:
        return None
    size = classes[int(rng.integers(len(classes)))]
    items = library.classes_for(dim)[size]
    symbols = items[int(rng.integers(len(items)))]
    tree, _ = from_preorder(symbols, library.table)
    tree.infer_dimensions()
    return tree


# ============================================================================
# 영속화
# ============================================================================

def _checksum(payload: Dict[str, Any]) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _symbol_signature(table: SymbolTable) -> List[List[Any]]:
    return [[s.name] + (s.dim.to_strings() if isinstance(s, Terminal) else []) for s in table.symbols]


def library_to_document(library: SemanticLibrary) -> Dict[str, Any]:
    entries = [
        {"dim": dim.to_strings(), "size": size, "items": [list(s) for s in items]}
        for (dim, size), items in sorted(library.entries.items(), key=lambda kv: (kv[0][1], kv[0][0].to_strings()))
    ]
    payload = {
        "head_len": library.head_len,
        "cap": library.cap,
        "seed": library.seed,
        "symbols": _symbol_signature(library.table),
        "entries": entries,
    }
    return {"schema": LIBRARY_SCHEMA, "checksum": _checksum(payload), "payload": payload}


def library_from_document(document: Dict[str, Any], table: SymbolTable) -> SemanticLibrary:
    if document.get("schema") != LIBRARY_SCHEMA:
        raise LibraryCacheError(f"지원하지 않는 라이브러리 스키마: {document.get('schema')}")
    payload = document.get("payload")
    if not isinstance(payload, dict) or _checksum(payload) != document.get("checksum"):
        raise LibraryCacheError("라이브러리 캐시 체크섬이 일치하지 않습니다")
    if payload.get("symbols") != _symbol_signature(table):
        raise LibraryCacheError("라이브러리 캐시의 기호 테이블이 현재 문제와 다릅니다")
    entries = {
        (DimensionVector.from_strings(e["dim"]), int(e["size"])): [tuple(s) for s in e["items"]]
        for e in payload["entries"]
    }
    return SemanticLibrary(table=table, head_len=payload["head_len"], cap=payload["cap"], entries=entries, seed=payload["seed"])


# ============================================================================
# 교정 (propagate_change)
# ============================================================================

@dataclass
class RepairScope:
    """교체가 허용된 부분 트리와 그 용량 (유전자 하나에 해당)"""
    root: ExprTree
    capacity: int
    head_len: Optional[int] = None

    def budget_for(self, node: ExprTree) -> int:
        return node.size() + self.capacity - self.root.size()

    def admits(self) -> bool:
        if self.root.size() > self.capacity:
            return False
        return self.head_len is None or fits_gene(self.root, self.head_len)


@dataclass
class RepairContext:
    library: SemanticLibrary
    rng: np.random.Generator
    eps: float = DEFAULT_EPS
    scopes: Dict[int, RepairScope] = field(default_factory=dict)
    max_visits: int = 256
    visits: int = 0
    journal: List[Tuple[ExprTree, Any, list, Optional[int]]] = field(default_factory=list)

    def splice(self, node: ExprTree, replacement: ExprTree) -> None:
        self.journal.append((node, node.symbol, node.children, node.coef_index))
        node.replace_with(replacement)

    def rollback(self, mark: int) -> None:
        while len(self.journal) > mark:
            node, symbol, children, coef_index = self.journal.pop()
            node.symbol, node.children, node.coef_index = symbol, children, coef_index
            node.dim = None


def _matches(dim, target: DimensionVector, eps: float) -> bool:
    return dim is not UNDEFINED and dim is not None and distance(target, dim) < eps


def _child_targets(node: ExprTree, target: DimensionVector) -> List[Tuple[DimensionVector, ...]]:
    op = node.symbol.op
    if node.arity == 1:
        try:
            return [(backward_split(op, target)[0],)]
        except NonInvertibleError:
            return []
    if op in ("+", "-"):
        return [backward_split(op, target)]
    left, right = (c.dim if c.dim is not UNDEFINED else None for c in node.children)
    candidates = []
    if left is not None:
        candidates.append(backward_split(op, target, left_known=left))
    if right is not None:
        candidates.append(backward_split(op, target, right_known=right))
    candidates.append(backward_split(op, target))
    return list(dict.fromkeys(candidates))


def _try_replace(node: ExprTree, target: DimensionVector, ctx: RepairContext, scope: RepairScope) -> bool:
    max_size = min(scope.budget_for(node), ctx.library.head_len)
    if max_size < 1:
        return False
    replacement = lookup(ctx.library, target, max_size, ctx.rng)
    if replacement is None:
        return False
    mark = len(ctx.journal)
    ctx.splice(node, replacement)
    if scope.admits():
        return True
    ctx.rollback(mark)
    return False


def _propagate(node: ExprTree, target: DimensionVector, ctx: RepairContext, scope: Optional[RepairScope]) -> bool:
    ctx.visits += 1
    if _matches(node.infer_dimensions(), target, ctx.eps):
        return True
    if node.is_leaf or ctx.visits > ctx.max_visits:
        return False

    for targets in _child_targets(node, target):
        mark = len(ctx.journal)
        ok = True
        for child, child_target in zip(node.children, targets):
            child_scope = ctx.scopes.get(id(child), scope)
            if _matches(child.infer_dimensions(), child_target, ctx.eps):
                continue
            if child_scope is not None and _try_replace(child, child_target, ctx, child_scope):
                continue
            if not _propagate(child, child_target, ctx, child_scope):
                ok = False
                break
        if ok and _matches(node.infer_dimensions(), target, ctx.eps):
            return True
        ctx.rollback(mark)
        node.infer_dimensions()
    return False


def propagate_change(
    node: ExprTree,
    target: DimensionVector,
    library: SemanticLibrary,
    rng: np.random.Generator,
    *,
    eps: float = DEFAULT_EPS,
    budget: Optional[int] = None,
    context: Optional[RepairContext] = None,
) -> bool:
    """``node`` 의 차원을 ``target`` 에 맞추도록 자식들을 교정한다.

    ``budget`` 은 교정 후 이 부분 트리가 가질 수 있는 최대 기호 수다(기본: 라이브러리
    head 길이와 현재 크기 중 큰 값). 실패하면 트리는 호출 전 상태로 되돌아간다.
    """
    ctx = context or RepairContext(library=library, rng=rng, eps=eps)
    scope = ctx.scopes.get(id(node))
    if scope is None and context is None:
        capacity = budget if budget is not None else max(library.head_len, node.size())
        scope = RepairScope(root=node, capacity=capacity)
    ctx.visits = 0
    return _propagate(node, target, ctx, scope)


# ============================================================================
# 개체군 교정
# ============================================================================

@dataclass
class CorrectionStats:
    population: int = 0
    homogeneous_before: int = 0
    homogeneous_after: int = 0
    repaired: int = 0
    reverted: int = 0
    unrepaired: int = 0
    target_sizes: Tuple[int, ...] = ()

    @property
    def fraction_before(self) -> float:
        return self.homogeneous_before / self.population if self.population else 1.0

    @property
    def fraction_after(self) -> float:
        return self.homogeneous_after / self.population if self.population else 1.0


def _repair_individual(
    individual: "Individual",
    library: SemanticLibrary,
    target: DimensionVector,
    cycles: int,
    eps: float,
    table: SymbolTable,
    rng: np.random.Generator,
) -> Tuple["Individual", bool, bool, bool]:
    """(개체, 교정 전 동차 여부, 교정 후 동차 여부, 되돌림 여부)"""
    chromosome = individual.chromosome
    head_len = chromosome.head_len
    gene_trees = [decode(gene, table)[0] for gene in chromosome.genes]
    root = gene_trees[0] if len(gene_trees) == 1 else link_trees(gene_trees, table.function(chromosome.linker))
    if _matches(root.infer_dimensions(), target, eps):
        return individual, True, True, False

    scopes = {id(tree): RepairScope(tree, 2 * head_len + 1, head_len) for tree in gene_trees}
    ctx = RepairContext(library=library, rng=rng, eps=eps, scopes=scopes)
    repaired = False
    for _ in range(cycles):
        ctx.visits = 0
        if _propagate(root, target, ctx, scopes.get(id(root))):
            repaired = True
            break
        root_scope = scopes.get(id(root))
        if root_scope is not None and _try_replace(root, target, ctx, root_scope):
            repaired = True
            break
    if not repaired:
        return individual, False, False, False

    try:
        genes = tuple(encode(tree, head_len, table, rng) for tree in gene_trees)
    except GeneCapacityError:
        return individual, False, False, True
    if any(decode(gene, table)[0].signature() != tree.signature() for gene, tree in zip(genes, gene_trees)):
        return individual, False, False, True
    new_chromosome = Chromosome(genes, chromosome.linker)
    count = root.index_coefficients()
    coefficients = resize_coefficients(individual.coefficients, count, rng)
    return individual.with_genome(new_chromosome, coefficients), False, True, False


def correct_population(
    population: Sequence["Individual"],
    library: SemanticLibrary,
    target: DimensionVector,
    cycles: int,
    eps: float = DEFAULT_EPS,
    *,
    table: SymbolTable,
    seed: int = 0,
    generation: int = 0,
    skip: Iterable[int] = (),
) -> Tuple[List["Individual"], CorrectionStats]:
    """개체마다 최대 ``cycles`` 회 교정을 시도하고, 성공하면 유전자로 다시 인코딩한다.

    인코딩이 실패하거나 해독 결과가 교정된 트리와 다르면 개체는 원래대로 남는다.
    """
    if cycles < 1:
        raise ValueError(f"cycles 는 1 이상이어야 합니다: {cycles}")
    skip = set(skip)
    stats = CorrectionStats(population=len(population), target_sizes=target_coverage(library, target))
    corrected: List["Individual"] = []
    for index, individual in enumerate(population):
        if index in skip:
            corrected.append(individual)
            homogeneous = _matches(individual.root_dim(table), target, eps)
            stats.homogeneous_before += homogeneous
            stats.homogeneous_after += homogeneous
            continue
        rng = derive_rng(seed, generation, index, "repair")
        result, before, after, reverted = _repair_individual(individual, library, target, cycles, eps, table, rng)
        stats.homogeneous_before += before
        stats.reverted += reverted
        stats.homogeneous_after += after
        if after and not before:
            stats.repaired += 1
        elif not after and not reverted:
            stats.unrepaired += 1
        corrected.append(result)
    if stats.fraction_after < SHORTFALL_FRACTION:
        _log_shortfall(stats, target, generation)
    return corrected, stats


def target_coverage(library: SemanticLibrary, target: DimensionVector) -> Tuple[int, ...]:
    """라이브러리에 목표 차원 항목이 있는 크기 클래스들 (오름차순)"""
    return tuple(sorted(size for size, items in library.classes_for(target).items() if items))


def _log_shortfall(stats: CorrectionStats, target: DimensionVector, generation: int) -> None:
    # 목표 차원이 라이브러리에 없으면 루트 교체가 불가능하고 자식 분할로만 닿을 수 있다
    coverage = ",".join(map(str, stats.target_sizes)) or "없음"
    logger.warning(
        "⚠️ 세대 %d 교정 후 동차 비율 %.3f (교정 전 %.3f): 교정 %d, 실패 %d, 되돌림 %d, 목표 차원 %s 의 라이브러리 크기 클래스: %s",
        generation, stats.fraction_after, stats.fraction_before, stats.repaired, stats.unrepaired,
        stats.reverted, target.to_strings(), coverage,
    )
