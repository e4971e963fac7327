"""GEP 유전형(선형 유전자)과 표현형(표현 트리).

유전자는 길이 2h+1 의 기호 id 배열이다. 앞 h 칸(head)에는 어떤 기호든, 뒤 h+1 칸
(tail)에는 단말 기호만 올 수 있다. 트리는 전위(pre-order) 순서로 해독한다.
"""
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence, Tuple, Union

import numpy as np

from gep.dimension import (
    DIMENSIONLESS,
    UNDEFINED,
    DimensionVector,
    DimResult,
    arity_of,
    forward_apply,
    power_of,
)
from gep.errors import GeneCapacityError, GenomeError, InvalidGeneError

ASSOCIATIVE_LINKERS = ("+", "*")
EPHEMERAL_NAME = "c"
COEFFICIENT_RANGE = (-2.0, 2.0)

# ============================================================================
# 기호 테이블
# ============================================================================


def _format_number(value: float) -> str:
    return f"{value:.12g}"


@dataclass(frozen=True)
class Terminal:
    id: int
    name: str
    dim: DimensionVector
    column: Optional[int] = None
    value: Optional[float] = None
    ephemeral: bool = False

    @property
    def arity(self) -> int:
        return 0

    @classmethod
    def literal(cls, value: float) -> "Terminal":
        """테이블 밖의 수치 상수 (단순화/정답식 전용, 유전자로 인코딩 불가)"""
        return cls(id=-1, name=_format_number(float(value)), dim=DIMENSIONLESS, value=float(value))


@dataclass(frozen=True)
class Function:
    id: int
    name: str
    op: str
    arity: int


Symbol = Union[Terminal, Function]


class SymbolTable:
    """단말/비단말 기호 집합. 생성 후에는 읽기 전용으로 공유된다."""

    def __init__(self, terminals: Sequence[Terminal], nonterminals: Sequence[Function]):
        self.terminals: Tuple[Terminal, ...] = tuple(terminals)
        self.nonterminals: Tuple[Function, ...] = tuple(nonterminals)
        self.symbols: Tuple[Symbol, ...] = self.terminals + self.nonterminals
        for expected, symbol in enumerate(self.symbols):
            if symbol.id != expected:
                raise GenomeError(f"기호 id 는 0부터 연속이어야 합니다: {symbol.name}={symbol.id}")
        self.terminal_ids: Tuple[int, ...] = tuple(t.id for t in self.terminals)
        self.head_ids: Tuple[int, ...] = tuple(s.id for s in self.symbols)
        self._by_op = {f.op: f for f in self.nonterminals}
        self._by_name = {t.name: t for t in self.terminals}
        self._auxiliary: dict[str, Function] = {}

    @classmethod
    def build(
        cls,
        features: Sequence[Tuple[str, DimensionVector]],
        operators: Sequence[str],
        *,
        constant: bool = False,
        literals: Sequence[float] = (),
    ) -> "SymbolTable":
        terminals: list[Terminal] = []
        for column, (name, dim) in enumerate(features):
            terminals.append(Terminal(id=len(terminals), name=name, dim=dim, column=column))
        for value in literals:
            terminals.append(Terminal(id=len(terminals), name=_format_number(value), dim=DIMENSIONLESS, value=float(value)))
        if constant:
            terminals.append(Terminal(id=len(terminals), name=EPHEMERAL_NAME, dim=DIMENSIONLESS, ephemeral=True))
        nonterminals: list[Function] = []
        for op in dict.fromkeys(operators):
            nonterminals.append(Function(id=len(terminals) + len(nonterminals), name=op, op=op, arity=arity_of(op)))
        return cls(terminals, nonterminals)

    def __getitem__(self, symbol_id: int) -> Symbol:
        return self.symbols[symbol_id]

    def __len__(self) -> int:
        return len(self.symbols)

    def is_terminal(self, symbol_id: int) -> bool:
        return symbol_id < len(self.terminals)

    def feature(self, name: str) -> Terminal:
        try:
            return self._by_name[name]
        except KeyError:
            raise GenomeError(f"알 수 없는 단말 기호: {name}") from None

    @property
    def feature_count(self) -> int:
        return sum(1 for t in self.terminals if t.column is not None)

    def function(self, op: str) -> Function:
        """연산자 기호. 테이블에 없으면 유전자 밖 전용(id=-1) 기호를 만든다."""
        if op in self._by_op:
            return self._by_op[op]
        if op not in self._auxiliary:
            self._auxiliary[op] = Function(id=-1, name=op, op=op, arity=arity_of(op))
        return self._auxiliary[op]


# ============================================================================
# 표현 트리
# ============================================================================

@dataclass(eq=False)
class ExprTree:
    symbol: Symbol
    children: list["ExprTree"] = field(default_factory=list)
    coef_index: Optional[int] = None
    dim: Optional[DimResult] = None

    @property
    def arity(self) -> int:
        return self.symbol.arity

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def preorder(self) -> Iterator["ExprTree"]:
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def size(self) -> int:
        return sum(1 for _ in self.preorder())

    def symbol_ids(self) -> Tuple[int, ...]:
        return tuple(node.symbol.id for node in self.preorder())

    def signature(self) -> Tuple[str, ...]:
        """구조 비교용 전위 기호 이름"""
        return tuple(node.symbol.name for node in self.preorder())

    def copy(self) -> "ExprTree":
        return ExprTree(
            symbol=self.symbol,
            children=[c.copy() for c in self.children],
            coef_index=self.coef_index,
            dim=self.dim,
        )

    def replace_with(self, other: "ExprTree") -> None:
        """노드 객체는 그대로 두고 내용만 바꾼다 (부모 링크 유지)"""
        self.symbol = other.symbol
        self.children = other.children
        self.coef_index = other.coef_index
        self.dim = other.dim

    def infer_dimensions(self) -> DimResult:
        """순방향 차원 계산. 모든 노드의 ``dim`` 캐시를 채운다."""
        if self.is_leaf:
            self.dim = self.symbol.dim
            return self.dim
        dims = [child.infer_dimensions() for child in self.children]
        self.dim = forward_apply(self.symbol.op, *dims)
        return self.dim

    def has_undefined(self) -> bool:
        return any(node.dim is UNDEFINED for node in self.preorder())

    def index_coefficients(self) -> int:
        """임시 상수 노드에 전위 순서로 계수 슬롯 번호를 매긴다"""
        count = 0
        for node in self.preorder():
            if isinstance(node.symbol, Terminal) and node.symbol.ephemeral:
                node.coef_index = count
                count += 1
            else:
                node.coef_index = None
        return count


def to_infix(tree: ExprTree, coefficients: Optional[Sequence[float]] = None) -> str:
    symbol = tree.symbol
    if isinstance(symbol, Terminal):
        if symbol.ephemeral:
            if coefficients is not None and tree.coef_index is not None:
                return _format_number(float(coefficients[tree.coef_index]))
            return f"c{tree.coef_index if tree.coef_index is not None else ''}"
        return symbol.name
    args = [to_infix(child, coefficients) for child in tree.children]
    if symbol.arity == 2:
        return f"({args[0]} {symbol.op} {args[1]})"
    n = power_of(symbol.op)
    if n is not None:
        return f"({args[0]})^{n}"
    if symbol.op == "neg":
        return f"-({args[0]})"
    return f"{symbol.op}({args[0]})"


def materialize(tree: ExprTree, coefficients: Sequence[float]) -> ExprTree:
    """임시 상수를 현재 계수 값의 리터럴로 고정한 사본"""
    if isinstance(tree.symbol, Terminal) and tree.symbol.ephemeral:
        value = coefficients[tree.coef_index] if tree.coef_index is not None else 1.0
        return ExprTree(Terminal.literal(float(value)), dim=DIMENSIONLESS)
    return ExprTree(tree.symbol, [materialize(c, coefficients) for c in tree.children], dim=tree.dim)


# ============================================================================
# 유전자 / 염색체
# ============================================================================

@dataclass(frozen=True)
class Gene:
    symbols: Tuple[int, ...]
    head_len: int

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(int(s) for s in self.symbols))
        if self.head_len < 1:
            raise InvalidGeneError(f"head 길이는 1 이상이어야 합니다: {self.head_len}")
        if len(self.symbols) != 2 * self.head_len + 1:
            raise InvalidGeneError(f"유전자 길이 {len(self.symbols)} != 2*{self.head_len}+1")

    @property
    def head(self) -> Tuple[int, ...]:
        return self.symbols[: self.head_len]

    @property
    def tail(self) -> Tuple[int, ...]:
        return self.symbols[self.head_len:]

    def validate(self, table: SymbolTable) -> "Gene":
        for pos, symbol_id in enumerate(self.symbols):
            if not 0 <= symbol_id < len(table):
                raise InvalidGeneError(f"위치 {pos}: 알 수 없는 기호 id {symbol_id}")
            if pos >= self.head_len and not table.is_terminal(symbol_id):
                raise InvalidGeneError(f"tail 위치 {pos} 에 비단말 기호 {table[symbol_id].name}")
        return self


@dataclass(frozen=True)
class Chromosome:
    genes: Tuple[Gene, ...]
    linker: str = "+"

    def __post_init__(self):
        object.__setattr__(self, "genes", tuple(self.genes))
        if not self.genes:
            raise GenomeError("염색체에는 유전자가 하나 이상 필요합니다")
        if self.linker not in ASSOCIATIVE_LINKERS:
            raise GenomeError(f"연결 연산자는 결합법칙이 성립해야 합니다: {self.linker}")
        if len({g.head_len for g in self.genes}) != 1:
            raise GenomeError("모든 유전자의 head 길이가 같아야 합니다")

    @property
    def head_len(self) -> int:
        return self.genes[0].head_len

    @property
    def gene_length(self) -> int:
        return 2 * self.head_len + 1

    def flat(self) -> Tuple[int, ...]:
        return tuple(s for g in self.genes for s in g.symbols)

    def with_flat(self, symbols: Sequence[int]) -> "Chromosome":
        n = self.gene_length
        if len(symbols) != n * len(self.genes):
            raise GenomeError("염색체 길이가 맞지 않습니다")
        genes = tuple(Gene(tuple(symbols[i * n:(i + 1) * n]), self.head_len) for i in range(len(self.genes)))
        return Chromosome(genes, self.linker)

    def validate(self, table: SymbolTable) -> "Chromosome":
        for gene in self.genes:
            gene.validate(table)
        return self


# ============================================================================
# 생성 / 해독 / 인코딩 / 연결
# ============================================================================

def random_gene(table: SymbolTable, head_len: int, rng: np.random.Generator) -> Gene:
    if head_len < 1:
        raise InvalidGeneError(f"head 길이는 1 이상이어야 합니다: {head_len}")
    if not table.terminals:
        raise GenomeError("단말 기호가 없는 테이블로는 유전자를 만들 수 없습니다")
    head = rng.choice(np.asarray(table.head_ids), size=head_len)
    tail = rng.choice(np.asarray(table.terminal_ids), size=head_len + 1)
    return Gene(tuple(head.tolist()) + tuple(tail.tolist()), head_len)


def from_preorder(symbol_ids: Sequence[int], table: SymbolTable) -> Tuple[ExprTree, int]:
    """각 기호가 다음 ``arity`` 개의 부분 트리를 가져가는 전위 구성"""
    cursor = 0

    def build() -> ExprTree:
        nonlocal cursor
        if cursor >= len(symbol_ids):
            raise InvalidGeneError("전위 기호열이 트리를 완성하기 전에 끝났습니다")
        symbol = table[symbol_ids[cursor]]
        cursor += 1
        children = [build() for _ in range(symbol.arity)]
        return ExprTree(symbol, children)

    tree = build()
    return tree, cursor


def decode(gene: Gene, table: SymbolTable) -> Tuple[ExprTree, int]:
    """전위 순서 해독. 반환값은 (트리, K-expression 길이)."""
    return from_preorder(gene.symbols, table)


def fits_gene(tree: ExprTree, head_len: int) -> bool:
    nodes = list(tree.preorder())
    if len(nodes) > 2 * head_len + 1:
        return False
    return all(node.is_leaf or pos < head_len for pos, node in enumerate(nodes))


def encode(tree: ExprTree, head_len: int, table: SymbolTable, filler_rng: np.random.Generator) -> Gene:
    """트리의 전위 기호를 K-expression 으로 쓰고 나머지를 무작위 단말로 채운다."""
    ids = tree.symbol_ids()
    if any(symbol_id < 0 for symbol_id in ids):
        raise GenomeError("테이블 밖 기호(리터럴/보조 연산자)는 인코딩할 수 없습니다")
    if not fits_gene(tree, head_len):
        raise GeneCapacityError(f"크기 {len(ids)} 트리는 head={head_len} 유전자에 들어가지 않습니다")
    remaining = 2 * head_len + 1 - len(ids)
    filler = filler_rng.choice(np.asarray(table.terminal_ids), size=remaining).tolist() if remaining else []
    return Gene(ids + tuple(filler), head_len)


def resize_coefficients(coefficients: Sequence[float], count: int, rng: np.random.Generator) -> np.ndarray:
    """기존 슬롯 값은 인덱스 그대로 두고, 새 슬롯은 U[-2, 2] 에서 뽑는다"""
    old = np.asarray(coefficients, dtype=float)
    if old.size >= count:
        return old[:count].copy()
    fresh = rng.uniform(*COEFFICIENT_RANGE, size=count - old.size)
    return np.concatenate([old, fresh])


def link_trees(trees: Sequence[ExprTree], linker: Function) -> ExprTree:
    root = trees[0]
    for tree in trees[1:]:
        root = ExprTree(linker, [root, tree])
    return root


def link(chromosome: Chromosome, table: SymbolTable) -> ExprTree:
    trees = [decode(gene, table)[0] for gene in chromosome.genes]
    if len(trees) == 1:
        return trees[0]
    return link_trees(trees, table.function(chromosome.linker))
