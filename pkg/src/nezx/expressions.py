"""Expression and grammar data model.

Every parsing-expression constructor is one immutable dataclass. Expression
trees are finite and acyclic; recursion happens only through ``NonTerminal``
names resolved against a :class:`Grammar`.

Terminals range over octets, not code points: grammar files are UTF-8 and
multi-byte literals are represented as sequences of single-byte terminals.
"""

from __future__ import annotations

from dataclasses import dataclass, field


class Expression:
    """Base class for all parsing-expression variants."""

    __slots__ = ()


@dataclass(frozen=True)
class Empty(Expression):
    pass


@dataclass(frozen=True)
class Terminal(Expression):
    value: int  # single byte, 0..255

    def __post_init__(self) -> None:
        if not 0 <= self.value <= 255:
            raise ValueError(f"terminal byte out of range: {self.value}")


@dataclass(frozen=True)
class CharClass(Expression):
    """Set of inclusive byte ranges, e.g. [A-Za-z_].

    Ranges are normalized on construction: sorted, merged, each low <= high.
    The range set must be non-empty.
    """

    ranges: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        if not self.ranges:
            raise ValueError("character class must contain at least one range")
        norm: list[list[int]] = []
        for lo, hi in sorted(self.ranges):
            if not (0 <= lo <= hi <= 255):
                raise ValueError(f"bad byte range: {lo}-{hi}")
            if norm and lo <= norm[-1][1] + 1:
                norm[-1][1] = max(norm[-1][1], hi)
            else:
                norm.append([lo, hi])
        object.__setattr__(self, "ranges", tuple((lo, hi) for lo, hi in norm))

    def matches(self, byte: int) -> bool:
        return any(lo <= byte <= hi for lo, hi in self.ranges)


@dataclass(frozen=True)
class AnyChar(Expression):
    pass


@dataclass(frozen=True)
class NonTerminal(Expression):
    name: str


@dataclass(frozen=True)
class Sequence(Expression):
    left: Expression
    right: Expression


@dataclass(frozen=True)
class Choice(Expression):
    first: Expression
    second: Expression


@dataclass(frozen=True)
class Option(Expression):
    body: Expression


@dataclass(frozen=True)
class Repetition(Expression):
    """Zero-or-more repetition."""

    body: Expression


@dataclass(frozen=True)
class OneOrMore(Expression):
    """Sugar for Sequence(body, Repetition(body)); kept distinct until desugar."""

    body: Expression


@dataclass(frozen=True)
class And(Expression):
    body: Expression


@dataclass(frozen=True)
class Not(Expression):
    body: Expression


@dataclass(frozen=True)
class TreeNew(Expression):
    """AST constructor ``{ e }``: builds a node spanning e's consumed range."""

    body: Expression


@dataclass(frozen=True)
class TreeLink(Expression):
    """AST connector ``$( e )``: attaches e's node to the enclosing node."""

    body: Expression


@dataclass(frozen=True)
class TreeTag(Expression):
    """AST tagging ``#x``: names the enclosing node."""

    tag: str


@dataclass(frozen=True)
class SymbolDef(Expression):
    """``<def T e>``: match e, push the consumed text onto table T."""

    table: str
    body: Expression


@dataclass(frozen=True)
class SymbolExists(Expression):
    """``<exists T>``: succeed without consuming iff table T is non-empty."""

    table: str


@dataclass(frozen=True)
class SymbolMatch(Expression):
    """``<match T>``: literally match the latest symbol of table T."""

    table: str


@dataclass(frozen=True)
class SymbolIs(Expression):
    """``<is T>``: match the table's definition expression, then require
    equality with the latest symbol."""

    table: str


@dataclass(frozen=True)
class SymbolIsa(Expression):
    """``<isa T>``: like ``<is T>`` but membership at any stack depth."""

    table: str


@dataclass(frozen=True)
class BlockScope(Expression):
    """``<block T e>``: nested scope — symbols defined in e are popped on exit,
    outer symbols stay visible inside."""

    table: str
    body: Expression


@dataclass(frozen=True)
class LocalScope(Expression):
    """``<local T e>``: isolated scope — e sees an empty table T; the original
    contents are restored on exit."""

    table: str
    body: Expression


@dataclass(frozen=True)
class IfCond(Expression):
    """``<if C>`` / ``<if !C>``: test a parsing flag (absent flags read true)."""

    flag: str
    negated: bool = False


@dataclass(frozen=True)
class OnCond(Expression):
    """``<on C e>`` / ``<on !C e>``: evaluate e with the flag forced to a
    value; the previous value is restored on exit."""

    flag: str
    body: Expression
    negated: bool = False


# Composite-variant helpers used across analysis, printing, and transforms.

_UNARY_FIELDS = {
    Sequence: ("left", "right"),
    Choice: ("first", "second"),
    Option: ("body",),
    Repetition: ("body",),
    OneOrMore: ("body",),
    And: ("body",),
    Not: ("body",),
    TreeNew: ("body",),
    TreeLink: ("body",),
    SymbolDef: ("body",),
    BlockScope: ("body",),
    LocalScope: ("body",),
    OnCond: ("body",),
}


def children(expr: Expression) -> tuple[Expression, ...]:
    """Direct subexpressions of a node (empty for leaves)."""
    fields = _UNARY_FIELDS.get(type(expr))
    if fields is None:
        return ()
    return tuple(getattr(expr, f) for f in fields)


def rebuild(expr: Expression, new_children: tuple[Expression, ...]) -> Expression:
    """Copy of a node with its subexpressions replaced."""
    fields = _UNARY_FIELDS.get(type(expr))
    if fields is None:
        return expr
    kwargs = {f: c for f, c in zip(fields, new_children)}
    if isinstance(expr, (SymbolDef, BlockScope, LocalScope)):
        kwargs["table"] = expr.table
    elif isinstance(expr, OnCond):
        kwargs["flag"] = expr.flag
        kwargs["negated"] = expr.negated
    return type(expr)(**kwargs)


def walk(expr: Expression):
    """Pre-order traversal of an expression tree."""
    stack = [expr]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(children(node)))


def sequence_of(elements: list[Expression]) -> Expression:
    """Right-fold a flat element list into nested binary sequences.

    Nested sequences among the elements are flattened first, so structurally
    distinct spellings of the same sequence normalize to one shape.
    """
    flat: list[Expression] = []
    for el in elements:
        if isinstance(el, Sequence):
            flat.extend(_flatten_seq(el))
        else:
            flat.append(el)
    if not flat:
        return Empty()
    result = flat[-1]
    for el in reversed(flat[:-1]):
        result = Sequence(el, result)
    return result


def _flatten_seq(expr: Sequence) -> list[Expression]:
    out: list[Expression] = []
    todo: list[Expression] = [expr]
    while todo:
        node = todo.pop()
        if isinstance(node, Sequence):
            todo.append(node.right)
            todo.append(node.left)
        else:
            out.append(node)
    out.reverse()
    return out


def sequence_elements(expr: Expression) -> list[Expression]:
    """Flat view of a (possibly nested) sequence."""
    if isinstance(expr, Sequence):
        return _flatten_seq(expr)
    return [expr]


def choice_of(alternatives: list[Expression]) -> Expression:
    """Right-fold alternatives into nested binary choices (flattening nested
    choices first)."""
    flat: list[Expression] = []
    for alt in alternatives:
        flat.extend(choice_alternatives(alt))
    if not flat:
        return Empty()
    result = flat[-1]
    for alt in reversed(flat[:-1]):
        result = Choice(alt, result)
    return result


def choice_alternatives(expr: Expression) -> list[Expression]:
    """Flat view of a (possibly nested) prioritized choice."""
    if not isinstance(expr, Choice):
        return [expr]
    out: list[Expression] = []
    todo: list[Expression] = [expr]
    while todo:
        node = todo.pop()
        if isinstance(node, Choice):
            todo.append(node.second)
            todo.append(node.first)
        else:
            out.append(node)
    out.reverse()
    return out


def literal(text: bytes | str) -> Expression:
    """Byte-sequence literal as a terminal chain ('' yields Empty)."""
    data = text.encode("utf-8") if isinstance(text, str) else text
    if not data:
        return Empty()
    return sequence_of([Terminal(b) for b in data])


def char_class(*items: str | tuple[str, str]) -> CharClass:
    """Convenience constructor: char_class('a', ('0', '9')) == [a0-9]."""
    ranges = []
    for item in items:
        if isinstance(item, tuple):
            ranges.append((ord(item[0]), ord(item[1])))
        else:
            ranges.append((ord(item), ord(item)))
    return CharClass(tuple(ranges))


@dataclass(frozen=True)
class SourceSpan:
    """Location of a construct inside a grammar source file."""

    line: int  # 1-based
    column: int  # 1-based, in bytes
    offset: int  # byte offset
    length: int


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    code: str
    production: str | None
    span: SourceSpan | None
    message: str

    def format(self, filename: str = "<grammar>") -> str:
        line = self.span.line if self.span else 0
        col = self.span.column if self.span else 0
        return f"{self.severity} {self.code} {filename}:{line}:{col} {self.message}"


def _symbol_table_names(expr: Expression) -> set[str]:
    names = set()
    for node in walk(expr):
        if isinstance(
            node,
            (SymbolDef, SymbolExists, SymbolMatch, SymbolIs, SymbolIsa, BlockScope, LocalScope),
        ):
            names.add(node.table)
    return names


@dataclass(frozen=True, eq=False)
class Grammar:
    """Named productions plus start symbol, table registry, and flag universe.

    ``tables`` maps each symbol-table name to the unique expression used by
    all of its ``<def>`` sites (first definition wins when collect_tables
    would report a conflict; validation surfaces the conflict itself).
    """

    productions: dict[str, Expression]
    start: str
    tables: dict[str, Expression] = field(default_factory=dict)
    flag_universe: frozenset[str] = frozenset()
    spans: dict[str, SourceSpan] = field(default_factory=dict)

    @classmethod
    def make(
        cls,
        productions: dict[str, Expression],
        start: str | None = None,
        spans: dict[str, SourceSpan] | None = None,
    ) -> "Grammar":
        if not productions:
            raise ValueError("grammar needs at least one production")
        if start is None:
            start = next(iter(productions))
        tables: dict[str, Expression] = {}
        flags: set[str] = set()
        for body in productions.values():
            for node in walk(body):
                if isinstance(node, SymbolDef) and node.table not in tables:
                    tables[node.table] = node.body
                elif isinstance(node, (IfCond, OnCond)):
                    flags.add(node.flag)
        return cls(
            productions=dict(productions),
            start=start,
            tables=tables,
            flag_universe=frozenset(flags),
            spans=dict(spans or {}),
        )

    def table_names(self) -> set[str]:
        """All table names referenced anywhere, whether or not defined."""
        names: set[str] = set()
        for body in self.productions.values():
            names |= _symbol_table_names(body)
        return names

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Grammar):
            return NotImplemented
        return (
            list(self.productions.items()) == list(other.productions.items())
            and self.start == other.start
        )

    def __hash__(self) -> int:  # pragma: no cover - grammars are not hashed
        return hash((tuple(self.productions), self.start))
