"""Static analysis and validation of grammars.

Validation runs before any parse: unresolved nonterminals, conflicting table
definitions, tables used by <is>/<isa>/<match> without a <def>, and left
recursion are errors; nullable repetition bodies are warnings (the engine
additionally guards such loops at runtime).
"""

from __future__ import annotations

from typing import Callable

from .expressions import (
    And,
    AnyChar,
    BlockScope,
    CharClass,
    Choice,
    Diagnostic,
    Empty,
    Expression,
    Grammar,
    IfCond,
    LocalScope,
    NonTerminal,
    Not,
    OnCond,
    OneOrMore,
    Option,
    Repetition,
    Sequence,
    SymbolDef,
    SymbolExists,
    SymbolIs,
    SymbolIsa,
    SymbolMatch,
    Terminal,
    TreeLink,
    TreeNew,
    TreeTag,
    children,
    rebuild,
    sequence_of,
    walk,
)

class GrammarInvalidError(Exception):
    """Raised when a grammar with error-severity diagnostics is used."""

    def __init__(self, diagnostics: list[Diagnostic]):
        super().__init__("; ".join(d.message for d in diagnostics))
        self.diagnostics = diagnostics


E_UNDEFINED_NONTERMINAL = "E_UNDEFINED_NONTERMINAL"
E_TABLE_CONFLICT = "E_TABLE_CONFLICT"
E_TABLE_NO_DEF = "E_TABLE_NO_DEF"
E_LEFT_RECURSION = "E_LEFT_RECURSION"
E_START_MISSING = "E_START_MISSING"
W_NULLABLE_REPETITION = "W_NULLABLE_REPETITION"


def desugar_expression(expr: Expression) -> Expression:
    """Rewrite OneOrMore(e) to Sequence(e, Repetition(e)) and Option(e) to
    Choice(e, Empty); all other variants are preserved."""
    kids = children(expr)
    if kids:
        expr = rebuild(expr, tuple(desugar_expression(k) for k in kids))
    if isinstance(expr, OneOrMore):
        return sequence_of([expr.body, Repetition(expr.body)])
    if isinstance(expr, Option):
        return Choice(expr.body, Empty())
    return expr


def desugar(grammar: Grammar) -> Grammar:
    productions = {name: desugar_expression(body) for name, body in grammar.productions.items()}
    return Grammar.make(productions, grammar.start, grammar.spans)


def collect_tables(grammar: Grammar) -> tuple[dict[str, Expression], list[Diagnostic]]:
    """Registry of table name -> unique definition body.

    Two <def> sites for the same table must carry structurally equal bodies
    (compared after desugaring). Tables consulted by <is>/<isa>/<match>
    without any <def> are errors: their definition expression is undefined.
    """
    registry: dict[str, Expression] = {}
    canonical: dict[str, Expression] = {}
    diagnostics: list[Diagnostic] = []
    conflicted: set[str] = set()
    referenced: dict[str, str] = {}

    for name in grammar.productions:
        for node in walk(grammar.productions[name]):
            if isinstance(node, SymbolDef):
                canon = desugar_expression(node.body)
                if node.table not in registry:
                    registry[node.table] = node.body
                    canonical[node.table] = canon
                elif canon != canonical[node.table] and node.table not in conflicted:
                    conflicted.add(node.table)
                    diagnostics.append(
                        Diagnostic(
                            "error",
                            E_TABLE_CONFLICT,
                            name,
                            grammar.spans.get(name),
                            f"table '{node.table}' has two structurally different definitions",
                        )
                    )
            elif isinstance(node, (SymbolIs, SymbolIsa, SymbolMatch)):
                referenced.setdefault(node.table, name)

    for table in sorted(referenced):
        if table not in registry:
            prod = referenced[table]
            diagnostics.append(
                Diagnostic(
                    "error",
                    E_TABLE_NO_DEF,
                    prod,
                    grammar.spans.get(prod),
                    f"table '{table}' is consulted but never defined by <def>",
                )
            )
    return registry, diagnostics


def _nullable_fn(
    production_nullable: dict[str, bool], registry: dict[str, Expression]
) -> Callable[[Expression], bool]:
    """Expression-level nullability test against a fixed per-production map."""

    def nullable(expr: Expression, seen: frozenset[str] = frozenset()) -> bool:
        if isinstance(expr, (Empty, And, Not, IfCond, SymbolExists, TreeTag)):
            return True
        if isinstance(expr, (Terminal, CharClass, AnyChar)):
            return False
        if isinstance(expr, (Option, Repetition)):
            return True
        if isinstance(expr, OneOrMore):
            return nullable(expr.body, seen)
        if isinstance(expr, NonTerminal):
            return production_nullable.get(expr.name, False)
        if isinstance(expr, Sequence):
            return nullable(expr.left, seen) and nullable(expr.right, seen)
        if isinstance(expr, Choice):
            return nullable(expr.first, seen) or nullable(expr.second, seen)
        if isinstance(expr, SymbolMatch):
            return True  # the stored symbol may be the empty string
        if isinstance(expr, (SymbolIs, SymbolIsa)):
            body = registry.get(expr.table)
            if body is None or expr.table in seen:
                return True
            return nullable(body, seen | {expr.table})
        if isinstance(expr, (SymbolDef, BlockScope, LocalScope, OnCond, TreeNew, TreeLink)):
            return nullable(expr.body, seen)
        raise TypeError(f"unknown expression variant: {type(expr).__name__}")

    return nullable


def nullability(grammar: Grammar) -> dict[str, bool]:
    """Least fixpoint of per-production nullability (can succeed consuming
    nothing). Predicates, <if>, <exists>, and Empty are nullable; scoped and
    state-changing constructs are nullable iff their bodies are."""
    registry, _ = collect_tables(grammar)
    production_nullable = {name: False for name in grammar.productions}
    nullable = _nullable_fn(production_nullable, registry)
    changed = True
    while changed:
        changed = False
        for name, body in grammar.productions.items():
            if not production_nullable[name] and nullable(body):
                production_nullable[name] = True
                changed = True
    return production_nullable


def _leftmost_refs(
    expr: Expression,
    nullable: Callable[[Expression], bool],
    registry: dict[str, Expression],
    seen_tables: frozenset[str] = frozenset(),
) -> set[str]:
    """Nonterminals reachable at the leftmost position of an expression."""
    if isinstance(expr, NonTerminal):
        return {expr.name}
    if isinstance(expr, Sequence):
        refs = _leftmost_refs(expr.left, nullable, registry, seen_tables)
        if nullable(expr.left):
            refs |= _leftmost_refs(expr.right, nullable, registry, seen_tables)
        return refs
    if isinstance(expr, Choice):
        return _leftmost_refs(expr.first, nullable, registry, seen_tables) | _leftmost_refs(
            expr.second, nullable, registry, seen_tables
        )
    if isinstance(expr, (SymbolIs, SymbolIsa)):
        body = registry.get(expr.table)
        if body is None or expr.table in seen_tables:
            return set()
        return _leftmost_refs(body, nullable, registry, seen_tables | {expr.table})
    kids = children(expr)
    if kids:
        # Unary wrappers: the body sits at the leftmost position.
        return _leftmost_refs(kids[0], nullable, registry, seen_tables)
    return set()


def detect_left_recursion(grammar: Grammar) -> list[Diagnostic]:
    """Flag every production inside a cycle of leftmost-position references.

    Leftmost position propagates through a sequence only when its left side
    is nullable, and into <is>/<isa> through the table's definition body.
    """
    g = desugar(grammar)
    production_nullable = nullability(g)
    registry, _ = collect_tables(g)
    nullable = _nullable_fn(production_nullable, registry)
    edges = {
        name: _leftmost_refs(body, nullable, registry) & set(g.productions)
        for name, body in g.productions.items()
    }

    in_cycle: set[str] = set()
    for origin in g.productions:
        stack = list(edges[origin])
        visited: set[str] = set()
        while stack:
            node = stack.pop()
            if node == origin:
                in_cycle.add(origin)
                break
            if node in visited:
                continue
            visited.add(node)
            stack.extend(edges.get(node, ()))
    return [
        Diagnostic(
            "error",
            E_LEFT_RECURSION,
            name,
            grammar.spans.get(name),
            f"production '{name}' is left-recursive",
        )
        for name in grammar.productions
        if name in in_cycle
    ]


def _contains_def(expr: Expression, grammar: Grammar) -> bool:
    todo = [expr]
    seen_names: set[str] = set()
    while todo:
        node = todo.pop()
        for sub in walk(node):
            if isinstance(sub, SymbolDef):
                return True
            if isinstance(sub, NonTerminal) and sub.name not in seen_names:
                seen_names.add(sub.name)
                body = grammar.productions.get(sub.name)
                if body is not None:
                    todo.append(body)
    return False


def check_repetition_bodies(grammar: Grammar) -> list[Diagnostic]:
    """Warn about repetitions whose body can succeed without consuming and
    without changing symbol-table state; the engine exits such loops after a
    single zero-progress iteration, which is rarely what the author meant."""
    g = desugar(grammar)
    production_nullable = nullability(g)
    registry, _ = collect_tables(g)
    nullable = _nullable_fn(production_nullable, registry)
    diagnostics = []
    for name, body in g.productions.items():
        for node in walk(body):
            if isinstance(node, Repetition) and nullable(node.body):
                if not _contains_def(node.body, g):
                    diagnostics.append(
                        Diagnostic(
                            "warning",
                            W_NULLABLE_REPETITION,
                            name,
                            grammar.spans.get(name),
                            f"repetition body in '{name}' can match without consuming input",
                        )
                    )
    return diagnostics


def reachable_productions(grammar: Grammar, from_name: str) -> set[str]:
    """Transitive closure of nonterminal references, including references
    made indirectly through <is>/<isa> definition bodies."""
    registry, _ = collect_tables(grammar)
    seen: set[str] = set()
    todo = [from_name]
    while todo:
        name = todo.pop()
        if name in seen or name not in grammar.productions:
            continue
        seen.add(name)
        for node in walk(grammar.productions[name]):
            if isinstance(node, NonTerminal):
                todo.append(node.name)
            elif isinstance(node, (SymbolIs, SymbolIsa)):
                body = registry.get(node.table)
                if body is not None:
                    for sub in walk(body):
                        if isinstance(sub, NonTerminal):
                            todo.append(sub.name)
    return seen


def validate(grammar: Grammar) -> list[Diagnostic]:
    """Full static validation; error-severity diagnostics prevent parsing."""
    diagnostics: list[Diagnostic] = []

    if grammar.start not in grammar.productions:
        diagnostics.append(
            Diagnostic(
                "error",
                E_START_MISSING,
                grammar.start,
                None,
                f"start production '{grammar.start}' does not exist",
            )
        )

    defined = set(grammar.productions)
    for name, body in grammar.productions.items():
        for node in walk(body):
            if isinstance(node, NonTerminal) and node.name not in defined:
                diagnostics.append(
                    Diagnostic(
                        "error",
                        E_UNDEFINED_NONTERMINAL,
                        name,
                        grammar.spans.get(name),
                        f"'{name}' references undefined nonterminal '{node.name}'",
                    )
                )

    _, table_diags = collect_tables(grammar)
    diagnostics.extend(table_diags)

    if not any(d.severity == "error" for d in diagnostics):
        # Cycle detection needs resolvable references.
        diagnostics.extend(detect_left_recursion(grammar))
        diagnostics.extend(check_repetition_bodies(grammar))
    return diagnostics


def has_errors(diagnostics: list[Diagnostic]) -> bool:
    return any(d.severity == "error" for d in diagnostics)
