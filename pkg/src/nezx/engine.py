"""Backtracking interpreter for extended parsing expressions.

The evaluator works on immutable byte input with transactional state:
whenever a speculative attempt fails (a losing choice branch, a predicate
body, a failed repetition iteration), position, symbol-table stacks, flags,
and tree construction are restored to the pre-attempt snapshot.

Symbol tables are per-name stacks of byte strings. Parsing flags live in a
dedicated store; a flag that was never set reads true. A monotone state
version counter increments on every observable change to tables or flags --
including rollbacks that shrink a stack -- so that a version value always
identifies a unique table/flag configuration within one parse. The packrat
layer keys its memo table on that counter.

For throughput the public expression tree is compiled once per parser into
nested closures: right-leaning sequences and choices become flat tuples and
terminal runs become single byte-string comparisons. The step counter counts
applications of these compiled rules; it increases strictly during a parse
and is the deterministic cost signal used by the benchmark harness.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

from .analysis import GrammarInvalidError, collect_tables, has_errors, validate
from .expressions import (
    And,
    AnyChar,
    BlockScope,
    CharClass,
    Choice,
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
    choice_alternatives,
    sequence_elements,
)

E_STEP_LIMIT = "E_STEP_LIMIT"
E_GRAMMAR_INVALID = "E_GRAMMAR_INVALID"

DEFAULT_BUDGET_FACTOR = 64


class StepLimitExceeded(Exception):
    """The configurable step budget ran out -- runaway guard, never silent."""

    def __init__(self, steps: int, budget: int):
        super().__init__(f"step budget exceeded: {steps} > {budget}")
        self.steps = steps
        self.budget = budget


@dataclass(frozen=True)
class SyntaxTree:
    """Minimal syntax-tree node: tag, byte span, ordered children."""

    tag: str
    start: int
    end: int
    children: tuple["SyntaxTree", ...] = ()

    def to_sexpr(self) -> str:
        inner = "".join(" " + c.to_sexpr() for c in self.children)
        return f"(#{self.tag} {self.start}:{self.end}{inner})"

    def to_json_dict(self) -> dict:
        return {
            "tag": self.tag,
            "start": self.start,
            "end": self.end,
            "children": [c.to_json_dict() for c in self.children],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    def digest(self) -> str:
        return hashlib.sha256(self.to_sexpr().encode()).hexdigest()


@dataclass(frozen=True)
class ParseOutcome:
    """Result of one parse: success with consumed length (and optional tree),
    or failure with the furthest byte offset reached by a failed match."""

    success: bool
    consumed: int | None
    furthest: int | None
    steps: int
    tree: SyntaxTree | None = None

    def tree_digest(self) -> str | None:
        return self.tree.digest() if self.tree else None


@dataclass
class EngineOptions:
    require_eof: bool = False
    build_tree: bool = False
    step_budget: int | None = None  # None: 64 * (input bytes + 1) * productions
    flags: dict[str, bool] = field(default_factory=dict)
    # Experimental: keep table/flag changes made by failed speculative
    # attempts (positions still rewind). Off by default; see Nez choice/not
    # rollback discussion in the docs.
    leak_failed_speculation: bool = False


class StateSnapshot(NamedTuple):
    position: int
    table_depths: tuple[int, ...]
    tree_mark: tuple[int, int, str, object]


class _Frame:
    __slots__ = ("tag", "start", "children")

    def __init__(self, start: int):
        self.tag = "token"
        self.start = start
        self.children: list[SyntaxTree] = []


class ParserState:
    """Mutable evaluation state owned by a single parse."""

    __slots__ = (
        "data",
        "pos",
        "table_names",
        "stacks",
        "flags",
        "version",
        "steps",
        "budget",
        "furthest",
        "suppress",
        "frames",
        "last_node",
        "build_tree",
    )

    def __init__(
        self,
        data: bytes,
        table_names: tuple[str, ...],
        flags: dict[str, bool] | None = None,
        budget: int = 1 << 62,
        build_tree: bool = False,
    ):
        self.data = data
        self.pos = 0
        self.table_names = table_names
        self.stacks: list[list[bytes]] = [[] for _ in table_names]
        self.flags: dict[str, bool] = dict(flags or {})
        self.version = 0
        self.steps = 0
        self.budget = budget
        self.furthest = 0
        self.suppress = 0
        self.frames: list[_Frame] = []
        self.last_node: SyntaxTree | None = None
        self.build_tree = build_tree

    def snapshot(self) -> StateSnapshot:
        if self.frames:
            top = self.frames[-1]
            mark = (len(self.frames), len(top.children), top.tag, self.last_node)
        else:
            mark = (0, 0, "", self.last_node)
        return StateSnapshot(self.pos, tuple(map(len, self.stacks)), mark)

    def restore(self, snap: StateSnapshot) -> None:
        """Full transactional rollback to a snapshot."""
        self.pos = snap.position
        mutated = False
        for stack, depth in zip(self.stacks, snap.table_depths):
            if len(stack) > depth:
                del stack[depth:]
                mutated = True
        if mutated:
            self.version += 1
        self._restore_tree(snap)

    def rewind(self, snap: StateSnapshot) -> None:
        """Position/tree rollback that leaks table and flag state (used only
        by the leak_failed_speculation experiment)."""
        self.pos = snap.position
        self._restore_tree(snap)

    def _restore_tree(self, snap: StateSnapshot) -> None:
        depth, nchildren, tag, last = snap.tree_mark
        if len(self.frames) > depth:
            del self.frames[depth:]
        if depth and self.frames:
            top = self.frames[-1]
            if len(top.children) > nchildren:
                del top.children[nchildren:]
            top.tag = tag
        self.last_node = last

    def stack_for(self, table: str) -> list[bytes]:
        return self.stacks[self.table_names.index(table)]

    def flag_value(self, name: str) -> bool:
        return self.flags.get(name, True)

    def observable(self) -> tuple:
        """Comparable view of everything a failed attempt must restore."""
        tables = {name: tuple(stack) for name, stack in zip(self.table_names, self.stacks)}
        tree = tuple(
            (f.tag, f.start, tuple(f.children)) for f in self.frames
        )
        return (self.pos, tables, dict(self.flags), tree, self.last_node)


_Rule = Callable[[ParserState], bool]


class Parser:
    """Compiles a validated grammar once and parses any number of inputs."""

    def __init__(self, grammar: Grammar, options: EngineOptions | None = None):
        diagnostics = validate(grammar)
        if has_errors(diagnostics):
            raise GrammarInvalidError([d for d in diagnostics if d.severity == "error"])
        self.grammar = grammar
        self.options = options or EngineOptions()
        self.registry, _ = collect_tables(grammar)
        self.table_names = tuple(sorted(grammar.table_names()))
        self._table_index = {name: i for i, name in enumerate(self.table_names)}
        self._rules: dict[str, _Rule] = {}
        self._compiling_registry: dict[str, _Rule] = {}
        for table, body in self.registry.items():
            self._compiling_registry[table] = self._compile(body)
        for name, body in grammar.productions.items():
            self._rules[name] = self._compile_production(name, self._compile(body))

    # -- public API ---------------------------------------------------------

    def parse(self, data: bytes, start: str | None = None) -> ParseOutcome:
        start = start or self.grammar.start
        if start not in self._rules:
            raise ValueError(f"unknown start production '{start}'")
        state = self.new_state(data)
        rule = self._rules[start]
        limit = sys.getrecursionlimit()
        if limit < 30000:
            sys.setrecursionlimit(30000)
        try:
            ok = rule(state)
        finally:
            if limit < 30000:
                sys.setrecursionlimit(limit)
        if ok and self.options.require_eof and state.pos != len(data):
            if state.pos > state.furthest:
                state.furthest = state.pos
            ok = False
        if not ok:
            return ParseOutcome(False, None, state.furthest, state.steps)
        return ParseOutcome(True, state.pos, None, state.steps, state.last_node)

    def new_state(self, data: bytes) -> ParserState:
        budget = self.options.step_budget
        if budget is None:
            budget = DEFAULT_BUDGET_FACTOR * (len(data) + 1) * max(1, len(self.grammar.productions))
        return ParserState(
            data,
            self.table_names,
            flags=self.options.flags,
            budget=budget,
            build_tree=self.options.build_tree,
        )

    def eval(self, expr: Expression, state: ParserState) -> bool:
        """Evaluate one expression against an existing state (primarily for
        invariant tests); the transactional discipline applies."""
        return self._compile(expr)(state)

    # -- compilation --------------------------------------------------------

    def _compile_production(self, name: str, body: _Rule) -> _Rule:
        # Budget enforcement lives on nonterminal application and loop
        # iterations; straight-line code in between is bounded by grammar size.
        def rule(st: ParserState, body=body) -> bool:
            st.steps += 1
            if st.steps > st.budget:
                raise StepLimitExceeded(st.steps, st.budget)
            return body(st)

        return rule

    def _nonterminal(self, name: str) -> _Rule:
        rules = self._rules

        def run(st: ParserState) -> bool:
            return rules[name](st)

        return run

    def _compile(self, expr: Expression) -> _Rule:
        leak = self.options.leak_failed_speculation

        if isinstance(expr, Empty):
            def run(st: ParserState) -> bool:
                st.steps += 1
                return True
            return run

        if isinstance(expr, Terminal):
            value = expr.value
            def run(st: ParserState) -> bool:
                st.steps += 1
                data, pos = st.data, st.pos
                if pos < len(data) and data[pos] == value:
                    st.pos = pos + 1
                    return True
                if st.suppress == 0 and pos > st.furthest:
                    st.furthest = pos
                return False
            return run

        if isinstance(expr, CharClass):
            members = frozenset(
                b for lo, hi in expr.ranges for b in range(lo, hi + 1)
            )
            def run(st: ParserState) -> bool:
                st.steps += 1
                data, pos = st.data, st.pos
                if pos < len(data) and data[pos] in members:
                    st.pos = pos + 1
                    return True
                if st.suppress == 0 and pos > st.furthest:
                    st.furthest = pos
                return False
            return run

        if isinstance(expr, AnyChar):
            def run(st: ParserState) -> bool:
                st.steps += 1
                if st.pos < len(st.data):
                    st.pos += 1
                    return True
                if st.suppress == 0 and st.pos > st.furthest:
                    st.furthest = st.pos
                return False
            return run

        if isinstance(expr, NonTerminal):
            return self._nonterminal(expr.name)

        if isinstance(expr, Sequence):
            elements = sequence_elements(expr)
            compiled = tuple(self._compile_seq_element(elements, i) for i in self._seq_indices(elements))
            restore = ParserState.rewind if leak else ParserState.restore
            def run(st: ParserState) -> bool:
                st.steps += 1
                snap = st.snapshot()
                for rule in compiled:
                    if not rule(st):
                        restore(st, snap)
                        return False
                return True
            return run

        if isinstance(expr, Choice):
            alternatives = tuple(self._compile(a) for a in choice_alternatives(expr))
            def run(st: ParserState) -> bool:
                st.steps += 1
                for rule in alternatives:
                    if rule(st):
                        return True
                return False
            return run

        if isinstance(expr, Option):
            body = self._compile(expr.body)
            def run(st: ParserState) -> bool:
                st.steps += 1
                body(st)
                return True
            return run

        if isinstance(expr, Repetition):
            body = self._compile(expr.body)
            def run(st: ParserState) -> bool:
                st.steps += 1
                while True:
                    if st.steps > st.budget:
                        raise StepLimitExceeded(st.steps, st.budget)
                    snap = st.snapshot()
                    if not body(st):
                        return True
                    if st.pos == snap.position:
                        # Zero-progress iteration cannot extend the match;
                        # discard its effects and finish the loop.
                        st.restore(snap)
                        return True
            return run

        if isinstance(expr, OneOrMore):
            body = self._compile(expr.body)
            def run(st: ParserState) -> bool:
                st.steps += 1
                if not body(st):
                    return False
                while True:
                    if st.steps > st.budget:
                        raise StepLimitExceeded(st.steps, st.budget)
                    snap = st.snapshot()
                    if not body(st):
                        return True
                    if st.pos == snap.position:
                        st.restore(snap)
                        return True
            return run

        if isinstance(expr, And):
            body = self._compile(expr.body)
            def run(st: ParserState) -> bool:
                st.steps += 1
                snap = st.snapshot()
                st.suppress += 1
                ok = body(st)
                st.suppress -= 1
                st.restore(snap)
                return ok
            return run

        if isinstance(expr, Not):
            body = self._compile(expr.body)
            def run(st: ParserState) -> bool:
                st.steps += 1
                snap = st.snapshot()
                st.suppress += 1
                ok = body(st)
                st.suppress -= 1
                if ok:
                    st.restore(snap)
                    return False
                if not leak:
                    st.restore(snap)
                else:
                    st.rewind(snap)
                return True
            return run

        if isinstance(expr, SymbolDef):
            body = self._compile(expr.body)
            index = self._table_index[expr.table]
            def run(st: ParserState) -> bool:
                st.steps += 1
                start = st.pos
                if not body(st):
                    return False
                st.stacks[index].append(st.data[start : st.pos])
                st.version += 1
                return True
            return run

        if isinstance(expr, SymbolExists):
            index = self._table_index[expr.table]
            def run(st: ParserState) -> bool:
                st.steps += 1
                return bool(st.stacks[index])
            return run

        if isinstance(expr, SymbolMatch):
            index = self._table_index[expr.table]
            def run(st: ParserState) -> bool:
                st.steps += 1
                stack = st.stacks[index]
                if not stack:
                    return False
                top = stack[-1]
                if st.data.startswith(top, st.pos):
                    st.pos += len(top)
                    return True
                return False
            return run

        if isinstance(expr, (SymbolIs, SymbolIsa)):
            index = self._table_index[expr.table]
            body = self._compiling_registry[expr.table]
            want_top = isinstance(expr, SymbolIs)
            def run(st: ParserState) -> bool:
                st.steps += 1
                stack = st.stacks[index]
                if not stack:
                    return False
                snap = st.snapshot()
                st.suppress += 1
                ok = body(st)
                st.suppress -= 1
                if not ok:
                    if not leak:
                        st.restore(snap)
                    return False
                end = st.pos
                text = st.data[snap.position : end]
                st.restore(snap)  # extraction never mutates tables or trees
                if (text == stack[-1]) if want_top else (text in stack):
                    st.pos = end
                    return True
                return False
            return run

        if isinstance(expr, BlockScope):
            body = self._compile(expr.body)
            index = self._table_index[expr.table]
            def run(st: ParserState) -> bool:
                st.steps += 1
                stack = st.stacks[index]
                depth = len(stack)
                ok = body(st)
                if len(stack) > depth:
                    del stack[depth:]
                    st.version += 1
                return ok
            return run

        if isinstance(expr, LocalScope):
            body = self._compile(expr.body)
            index = self._table_index[expr.table]
            def run(st: ParserState) -> bool:
                st.steps += 1
                saved = st.stacks[index]
                st.stacks[index] = []
                if saved:
                    st.version += 1
                ok = body(st)
                if st.stacks[index] or saved:
                    st.version += 1
                st.stacks[index] = saved
                return ok
            return run

        if isinstance(expr, IfCond):
            flag, want = expr.flag, not expr.negated
            def run(st: ParserState) -> bool:
                st.steps += 1
                return st.flags.get(flag, True) == want
            return run

        if isinstance(expr, OnCond):
            body = self._compile(expr.body)
            flag, value = expr.flag, not expr.negated
            _MISSING = object()
            def run(st: ParserState) -> bool:
                st.steps += 1
                saved = st.flags.get(flag, _MISSING)
                effective = True if saved is _MISSING else saved
                if effective != value:
                    st.version += 1
                st.flags[flag] = value
                ok = body(st)
                now = st.flags.get(flag, True)
                if saved is _MISSING:
                    del st.flags[flag]
                    if now is not True:
                        st.version += 1
                else:
                    st.flags[flag] = saved
                    if now != saved:
                        st.version += 1
                return ok
            return run

        if isinstance(expr, TreeNew):
            body = self._compile(expr.body)
            def run(st: ParserState) -> bool:
                st.steps += 1
                if not st.build_tree:
                    return body(st)
                frame = _Frame(st.pos)
                st.frames.append(frame)
                ok = body(st)
                st.frames.pop()
                if ok:
                    st.last_node = SyntaxTree(
                        frame.tag, frame.start, st.pos, tuple(frame.children)
                    )
                return ok
            return run

        if isinstance(expr, TreeLink):
            body = self._compile(expr.body)
            def run(st: ParserState) -> bool:
                st.steps += 1
                if not st.build_tree:
                    return body(st)
                saved = st.last_node
                ok = body(st)
                if ok:
                    node = st.last_node
                    if node is not None and node is not saved and st.frames:
                        st.frames[-1].children.append(node)
                    st.last_node = saved
                return ok
            return run

        if isinstance(expr, TreeTag):
            tag = expr.tag
            def run(st: ParserState) -> bool:
                st.steps += 1
                if st.build_tree and st.frames:
                    st.frames[-1].tag = tag
                return True
            return run

        raise TypeError(f"cannot compile {type(expr).__name__}")

    def _seq_indices(self, elements: list[Expression]) -> list[int]:
        # Indices that start a compiled element: terminal runs collapse.
        indices = []
        i = 0
        while i < len(elements):
            indices.append(i)
            if isinstance(elements[i], Terminal):
                j = i
                while j < len(elements) and isinstance(elements[j], Terminal):
                    j += 1
                i = j
            else:
                i += 1
        return indices

    def _compile_seq_element(self, elements: list[Expression], index: int) -> _Rule:
        if isinstance(elements[index], Terminal):
            j = index
            run_bytes = bytearray()
            while j < len(elements) and isinstance(elements[j], Terminal):
                run_bytes.append(elements[j].value)
                j += 1
            if len(run_bytes) > 1:
                text = bytes(run_bytes)
                length = len(text)
                def run(st: ParserState) -> bool:
                    st.steps += 1
                    if st.data.startswith(text, st.pos):
                        st.pos += length
                        return True
                    # Report the first mismatching byte for diagnostics.
                    if st.suppress == 0:
                        data, pos = st.data, st.pos
                        k = 0
                        while k < length and pos + k < len(data) and data[pos + k] == text[k]:
                            k += 1
                        if pos + k > st.furthest:
                            st.furthest = pos + k
                    return False
                return run
        return self._compile(elements[index])


def parse(
    grammar: Grammar,
    data: bytes | str,
    start: str | None = None,
    options: EngineOptions | None = None,
    **option_kwargs,
) -> ParseOutcome:
    """One-shot parse; see Parser for repeated use of the same grammar."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    if options is None:
        options = EngineOptions(**option_kwargs)
    return Parser(grammar, options).parse(data, start)
