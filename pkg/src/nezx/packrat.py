"""Memoizing parser preserving naive-engine results under mutable state.

Nonterminal outcomes are cached by (production, position, state version).
The state version counter increments on every observable table/flag change
(see engine), so an entry recorded under an older configuration can never be
returned later: its key no longer matches. Evaluations that themselves change
state are not memoized at all -- replaying them from cache would skip their
side effects.

Tree fragments built by a memoized production are stored as immutable nodes
and grafted onto the current tree on reuse; reuse only ever happens at the
same input position, so recorded spans stay valid. Whether a production's
loose tree nodes attach anywhere depends on an enclosing tree constructor
being open, so that single bit joins the key when tree building is enabled.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

from .engine import (
    EngineOptions,
    ParseOutcome,
    Parser,
    ParserState,
    StepLimitExceeded,
    SyntaxTree,
    _Rule,
)
from .expressions import Grammar

DEFAULT_MEMO_LIMIT = 4_000_000


class MemoKey(NamedTuple):
    production: str
    position: int
    state_version: int
    in_tree_context: bool


class MemoEntry(NamedTuple):
    success: bool
    consumed: int
    children_delta: tuple[SyntaxTree, ...]
    tag_after: str | None
    last_changed: bool
    last_node: SyntaxTree | None
    version_at_store: int


@dataclass
class MemoStats:
    lookups: int = 0
    hits: int = 0
    stores: int = 0
    stateful_skips: int = 0
    resets: int = 0
    hit_log: list[tuple[MemoKey, int]] = field(default_factory=list)


class PackratParser(Parser):
    """Drop-in replacement for Parser with state-aware memoization."""

    def __init__(
        self,
        grammar: Grammar,
        options: EngineOptions | None = None,
        memo_limit: int = DEFAULT_MEMO_LIMIT,
        keep_hit_log: bool = False,
    ):
        if options is not None and options.leak_failed_speculation:
            raise ValueError("memoization requires transactional backtracking")
        self._memo: dict[MemoKey, MemoEntry] = {}
        self._memo_limit = memo_limit
        self.stats = MemoStats()
        self._keep_hit_log = keep_hit_log
        super().__init__(grammar, options)

    def parse(self, data: bytes, start: str | None = None) -> ParseOutcome:
        self._memo.clear()
        return super().parse(data, start)

    def _compile_production(self, name: str, body: _Rule) -> _Rule:
        memo = self._memo
        stats = self.stats
        limit = self._memo_limit
        keep_log = self._keep_hit_log

        def rule(st: ParserState) -> bool:
            st.steps += 1
            if st.steps > st.budget:
                raise StepLimitExceeded(st.steps, st.budget)
            in_tree = st.build_tree and bool(st.frames)
            key = MemoKey(name, st.pos, st.version, in_tree)
            stats.lookups += 1
            entry = memo.get(key)
            if entry is not None:
                stats.hits += 1
                if keep_log:
                    stats.hit_log.append((key, st.version))
                if not entry.success:
                    return False
                st.pos += entry.consumed
                if in_tree:
                    frame = st.frames[-1]
                    if entry.children_delta:
                        frame.children.extend(entry.children_delta)
                    if entry.tag_after is not None:
                        frame.tag = entry.tag_after
                if entry.last_changed:
                    st.last_node = entry.last_node
                return True

            version_before = st.version
            pos_before = st.pos
            if in_tree:
                frame = st.frames[-1]
                children_mark = len(frame.children)
                tag_before = frame.tag
            last_before = st.last_node

            ok = body(st)

            if st.version != version_before:
                # Stateful evaluation: replay would skip its side effects.
                stats.stateful_skips += 1
                return ok
            children_delta: tuple[SyntaxTree, ...] = ()
            tag_after: str | None = None
            if ok and in_tree:
                frame = st.frames[-1]
                children_delta = tuple(frame.children[children_mark:])
                if frame.tag != tag_before:
                    tag_after = frame.tag
            last_changed = ok and st.last_node is not last_before
            if len(memo) >= limit:
                memo.clear()
                stats.resets += 1
            memo[key] = MemoEntry(
                ok,
                st.pos - pos_before if ok else 0,
                children_delta,
                tag_after,
                last_changed,
                st.last_node if last_changed else None,
                version_before,
            )
            stats.stores += 1
            return ok

        return rule


def parse_packrat(
    grammar: Grammar,
    data: bytes | str,
    start: str | None = None,
    options: EngineOptions | None = None,
    **option_kwargs,
) -> ParseOutcome:
    """One-shot memoized parse; result fields (success, consumed, tree) match
    the naive engine, step counts may differ."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    if options is None:
        options = EngineOptions(**option_kwargs)
    return PackratParser(grammar, options).parse(data, start)
