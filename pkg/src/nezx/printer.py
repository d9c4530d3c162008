"""Canonical grammar printing.

The printer is the inverse of the DSL parser: printing a grammar and parsing
the output yields a structurally equal grammar, and printing is a fixed point
(print -> parse -> print reproduces the same bytes).
"""

from __future__ import annotations

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

# Precedence levels, loosest to tightest.
_CHOICE, _SEQUENCE, _PREFIX, _SUFFIX = 0, 1, 2, 3

_LITERAL_ESCAPES = {0x0A: "\\n", 0x0D: "\\r", 0x09: "\\t", 0x5C: "\\\\", 0x27: "\\'"}
_CLASS_ESCAPES = {
    0x0A: "\\n",
    0x0D: "\\r",
    0x09: "\\t",
    0x5C: "\\\\",
    0x5D: "\\]",
    0x5B: "\\[",
    0x2D: "\\-",
}


def _byte_in_literal(value: int) -> str:
    if value in _LITERAL_ESCAPES:
        return _LITERAL_ESCAPES[value]
    if 0x20 <= value <= 0x7E:
        return chr(value)
    return f"\\x{value:02x}"


def _class_byte(value: int) -> str:
    if value in _CLASS_ESCAPES:
        return _CLASS_ESCAPES[value]
    if 0x20 <= value <= 0x7E:
        return chr(value)
    return f"\\x{value:02x}"


def _terminal_run(elements: list[Expression], index: int) -> tuple[str, int] | None:
    """Longest run of Terminal elements starting at index, as a quoted
    literal."""
    run: list[int] = []
    j = index
    while j < len(elements) and isinstance(elements[j], Terminal):
        run.append(elements[j].value)
        j += 1
    if not run:
        return None
    text = "".join(_byte_in_literal(v) for v in run)
    return f"'{text}'", j


def print_expression(expr: Expression, level: int = _CHOICE) -> str:
    text, prec = _render(expr)
    if prec < level:
        return f"( {text} )"
    return text


def _render(expr: Expression) -> tuple[str, int]:
    if isinstance(expr, Empty):
        return "''", _SUFFIX
    if isinstance(expr, Terminal):
        return f"'{_byte_in_literal(expr.value)}'", _SUFFIX
    if isinstance(expr, CharClass):
        parts = []
        for lo, hi in expr.ranges:
            if lo == hi:
                parts.append(_class_byte(lo))
            elif hi == lo + 1:
                parts.append(_class_byte(lo) + _class_byte(hi))
            else:
                parts.append(f"{_class_byte(lo)}-{_class_byte(hi)}")
        return f"[{''.join(parts)}]", _SUFFIX
    if isinstance(expr, AnyChar):
        return ".", _SUFFIX
    if isinstance(expr, NonTerminal):
        return expr.name, _SUFFIX
    if isinstance(expr, Sequence):
        elements = sequence_elements(expr)
        if all(isinstance(el, Terminal) for el in elements):
            rendered = _terminal_run(elements, 0)
            if rendered is not None:
                return rendered[0], _SUFFIX
        parts = []
        i = 0
        while i < len(elements):
            rendered = _terminal_run(elements, i)
            if rendered is not None:
                parts.append(rendered[0])
                i = rendered[1]
            else:
                parts.append(print_expression(elements[i], _PREFIX))
                i += 1
        return " ".join(parts), _SEQUENCE
    if isinstance(expr, Choice):
        alts = [print_expression(a, _SEQUENCE) for a in choice_alternatives(expr)]
        return " / ".join(alts), _CHOICE
    if isinstance(expr, Option):
        return print_expression(expr.body, _SUFFIX) + "?", _SUFFIX
    if isinstance(expr, Repetition):
        return print_expression(expr.body, _SUFFIX) + "*", _SUFFIX
    if isinstance(expr, OneOrMore):
        return print_expression(expr.body, _SUFFIX) + "+", _SUFFIX
    if isinstance(expr, And):
        return "&" + print_expression(expr.body, _PREFIX), _PREFIX
    if isinstance(expr, Not):
        return "!" + print_expression(expr.body, _PREFIX), _PREFIX
    if isinstance(expr, TreeNew):
        return "{ " + print_expression(expr.body, _CHOICE) + " }", _SUFFIX
    if isinstance(expr, TreeLink):
        return "$( " + print_expression(expr.body, _CHOICE) + " )", _SUFFIX
    if isinstance(expr, TreeTag):
        return "#" + expr.tag, _SUFFIX
    if isinstance(expr, SymbolDef):
        return f"<def {expr.table} {print_expression(expr.body)}>", _SUFFIX
    if isinstance(expr, SymbolExists):
        return f"<exists {expr.table}>", _SUFFIX
    if isinstance(expr, SymbolMatch):
        return f"<match {expr.table}>", _SUFFIX
    if isinstance(expr, SymbolIs):
        return f"<is {expr.table}>", _SUFFIX
    if isinstance(expr, SymbolIsa):
        return f"<isa {expr.table}>", _SUFFIX
    if isinstance(expr, BlockScope):
        return f"<block {expr.table} {print_expression(expr.body)}>", _SUFFIX
    if isinstance(expr, LocalScope):
        return f"<local {expr.table} {print_expression(expr.body)}>", _SUFFIX
    if isinstance(expr, IfCond):
        bang = "!" if expr.negated else ""
        return f"<if {bang}{expr.flag}>", _SUFFIX
    if isinstance(expr, OnCond):
        bang = "!" if expr.negated else ""
        return f"<on {bang}{expr.flag} {print_expression(expr.body)}>", _SUFFIX
    raise TypeError(f"unknown expression variant: {type(expr).__name__}")


def print_grammar(grammar: Grammar) -> str:
    lines = []
    first = next(iter(grammar.productions))
    if grammar.start != first:
        lines.append(f"@start {grammar.start}")
    for name, body in grammar.productions.items():
        lines.append(f"{name} = {print_expression(body)}")
    return "\n".join(lines) + "\n"
