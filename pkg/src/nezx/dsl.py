"""Textual grammar notation.

Hand-written recursive descent over UTF-8 bytes (the notation itself is never
parsed by the engine, which avoids bootstrap circularity).

Syntax summary::

    // line comment            /* block comment */
    @start Name                // optional start override (default: first rule)
    Name = expression
    e1 e2       sequence           e1 / e2    prioritized choice (right assoc)
    e? e* e+    suffixes           &e  !e     predicates
    'text'      literal (escapes \\n \\r \\t \\\\ \\')
    [A-z0-9_]   byte-range class   .          any byte
    { e }       tree node          $( e )     tree link       #name  tree tag
    <def T e>  <exists T>  <match T>  <is T>  <isa T>
    <block T e>  <local T e>  <if C>  <if !C>  <on C e>  <on !C e>

Choice is lowest precedence, then sequence, then prefixes, then suffixes.
Production names may carry a specialization suffix like ``Name@F=t,G=f`` so
transformed grammars can be printed and re-read.
"""

from __future__ import annotations

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
    SourceSpan,
    SymbolDef,
    SymbolExists,
    SymbolIs,
    SymbolIsa,
    SymbolMatch,
    Terminal,
    TreeLink,
    TreeNew,
    TreeTag,
    choice_of,
    sequence_of,
)
from . import analysis

E_SYNTAX = "E_SYNTAX"

_ESCAPES = {ord("n"): 0x0A, ord("r"): 0x0D, ord("t"): 0x09, ord("\\"): 0x5C, ord("'"): 0x27}
_CLASS_ESCAPES = dict(_ESCAPES, **{ord("]"): 0x5D, ord("["): 0x5B, ord("-"): 0x2D})
_ANGLE_KEYWORDS = ("exists", "match", "block", "local", "isa", "def", "is", "if", "on")


GrammarInvalidError = analysis.GrammarInvalidError


class GrammarSyntaxError(Exception):
    """Raised on malformed grammar text; carries a source-located diagnostic."""

    def __init__(self, diagnostic: Diagnostic):
        super().__init__(diagnostic.message)
        self.diagnostic = diagnostic


def _is_name_start(b: int) -> bool:
    return b == 0x5F or 0x41 <= b <= 0x5A or 0x61 <= b <= 0x7A


def _is_name_char(b: int) -> bool:
    return _is_name_start(b) or 0x30 <= b <= 0x39


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def span(self, start: int, length: int = 1) -> SourceSpan:
        line = self.data.count(b"\n", 0, start) + 1
        nl = self.data.rfind(b"\n", 0, start)
        return SourceSpan(line=line, column=start - nl, offset=start, length=length)

    def error(self, message: str, at: int | None = None) -> GrammarSyntaxError:
        pos = self.pos if at is None else at
        return GrammarSyntaxError(
            Diagnostic("error", E_SYNTAX, None, self.span(pos), message)
        )

    def eof(self) -> bool:
        return self.pos >= len(self.data)

    def peek(self) -> int:
        return self.data[self.pos] if self.pos < len(self.data) else -1

    def skip_layout(self) -> None:
        data = self.data
        while self.pos < len(data):
            b = data[self.pos]
            if b in (0x20, 0x09, 0x0D, 0x0A):
                self.pos += 1
            elif b == 0x2F and data[self.pos + 1 : self.pos + 2] == b"/":
                nl = data.find(b"\n", self.pos)
                self.pos = len(data) if nl < 0 else nl
            elif b == 0x2F and data[self.pos + 1 : self.pos + 2] == b"*":
                end = data.find(b"*/", self.pos + 2)
                if end < 0:
                    raise self.error("unterminated block comment")
                self.pos = end + 2
            else:
                return

    def take(self, text: bytes) -> bool:
        if self.data.startswith(text, self.pos):
            self.pos += len(text)
            return True
        return False

    def expect(self, text: bytes, what: str) -> None:
        if not self.take(text):
            raise self.error(f"expected {what}")

    def name(self, what: str = "name") -> str:
        if not _is_name_start(self.peek()):
            raise self.error(f"expected {what}")
        start = self.pos
        while self.pos < len(self.data) and _is_name_char(self.data[self.pos]):
            self.pos += 1
        return self.data[start : self.pos].decode("ascii")

    def production_name(self) -> str:
        # Plain name plus an optional flag-specialization suffix.
        base = self.name("production name")
        if self.peek() != 0x40:  # '@'
            return base
        save = self.pos
        self.pos += 1
        parts = []
        while True:
            if not _is_name_start(self.peek()):
                self.pos = save
                return base
            flag = self.name()
            if not self.take(b"="):
                self.pos = save
                return base
            if self.peek() not in (ord("t"), ord("f")):
                self.pos = save
                return base
            parts.append(f"{flag}={chr(self.peek())}")
            self.pos += 1
            if not self.take(b","):
                break
        return base + "@" + ",".join(parts)


class _ExpressionParser:
    def __init__(self, reader: _Reader):
        self.r = reader

    def parse_choice(self) -> Expression:
        alts = [self.parse_sequence()]
        self.r.skip_layout()
        while self.r.take(b"/"):
            self.r.skip_layout()
            alts.append(self.parse_sequence())
            self.r.skip_layout()
        return choice_of(alts)

    def parse_sequence(self) -> Expression:
        elements = [self.parse_prefixed()]
        while True:
            self.r.skip_layout()
            if self.r.eof() or self.r.peek() in b"/)}>":
                break
            if self._at_production_header():
                break
            if self.r.peek() == 0x40:  # '@' directive
                break
            elements.append(self.parse_prefixed())
        return sequence_of(elements)

    def _at_production_header(self) -> bool:
        # A bare name followed by '=' starts the next production.
        if not _is_name_start(self.r.peek()):
            return False
        save = self.r.pos
        try:
            self.r.production_name()
            self.r.skip_layout()
            return self.r.peek() == 0x3D  # '='
        finally:
            self.r.pos = save

    def parse_prefixed(self) -> Expression:
        if self.r.take(b"&"):
            self.r.skip_layout()
            return And(self.parse_prefixed())
        if self.r.take(b"!"):
            self.r.skip_layout()
            return Not(self.parse_prefixed())
        return self.parse_suffixed()

    def parse_suffixed(self) -> Expression:
        expr = self.parse_primary()
        while True:
            b = self.r.peek()
            if b == 0x3F:  # ?
                self.r.pos += 1
                expr = Option(expr)
            elif b == 0x2A:  # *
                self.r.pos += 1
                expr = Repetition(expr)
            elif b == 0x2B:  # +
                self.r.pos += 1
                expr = OneOrMore(expr)
            else:
                return expr

    def parse_primary(self) -> Expression:
        r = self.r
        b = r.peek()
        if b == 0x27:  # '
            return self._literal()
        if b == 0x5B:  # [
            return self._char_class()
        if b == 0x2E:  # .
            r.pos += 1
            return AnyChar()
        if b == 0x28:  # (
            r.pos += 1
            r.skip_layout()
            expr = self.parse_choice()
            r.skip_layout()
            r.expect(b")", "')'")
            return expr
        if b == 0x7B:  # {
            r.pos += 1
            r.skip_layout()
            expr = self.parse_choice()
            r.skip_layout()
            r.expect(b"}", "'}'")
            return TreeNew(expr)
        if b == 0x24:  # $
            r.pos += 1
            r.expect(b"(", "'(' after '$'")
            r.skip_layout()
            expr = self.parse_choice()
            r.skip_layout()
            r.expect(b")", "')'")
            return TreeLink(expr)
        if b == 0x23:  # #
            r.pos += 1
            return TreeTag(r.name("tag name"))
        if b == 0x3C:  # <
            return self._angle()
        if _is_name_start(b):
            return NonTerminal(r.production_name())
        raise r.error("expected an expression")

    def _literal(self) -> Expression:
        r = self.r
        start = r.pos
        r.pos += 1
        values: list[int] = []
        while True:
            if r.eof() or r.peek() == 0x0A:
                raise r.error("unterminated literal", at=start)
            b = r.data[r.pos]
            if b == 0x27:
                r.pos += 1
                break
            if b == 0x5C:
                values.append(self._escape(_ESCAPES))
            else:
                values.append(b)
                r.pos += 1
        if not values:
            return Empty()
        return sequence_of([Terminal(v) for v in values])

    def _escape(self, table: dict[int, int]) -> int:
        # Reader is positioned at the backslash.
        r = self.r
        esc = r.data[r.pos + 1 : r.pos + 2]
        if esc == b"x":
            digits = r.data[r.pos + 2 : r.pos + 4]
            try:
                value = int(digits, 16)
            except ValueError:
                raise r.error("\\x escape needs two hex digits", at=r.pos) from None
            if len(digits) != 2:
                raise r.error("\\x escape needs two hex digits", at=r.pos)
            r.pos += 4
            return value
        if not esc or esc[0] not in table:
            raise r.error("unknown escape", at=r.pos)
        r.pos += 2
        return table[esc[0]]

    def _char_class(self) -> Expression:
        r = self.r
        start = r.pos
        r.pos += 1
        ranges: list[tuple[int, int]] = []

        def one_byte() -> int:
            if r.eof() or r.peek() == 0x0A:
                raise r.error("unterminated character class", at=start)
            b = r.data[r.pos]
            if b == 0x5C:
                return self._escape(_CLASS_ESCAPES)
            if b >= 0x80:
                raise r.error("non-ASCII byte in character class; use escapes", at=r.pos)
            r.pos += 1
            return b

        while True:
            if r.eof():
                raise r.error("unterminated character class", at=start)
            if r.peek() == 0x5D:
                r.pos += 1
                break
            lo = one_byte()
            if r.peek() == 0x2D and r.data[r.pos + 1 : r.pos + 2] != b"]":
                r.pos += 1
                hi = one_byte()
                if hi < lo:
                    raise r.error("character range is reversed", at=start)
                ranges.append((lo, hi))
            else:
                ranges.append((lo, lo))
        if not ranges:
            raise r.error("empty character class", at=start)
        return CharClass(tuple(ranges))

    def _angle(self) -> Expression:
        r = self.r
        start = r.pos
        r.pos += 1
        keyword = None
        for kw in _ANGLE_KEYWORDS:
            if r.data.startswith(kw.encode(), r.pos) and not _is_name_char(
                r.data[r.pos + len(kw)] if r.pos + len(kw) < len(r.data) else -1
            ):
                keyword = kw
                r.pos += len(kw)
                break
        if keyword is None:
            raise r.error("expected def/exists/match/is/isa/block/local/if/on after '<'", at=start)
        r.skip_layout()
        if keyword in ("if", "on"):
            negated = r.take(b"!")
            flag = r.name("flag name")
            if keyword == "if":
                r.skip_layout()
                r.expect(b">", "'>'")
                return IfCond(flag, negated)
            r.skip_layout()
            body = self.parse_choice()
            r.skip_layout()
            r.expect(b">", "'>'")
            return OnCond(flag, body, negated)
        table = r.name("table name")
        if keyword in ("exists", "match", "is", "isa"):
            r.skip_layout()
            r.expect(b">", "'>'")
            return {
                "exists": SymbolExists,
                "match": SymbolMatch,
                "is": SymbolIs,
                "isa": SymbolIsa,
            }[keyword](table)
        r.skip_layout()
        body = self.parse_choice()
        r.skip_layout()
        r.expect(b">", "'>'")
        return {"def": SymbolDef, "block": BlockScope, "local": LocalScope}[keyword](table, body)


def parse_expression(text: str | bytes) -> Expression:
    """Parse a single expression with the same rules as production bodies.

    Nonterminal references are not resolved here; that happens at grammar
    level.
    """
    data = text.encode("utf-8") if isinstance(text, str) else text
    reader = _Reader(data)
    reader.skip_layout()
    expr = _ExpressionParser(reader).parse_choice()
    reader.skip_layout()
    if not reader.eof():
        raise reader.error("trailing input after expression")
    return expr


def parse_grammar_text(text: str | bytes, validate: bool = True) -> Grammar:
    """Parse grammar source into a Grammar.

    Productions keep source order; the first production is the start unless
    an ``@start`` directive overrides it. With ``validate`` (the default) the
    result must pass static validation, else GrammarInvalidError is raised.
    """
    if isinstance(text, str):
        data = text.encode("utf-8")
    else:
        try:
            text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise GrammarSyntaxError(
                Diagnostic("error", E_SYNTAX, None, None, f"grammar is not valid UTF-8: {exc}")
            ) from None
        data = text
    reader = _Reader(data)
    parser = _ExpressionParser(reader)
    productions: dict[str, Expression] = {}
    spans: dict[str, SourceSpan] = {}
    start_override: str | None = None

    reader.skip_layout()
    while not reader.eof():
        if data.startswith(b"@start", reader.pos) and not _is_name_char(
            data[reader.pos + 6] if reader.pos + 6 < len(data) else -1
        ):
            reader.pos += 6
            reader.skip_layout()
            start_override = reader.production_name()
            reader.skip_layout()
            continue
        if reader.peek() == 0x40:
            raise reader.error("unknown directive")
        header_at = reader.pos
        name = reader.production_name()
        span = reader.span(header_at, reader.pos - header_at)
        reader.skip_layout()
        reader.expect(b"=", "'=' after production name")
        reader.skip_layout()
        body = parser.parse_choice()
        if name in productions:
            raise reader.error(f"production '{name}' is defined twice", at=header_at)
        productions[name] = body
        spans[name] = span
        reader.skip_layout()

    if not productions:
        raise reader.error("grammar contains no productions")
    if start_override is not None and start_override not in productions:
        raise reader.error(f"@start names unknown production '{start_override}'")
    grammar = Grammar.make(productions, start_override or next(iter(productions)), spans)
    if validate:
        diagnostics = analysis.validate(grammar)
        if analysis.has_errors(diagnostics):
            raise GrammarInvalidError(diagnostics)
    return grammar


def load_grammar(path) -> Grammar:
    """Read and parse a ``.nez`` grammar file."""
    with open(path, "rb") as fh:
        return parse_grammar_text(fh.read())
