"""Fixture grammars with golden accept/reject cases.

Each ``<name>.nez`` grammar ships with a ``<name>.cases.json`` manifest, one
JSON document listing cases::

    {"grammar": "xml.nez",
     "cases": [{"name": ..., "start": ..., "input": ..., "flags": {...},
                "require_eof": ..., "expect": "accept"|"reject"|"note",
                "consumed": ..., "tree_digest": ..., "exercises": [...]}]}

``input`` is UTF-8 text (``input_file`` may name a sibling file instead);
``consumed`` defaults to the full input length for accepts; ``expect: note``
cases document known limitations -- the runner records their outcome without
asserting it. Expectations are mode-independent: naive and packrat evaluation
must both satisfy them.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from ..analysis import has_errors, validate
from ..dsl import parse_grammar_text
from ..engine import EngineOptions, Parser, ParseOutcome
from ..expressions import Grammar
from ..packrat import PackratParser

E_FIXTURE_MALFORMED = "E_FIXTURE_MALFORMED"

GRAMMAR_FILES = (
    "xml.nez",
    "ws.nez",
    "c-typedef.nez",
    "heredoc.nez",
    "indent.nez",
    "await.nez",
    "anbncn.nez",
)


class FixtureError(Exception):
    pass


@dataclass(frozen=True)
class GoldenCase:
    grammar_file: str
    name: str
    input: bytes
    start: str | None = None
    flags: dict[str, bool] = field(default_factory=dict)
    require_eof: bool = False
    expect: str = "accept"  # accept | reject | note
    consumed: int | None = None
    tree_digest: str | None = None
    exercises: tuple[str, ...] = ()
    comment: str | None = None

    def expected_consumed(self) -> int:
        return len(self.input) if self.consumed is None else self.consumed


@dataclass
class CaseResult:
    case: GoldenCase
    passed: bool
    outcome: ParseOutcome | None
    detail: str


@dataclass
class CorpusReport:
    mode: str
    results: list[CaseResult]

    @property
    def failed(self) -> list[CaseResult]:
        return [r for r in self.results if not r.passed]

    @property
    def ok(self) -> bool:
        return not self.failed


def corpus_dir() -> Path:
    return Path(__file__).parent


def load_grammar(filename: str) -> Grammar:
    path = corpus_dir() / filename
    grammar = parse_grammar_text(path.read_bytes())
    return grammar


def load_corpus() -> list[GoldenCase]:
    """All golden cases; every referenced grammar must validate cleanly."""
    cases: list[GoldenCase] = []
    base = corpus_dir()
    for grammar_file in GRAMMAR_FILES:
        manifest_path = base / (grammar_file.rsplit(".", 1)[0] + ".cases.json")
        try:
            manifest = json.loads(manifest_path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise FixtureError(f"{E_FIXTURE_MALFORMED}: {manifest_path.name}: {exc}") from None
        if manifest.get("grammar") != grammar_file:
            raise FixtureError(
                f"{E_FIXTURE_MALFORMED}: {manifest_path.name} names wrong grammar"
            )
        grammar = load_grammar(grammar_file)
        diagnostics = validate(grammar)
        if has_errors(diagnostics):
            raise FixtureError(f"{E_FIXTURE_MALFORMED}: {grammar_file} does not validate")
        for raw in manifest["cases"]:
            if "input_file" in raw:
                data = (base / raw["input_file"]).read_bytes()
            else:
                data = raw["input"].encode("utf-8")
            expect = raw.get("expect", "accept")
            if expect not in ("accept", "reject", "note"):
                raise FixtureError(f"{E_FIXTURE_MALFORMED}: bad expectation {expect!r}")
            cases.append(
                GoldenCase(
                    grammar_file=grammar_file,
                    name=raw["name"],
                    input=data,
                    start=raw.get("start"),
                    flags=dict(raw.get("flags", {})),
                    require_eof=raw.get("require_eof", False),
                    expect=expect,
                    consumed=raw.get("consumed"),
                    tree_digest=raw.get("tree_digest"),
                    exercises=tuple(raw.get("exercises", ())),
                    comment=raw.get("comment"),
                )
            )
    return cases


def run_case(case: GoldenCase, mode: str = "naive", grammar: Grammar | None = None) -> CaseResult:
    if grammar is None:
        grammar = load_grammar(case.grammar_file)
    options = EngineOptions(require_eof=case.require_eof, flags=case.flags)
    cls = PackratParser if mode == "packrat" else Parser
    outcome = cls(grammar, options).parse(case.input, case.start)

    if case.expect == "note":
        detail = f"note: {'accepts' if outcome.success else 'rejects'}"
        if case.comment:
            detail += f" ({case.comment})"
        return CaseResult(case, True, outcome, detail)
    if case.expect == "accept":
        if not outcome.success:
            return CaseResult(case, False, outcome, f"expected accept, failed at {outcome.furthest}")
        if outcome.consumed != case.expected_consumed():
            return CaseResult(
                case, False, outcome,
                f"consumed {outcome.consumed}, expected {case.expected_consumed()}",
            )
        if case.tree_digest is not None and outcome.tree_digest() != case.tree_digest:
            return CaseResult(case, False, outcome, "tree digest mismatch")
        return CaseResult(case, True, outcome, "accepted")
    if outcome.success:
        return CaseResult(case, False, outcome, f"expected reject, consumed {outcome.consumed}")
    return CaseResult(case, True, outcome, "rejected")


def run_corpus(mode: str = "naive") -> CorpusReport:
    """Evaluate every golden case in the given mode."""
    grammars: dict[str, Grammar] = {}
    results = []
    for case in load_corpus():
        grammar = grammars.get(case.grammar_file)
        if grammar is None:
            grammar = grammars[case.grammar_file] = load_grammar(case.grammar_file)
        results.append(run_case(case, mode, grammar))
    return CorpusReport(mode, results)


def main(argv: list[str] | None = None) -> int:
    mode = (argv or sys.argv[1:] or ["naive"])[0]
    report = run_corpus(mode)
    for result in report.results:
        status = "PASS" if result.passed else "FAIL"
        print(f"{status} {result.case.grammar_file}:{result.case.name} -- {result.detail}")
    print(f"{mode}: {len(report.results) - len(report.failed)}/{len(report.results)} cases passed")
    return 0 if report.ok else 1


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
