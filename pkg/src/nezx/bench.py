"""Benchmark harness: synthetic input generators, timed runs, linearity fit.

Wall-clock time is informational (it varies with the host); the deterministic
step counter is the primary cost signal. Generators are seeded and emit
byte-identical output for identical (kind, size, seed) arguments. Nesting
depth is bounded so even multi-kilobyte inputs parse within a modest Python
recursion budget.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass

from .engine import EngineOptions, Parser, ParseOutcome
from .expressions import Grammar
from .packrat import PackratParser

E_UNKNOWN_GENERATOR = "E_UNKNOWN_GENERATOR"
E_PARSE_FAILED = "E_PARSE_FAILED"

CSV_HEADER = "input_id,bytes,mode,steps,nanos"

#: generator id -> (corpus grammar file, start production)
GENERATORS = {
    "xml-nested": ("xml.nez", "Xml"),
    "typedef-C-mini": ("c-typedef.nez", "Program"),
    "heredoc-mini": ("heredoc.nez", "Program"),
    "indent-mini": ("indent.nez", "Program"),
}


class BenchParseFailure(Exception):
    pass


class UnknownGenerator(Exception):
    pass


@dataclass(frozen=True)
class BenchRecord:
    input_id: str
    size: int
    elapsed_ns: int
    mode: str
    steps: int

    def csv_row(self) -> str:
        return f"{self.input_id},{self.size},{self.mode},{self.steps},{self.elapsed_ns}"


def _gen_xml(size: int, rng: random.Random) -> bytes:
    # Cost of one nesting level with an n-byte name is 2n + 5 bytes.
    if size <= 280:
        depth = max(1, size // 7)
        extra = (size - depth * 7) // 2
        names = [chr(ord("a") + i % 26) for i in range(depth)]
        names[-1] += "a" * extra
    else:
        depth = 40
        budget = (size - 5 * depth) // 2
        base, rem = divmod(budget, depth)
        names = []
        for i in range(depth):
            length = base + (1 if i < rem else 0)
            first = chr(ord("a") + rng.randrange(26))
            names.append(first + "".join(rng.choice("abcdefgh0123456789") for _ in range(length - 1)))
    out = []
    for name in names:
        out.append(f"<{name}>")
    for name in reversed(names):
        out.append(f"</{name}>")
    return "".join(out).encode()


def _gen_typedef(size: int, rng: random.Random) -> bytes:
    lines = []
    total = 0
    types: list[str] = []
    variables: list[str] = []
    counter = 0

    def emit(line: str) -> None:
        nonlocal total
        lines.append(line)
        total += len(line) + 1

    while total < size:
        counter += 1
        roll = rng.random()
        if roll < 0.25 or not types:
            name = f"t{counter}"
            base = rng.choice(["int", "long", "float", "double"] + types[-3:])
            emit(f"typedef {base} {name};")
            types.append(name)
        elif roll < 0.55:
            name = f"v{counter}"
            base = rng.choice(["int", "double"] + types[-3:])
            emit(f"{base} {name} = {rng.randrange(1000)};")
            variables.append(name)
        elif roll < 0.8 and variables:
            emit(f"{rng.choice(variables[-5:])} = {rng.randrange(1000)};")
        else:
            # Braced scope with a few declarations; names stay globally
            # unique to sidestep the duplicated-name limitation.
            emit("{")
            for _ in range(rng.randrange(1, 4)):
                counter += 1
                base = rng.choice(["int", "double"] + types[-2:])
                emit(f"  {base} s{counter} = {rng.randrange(100)};")
                emit(f"  s{counter} = {rng.randrange(100)};")
            emit("}")
    return ("\n".join(lines) + "\n").encode()


def _gen_heredoc(size: int, rng: random.Random) -> bytes:
    lines = []
    total = 0
    counter = 0

    def emit(line: str) -> None:
        nonlocal total
        lines.append(line)
        total += len(line) + 1

    def body() -> None:
        for _ in range(rng.randrange(1, 5)):
            words = " ".join(rng.choice(["lorem", "ipsum", "dolor", "sit"]) for _ in range(rng.randrange(2, 6)))
            emit(f"  {words}")

    while total < size:
        counter += 1
        roll = rng.random()
        if roll < 0.3:
            emit(f"puts plain line {counter}")
        elif roll < 0.75:
            delim = f"EOF{counter}"
            emit(f"puts <<{delim}")
            body()
            emit(delim)
        else:
            first, second = f"ONE{counter}", f"TWO{counter}"
            emit(f"puts <<{first}, <<{second}")
            body()
            emit(first)
            body()
            emit(second)
    return ("\n".join(lines) + "\n").encode()


def _gen_indent(size: int, rng: random.Random) -> bytes:
    lines = []
    total = 0
    counter = 0

    def emit(line: str) -> None:
        nonlocal total
        lines.append(line)
        total += len(line) + 1

    def assign(indent: str) -> None:
        nonlocal counter
        counter += 1
        if rng.random() < 0.15:
            emit(f"{indent}a{counter} = ({rng.randrange(100)} +")
            emit(f" {rng.randrange(100)})")
        else:
            emit(f"{indent}a{counter} = {rng.randrange(100)} + {rng.randrange(100)}")

    def block(indent: str, depth: int) -> None:
        nonlocal counter
        first = True
        for _ in range(rng.randrange(1, 4)):
            # A suite must never end up empty, so the first statement is
            # emitted even when the byte budget has just run out.
            if not first and total >= size:
                return
            first = False
            counter += 1
            if depth < 4 and total < size and rng.random() < 0.4:
                keyword = rng.choice(["if", "while"])
                emit(f"{indent}{keyword} c{counter}:")
                block(indent + "  ", depth + 1)
            else:
                assign(indent)

    while total < size:
        block("", 0)
    return ("\n".join(lines) + "\n").encode()


_GENERATOR_FNS = {
    "xml-nested": _gen_xml,
    "typedef-C-mini": _gen_typedef,
    "heredoc-mini": _gen_heredoc,
    "indent-mini": _gen_indent,
}


def generate_input(kind: str, size: int, seed: int = 0) -> bytes:
    """Deterministic synthetic program of roughly `size` bytes, valid for the
    corpus grammar the generator id names."""
    if kind not in _GENERATOR_FNS:
        raise UnknownGenerator(f"{E_UNKNOWN_GENERATOR}: {kind!r}")
    if size <= 0:
        raise ValueError("size must be positive")
    rng = random.Random(f"{kind}:{size}:{seed}")
    return _GENERATOR_FNS[kind](size, rng)


def bench_run(
    grammar: Grammar,
    inputs: list[tuple[str, bytes]],
    mode: str = "packrat",
    repetitions: int = 3,
    start: str | None = None,
    options: EngineOptions | None = None,
) -> list[BenchRecord]:
    """Best-of-repetitions timing per input; steps are deterministic."""
    cls = PackratParser if mode == "packrat" else Parser
    parser = cls(grammar, options or EngineOptions())
    records = []
    for input_id, data in inputs:
        best_ns = None
        outcome: ParseOutcome | None = None
        for _ in range(max(1, repetitions)):
            t0 = time.perf_counter_ns()
            outcome = parser.parse(data, start)
            elapsed = time.perf_counter_ns() - t0
            if best_ns is None or elapsed < best_ns:
                best_ns = elapsed
        assert outcome is not None
        if not outcome.success:
            raise BenchParseFailure(
                f"{E_PARSE_FAILED}: input {input_id!r} fails at {outcome.furthest}"
            )
        records.append(BenchRecord(input_id, len(data), best_ns, mode, outcome.steps))
    return records


def to_csv(records: list[BenchRecord]) -> str:
    return "\n".join([CSV_HEADER, *(r.csv_row() for r in records)]) + "\n"


def fit_line(xs: list[float], ys: list[float]) -> tuple[float, float, float]:
    """Least-squares line fit: returns (slope, intercept, r_squared)."""
    n = len(xs)
    mean_x = sum(xs) / n
    mean_y = sum(ys) / n
    sxx = sum((x - mean_x) ** 2 for x in xs)
    sxy = sum((x - mean_x) * (y - mean_y) for x, y in zip(xs, ys))
    slope = sxy / sxx if sxx else 0.0
    intercept = mean_y - slope * mean_x
    ss_res = sum((y - (slope * x + intercept)) ** 2 for x, y in zip(xs, ys))
    ss_tot = sum((y - mean_y) ** 2 for y in ys)
    r_squared = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return slope, intercept, r_squared
