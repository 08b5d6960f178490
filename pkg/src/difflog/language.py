"""AST for weighted logic programs and the pretty-printer that inverts the parser.

A program is a list of weighted facts, Horn-clause rules and ``#`` directives.
Structural equality ignores source positions, so ``parse(emit(p)) == p`` holds
for every valid program ``p``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

Pos = tuple[int, int]  # 1-based (line, column)

DEFAULT_RECURSION_DEPTH = 1
DEFAULT_AND_COMBINER = "mul"
DEFAULT_OR_COMBINER = "sum"


def format_number(value: float) -> str:
    """Render a float with 17 significant digits so it re-parses exactly."""
    return f"{value:.17g}"


@dataclass(frozen=True)
class Constant:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Variable:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Number:
    value: float

    def __str__(self) -> str:
        return format_number(self.value)


Term = Constant | Variable | Number


@dataclass(frozen=True)
class Atom:
    predicate: str
    terms: tuple[Term, ...] = ()
    pos: Pos | None = field(default=None, compare=False, repr=False)

    @property
    def arity(self) -> int:
        return len(self.terms)

    @property
    def signature(self) -> tuple[str, int]:
        return (self.predicate, len(self.terms))

    def is_ground(self) -> bool:
        return not any(isinstance(t, Variable) for t in self.terms)

    def __str__(self) -> str:
        if not self.terms:
            return self.predicate
        return f"{self.predicate}({', '.join(str(t) for t in self.terms)})"


@dataclass(frozen=True)
class Fact:
    atom: Atom
    weight: float = 1.0
    pos: Pos | None = field(default=None, compare=False, repr=False)

    def __str__(self) -> str:
        if self.weight == 1.0:
            return f"{self.atom}."
        return f"{format_number(self.weight)}::{self.atom}."


@dataclass(frozen=True)
class Rule:
    head: Atom
    body: tuple[Atom, ...]
    pos: Pos | None = field(default=None, compare=False, repr=False)

    def __str__(self) -> str:
        body = ", ".join(str(a) for a in self.body)
        return f"{self.head} :- {body}."


@dataclass(frozen=True)
class LearnableDirective:
    predicate: str
    arity: int
    dense: bool = False
    pos: Pos | None = field(default=None, compare=False, repr=False)

    def __str__(self) -> str:
        extra = ", dense" if self.dense else ""
        return f"#learnable({self.predicate}/{self.arity}{extra})."


@dataclass(frozen=True)
class FunctionDirective:
    predicate: str
    arity: int
    builtin: str
    pos: Pos | None = field(default=None, compare=False, repr=False)

    def __str__(self) -> str:
        return f"#function({self.predicate}/{self.arity}, {self.builtin})."


@dataclass(frozen=True)
class RecursionDepthDirective:
    depth: int
    pos: Pos | None = field(default=None, compare=False, repr=False)

    def __str__(self) -> str:
        return f"#recursion_depth({self.depth})."


@dataclass(frozen=True)
class CombinerDirective:
    and_name: str
    or_name: str
    pos: Pos | None = field(default=None, compare=False, repr=False)

    def __str__(self) -> str:
        return f"#combiner(and={self.and_name}, or={self.or_name})."


Directive = (
    LearnableDirective
    | FunctionDirective
    | RecursionDepthDirective
    | CombinerDirective
)


@dataclass
class Program:
    facts: list[Fact] = field(default_factory=list)
    rules: list[Rule] = field(default_factory=list)
    directives: list[Directive] = field(default_factory=list)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Program):
            return NotImplemented
        return (
            self.facts == other.facts
            and self.rules == other.rules
            and self.directives == other.directives
        )

    def is_empty(self) -> bool:
        return not self.facts and not self.rules

    def learnable(self) -> dict[tuple[str, int], LearnableDirective]:
        return {
            (d.predicate, d.arity): d
            for d in self.directives
            if isinstance(d, LearnableDirective)
        }

    def functions(self) -> dict[tuple[str, int], FunctionDirective]:
        return {
            (d.predicate, d.arity): d
            for d in self.directives
            if isinstance(d, FunctionDirective)
        }

    def recursion_depth(self) -> int:
        depth = DEFAULT_RECURSION_DEPTH
        for d in self.directives:
            if isinstance(d, RecursionDepthDirective):
                depth = d.depth
        return depth

    def combiners(self) -> tuple[str, str]:
        and_name, or_name = DEFAULT_AND_COMBINER, DEFAULT_OR_COMBINER
        for d in self.directives:
            if isinstance(d, CombinerDirective):
                and_name, or_name = d.and_name, d.or_name
        return and_name, or_name

    def rules_for(self, signature: tuple[str, int]) -> list[Rule]:
        return [r for r in self.rules if r.head.signature == signature]


def emit_program(program: Program) -> str:
    """Print a program back to source text.

    Directives come first, then facts, then rules, each in list order;
    weights of exactly 1.0 are omitted.
    """
    lines: list[str] = []
    for d in program.directives:
        lines.append(str(d))
    for f in program.facts:
        lines.append(str(f))
    for r in program.rules:
        lines.append(str(r))
    return "\n".join(lines) + ("\n" if lines else "")


def with_fact_weight(fact: Fact, weight: float) -> Fact:
    return replace(fact, weight=weight)
