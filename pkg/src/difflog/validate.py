"""Semantic checks that run after parsing and before compilation."""
from __future__ import annotations

from dataclasses import dataclass

from .autodiff import BUILTINS
from .language import (
    Atom,
    CombinerDirective,
    Constant,
    FunctionDirective,
    LearnableDirective,
    Number,
    Pos,
    Program,
    RecursionDepthDirective,
    Variable,
)
from .network_functions import AND_COMBINERS, OR_COMBINERS

ERROR = "error"
WARNING = "warning"


@dataclass(frozen=True)
class Diagnostic:
    severity: str
    message: str
    pos: Pos | None = None

    def __str__(self) -> str:
        where = f"{self.pos[0]}:{self.pos[1]}: " if self.pos else ""
        return f"{where}{self.severity}: {self.message}"


def has_errors(diagnostics: list[Diagnostic]) -> bool:
    return any(d.severity == ERROR for d in diagnostics)


def attribute_predicates(program: Program) -> set[tuple[str, int]]:
    """Signatures whose facts carry a numeric last argument."""
    attrs: set[tuple[str, int]] = set()
    for fact in program.facts:
        if fact.atom.terms and isinstance(fact.atom.terms[-1], Number):
            attrs.add(fact.atom.signature)
    return attrs


def validate_program(program: Program) -> list[Diagnostic]:
    """Collect diagnostics; callers should refuse to compile on errors."""
    diags: list[Diagnostic] = []
    functions = program.functions()
    learnable = program.learnable()
    attrs = attribute_predicates(program)

    # Arity consistency by predicate name across all uses.
    arities: dict[str, tuple[int, Pos | None]] = {}

    def check_arity(name: str, arity: int, pos: Pos | None) -> None:
        seen = arities.get(name)
        if seen is None:
            arities[name] = (arity, pos)
        elif seen[0] != arity:
            diags.append(
                Diagnostic(
                    ERROR,
                    f"predicate {name!r} used with arity {arity} "
                    f"but previously with arity {seen[0]}",
                    pos,
                )
            )

    for fact in program.facts:
        check_arity(fact.atom.predicate, fact.atom.arity, fact.pos)
    for rule in program.rules:
        check_arity(rule.head.predicate, rule.head.arity, rule.head.pos)
        for atom in rule.body:
            check_arity(atom.predicate, atom.arity, atom.pos)
    for d in program.directives:
        if isinstance(d, (LearnableDirective, FunctionDirective)):
            check_arity(d.predicate, d.arity, d.pos)

    # Function predicates: registered builtin, unary, no facts, no rules.
    for sig, d in functions.items():
        if d.builtin not in BUILTINS:
            diags.append(
                Diagnostic(ERROR, f"unknown builtin {d.builtin!r}", d.pos)
            )
        if d.arity != 1:
            diags.append(
                Diagnostic(
                    ERROR,
                    f"function predicates must be unary, got {d.predicate}/{d.arity}",
                    d.pos,
                )
            )
        if sig in learnable:
            diags.append(
                Diagnostic(
                    ERROR,
                    f"predicate {d.predicate}/{d.arity} cannot be both a "
                    "function and learnable",
                    d.pos,
                )
            )
    fact_sigs: dict[tuple[str, int], int] = {}
    for fact in program.facts:
        fact_sigs[fact.atom.signature] = fact_sigs.get(fact.atom.signature, 0) + 1
        if fact.atom.signature in functions:
            diags.append(
                Diagnostic(
                    ERROR,
                    f"function predicate {fact.atom.predicate}/{fact.atom.arity} "
                    "cannot have stored facts",
                    fact.pos,
                )
            )
    for rule in program.rules:
        if rule.head.signature in functions:
            diags.append(
                Diagnostic(
                    ERROR,
                    f"function predicate {rule.head.predicate}/{rule.head.arity} "
                    "cannot be defined by rules",
                    rule.pos,
                )
            )
        if rule.head.signature in attrs:
            diags.append(
                Diagnostic(
                    ERROR,
                    f"attribute predicate {rule.head.predicate}/{rule.head.arity} "
                    "cannot be a rule head",
                    rule.pos,
                )
            )
        for atom in rule.body:
            if atom.arity > 2 and atom.signature not in functions:
                diags.append(
                    Diagnostic(
                        ERROR,
                        f"body literal {atom} has arity {atom.arity}; only "
                        "unary and binary body literals are supported",
                        atom.pos,
                    )
                )

    # Mixed attribute predicates: some facts numeric, some symbolic.
    for fact in program.facts:
        sig = fact.atom.signature
        if sig in attrs and not (
            fact.atom.terms and isinstance(fact.atom.terms[-1], Number)
        ):
            diags.append(
                Diagnostic(
                    ERROR,
                    f"predicate {sig[0]}/{sig[1]} mixes numeric and symbolic "
                    "last arguments",
                    fact.pos,
                )
            )

    # A variable may not serve both as an attribute value and as an entity.
    for rule in program.rules:
        value_vars: dict[str, Atom] = {}
        entity_vars: dict[str, Atom] = {}
        for atom in (rule.head, *rule.body):
            if atom.signature in functions:
                continue  # function arguments are value-agnostic
            is_attr = atom.signature in attrs
            for i, term in enumerate(atom.terms):
                if not isinstance(term, Variable):
                    continue
                if is_attr and i == atom.arity - 1:
                    value_vars.setdefault(term.name, atom)
                else:
                    entity_vars.setdefault(term.name, atom)
        for name in sorted(set(value_vars) & set(entity_vars)):
            diags.append(
                Diagnostic(
                    ERROR,
                    f"variable {name} is used both as an attribute value "
                    f"(in {value_vars[name]}) and as an entity "
                    f"(in {entity_vars[name]})",
                    rule.pos,
                )
            )

    # Learnable predicates without facts train nothing unless dense.
    for sig, d in learnable.items():
        if not d.dense and fact_sigs.get(sig, 0) == 0:
            diags.append(
                Diagnostic(
                    WARNING,
                    f"learnable predicate {d.predicate}/{d.arity} declares no "
                    "facts; nothing will train (consider the dense flag)",
                    d.pos,
                )
            )
        if d.dense and d.arity > 2:
            diags.append(
                Diagnostic(ERROR, "dense learnable requires arity <= 2", d.pos)
            )

    # Duplicate global directives: last one wins, but flag the repetition.
    for cls, label in (
        (RecursionDepthDirective, "#recursion_depth"),
        (CombinerDirective, "#combiner"),
    ):
        found = [d for d in program.directives if isinstance(d, cls)]
        for extra in found[1:]:
            diags.append(
                Diagnostic(
                    WARNING, f"duplicate {label} directive; the last one wins",
                    extra.pos,
                )
            )
    for d in program.directives:
        if isinstance(d, CombinerDirective):
            if d.and_name not in AND_COMBINERS:
                diags.append(
                    Diagnostic(ERROR, f"unknown AND combiner {d.and_name!r}", d.pos)
                )
            if d.or_name not in OR_COMBINERS:
                diags.append(
                    Diagnostic(ERROR, f"unknown OR combiner {d.or_name!r}", d.pos)
                )

    return diags
