"""Labelled example files and negative sampling.

Example files carry one ground atom per line, prefixed by ``+`` or ``-``:

    + advisedby(person1, person2).
    - advisedby(person1, person3).

``%`` starts a comment; blank lines are skipped.
"""
from __future__ import annotations

import random

from .language import Atom, Constant, Program
from .parser import ParseError, _Parser, tokenize
from .training import DataError, Example


def parse_examples(source: str) -> list[Example]:
    examples: list[Example] = []
    for lineno, raw in enumerate(source.splitlines(), start=1):
        line = raw.split("%", 1)[0].strip()
        if not line:
            continue
        if line[0] not in "+-":
            raise DataError(
                f"line {lineno}: examples must start with '+' or '-', got {line!r}"
            )
        label = 1.0 if line[0] == "+" else 0.0
        body = line[1:].strip()
        if body.endswith("."):
            body = body[:-1]
        try:
            parser = _Parser(tokenize(body))
            atom = parser.parse_atom()
            parser.expect("EOF", "end of line after example atom")
        except ParseError as exc:
            raise DataError(f"line {lineno}: {exc}") from None
        if not atom.is_ground() or atom.arity == 0:
            raise DataError(
                f"line {lineno}: example atoms must be ground with arity >= 1"
            )
        examples.append(Example(atom, label))
    return examples


def emit_examples(examples: list[Example]) -> str:
    return "\n".join(str(ex) for ex in examples) + ("\n" if examples else "")


def generate_lcwa_negatives(
    examples: list[Example], program: Program, per_entity: int, seed: int = 0
) -> list[Example]:
    """Sample negatives under the local closed-world assumption.

    For each first entity of a binary target relation, draw up to
    ``per_entity`` corrupted atoms whose second entity appears somewhere in
    the same relation (knowledge-base facts or positive examples) but not as
    a positive partner of that first entity.
    """
    rng = random.Random(seed)
    candidates: dict[tuple[str, int], set[str]] = {}
    for fact in program.facts:
        sig = fact.atom.signature
        if sig[1] == 2 and isinstance(fact.atom.terms[1], Constant):
            candidates.setdefault(sig, set()).add(fact.atom.terms[1].name)
    positives: dict[tuple[tuple[str, int], str], set[str]] = {}
    firsts: list[tuple[tuple[str, int], str]] = []
    for ex in examples:
        sig = ex.atom.signature
        if sig[1] != 2:
            raise DataError(
                "negative generation supports binary target relations only"
            )
        first, second = (t.name for t in ex.atom.terms)
        if ex.label > 0:
            candidates.setdefault(sig, set()).add(second)
            key = (sig, first)
            positives.setdefault(key, set()).add(second)
            if key not in firsts:
                firsts.append(key)

    negatives: list[Example] = []
    for sig, first in firsts:
        pool = sorted(candidates.get(sig, set()) - positives[(sig, first)])
        if not pool:
            continue
        for second in rng.sample(pool, min(per_entity, len(pool))):
            atom = Atom(sig[0], (Constant(first), Constant(second)))
            negatives.append(Example(atom, 0.0))
    return negatives
