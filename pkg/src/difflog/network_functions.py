"""Pluggable AND/OR combiners selected by the ``#combiner`` directive."""
from __future__ import annotations

from functools import reduce
from typing import Callable

from .autodiff import Node, Tape

PairCombiner = Callable[[Tape, Node, Node], Node]

AND_COMBINERS: dict[str, PairCombiner] = {
    "mul": Tape.mul,
    "min": Tape.minimum,
}

OR_COMBINERS: dict[str, PairCombiner] = {
    "sum": Tape.add,
    "max": Tape.maximum,
}


def combine(tape: Tape, fn: PairCombiner, nodes: list[Node]) -> Node:
    """Left fold of a pairwise combiner over a nonempty node list."""
    if not nodes:
        raise ValueError("cannot combine an empty list of values")
    return reduce(lambda a, b: fn(tape, a, b), nodes)
