"""Entity indexing and per-predicate tensor materialization.

Binary predicates become sparse n x n matrices in CSR layout, unary
predicates dense vectors, propositional predicates scalars, and predicates
with a numeric last argument a pair of (value, weight) vectors. Numeric
values never enter the entity index.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .language import Constant, Fact, Number, Program
from .validate import attribute_predicates

BINARY = "binary"
UNARY = "unary"
PROPOSITIONAL = "propositional"
ATTRIBUTE = "attribute"

DENSE_INIT_LOW, DENSE_INIT_HIGH = -0.5, 0.5


class UnknownEntityError(Exception):
    def __init__(self, name: str):
        super().__init__(f"unknown entity {name!r}; it does not occur in the program")
        self.name = name


class StoreError(Exception):
    pass


@dataclass
class EntityIndex:
    names: list[str] = field(default_factory=list)
    positions: dict[str, int] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.names)

    def add(self, name: str) -> int:
        if name not in self.positions:
            self.positions[name] = len(self.names)
            self.names.append(name)
        return self.positions[name]

    def __contains__(self, name: str) -> bool:
        return name in self.positions

    def index_of(self, name: str) -> int:
        try:
            return self.positions[name]
        except KeyError:
            raise UnknownEntityError(name) from None


@dataclass
class PredicateTensor:
    signature: tuple[str, int]
    kind: str
    trainable: bool = False
    matrix: sparse.csr_matrix | None = None
    vector: np.ndarray | None = None
    scalar: np.ndarray | None = None  # 0-d array so in-place updates stick
    values: np.ndarray | None = None
    weights: np.ndarray | None = None
    _diag_positions: np.ndarray | None = field(default=None, repr=False)

    @property
    def name(self) -> str:
        return f"{self.signature[0]}/{self.signature[1]}"

    @property
    def param_array(self) -> np.ndarray:
        """The flat array of trainable coefficients for this tensor."""
        if self.kind == BINARY:
            return self.matrix.data
        if self.kind == UNARY:
            return self.vector
        if self.kind == ATTRIBUTE:
            return self.weights
        return self.scalar

    def diag_positions(self) -> np.ndarray:
        """CSR data index of each diagonal entry, -1 where absent."""
        if self._diag_positions is None:
            m = self.matrix
            pos = np.full(m.shape[0], -1, dtype=np.int64)
            for i in range(m.shape[0]):
                lo, hi = m.indptr[i], m.indptr[i + 1]
                hits = np.nonzero(m.indices[lo:hi] == i)[0]
                if hits.size:
                    pos[i] = lo + hits[0]
            self._diag_positions = pos
        return self._diag_positions


def _collect_entities(program: Program) -> EntityIndex:
    index = EntityIndex()
    for fact in program.facts:
        for term in fact.atom.terms:
            if isinstance(term, Constant):
                index.add(term.name)
    for rule in program.rules:
        for atom in (rule.head, *rule.body):
            for term in atom.terms:
                if isinstance(term, Constant):
                    index.add(term.name)
    return index


def build_store(
    program: Program, seed: int = 0
) -> tuple[EntityIndex, dict[tuple[str, int], PredicateTensor]]:
    """Materialize every stored predicate as exactly one tensor kind.

    ``seed`` drives the uniform [-0.5, 0.5) initialization used for
    ``#learnable(p/k, dense)`` coordinates that no declared fact covers.
    """
    index = _collect_entities(program)
    n = index.n
    attrs = attribute_predicates(program)
    learnable = program.learnable()

    facts_by_sig: dict[tuple[str, int], list[Fact]] = {}
    for fact in program.facts:
        facts_by_sig.setdefault(fact.atom.signature, []).append(fact)

    rng = np.random.default_rng(seed)
    tensors: dict[tuple[str, int], PredicateTensor] = {}

    sigs = list(facts_by_sig)
    for sig in learnable:
        if sig not in facts_by_sig:
            sigs.append(sig)

    for sig in sigs:
        facts = facts_by_sig.get(sig, [])
        directive = learnable.get(sig)
        trainable = directive is not None
        dense = directive.dense if directive else False
        arity = sig[1]

        if sig in attrs:
            values = np.zeros(n)
            weights = np.zeros(n)
            for fact in facts:
                i = index.index_of(fact.atom.terms[0].name)
                values[i] = fact.atom.terms[-1].value
                weights[i] = fact.weight
            tensors[sig] = PredicateTensor(
                sig, ATTRIBUTE, trainable, values=values, weights=weights
            )
        elif arity == 2:
            entries: dict[tuple[int, int], float] = {}
            for fact in facts:
                i = index.index_of(fact.atom.terms[0].name)
                j = index.index_of(fact.atom.terms[1].name)
                entries[(i, j)] = fact.weight
            if not trainable:
                entries = {k: w for k, w in entries.items() if w != 0.0}
            if dense:
                data = rng.uniform(DENSE_INIT_LOW, DENSE_INIT_HIGH, size=n * n)
                rows = np.repeat(np.arange(n), n)
                cols = np.tile(np.arange(n), n)
                for (i, j), w in entries.items():
                    data[i * n + j] = w
            else:
                coords = sorted(entries)
                rows = np.array([c[0] for c in coords], dtype=np.int64)
                cols = np.array([c[1] for c in coords], dtype=np.int64)
                data = np.array([entries[c] for c in coords], dtype=np.float64)
            matrix = sparse.csr_matrix((data, (rows, cols)), shape=(n, n))
            matrix.sort_indices()
            tensors[sig] = PredicateTensor(sig, BINARY, trainable, matrix=matrix)
        elif arity == 1:
            if dense:
                vector = rng.uniform(DENSE_INIT_LOW, DENSE_INIT_HIGH, size=n)
            else:
                vector = np.zeros(n)
            for fact in facts:
                vector[index.index_of(fact.atom.terms[0].name)] = fact.weight
            tensors[sig] = PredicateTensor(sig, UNARY, trainable, vector=vector)
        else:
            scalar = np.zeros(())
            for fact in facts:
                scalar[()] = fact.weight
            tensors[sig] = PredicateTensor(sig, PROPOSITIONAL, trainable, scalar=scalar)

    return index, tensors


def one_hot(index: EntityIndex, name: str) -> np.ndarray:
    """One-hot row vector for a known entity; unknown names are an error."""
    vec = np.zeros(index.n)
    vec[index.index_of(name)] = 1.0
    return vec


def transpose_tensor(tensor: PredicateTensor) -> PredicateTensor:
    """Transposed copy of a binary tensor, used to answer inverted queries."""
    if tensor.kind != BINARY:
        raise StoreError(f"cannot transpose non-binary tensor {tensor.name}")
    transposed = tensor.matrix.T.tocsr()
    transposed.sort_indices()
    return PredicateTensor(
        tensor.signature, BINARY, tensor.trainable, matrix=transposed
    )
