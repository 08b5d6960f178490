"""Adagrad training on mean squared error, plus AUC-ROC evaluation.

Examples are ground atoms labelled 1.0 (positive) or 0.0 (negative). They
are grouped by target predicate and input entities so one forward pass
scores every labelled output of that input; each epoch accumulates the mean
squared error over all examples and applies one Adagrad step per parameter:
``theta <- theta - lr * g / (sqrt(G) + eps)`` with ``G`` the running sum of
squared gradients. Only stored coordinates of sparse tensors ever update.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .language import Atom, Constant, Fact, Number, Program, Variable
from .network import NetworkGraph, QueryError, query_output
from .store import BINARY, UNARY, ATTRIBUTE, EntityIndex

Signature = tuple[str, int]


class TrainingError(Exception):
    pass


class DataError(Exception):
    pass


@dataclass(frozen=True)
class Example:
    atom: Atom
    label: float

    def __str__(self) -> str:
        sign = "+" if self.label > 0 else "-"
        return f"{sign} {self.atom}."


@dataclass
class TrainConfig:
    epochs: int = 10
    learning_rate: float = 0.1
    epsilon: float = 1e-8
    depth: int = 1
    batch_size: int | None = None  # None: one full-batch step per epoch
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be > 0")


@dataclass
class TrainResult:
    loss_trace: list[float]
    params: dict[str, np.ndarray]


def check_examples(examples: list[Example], index: EntityIndex) -> list[str]:
    """Names referenced by examples that the knowledge base does not index."""
    missing: list[str] = []
    seen: set[str] = set()
    for ex in examples:
        for term in ex.atom.terms:
            if isinstance(term, Constant) and term.name not in index:
                if term.name not in seen:
                    seen.add(term.name)
                    missing.append(term.name)
    return missing


def example_targets(examples: list[Example]) -> list[tuple[Signature, bool]]:
    targets: list[tuple[Signature, bool]] = []
    for ex in examples:
        key = (ex.atom.signature, False)
        if key not in targets:
            targets.append(key)
    return targets


def _group_examples(
    examples: list[Example],
) -> dict[tuple[Signature, tuple[str, ...]], list[Example]]:
    """Group by (predicate, input entities); the last argument is the output."""
    groups: dict[tuple[Signature, tuple[str, ...]], list[Example]] = {}
    for ex in examples:
        terms = ex.atom.terms
        if not terms or any(not isinstance(t, Constant) for t in terms):
            raise DataError(f"examples must be ground atoms, got {ex.atom}")
        inputs = tuple(t.name for t in terms[:-1]) or (terms[0].name,)
        groups.setdefault((ex.atom.signature, inputs), []).append(ex)
    return groups


def _group_query(sig: Signature, inputs: tuple[str, ...]) -> Atom:
    terms = tuple(Constant(name) for name in inputs)
    if sig[1] > 1:
        terms = terms + (Variable("Y"),)
    return Atom(sig[0], terms)


def _score_groups(graph: NetworkGraph, groups: dict, ctx) -> list[tuple]:
    """One (output-vector node, examples) pair per group, deterministic order."""
    scored = []
    for key in sorted(groups):
        sig, inputs = key
        out = query_output(graph, ctx, _group_query(sig, inputs))
        scored.append((out, groups[key]))
    return scored


def train(
    graph: NetworkGraph, examples: list[Example], config: TrainConfig
) -> TrainResult:
    """Fit the graph's learnable tensors to the labelled examples in place."""
    if not examples:
        raise TrainingError("cannot train on an empty example set")
    missing = check_examples(examples, graph.index)
    if missing:
        raise DataError(
            "examples mention entities absent from the knowledge base: "
            + ", ".join(missing)
        )
    groups = _group_examples(examples)
    keys = sorted(groups)
    if config.batch_size is None:
        batches = [keys]
    else:
        size = max(1, config.batch_size)
        batches = [keys[i : i + size] for i in range(0, len(keys), size)]
    n_examples = len(examples)
    accumulators: dict[str, np.ndarray | float] = {}
    trace: list[float] = []

    for epoch in range(config.epochs):
        squared_error = 0.0
        for batch in batches:
            ctx = graph.context()
            tape = ctx.tape
            loss = None
            count = 0
            for key in batch:
                sig, inputs = key
                out = query_output(graph, ctx, _group_query(sig, inputs))
                for ex in groups[key]:
                    target = ex.atom.terms[-1].name
                    pred = tape.pick(out, graph.index.index_of(target))
                    diff = tape.sub(pred, tape.constant(ex.label))
                    term = tape.mul(diff, diff)
                    loss = term if loss is None else tape.add(loss, term)
                    count += 1
            loss = tape.scale(loss, 1.0 / count)
            if not np.isfinite(loss.value):
                raise TrainingError(
                    f"loss became non-finite ({loss.value}) at epoch {epoch}"
                )
            squared_error += loss.value * count
            grads = tape.backward(loss)
            for name in sorted(grads):
                g = grads[name]
                acc = accumulators.get(name, 0.0)
                acc = acc + np.square(g)
                accumulators[name] = acc
                step = config.learning_rate * g / (np.sqrt(acc) + config.epsilon)
                graph.params[name].param_array[...] -= step
        trace.append(float(squared_error / n_examples))
    return TrainResult(
        loss_trace=trace,
        params={name: t.param_array for name, t in graph.params.items()},
    )


# --- metrics -----------------------------------------------------------------


def auc_roc(pos_scores, neg_scores) -> float:
    """Probability a random positive outscores a random negative; ties 0.5."""
    pos = np.asarray(pos_scores, dtype=np.float64)
    neg = np.asarray(neg_scores, dtype=np.float64)
    if pos.size == 0 or neg.size == 0:
        raise ValueError("auc_roc needs at least one score in each class")
    wins = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return float((wins + 0.5 * ties) / (pos.size * neg.size))


def predict(graph: NetworkGraph, examples: list[Example]) -> np.ndarray:
    """Score every example atom, in input order."""
    groups = _group_examples(examples)
    order = {id(ex): i for i, ex in enumerate(examples)}
    scores = np.zeros(len(examples))
    ctx = graph.context()
    for out, group in _score_groups(graph, groups, ctx):
        for ex in group:
            i = graph.index.index_of(ex.atom.terms[-1].name)
            scores[order[id(ex)]] = out.value[i]
    return scores


@dataclass
class EvalReport:
    per_predicate: dict[str, float] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)

    @property
    def arithmetic_average(self) -> float:
        aucs = list(self.per_predicate.values())
        return float(np.mean(aucs)) if aucs else float("nan")

    @property
    def weighted_average(self) -> float:
        if not self.per_predicate:
            return float("nan")
        total = sum(self.counts.values())
        return float(
            sum(self.per_predicate[k] * self.counts[k] for k in self.per_predicate)
            / total
        )

    def as_dict(self) -> dict:
        return {
            "per_predicate": dict(self.per_predicate),
            "weighted_average": self.weighted_average,
            "arithmetic_average": self.arithmetic_average,
        }


def evaluate(graph: NetworkGraph, examples: list[Example]) -> EvalReport:
    """AUC-ROC per target predicate plus count-weighted and plain averages."""
    missing = check_examples(examples, graph.index)
    if missing:
        raise DataError(
            "examples mention entities absent from the knowledge base: "
            + ", ".join(missing)
        )
    scores = predict(graph, examples)
    report = EvalReport()
    by_sig: dict[Signature, tuple[list[float], list[float]]] = {}
    for ex, score in zip(examples, scores):
        pos, neg = by_sig.setdefault(ex.atom.signature, ([], []))
        (pos if ex.label > 0 else neg).append(float(score))
    for sig in sorted(by_sig):
        pos, neg = by_sig[sig]
        name = f"{sig[0]}/{sig[1]}"
        if not pos or not neg:
            raise ValueError(
                f"cannot compute AUC for {name}: needs both positive and "
                "negative examples"
            )
        report.per_predicate[name] = auc_roc(pos, neg)
        report.counts[name] = len(pos) + len(neg)
    return report


# --- weight export ------------------------------------------------------------


def update_program_weights(program: Program, graph: NetworkGraph) -> Program:
    """A copy of the program whose fact weights reflect the trained tensors.

    Facts of frozen predicates are untouched. For dense-initialized learnable
    predicates every stored coordinate is emitted so a re-parse reproduces the
    tensor exactly.
    """
    index = graph.index
    learned = {t.signature: t for t in graph.params.values()}
    dense_sigs = {
        (d.predicate, d.arity)
        for d in program.directives
        if getattr(d, "dense", False)
    }

    facts: list[Fact] = []
    for fact in program.facts:
        sig = fact.atom.signature
        tensor = learned.get(sig)
        if tensor is None:
            facts.append(fact)
            continue
        if sig in dense_sigs:
            continue  # re-emitted in full below
        terms = fact.atom.terms
        if tensor.kind == BINARY:
            i = index.index_of(terms[0].name)
            j = index.index_of(terms[1].name)
            weight = float(tensor.matrix[i, j])
        elif tensor.kind == UNARY:
            weight = float(tensor.vector[index.index_of(terms[0].name)])
        elif tensor.kind == ATTRIBUTE:
            weight = float(tensor.weights[index.index_of(terms[0].name)])
        else:
            weight = float(tensor.scalar)
        facts.append(replace(fact, weight=weight))

    for sig in sorted(dense_sigs):
        tensor = learned.get(sig)
        if tensor is None:
            continue
        if tensor.kind == BINARY:
            m = tensor.matrix.tocoo()
            for i, j, w in zip(m.row, m.col, m.data):
                atom = Atom(sig[0], (Constant(index.names[i]), Constant(index.names[j])))
                facts.append(Fact(atom, float(w)))
        elif tensor.kind == UNARY:
            for i, w in enumerate(tensor.vector):
                facts.append(Fact(Atom(sig[0], (Constant(index.names[i]),)), float(w)))

    return Program(facts=facts, rules=list(program.rules), directives=list(program.directives))
