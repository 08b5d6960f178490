"""Assembles the evaluable layer network from a program and runs queries.

Each queried predicate gets a literal layer that sums (logic OR) the outputs
of its fact layer and one rule layer per matching rule. A rule layer walks
the rule's merged path DAG: node values are element-wise products of their
incoming edges (logic AND), loop literals apply in body order, aggregated
``any`` edges sum to a scalar that is broadcast at the destination, and
variable-free body literals multiply in as scalars. Recursive predicates
unfold up to a fixed depth, after which only their facts contribute.
Inverted access uses transposed fact tensors and plans compiled toward the
first head term.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Node, Tape, apply_builtin
from .language import Atom, Constant, Program, Rule, Term, Variable
from .network_functions import AND_COMBINERS, OR_COMBINERS, combine
from .paths import (
    ANY_DEST,
    ANY_INPUT,
    DEFAULT_MAX_PARTIAL_PATHS,
    PathStep,
    RulePathPlan,
    compile_rule,
)
from .store import (
    ATTRIBUTE,
    BINARY,
    PROPOSITIONAL,
    UNARY,
    EntityIndex,
    PredicateTensor,
)

Signature = tuple[str, int]


class BuildError(Exception):
    pass


class QueryError(Exception):
    pass


@dataclass
class FactLayer:
    tensor: PredicateTensor
    transposed: bool = False


@dataclass
class FunctionLayer:
    builtin: str


@dataclass
class RuleLayer:
    rule: Rule
    plan: RulePathPlan
    body_layers: dict[tuple[int, bool], "LiteralLayer | FunctionLayer"]


@dataclass
class LiteralLayer:
    signature: Signature
    transposed: bool
    fact_layer: FactLayer | None
    rule_layers: list[RuleLayer]

    @property
    def children(self) -> list:
        layers: list = []
        if self.fact_layer is not None:
            layers.append(self.fact_layer)
        layers.extend(self.rule_layers)
        return layers


@dataclass
class NetworkGraph:
    roots: dict[tuple[Signature, bool], LiteralLayer]
    params: dict[str, PredicateTensor]
    index: EntityIndex
    tensors: dict[Signature, PredicateTensor]
    program: Program
    depth: int
    and_name: str
    or_name: str

    def context(self, tape: Tape | None = None) -> "EvalContext":
        return EvalContext(
            tape=tape or Tape(),
            index=self.index,
            and_fn=AND_COMBINERS[self.and_name],
            or_fn=OR_COMBINERS[self.or_name],
        )


class NetworkBuilder:
    def __init__(
        self,
        program: Program,
        index: EntityIndex,
        tensors: dict[Signature, PredicateTensor],
        depth: int,
        max_partial_paths: int = DEFAULT_MAX_PARTIAL_PATHS,
    ):
        self.program = program
        self.index = index
        self.tensors = tensors
        self.depth = depth
        self.max_partial_paths = max_partial_paths
        self.functions = program.functions()
        self.params: dict[str, PredicateTensor] = {}
        self._rules_by_sig: dict[Signature, list[Rule]] = {}
        for rule in program.rules:
            self._rules_by_sig.setdefault(rule.head.signature, []).append(rule)
        self._plans: dict[tuple[int, int], RulePathPlan] = {}
        self._rule_ids = {id(r): i for i, r in enumerate(program.rules)}

    def _plan(self, rule: Rule, dest_index: int) -> RulePathPlan:
        key = (self._rule_ids[id(rule)], dest_index)
        if key not in self._plans:
            self._plans[key] = compile_rule(
                rule, dest_index, max_partial_paths=self.max_partial_paths
            )
        return self._plans[key]

    def _register(self, tensor: PredicateTensor) -> PredicateTensor:
        if tensor.trainable:
            self.params[tensor.name] = tensor
        return tensor

    def literal_layer(
        self, sig: Signature, transposed: bool, counts: dict[Signature, int]
    ) -> LiteralLayer:
        tensor = self.tensors.get(sig)
        fact_layer = None
        if tensor is not None:
            use_transpose = transposed and tensor.kind == BINARY
            fact_layer = FactLayer(self._register(tensor), use_transpose)

        count = counts.get(sig, 0) + 1
        rule_layers: list[RuleLayer] = []
        if count <= self.depth + 1:
            inner = dict(counts)
            inner[sig] = count
            for rule in self._rules_by_sig.get(sig, []):
                rule_layers.append(self.rule_layer(rule, transposed, inner))
        return LiteralLayer(sig, transposed, fact_layer, rule_layers)

    def rule_layer(
        self, rule: Rule, transposed: bool, counts: dict[Signature, int]
    ) -> RuleLayer:
        arity = rule.head.arity
        if transposed and arity > 2:
            raise BuildError(
                f"inverted access to {rule.head.predicate}/{arity} is not supported"
            )
        dest_index = 0 if (transposed and arity == 2) else arity - 1
        plan = self._plan(rule, dest_index)
        body_layers: dict[tuple[int, bool], LiteralLayer | FunctionLayer] = {}

        def need(occ: int, step_transposed: bool) -> None:
            atom = rule.body[occ]
            directive = self.functions.get(atom.signature)
            if directive is not None:
                body_layers[(occ, False)] = FunctionLayer(directive.builtin)
                return
            flag = step_transposed if atom.arity == 2 else False
            key = (occ, flag)
            if key not in body_layers:
                body_layers[key] = self.literal_layer(atom.signature, flag, counts)

        for step in plan.merged_edges:
            if step.occ is not None:
                need(step.occ, step.transposed)
        for occs in plan.node_loops.values():
            for occ in occs:
                need(occ, False)
        for occ in plan.disconnected_grounds:
            need(occ, False)
        return RuleLayer(rule, plan, body_layers)


def build_network(
    program: Program,
    index: EntityIndex,
    tensors: dict[Signature, PredicateTensor],
    targets: list[tuple[Signature, bool]],
    depth: int | None = None,
    max_partial_paths: int = DEFAULT_MAX_PARTIAL_PATHS,
) -> NetworkGraph:
    """Build the literal layers for every requested (predicate, direction)."""
    if depth is None:
        depth = program.recursion_depth()
    builder = NetworkBuilder(program, index, tensors, depth, max_partial_paths)
    roots: dict[tuple[Signature, bool], LiteralLayer] = {}
    for sig, transposed in targets:
        if sig not in tensors and not builder._rules_by_sig.get(sig):
            raise BuildError(
                f"target predicate {sig[0]}/{sig[1]} has neither facts nor rules"
            )
        roots[(sig, transposed)] = builder.literal_layer(sig, transposed, {})
    and_name, or_name = program.combiners()
    return NetworkGraph(
        roots=roots,
        params=builder.params,
        index=index,
        tensors=tensors,
        program=program,
        depth=depth,
        and_name=and_name,
        or_name=or_name,
    )


# --- evaluation ------------------------------------------------------------


@dataclass
class EvalContext:
    tape: Tape
    index: EntityIndex
    and_fn: object
    or_fn: object
    _onehots: dict[str, Node] = field(default_factory=dict)
    _ones: Node | None = None
    _params: dict[str, Node] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.index.n

    def and_all(self, nodes: list[Node]) -> Node:
        return combine(self.tape, self.and_fn, nodes)

    def or_all(self, nodes: list[Node]) -> Node:
        return combine(self.tape, self.or_fn, nodes)

    def ones(self) -> Node:
        if self._ones is None:
            self._ones = self.tape.constant(np.ones(self.n))
        return self._ones

    def zeros(self) -> Node:
        return self.tape.constant(np.zeros(self.n))

    def onehot(self, name: str) -> Node:
        if name not in self._onehots:
            vec = np.zeros(self.n)
            vec[self.index.index_of(name)] = 1.0
            self._onehots[name] = self.tape.constant(vec)
        return self._onehots[name]

    def tensor_param(self, tensor: PredicateTensor) -> Node | None:
        """One shared parameter leaf per trainable tensor per tape."""
        if not tensor.trainable:
            return None
        if tensor.name not in self._params:
            self._params[tensor.name] = self.tape.param(
                tensor.name, tensor.param_array
            )
        return self._params[tensor.name]

    def tensor_node(self, tensor: PredicateTensor, array: np.ndarray) -> Node:
        param = self.tensor_param(tensor)
        if param is not None and array is tensor.param_array:
            return param
        return self.tape.constant(array)


def eval_fact(layer: FactLayer, x: Node, ctx: EvalContext) -> Node:
    tensor = layer.tensor
    if tensor.kind == BINARY:
        return ctx.tape.matvec(
            x,
            tensor.matrix,
            transposed=layer.transposed,
            data_param=ctx.tensor_param(tensor),
        )
    if tensor.kind == UNARY:
        return ctx.tape.mul(x, ctx.tensor_node(tensor, tensor.vector))
    if tensor.kind == ATTRIBUTE:
        vals = ctx.tape.mul(x, ctx.tape.constant(tensor.values))
        return ctx.tape.mul(vals, ctx.tensor_node(tensor, tensor.weights))
    # Propositional: the stored scalar broadcast over all entities.
    scalar = ctx.tensor_node(tensor, tensor.scalar)
    if np.ndim(scalar.value) == 0:
        return ctx.tape.broadcast(scalar, ctx.n)
    return scalar


def eval_function(layer: FunctionLayer, x: Node, ctx: EvalContext) -> Node:
    return apply_builtin(ctx.tape, layer.builtin, x)


def eval_literal(
    layer: LiteralLayer, inputs: list[Node], ctx: EvalContext
) -> Node:
    """OR-combine the fact layer and every rule layer of a predicate."""
    outs: list[Node] = []
    if layer.fact_layer is not None:
        outs.append(eval_fact(layer.fact_layer, inputs[0], ctx))
    for rule_layer in layer.rule_layers:
        outs.append(eval_rule(rule_layer, inputs, ctx))
    if not outs:
        return ctx.zeros()
    return ctx.or_all(outs)


def _diag_loop(tensor: PredicateTensor, x: Node, ctx: EvalContext) -> Node:
    return ctx.tape.diagmul(
        x,
        tensor.matrix,
        data_param=ctx.tensor_param(tensor),
        diag_positions=tensor.diag_positions(),
    )


def eval_rule(layer: RuleLayer, inputs: list[Node], ctx: EvalContext) -> Node:
    plan = layer.plan
    if not plan.merged:
        raise BuildError("rule layer requires a merged path plan")
    input_by_source: dict[Term, Node] = dict(zip(plan.sources, inputs))

    incoming: dict[Term, list[PathStep]] = {}
    for step in plan.merged_edges:
        incoming.setdefault(step.dst, []).append(step)

    node_memo: dict[Term, Node] = {}
    edge_memo: dict[PathStep, Node] = {}

    def child_value(occ: int, transposed: bool, v: Node) -> Node:
        atom = layer.rule.body[occ]
        sub = layer.body_layers[(occ, transposed if atom.arity == 2 else False)]
        if isinstance(sub, FunctionLayer):
            return eval_function(sub, v, ctx)
        return eval_literal(sub, [v], ctx)

    def apply_loops(term: Term, v: Node) -> Node:
        for occ in plan.node_loops.get(term, ()):
            atom = layer.rule.body[occ]
            if atom.arity == 2:  # self-edge literal: diagonal of the relation
                sub = layer.body_layers.get((occ, False))
                tensor = (
                    sub.fact_layer.tensor
                    if isinstance(sub, LiteralLayer) and sub.fact_layer
                    else None
                )
                if not (
                    tensor is not None
                    and tensor.kind == BINARY
                    and isinstance(sub, LiteralLayer)
                    and not sub.rule_layers
                ):
                    raise BuildError(
                        f"self-edge literal {atom} requires a fact-only "
                        "binary predicate"
                    )
                v = _diag_loop(tensor, v, ctx)
                continue
            v = child_value(occ, False, v)
        return v

    def edge_value(step: PathStep) -> Node:
        if step in edge_memo:
            return edge_memo[step]
        if step.any_kind == ANY_INPUT:
            value = ctx.ones()
        else:
            value = child_value(step.occ, step.transposed, node_value(step.src))
        edge_memo[step] = value
        return value

    def node_value(term: Term) -> Node:
        if term in node_memo:
            return node_memo[term]
        if term in input_by_source:
            v = input_by_source[term]
        else:
            steps = incoming.get(term, [])
            if not steps:
                raise BuildError(f"path node {term} has no incoming edges")
            v = ctx.and_all([edge_value(s) for s in steps])
        if isinstance(term, Constant):
            v = ctx.tape.mul(v, ctx.onehot(term.name))
        v = apply_loops(term, v)
        node_memo[term] = v
        return v

    dest = plan.destination
    vals: list[Node] = []
    if dest in input_by_source:
        vals.append(input_by_source[dest])
    vals.extend(edge_value(s) for s in incoming.get(dest, []))
    if plan.any_dest_terms:
        sums = [ctx.tape.sum(node_value(t)) for t in plan.any_dest_terms]
        scalar = ctx.and_all(sums)
        base = apply_loops(dest, ctx.ones())
        vals.append(ctx.and_all([ctx.tape.broadcast(scalar, ctx.n), base]))
    result = ctx.and_all(vals) if vals else ctx.zeros()
    if isinstance(dest, Constant):
        result = ctx.tape.mul(result, ctx.onehot(dest.name))
    if not plan.any_dest_terms:
        result = apply_loops(dest, result)
    for occ in plan.disconnected_grounds:
        result = ctx.and_all([result, _ground_value(layer, occ, ctx)])
    return result


def _ground_value(layer: RuleLayer, occ: int, ctx: EvalContext) -> Node:
    """Scalar truth value of a variable-free body literal."""
    atom = layer.rule.body[occ]
    if atom.arity == 0:
        tensor = None
        sub = layer.body_layers.get((occ, False))
        if isinstance(sub, LiteralLayer) and sub.fact_layer is not None:
            tensor = sub.fact_layer.tensor
        if tensor is None:
            return ctx.tape.constant(0.0)
        return ctx.tensor_node(tensor, tensor.scalar)
    first = atom.terms[0].name
    out = child_value_for_ground(layer, occ, ctx.onehot(first), ctx)
    target = atom.terms[-1].name if atom.arity == 2 else first
    return ctx.tape.pick(out, ctx.index.index_of(target))


def child_value_for_ground(
    layer: RuleLayer, occ: int, v: Node, ctx: EvalContext
) -> Node:
    sub = layer.body_layers[(occ, False)]
    if isinstance(sub, FunctionLayer):
        return eval_function(sub, v, ctx)
    return eval_literal(sub, [v], ctx)


# --- queries ----------------------------------------------------------------


def _query_shape(query: Atom) -> tuple[bool, bool]:
    """Classify a query: (transposed, scalar_result)."""
    terms = query.terms
    if not terms:
        raise QueryError("queries need at least one argument")
    if all(isinstance(t, Constant) for t in terms[:-1]) and isinstance(
        terms[-1], Variable
    ):
        return False, False
    if (
        len(terms) == 2
        and isinstance(terms[0], Variable)
        and isinstance(terms[1], Constant)
    ):
        return True, False
    if all(isinstance(t, Constant) for t in terms):
        if len(terms) != 1:
            raise QueryError(
                f"unsupported query form {query}; expected one variable "
                "or a single constant"
            )
        return False, True
    raise QueryError(
        f"unsupported query form {query}; use p(const, Var), "
        "p(Var, const) or p(const)"
    )


def query_targets(query: Atom) -> tuple[Signature, bool]:
    transposed, _ = _query_shape(query)
    return query.signature, transposed


def query_output(graph: NetworkGraph, ctx: EvalContext, query: Atom) -> Node:
    """Vector of scores over all entities for a query with one variable
    (or over the queried entity itself for a fully ground unary query)."""
    transposed, _ = _query_shape(query)
    root = graph.roots.get((query.signature, transposed))
    if root is None:
        raise QueryError(
            f"network was not built for target {query.signature[0]}/"
            f"{query.signature[1]} (transposed={transposed})"
        )
    if transposed:
        inputs = [ctx.onehot(query.terms[1].name)]
    elif isinstance(query.terms[-1], Variable):
        inputs = [ctx.onehot(t.name) for t in query.terms[:-1]]
    else:
        inputs = [ctx.onehot(query.terms[0].name)]
    return eval_literal(root, inputs, ctx)


def forward(graph: NetworkGraph, query: Atom) -> tuple[float | np.ndarray, Tape]:
    """Evaluate one query on a fresh tape.

    Returns a vector over entities for queries with a variable, or a scalar
    for a ground unary query, together with the tape that recorded the pass.
    """
    ctx = graph.context()
    _, scalar = _query_shape(query)
    out = query_output(graph, ctx, query)
    if scalar:
        out = ctx.tape.pick(out, graph.index.index_of(query.terms[0].name))
    return out.value, ctx.tape


# --- DOT export --------------------------------------------------------------


def network_dot(graph: NetworkGraph) -> str:
    """Layer DAG in DOT form: node labels carry layer kind and predicate."""
    lines = ["digraph network {", "  rankdir=BT;"]
    ids: dict[int, str] = {}
    counter = 0

    def node_id(layer, label: str) -> str:
        nonlocal counter
        key = id(layer)
        if key not in ids:
            ids[key] = f"l{counter}"
            counter += 1
            lines.append(f'  {ids[key]} [label="{label}"];')
        return ids[key]

    def visit_literal(layer: LiteralLayer) -> str:
        name = f"{layer.signature[0]}/{layer.signature[1]}"
        suffix = "^T" if layer.transposed else ""
        lid = node_id(layer, f"Literal {name}{suffix}")
        if layer.fact_layer is not None:
            fl = layer.fact_layer
            flabel = f"Fact {name}" + ("^T" if fl.transposed else "")
            fid = node_id(fl, flabel)
            lines.append(f"  {fid} -> {lid};")
        for rl in layer.rule_layers:
            rid = node_id(rl, f"Rule {rl.rule.head}")
            lines.append(f"  {rid} -> {lid};")
            for key, sub in sorted(rl.body_layers.items()):
                occ, transposed = key
                if isinstance(sub, FunctionLayer):
                    sid = node_id(sub, f"Function {sub.builtin}")
                else:
                    sid = visit_literal(sub)
                label = "transposed" if transposed else "forward"
                lines.append(f'  {sid} -> {rid} [label="{label}"];')
        return lid

    for root in graph.roots.values():
        visit_literal(root)
    lines.append("}")
    return "\n".join(lines) + "\n"
