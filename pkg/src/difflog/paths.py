"""Compiles a rule into the set of source-to-destination paths through its
term graph.

Body literals split three ways: literals with two distinct terms are
undirected edges, unary literals (and binary literals with equal terms)
attach as loops on their node, and variable-free literals contribute scalar
multipliers. A breadth-first search grows partial paths from each source;
a path completes on reaching the destination, and a dead end completes with
a synthetic ``any`` edge to the destination. When body literals remain
unreached, a second search runs from the destination toward the source and
its results are reversed; literals disconnected from both endpoints are
connected by fresh source-side ``any`` edges and the search restarts, so
every literal occurrence ends up covered. The loop is bounded by the number
of nodes.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace

from .language import Atom, Constant, Rule, Term, Variable

ANY_PREDICATE = "any"

ANY_INPUT = "input"  # free-variable start: contributes an all-ones vector
ANY_DEST = "dest"    # aggregated finish: sum to scalar, broadcast at the target

DEFAULT_MAX_PARTIAL_PATHS = 10_000


class CompileError(Exception):
    pass


class PathExplosionError(CompileError):
    def __init__(self, rule: Rule, limit: int):
        super().__init__(
            f"more than {limit} partial paths while compiling rule "
            f"'{rule}'; refusing to continue"
        )


@dataclass(frozen=True)
class GraphEdge:
    """A traversable connection between two distinct terms."""

    occ: int | None  # body occurrence index; None for synthetic any edges
    a: Term
    b: Term

    def other(self, term: Term) -> Term:
        return self.b if term == self.a else self.a


@dataclass
class TermGraph:
    rule: Rule
    nodes: list[Term]
    edges: list[GraphEdge]
    loops: dict[Term, tuple[int, ...]]
    grounds: tuple[int, ...]
    by_term: dict[Term, list[GraphEdge]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.by_term:
            for edge in self.edges:
                self.by_term.setdefault(edge.a, []).append(edge)
                self.by_term.setdefault(edge.b, []).append(edge)


@dataclass(frozen=True)
class PathStep:
    occ: int | None
    src: Term
    dst: Term
    transposed: bool = False
    any_kind: str | None = None

    def label(self, rule: Rule) -> str:
        if self.occ is None:
            return ANY_PREDICATE
        name = rule.body[self.occ].predicate
        return f"{name}^T" if self.transposed else name


@dataclass
class Path:
    start: Term
    steps: tuple[PathStep, ...]
    loops: dict[Term, tuple[int, ...]] = field(default_factory=dict)

    @property
    def end(self) -> Term:
        return self.steps[-1].dst if self.steps else self.start

    def nodes(self) -> list[Term]:
        return [self.start] + [s.dst for s in self.steps]

    def describe(self, rule: Rule) -> str:
        parts = [_node_label(rule, self.start, self.loops)]
        for step in self.steps:
            parts.append(f"-[{step.label(rule)}]->")
            parts.append(_node_label(rule, step.dst, self.loops))
        return " ".join(parts)


def _node_label(rule: Rule, term: Term, loops: dict[Term, tuple[int, ...]]) -> str:
    occs = loops.get(term, ())
    if not occs:
        return str(term)
    names = ", ".join(str(rule.body[o]) for o in occs)
    return f"{term}{{{names}}}"


@dataclass
class RulePathPlan:
    rule: Rule
    dest_index: int
    sources: list[Term]
    destination: Term
    paths: list[Path]
    disconnected_grounds: tuple[int, ...]
    # Filled in by merge_into_dag:
    merged_edges: list[PathStep] = field(default_factory=list)
    any_dest_terms: list[Term] = field(default_factory=list)
    node_loops: dict[Term, tuple[int, ...]] = field(default_factory=dict)
    merged: bool = False

    def describe(self) -> list[str]:
        return [p.describe(self.rule) for p in self.paths]


def build_term_graph(rule: Rule) -> TermGraph:
    """Classify each body literal as exactly one of edge, loop or ground."""
    nodes: list[Term] = []

    def add_node(term: Term) -> None:
        if term not in nodes:
            nodes.append(term)

    for term in rule.head.terms:
        add_node(term)

    edges: list[GraphEdge] = []
    loops: dict[Term, list[int]] = {}
    grounds: list[int] = []
    for occ, atom in enumerate(rule.body):
        if atom.is_ground():
            grounds.append(occ)
            continue
        if atom.arity == 1 or (atom.arity == 2 and atom.terms[0] == atom.terms[1]):
            term = atom.terms[0]
            add_node(term)
            loops.setdefault(term, []).append(occ)
            continue
        if atom.arity != 2:
            raise CompileError(
                f"cannot compile body literal {atom} of arity {atom.arity}"
            )
        add_node(atom.terms[0])
        add_node(atom.terms[1])
        edges.append(GraphEdge(occ, atom.terms[0], atom.terms[1]))

    return TermGraph(
        rule=rule,
        nodes=nodes,
        edges=edges,
        loops={t: tuple(v) for t, v in loops.items()},
        grounds=tuple(grounds),
    )


@dataclass(frozen=True)
class _Partial:
    start: Term
    steps: tuple[PathStep, ...]
    seen: frozenset[Term]

    @property
    def end(self) -> Term:
        return self.steps[-1].dst if self.steps else self.start


def _make_step(edge: GraphEdge, src: Term, rule_body: tuple[Atom, ...]) -> PathStep:
    dst = edge.other(src)
    if edge.occ is None:
        return PathStep(None, src, dst, any_kind=ANY_INPUT)
    atom = rule_body[edge.occ]
    transposed = src != atom.terms[0]
    return PathStep(edge.occ, src, dst, transposed=transposed)


def find_paths(
    graph: TermGraph,
    source: Term,
    destination: Term,
    visited: set[int],
    sources_set: set[Term],
    *,
    synthetic: list[GraphEdge] | None = None,
    first_step_unvisited: bool = False,
    max_partial_paths: int = DEFAULT_MAX_PARTIAL_PATHS,
) -> tuple[list[Path], set[int]]:
    """Breadth-first search for all simple paths from source to destination.

    Extensions that revisit a node of the path or reach another source are
    skipped; a partial path with no admissible extension completes with an
    ``any`` edge to the destination. Returns completed paths (loops not yet
    attached) and the updated set of visited body occurrences.
    """
    synthetic = synthetic or []

    def edges_at(term: Term) -> list[GraphEdge]:
        base = graph.by_term.get(term, [])
        extra = [e for e in synthetic if term in (e.a, e.b)]
        return base + extra

    completed: list[Path] = []
    partials: deque[_Partial] = deque(
        [_Partial(source, (), frozenset((source,)))]
    )
    while partials:
        for _ in range(len(partials)):
            path = partials.popleft()
            end = path.end
            if path.steps and end == destination:
                completed.append(Path(path.start, path.steps))
                continue
            extended = False
            for edge in edges_at(end):
                if (
                    first_step_unvisited
                    and not path.steps
                    and edge.occ is not None
                    and edge.occ in visited
                ):
                    continue
                other = edge.other(end)
                if other in path.seen or other in sources_set:
                    continue
                step = _make_step(edge, end, graph.rule.body)
                new = _Partial(
                    path.start, path.steps + (step,), path.seen | {other}
                )
                if edge.occ is not None:
                    visited.add(edge.occ)
                if other == destination:
                    completed.append(Path(new.start, new.steps))
                else:
                    partials.append(new)
                extended = True
            if not extended:
                if end == destination:
                    completed.append(Path(path.start, path.steps))
                else:
                    any_step = PathStep(
                        None, end, destination, any_kind=ANY_DEST
                    )
                    completed.append(Path(path.start, path.steps + (any_step,)))
        if len(partials) > max_partial_paths:
            raise PathExplosionError(graph.rule, max_partial_paths)
    return completed, visited


def _reverse(path: Path) -> Path:
    steps: list[PathStep] = []
    for step in reversed(path.steps):
        if step.occ is None:
            kind = ANY_INPUT  # a reversed completion becomes a free-var start
            steps.append(PathStep(None, step.dst, step.src, any_kind=kind))
        else:
            steps.append(
                PathStep(step.occ, step.dst, step.src, not step.transposed)
            )
    start = path.steps[-1].dst if path.steps else path.start
    return Path(start, tuple(steps))


def _attach_loops(graph: TermGraph, paths: list[Path]) -> None:
    for path in paths:
        loops: dict[Term, tuple[int, ...]] = {}
        for node in path.nodes():
            occs = graph.loops.get(node)
            if occs and node not in loops:
                loops[node] = occs
        path.loops = loops


def _uncovered(graph: TermGraph, paths: list[Path]) -> list[int]:
    """Body occurrences with variables that no path has picked up."""
    covered: set[int] = set()
    on_path_nodes: set[Term] = set()
    for path in paths:
        on_path_nodes.update(path.nodes())
        for step in path.steps:
            if step.occ is not None:
                covered.add(step.occ)
    for node in on_path_nodes:
        covered.update(graph.loops.get(node, ()))
    ground = set(graph.grounds)
    return [
        occ
        for occ in range(len(graph.rule.body))
        if occ not in covered and occ not in ground
    ]


def check_coverage(plan: RulePathPlan) -> list[int]:
    """Occurrences not covered by paths, loops or ground literals (should be
    empty for every compiled plan)."""
    graph = build_term_graph(plan.rule)
    return _uncovered(graph, plan.paths)


def find_clause_paths(
    rule: Rule,
    dest_index: int | None = None,
    *,
    max_partial_paths: int = DEFAULT_MAX_PARTIAL_PATHS,
) -> RulePathPlan:
    """Compute the full path plan of a rule toward one destination term.

    The destination defaults to the last head term; the remaining head terms
    are sources (a single-term head is both source and destination, and no
    reverse search runs for it).
    """
    graph = build_term_graph(rule)
    head_terms = list(rule.head.terms)
    if dest_index is None:
        dest_index = len(head_terms) - 1
    destination = head_terms[dest_index]
    rest = [t for i, t in enumerate(head_terms) if i != dest_index]
    rest = [t for t in rest if t != destination]
    if rest:
        sources, compute_reverse = rest, True
    else:
        sources, compute_reverse = [destination], False

    synthetic: list[GraphEdge] = []
    tried_targets: set[Term] = set()
    paths: list[Path] = []
    for _ in range(len(graph.nodes) + 2):
        visited: set[int] = set()
        paths = []
        for source in sources:
            found, visited = find_paths(
                graph,
                source,
                destination,
                visited,
                set(sources),
                synthetic=synthetic,
                max_partial_paths=max_partial_paths,
            )
            paths.extend(found)
        if compute_reverse and _uncovered(graph, paths):
            for source in sources:
                blocked = set(head_terms) - {source}
                backwards, visited = find_paths(
                    graph,
                    destination,
                    source,
                    visited,
                    blocked,
                    synthetic=synthetic,
                    first_step_unvisited=True,
                    max_partial_paths=max_partial_paths,
                )
                paths.extend(_reverse(b) for b in backwards)
        uncovered = _uncovered(graph, paths)
        if not uncovered:
            break
        target = _pick_synthetic_target(
            graph, uncovered, tried_targets, sources, destination
        )
        if target is None:
            raise CompileError(
                f"could not connect body literal "
                f"{graph.rule.body[uncovered[0]]} in rule '{rule}'"
            )
        tried_targets.add(target)
        synthetic.append(GraphEdge(None, sources[0], target))
    else:
        raise CompileError(f"path search did not converge for rule '{rule}'")

    _attach_loops(graph, paths)
    return RulePathPlan(
        rule=rule,
        dest_index=dest_index,
        sources=sources,
        destination=destination,
        paths=paths,
        disconnected_grounds=graph.grounds,
    )


def _pick_synthetic_target(
    graph: TermGraph,
    uncovered: list[int],
    tried: set[Term],
    sources: list[Term],
    destination: Term,
) -> Term | None:
    for occ in uncovered:
        for term in graph.rule.body[occ].terms:
            if term in tried or term == destination or term in sources:
                continue
            return term
    return None


def merge_into_dag(plan: RulePathPlan) -> RulePathPlan:
    """Deduplicate shared edges and fuse destination-side any edges.

    Identical (occurrence, direction) steps across paths collapse into one
    DAG edge; every path that finishes with an aggregated ``any`` contributes
    its end term to a single ``any/n`` literal whose last term is the
    destination. Source-side ``any`` edges stay as ordinary (deduplicated)
    edges. Plans without any edges come back unchanged apart from the merged
    bookkeeping.
    """
    merged_edges: list[PathStep] = []
    seen: set[tuple] = set()
    any_dest_terms: list[Term] = []
    node_loops: dict[Term, tuple[int, ...]] = {}
    for path in plan.paths:
        for term, occs in path.loops.items():
            node_loops.setdefault(term, occs)
        for step in path.steps:
            if step.any_kind == ANY_DEST:
                if step.src not in any_dest_terms:
                    any_dest_terms.append(step.src)
                continue
            key = (step.occ, step.src, step.dst, step.any_kind)
            if key in seen:
                continue
            seen.add(key)
            merged_edges.append(step)
    return replace(
        plan,
        merged_edges=merged_edges,
        any_dest_terms=any_dest_terms,
        node_loops=node_loops,
        merged=True,
    )


def compile_rule(
    rule: Rule,
    dest_index: int | None = None,
    *,
    max_partial_paths: int = DEFAULT_MAX_PARTIAL_PATHS,
) -> RulePathPlan:
    return merge_into_dag(
        find_clause_paths(
            rule, dest_index, max_partial_paths=max_partial_paths
        )
    )


# --- DOT export ----------------------------------------------------------


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def term_graph_dot(rule: Rule) -> str:
    """Undirected DOT rendering of a rule's term graph."""
    graph = build_term_graph(rule)
    lines = ["graph term_graph {"]
    for node in graph.nodes:
        shape = "box" if isinstance(node, Constant) else "circle"
        lines.append(f'  "{_dot_escape(str(node))}" [shape={shape}];')
    for edge in graph.edges:
        label = rule.body[edge.occ].predicate
        lines.append(
            f'  "{_dot_escape(str(edge.a))}" -- "{_dot_escape(str(edge.b))}"'
            f' [label="{_dot_escape(label)}"];'
        )
    for term, occs in graph.loops.items():
        for occ in occs:
            label = rule.body[occ].predicate
            lines.append(
                f'  "{_dot_escape(str(term))}" -- "{_dot_escape(str(term))}"'
                f' [label="{_dot_escape(label)}"];'
            )
    for occ in graph.grounds:
        lines.append(
            f'  "{_dot_escape(str(rule.body[occ]))}" [shape=plaintext];'
        )
    lines.append("}")
    return "\n".join(lines) + "\n"


def path_tree_dot(plan: RulePathPlan) -> str:
    """The found paths rendered as a tree rooted at the source terms."""
    lines = ["digraph path_tree {"]
    counter = 0
    trie: dict[tuple, str] = {}

    def node_id(prefix: tuple, term: Term) -> str:
        nonlocal counter
        if prefix not in trie:
            nid = f"n{counter}"
            counter += 1
            trie[prefix] = nid
            lines.append(f'  {nid} [label="{_dot_escape(str(term))}"];')
        return trie[prefix]

    for path in plan.paths:
        prefix: tuple = (path.start,)
        parent = node_id(prefix, path.start)
        for step in path.steps:
            prefix = prefix + ((step.occ, step.any_kind, step.dst),)
            child = node_id(prefix, step.dst)
            label = step.label(plan.rule)
            lines.append(f'  {parent} -> {child} [label="{_dot_escape(label)}"];')
            parent = child
    lines.append("}")
    return "\n".join(lines) + "\n"
