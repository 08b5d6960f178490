import numpy as np
import pytest

import difflog
from difflog import (
    BuildError,
    build_network,
    build_store,
    forward,
    parse_atom,
    parse_program,
)
from difflog.network import (
    FactLayer,
    FunctionLayer,
    LiteralLayer,
    RuleLayer,
    eval_fact,
    eval_function,
    eval_literal,
    network_dot,
    query_output,
)

from conftest import (
    INFLUENCE_PROGRAM,
    MEAN_AGE_PROGRAM,
    THREE_ENTITY_KB,
    build,
    cosine_program,
    query_vec,
)
from logic_oracle import provable_atoms, provable_partners


# --- structure ---------------------------------------------------------------


def test_simple_chain_structure():
    _, _, graph = build("p(a, b).\nh(X, Y) :- p(X, Y).", [(("h", 2), False)])
    root = graph.roots[(("h", 2), False)]
    assert isinstance(root, LiteralLayer) and root.fact_layer is None
    (rule_layer,) = root.rule_layers
    assert isinstance(rule_layer, RuleLayer)
    (inner,) = [v for v in rule_layer.body_layers.values()]
    assert isinstance(inner, LiteralLayer)
    assert isinstance(inner.fact_layer, FactLayer)
    assert inner.rule_layers == []


def test_recursion_unfolds_to_depth():
    text = "r(a, b).\nr(X, Y) :- r(X, Z), p(Z, Y).\np(b, c)."
    _, _, graph = build(text, [(("r", 2), False)], depth=1)
    root = graph.roots[(("r", 2), False)]
    (rule_layer,) = root.rule_layers
    inner_r = rule_layer.body_layers[(0, False)]
    assert len(inner_r.rule_layers) == 1  # expanded once
    innermost = inner_r.rule_layers[0].body_layers[(0, False)]
    assert innermost.rule_layers == []  # only the fact layer remains
    assert innermost.fact_layer is not None


def test_target_without_definition_is_an_error():
    program = parse_program("p(a, b).")
    index, tensors = build_store(program)
    with pytest.raises(BuildError, match="neither facts nor rules"):
        build_network(program, index, tensors, [(("missing", 2), False)])


def test_every_learnable_parameter_is_registered():
    text = "#learnable(p/2).\np(a, b).\nh(X, Y) :- p(X, Y)."
    _, _, graph = build(text, [(("h", 2), False)])
    assert set(graph.params) == {"p/2"}


# --- fact layers ---------------------------------------------------------------


def test_eval_fact_binary_and_transposed():
    _, index, graph = build(THREE_ENTITY_KB, [(("p", 2), False)])
    assert np.array_equal(query_vec(graph, "p(a, Y)"), [0.0, 1.0, 2.0])
    _, _, graph_t = build(THREE_ENTITY_KB, [(("p", 2), True)])
    assert np.array_equal(query_vec(graph_t, "p(X, c)"), [2.0, 0.5, 0.0])


def test_eval_fact_attribute():
    text = "age(a, 20).\np(a, b)."
    program, index, graph = build(text, [(("age", 2), False)])
    ctx = graph.context()
    root = graph.roots[(("age", 2), False)]
    out = eval_fact(root.fact_layer, ctx.onehot("a"), ctx)
    expected = np.zeros(index.n)
    expected[index.index_of("a")] = 20.0
    assert np.array_equal(out.value, expected)


def test_eval_fact_propositional_broadcast():
    program = parse_program("0.7::rain.\np(a, b).")
    index, tensors = build_store(program)
    graph = build_network(program, index, tensors, [(("p", 2), False)])
    ctx = graph.context()
    layer = FactLayer(tensors[("rain", 0)])
    out = eval_fact(layer, ctx.onehot("a"), ctx)
    assert np.array_equal(out.value, np.full(index.n, 0.7))


# --- literal layer (OR) ---------------------------------------------------------


def test_literal_layer_sums_children():
    # Two rules contribute [0,1,0] and [0,0.5,0.2]; the OR-sum adds them.
    text = (
        "q(a, b).\n0.5::r(a, b).\n0.2::r(a, c).\n"
        "h(X, Y) :- q(X, Y).\nh(X, Y) :- r(X, Y).\n"
    )
    _, _, graph = build(text, [(("h", 2), False)])
    assert np.allclose(query_vec(graph, "h(a, Y)"), [0.0, 1.5, 0.2])


def test_literal_layer_single_child_identity():
    text = "q(a, b).\nh(X, Y) :- q(X, Y)."
    _, _, graph = build(text, [(("h", 2), False), (("q", 2), False)])
    assert np.array_equal(query_vec(graph, "h(a, Y)"), query_vec(graph, "q(a, Y)"))


# --- rule evaluation -------------------------------------------------------------


def test_worked_example_weighted_influence():
    _, index, graph = build(INFLUENCE_PROGRAM, [(("influence", 2), False)])
    value = query_vec(graph, "influence(a, Y)")
    assert np.allclose(value, [0.0, 10.0], rtol=0, atol=1e-12)


def test_worked_example_mean_age():
    _, _, graph = build(MEAN_AGE_PROGRAM, [(("mean_age_of_friends", 1), False)])
    value = query_vec(graph, "mean_age_of_friends(a)")
    oracle = (30 + 40) / 2  # arithmetic mean of the friends' ages
    assert value == pytest.approx(oracle, abs=1e-12)


def test_rule_with_empty_predicate_gives_zeros():
    text = "p(a, b).\nh(X, Y) :- p(X, Z), missing(Z, Y)."
    _, _, graph = build(text, [(("h", 2), False)])
    assert np.array_equal(query_vec(graph, "h(a, Y)"), np.zeros(2))


def test_ground_binary_literal_scales_result():
    text = "q(a, b).\n0.25::r(c, d).\nh(X, Y) :- q(X, Y), r(c, d)."
    _, _, graph = build(text, [(("h", 2), False)])
    out = query_vec(graph, "h(a, Y)")
    assert out[1] == 0.25


def test_constant_in_body_masks_path():
    text = "p(a, b). p(a, c).\nq(b, d). q(c, d).\nh(X, Y) :- p(X, b), q(b, Y)."
    _, index, graph = build(text, [(("h", 2), False)])
    out = query_vec(graph, "h(a, Y)")
    assert out[index.index_of("d")] == 1.0
    assert np.count_nonzero(out) == 1


def test_bias_rule_broadcasts_scalar():
    text = (
        "#learnable(b/1).\n0.3::b(advisedby).\nta(k1, p1).\n"
        "advisedby(X1, X2) :- b(advisedby).\n"
    )
    _, index, graph = build(text, [(("advisedby", 2), False)])
    out = query_vec(graph, "advisedby(p1, Y)")
    assert np.allclose(out, np.full(index.n, 0.3))


# --- any/n -----------------------------------------------------------------------


def test_any_case1_sum_then_broadcast():
    # Path ends away from the destination: sum to a scalar, broadcast.
    _, _, graph = build(INFLUENCE_PROGRAM, [(("influence", 2), False)])
    prog = parse_program(INFLUENCE_PROGRAM)
    rule = prog.rules[0]
    plan = difflog.compile_rule(rule)
    assert [str(t) for t in plan.any_dest_terms] == ["A"]
    # age contributes 20 at a; the broadcast multiplies friends row [0,1].
    assert np.allclose(query_vec(graph, "influence(a, Y)"), [0.0, 10.0])


def test_any_case1_product_of_sums():
    # Two dead-end branches: scalars multiply before the broadcast.
    text = (
        "p(a, u). p(a, v).\nq(a, s). 0::q(a, t).\n"
        "h(X, Y) :- p(X, U), q(X, V).\n"
    )
    _, index, graph = build(text, [(("h", 2), False)])
    out = query_vec(graph, "h(a, Y)")
    # sum(p row) = 2, sum(q row) = 1 -> scalar 2 broadcast over all entities
    assert np.allclose(out, np.full(index.n, 2.0))


def test_any_case2_free_variable_start():
    # A literal reachable only from the destination side: its start node is
    # free, fed with the all-ones vector.
    text = "p(u, b). p(v, b). p(u, c).\nh(X, Y) :- p(U, Y)."
    _, index, graph = build(text, [(("h", 2), False)])
    out = query_vec(graph, "h(a, Y)") if "a" in index else None
    # 'a' does not appear; use an indexed entity as input instead.
    out = query_vec(graph, f"h({index.names[0]}, Y)")
    expected = np.zeros(index.n)
    expected[index.index_of("b")] = 2.0
    expected[index.index_of("c")] = 1.0
    assert np.array_equal(out, expected)


def test_any_case2_ones_vector():
    text = "l1(x). l1(y). l1(z).\nh1(X, Y) :- l1(X), l1(Y)."
    _, index, graph = build(text, [(("h1", 2), False)])
    out = query_vec(graph, "h1(x, Y)")
    assert np.array_equal(out, np.ones(3))  # l1[x] * l1[y] with all weights 1


# --- functions --------------------------------------------------------------------


def test_function_layer_tanh_zero():
    ctx = build("p(a, b).", [(("p", 2), False)])[2].context()
    out = eval_function(FunctionLayer("tanh"), ctx.zeros(), ctx)
    assert np.array_equal(out.value, np.zeros(2))


def test_inverse_zero_preservation_in_program():
    text = (
        "#function(inverse/1, inverse).\nv(a, 2). v(b, 0).\n"
        "h(X, Y) :- p(X, Y), inverse(Y).\np(a, a). p(a, b)."
    )
    # inverse applies to the arriving vector; zero entries stay zero.
    _, index, graph = build("0.5::p(a, b).\n2::p(a, a).\n#function(inverse/1, inverse).\nh(X, Y) :- p(X, Y), inverse(Y).", [(("h", 2), False)])
    out = query_vec(graph, "h(a, Y)")
    assert out[index.index_of("a")] == 0.5
    assert out[index.index_of("b")] == 2.0


# --- invariants -------------------------------------------------------------------


def test_grounding_equivalence_small():
    text = (
        "p(a, b). p(b, c). q(c, d). q(b, d).\n"
        "h(X, Y) :- p(X, Z), q(Z, Y).\n"
        "g(X, Y) :- p(X, Y).\ng(X, Y) :- h(X, Y).\n"
    )
    program, index, graph = build(
        text, [(("h", 2), False), (("g", 2), False)]
    )
    derived = provable_atoms(program)
    for pred in ("h", "g"):
        for name in index.names:
            out = query_vec(graph, f"{pred}({name}, Y)")
            support = {index.names[i] for i in np.nonzero(out > 0)[0]}
            assert support == provable_partners(derived, pred, name)


def test_or_monotonicity():
    base = "p(a, b). p(b, c).\nh(X, Y) :- p(X, Z), p(Z, Y).\n"
    _, index, graph = build(base, [(("h", 2), False)])
    before = query_vec(graph, "h(a, Y)")
    _, index2, graph2 = build(
        base + "0.5::p(a, c).", [(("h", 2), False)]
    )
    after = query_vec(graph2, "h(a, Y)")
    aligned = np.zeros_like(after)
    for i, name in enumerate(index.names):
        aligned[index2.index_of(name)] = before[i]
    assert np.all(after >= aligned - 1e-12)


def test_transpose_duality():
    text = (
        "p(a, b). 0.5::p(b, c). 2::q(c, a).\n"
        "h(X, Y) :- p(X, Z), q(Z, Y).\nh(X, Y) :- p(X, Y).\n"
    )
    _, index, graph = build(text, [(("h", 2), False), (("h", 2), True)])
    for a in index.names:
        fwd = query_vec(graph, f"h({a}, Y)")
        for j, b in enumerate(index.names):
            rev = query_vec(graph, f"h(X, {b})")
            assert rev[index.index_of(a)] == pytest.approx(fwd[j], abs=1e-12)


def test_depth_invariance_without_recursion():
    text = "p(a, b). q(b, c).\nh(X, Y) :- p(X, Z), q(Z, Y).\n"
    outputs = []
    for depth in (0, 1, 3, 7):
        _, _, graph = build(text, [(("h", 2), False)], depth=depth)
        outputs.append(query_vec(graph, "h(a, Y)"))
    for out in outputs[1:]:
        assert np.array_equal(out, outputs[0])


def test_cosine_program_matches_direct_formula():
    text, latents = cosine_program(n_entities=6, n_features=4, seed=11)
    _, index, graph = build(text, [(("similarity", 2), False)])
    for a in range(6):
        out = query_vec(graph, f"similarity(e{a}, Y)")
        xs = latents[:, a]
        for name in index.names:
            y = int(name[1:])
            direct = float(
                xs @ latents[:, y]
                / (np.linalg.norm(xs) * np.linalg.norm(latents[:, y]))
            )
            assert out[index.index_of(name)] == pytest.approx(direct, abs=1e-6)


def test_combiner_override_min_max():
    text = (
        "#combiner(and=min, or=max).\n"
        "0.8::p(a, b). 0.3::q(a, b).\n"
        "h(X, Y) :- p(X, Y), q(X, Y).\n"
        "h(X, Y) :- p(X, Y).\n"
    )
    _, index, graph = build(text, [(("h", 2), False)])
    out = query_vec(graph, "h(a, Y)")
    # AND = min(0.8, 0.3) = 0.3; OR = max(0.3, 0.8) = 0.8
    assert out[index.index_of("b")] == 0.8


def test_three_ary_target_head():
    text = (
        "p(a, c). p(b, c). q(b, c). q(b, d).\n"
        "t(X1, X2, Y) :- p(X1, Y), q(X2, Y).\n"
    )
    _, index, graph = build(text, [(("t", 3), False)])
    out = query_vec(graph, "t(a, b, Y)")
    expected = np.zeros(index.n)
    expected[index.index_of("c")] = 1.0  # only c satisfies both conjuncts
    assert np.array_equal(out, expected)


def test_unknown_query_entity_raises():
    _, _, graph = build("p(a, b).", [(("p", 2), False)])
    with pytest.raises(difflog.UnknownEntityError):
        forward(graph, parse_atom("p(zzz, Y)"))


def test_network_dot_export():
    _, _, graph = build(
        "p(a, b).\nh(X, Y) :- p(X, Y).", [(("h", 2), False)]
    )
    dot = network_dot(graph)
    assert "Literal h/2" in dot and "Fact p/2" in dot and "Rule" in dot
