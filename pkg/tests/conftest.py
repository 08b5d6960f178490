import numpy as np
import pytest

import difflog

FIGURE_RULE = (
    "target(X, Y) :- p0(X, Z), p1(X, Z), p2(Z, Y), p3(X, V), p4(U, Y), p5(Z), w."
)

INFLUENCE_PROGRAM = """\
friends(a, b).
age(a, 20.0).
0.5::w.
influence(X, Y) :- friends(X, Y), age(X, A), w.
"""

MEAN_AGE_PROGRAM = """\
friends(a, b). friends(a, c).
age(b, 30). age(c, 40).
#function(mean/1, mean).
mean_age_of_friends(X) :- friends(X, Y), age(Y, A), mean(A).
"""

THREE_ENTITY_KB = """\
p(a, b).
2::p(a, c).
0.5::p(b, c).
"""


def cosine_program(n_entities: int, n_features: int, seed: int):
    """The latent-feature cosine-similarity program plus its latent matrix."""
    rng = np.random.default_rng(seed)
    latents = rng.uniform(0.2, 1.0, size=(n_features, n_entities))
    latents *= rng.choice([-1.0, 1.0], size=latents.shape)
    lines = []
    for i in range(n_features):
        for e in range(n_entities):
            lines.append(f"{float(latents[i, e])!r}::l{i}(e{e}).")
    for i in range(n_features):
        lines.append(f"h{i}(X, Y) :- l{i}(X), l{i}(Y).")
        lines.append(f"num(X, Y) :- h{i}(X, Y).")
        lines.append(f"square_sum(X) :- l{i}(X), l{i}(X).")
    lines += [
        "#function(square_root/1, square_root).",
        "#function(inverse/1, inverse).",
        "norm(X) :- square_sum(X), square_root(X).",
        "den(X, Y) :- norm(X), norm(Y).",
        "inv_den(X, Y) :- den(X, Y), inverse(Y).",
        "similarity(X, Y) :- num(X, Y), inv_den(X, Y).",
    ]
    return "\n".join(lines) + "\n", latents


def build(program_text: str, targets, depth=None, seed=0):
    program = difflog.parse_program(program_text)
    index, tensors = difflog.build_store(program, seed=seed)
    graph = difflog.build_network(program, index, tensors, targets, depth=depth)
    return program, index, graph


def query_vec(graph, text: str):
    value, _ = difflog.forward(graph, difflog.parse_atom(text))
    return value


# --- linearly separable link-prediction task --------------------------------

def separable_program() -> str:
    lines = ["#learnable(pref/1)."]
    for f in ("g0", "g1", "b0", "b1"):
        lines.append(f"0.1::pref({f}).")
    for i in range(10):
        lines.append(f"has(u{i}, g{i % 2}).")
        lines.append(f"has(u{i}, b{i % 2}).")
    for j in range(10):
        lines.append(f"item_has(g{j % 2}, v{j}).")
        lines.append(f"item_has(b{(j + 1) % 2}, v{j}).")
    lines.append("likes(X, Y) :- has(X, F), pref(F), item_has(F, Y).")
    return "\n".join(lines) + "\n"


def separable_examples(items) -> str:
    lines = []
    for i in range(10):
        for j in items:
            sign = "+" if i % 2 == j % 2 else "-"
            lines.append(f"{sign} likes(u{i}, v{j}).")
    return "\n".join(lines) + "\n"


@pytest.fixture
def separable_task():
    return separable_program(), separable_examples(range(5)), separable_examples(range(5, 10))
