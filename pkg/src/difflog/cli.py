"""Command-line interface: compile, query, train and eval.

Programs may be split over several ``.pl`` files, concatenated in argument
order. Exit codes: 0 on success, 1 for program diagnostics (syntax or
semantic errors), 2 for I/O and data errors.
"""
from __future__ import annotations

import json
import statistics
import sys
from dataclasses import dataclass
from pathlib import Path

import click

from .autodiff import EvaluationError
from .dataset import emit_examples, generate_lcwa_negatives, parse_examples
from .language import Program, emit_program
from .network import (
    BuildError,
    QueryError,
    build_network,
    forward,
    network_dot,
    query_targets,
)
from .parser import ParseError, parse_atom, parse_program
from .paths import CompileError, find_clause_paths, path_tree_dot, term_graph_dot
from .store import UnknownEntityError, build_store
from .training import (
    DataError,
    Example,
    TrainConfig,
    TrainingError,
    check_examples,
)
from .validate import ERROR, has_errors, validate_program

EXIT_OK = 0
EXIT_DIAGNOSTICS = 1
EXIT_DATA = 2


@dataclass
class RunManifest:
    program_paths: list[Path]
    train_examples: Path | None
    test_examples: Path | None
    output_dir: Path
    seed: int
    epochs: int
    learning_rate: float
    depth: int | None
    repeats: int
    generate_negatives: int | None


class CliFailure(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _fail(message: str, code: int) -> CliFailure:
    return CliFailure(message, code)


def _read_sources(paths: tuple[str, ...]) -> str:
    chunks = []
    for p in paths:
        path = Path(p)
        if not path.exists():
            raise _fail(f"program file not found: {path}", EXIT_DATA)
        chunks.append(path.read_text(encoding="utf-8"))
    return "\n".join(chunks)


def _load_program(paths: tuple[str, ...], quiet: bool = False) -> Program:
    try:
        program = parse_program(_read_sources(paths))
    except ParseError as exc:
        raise _fail(f"parse error: {exc}", EXIT_DIAGNOSTICS) from None
    diagnostics = validate_program(program)
    for diag in diagnostics:
        if not quiet or diag.severity == ERROR:
            click.echo(str(diag), err=True)
    if has_errors(diagnostics):
        raise _fail("program has errors; aborting", EXIT_DIAGNOSTICS)
    return program


def _load_examples(path: Path) -> list[Example]:
    if not path.exists():
        raise _fail(f"examples file not found: {path}", EXIT_DATA)
    try:
        return parse_examples(path.read_text(encoding="utf-8"))
    except DataError as exc:
        raise _fail(f"{path}: {exc}", EXIT_DATA) from None


def _run(fn) -> int:
    try:
        fn()
        return EXIT_OK
    except CliFailure as exc:
        click.echo(f"error: {exc}", err=True)
        return exc.code
    except (CompileError, BuildError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_DIAGNOSTICS
    except (
        UnknownEntityError,
        QueryError,
        DataError,
        TrainingError,
        EvaluationError,
        ValueError,
    ) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_DATA


@click.group()
def main() -> None:
    """Compile weighted logic programs into differentiable networks."""


@main.command("compile")
@click.argument("programs", nargs=-1, required=True)
@click.option("--emit-dot", "dot_dir", type=click.Path(), default=None,
              help="Write term-graph, path-tree and network DOT files here.")
@click.option("--depth", type=int, default=None, help="Recursion unfold depth.")
@click.option("--seed", type=int, default=0, help="Seed for dense initialization.")
def cmd_compile(programs, dot_dir, depth, seed) -> None:
    """Print every rule's path plan and a layer summary."""

    def body() -> None:
        program = _load_program(programs)
        if program.is_empty():
            raise _fail("no rules or facts in program", EXIT_DIAGNOSTICS)
        index, tensors = build_store(program, seed=seed)
        click.echo(
            f"program: {len(program.facts)} facts, {len(program.rules)} rules, "
            f"{index.n} entities"
        )
        for i, rule in enumerate(program.rules, start=1):
            plan = find_clause_paths(rule)
            click.echo(f"rule {i}: {rule}")
            click.echo(f"  paths ({len(plan.paths)}):")
            for line in plan.describe():
                click.echo(f"    {line}")
            if plan.disconnected_grounds:
                names = ", ".join(
                    str(rule.body[occ]) for occ in plan.disconnected_grounds
                )
                click.echo(f"  ground literals: {names}")
        click.echo("predicates:")
        for sig in sorted(tensors):
            t = tensors[sig]
            n_rules = len(program.rules_for(sig))
            flags = " learnable" if t.trainable else ""
            click.echo(
                f"  {sig[0]}/{sig[1]}: {t.kind}, {len(program.rules_for(sig))} "
                f"rules{flags}"
                if n_rules
                else f"  {sig[0]}/{sig[1]}: {t.kind}{flags}"
            )
        if dot_dir is not None:
            out = Path(dot_dir)
            out.mkdir(parents=True, exist_ok=True)
            for i, rule in enumerate(program.rules, start=1):
                (out / f"rule{i}_term_graph.dot").write_text(term_graph_dot(rule))
                plan = find_clause_paths(rule)
                (out / f"rule{i}_paths.dot").write_text(path_tree_dot(plan))
            head_sigs = []
            for rule in program.rules:
                if rule.head.signature not in head_sigs:
                    head_sigs.append(rule.head.signature)
            if head_sigs:
                graph = build_network(
                    program,
                    index,
                    tensors,
                    [(sig, False) for sig in head_sigs],
                    depth=depth,
                )
                (out / "network.dot").write_text(network_dot(graph))
            click.echo(f"DOT files written to {out}")

    sys.exit(_run(body))


@main.command("query")
@click.argument("programs", nargs=-1, required=True)
@click.option("--query", "-q", "query_text", required=True,
              help="Query atom, e.g. 'p(a, Y)', 'p(X, c)' or 'p(a)'.")
@click.option("--top", type=int, default=None, help="Keep only the k best scores.")
@click.option("--depth", type=int, default=None)
@click.option("--seed", type=int, default=0)
def cmd_query(programs, query_text, top, depth, seed) -> None:
    """Evaluate one query and print nonzero entity scores as TSV."""

    def body() -> None:
        program = _load_program(programs)
        try:
            query = parse_atom(query_text)
        except ParseError as exc:
            raise _fail(f"bad query: {exc}", EXIT_DATA) from None
        index, tensors = build_store(program, seed=seed)
        graph = build_network(
            program, index, tensors, [query_targets(query)], depth=depth
        )
        value, _ = forward(graph, query)
        if hasattr(value, "shape"):
            scored = [
                (index.names[i], float(v))
                for i, v in enumerate(value)
                if v != 0.0
            ]
            scored.sort(key=lambda item: (-item[1], item[0]))
            if top is not None:
                scored = scored[:top]
            for name, score in scored:
                click.echo(f"{name}\t{score!r}")
        else:
            click.echo(f"{query.terms[0].name}\t{float(value)!r}")

    sys.exit(_run(body))


def _write_metrics(manifest: RunManifest, payload: dict) -> None:
    manifest.output_dir.mkdir(parents=True, exist_ok=True)
    (manifest.output_dir / "metrics.json").write_text(
        json.dumps(payload, indent=2) + "\n"
    )


@main.command("train")
@click.argument("programs", nargs=-1, required=True)
@click.option("--train", "train_path", required=True, type=click.Path())
@click.option("--test", "test_path", type=click.Path(), default=None)
@click.option("--out", "out_dir", type=click.Path(), default=".")
@click.option("--epochs", type=int, default=10, show_default=True)
@click.option("--lr", type=float, default=0.1, show_default=True)
@click.option("--depth", type=int, default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--repeats", type=int, default=1, show_default=True)
@click.option("--generate-negatives", "gen_neg", type=int, default=None,
              help="Sample this many closed-world negatives per input entity.")
def cmd_train(programs, train_path, test_path, out_dir, epochs, lr, depth,
              seed, repeats, gen_neg) -> None:
    """Train learnable weights; writes loss.tsv, metrics.json and learned.pl."""

    def body() -> None:
        from .training import evaluate, train, update_program_weights

        program = _load_program(programs)
        manifest = RunManifest(
            program_paths=[Path(p) for p in programs],
            train_examples=Path(train_path),
            test_examples=Path(test_path) if test_path else None,
            output_dir=Path(out_dir),
            seed=seed,
            epochs=epochs,
            learning_rate=lr,
            depth=depth,
            repeats=repeats,
            generate_negatives=gen_neg,
        )
        train_examples = _load_examples(manifest.train_examples)
        test_examples = (
            _load_examples(manifest.test_examples)
            if manifest.test_examples
            else None
        )
        if gen_neg is not None:
            train_examples += generate_lcwa_negatives(
                train_examples, program, gen_neg, seed=seed
            )
            if test_examples is not None:
                test_examples += generate_lcwa_negatives(
                    test_examples, program, gen_neg, seed=seed + 1
                )

        runs = []
        first_artifacts = None
        for r in range(max(1, repeats)):
            run_seed = seed + r
            index, tensors = build_store(program, seed=run_seed)
            for exs, label in ((train_examples, "train"), (test_examples, "test")):
                if not exs:
                    continue
                missing = check_examples(exs, index)
                if missing:
                    raise _fail(
                        f"{label} examples mention unknown entities: "
                        + ", ".join(missing),
                        EXIT_DATA,
                    )
            targets = []
            for ex in train_examples + (test_examples or []):
                key = (ex.atom.signature, False)
                if key not in targets:
                    targets.append(key)
            graph = build_network(program, index, tensors, targets, depth=depth)
            config = TrainConfig(
                epochs=epochs, learning_rate=lr,
                depth=graph.depth, seed=run_seed,
            )
            result = train(graph, train_examples, config)
            run_metrics: dict = {
                "seed": run_seed,
                "final_train_mse": result.loss_trace[-1],
                "train": evaluate(graph, train_examples).as_dict(),
            }
            if test_examples:
                run_metrics["test"] = evaluate(graph, test_examples).as_dict()
            runs.append(run_metrics)
            if r == 0:
                learned = update_program_weights(program, graph)
                first_artifacts = (result.loss_trace, learned)

        loss_trace, learned = first_artifacts
        manifest.output_dir.mkdir(parents=True, exist_ok=True)
        with open(manifest.output_dir / "loss.tsv", "w") as fh:
            fh.write("epoch\tmse\n")
            for epoch, mse in enumerate(loss_trace, start=1):
                fh.write(f"{epoch}\t{mse!r}\n")
        (manifest.output_dir / "learned.pl").write_text(emit_program(learned))

        payload: dict = {"repeats": len(runs), "runs": runs}
        side = "test" if test_examples else "train"
        aucs = [run[side]["weighted_average"] for run in runs]
        payload["summary"] = {
            "metric": f"{side} AUC (weighted average)",
            "mean": statistics.fmean(aucs),
            "stdev": statistics.stdev(aucs) if len(aucs) > 1 else 0.0,
        }
        _write_metrics(manifest, payload)
        click.echo(
            f"{side} AUC: mean {payload['summary']['mean']:.4f} "
            f"± {payload['summary']['stdev']:.4f} over {len(runs)} run(s)"
        )
        click.echo(f"artifacts written to {manifest.output_dir}")

    sys.exit(_run(body))


@main.command("eval")
@click.argument("programs", nargs=-1, required=True)
@click.option("--examples", "examples_path", required=True, type=click.Path())
@click.option("--depth", type=int, default=None)
@click.option("--seed", type=int, default=0)
def cmd_eval(programs, examples_path, depth, seed) -> None:
    """Score labelled examples and print AUC-ROC per target predicate."""

    def body() -> None:
        from .training import evaluate

        program = _load_program(programs)
        examples = _load_examples(Path(examples_path))
        index, tensors = build_store(program, seed=seed)
        missing = check_examples(examples, index)
        if missing:
            raise _fail(
                "examples mention unknown entities: " + ", ".join(missing),
                EXIT_DATA,
            )
        targets = []
        for ex in examples:
            key = (ex.atom.signature, False)
            if key not in targets:
                targets.append(key)
        graph = build_network(program, index, tensors, targets, depth=depth)
        report = evaluate(graph, examples)
        for name, auc in report.per_predicate.items():
            click.echo(f"{name}\t{auc:.6f}")
        click.echo(f"weighted_average\t{report.weighted_average:.6f}")
        click.echo(f"arithmetic_average\t{report.arithmetic_average:.6f}")

    sys.exit(_run(body))


if __name__ == "__main__":
    main()
