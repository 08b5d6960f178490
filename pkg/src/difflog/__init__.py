"""difflog: compile weighted logic programs into differentiable networks."""

from .autodiff import BUILTINS, EvaluationError, Node, Tape
from .language import (
    Atom,
    CombinerDirective,
    Constant,
    Fact,
    FunctionDirective,
    LearnableDirective,
    Number,
    Program,
    RecursionDepthDirective,
    Rule,
    Term,
    Variable,
    emit_program,
)
from .network import (
    BuildError,
    NetworkGraph,
    QueryError,
    build_network,
    forward,
    network_dot,
)
from .parser import ParseError, parse_atom, parse_program
from .paths import (
    CompileError,
    Path,
    PathExplosionError,
    RulePathPlan,
    TermGraph,
    build_term_graph,
    compile_rule,
    find_clause_paths,
    find_paths,
    merge_into_dag,
)
from .store import (
    EntityIndex,
    PredicateTensor,
    StoreError,
    UnknownEntityError,
    build_store,
    one_hot,
    transpose_tensor,
)
from .training import (
    DataError,
    Example,
    TrainConfig,
    TrainingError,
    TrainResult,
    auc_roc,
    evaluate,
    train,
    update_program_weights,
)
from .validate import Diagnostic, has_errors, validate_program

__all__ = [
    "Atom",
    "BUILTINS",
    "BuildError",
    "CombinerDirective",
    "CompileError",
    "Constant",
    "DataError",
    "Diagnostic",
    "EntityIndex",
    "EvaluationError",
    "Example",
    "Fact",
    "FunctionDirective",
    "LearnableDirective",
    "NetworkGraph",
    "Node",
    "Number",
    "ParseError",
    "Path",
    "PathExplosionError",
    "PredicateTensor",
    "Program",
    "QueryError",
    "RecursionDepthDirective",
    "Rule",
    "RulePathPlan",
    "StoreError",
    "Tape",
    "Term",
    "TermGraph",
    "TrainConfig",
    "TrainResult",
    "TrainingError",
    "UnknownEntityError",
    "Variable",
    "auc_roc",
    "build_network",
    "build_store",
    "build_term_graph",
    "compile_rule",
    "emit_program",
    "evaluate",
    "find_clause_paths",
    "find_paths",
    "forward",
    "merge_into_dag",
    "network_dot",
    "one_hot",
    "parse_atom",
    "parse_program",
    "train",
    "transpose_tensor",
    "update_program_weights",
    "validate_program",
]
