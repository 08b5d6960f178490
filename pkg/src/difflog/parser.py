"""Lexer and recursive-descent parser for the logic program surface syntax.

Grammar (comments run from ``%`` to end of line):

    clause     := directive | [ number "::" ] atom [ ":-" body ] "."
    directive  := "#" name "(" ... ")" "."
    body       := atom { "," atom }
    atom       := lowername [ "(" term { "," term } ")" ]
    term       := lowername | uppername | number

Constants start with a lowercase letter, variables with an uppercase letter
or underscore; a bare ``_`` is a fresh anonymous variable per occurrence.
"""
from __future__ import annotations

from dataclasses import dataclass

from .language import (
    Atom,
    CombinerDirective,
    Constant,
    Directive,
    Fact,
    FunctionDirective,
    LearnableDirective,
    Number,
    Pos,
    Program,
    RecursionDepthDirective,
    Rule,
    Term,
    Variable,
)


class ParseError(Exception):
    """Syntax or structural error with a 1-based source position."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{line}:{column}: {message}")
        self.message = message
        self.line = line
        self.column = column


@dataclass(frozen=True)
class Token:
    kind: str
    value: str
    line: int
    column: int


_PUNCT = {
    "(": "LPAREN",
    ")": "RPAREN",
    ",": "COMMA",
    "/": "SLASH",
    "=": "EQUALS",
    "#": "HASH",
}

_DIGITS = set("0123456789")
_LETTERS = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ")
_NAME_CHARS = _LETTERS | _DIGITS | {"_"}


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    line, col = 1, 1
    i, n = 0, len(source)
    while i < n:
        ch = source[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "%":
            while i < n and source[i] != "\n":
                i += 1
            continue
        start_line, start_col = line, col
        if ch == ":" and source.startswith("::", i):
            tokens.append(Token("WEIGHTSEP", "::", start_line, start_col))
            i += 2
            col += 2
            continue
        if ch == ":" and source.startswith(":-", i):
            tokens.append(Token("IMPLIES", ":-", start_line, start_col))
            i += 2
            col += 2
            continue
        if ch in _PUNCT:
            tokens.append(Token(_PUNCT[ch], ch, start_line, start_col))
            i += 1
            col += 1
            continue
        if ch in _DIGITS or (
            ch == "-" and i + 1 < n and source[i + 1] in _DIGITS
        ):
            j = i + 1 if ch == "-" else i
            while j < n and source[j] in _DIGITS:
                j += 1
            if j + 1 < n and source[j] == "." and source[j + 1] in _DIGITS:
                j += 1
                while j < n and source[j] in _DIGITS:
                    j += 1
            if j < n and source[j] in "eE":
                k = j + 1
                if k < n and source[k] in "+-":
                    k += 1
                if k < n and source[k] in _DIGITS:
                    j = k
                    while j < n and source[j] in _DIGITS:
                        j += 1
            text = source[i:j]
            tokens.append(Token("NUMBER", text, start_line, start_col))
            col += j - i
            i = j
            continue
        if ch == ".":
            tokens.append(Token("PERIOD", ".", start_line, start_col))
            i += 1
            col += 1
            continue
        if ch in _LETTERS or ch == "_":
            j = i
            while j < n and source[j] in _NAME_CHARS:
                j += 1
            text = source[i:j]
            kind = "LOWERNAME" if text[0].islower() else "UPPERNAME"
            tokens.append(Token(kind, text, start_line, start_col))
            col += j - i
            i = j
            continue
        raise ParseError(f"unexpected character {ch!r}", line, col)
    tokens.append(Token("EOF", "", line, col))
    return tokens


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.i = 0
        self.anon_counter = 0

    def peek(self) -> Token:
        return self.tokens[self.i]

    def advance(self) -> Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, kind: str, what: str | None = None) -> Token:
        tok = self.peek()
        if tok.kind != kind:
            expected = what or kind.lower()
            raise ParseError(
                f"expected {expected}, found {tok.value!r}", tok.line, tok.column
            )
        return self.advance()

    def error(self, message: str, tok: Token | None = None) -> ParseError:
        tok = tok or self.peek()
        return ParseError(message, tok.line, tok.column)

    # --- grammar productions -------------------------------------------

    def parse_program(self) -> Program:
        program = Program()
        while self.peek().kind != "EOF":
            if self.peek().kind == "HASH":
                program.directives.append(self.parse_directive())
            else:
                item = self.parse_clause()
                if isinstance(item, Fact):
                    program.facts.append(item)
                else:
                    program.rules.append(item)
        return program

    def parse_clause(self) -> Fact | Rule:
        start = self.peek()
        weight: float | None = None
        if self.peek().kind == "NUMBER":
            weight = float(self.advance().value)
            self.expect("WEIGHTSEP", "'::' after fact weight")
        head = self.parse_atom()
        if self.peek().kind == "IMPLIES":
            if weight is not None:
                raise self.error("rules cannot carry a weight", start)
            self.advance()
            body = [self.parse_atom()]
            while self.peek().kind == "COMMA":
                self.advance()
                body.append(self.parse_atom())
            self.expect("PERIOD", "'.' at end of rule")
            return self._check_rule(head, tuple(body), start)
        self.expect("PERIOD", "'.' at end of fact")
        return self._check_fact(head, 1.0 if weight is None else weight, start)

    def parse_atom(self) -> Atom:
        name_tok = self.expect("LOWERNAME", "predicate name")
        pos: Pos = (name_tok.line, name_tok.column)
        terms: list[Term] = []
        if self.peek().kind == "LPAREN":
            self.advance()
            terms.append(self.parse_term())
            while self.peek().kind == "COMMA":
                self.advance()
                terms.append(self.parse_term())
            self.expect("RPAREN", "')' closing argument list")
        return Atom(name_tok.value, tuple(terms), pos=pos)

    def parse_term(self) -> Term:
        tok = self.peek()
        if tok.kind == "LOWERNAME":
            self.advance()
            if self.peek().kind == "LPAREN":
                raise self.error(
                    "compound terms are not supported (first-order terms only)"
                )
            return Constant(tok.value)
        if tok.kind == "UPPERNAME":
            self.advance()
            if tok.value == "_":
                name = f"_G{self.anon_counter}"
                self.anon_counter += 1
                return Variable(name)
            return Variable(tok.value)
        if tok.kind == "NUMBER":
            self.advance()
            return Number(float(tok.value))
        raise self.error(f"expected a term, found {tok.value!r}")

    def parse_directive(self) -> Directive:
        hash_tok = self.expect("HASH")
        pos: Pos = (hash_tok.line, hash_tok.column)
        name = self.expect("LOWERNAME", "directive name").value
        self.expect("LPAREN", "'(' after directive name")
        if name == "learnable":
            pred, arity = self.parse_pred_indicator()
            dense = False
            if self.peek().kind == "COMMA":
                self.advance()
                flag = self.expect("LOWERNAME", "'dense'")
                if flag.value != "dense":
                    raise self.error(
                        f"unknown learnable flag {flag.value!r}", flag
                    )
                dense = True
            directive: Directive = LearnableDirective(pred, arity, dense, pos=pos)
        elif name == "function":
            pred, arity = self.parse_pred_indicator()
            self.expect("COMMA", "',' before builtin name")
            builtin = self.expect("LOWERNAME", "builtin name").value
            directive = FunctionDirective(pred, arity, builtin, pos=pos)
        elif name == "recursion_depth":
            tok = self.expect("NUMBER", "recursion depth")
            depth = float(tok.value)
            if depth < 0 or depth != int(depth):
                raise self.error("recursion depth must be an integer >= 0", tok)
            directive = RecursionDepthDirective(int(depth), pos=pos)
        elif name == "combiner":
            pairs: dict[str, str] = {}
            for _ in range(2):
                key = self.expect("LOWERNAME", "'and' or 'or'")
                self.expect("EQUALS", "'='")
                value = self.expect("LOWERNAME", "combiner name").value
                if key.value not in ("and", "or") or key.value in pairs:
                    raise self.error("expected 'and=<name>, or=<name>'", key)
                pairs[key.value] = value
                if self.peek().kind == "COMMA":
                    self.advance()
            if set(pairs) != {"and", "or"}:
                raise self.error("combiner requires both and= and or=")
            directive = CombinerDirective(pairs["and"], pairs["or"], pos=pos)
        else:
            raise self.error(f"unknown directive #{name}", hash_tok)
        self.expect("RPAREN", "')' closing directive")
        self.expect("PERIOD", "'.' at end of directive")
        return directive

    def parse_pred_indicator(self) -> tuple[str, int]:
        pred = self.expect("LOWERNAME", "predicate name").value
        self.expect("SLASH", "'/' in predicate indicator")
        tok = self.expect("NUMBER", "arity")
        arity = float(tok.value)
        if arity < 0 or arity != int(arity):
            raise self.error("arity must be an integer >= 0", tok)
        return pred, int(arity)

    # --- structural checks ---------------------------------------------

    def _check_fact(self, atom: Atom, weight: float, start: Token) -> Fact:
        if atom.arity > 2:
            raise ParseError(
                f"facts may have arity at most 2, got {atom.predicate}/{atom.arity}",
                start.line,
                start.column,
            )
        for i, term in enumerate(atom.terms):
            if isinstance(term, Number) and i != atom.arity - 1:
                raise ParseError(
                    "a numeric value may only be the last argument of a fact",
                    start.line,
                    start.column,
                )
        if atom.arity == 2 and isinstance(atom.terms[0], Number):
            raise ParseError(
                "a numeric value may only be the last argument of a fact",
                start.line,
                start.column,
            )
        if any(isinstance(t, Variable) for t in atom.terms):
            raise ParseError(
                "facts must be ground (no variables)", start.line, start.column
            )
        return Fact(atom, weight, pos=(start.line, start.column))

    def _check_rule(self, head: Atom, body: tuple[Atom, ...], start: Token) -> Rule:
        if head.arity == 0:
            raise ParseError(
                f"propositional rule head {head.predicate!r} is not allowed",
                start.line,
                start.column,
            )
        for atom in (head, *body):
            for term in atom.terms:
                if isinstance(term, Number):
                    raise ParseError(
                        f"numeric constants are not allowed in rules ({atom})",
                        *(atom.pos or (start.line, start.column)),
                    )
        return Rule(head, body, pos=(start.line, start.column))


def parse_program(source: str) -> Program:
    """Parse program source into a validated :class:`Program`.

    Raises :class:`ParseError` with a source position on any rejection.
    """
    return _Parser(tokenize(source)).parse_program()


def parse_atom(source: str) -> Atom:
    """Parse a single atom such as ``p(a, Y)`` (no trailing period)."""
    parser = _Parser(tokenize(source))
    atom = parser.parse_atom()
    parser.expect("EOF", "end of input after atom")
    return atom
