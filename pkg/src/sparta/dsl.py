"""Lexer and parser for the tensor-algebra source language.

A program declares index labels (static extent or `?` for sizes discovered at
run time), declares tensors with a per-dimension storage format, and then
fills, reads, and contracts them:

    def main() {
      IndexLabel [a] = [?];
      IndexLabel [c] = [32];
      Tensor<double> A([a,c], CSR);   # or an explicit list: {D,CU}
      A[a,c] = space_read("a.mtx");
      ...
    }
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .errors import ParseError, SemanticError
from .storage import FormatAttr, PRESET_FORMATS, preset_attrs

__all__ = [
    "Token", "TokenKind", "tokenize",
    "IndexLabelDecl", "TensorDeclNode", "TensorAccess",
    "ReadFill", "ConstFill", "Assign", "ProgramAst",
    "ExprClass", "classify_expr", "parse", "pretty_print",
    "DYNAMIC",
]

DYNAMIC = None  # extent marker for `?` labels

KEYWORDS = frozenset({"def", "main", "IndexLabel", "Tensor", "double"})
PUNCT = frozenset("[]{}(),=;*?<>")


class TokenKind(enum.Enum):
    KW = "keyword"
    IDENT = "identifier"
    INT = "integer"
    FLOAT = "float"
    STRING = "string"
    PUNCT = "punct"
    EOF = "eof"


@dataclass(frozen=True)
class Token:
    kind: TokenKind
    text: str
    line: int
    col: int

    def __repr__(self) -> str:
        return f"{self.kind.name}:{self.text!r}@{self.line}:{self.col}"


def tokenize(source: str) -> list[Token]:
    """Split source text into tokens; `#` comments run to end of line."""
    toks: list[Token] = []
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
        if ch == "#":
            while i < n and source[i] != "\n":
                i += 1
            continue
        start_col = col
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            text = source[i:j]
            kind = TokenKind.KW if text in KEYWORDS else TokenKind.IDENT
            toks.append(Token(kind, text, line, start_col))
            col += j - i
            i = j
            continue
        if ch.isdigit():
            j = i
            while j < n and source[j].isdigit():
                j += 1
            is_float = False
            if j < n and source[j] == "." and j + 1 < n and source[j + 1].isdigit():
                is_float = True
                j += 1
                while j < n and source[j].isdigit():
                    j += 1
            if j < n and source[j] in "eE":
                k = j + 1
                if k < n and source[k] in "+-":
                    k += 1
                if k < n and source[k].isdigit():
                    is_float = True
                    j = k
                    while j < n and source[j].isdigit():
                        j += 1
            text = source[i:j]
            toks.append(Token(TokenKind.FLOAT if is_float else TokenKind.INT,
                              text, line, start_col))
            col += j - i
            i = j
            continue
        if ch == '"':
            j = i + 1
            while j < n and source[j] not in '"\n':
                j += 1
            if j >= n or source[j] != '"':
                raise ParseError("unterminated string literal", line, start_col)
            toks.append(Token(TokenKind.STRING, source[i + 1:j], line, start_col))
            col += j - i + 1
            i = j + 1
            continue
        if ch in PUNCT:
            toks.append(Token(TokenKind.PUNCT, ch, line, start_col))
            i += 1
            col += 1
            continue
        raise ParseError(f"illegal character {ch!r}", line, start_col)
    toks.append(Token(TokenKind.EOF, "", line, col))
    return toks


@dataclass(frozen=True)
class IndexLabelDecl:
    name: str
    extent: int | None  # None for dynamic (`?`)


@dataclass(frozen=True)
class TensorDeclNode:
    name: str
    labels: tuple[str, ...]
    format_name: str | None                      # preset name, or None for explicit attrs
    attrs: tuple[FormatAttr, ...]                # always resolved


@dataclass(frozen=True)
class TensorAccess:
    tensor: str
    labels: tuple[str, ...]


@dataclass(frozen=True)
class ReadFill:
    target: TensorAccess
    filename: str


@dataclass(frozen=True)
class ConstFill:
    target: TensorAccess
    value: float


@dataclass(frozen=True)
class Assign:
    lhs: TensorAccess
    rhs1: TensorAccess
    rhs2: TensorAccess


Statement = ReadFill | ConstFill | Assign


@dataclass(frozen=True)
class ProgramAst:
    labels: tuple[IndexLabelDecl, ...]
    tensors: tuple[TensorDeclNode, ...]
    statements: tuple[Statement, ...]

    def label(self, name: str) -> IndexLabelDecl:
        return next(l for l in self.labels if l.name == name)

    def tensor(self, name: str) -> TensorDeclNode:
        return next(t for t in self.tensors if t.name == name)


class ExprClass(enum.Enum):
    CONTRACTION = "contraction"
    ELEMENTWISE = "elementwise"


def classify_expr(lhs: tuple[str, ...], rhs1: tuple[str, ...],
                  rhs2: tuple[str, ...]) -> ExprClass:
    """Decide whether a binary product is a contraction or elementwise.

    Shared right-hand labels absent from the left are summed (contraction);
    identical label lists everywhere mean an elementwise product. Anything
    else (a label free on one operand but missing from the output) is an
    error.
    """
    if rhs1 == rhs2 == lhs:
        return ExprClass.ELEMENTWISE
    shared = set(rhs1) & set(rhs2)
    lhs_set = set(lhs)
    for lab in lhs:
        if lab not in set(rhs1) | set(rhs2):
            raise SemanticError(f"output label {lab!r} does not appear on the right-hand side")
    for lab in list(rhs1) + list(rhs2):
        if lab not in shared and lab not in lhs_set:
            raise SemanticError(f"free label {lab!r} unbound on the left-hand side")
    if shared and not (shared & lhs_set):
        return ExprClass.CONTRACTION
    if not shared:
        return ExprClass.CONTRACTION  # outer product: nothing summed, still a product
    raise SemanticError(
        f"labels {sorted(shared & lhs_set)} are shared by both operands and the output; "
        "expected either a contraction or an identical elementwise pattern")


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.pos = 0

    def peek(self) -> Token:
        return self.toks[self.pos]

    def advance(self) -> Token:
        tok = self.toks[self.pos]
        self.pos += 1
        return tok

    def error(self, expected: str) -> ParseError:
        tok = self.peek()
        found = tok.text if tok.kind is not TokenKind.EOF else "end of input"
        return ParseError(f"expected {expected}, found {found!r}", tok.line, tok.col)

    def expect(self, text: str) -> Token:
        tok = self.peek()
        if tok.text != text or tok.kind not in (TokenKind.PUNCT, TokenKind.KW):
            raise self.error(repr(text))
        return self.advance()

    def expect_ident(self, what: str = "identifier") -> Token:
        tok = self.peek()
        if tok.kind is not TokenKind.IDENT:
            raise self.error(what)
        return self.advance()

    # grammar: program := "def" "main" "(" ")" "{" decl* stmt* "}"
    def program(self) -> ProgramAst:
        for text in ("def", "main", "(", ")", "{"):
            self.expect(text)
        labels: list[IndexLabelDecl] = []
        tensors: list[TensorDeclNode] = []
        while self.peek().text in ("IndexLabel", "Tensor"):
            if self.peek().text == "IndexLabel":
                labels.append(self.label_decl(labels))
            else:
                tensors.append(self.tensor_decl(labels, tensors))
        stmts: list[Statement] = []
        while self.peek().text != "}":
            if self.peek().kind is TokenKind.EOF:
                raise self.error("'}' or a statement")
            stmts.append(self.statement(tensors))
        self.expect("}")
        if self.peek().kind is not TokenKind.EOF:
            raise self.error("end of input")
        ast = ProgramAst(tuple(labels), tuple(tensors), tuple(stmts))
        _check_semantics(ast)
        return ast

    def label_decl(self, seen: list[IndexLabelDecl]) -> IndexLabelDecl:
        self.expect("IndexLabel")
        self.expect("[")
        name = self.expect_ident("index label name").text
        self.expect("]")
        self.expect("=")
        self.expect("[")
        tok = self.peek()
        if tok.text == "?":
            self.advance()
            extent = DYNAMIC
        elif tok.kind is TokenKind.INT:
            self.advance()
            extent = int(tok.text)
        else:
            raise self.error("an extent or '?'")
        self.expect("]")
        self.expect(";")
        if any(l.name == name for l in seen):
            raise SemanticError(f"index label {name!r} declared twice")
        return IndexLabelDecl(name, extent)

    def tensor_decl(self, labels: list[IndexLabelDecl],
                    seen: list[TensorDeclNode]) -> TensorDeclNode:
        self.expect("Tensor")
        self.expect("<")
        self.expect("double")
        self.expect(">")
        name = self.expect_ident("tensor name").text
        self.expect("(")
        self.expect("[")
        dims = [self.expect_ident("index label").text]
        while self.peek().text == ",":
            self.advance()
            dims.append(self.expect_ident("index label").text)
        self.expect("]")
        self.expect(",")
        tok = self.peek()
        format_name: str | None
        if tok.text == "{":
            self.advance()
            names = [self.expect_ident("storage attribute").text]
            while self.peek().text == ",":
                self.advance()
                names.append(self.expect_ident("storage attribute").text)
            self.expect("}")
            attrs = tuple(FormatAttr.from_name(n) for n in names)
            if len(attrs) != len(dims):
                raise SemanticError(
                    f"tensor {name!r}: {len(attrs)} attributes for {len(dims)} dimensions")
            format_name = None
        else:
            preset = self.expect_ident("format name").text
            if preset not in PRESET_FORMATS:
                raise SemanticError(f"tensor {name!r}: unknown format name {preset!r}")
            attrs = preset_attrs(preset, len(dims))
            format_name = preset
        self.expect(")")
        self.expect(";")
        if any(t.name == name for t in seen):
            raise SemanticError(f"tensor {name!r} declared twice")
        declared = {l.name for l in labels}
        for d in dims:
            if d not in declared:
                raise SemanticError(f"tensor {name!r} uses undeclared index label {d!r}")
        return TensorDeclNode(name, tuple(dims), format_name, attrs)

    def access(self) -> TensorAccess:
        name = self.expect_ident("tensor name").text
        self.expect("[")
        labs = [self.expect_ident("index label").text]
        while self.peek().text == ",":
            self.advance()
            labs.append(self.expect_ident("index label").text)
        self.expect("]")
        return TensorAccess(name, tuple(labs))

    def statement(self, tensors: list[TensorDeclNode]) -> Statement:
        lhs = self.access()
        self.expect("=")
        tok = self.peek()
        stmt: Statement
        if tok.kind is TokenKind.IDENT and tok.text == "space_read":
            self.advance()
            self.expect("(")
            fname = self.peek()
            if fname.kind is not TokenKind.STRING:
                raise self.error("a quoted file name")
            self.advance()
            self.expect(")")
            stmt = ReadFill(lhs, fname.text)
        elif tok.kind in (TokenKind.FLOAT, TokenKind.INT):
            self.advance()
            stmt = ConstFill(lhs, float(tok.text))
        elif tok.kind is TokenKind.IDENT:
            rhs1 = self.access()
            self.expect("*")
            rhs2 = self.access()
            stmt = Assign(lhs, rhs1, rhs2)
        else:
            raise self.error("space_read, a scalar, or a tensor product")
        self.expect(";")
        return stmt


def _check_access(ast: ProgramAst, acc: TensorAccess) -> None:
    try:
        decl = ast.tensor(acc.tensor)
    except StopIteration:
        raise SemanticError(f"undeclared tensor {acc.tensor!r}") from None
    if len(acc.labels) != len(decl.labels):
        raise SemanticError(
            f"tensor {acc.tensor!r} has rank {len(decl.labels)}, "
            f"accessed with {len(acc.labels)} labels")
    if acc.labels != decl.labels:
        raise SemanticError(
            f"access {acc.tensor}[{', '.join(acc.labels)}] must use the declared "
            f"labels [{', '.join(decl.labels)}]")


def _check_semantics(ast: ProgramAst) -> None:
    filled: set[str] = set()
    for stmt in ast.statements:
        if isinstance(stmt, ReadFill):
            _check_access(ast, stmt.target)
            filled.add(stmt.target.tensor)
        elif isinstance(stmt, ConstFill):
            _check_access(ast, stmt.target)
            filled.add(stmt.target.tensor)
        else:
            for acc in (stmt.lhs, stmt.rhs1, stmt.rhs2):
                _check_access(ast, acc)
            for acc in (stmt.rhs1, stmt.rhs2):
                if acc.tensor not in filled:
                    raise SemanticError(
                        f"tensor {acc.tensor!r} used before it is filled or read")
            classify_expr(stmt.lhs.labels, stmt.rhs1.labels, stmt.rhs2.labels)
            filled.add(stmt.lhs.tensor)


def parse(source: str) -> ProgramAst:
    """Parse source text into a checked AST."""
    return _Parser(tokenize(source)).program()


def _fmt_access(acc: TensorAccess) -> str:
    return f"{acc.tensor}[{','.join(acc.labels)}]"


def pretty_print(ast: ProgramAst) -> str:
    """Render an AST back to canonical source; parse(pretty_print(a)) == a."""
    lines = ["def main() {"]
    for lab in ast.labels:
        ext = "?" if lab.extent is DYNAMIC else str(lab.extent)
        lines.append(f"  IndexLabel [{lab.name}] = [{ext}];")
    for t in ast.tensors:
        fmt = t.format_name if t.format_name else "{" + ",".join(str(a) for a in t.attrs) + "}"
        lines.append(f"  Tensor<double> {t.name}([{','.join(t.labels)}],{fmt});")
    for stmt in ast.statements:
        if isinstance(stmt, ReadFill):
            lines.append(f'  {_fmt_access(stmt.target)} = space_read("{stmt.filename}");')
        elif isinstance(stmt, ConstFill):
            lines.append(f"  {_fmt_access(stmt.target)} = {stmt.value!r};")
        else:
            lines.append(f"  {_fmt_access(stmt.lhs)} = {_fmt_access(stmt.rhs1)}"
                         f" * {_fmt_access(stmt.rhs2)};")
    lines.append("}")
    return "\n".join(lines) + "\n"
