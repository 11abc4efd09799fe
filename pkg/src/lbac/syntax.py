"""Concrete syntax of the agent language: lexer, parser, pretty-printer.

Programs arrive as text, either from an LLM client or from ``.lbac``
script files.  The grammar is do-notation with braces and semicolons,
``<-`` binds, ``\\x ->`` lambdas and ``::`` annotations; ``--`` starts a
line comment.  Every AST node carries a source span; spans are excluded
from structural equality so that ``parse(pretty(e)) == e``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Union

from lbac.registry import BASE_TYPES, Registry, default_registry

RESERVED = {"do", "let", "in", "if", "then", "else", "return", "True", "False"}

# ---------------------------------------------------------------------------
# spans and errors


@dataclass(frozen=True)
class Span:
    line: int
    col: int
    start: int
    end: int

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


NO_SPAN = Span(0, 0, 0, 0)


class ParseError(Exception):
    def __init__(self, message: str, span: Span, expected: frozenset[str] = frozenset()):
        super().__init__(message)
        self.message = message
        self.span = span
        self.expected = expected

    def __str__(self) -> str:
        text = f"parse error at {self.span}: {self.message}"
        if self.expected:
            text += " (expected " + ", ".join(sorted(self.expected)) + ")"
        return text


class UnknownEffectError(ParseError):
    def __init__(self, name: str, span: Span):
        super().__init__(f"unknown effect '{name}'", span)
        self.name = name


class UnknownOpaqueTypeError(ParseError):
    def __init__(self, name: str, span: Span):
        super().__init__(f"unknown type '{name}'", span)
        self.name = name


# ---------------------------------------------------------------------------
# type terms


@dataclass(frozen=True)
class EffVar:
    """Effect-position unification variable (internal to inference)."""

    name: str

    def __str__(self) -> str:
        return self.name


EffectSlot = Union[str, EffVar]


class TypeTerm:
    pass


@dataclass(frozen=True)
class Base(TypeTerm):
    name: str


@dataclass(frozen=True)
class ListOf(TypeTerm):
    item: TypeTerm


@dataclass(frozen=True)
class Arrow(TypeTerm):
    arg: TypeTerm
    res: TypeTerm


@dataclass(frozen=True)
class EffectApp(TypeTerm):
    effect: EffectSlot
    result: TypeTerm


@dataclass(frozen=True)
class Opaque(TypeTerm):
    name: str
    args: tuple[TypeTerm, ...] = ()


@dataclass(frozen=True)
class TyVar(TypeTerm):
    name: str


def render_type(t: TypeTerm) -> str:
    """Concrete syntax for a type term, with minimal parentheses."""

    def atom(t: TypeTerm) -> str:
        match t:
            case Base("Unit"):
                return "()"
            case Base(name):
                return name
            case TyVar(name):
                return name
            case ListOf(item):
                return f"[{render_type(item)}]"
            case Opaque(name, ()):
                return name
            case _:
                return f"({render_type(t)})"

    match t:
        case Arrow(arg, res):
            return f"{atom(arg) if not isinstance(arg, Arrow) else '(' + render_type(arg) + ')'} -> {render_type(res)}"
        case EffectApp(effect, result):
            return f"{effect} {atom(result)}"
        case Opaque(name, args) if args:
            return name + " " + " ".join(atom(a) for a in args)
        case _:
            return atom(t)


# ---------------------------------------------------------------------------
# expressions


class Expr:
    span: Span


@dataclass(eq=True)
class IntLit(Expr):
    value: int
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(eq=True)
class StrLit(Expr):
    value: str
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(eq=True)
class BoolLit(Expr):
    value: bool
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(eq=True)
class UnitLit(Expr):
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(eq=True)
class ListLit(Expr):
    items: list[Expr]
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(eq=True)
class Var(Expr):
    name: str
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(eq=True)
class Lambda(Expr):
    param: str
    body: Expr
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(eq=True)
class Apply(Expr):
    fn: Expr
    arg: Expr
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(eq=True)
class Let(Expr):
    name: str
    bound: Expr
    body: Expr
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(eq=True)
class If(Expr):
    cond: Expr
    then: Expr
    orelse: Expr
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(eq=True)
class BinOp(Expr):
    op: str
    lhs: Expr
    rhs: Expr
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(eq=True)
class Return(Expr):
    value: Expr
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(eq=True)
class Annot(Expr):
    expr: Expr
    ty: TypeTerm
    span: Span = field(default=NO_SPAN, compare=False)


class DoStmt:
    pass


@dataclass(eq=True)
class Bind(DoStmt):
    name: str
    rhs: Expr
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(eq=True)
class LetStmt(DoStmt):
    name: str
    rhs: Expr
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(eq=True)
class ExprStmt(DoStmt):
    rhs: Expr
    span: Span = field(default=NO_SPAN, compare=False)


@dataclass(eq=True)
class DoBlock(Expr):
    stmts: list[DoStmt]
    span: Span = field(default=NO_SPAN, compare=False)


# operator precedence, loosest to tightest; all levels left-associative
# except ++, && and || which are right-associative, and comparisons which
# do not chain
OP_LEVELS: list[tuple[tuple[str, ...], str]] = [
    (("||",), "right"),
    (("&&",), "right"),
    (("==", "/=", "<=", "<", ">=", ">"), "none"),
    (("++",), "right"),
    (("+", "-"), "left"),
    (("*",), "left"),
    (("//",), "left"),
]

_OP_PREC = {op: i for i, (ops, _) in enumerate(OP_LEVELS) for op in ops}
_OP_ASSOC = {op: assoc for ops, assoc in OP_LEVELS for op in ops}


# ---------------------------------------------------------------------------
# lexer

_SYMBOLS = [
    "->", "<-", "::", "==", "/=", "<=", ">=", "++", "&&", "||", "//",
    "\\", "(", ")", "[", "]", "{", "}", ";", ",", "=", "+", "-", "*",
    "<", ">",
]

_ESCAPES = {"n": "\n", '"': '"', "\\": "\\"}
_UNESCAPES = {"\n": "\\n", '"': '\\"', "\\": "\\\\"}


@dataclass(frozen=True)
class Token:
    kind: str  # int | str | ident | conident | sym | keyword | eof
    text: str
    value: object
    span: Span


def _is_ident_start(c: str) -> bool:
    return c.isalpha() and c.isascii() or c == "_"


def _is_ident_char(c: str) -> bool:
    return (c.isalnum() and c.isascii()) or c in ("_", "'")


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(source)

    def here(start: int, start_line: int, start_col: int, end: int) -> Span:
        return Span(start_line, start_col, start, end)

    while i < n:
        c = source[i]
        if c in (" ", "\t", "\r"):
            i += 1
            col += 1
            continue
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if source.startswith("--", i):
            while i < n and source[i] != "\n":
                i += 1
            continue
        start, start_line, start_col = i, line, col
        if c.isdigit() and c.isascii():
            while i < n and source[i].isdigit() and source[i].isascii():
                i += 1
            text = source[start:i]
            col += i - start
            tokens.append(Token("int", text, int(text), here(start, start_line, start_col, i)))
            continue
        if c == '"':
            i += 1
            col += 1
            chars: list[str] = []
            while True:
                if i >= n:
                    raise ParseError("unterminated string literal", here(start, start_line, start_col, i))
                ch = source[i]
                if ch == '"':
                    i += 1
                    col += 1
                    break
                if ch == "\n":
                    raise ParseError("newline in string literal", here(start, start_line, start_col, i))
                if ch == "\\":
                    if i + 1 >= n or source[i + 1] not in _ESCAPES:
                        raise ParseError(
                            "invalid escape in string literal (only \\n, \\\" and \\\\ are allowed)",
                            here(i, line, col, min(i + 2, n)),
                        )
                    chars.append(_ESCAPES[source[i + 1]])
                    i += 2
                    col += 2
                    continue
                chars.append(ch)
                i += 1
                col += 1
            tokens.append(Token("str", source[start:i], "".join(chars), here(start, start_line, start_col, i)))
            continue
        if _is_ident_start(c):
            while i < n and _is_ident_char(source[i]):
                i += 1
            text = source[start:i]
            col += i - start
            span = here(start, start_line, start_col, i)
            if text in RESERVED:
                tokens.append(Token("keyword", text, text, span))
            elif text[0].isupper():
                tokens.append(Token("conident", text, text, span))
            else:
                tokens.append(Token("ident", text, text, span))
            continue
        for sym in _SYMBOLS:
            if source.startswith(sym, i):
                i += len(sym)
                col += len(sym)
                tokens.append(Token("sym", sym, sym, here(start, start_line, start_col, i)))
                break
        else:
            raise ParseError(f"unexpected character {c!r}", here(start, start_line, start_col, i + 1))
    tokens.append(Token("eof", "", None, Span(line, col, n, n)))
    return tokens


# ---------------------------------------------------------------------------
# parser


class _Parser:
    def __init__(self, tokens: list[Token], registry: Registry):
        self.tokens = tokens
        self.pos = 0
        self.registry = registry

    def peek(self, offset: int = 0) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def at_sym(self, *syms: str) -> bool:
        tok = self.peek()
        return tok.kind == "sym" and tok.text in syms

    def at_keyword(self, *kws: str) -> bool:
        tok = self.peek()
        return tok.kind == "keyword" and tok.text in kws

    def expect_sym(self, sym: str) -> Token:
        tok = self.peek()
        if tok.kind == "sym" and tok.text == sym:
            return self.next()
        raise ParseError(f"found {tok.text!r}" if tok.kind != "eof" else "unexpected end of input",
                         tok.span, frozenset({repr(sym)}))

    def expect_keyword(self, kw: str) -> Token:
        tok = self.peek()
        if tok.kind == "keyword" and tok.text == kw:
            return self.next()
        raise ParseError(f"found {tok.text!r}" if tok.kind != "eof" else "unexpected end of input",
                         tok.span, frozenset({repr(kw)}))

    def expect_ident(self) -> Token:
        tok = self.peek()
        if tok.kind == "ident":
            return self.next()
        raise ParseError(f"found {tok.text!r}" if tok.kind != "eof" else "unexpected end of input",
                         tok.span, frozenset({"identifier"}))

    def span_from(self, start: Span) -> Span:
        prev = self.tokens[max(self.pos - 1, 0)]
        return Span(start.line, start.col, start.start, prev.span.end)

    # -- expressions --------------------------------------------------------

    def expr(self) -> Expr:
        e = self.expr_noannot()
        if self.at_sym("::"):
            self.next()
            ty = self.type_term()
            return Annot(e, ty, self.span_from(e.span))
        return e

    def expr_noannot(self) -> Expr:
        tok = self.peek()
        if tok.kind == "sym" and tok.text == "\\":
            return self.lambda_expr()
        if self.at_keyword("let"):
            return self.let_expr()
        if self.at_keyword("if"):
            return self.if_expr()
        return self.binop_expr(0)

    def lambda_expr(self) -> Expr:
        start = self.next().span  # backslash
        params = [self.expect_ident().text]
        while self.peek().kind == "ident":
            params.append(self.next().text)
        self.expect_sym("->")
        body = self.expr_noannot()
        span = self.span_from(start)
        for p in reversed(params):
            body = Lambda(p, body, span)
        return body

    def let_expr(self) -> Expr:
        start = self.next().span  # let
        name = self.expect_ident().text
        params = []
        while self.peek().kind == "ident":
            params.append(self.next().text)
        self.expect_sym("=")
        bound = self.expr_noannot()
        self.expect_keyword("in")
        body = self.expr_noannot()
        span = self.span_from(start)
        for p in reversed(params):
            bound = Lambda(p, bound, bound.span)
        return Let(name, bound, body, span)

    def if_expr(self) -> Expr:
        start = self.next().span  # if
        cond = self.expr_noannot()
        self.expect_keyword("then")
        then = self.expr_noannot()
        self.expect_keyword("else")
        orelse = self.expr_noannot()
        return If(cond, then, orelse, self.span_from(start))

    def binop_expr(self, level: int) -> Expr:
        if level >= len(OP_LEVELS):
            return self.apply_expr()
        ops, assoc = OP_LEVELS[level]
        lhs = self.binop_expr(level + 1)
        if assoc == "left":
            while self.at_sym(*ops):
                op = self.next().text
                rhs = self.binop_expr(level + 1)
                lhs = BinOp(op, lhs, rhs, self.span_from(lhs.span))
            return lhs
        if assoc == "right":
            if self.at_sym(*ops):
                op = self.next().text
                rhs = self.binop_expr(level)
                return BinOp(op, lhs, rhs, self.span_from(lhs.span))
            return lhs
        # non-chaining comparison
        if self.at_sym(*ops):
            op = self.next().text
            rhs = self.binop_expr(level + 1)
            return BinOp(op, lhs, rhs, self.span_from(lhs.span))
        return lhs

    def apply_expr(self) -> Expr:
        head = self.return_or_atom()
        while self.at_atom_start():
            arg = self.return_or_atom()
            head = Apply(head, arg, self.span_from(head.span))
        return head

    def return_or_atom(self) -> Expr:
        if self.at_keyword("return"):
            start = self.next().span
            value = self.atom()
            return Return(value, self.span_from(start))
        return self.atom()

    def at_atom_start(self) -> bool:
        tok = self.peek()
        if tok.kind in ("int", "str", "ident"):
            return True
        if tok.kind == "keyword" and tok.text in ("True", "False", "do", "return"):
            return True
        return tok.kind == "sym" and tok.text in ("(", "[")

    def atom(self) -> Expr:
        tok = self.peek()
        if tok.kind == "int":
            self.next()
            return IntLit(tok.value, tok.span)
        if tok.kind == "str":
            self.next()
            return StrLit(tok.value, tok.span)
        if tok.kind == "ident":
            self.next()
            return Var(tok.text, tok.span)
        if tok.kind == "keyword":
            if tok.text in ("True", "False"):
                self.next()
                return BoolLit(tok.text == "True", tok.span)
            if tok.text == "do":
                return self.do_block()
        if self.at_sym("("):
            start = self.next().span
            if self.at_sym(")"):
                self.next()
                return UnitLit(self.span_from(start))
            if self.at_sym("-") and self.peek(1).kind == "int":
                self.next()
                lit = self.next()
                self.expect_sym(")")
                return IntLit(-lit.value, self.span_from(start))
            inner = self.expr()
            self.expect_sym(")")
            inner.span = self.span_from(start)
            return inner
        if self.at_sym("["):
            start = self.next().span
            items: list[Expr] = []
            if not self.at_sym("]"):
                items.append(self.expr())
                while self.at_sym(","):
                    self.next()
                    items.append(self.expr())
            self.expect_sym("]")
            return ListLit(items, self.span_from(start))
        raise ParseError(
            f"found {tok.text!r}" if tok.kind != "eof" else "unexpected end of input",
            tok.span,
            frozenset({"expression"}),
        )

    def do_block(self) -> Expr:
        start = self.expect_keyword("do").span
        self.expect_sym("{")
        stmts: list[DoStmt] = []
        bound_names: set[str] = set()
        while True:
            if self.at_sym("}"):
                break
            stmts.append(self.do_stmt(bound_names))
            if self.at_sym(";"):
                self.next()
                continue
            break
        self.expect_sym("}")
        span = self.span_from(start)
        if not stmts:
            raise ParseError("do-block must contain at least one statement", span)
        last = stmts[-1]
        if not isinstance(last, ExprStmt):
            raise ParseError("the final statement of a do-block must be an expression", last.span)
        return DoBlock(stmts, span)

    def do_stmt(self, bound_names: set[str]) -> DoStmt:
        tok = self.peek()
        if tok.kind == "ident" and self.peek(1).kind == "sym" and self.peek(1).text == "<-":
            name_tok = self.next()
            self.next()  # <-
            rhs = self.expr()
            if name_tok.text in bound_names:
                raise ParseError(f"'{name_tok.text}' is bound more than once in this do-block", name_tok.span)
            bound_names.add(name_tok.text)
            return Bind(name_tok.text, rhs, self.span_from(name_tok.span))
        if self.at_keyword("let"):
            start = self.next().span
            name_tok = self.expect_ident()
            params = []
            while self.peek().kind == "ident":
                params.append(self.next().text)
            self.expect_sym("=")
            rhs = self.expr()
            for p in reversed(params):
                rhs = Lambda(p, rhs, rhs.span)
            # `let x = e in b` at statement position is a let-expression
            if self.at_keyword("in"):
                self.next()
                body = self.expr()
                return ExprStmt(Let(name_tok.text, rhs, body, self.span_from(start)),
                                self.span_from(start))
            if name_tok.text in bound_names:
                raise ParseError(f"'{name_tok.text}' is bound more than once in this do-block", name_tok.span)
            bound_names.add(name_tok.text)
            return LetStmt(name_tok.text, rhs, self.span_from(start))
        rhs = self.expr()
        return ExprStmt(rhs, rhs.span)

    # -- types --------------------------------------------------------------

    def type_term(self) -> TypeTerm:
        lhs = self.type_app()
        if self.at_sym("->"):
            self.next()
            rhs = self.type_term()
            return Arrow(lhs, rhs)
        return lhs

    def type_app(self) -> TypeTerm:
        head_tok = self.peek()
        parts: list[tuple[TypeTerm | str, Token]] = []
        while True:
            tok = self.peek()
            if tok.kind == "conident":
                self.next()
                parts.append((tok.text, tok))
            elif tok.kind == "ident":
                self.next()
                parts.append((TyVar(tok.text), tok))
            elif tok.kind == "sym" and tok.text in ("(", "["):
                parts.append((self.type_atom(), tok))
            else:
                break
        if not parts:
            raise ParseError(
                f"found {head_tok.text!r}" if head_tok.kind != "eof" else "unexpected end of input",
                head_tok.span,
                frozenset({"type"}),
            )
        head, head_tok = parts[0]
        args = [
            self.resolve_type_name(p, tok, []) if isinstance(p, str) else p
            for p, tok in parts[1:]
        ]
        if isinstance(head, str):
            return self.resolve_type_name(head, head_tok, args)
        if args:
            # a lowercase head applied to one argument is an effect variable,
            # used in library signatures such as (a -> e b) -> [a] -> e [b]
            if isinstance(head, TyVar) and len(args) == 1:
                return EffectApp(EffVar(head.name), args[0])
            raise ParseError("type variables apply to at most one argument", head_tok.span)
        return head

    def type_atom(self) -> TypeTerm:
        if self.at_sym("("):
            start = self.next()
            if self.at_sym(")"):
                self.next()
                return Base("Unit")
            inner = self.type_term()
            self.expect_sym(")")
            return inner
        if self.at_sym("["):
            self.next()
            inner = self.type_term()
            self.expect_sym("]")
            return ListOf(inner)
        tok = self.next()
        if tok.kind == "conident":
            return self.resolve_type_name(tok.text, tok, [])
        if tok.kind == "ident":
            return TyVar(tok.text)
        raise ParseError(f"found {tok.text!r}", tok.span, frozenset({"type"}))

    def resolve_type_name(self, name: str, tok: Token, args: list[TypeTerm]) -> TypeTerm:
        if name in BASE_TYPES:
            if args:
                raise ParseError(f"base type '{name}' takes no arguments", tok.span)
            return Base(name)
        if self.registry.is_effect(name):
            if len(args) != 1:
                raise ParseError(f"effect '{name}' applies to exactly one result type", tok.span)
            return EffectApp(name, args[0])
        if self.registry.is_opaque(name):
            arity = self.registry.opaques[name]
            if len(args) != arity:
                raise ParseError(f"type '{name}' expects {arity} argument(s), got {len(args)}", tok.span)
            return Opaque(name, tuple(args))
        # unknown capitalized head: an applied head looks like an effect
        # application, a bare one like a misspelled opaque or base type
        if args:
            raise UnknownEffectError(name, tok.span)
        raise UnknownOpaqueTypeError(name, tok.span)


def parse_program(source: str, registry: Registry | None = None) -> Expr:
    """Parse a whole program; raises ParseError on malformed input."""
    registry = registry or default_registry()
    parser = _Parser(tokenize(source), registry)
    expr = parser.expr()
    tok = parser.peek()
    if tok.kind != "eof":
        raise ParseError(f"unexpected trailing input {tok.text!r}", tok.span)
    return expr


def parse_type(source: str, registry: Registry | None = None) -> TypeTerm:
    """Parse a type term with names resolved against the registry."""
    registry = registry or default_registry()
    parser = _Parser(tokenize(source), registry)
    ty = parser.type_term()
    tok = parser.peek()
    if tok.kind != "eof":
        raise ParseError(f"unexpected trailing input {tok.text!r}", tok.span)
    return ty


# ---------------------------------------------------------------------------
# pretty-printer

_PREC_ANNOT = 0
_PREC_HEAD = 1  # lambda / let / if
_PREC_OP_BASE = 2  # binop levels follow OP_LEVELS offsets
_PREC_APP = _PREC_OP_BASE + len(OP_LEVELS)
_PREC_ATOM = _PREC_APP + 1


def _escape(s: str) -> str:
    return "".join(_UNESCAPES.get(c, c) for c in s)


def pretty(e: Expr) -> str:
    """Render an expression so that reparsing yields a structurally equal tree."""
    return _pp(e, _PREC_ANNOT)


def _parens_if(needed: bool, text: str) -> str:
    return f"({text})" if needed else text


def _pp(e: Expr, prec: int) -> str:
    match e:
        case IntLit(value):
            return str(value) if value >= 0 else f"({value})"
        case StrLit(value):
            return f'"{_escape(value)}"'
        case BoolLit(value):
            return "True" if value else "False"
        case UnitLit():
            return "()"
        case Var(name):
            return name
        case ListLit(items):
            return "[" + ", ".join(_pp(i, _PREC_ANNOT) for i in items) + "]"
        case Lambda(param, body):
            return _parens_if(prec > _PREC_HEAD, f"\\{param} -> {_pp(body, _PREC_HEAD)}")
        case Let(name, bound, body):
            text = f"let {name} = {_pp(bound, _PREC_HEAD)} in {_pp(body, _PREC_HEAD)}"
            return _parens_if(prec > _PREC_HEAD, text)
        case If(cond, then, orelse):
            text = f"if {_pp(cond, _PREC_HEAD)} then {_pp(then, _PREC_HEAD)} else {_pp(orelse, _PREC_HEAD)}"
            return _parens_if(prec > _PREC_HEAD, text)
        case BinOp(op, lhs, rhs):
            level = _PREC_OP_BASE + _OP_PREC[op]
            assoc = _OP_ASSOC[op]
            lp = level if assoc == "left" else level + 1
            rp = level + 1 if assoc in ("left", "none") else level
            text = f"{_pp(lhs, lp)} {op} {_pp(rhs, rp)}"
            return _parens_if(prec > level, text)
        case Apply(fn, arg):
            text = f"{_pp(fn, _PREC_APP)} {_pp(arg, _PREC_ATOM)}"
            return _parens_if(prec > _PREC_APP, text)
        case Return(value):
            return _parens_if(prec > _PREC_APP, f"return {_pp(value, _PREC_ATOM)}")
        case Annot(expr, ty):
            return _parens_if(prec > _PREC_ANNOT, f"{_pp(expr, _PREC_HEAD)} :: {render_type(ty)}")
        case DoBlock(stmts):
            rendered = "; ".join(_pp_stmt(s) for s in stmts)
            return f"do {{ {rendered} }}"
        case _:
            raise TypeError(f"not an expression node: {e!r}")


def _pp_stmt(s: DoStmt) -> str:
    match s:
        case Bind(name, rhs):
            return f"{name} <- {_pp(rhs, _PREC_HEAD)}"
        case LetStmt(name, rhs):
            return f"let {name} = {_pp(rhs, _PREC_HEAD)}"
        case ExprStmt(rhs):
            return _pp(rhs, _PREC_HEAD)
        case _:
            raise TypeError(f"not a statement node: {s!r}")


def iter_subexprs(e: Expr) -> Iterator[Expr]:
    """Yield e and every expression node beneath it."""
    yield e
    match e:
        case ListLit(items):
            for item in items:
                yield from iter_subexprs(item)
        case Lambda(_, body):
            yield from iter_subexprs(body)
        case Apply(fn, arg):
            yield from iter_subexprs(fn)
            yield from iter_subexprs(arg)
        case Let(_, bound, body):
            yield from iter_subexprs(bound)
            yield from iter_subexprs(body)
        case If(cond, then, orelse):
            yield from iter_subexprs(cond)
            yield from iter_subexprs(then)
            yield from iter_subexprs(orelse)
        case BinOp(_, lhs, rhs):
            yield from iter_subexprs(lhs)
            yield from iter_subexprs(rhs)
        case Return(value):
            yield from iter_subexprs(value)
        case Annot(expr, _):
            yield from iter_subexprs(expr)
        case DoBlock(stmts):
            for stmt in stmts:
                yield from iter_subexprs(stmt.rhs)  # type: ignore[attr-defined]
