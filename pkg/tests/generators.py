"""Random program generators used by property and acceptance tests."""

from __future__ import annotations

import random
import string

from lbac.syntax import (
    Annot,
    Apply,
    Base,
    BinOp,
    Bind,
    BoolLit,
    DoBlock,
    Expr,
    ExprStmt,
    If,
    IntLit,
    Lambda,
    Let,
    LetStmt,
    ListLit,
    ListOf,
    Return,
    StrLit,
    UnitLit,
    Var,
)

# ---------------------------------------------------------------------------
# arbitrary expressions for parse/pretty round-trips

_IDENT_START = string.ascii_lowercase + "_"
_IDENT_REST = string.ascii_lowercase + string.digits + "_'"
_RESERVED = {"do", "let", "in", "if", "then", "else", "return"}


def gen_ident(rng: random.Random) -> str:
    while True:
        name = rng.choice(_IDENT_START) + "".join(
            rng.choice(_IDENT_REST) for _ in range(rng.randrange(0, 5))
        )
        if name not in _RESERVED:
            return name


def gen_string(rng: random.Random) -> str:
    alphabet = string.ascii_letters + string.digits + ' .,{}=@-_\n"\\'
    return "".join(rng.choice(alphabet) for _ in range(rng.randrange(0, 12)))


def gen_expr(rng: random.Random, depth: int = 6, vars_in_scope: tuple[str, ...] = (),
             forms: tuple[str, ...] = ("list", "lambda", "apply", "let", "if",
                                       "binop", "return", "do", "annot")) -> Expr:
    leaf = depth <= 0
    choices = ["int", "str", "bool", "unit"]
    if vars_in_scope:
        choices += ["var"] * 2
    if not leaf:
        choices += list(forms)
    kind = rng.choice(choices)
    d = depth - 1
    match kind:
        case "int":
            return IntLit(rng.randrange(-40, 1000))
        case "str":
            return StrLit(gen_string(rng))
        case "bool":
            return BoolLit(rng.random() < 0.5)
        case "unit":
            return UnitLit()
        case "var":
            return Var(rng.choice(vars_in_scope))
        case "list":
            return ListLit([gen_expr(rng, d, vars_in_scope, forms) for _ in range(rng.randrange(0, 3))])
        case "lambda":
            p = gen_ident(rng)
            return Lambda(p, gen_expr(rng, d, vars_in_scope + (p,), forms))
        case "apply":
            return Apply(gen_expr(rng, d, vars_in_scope, forms), gen_expr(rng, d, vars_in_scope, forms))
        case "let":
            n = gen_ident(rng)
            return Let(n, gen_expr(rng, d, vars_in_scope + (n,), forms),
                       gen_expr(rng, d, vars_in_scope + (n,), forms))
        case "if":
            return If(gen_expr(rng, d, vars_in_scope, forms), gen_expr(rng, d, vars_in_scope, forms),
                      gen_expr(rng, d, vars_in_scope, forms))
        case "binop":
            op = rng.choice(["+", "-", "*", "++", "==", "/=", "<=", "<", ">=", ">", "&&", "||", "//"])
            return BinOp(op, gen_expr(rng, d, vars_in_scope, forms), gen_expr(rng, d, vars_in_scope, forms))
        case "return":
            return Return(gen_expr(rng, 0, vars_in_scope, forms))
        case "annot":
            from lbac.syntax import parse_type

            ty = parse_type(rng.choice(["Int", "String", "Bool", "()", "[Int]",
                                        "Int -> Int", "BibIO ()", "Trusted Bib"]))
            return Annot(gen_expr(rng, d, vars_in_scope, forms), ty)
        case "do":
            stmts = []
            scope = vars_in_scope
            for _ in range(rng.randrange(0, 3)):
                name = gen_ident(rng)
                while name in scope:
                    name = name + "'"
                if rng.random() < 0.5:
                    stmts.append(Bind(name, gen_expr(rng, d, scope, forms)))
                else:
                    stmts.append(LetStmt(name, gen_expr(rng, d, scope, forms)))
                scope = scope + (name,)
            stmts.append(ExprStmt(gen_expr(rng, d, scope, forms)))
            return DoBlock(stmts)
    raise AssertionError(kind)


# ---------------------------------------------------------------------------
# well-typed pure programs (for type/runtime agreement)

_KINDS = ("Int", "Bool", "String", "ListInt")


def kind_to_type(kind: str):
    return {"Int": Base("Int"), "Bool": Base("Bool"), "String": Base("String"),
            "ListInt": ListOf(Base("Int"))}[kind]


def gen_typed(rng: random.Random, kind: str, scope: tuple[tuple[str, str], ...] = (),
              depth: int = 4) -> Expr:
    """An expression of the given kind that is well-typed by construction
    and cannot fault (no partial primitives, no unbounded recursion)."""
    vars_of_kind = [n for n, k in scope if k == kind]
    leaf = depth <= 0
    d = depth - 1

    def sub(k: str) -> Expr:
        return gen_typed(rng, k, scope, d)

    options: list[str]
    if kind == "Int":
        options = ["lit"] * 3 + (["var"] * 3 if vars_of_kind else []) + (
            [] if leaf else ["arith", "if", "length", "let", "applam"])
    elif kind == "Bool":
        options = ["lit"] * 2 + (["var"] * 2 if vars_of_kind else []) + (
            [] if leaf else ["cmp", "and", "not", "if"])
    elif kind == "String":
        options = ["lit"] * 3 + (["var"] * 3 if vars_of_kind else []) + (
            [] if leaf else ["concat", "show", "if"])
    else:  # ListInt
        options = ["lit"] * 3 + (["var"] * 2 if vars_of_kind else []) + (
            [] if leaf else ["filter", "map", "append", "sort"])
    match rng.choice(options):
        case "lit" if kind == "Int":
            return IntLit(rng.randrange(-5, 50))
        case "lit" if kind == "Bool":
            return BoolLit(rng.random() < 0.5)
        case "lit" if kind == "String":
            return StrLit(gen_string(rng))
        case "lit":
            return ListLit([IntLit(rng.randrange(0, 9)) for _ in range(rng.randrange(0, 4))])
        case "var":
            return Var(rng.choice(vars_of_kind))
        case "arith":
            return BinOp(rng.choice(["+", "-", "*"]), sub("Int"), sub("Int"))
        case "if":
            return If(sub("Bool"), sub(kind), sub(kind))
        case "length":
            return Apply(Var("length"), sub("ListInt"))
        case "let":
            name = f"v{len(scope)}"
            inner_kind = rng.choice(_KINDS)
            bound = gen_typed(rng, inner_kind, scope, d)
            body = gen_typed(rng, kind, scope + ((name, inner_kind),), d)
            return Let(name, bound, body)
        case "applam":
            name = f"v{len(scope)}"
            arg_kind = rng.choice(_KINDS)
            body = gen_typed(rng, kind, scope + ((name, arg_kind),), d)
            return Apply(Lambda(name, body), gen_typed(rng, arg_kind, scope, d))
        case "cmp":
            return BinOp(rng.choice(["==", "/=", "<=", "<", ">=", ">"]), sub("Int"), sub("Int"))
        case "and":
            return BinOp(rng.choice(["&&", "||"]), sub("Bool"), sub("Bool"))
        case "not":
            return Apply(Var("not"), sub("Bool"))
        case "concat":
            return BinOp("++", sub("String"), sub("String"))
        case "show":
            return Apply(Var("show"), sub("Int"))
        case "filter":
            name = f"v{len(scope)}"
            pred = Lambda(name, gen_typed(rng, "Bool", scope + ((name, "Int"),), d))
            return Apply(Apply(Var("filter"), pred), sub("ListInt"))
        case "map":
            name = f"v{len(scope)}"
            fn = Lambda(name, gen_typed(rng, "Int", scope + ((name, "Int"),), d))
            return Apply(Apply(Var("map"), fn), sub("ListInt"))
        case "append":
            return Apply(Apply(Var("append"), sub("ListInt")), sub("ListInt"))
        case "sort":
            name = f"v{len(scope)}"
            key = Lambda(name, gen_typed(rng, "Int", scope + ((name, "Int"),), d))
            return Apply(Apply(Var("sortOn"), key), sub("ListInt"))
    raise AssertionError


# ---------------------------------------------------------------------------
# well-typed BibIO pipelines (text)

_QUERY_WORDS = ["differential", "privacy", "noise", "learning", "data",
                "mechanism", "analysis", "private", "moonbeam"]


def gen_bib_program(rng: random.Random) -> str:
    query = " ".join(rng.sample(_QUERY_WORDS, rng.randrange(1, 3)))
    path = rng.choice(["refs.bib", "out/refs.bib", "collected.bib", "notes/all.bib"])
    shape = rng.randrange(5)
    if shape == 0:
        return (
            f'do {{ hits <- dblpSearch "{query}";\n'
            f"     bibs <- mapM dblpFetchBib hits;\n"
            f"     if null bibs then return () else appendToBibFile \"{path}\" (minimumBy getDate bibs) }}"
        )
    if shape == 1:
        return (
            f'do {{ hits <- dblpSearch "{query}";\n'
            f"     bibs <- mapM dblpFetchBib hits;\n"
            f'     mapM_ (appendToBibFile "{path}") bibs }}'
        )
    if shape == 2:
        year = rng.randrange(2000, 2020)
        return (
            f'do {{ hits <- dblpSearch "{query}";\n'
            f"     bibs <- mapM dblpFetchBib hits;\n"
            f'     mapM_ (appendToBibFile "{path}") (filter (\\b -> getDate b <= {year}) bibs) }}'
        )
    if shape == 3:
        return (
            f'do {{ let q = "{query}";\n'
            f"     hits <- dblpSearch q;\n"
            f"     bibs <- mapM dblpFetchBib hits;\n"
            f'     mapM_ (appendToBibFile "{path}") (sortOn getDate bibs) }}'
        )
    return (
        f'do {{ hits <- dblpSearch "{query}";\n'
        f"     bibs <- mapM dblpFetchBib hits;\n"
        f"     if null bibs then return () else do {{\n"
        f'       appendToBibFile "{path}" (head bibs);\n'
        f'       appendToBibFile "{path}" (minimumBy getDate bibs) }} }}'
    )


# ---------------------------------------------------------------------------
# RIO programs over a symlinked fixture tree (text)


def gen_rio_program(rng: random.Random, segments: list[str]) -> str:
    stmts = []
    caps = ["root"]
    n = 0
    for _ in range(rng.randrange(1, 5)):
        n += 1
        action = rng.randrange(4)
        base = rng.choice(caps)
        seg = rng.choice(segments)
        if action == 0:
            stmts.append(f'p{n} <- {base} // "{seg}"')
            caps.append(f"p{n}")
        elif action == 1:
            stmts.append(f'q{n} <- {base} // "{seg}"')
            stmts.append(f"c{n} <- readRIO q{n}")
        elif action == 2:
            stmts.append(f'w{n} <- {base} // "{seg}"')
            stmts.append(f'writeRIO w{n} "generated contents {n}"')
        else:
            stmts.append(f"l{n} <- ls {base}")
    stmts.append("return ()")
    return "do { " + ";\n     ".join(stmts) + " }"


# ---------------------------------------------------------------------------
# DC sub-programs for toLabeled isolation (text)


def gen_dc_subprogram(rng: random.Random, hosts: list[str]) -> tuple[str, str]:
    """Returns (bound expression text, sub-program text)."""
    known = [h for h in hosts]
    stmts = []
    used_hosts = []
    for i in range(rng.randrange(0, 3)):
        host = rng.choice(known + ["nonexistent.example"])
        used_hosts.append(host)
        stmts.append(f'x{i} <- httpGet "http://{host}/page"')
    stmts.append('return (mkMessage "draft")')
    sub = "do { " + "; ".join(stmts) + " }"
    bound_kind = rng.randrange(3)
    if bound_kind == 0:
        bound = "currentLabel"
    elif bound_kind == 1:
        listed = ", ".join(f'"{h}"' for h in used_hosts if h in known)
        bound = f"boundFor [{listed}]"
    else:
        listed = ", ".join(f'"{h}"' for h in known)
        bound = f"boundFor [{listed}]"
    return bound, sub
