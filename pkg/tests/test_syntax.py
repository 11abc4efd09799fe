"""Parser, pretty-printer and type-syntax behavior."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from generators import gen_expr
from lbac.registry import default_registry
from lbac.syntax import (
    Annot,
    Apply,
    Arrow,
    Base,
    BinOp,
    Bind,
    DoBlock,
    EffectApp,
    ExprStmt,
    IntLit,
    Lambda,
    ListOf,
    Opaque,
    ParseError,
    Return,
    StrLit,
    TyVar,
    UnknownEffectError,
    UnknownOpaqueTypeError,
    Var,
    iter_subexprs,
    parse_program,
    parse_type,
    pretty,
    render_type,
    tokenize,
)


def test_parse_do_block_shape():
    e = parse_program('do { hits <- dblpSearch "diff. priv."; return hits }')
    assert isinstance(e, DoBlock)
    assert len(e.stmts) == 2
    bind, last = e.stmts
    assert isinstance(bind, Bind) and bind.name == "hits"
    assert isinstance(bind.rhs, Apply)
    assert isinstance(last, ExprStmt) and isinstance(last.rhs, Return)


def test_parse_int_literal():
    assert parse_program("42") == IntLit(42)


def test_parse_lambda_roundtrip():
    e = parse_program(r"\x -> x")
    assert e == Lambda("x", Var("x"))
    assert parse_program(pretty(e)) == e


def test_multi_param_lambda_desugars():
    assert parse_program(r"\x y -> x") == Lambda("x", Lambda("y", Var("x")))


def test_let_with_params_desugars():
    e = parse_program("let f x = x in f 1")
    assert e.bound == Lambda("x", Var("x"))


def test_string_escapes():
    e = parse_program(r'"a\nb\"c\\d"')
    assert e == StrLit('a\nb"c\\d')
    assert parse_program(pretty(e)) == e


def test_bad_escape_rejected():
    with pytest.raises(ParseError):
        parse_program(r'"\q"')


def test_comments_ignored():
    e = parse_program("-- leading comment\n1 + 2 -- trailing\n")
    assert e == BinOp("+", IntLit(1), IntLit(2))


def test_crlf_accepted():
    e = parse_program("do { x <- dblpSearch \"q\";\r\n return x }")
    assert isinstance(e, DoBlock)


def test_negative_int_parenthesized():
    e = parse_program("(-3)")
    assert e == IntLit(-3)
    assert pretty(e) == "(-3)"


def test_application_left_associative():
    e = parse_program("f a b")
    assert e == Apply(Apply(Var("f"), Var("a")), Var("b"))


def test_operator_precedence():
    e = parse_program("1 + 2 * 3")
    assert e == BinOp("+", IntLit(1), BinOp("*", IntLit(2), IntLit(3)))


def test_concat_right_associative():
    e = parse_program('"a" ++ "b" ++ "c"')
    assert e == BinOp("++", StrLit("a"), BinOp("++", StrLit("b"), StrLit("c")))


def test_narrow_operator():
    e = parse_program('root // "input.txt"')
    assert e == BinOp("//", Var("root"), StrLit("input.txt"))


def test_annotation():
    e = parse_program("5 :: Int")
    assert e == Annot(IntLit(5), Base("Int"))


def test_do_final_bind_rejected():
    with pytest.raises(ParseError):
        parse_program("do { x <- f y }")


def test_do_empty_rejected():
    with pytest.raises(ParseError):
        parse_program("do { }")


def test_do_duplicate_bind_rejected():
    with pytest.raises(ParseError):
        parse_program("do { x <- f 1; x <- f 2; return x }")


def test_reserved_words_not_identifiers():
    with pytest.raises(ParseError):
        parse_program("let do = 1 in do")


def test_trailing_input_rejected():
    with pytest.raises(ParseError):
        parse_program("1 2 3 )")


# -- types -------------------------------------------------------------------


def test_parse_type_fig1_signature():
    t = parse_type("DOI -> BibIO (Trusted Bib)")
    assert t == Arrow(Opaque("DOI"), EffectApp("BibIO", Opaque("Trusted", (Opaque("Bib"),))))


def test_parse_type_base():
    assert parse_type("Int") == Base("Int")
    assert parse_type("()") == Base("Unit")
    assert parse_type("[Int]") == ListOf(Base("Int"))


def test_parse_type_unknown_effect():
    with pytest.raises(UnknownEffectError):
        parse_type("FooIO ()")


def test_parse_type_unknown_opaque():
    with pytest.raises(UnknownOpaqueTypeError):
        parse_type("Sekrit")


def test_parse_type_variables():
    t = parse_type("a -> a")
    assert t == Arrow(TyVar("a"), TyVar("a"))


def test_parse_type_arrow_right_assoc():
    t = parse_type("Int -> Int -> Int")
    assert t == Arrow(Base("Int"), Arrow(Base("Int"), Base("Int")))
    assert render_type(t) == "Int -> Int -> Int"


def test_render_type_parenthesizes_arrow_argument():
    t = parse_type("(Int -> Int) -> Int")
    assert render_type(t) == "(Int -> Int) -> Int"
    assert parse_type(render_type(t)) == t


def test_type_render_roundtrip_samples():
    for text in [
        "String -> BibIO [DOI]",
        "Path -> String -> RIO Path",
        "Label -> DC (Labeled Message)",
        "(a -> e b) -> [a] -> e [b]",
        "[[Int]]",
    ]:
        t = parse_type(text)
        assert parse_type(render_type(t)) == t


# -- spans -------------------------------------------------------------------


def test_spans_within_input():
    src = 'do { x <- f "abc";\n  return (x + 1) }'
    e = parse_program(src)
    for node in iter_subexprs(e):
        assert 0 <= node.span.start <= node.span.end <= len(src)
        assert node.span.line >= 1


def test_parse_error_span_within_input():
    src = "let x = in x"
    try:
        parse_program(src)
        raise AssertionError("expected a parse error")
    except ParseError as exc:
        assert 0 <= exc.span.start <= len(src)


# -- round-trip property -----------------------------------------------------


@given(st.integers(min_value=0, max_value=10**9))
def test_roundtrip_random_exprs(seed):
    rng = random.Random(seed)
    e = gen_expr(rng, depth=6)
    text = pretty(e)
    assert parse_program(text) == e


@settings(max_examples=300)
@given(st.text(max_size=80))
def test_parser_total_on_text(source):
    try:
        parse_program(source)
    except ParseError as exc:
        assert exc.span.start <= len(source.encode("utf-8")) + 1
    # any non-ParseError exception fails the test


def test_parser_total_on_bytes_fuzz():
    rng = random.Random(1234)
    for _ in range(10_000):
        raw = bytes(rng.randrange(256) for _ in range(rng.randrange(0, 40)))
        source = raw.decode("utf-8", errors="replace")
        try:
            parse_program(source)
        except ParseError:
            pass


def test_tokenizer_positions_monotonic():
    toks = tokenize('do { x <- f "s"; return x }')
    offsets = [t.span.start for t in toks]
    assert offsets == sorted(offsets)
