"""Inference, nominal effects, unification and the check gate."""

import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from generators import gen_typed, kind_to_type
from helpers import union_defs, union_env
from lbac.registry import default_registry
from lbac.syntax import (
    Arrow,
    Base,
    EffectApp,
    ListOf,
    Opaque,
    TyVar,
    parse_program,
    parse_type,
    render_type,
)
from lbac.typecheck import (
    CheckCertificate,
    Substitution,
    TypeCheckError,
    TypeEnv,
    TypeScheme,
    check_against,
    generalize,
    infer,
    instantiate,
    scheme,
    unify,
)


@pytest.fixture(scope="module")
def env():
    return union_env()


def check(env, src, ty) -> CheckCertificate:
    reg = default_registry()
    return check_against(env, parse_program(src, reg), parse_type(ty, reg))


def reject(env, src, ty) -> TypeCheckError:
    with pytest.raises(TypeCheckError) as exc_info:
        check(env, src, ty)
    return exc_info.value


FIG1_RIGHT = """
do { hits <- dblpSearch "differential privacy";
     bibs <- mapM dblpFetchBib hits;
     appendToBibFile "refs.bib" (minimumBy getDate bibs) }
"""

FIG1_LEFT = """
do { hits <- dblpSearch "differential privacy";
     writeFile "refs.bib" "@inproceedings{Dwork06, fabricated}" }
"""


def test_fig1_right_accepted(env):
    check(env, FIG1_RIGHT, "BibIO ()")


def test_fig1_left_effect_mismatch(env):
    err = reject(env, FIG1_LEFT, "BibIO ()")
    assert err.kind == "EffectMismatch"
    assert "BibIO" in err.rendered and "IO" in err.rendered


def test_identity_principal_type(env):
    _, t = infer(env, parse_program(r"\x -> x"))
    assert isinstance(t, Arrow) and t.arg == t.res and isinstance(t.arg, TyVar)


def test_calculator_attack_rejected(env):
    err = reject(env, 'do { system "rm -rf /"; return (factorial 5) }', "Int")
    assert err.kind == "EffectMismatch"


def test_return_needs_effect(env):
    err = reject(env, "return 5", "Int")
    assert err.kind == "EffectMismatch"


def test_bare_value_accepted_pure(env):
    check(env, "5", "Int")


def test_monomorphic_target_required(env):
    with pytest.raises(ValueError):
        check_against(env, parse_program("5"), parse_type("a"))


# -- unify --------------------------------------------------------------------


def test_unify_distinct_effects():
    with pytest.raises(TypeCheckError) as e:
        unify(EffectApp("IO", Base("Unit")), EffectApp("BibIO", Base("Unit")))
    assert e.value.kind == "EffectMismatch"


def test_unify_var_binds():
    s = unify(TyVar("t0"), Base("Int"))
    assert s.types == {"t0": Base("Int")}


def test_unify_occurs_check():
    with pytest.raises(TypeCheckError) as e:
        unify(TyVar("t0"), ListOf(TyVar("t0")))
    assert e.value.kind == "OccursCheck"


@given(st.integers(min_value=0, max_value=10**9))
def test_unify_apply_and_compare(seed):
    rng = random.Random(seed)

    def gen_type(depth):
        kinds = ["base", "var"] + (["list", "arrow", "effect", "opaque"] if depth else [])
        match rng.choice(kinds):
            case "base":
                return Base(rng.choice(["Int", "String", "Bool", "Unit"]))
            case "var":
                return TyVar(f"v{rng.randrange(3)}")
            case "list":
                return ListOf(gen_type(depth - 1))
            case "arrow":
                return Arrow(gen_type(depth - 1), gen_type(depth - 1))
            case "effect":
                return EffectApp(rng.choice(["IO", "BibIO", "RIO", "DC"]), gen_type(depth - 1))
            case "opaque":
                return Opaque("Trusted", (gen_type(depth - 1),))

    a, b = gen_type(3), gen_type(3)
    try:
        s = unify(a, b)
    except TypeCheckError:
        return
    assert s.apply(a) == s.apply(b)


def test_substitution_composition_idempotent():
    s1 = Substitution(types={"a": TyVar("b")})
    s2 = Substitution(types={"b": Base("Int")})
    s = s2.compose(s1)
    t = Arrow(TyVar("a"), TyVar("b"))
    assert s.apply(t) == s.apply(s.apply(t))


# -- generalize / instantiate --------------------------------------------------


def test_generalize_empty_env():
    sch = generalize(TypeEnv({}, default_registry()), Arrow(TyVar("t0"), TyVar("t0")))
    assert sch.quantified == ("t0",)


def test_generalize_respects_env():
    env = TypeEnv({"y": TypeScheme((), TyVar("t0"))}, default_registry())
    sch = generalize(env, Arrow(TyVar("t0"), TyVar("t1")))
    assert sch.quantified == ("t1",)


def test_instantiate_fresh_each_time():
    from lbac.typecheck import _Fresh

    sch = scheme("a -> a")
    supply = _Fresh()
    t1, t2 = instantiate(sch, supply), instantiate(sch, supply)
    assert isinstance(t1, Arrow) and isinstance(t2, Arrow)
    assert t1.arg == t1.res and t2.arg == t2.res
    assert t1.arg != t2.arg  # fresh variables differ across instantiations


def test_date_parsing_example():
    """Inference propagates the comparator's type through map into the
    agent-valued function: f ends up at String -> Date."""
    reg = default_registry()
    try:
        reg.register_opaque("Date", 0)
        reg.register_opaque("Ordering", 0)
    except Exception:
        pass
    defs = union_defs(reg)
    env = defs.type_env()
    env = env.extend("sortBy", scheme("(a -> a -> Ordering) -> [a] -> [a]", reg))
    env = env.extend("compareByYear", scheme("Date -> Date -> Ordering", reg))
    env = env.extend("rawDates", scheme("[String]", reg))
    src = 'let f s = agent bibLib ("parse this: " ++ s) in sortBy compareByYear (map f rawDates)'
    cert = check_against(env, parse_program(src, reg), parse_type("[Date]", reg))
    # the agent call site resolved to Date
    assert [render_type(t) for t in cert.agent_targets.values()] == ["Date"]


# -- the effect grid -----------------------------------------------------------


EFFECTS = ("IO", "BibIO", "RIO", "DC")


def test_effect_grid_soundness():
    """A call producing effect E never checks against target E' != E."""
    reg = default_registry()
    base = union_defs(reg)
    env = base.type_env()
    for e in EFFECTS:
        env = env.extend(f"op{e}", scheme(f"() -> {e} ()", reg))
    for produced in EFFECTS:
        for target in EFFECTS:
            src = f"do {{ op{produced} (); return () }}"
            expr = parse_program(src, reg)
            expected = parse_type(f"{target} ()", reg)
            if produced == target:
                check_against(env, expr, expected)
            else:
                with pytest.raises(TypeCheckError) as exc:
                    check_against(env, expr, expected)
                assert exc.value.kind == "EffectMismatch"


def test_unforgeability_search():
    """No expression built from literals, lambdas and operators types at
    Trusted, Path or Labeled in constructor position."""
    rng = random.Random(20_08)
    reg = default_registry()
    env = TypeEnv({}, reg)
    protected = ("Trusted", "Path", "Labeled")

    def mentions_protected(t):
        match t:
            case Opaque(name, args):
                return name in protected or any(mentions_protected(a) for a in args)
            case Arrow(a, r):
                return mentions_protected(a) or mentions_protected(r)
            case ListOf(i):
                return mentions_protected(i)
            case EffectApp(_, r):
                return mentions_protected(r)
            case _:
                return False

    from generators import gen_expr

    found = 0
    literal_forms = ("list", "lambda", "apply", "let", "if", "binop")
    for _ in range(10_000):
        e = gen_expr(rng, depth=4, forms=literal_forms)
        try:
            _, t = infer(env, e)
        except TypeCheckError:
            continue
        if mentions_protected(t):
            found += 1
    assert found == 0


# -- determinism and rendering ---------------------------------------------------


def test_error_rendering_deterministic(env):
    msgs = set()
    for _ in range(5):
        err = reject(env, FIG1_LEFT, "BibIO ()")
        msgs.add(err.rendered)
    assert len(msgs) == 1


def test_error_cites_span(env):
    err = reject(env, "do { x <- dblpSearch 5; return () }", "BibIO ()")
    assert "type error at 1:" in err.rendered


def test_unbound_variable(env):
    err = reject(env, "nonesuchtool 1", "Int")
    assert err.kind == "UnboundVar"
    assert "nonesuchtool" in err.rendered


# -- agent call sites ------------------------------------------------------------


def test_agent_statement_inherits_block_effect(env):
    src = 'do { hits <- dblpSearch "q"; agent bibLib "finish"; return () }'
    cert = check(env, src, "BibIO ()")
    targets = [render_type(t) for t in cert.agent_targets.values()]
    assert targets == ["BibIO ()"]


def test_agent_cannot_relax_to_io(env):
    err = reject(env, 'do { agent bibLib "p" :: IO (); return () }', "BibIO ()")
    assert err.kind == "EffectMismatch"


def test_ambiguous_agent_type(env):
    err = reject(env, 'do { bibs <- mapM dblpFetchBib [];\n'
                       '     let x = agent bibLib "p";\n'
                       '     return () }', "BibIO ()")
    assert err.kind == "AmbiguousAgentType"


def test_ambiguous_do_effect(env):
    err = reject(env, "let g = do { return 1 } in 5", "Int")
    assert err.kind == "EffectMismatch"
    assert "ambiguous" in err.rendered


# -- principality over generated programs ----------------------------------------


def test_principality_on_generated_programs(env):
    rng = random.Random(7)
    for _ in range(300):
        kind = rng.choice(("Int", "Bool", "String", "ListInt"))
        e = gen_typed(rng, kind, depth=3)
        s, t = infer(env, e)
        expected = kind_to_type(kind)
        # the checker accepts the ground type, and the inferred principal
        # type unifies with it
        cert = check_against(env, e, expected)
        assert cert.expected == expected
        unify(t, expected)


def test_non_final_statement_must_be_unit(env):
    err = reject(env, 'do { dblpSearch "q"; return () }', "BibIO ()")
    assert err.kind == "Mismatch"


def test_inner_do_blocks_resolve(env):
    src = ('do { hits <- dblpSearch "noise";\n'
           "     if null hits then return () else do { bib <- dblpFetchBib (head hits);\n"
           '       appendToBibFile "x.bib" bib } }')
    cert = check(env, src, "BibIO ()")
    assert set(cert.do_effects.values()) == {"BibIO"}
    assert len(cert.do_effects) == 2
