"""Hindley-Milner inference with nominal effect typing and opaque types.

This is the gate: every program, whether agent-generated or scaffolding,
must check against an expected type before it may run.  Effects unify
nominally, so a computation in one effect can never masquerade as
another, and the opaque types (Trusted, Path, Labeled, ...) have no
constructors reachable from program syntax.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from lbac.registry import Registry, default_registry
from lbac.syntax import (
    Annot,
    Apply,
    Arrow,
    Base,
    BinOp,
    Bind,
    BoolLit,
    DoBlock,
    EffectApp,
    EffVar,
    Expr,
    ExprStmt,
    If,
    IntLit,
    Lambda,
    Let,
    LetStmt,
    ListLit,
    ListOf,
    Opaque,
    Return,
    Span,
    StrLit,
    TypeTerm,
    TyVar,
    UnitLit,
    Var,
    parse_type,
    render_type,
)

PURE = "<pure>"


# ---------------------------------------------------------------------------
# schemes, environments, substitutions


@dataclass(frozen=True)
class TypeScheme:
    """A polytype: type variables and effect variables quantified over a body."""

    quantified: tuple[str, ...]
    body: TypeTerm
    quantified_effects: tuple[str, ...] = ()

    def __str__(self) -> str:
        if not self.quantified and not self.quantified_effects:
            return render_type(self.body)
        names = ", ".join(self.quantified + self.quantified_effects)
        return f"forall {names}. {render_type(self.body)}"


@dataclass
class TypeEnv:
    """Bindings plus the registries visible while checking a program."""

    bindings: dict[str, TypeScheme] = field(default_factory=dict)
    registry: Registry = field(default_factory=default_registry)
    # names whose call sites must resolve to a monomorphic target recorded
    # for the runtime (the `agent` binding)
    agent_names: frozenset[str] = frozenset()

    @property
    def effect_registry(self) -> set[str]:
        return set(self.registry.effects)

    @property
    def opaque_registry(self) -> dict[str, int]:
        return dict(self.registry.opaques)

    @property
    def opaque_constructible(self) -> set[str]:
        return set(self.registry.opaque_constructible)

    def extend(self, name: str, scheme: TypeScheme) -> "TypeEnv":
        new = dict(self.bindings)
        new[name] = scheme
        return TypeEnv(new, self.registry, self.agent_names)

    def free_vars(self) -> set[str]:
        out: set[str] = set()
        for scheme in self.bindings.values():
            out |= free_type_vars(scheme.body) - set(scheme.quantified)
        return out


@dataclass
class Substitution:
    """Idempotent-after-composition map from variables to terms."""

    types: dict[str, TypeTerm] = field(default_factory=dict)
    effects: dict[str, str | EffVar] = field(default_factory=dict)

    def apply(self, t: TypeTerm) -> TypeTerm:
        match t:
            case TyVar(name):
                found = self.types.get(name)
                return t if found is None else self.apply(found)
            case Base(_) | Opaque(_, ()):
                return t
            case ListOf(item):
                return ListOf(self.apply(item))
            case Arrow(arg, res):
                return Arrow(self.apply(arg), self.apply(res))
            case EffectApp(effect, result):
                return EffectApp(self.apply_effect(effect), self.apply(result))
            case Opaque(name, args):
                return Opaque(name, tuple(self.apply(a) for a in args))
            case _:
                return t

    def apply_effect(self, e: str | EffVar) -> str | EffVar:
        while isinstance(e, EffVar) and e.name in self.effects:
            e = self.effects[e.name]
        return e

    def compose(self, other: "Substitution") -> "Substitution":
        """self after other: apply(other, t) then apply(self, t)."""
        types = {n: self.apply(t) for n, t in other.types.items()}
        types.update(self.types)
        effects = {n: self.apply_effect(e) for n, e in other.effects.items()}
        effects.update(self.effects)
        return Substitution(types, effects)


def free_type_vars(t: TypeTerm) -> set[str]:
    match t:
        case TyVar(name):
            return {name}
        case ListOf(item):
            return free_type_vars(item)
        case Arrow(arg, res):
            return free_type_vars(arg) | free_type_vars(res)
        case EffectApp(_, result):
            return free_type_vars(result)
        case Opaque(_, args):
            out: set[str] = set()
            for a in args:
                out |= free_type_vars(a)
            return out
        case _:
            return set()


def free_effect_vars(t: TypeTerm) -> set[str]:
    match t:
        case ListOf(item):
            return free_effect_vars(item)
        case Arrow(arg, res):
            return free_effect_vars(arg) | free_effect_vars(res)
        case EffectApp(effect, result):
            out = free_effect_vars(result)
            if isinstance(effect, EffVar):
                out.add(effect.name)
            return out
        case Opaque(_, args):
            out = set()
            for a in args:
                out |= free_effect_vars(a)
            return out
        case _:
            return set()


def is_monomorphic(t: TypeTerm) -> bool:
    return not free_type_vars(t) and not free_effect_vars(t)


# ---------------------------------------------------------------------------
# errors


class TypeCheckError(Exception):
    """A rejected program; ``rendered`` is the exact text echoed to the model."""

    def __init__(self, kind: str, span: Span, message: str, expected=None, found=None):
        super().__init__(message)
        self.kind = kind
        self.span = span
        self.message = message
        self.expected = expected
        self.found = found

    @property
    def rendered(self) -> str:
        return f"type error at {self.span}: {self.message}"

    def __str__(self) -> str:
        return self.rendered


def _canonical_pair(a: TypeTerm, b: TypeTerm) -> tuple[TypeTerm, TypeTerm]:
    """Rename variables in first-appearance order so messages are stable."""
    tmap: dict[str, str] = {}
    emap: dict[str, str] = {}

    def walk(t: TypeTerm) -> TypeTerm:
        match t:
            case TyVar(name):
                if name not in tmap:
                    tmap[name] = f"t{len(tmap)}"
                return TyVar(tmap[name])
            case ListOf(item):
                return ListOf(walk(item))
            case Arrow(arg, res):
                return Arrow(walk(arg), walk(res))
            case EffectApp(effect, result):
                if isinstance(effect, EffVar):
                    if effect.name not in emap:
                        emap[effect.name] = f"e{len(emap)}"
                    effect = EffVar(emap[effect.name])
                return EffectApp(effect, walk(result))
            case Opaque(name, args):
                return Opaque(name, tuple(walk(a) for a in args))
            case _:
                return t

    return walk(a), walk(b)


def _mismatch(found: TypeTerm, expected: TypeTerm, span: Span) -> TypeCheckError:
    f, e = _canonical_pair(found, expected)
    return TypeCheckError(
        "Mismatch",
        span,
        f"cannot match expected type '{render_type(e)}' with actual type '{render_type(f)}'",
        expected=e,
        found=f,
    )


def _effect_name_for_message(e) -> str:
    if isinstance(e, str):
        return e
    if isinstance(e, EffVar):
        return "<effect>"
    return PURE


def _effect_mismatch(found, expected, span: Span) -> TypeCheckError:
    fe = _effect_name_for_message(found)
    ee = _effect_name_for_message(expected)
    return TypeCheckError(
        "EffectMismatch",
        span,
        f"effect mismatch: expected effect '{ee}' but found effect '{fe}'",
        expected=ee,
        found=fe,
    )


# ---------------------------------------------------------------------------
# unification


def unify(a: TypeTerm, b: TypeTerm, span: Span = Span(0, 0, 0, 0)) -> Substitution:
    """Most general unifier of a (found) and b (expected); occurs-checked."""
    match (a, b):
        case (TyVar(n), _):
            return _bind_var(n, b, span)
        case (_, TyVar(n)):
            return _bind_var(n, a, span)
        case (Base(x), Base(y)) if x == y:
            return Substitution()
        case (ListOf(x), ListOf(y)):
            return unify(x, y, span)
        case (Arrow(a1, r1), Arrow(a2, r2)):
            s1 = unify(a1, a2, span)
            s2 = unify(s1.apply(r1), s1.apply(r2), span)
            return s2.compose(s1)
        case (Opaque(n1, args1), Opaque(n2, args2)) if n1 == n2 and len(args1) == len(args2):
            s = Substitution()
            for x, y in zip(args1, args2):
                s = unify(s.apply(x), s.apply(y), span).compose(s)
            return s
        case (EffectApp(e1, r1), EffectApp(e2, r2)):
            s1 = _unify_effects(e1, e2, span)
            s2 = unify(s1.apply(r1), s1.apply(r2), span)
            return s2.compose(s1)
        case (EffectApp(e1, _), _):
            raise _effect_mismatch(e1, None, span)
        case (_, EffectApp(e2, _)):
            raise _effect_mismatch(None, e2, span)
        case _:
            raise _mismatch(a, b, span)


def _bind_var(name: str, t: TypeTerm, span: Span) -> Substitution:
    if isinstance(t, TyVar) and t.name == name:
        return Substitution()
    if name in free_type_vars(t):
        f, e = _canonical_pair(TyVar(name), t)
        raise TypeCheckError(
            "OccursCheck",
            span,
            f"cannot construct the infinite type '{render_type(f)}' ~ '{render_type(e)}'",
        )
    return Substitution(types={name: t})


def _unify_effects(e1, e2, span: Span) -> Substitution:
    if isinstance(e1, EffVar):
        if isinstance(e2, EffVar) and e1.name == e2.name:
            return Substitution()
        return Substitution(effects={e1.name: e2})
    if isinstance(e2, EffVar):
        return Substitution(effects={e2.name: e1})
    if e1 == e2:
        return Substitution()
    raise _effect_mismatch(e1, e2, span)


# ---------------------------------------------------------------------------
# generalization / instantiation


def generalize(env: TypeEnv, t: TypeTerm) -> TypeScheme:
    """Quantify type variables not bound in env.

    Effect variables are deliberately never quantified: user programs get
    no effect polymorphism beyond the per-do-block variable, so an effect
    left open here must be pinned by a later use or rejected.
    """
    env_free = env.free_vars()
    qs = tuple(sorted(free_type_vars(t) - env_free))
    return TypeScheme(qs, t)


class _Fresh:
    """Session-local fresh-variable supply; never shared across inferences."""

    def __init__(self) -> None:
        self.n = 0
        self.en = 0

    def ty(self) -> TyVar:
        v = TyVar(f"t{self.n}")
        self.n += 1
        return v

    def eff(self) -> EffVar:
        v = EffVar(f"e{self.en}")
        self.en += 1
        return v


def instantiate(scheme: TypeScheme, fresh: _Fresh | None = None) -> TypeTerm:
    fresh = fresh or _Fresh()
    sub = Substitution(
        types={q: fresh.ty() for q in scheme.quantified},
        effects={q: fresh.eff() for q in scheme.quantified_effects},
    )
    return sub.apply(scheme.body)


def scheme(text: str, registry: Registry | None = None) -> TypeScheme:
    """Build a library scheme from concrete syntax, quantifying every
    lowercase variable that appears (effect variables included)."""
    t = parse_type(text, registry or default_registry())
    return TypeScheme(
        tuple(sorted(free_type_vars(t))), t, tuple(sorted(free_effect_vars(t)))
    )


# ---------------------------------------------------------------------------
# certificates


@dataclass
class CheckCertificate:
    """Proof object produced by check_against and demanded by the runtime.

    ``agent_targets`` maps the id() of each occurrence of an agent binding
    to its resolved monomorphic type; ``do_effects`` maps the id() of each
    do-block to its concrete effect name.
    """

    program: Expr
    expected: TypeTerm
    agent_targets: dict[int, TypeTerm] = field(default_factory=dict)
    do_effects: dict[int, str] = field(default_factory=dict)

    def effect_name(self) -> str | None:
        return self.expected.effect if isinstance(self.expected, EffectApp) else None


# ---------------------------------------------------------------------------
# inference

_BINOP_SIGS: dict[str, tuple[TypeTerm, TypeTerm, TypeTerm]] = {
    "+": (Base("Int"), Base("Int"), Base("Int")),
    "-": (Base("Int"), Base("Int"), Base("Int")),
    "*": (Base("Int"), Base("Int"), Base("Int")),
    "++": (Base("String"), Base("String"), Base("String")),
    "<=": (Base("Int"), Base("Int"), Base("Bool")),
    "<": (Base("Int"), Base("Int"), Base("Bool")),
    ">=": (Base("Int"), Base("Int"), Base("Bool")),
    ">": (Base("Int"), Base("Int"), Base("Bool")),
    "&&": (Base("Bool"), Base("Bool"), Base("Bool")),
    "||": (Base("Bool"), Base("Bool"), Base("Bool")),
}


class _Inferencer:
    def __init__(self, env: TypeEnv):
        self.env = env
        self.fresh = _Fresh()
        # id(Var node) -> instantiated result type of an agent occurrence
        self.agent_sites: dict[int, tuple[TypeTerm, Span]] = {}
        # id(DoBlock node) -> the block's effect variable
        self.do_blocks: dict[int, tuple[EffVar, Span]] = {}

    def _agent_free_vars(self, s: Substitution) -> set[str]:
        """Type variables still open in recorded agent call sites; these
        must stay monomorphic so a later use can pin the call's target."""
        out: set[str] = set()
        for target, _ in self.agent_sites.values():
            out |= free_type_vars(s.apply(target))
        return out

    def _generalize(self, env: TypeEnv, t: TypeTerm, s: Substitution) -> TypeScheme:
        qs = tuple(sorted(free_type_vars(t) - env.free_vars() - self._agent_free_vars(s)))
        return TypeScheme(qs, t)

    def infer(self, env: TypeEnv, e: Expr) -> tuple[Substitution, TypeTerm]:
        match e:
            case IntLit():
                return Substitution(), Base("Int")
            case StrLit():
                return Substitution(), Base("String")
            case BoolLit():
                return Substitution(), Base("Bool")
            case UnitLit():
                return Substitution(), Base("Unit")
            case ListLit(items):
                item_t: TypeTerm = self.fresh.ty()
                s = Substitution()
                for item in items:
                    s1, t1 = self.infer(env, item)
                    s = s1.compose(s)
                    s2 = unify(s.apply(t1), s.apply(item_t), item.span)
                    s = s2.compose(s)
                return s, ListOf(s.apply(item_t))
            case Var(name):
                scheme_ = env.bindings.get(name)
                if scheme_ is None:
                    raise TypeCheckError(
                        "UnboundVar", e.span, f"variable '{name}' is not in scope"
                    )
                t = instantiate(scheme_, self.fresh)
                if name in env.agent_names:
                    self.agent_sites[id(e)] = (_agent_result(t), e.span)
                return Substitution(), t
            case Lambda(param, body):
                pt = self.fresh.ty()
                s, bt = self.infer(env.extend(param, TypeScheme((), pt)), body)
                return s, Arrow(s.apply(pt), bt)
            case Apply(fn, arg):
                s1, ft = self.infer(env, fn)
                s2, at = self.infer(_apply_env(env, s1), arg)
                rt = self.fresh.ty()
                # found side carries the actual argument so mismatches read
                # "expected <parameter type> ... actual <argument type>"
                s3 = unify(Arrow(s2.apply(at), rt), s2.apply(s1.apply(ft)), e.span)
                s = s3.compose(s2).compose(s1)
                return s, s.apply(rt)
            case Let(name, bound, body):
                # recursive let: the name is in scope, monomorphic, while
                # inferring its own definition
                self_t = self.fresh.ty()
                inner = env.extend(name, TypeScheme((), self_t))
                s1, bt = self.infer(inner, bound)
                s2 = unify(s1.apply(self_t), bt, bound.span)
                s12 = s2.compose(s1)
                gen_env = _apply_env(env, s12)
                sch = self._generalize(gen_env, s12.apply(bt), s12)
                s3, t = self.infer(gen_env.extend(name, sch), body)
                return s3.compose(s12), t
            case If(cond, then, orelse):
                s1, ct = self.infer(env, cond)
                s2 = unify(ct, Base("Bool"), cond.span).compose(s1)
                s3, tt = self.infer(_apply_env(env, s2), then)
                s4, et = self.infer(_apply_env(env, s3.compose(s2)), orelse)
                s5 = unify(s4.apply(s3.apply(tt)), s4.apply(et), e.span)
                s = s5.compose(s4).compose(s3).compose(s2)
                return s, s.apply(et)
            case BinOp(op, lhs, rhs) if op in ("==", "/="):
                s1, lt = self.infer(env, lhs)
                s2, rt = self.infer(_apply_env(env, s1), rhs)
                s3 = unify(rt, s2.apply(lt), e.span)
                return s3.compose(s2).compose(s1), Base("Bool")
            case BinOp(op, lhs, rhs):
                sig = _BINOP_SIGS.get(op)
                if sig is not None:
                    lt_e, rt_e, res = sig
                else:
                    prim = env.registry.operator_primitive(op)
                    if prim is None:
                        raise TypeCheckError(
                            "UnboundVar", e.span, f"operator '{op}' is not in scope"
                        )
                    t = instantiate(scheme(prim.type_text, env.registry), self.fresh)
                    if not (isinstance(t, Arrow) and isinstance(t.res, Arrow)):
                        raise TypeCheckError(
                            "Mismatch", e.span, f"operator '{op}' is not binary"
                        )
                    lt_e, rt_e, res = t.arg, t.res.arg, t.res.res
                s1, lt = self.infer(env, lhs)
                s2 = unify(lt, lt_e, lhs.span).compose(s1)
                s3, rt = self.infer(_apply_env(env, s2), rhs)
                s4 = unify(rt, s3.apply(s2.apply(rt_e)), rhs.span).compose(s3).compose(s2)
                return s4, s4.apply(res)
            case Return(value):
                s, vt = self.infer(env, value)
                return s, EffectApp(self.fresh.eff(), vt)
            case Annot(expr, ty):
                ty = _freshen_annotation(ty, self.fresh)
                s1, t = self.infer(env, expr)
                s2 = unify(t, s1.apply(ty), e.span)
                s = s2.compose(s1)
                return s, s.apply(ty)
            case DoBlock(stmts):
                eff = self.fresh.eff()
                self.do_blocks[id(e)] = (eff, e.span)
                s = Substitution()
                inner = env
                result_t: TypeTerm = Base("Unit")
                for i, stmt in enumerate(stmts):
                    is_last = i == len(stmts) - 1
                    match stmt:
                        case Bind(name, rhs):
                            s1, rt = self.infer(inner, rhs)
                            s = s1.compose(s)
                            item = self.fresh.ty()
                            s2 = unify(s.apply(rt), EffectApp(s.apply_effect(eff), item), rhs.span)
                            s = s2.compose(s)
                            inner = _apply_env(inner, s).extend(
                                name, TypeScheme((), s.apply(item))
                            )
                        case LetStmt(name, rhs):
                            self_t = self.fresh.ty()
                            pre = inner.extend(name, TypeScheme((), self_t))
                            s1, rt = self.infer(pre, rhs)
                            s2 = unify(s1.apply(self_t), rt, rhs.span)
                            s = s2.compose(s1).compose(s)
                            gen_env = _apply_env(inner, s)
                            inner = gen_env.extend(name, self._generalize(gen_env, s.apply(rt), s))
                        case ExprStmt(rhs):
                            s1, rt = self.infer(inner, rhs)
                            s = s1.compose(s)
                            # non-final statements must not discard a value
                            want = self.fresh.ty() if is_last else Base("Unit")
                            s2 = unify(
                                s.apply(rt), EffectApp(s.apply_effect(eff), want), rhs.span
                            )
                            s = s2.compose(s)
                            if is_last:
                                result_t = s.apply(want)
                            inner = _apply_env(inner, s)
                return s, EffectApp(s.apply_effect(eff), s.apply(result_t))
            case _:
                raise TypeError(f"not an expression node: {e!r}")


def _agent_result(t: TypeTerm) -> TypeTerm:
    # the agent binding has shape Defs -> String -> result
    if isinstance(t, Arrow) and isinstance(t.res, Arrow):
        return t.res.res
    return t


def _apply_env(env: TypeEnv, s: Substitution) -> TypeEnv:
    new = {
        name: TypeScheme(sch.quantified, s.apply(sch.body), sch.quantified_effects)
        for name, sch in env.bindings.items()
    }
    return TypeEnv(new, env.registry, env.agent_names)


def _freshen_annotation(ty: TypeTerm, fresh: _Fresh) -> TypeTerm:
    """User-written type variables in annotations become unification vars,
    renamed consistently within the one annotation."""
    mapping: dict[str, TyVar] = {}
    emapping: dict[str, EffVar] = {}

    def walk(t: TypeTerm) -> TypeTerm:
        match t:
            case TyVar(name):
                if name not in mapping:
                    mapping[name] = fresh.ty()
                return mapping[name]
            case ListOf(item):
                return ListOf(walk(item))
            case Arrow(arg, res):
                return Arrow(walk(arg), walk(res))
            case EffectApp(effect, result):
                if isinstance(effect, EffVar):
                    if effect.name not in emapping:
                        emapping[effect.name] = fresh.eff()
                    effect = emapping[effect.name]
                return EffectApp(effect, walk(result))
            case Opaque(name, args):
                return Opaque(name, tuple(walk(a) for a in args))
            case _:
                return t

    return walk(ty)


def infer(env: TypeEnv, e: Expr) -> tuple[Substitution, TypeTerm]:
    """Principal type of e under env, or a TypeCheckError."""
    inf = _Inferencer(env)
    s, t = inf.infer(env, e)
    return s, s.apply(t)


def check_against(env: TypeEnv, e: Expr, expected: TypeTerm) -> CheckCertificate:
    """Check e against a monomorphic expected type; returns the certificate
    the runtime demands before executing e."""
    if not is_monomorphic(expected):
        raise ValueError("expected type must be monomorphic")
    inf = _Inferencer(env)
    s, t = inf.infer(env, e)
    s2 = unify(s.apply(t), expected, e.span)
    s = s2.compose(s)

    cert = CheckCertificate(program=e, expected=expected)
    for node_id, (target, span) in inf.agent_sites.items():
        resolved = s.apply(target)
        if not is_monomorphic(resolved):
            raise TypeCheckError(
                "AmbiguousAgentType",
                span,
                "agent call does not resolve to a concrete type; "
                f"got '{render_type(_canonical_pair(resolved, resolved)[0])}'",
            )
        cert.agent_targets[node_id] = resolved
    for node_id, (eff, span) in inf.do_blocks.items():
        resolved_eff = s.apply_effect(eff)
        if isinstance(resolved_eff, EffVar):
            raise TypeCheckError(
                "EffectMismatch",
                span,
                "effect mismatch: the effect of this do-block is ambiguous "
                "(no concrete effect was determined)",
                expected=None,
                found="<ambiguous>",
            )
        cert.do_effects[node_id] = resolved_eff
    return cert
