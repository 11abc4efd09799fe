"""Interpreter for type-checked programs.

Pure evaluation may construct effectful thunks but never runs them;
sequencing happens only inside ``run_effect`` under an EffectContext
whose primitive table is the sole source of observable side effects.
Step and depth budgets turn divergence into faults, never hangs.
"""

from __future__ import annotations

import operator as _operator
import sys
from dataclasses import dataclass
from typing import Any, Callable

from lbac.registry import EffectDef, PrimitiveDef, Registry, default_registry
from lbac.syntax import (
    Annot,
    Apply,
    BinOp,
    Bind,
    BoolLit,
    DoBlock,
    EffectApp,
    Expr,
    ExprStmt,
    If,
    IntLit,
    Lambda,
    Let,
    LetStmt,
    ListLit,
    Return,
    StrLit,
    UnitLit,
    Var,
)
from lbac.typecheck import CheckCertificate

DEFAULT_STEP_BUDGET = 1_000_000
DEFAULT_MAX_DEPTH = 512

_MIN_RECURSION_LIMIT = 20_000


class RuntimeFault(Exception):
    """Resource exhaustion or a broken internal invariant; never a policy call."""

    def __init__(self, kind: str, message: str = ""):
        super().__init__(message or kind)
        self.kind = kind
        self.message = message or kind


class EffectError(Exception):
    """A policy violation raised by an effect primitive at run time."""

    def __init__(self, kind: str, message: str = "", details: dict | None = None):
        super().__init__(message or kind)
        self.kind = kind
        self.message = message or kind
        self.details = details or {}

    def __str__(self) -> str:
        return f"{self.kind}: {self.message}" if self.message != self.kind else self.kind


# ---------------------------------------------------------------------------
# values


class Value:
    pass


@dataclass(frozen=True)
class VInt(Value):
    value: int


@dataclass(frozen=True)
class VStr(Value):
    value: str


@dataclass(frozen=True)
class VBool(Value):
    value: bool


@dataclass(frozen=True)
class VUnit(Value):
    pass


UNIT = VUnit()


@dataclass
class VList(Value):
    items: list[Value]


@dataclass
class VClosure(Value):
    param: str
    body: Expr
    env: "Env"


@dataclass
class VOpaque(Value):
    """Module-owned payload behind an opaque tag; only the registering
    module constructs or deconstructs these."""

    tag: str
    payload: Any


@dataclass
class VPrim(Value):
    """A primitive awaiting arguments.

    Pure primitives carry ``fn(args, ev)`` and run at saturation.
    Effectful primitives carry their effect name and defer to a thunk
    dispatched through the context's primitive table.  ``special`` marks
    call sites needing certificate data (the agent binding).
    """

    name: str
    arity: int
    effect: str | None = None
    fn: Callable[..., Value] | None = None
    applied: tuple[Value, ...] = ()
    special: str | None = None
    target: Any = None  # resolved call-site type for special primitives


@dataclass
class VThunkEffect(Value):
    """Deferred effectful computation; ``effect`` None means the thunk is
    effect-polymorphic (a bare return or combinator plumbing)."""

    effect: str | None
    action: "Action"


class Action:
    pass


@dataclass
class ReturnAction(Action):
    value: Value


@dataclass
class PrimAction(Action):
    name: str
    args: tuple[Value, ...]


@dataclass
class DoAction(Action):
    stmts: list
    env: "Env"


@dataclass
class HostAction(Action):
    run: Callable[["EffectContext", "Evaluator"], Value]


# ---------------------------------------------------------------------------
# environments


class _RecCell:
    __slots__ = ("value",)

    def __init__(self) -> None:
        self.value: Value | None = None


class Env:
    """Chained lexical environment; lookup misses are impossible for
    type-checked programs and fault otherwise."""

    __slots__ = ("vars", "parent")

    def __init__(self, vars: dict[str, Value] | None = None, parent: "Env | None" = None):
        self.vars = vars or {}
        self.parent = parent

    def lookup(self, name: str) -> Value:
        env: Env | None = self
        while env is not None:
            v = env.vars.get(name)
            if v is not None:
                if isinstance(v, _RecCell):
                    if v.value is None:
                        raise RuntimeFault(
                            "RecursiveValue",
                            f"'{name}' was used while its definition was being evaluated",
                        )
                    return v.value
                return v
            env = env.parent
        raise RuntimeFault("UnboundVariable", f"no value bound for '{name}'")

    def child(self, vars: dict[str, Value] | None = None) -> "Env":
        return Env(vars or {}, self)


# ---------------------------------------------------------------------------
# contexts and budgets


@dataclass
class EffectContext:
    """The runtime gate: which effect is active, its state handle, and the
    table of primitives that may actually run.

    ``snapshot_state``/``restore_state``, when present, capture the
    floating part of the state (e.g. a current label) so a failed program
    execution can be rolled back before a retry; durable environment
    effects are never rolled back.
    """

    effect: str
    state: Any
    primitive_table: dict[str, Callable[["EffectContext", tuple, "Evaluator"], Value]]
    snapshot_state: Callable[[Any], Any] | None = None
    restore_state: Callable[[Any, Any], None] | None = None


def context_for(registry: Registry, effect: str, state: Any) -> EffectContext:
    eff = registry.effects[effect]
    table = {
        name: prim.impl
        for name, prim in eff.primitives.items()
        if prim.impl is not None and not prim.pure
    }
    return EffectContext(effect, state, table)


def sealed_context(effect: str = "<sealed>") -> EffectContext:
    """A context with an empty primitive table: nothing observable can run."""
    return EffectContext(effect, None, {})


@dataclass
class Budget:
    steps: int = DEFAULT_STEP_BUDGET
    max_depth: int = DEFAULT_MAX_DEPTH

    def spend(self, n: int = 1) -> None:
        self.steps -= n
        if self.steps < 0:
            raise RuntimeFault("StepBudgetExceeded", "evaluation step budget exhausted")

    def check_depth(self, depth: int) -> None:
        if depth > self.max_depth:
            raise RuntimeFault("DepthExceeded", "evaluation depth limit exceeded")


# ---------------------------------------------------------------------------
# evaluator


class Evaluator:
    """One evaluation session: a budget, the registry, and optionally the
    check certificate for the program being run."""

    def __init__(
        self,
        registry: Registry | None = None,
        budget: Budget | None = None,
        certificate: CheckCertificate | None = None,
    ):
        self.registry = registry or default_registry()
        self.budget = budget or Budget()
        self.certificate = certificate
        if sys.getrecursionlimit() < _MIN_RECURSION_LIMIT:
            sys.setrecursionlimit(_MIN_RECURSION_LIMIT)

    # -- pure evaluation ----------------------------------------------------

    def eval(self, env: Env, e: Expr, depth: int = 0) -> Value:
        budget = self.budget
        budget.check_depth(depth)
        while True:
            budget.spend()
            match e:
                case IntLit(value):
                    return VInt(value)
                case StrLit(value):
                    return VStr(value)
                case BoolLit(value):
                    return VBool(value)
                case UnitLit():
                    return UNIT
                case ListLit(items):
                    return VList([self.eval(env, item, depth + 1) for item in items])
                case Var(name):
                    v = env.lookup(name)
                    if isinstance(v, VPrim) and v.special is not None:
                        target = (self.certificate.agent_targets.get(id(e))
                                  if self.certificate else None)
                        v = VPrim(v.name, v.arity, v.effect, v.fn, v.applied, v.special, target)
                    return v
                case Lambda(param, body):
                    return VClosure(param, body, env)
                case Apply(fn, arg):
                    fv = self.eval(env, fn, depth + 1)
                    av = self.eval(env, arg, depth + 1)
                    if isinstance(fv, VClosure):
                        env = fv.env.child({fv.param: av})
                        e = fv.body
                        continue  # tail call
                    return self.apply(fv, av, depth)
                case Let(name, bound, body):
                    cell = _RecCell()
                    inner = env.child({name: cell})
                    cell.value = self.eval(inner, bound, depth + 1)
                    env = inner
                    e = body
                    continue
                case If(cond, then, orelse):
                    cv = self.eval(env, cond, depth + 1)
                    if not isinstance(cv, VBool):
                        raise RuntimeFault("Internal", "if condition was not a boolean")
                    e = then if cv.value else orelse
                    continue
                case BinOp(op, lhs, rhs):
                    lv = self.eval(env, lhs, depth + 1)
                    rv = self.eval(env, rhs, depth + 1)
                    return self.binop(op, lv, rv, depth)
                case Return(value):
                    v = self.eval(env, value, depth + 1)
                    return VThunkEffect(None, ReturnAction(v))
                case Annot(expr, _):
                    e = expr
                    continue
                case DoBlock(_):
                    eff = (self.certificate.do_effects.get(id(e))
                           if self.certificate else None)
                    return VThunkEffect(eff, DoAction(e.stmts, env))
                case _:
                    raise RuntimeFault("Internal", f"cannot evaluate node {type(e).__name__}")

    def apply(self, fv: Value, av: Value, depth: int = 0) -> Value:
        self.budget.spend()
        if isinstance(fv, VClosure):
            return self.eval(fv.env.child({fv.param: av}), fv.body, depth + 1)
        if isinstance(fv, VPrim):
            applied = fv.applied + (av,)
            if len(applied) < fv.arity:
                return VPrim(fv.name, fv.arity, fv.effect, fv.fn, applied, fv.special, fv.target)
            if len(applied) > fv.arity:
                raise RuntimeFault("Internal", f"primitive '{fv.name}' applied to too many arguments")
            return self.saturate(fv, applied)
        raise RuntimeFault("Internal", "application of a non-function value")

    def saturate(self, prim: VPrim, args: tuple[Value, ...]) -> Value:
        if prim.special == "agent":
            if prim.fn is None:
                raise RuntimeFault("Internal", "agent primitive has no runtime attached")
            return prim.fn(prim.target, args, self)
        if prim.effect is None:
            if prim.fn is None:
                raise RuntimeFault("Internal", f"pure primitive '{prim.name}' has no implementation")
            return prim.fn(args, self)
        return VThunkEffect(prim.effect, PrimAction(prim.name, args))

    def binop(self, op: str, lv: Value, rv: Value, depth: int = 0) -> Value:
        match op:
            case "+" | "-" | "*" if isinstance(lv, VInt) and isinstance(rv, VInt):
                n = {"+": lv.value + rv.value, "-": lv.value - rv.value, "*": lv.value * rv.value}[op]
                return VInt(n)
            case "++" if isinstance(lv, VStr) and isinstance(rv, VStr):
                return VStr(lv.value + rv.value)
            case "<=" | "<" | ">=" | ">" if isinstance(lv, VInt) and isinstance(rv, VInt):
                fn = {"<=": _operator.le, "<": _operator.lt, ">=": _operator.ge, ">": _operator.gt}[op]
                return VBool(fn(lv.value, rv.value))
            case "&&" if isinstance(lv, VBool) and isinstance(rv, VBool):
                return VBool(lv.value and rv.value)
            case "||" if isinstance(lv, VBool) and isinstance(rv, VBool):
                return VBool(lv.value or rv.value)
            case "==" | "/=":
                eq = values_equal(lv, rv)
                return VBool(eq if op == "==" else not eq)
            case _:
                prim = self.registry.operator_primitive(op)
                if prim is not None:
                    pv = prim_value(prim, self.registry)
                    return self.apply(self.apply(pv, lv, depth), rv, depth)
                raise RuntimeFault("Internal", f"no runtime rule for operator '{op}'")

    # -- effectful evaluation -------------------------------------------------

    def run_effect(self, ctx: EffectContext, thunk: Value) -> Value:
        if not isinstance(thunk, VThunkEffect):
            raise RuntimeFault("Internal", "run_effect requires an effect thunk")
        if thunk.effect is not None and thunk.effect != ctx.effect:
            raise RuntimeFault(
                "EffectIsolation",
                f"thunk of effect '{thunk.effect}' cannot run under context '{ctx.effect}'",
            )
        self.budget.spend()
        match thunk.action:
            case ReturnAction(value):
                return value
            case PrimAction(name, args):
                impl = ctx.primitive_table.get(name)
                if impl is None:
                    raise EffectError(
                        "PrimitiveUnavailable",
                        f"primitive '{name}' is not available in this context",
                    )
                return impl(ctx, args, self)
            case DoAction(stmts, env):
                inner = env.child()
                result: Value = UNIT
                for stmt in stmts:
                    match stmt:
                        case Bind(name, rhs):
                            v = self.eval(inner, rhs, 1)
                            result = self.force(ctx, v)
                            inner = inner.child({name: result})
                        case LetStmt(name, rhs):
                            cell = _RecCell()
                            inner = inner.child({name: cell})
                            cell.value = self.eval(inner, rhs, 1)
                        case ExprStmt(rhs):
                            v = self.eval(inner, rhs, 1)
                            result = self.force(ctx, v)
                return result
            case HostAction(run):
                return run(ctx, self)
            case _:
                raise RuntimeFault("Internal", "unknown effect action")

    def force(self, ctx: EffectContext, v: Value) -> Value:
        if isinstance(v, VThunkEffect):
            return self.run_effect(ctx, v)
        raise RuntimeFault("Internal", "expected an effect thunk in monadic position")


def prim_value(prim: PrimitiveDef, registry: Registry | None = None) -> Value:
    """Language-level value for a primitive definition.

    A nullary effectful primitive is already a computation, so it binds
    directly as the thunk that dispatches it.
    """
    from lbac.syntax import Arrow as _Arrow
    from lbac.typecheck import scheme

    t = scheme(prim.type_text, registry).body
    arity = 0
    while isinstance(t, _Arrow):
        arity += 1
        t = t.res
    if prim.pure:
        return VPrim(prim.name, arity, None, prim.impl)
    effect = t.effect if isinstance(t, EffectApp) else None
    if not isinstance(effect, str):
        effect = None
    if arity == 0:
        if effect is None:
            raise ValueError(f"primitive '{prim.name}' has no arguments and no effect")
        return VThunkEffect(effect, PrimAction(prim.name, ()))
    return VPrim(prim.name, arity, effect, None)


def values_equal(a: Value, b: Value) -> bool:
    match (a, b):
        case (VInt(x), VInt(y)):
            return x == y
        case (VStr(x), VStr(y)):
            return x == y
        case (VBool(x), VBool(y)):
            return x == y
        case (VUnit(), VUnit()):
            return True
        case (VList(xs), VList(ys)):
            return len(xs) == len(ys) and all(values_equal(x, y) for x, y in zip(xs, ys))
        case (VOpaque(t1, p1), VOpaque(t2, p2)):
            return t1 == t2 and p1 == p2
        case _:
            raise RuntimeFault("Uncomparable", "these values cannot be compared for equality")


def render_value(v: Value, registry: Registry | None = None) -> str:
    """The in-language `show`, also used to print CLI results."""
    registry = registry or default_registry()
    match v:
        case VInt(value):
            return str(value)
        case VStr(value):
            return '"' + value.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n") + '"'
        case VBool(value):
            return "True" if value else "False"
        case VUnit():
            return "()"
        case VList(items):
            return "[" + ", ".join(render_value(i, registry) for i in items) + "]"
        case VOpaque(tag, payload):
            hook = registry.show_hooks.get(tag)
            return hook(payload) if hook else f"<{tag}>"
        case VClosure() | VPrim():
            return "<function>"
        case VThunkEffect(effect, _):
            return f"<{effect or 'effect'} computation>"
        case _:
            return f"<{type(v).__name__}>"


# ---------------------------------------------------------------------------
# spec-level entry points


def eval_pure(env: Env, e: Expr, budget: Budget | None = None,
              registry: Registry | None = None,
              certificate: CheckCertificate | None = None) -> Value:
    """Evaluate an expression; effectful thunks may be built, never run."""
    return Evaluator(registry, budget, certificate).eval(env, e)


def run_effect(ctx: EffectContext, thunk: Value, budget: Budget | None = None,
               registry: Registry | None = None,
               certificate: CheckCertificate | None = None) -> Value:
    """Run an effect thunk to a value under the given context."""
    return Evaluator(registry, budget, certificate).run_effect(ctx, thunk)


def run_checked(
    cert: CheckCertificate,
    env: Env,
    ctx: EffectContext | None,
    budget: Budget | None = None,
    registry: Registry | None = None,
) -> Value:
    """Execute a certified program: the only path the agent runtime uses.

    If the expected type is effectful the matching context must be given;
    pure programs run under a sealed context (nothing observable exists).
    """
    if cert is None:
        raise RuntimeFault("CertificateMissing", "refusing to execute an unchecked program")
    ev = Evaluator(registry, budget, cert)
    expected_effect = cert.effect_name()
    if expected_effect is None:
        return ev.eval(env, cert.program)
    if ctx is None:
        raise RuntimeFault("CertificateMissing", f"no context supplied for effect '{expected_effect}'")
    if ctx.effect != expected_effect:
        raise RuntimeFault(
            "EffectIsolation",
            f"program of effect '{expected_effect}' cannot run under context '{ctx.effect}'",
        )
    thunk = ev.eval(env, cert.program)
    return ev.force(ctx, thunk)


def register_effect(
    registry: Registry,
    name: str,
    primitives: dict[str, PrimitiveDef] | list[PrimitiveDef],
    state_factory: Callable[..., Any] | None = None,
    operators: dict[str, str] | None = None,
) -> None:
    """Make an effect available to the parser, checker and evaluator."""
    if isinstance(primitives, list):
        primitives = {p.name: p for p in primitives}
    registry.register_effect(
        EffectDef(name=name, primitives=primitives, state_factory=state_factory,
                  operators=operators or {})
    )
