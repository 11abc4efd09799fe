"""Pure combinators available in every agent environment.

Signatures keep to HM with at most the one effect variable the spec of
the language allows (mapM and friends), so the checker can propagate a
do-block's effect through them without effect polymorphism leaking into
user-defined bindings.
"""

from __future__ import annotations

from lbac.evaluator import (
    Evaluator,
    HostAction,
    RuntimeFault,
    Value,
    VBool,
    VInt,
    VList,
    VStr,
    VThunkEffect,
    VUnit,
    render_value,
)
from lbac.registry import PrimitiveDef


def _map(args: tuple[Value, ...], ev: Evaluator) -> Value:
    f, xs = args
    assert isinstance(xs, VList)
    return VList([ev.apply(f, x) for x in xs.items])


def _filter(args: tuple[Value, ...], ev: Evaluator) -> Value:
    f, xs = args
    assert isinstance(xs, VList)
    out = []
    for x in xs.items:
        keep = ev.apply(f, x)
        if not isinstance(keep, VBool):
            raise RuntimeFault("Internal", "filter predicate did not return a boolean")
        if keep.value:
            out.append(x)
    return VList(out)


def _foldr(args: tuple[Value, ...], ev: Evaluator) -> Value:
    f, z, xs = args
    assert isinstance(xs, VList)
    acc = z
    for x in reversed(xs.items):
        acc = ev.apply(ev.apply(f, x), acc)
    return acc


def _length(args: tuple[Value, ...], ev: Evaluator) -> Value:
    (xs,) = args
    assert isinstance(xs, VList)
    return VInt(len(xs.items))


def _null(args: tuple[Value, ...], ev: Evaluator) -> Value:
    (xs,) = args
    assert isinstance(xs, VList)
    return VBool(not xs.items)


def _head(args: tuple[Value, ...], ev: Evaluator) -> Value:
    (xs,) = args
    assert isinstance(xs, VList)
    if not xs.items:
        raise RuntimeFault("EmptyList", "head of an empty list")
    return xs.items[0]


def _append(args: tuple[Value, ...], ev: Evaluator) -> Value:
    xs, ys = args
    assert isinstance(xs, VList) and isinstance(ys, VList)
    return VList(xs.items + ys.items)


def _not(args: tuple[Value, ...], ev: Evaluator) -> Value:
    (b,) = args
    assert isinstance(b, VBool)
    return VBool(not b.value)


def _show(args: tuple[Value, ...], ev: Evaluator) -> Value:
    (v,) = args
    return VStr(render_value(v, ev.registry))


def _key_int(f: Value, x: Value, ev: Evaluator) -> int:
    k = ev.apply(f, x)
    if not isinstance(k, VInt):
        raise RuntimeFault("Internal", "key function did not return an integer")
    return k.value


def _minimum_by(args: tuple[Value, ...], ev: Evaluator) -> Value:
    f, xs = args
    assert isinstance(xs, VList)
    if not xs.items:
        raise RuntimeFault("EmptyList", "minimumBy of an empty list")
    return min(xs.items, key=lambda x: _key_int(f, x, ev))


def _sort_on(args: tuple[Value, ...], ev: Evaluator) -> Value:
    f, xs = args
    assert isinstance(xs, VList)
    return VList(sorted(xs.items, key=lambda x: _key_int(f, x, ev)))


def _map_m(args: tuple[Value, ...], ev: Evaluator) -> Value:
    f, xs = args
    assert isinstance(xs, VList)
    items = list(xs.items)

    def run(ctx, inner_ev):
        return VList([inner_ev.force(ctx, inner_ev.apply(f, x)) for x in items])

    return VThunkEffect(None, HostAction(run))


def _factorial(args: tuple[Value, ...], ev: Evaluator) -> Value:
    (n,) = args
    assert isinstance(n, VInt)
    if n.value < 0:
        raise RuntimeFault("Internal", "factorial of a negative number")
    acc = 1
    for i in range(2, n.value + 1):
        ev.budget.spend()
        acc *= i
    return VInt(acc)


def _map_m_(args: tuple[Value, ...], ev: Evaluator) -> Value:
    f, xs = args
    assert isinstance(xs, VList)
    items = list(xs.items)

    def run(ctx, inner_ev):
        for x in items:
            inner_ev.force(ctx, inner_ev.apply(f, x))
        return VUnit()

    return VThunkEffect(None, HostAction(run))


PRELUDE: list[PrimitiveDef] = [
    PrimitiveDef("map", "(a -> b) -> [a] -> [b]", _map, "apply a function to every element", pure=True),
    PrimitiveDef("filter", "(a -> Bool) -> [a] -> [a]", _filter, "keep elements satisfying a predicate", pure=True),
    PrimitiveDef("foldr", "(a -> b -> b) -> b -> [a] -> b", _foldr, "right fold over a list", pure=True),
    PrimitiveDef("length", "[a] -> Int", _length, "number of elements", pure=True),
    PrimitiveDef("null", "[a] -> Bool", _null, "is the list empty", pure=True),
    PrimitiveDef("head", "[a] -> a", _head, "first element; faults on an empty list", pure=True),
    PrimitiveDef("append", "[a] -> [a] -> [a]", _append, "concatenate two lists", pure=True),
    PrimitiveDef("not", "Bool -> Bool", _not, "boolean negation", pure=True),
    PrimitiveDef("show", "a -> String", _show, "render a value as text", pure=True),
    PrimitiveDef("minimumBy", "(a -> Int) -> [a] -> a", _minimum_by, "element with the smallest integer key", pure=True),
    PrimitiveDef("sortOn", "(a -> Int) -> [a] -> [a]", _sort_on, "sort ascending by an integer key", pure=True),
    PrimitiveDef("mapM", "(a -> e b) -> [a] -> e [b]", _map_m, "run an effectful step over each element, collecting results", pure=True),
    PrimitiveDef("mapM_", "(a -> e b) -> [a] -> e ()", _map_m_, "run an effectful step over each element, discarding results", pure=True),
    PrimitiveDef("factorial", "Int -> Int", _factorial, "n!", pure=True),
]
