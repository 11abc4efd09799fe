"""Shared registry of effect names, opaque type names, and their primitives.

The parser resolves type names against a registry, the checker reads
primitive signatures from it, and the evaluator dispatches effectful
primitives through per-session tables derived from it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

BASE_TYPES = ("Int", "String", "Bool", "Unit")


class DuplicateEffectError(ValueError):
    """Raised when an effect name is registered twice."""


class DuplicateOpaqueError(ValueError):
    """Raised when an opaque type name is registered twice."""


@dataclass(frozen=True)
class PrimitiveDef:
    """One named operation of an effect (or a pure helper shipped with it).

    ``type_text`` is the concrete-syntax signature, parsed lazily against
    the owning registry.  ``impl`` signature depends on the kind:
    effectful primitives receive ``(ctx, args, ev)`` when dispatched by
    the evaluator, pure ones receive ``(args, ev)`` at saturation.
    ``impl`` may be None for declaration-only decoys that must never run.
    """

    name: str
    type_text: str
    impl: Callable[..., Any] | None = None
    doc: str = ""
    pure: bool = False


@dataclass
class EffectDef:
    name: str
    primitives: dict[str, PrimitiveDef] = field(default_factory=dict)
    state_factory: Callable[..., Any] | None = None
    # surface operator symbol -> primitive name (e.g. "//" -> "narrow")
    operators: dict[str, str] = field(default_factory=dict)


@dataclass
class Registry:
    """Names visible to the parser plus primitive tables for the runtime."""

    effects: dict[str, EffectDef] = field(default_factory=dict)
    opaques: dict[str, int] = field(default_factory=dict)
    # opaque names whose values agent code may construct literally; empty by
    # default and Trusted/Path/Labeled must never appear here
    opaque_constructible: set[str] = field(default_factory=set)
    # opaque tag -> renderer used by the in-language `show`
    show_hooks: dict[str, Callable[[Any], str]] = field(default_factory=dict)

    def register_effect(self, effect: EffectDef) -> None:
        if effect.name in self.effects:
            raise DuplicateEffectError(f"effect '{effect.name}' is already registered")
        self.effects[effect.name] = effect

    def register_opaque(self, name: str, arity: int = 0) -> None:
        if name in self.opaques:
            raise DuplicateOpaqueError(f"opaque type '{name}' is already registered")
        self.opaques[name] = arity

    def is_effect(self, name: str) -> bool:
        return name in self.effects

    def is_opaque(self, name: str) -> bool:
        return name in self.opaques

    def operator_primitive(self, symbol: str) -> PrimitiveDef | None:
        for eff in self.effects.values():
            prim_name = eff.operators.get(symbol)
            if prim_name is not None:
                return eff.primitives[prim_name]
        return None


def empty_registry() -> Registry:
    """Registry with the base effect/opaque names but no EDSLs wired in."""
    reg = Registry()
    for name in ("Trusted", "Path", "Labeled"):
        reg.register_opaque(name, 1 if name in ("Trusted", "Labeled") else 0)
    for name in ("DOI", "Bib", "Message", "User"):
        reg.register_opaque(name, 0)
    # IO exists as a nominal effect so adversarial signatures can mention it;
    # it carries no executable primitives.
    reg.register_effect(EffectDef(name="IO"))
    return reg


_default: Registry | None = None


def default_registry() -> Registry:
    """Process-wide registry with all shipped EDSLs registered."""
    global _default
    if _default is None:
        from lbac import capability, ifc, provenance

        reg = empty_registry()
        provenance.register(reg)
        capability.register(reg)
        ifc.register(reg)
        reg.register_opaque("Defs", 0)
        _default = reg
    return _default
