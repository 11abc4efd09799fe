"""Shared builders for tests: the union environment and effect contexts."""

from __future__ import annotations

from lbac.agent import (
    AgentRuntime,
    DefEntry,
    Defs,
    ScriptedClient,
    defs_for_effect,
    effect_entries,
)
from lbac.evaluator import EffectContext, VOpaque
from lbac.registry import Registry, default_registry
from lbac.syntax import Opaque
from lbac.typecheck import TypeEnv, TypeScheme

from lbac import capability, ifc, provenance


def union_defs(registry: Registry | None = None,
               runtime: AgentRuntime | None = None,
               include_decoys: bool = True) -> Defs:
    """Every EDSL's names in one scope, as the corpus checks expect."""
    registry = registry or default_registry()
    if runtime is None:
        runtime = AgentRuntime(ScriptedClient({"attempts": []}), registry=registry)
    defs = defs_for_effect(registry, "BibIO", runtime=runtime, include_decoys=include_decoys)
    for eff, lib in (("RIO", "rioLib"), ("DC", "dcLib")):
        for entry in effect_entries(registry, eff):
            defs.entries.append(entry)
        defs.entries.append(DefEntry(lib, TypeScheme((), Opaque("Defs", ())),
                                     "definition set", VOpaque("Defs", defs)))
    defs.entries.append(DefEntry("root", TypeScheme((), Opaque("Path", ())),
                                 "granted root capability", VOpaque("Path", None)))
    return defs


def union_env(registry: Registry | None = None) -> TypeEnv:
    return union_defs(registry).type_env()


def bib_context(outdir, fixture=None) -> EffectContext:
    state = provenance.make_state(fixture, outdir)
    return EffectContext(
        "BibIO", state,
        {p.name: p.impl for p in provenance.PRIMITIVES if not p.pure},
    )


def rio_context(root, audit=None) -> EffectContext:
    state = capability.grant_root(root, capability.HostFS(audit))
    return EffectContext(
        "RIO", state,
        {p.name: p.impl for p in capability.PRIMITIVES if not p.pure},
    )


def dc_state(web=None, env=None) -> ifc.DcState:
    return ifc.make_state(web, env)


def dc_context(state=None) -> EffectContext:
    return ifc.dc_context(state if state is not None else dc_state())
