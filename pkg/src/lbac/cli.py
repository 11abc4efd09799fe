"""Command-line entry points: check, run, agent, bench.

Exit codes: 0 success, 1 policy or type rejection, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from lbac import bench as bench_mod
from lbac import capability, ifc, provenance
from lbac.agent import (
    AgentConfig,
    AgentError,
    AgentRuntime,
    ConfigError,
    HttpClient,
    ScriptedClient,
    agent_config_from,
    defs_for_effect,
    load_config,
)
from lbac.evaluator import (
    Budget,
    EffectError,
    RuntimeFault,
    VOpaque,
    render_value,
    run_checked,
)
from lbac.registry import default_registry
from lbac.syntax import ParseError, parse_program, parse_type, render_type
from lbac.typecheck import TypeCheckError, check_against


class UsageError(Exception):
    pass


def _read_source(path: str) -> str:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"no such file: {path}")
    return p.read_text(encoding="utf-8")


def _build_context(args, registry):
    """EffectContext plus per-session definition entries for the effect."""
    from lbac.agent import DefEntry
    from lbac.evaluator import EffectContext
    from lbac.syntax import Opaque
    from lbac.typecheck import TypeScheme

    effect = args.effect
    if effect == "BibIO":
        state = provenance.make_state(getattr(args, "bib_fixture", None),
                                      getattr(args, "bib_outdir", ".") or ".")
        ctx = EffectContext("BibIO", state,
                            {p.name: p.impl for p in provenance.PRIMITIVES if not p.pure})
        return ctx, []
    if effect == "RIO":
        root = getattr(args, "rio_root", None)
        if not root:
            raise UsageError("--rio-root is required for RIO programs")
        try:
            state = capability.grant_root(root)
        except EffectError as exc:
            raise UsageError(str(exc))
        ctx = EffectContext("RIO", state,
                            {p.name: p.impl for p in capability.PRIMITIVES if not p.pure})
        root_entry = DefEntry("root", TypeScheme((), Opaque("Path", ())),
                              "capability over the granted session root",
                              VOpaque("Path", state.granted_root))
        return ctx, [root_entry]
    if effect == "DC":
        state = ifc.make_state(getattr(args, "dc_web_fixture", None),
                               getattr(args, "dc_env_fixture", None))
        return ifc.dc_context(state), []
    raise UsageError(f"unknown effect '{effect}' (expected BibIO, RIO or DC)")


def cmd_check(args) -> int:
    registry = default_registry()
    source = _read_source(args.file)
    expected = parse_type(args.expect, registry)
    effect = expected.effect if hasattr(expected, "effect") else None
    defs_effect = effect if isinstance(effect, str) and effect in ("BibIO", "RIO", "DC") else None
    if defs_effect:
        defs = defs_for_effect(registry, defs_effect, include_decoys=args.decoys)
        if defs_effect == "RIO":
            from lbac.agent import DefEntry
            from lbac.syntax import Opaque
            from lbac.typecheck import TypeScheme

            defs.entries.append(DefEntry("root", TypeScheme((), Opaque("Path", ())),
                                         "capability over the granted session root",
                                         VOpaque("Path", None)))
    else:
        # pure or IO targets: prelude plus every registered EDSL's names
        defs = defs_for_effect(registry, "BibIO", include_decoys=args.decoys)
        for eff in ("RIO", "DC"):
            from lbac.agent import effect_entries

            for entry in effect_entries(registry, eff):
                defs.entries.append(entry)
    env = defs.type_env()
    try:
        expr = parse_program(source, registry)
        check_against(env, expr, expected)
    except (ParseError, TypeCheckError) as exc:
        print(exc.rendered if isinstance(exc, TypeCheckError) else str(exc), file=sys.stderr)
        return 1
    print(render_type(expected))
    return 0


def cmd_run(args) -> int:
    registry = default_registry()
    source = _read_source(args.file)
    expected = parse_type(args.expect, registry)
    ctx, extra_entries = _build_context(args, registry)
    defs = defs_for_effect(registry, args.effect, extra=extra_entries)
    env = defs.type_env()
    try:
        expr = parse_program(source, registry)
        cert = check_against(env, expr, expected)
    except (ParseError, TypeCheckError) as exc:
        print(exc.rendered if isinstance(exc, TypeCheckError) else str(exc), file=sys.stderr)
        return 1
    budget = Budget()
    try:
        value = run_checked(cert, defs.value_env(), ctx, budget, registry)
    except EffectError as exc:
        print(f"policy violation: {exc}", file=sys.stderr)
        return 1
    except RuntimeFault as exc:
        print(f"runtime fault: {exc}", file=sys.stderr)
        return 1
    print(render_value(value, registry))
    return 0


def cmd_agent(args) -> int:
    registry = default_registry()
    cfg = load_config(args.config) if args.config else {}
    config = agent_config_from(cfg)
    if args.client == "scripted":
        if not args.fixture:
            raise UsageError("--fixture is required for the scripted client")
        client = ScriptedClient.load(args.fixture)
    else:
        client = HttpClient.from_config(cfg)
    runtime = AgentRuntime(client, config, registry)
    expected = parse_type(args.expect, registry)
    ctx, extra_entries = (None, [])
    if args.effect:
        ctx, extra_entries = _build_context(args, registry)
    defs = defs_for_effect(registry, args.effect or "BibIO", runtime=runtime,
                           include_decoys=args.decoys, extra=extra_entries)
    try:
        value = runtime.run_session(defs, args.prompt, expected, ctx)
    except AgentError as exc:
        print(f"agent error ({exc.kind}): {exc}", file=sys.stderr)
        if args.transcript:
            Path(args.transcript).write_text(runtime.transcript_jsonl() + "\n", encoding="utf-8")
        return 1
    except (EffectError, RuntimeFault) as exc:
        print(f"execution rejected: {exc}", file=sys.stderr)
        if args.transcript:
            Path(args.transcript).write_text(runtime.transcript_jsonl() + "\n", encoding="utf-8")
        return 1
    if args.transcript:
        Path(args.transcript).write_text(runtime.transcript_jsonl() + "\n", encoding="utf-8")
    print(render_value(value, registry))
    return 0


def cmd_bench(args) -> int:
    try:
        suite = bench_mod.BenchmarkSuite.load(args.suite)
    except (OSError, ValueError, KeyError) as exc:
        print(f"cannot load suite: {exc}", file=sys.stderr)
        return 2
    if args.client != "scripted":
        print("only the scripted client is supported for bench runs", file=sys.stderr)
        return 2
    report = bench_mod.run_benchmark(suite, args.policies == "on", jobs=args.jobs)
    if args.report:
        Path(args.report).write_text(report.to_json() + "\n", encoding="utf-8")
    print(report.render_table())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lbac", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_check = sub.add_parser("check", help="type-check a program against an expected type")
    p_check.add_argument("file")
    p_check.add_argument("--expect", required=True, metavar="TYPE")
    p_check.add_argument("--decoys", action="store_true",
                         help="include raw-IO standard library signatures in scope")
    p_check.set_defaults(fn=cmd_check)

    p_run = sub.add_parser("run", help="type-check and execute a program")
    p_run.add_argument("file")
    p_run.add_argument("--effect", required=True, choices=["BibIO", "RIO", "DC"])
    p_run.add_argument("--expect", required=True, metavar="TYPE")
    p_run.add_argument("--bib-fixture", metavar="PATH")
    p_run.add_argument("--bib-outdir", metavar="DIR", default=".")
    p_run.add_argument("--rio-root", metavar="DIR")
    p_run.add_argument("--dc-web-fixture", metavar="PATH")
    p_run.add_argument("--dc-env-fixture", metavar="PATH")
    p_run.set_defaults(fn=cmd_run)

    p_agent = sub.add_parser("agent", help="run one agent session")
    p_agent.add_argument("--prompt", required=True)
    p_agent.add_argument("--expect", required=True, metavar="TYPE")
    p_agent.add_argument("--effect", choices=["BibIO", "RIO", "DC"])
    p_agent.add_argument("--client", choices=["scripted", "http"], default="scripted")
    p_agent.add_argument("--fixture", metavar="PATH", help="scripted client fixture")
    p_agent.add_argument("--config", metavar="PATH")
    p_agent.add_argument("--decoys", action="store_true",
                         help="include raw-IO standard library signatures in scope")
    p_agent.add_argument("--transcript", metavar="PATH", help="write the session transcript (JSON lines)")
    p_agent.add_argument("--bib-fixture", metavar="PATH")
    p_agent.add_argument("--bib-outdir", metavar="DIR", default=".")
    p_agent.add_argument("--rio-root", metavar="DIR")
    p_agent.add_argument("--dc-web-fixture", metavar="PATH")
    p_agent.add_argument("--dc-env-fixture", metavar="PATH")
    p_agent.set_defaults(fn=cmd_agent)

    p_bench = sub.add_parser("bench", help="run the scripted benchmark suite")
    p_bench.add_argument("--suite", metavar="DIR", default=None,
                         help="suite directory (default: the shipped suite)")
    p_bench.add_argument("--policies", choices=["on", "off"], required=True)
    p_bench.add_argument("--client", choices=["scripted", "http"], default="scripted")
    p_bench.add_argument("--jobs", type=int, default=1)
    p_bench.add_argument("--report", metavar="PATH")
    p_bench.set_defaults(fn=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0,) else 0
    try:
        return args.fn(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
