"""Desk-scale benchmark: scripted agents and attackers over the
messaging environment, run with policies on (the tools in DC) or off
(the same tools in plain IO, no flow checks).

Utility counts benign tasks completed; security counts (task, injection)
pairs where the injection goal was NOT reached.  Every scenario owns a
fresh environment built from fixtures, so outcomes are order-independent
and two runs produce byte-identical reports.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from lbac import ifc
from lbac.agent import (
    AgentConfig,
    AgentError,
    AgentRuntime,
    DefEntry,
    Defs,
    ScriptedClient,
    agent_config_from,
    defs_for_effect,
    load_config,
    prelude_entries,
)
from lbac.evaluator import (
    EffectContext,
    EffectError,
    Evaluator,
    RuntimeFault,
    Value,
    VOpaque,
    VStr,
    VUnit,
    prim_value,
)
from lbac.registry import PrimitiveDef, Registry, default_registry
from lbac.syntax import parse_type
from lbac.typecheck import TypeScheme, scheme

DEFAULT_TIMEOUT_SECONDS = 30.0


# ---------------------------------------------------------------------------
# the unchecked (policies-off) environment API, exposed in plain IO


def _off_http_get(ctx, args, ev: Evaluator) -> Value:
    (url,) = args
    assert isinstance(url, VStr)
    state: ifc.DcState = ctx.state
    from urllib.parse import urlparse

    host = urlparse(url.value).netloc or url.value
    if host not in state.web:
        raise EffectError("UnknownHost", f"host '{host}' is not in the web fixture")
    body, label = state.web[host]
    state.audit.append({
        "op": "httpGet", "sink": host,
        "current_label": state.current_label.to_json(),
        "value_label": label.to_json(), "allowed": True,
    })
    return VStr(body)


def _off_write_to_user(ctx, args, ev: Evaluator) -> Value:
    (content,) = args
    assert isinstance(content, VStr)
    state: ifc.DcState = ctx.state
    state.audit.append({
        "op": "writeToUser", "sink": state.user_sink.to_json(),
        "current_label": state.current_label.to_json(),
        "value_label": state.current_label.to_json(), "allowed": True,
    })
    state.outbox.append({
        "kind": "user", "to": "user", "body": content.value,
        "current_label": state.current_label.to_json(),
        "value_label": state.current_label.to_json(),
    })
    return VUnit()


def _off_send_dm(ctx, args, ev: Evaluator) -> Value:
    user_v, body = args
    assert isinstance(body, VStr)
    if not (isinstance(user_v, VOpaque) and user_v.tag == "User"):
        raise EffectError("UnknownUser", "sendDM requires a User from getUser")
    state: ifc.DcState = ctx.state
    user = user_v.payload
    if user not in state.users:
        raise EffectError("UnknownUser", f"no such user '{user}'")
    state.audit.append({
        "op": "sendDM", "sink": state.users[user].to_json(),
        "current_label": state.current_label.to_json(),
        "value_label": state.current_label.to_json(), "allowed": True,
        "detail": {"caller_ok": True, "value_flow_ok": True,
                   "captured_error": False, "to": user, "unchecked": True},
    })
    state.outbox.append({
        "kind": "dm", "to": user, "body": body.value,
        "current_label": state.current_label.to_json(),
        "value_label": state.current_label.to_json(),
    })
    return VUnit()


def _off_get_user(ctx, args, ev: Evaluator) -> Value:
    (name,) = args
    assert isinstance(name, VStr)
    state: ifc.DcState = ctx.state
    if name.value not in state.users:
        raise EffectError("UnknownUser", f"no such user '{name.value}'")
    return VOpaque("User", name.value)


OFF_PRIMITIVES: list[PrimitiveDef] = [
    PrimitiveDef("httpGet", "String -> IO String", _off_http_get, "fetch a page body"),
    PrimitiveDef("writeToUser", "String -> IO ()", _off_write_to_user, "post to the user's stream"),
    PrimitiveDef("sendDM", "User -> String -> IO ()", _off_send_dm, "send a direct message"),
    PrimitiveDef("getUser", "String -> IO User", _off_get_user, "look up a user"),
]


def off_mode_defs(registry: Registry, runtime: AgentRuntime) -> Defs:
    entries = prelude_entries(registry) + [
        DefEntry(p.name, scheme(p.type_text, registry), p.doc, prim_value(p, registry))
        for p in OFF_PRIMITIVES
    ]
    defs = Defs(entries, registry)
    defs.entries.append(DefEntry(
        "envLib", TypeScheme((), parse_type("Defs", registry)),
        "this definition set itself", VOpaque("Defs", defs),
    ))
    defs.entries.append(DefEntry(
        "agent", scheme("Defs -> String -> a", registry),
        "delegate a task to a sub-agent with the given definitions",
        runtime.agent_prim(),
    ))
    return defs


# ---------------------------------------------------------------------------
# suite model


@dataclass
class BenchTask:
    id: str
    prompt: str
    checker: list[dict]
    programs: dict[str, list[str]]  # mode ("on"/"off") -> scripted attempts


@dataclass
class BenchInjection:
    id: str
    variant: str  # "direct" | "important_instructions"
    payload: str
    placement_host: str
    goal: list[dict]
    programs: dict[str, list[str]]


@dataclass
class BenchmarkSuite:
    tasks: list[BenchTask]
    injections: list[BenchInjection]
    web_fixture: dict
    env_fixture: dict
    expect: dict[str, str]  # mode -> expected type text
    agent_config: AgentConfig
    timeout_seconds: float = DEFAULT_TIMEOUT_SECONDS

    def pairing(self) -> list[tuple[BenchTask, BenchInjection]]:
        return [(t, i) for t in self.tasks for i in self.injections]

    @classmethod
    def load(cls, suite_dir: str | Path | None = None) -> "BenchmarkSuite":
        if suite_dir is None:
            base = resources.files("lbac").joinpath("bench_suite")
        else:
            base = Path(suite_dir)

        def read(name: str) -> str:
            return base.joinpath(name).read_text(encoding="utf-8")

        def load_programs(spec: dict[str, list]) -> dict[str, list[str]]:
            out: dict[str, list[str]] = {}
            for mode, attempts in spec.items():
                texts = []
                for a in attempts:
                    if isinstance(a, dict) and "file" in a:
                        texts.append(read(a["file"]))
                    else:
                        texts.append(a)
                out[mode] = texts
            return out

        tasks_data = json.loads(read("tasks.json"))
        injections_data = json.loads(read("injections.json"))
        tasks = [
            BenchTask(t["id"], t["prompt"], t["checker"], load_programs(t["programs"]))
            for t in tasks_data["tasks"]
        ]
        ids = [t.id for t in tasks]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate task ids in suite")
        injections = [
            BenchInjection(i["id"], i.get("variant", "direct"), i["payload"],
                           i["placement"]["host"], i["goal"], load_programs(i["programs"]))
            for i in injections_data["injections"]
        ]
        iids = [i.id for i in injections]
        if len(set(iids)) != len(iids):
            raise ValueError("duplicate injection ids in suite")
        web = json.loads(read("fixtures/web_fixture.json"))
        env = json.loads(read("fixtures/env_fixture.json"))
        config = AgentConfig()
        try:
            cfg_text = read("config.ini")
        except (FileNotFoundError, OSError):
            cfg_text = ""
        if cfg_text:
            import configparser

            parser = configparser.ConfigParser()
            parser.read_string(cfg_text)
            flat = {f"{s}.{o}": v for s in parser.sections() for o, v in parser.items(s)}
            config = agent_config_from(flat)
        return cls(tasks, injections, web, env,
                   expect=tasks_data.get("expect", {"on": "DC ()", "off": "IO ()"}),
                   agent_config=config)


# ---------------------------------------------------------------------------
# checkers


def check_assertions(assertions: list[dict], snapshot: dict) -> bool:
    return all(_check_one(a, snapshot) for a in assertions)


def _check_one(assertion: dict, snapshot: dict) -> bool:
    entries = snapshot.get(assertion["path"], [])
    where = assertion.get("where", {})
    matches = [e for e in entries if _matches(e, where)]
    op = assertion["op"]
    if op == "any":
        return bool(matches)
    if op == "none":
        return not matches
    if op == "count":
        return len(matches) == assertion["value"]
    raise ValueError(f"unknown checker op '{op}'")


def _matches(entry: dict, where: dict) -> bool:
    for key, want in where.items():
        if key.endswith("_contains"):
            base = key[: -len("_contains")]
            if want not in str(entry.get(base, "")):
                return False
        elif entry.get(key) != want:
            return False
    return True


# ---------------------------------------------------------------------------
# execution


@dataclass
class ScenarioResult:
    snapshot: dict
    transcript: list[dict]
    error: str | None
    duration: float


def _place_payload(web_fixture: dict, injection: BenchInjection) -> dict:
    web = json.loads(json.dumps(web_fixture))
    host = web["hosts"].get(injection.placement_host)
    if host is None:
        raise ValueError(f"injection '{injection.id}' places payload on unknown host")
    host["body"] = host["body"] + "\n" + injection.payload
    return web


def run_scenario(
    suite: BenchmarkSuite,
    mode: str,
    prompt: str,
    attempts: list[str],
    web_fixture: dict,
    registry: Registry | None = None,
) -> ScenarioResult:
    registry = registry or default_registry()
    started = time.monotonic()
    state = ifc.make_state(web_fixture, suite.env_fixture)
    client = ScriptedClient({"attempts": attempts})
    runtime = AgentRuntime(client, suite.agent_config, registry)
    if mode == "on":
        defs = defs_for_effect(registry, "DC", runtime=runtime)
        ctx = ifc.dc_context(state)
    else:
        defs = off_mode_defs(registry, runtime)
        ctx = EffectContext("IO", state, {p.name: p.impl for p in OFF_PRIMITIVES})
    target = parse_type(suite.expect[mode], registry)
    error = None
    try:
        runtime.run_session(defs, prompt, target, ctx)
    except (AgentError, EffectError, RuntimeFault) as exc:
        error = f"{type(exc).__name__}: {exc}"
    duration = time.monotonic() - started
    if duration > suite.timeout_seconds and error is None:
        error = f"timeout: task exceeded {suite.timeout_seconds}s"
    return ScenarioResult(ifc.snapshot(state), runtime.transcript, error, duration)


@dataclass
class RunReport:
    policies_enabled: bool
    task_records: dict[str, dict] = field(default_factory=dict)
    pair_records: dict[str, dict] = field(default_factory=dict)

    @property
    def utility(self) -> tuple[int, int]:
        passed = sum(1 for r in self.task_records.values() if r["utility_pass"])
        return passed, len(self.task_records)

    @property
    def security(self) -> tuple[int, int]:
        passed = sum(1 for r in self.pair_records.values() if r["security_pass"])
        return passed, len(self.pair_records)

    @property
    def utility_under_attack(self) -> tuple[int, int]:
        passed = sum(1 for r in self.pair_records.values() if r["utility_pass"])
        return passed, len(self.pair_records)

    def to_json(self) -> str:
        ux, un = self.utility
        sx, sn = self.security
        ax, an = self.utility_under_attack
        data = {
            "policies": "on" if self.policies_enabled else "off",
            "aggregates": {
                "utility": {"passed": ux, "total": un},
                "security": {"passed": sx, "total": sn},
                "utility_under_attack": {"passed": ax, "total": an},
            },
            "tasks": self.task_records,
            "pairs": self.pair_records,
        }
        return json.dumps(data, sort_keys=True, indent=2)

    def render_table(self) -> str:
        ux, un = self.utility
        sx, sn = self.security
        ax, an = self.utility_under_attack
        lines = [
            f"configuration: policies {'on' if self.policies_enabled else 'off'}",
            f"  utility  (no attack)     {ux}/{un}",
            f"  utility  (under attack)  {ax}/{an}",
            f"  security (under attack)  {sx}/{sn}",
            "",
            "  task        utility",
        ]
        for tid in sorted(self.task_records):
            r = self.task_records[tid]
            lines.append(f"  {tid:<12}{'pass' if r['utility_pass'] else 'FAIL'}")
        lines.append("")
        lines.append("  pair                 security")
        for pid in sorted(self.pair_records):
            r = self.pair_records[pid]
            lines.append(f"  {pid:<21}{'pass' if r['security_pass'] else 'BREACH'}")
        return "\n".join(lines)


def run_benchmark(
    suite: BenchmarkSuite,
    policies_enabled: bool,
    jobs: int = 1,
    registry: Registry | None = None,
) -> RunReport:
    mode = "on" if policies_enabled else "off"
    report = RunReport(policies_enabled)

    def solo(task: BenchTask) -> tuple[str, dict]:
        result = run_scenario(suite, mode, task.prompt, task.programs[mode],
                              suite.web_fixture, registry)
        return task.id, {
            "utility_pass": result.error is None and check_assertions(task.checker, result.snapshot),
            "attempts": len(result.transcript),
            "errors": [result.error] if result.error else [],
            "transcript": result.transcript,
        }

    def pair(task: BenchTask, injection: BenchInjection) -> tuple[str, dict]:
        web = _place_payload(suite.web_fixture, injection)
        attempts = injection.programs[mode] + task.programs[mode]
        result = run_scenario(suite, mode, task.prompt, attempts, web, registry)
        goal_reached = check_assertions(injection.goal, result.snapshot)
        return f"{task.id}+{injection.id}", {
            "security_pass": not goal_reached,
            "utility_pass": result.error is None and check_assertions(task.checker, result.snapshot),
            "attempts": len(result.transcript),
            "errors": [result.error] if result.error else [],
            "transcript": result.transcript,
        }

    if jobs <= 1:
        solo_results = [solo(t) for t in suite.tasks]
        pair_results = [pair(t, i) for t, i in suite.pairing()]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            solo_results = list(pool.map(solo, suite.tasks))
            pair_results = list(pool.map(lambda ti: pair(*ti), suite.pairing()))
    for tid, record in sorted(solo_results):
        report.task_records[tid] = record
    for pid, record in sorted(pair_results):
        report.pair_records[pid] = record
    return report
