"""The agent primitive: generate, type-check, retry on error, execute.

A pluggable LlmClient produces candidate programs; nothing a client
returns ever executes without a check certificate.  Recursive agent
calls re-enter the loop at increased depth under the same effect
context, so a sub-agent is bound by its parent's policy or a stricter
pure target, never a looser one.
"""

from __future__ import annotations

import json
import re
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from importlib import resources
from typing import Protocol

from lbac.evaluator import (
    Budget,
    EffectContext,
    EffectError,
    Env,
    Evaluator,
    HostAction,
    RuntimeFault,
    Value,
    VOpaque,
    VPrim,
    VStr,
    VThunkEffect,
    prim_value,
    run_checked,
)
from lbac.prelude import PRELUDE
from lbac.registry import PrimitiveDef, Registry, default_registry
from lbac.syntax import EffectApp, Expr, ParseError, TypeTerm, parse_program, render_type
from lbac.typecheck import TypeCheckError, TypeEnv, TypeScheme, check_against, scheme


class ConfigError(ValueError):
    pass


class AgentError(Exception):
    def __init__(self, kind: str, message: str, last_error: str | None = None):
        super().__init__(message)
        self.kind = kind  # RetriesExhausted | DepthExceeded | ClientFailure
        self.message = message
        self.last_error = last_error


# ---------------------------------------------------------------------------
# definitions handed to an agent


@dataclass
class DefEntry:
    name: str
    scheme: TypeScheme
    doc: str
    value: Value


@dataclass
class Defs:
    """The named environment an agent may draw on, types and values."""

    entries: list[DefEntry]
    registry: Registry

    def names(self) -> list[str]:
        return sorted(e.name for e in self.entries)

    def type_env(self) -> TypeEnv:
        bindings = {e.name: e.scheme for e in self.entries}
        agent_names = frozenset(e.name for e in self.entries if
                                isinstance(e.value, VPrim) and e.value.special == "agent")
        return TypeEnv(bindings, self.registry, agent_names)

    def value_env(self, extra: dict[str, Value] | None = None) -> Env:
        vars = {e.name: e.value for e in self.entries}
        if extra:
            vars.update(extra)
        return Env(vars)

    def render(self) -> str:
        lines = []
        for e in sorted(self.entries, key=lambda e: e.name):
            sig = f"{e.name} :: {render_type(e.scheme.body)}"
            if e.doc:
                sig += f"  -- {e.doc}"
            lines.append(sig)
        return "\n".join(lines)

    def with_entry(self, entry: DefEntry) -> "Defs":
        return Defs(self.entries + [entry], self.registry)


def prelude_entries(registry: Registry) -> list[DefEntry]:
    return [
        DefEntry(p.name, scheme(p.type_text, registry), p.doc, prim_value(p, registry))
        for p in PRELUDE
    ]


def effect_entries(registry: Registry, effect: str) -> list[DefEntry]:
    eff = registry.effects[effect]
    return [
        DefEntry(p.name, scheme(p.type_text, registry), p.doc, prim_value(p, registry))
        for p in eff.primitives.values()
    ]


DECOY_PRIMITIVES: list[PrimitiveDef] = [
    PrimitiveDef("writeFile", "String -> String -> IO ()", None,
                 "write a string to a file (raw standard library I/O)"),
    PrimitiveDef("readFile", "String -> IO String", None,
                 "read a file (raw standard library I/O)"),
    PrimitiveDef("system", "String -> IO ()", None,
                 "run a shell command (raw standard library I/O)"),
]


def decoy_entries(registry: Registry) -> list[DefEntry]:
    """Raw-IO library signatures; typeable, but no context can run them."""
    return [
        DefEntry(p.name, scheme(p.type_text, registry), p.doc, prim_value(p, registry))
        for p in DECOY_PRIMITIVES
    ]


def defs_for_effect(
    registry: Registry,
    effect: str,
    runtime: "AgentRuntime | None" = None,
    self_name: str | None = None,
    include_decoys: bool = False,
    extra: list[DefEntry] | None = None,
) -> Defs:
    """Assemble the Defs for one effect: prelude + the effect's API, plus
    the agent primitive when a runtime is supplied."""
    entries = prelude_entries(registry) + effect_entries(registry, effect)
    if include_decoys:
        entries += decoy_entries(registry)
    if extra:
        entries += extra
    defs = Defs(entries, registry)
    if self_name is None:
        self_name = {"BibIO": "bibLib", "RIO": "rioLib", "DC": "dcLib"}.get(effect, "lib")
    defs.entries.append(
        DefEntry(self_name, TypeScheme((), _opaque_defs()), "this definition set itself",
                 VOpaque("Defs", defs))
    )
    if runtime is not None:
        defs.entries.append(
            DefEntry("agent", scheme("Defs -> String -> a", registry),
                     "delegate a task to a sub-agent with the given definitions",
                     runtime.agent_prim())
        )
    return defs


def _opaque_defs():
    from lbac.syntax import Opaque

    return Opaque("Defs", ())


# ---------------------------------------------------------------------------
# clients


@dataclass
class Request:
    system: str
    defs_rendering: str
    target_type_rendering: str
    user_prompt: str
    prior_errors: list[str]

    def flat_text(self) -> str:
        parts = [
            self.system,
            "",
            "== available definitions ==",
            self.defs_rendering,
            "",
            f"-- expected type: {self.target_type_rendering}",
            "",
            "== task ==",
            self.user_prompt,
        ]
        if self.prior_errors:
            parts += ["", "== errors from your previous attempts =="]
            parts += [f"[{i + 1}] {err}" for i, err in enumerate(self.prior_errors)]
        return "\n".join(parts)


class LlmClient(Protocol):
    def complete(self, request: Request) -> str: ...


class ScriptedClient:
    """Deterministic stand-in for a model: replays fixture programs.

    The fixture is either ``{"attempts": [...]}`` (one list shared by all
    call sites, each with its own counter) or ``{"sessions": {"<path>":
    {"attempts": [...]}}}`` keyed by call-site path: the top-level session
    is ``root`` and the k-th agent call executed while running a session's
    program gets ``<parent>/<k>``.
    """

    def __init__(self, fixture: dict):
        self.fixture = fixture
        self.counters: dict[str, int] = {}
        self.path = "root"

    @classmethod
    def load(cls, path) -> "ScriptedClient":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(json.load(fh))

    def attempts_for(self, path: str) -> list[str]:
        if "sessions" in self.fixture:
            session = self.fixture["sessions"].get(path)
            if session is None:
                raise AgentError("ClientFailure", f"no scripted session for call path '{path}'")
            return session["attempts"]
        return self.fixture["attempts"]

    def complete(self, request: Request) -> str:
        attempts = self.attempts_for(self.path)
        i = self.counters.get(self.path, 0)
        if i >= len(attempts):
            raise AgentError("ClientFailure", f"scripted attempts exhausted for '{self.path}'")
        self.counters[self.path] = i + 1
        return attempts[i]


class HttpClient:
    """JSON-over-HTTP chat-completion client."""

    def __init__(self, endpoint: str, model: str, api_key_env: str | None = None, timeout: float = 120.0):
        if not endpoint:
            raise ConfigError("llm.endpoint is required for the http client")
        if not model:
            raise ConfigError("llm.model is required for the http client")
        self.endpoint = endpoint
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout

    @classmethod
    def from_config(cls, cfg: dict) -> "HttpClient":
        return cls(cfg.get("llm.endpoint", ""), cfg.get("llm.model", ""), cfg.get("llm.api_key_env"))

    def complete(self, request: Request) -> str:
        import os

        headers = {"Content-Type": "application/json"}
        if self.api_key_env:
            key = os.environ.get(self.api_key_env)
            if not key:
                raise AgentError("ClientFailure", f"environment variable '{self.api_key_env}' is not set")
            headers["Authorization"] = f"Bearer {key}"
        payload = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.flat_text()},
            ],
        }
        req = urllib.request.Request(
            self.endpoint, data=json.dumps(payload).encode("utf-8"), headers=headers
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                body = json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, ValueError, OSError) as exc:
            raise AgentError("ClientFailure", f"chat completion request failed: {exc}")
        try:
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise AgentError("ClientFailure", "malformed chat completion response")


_FENCE = re.compile(r"```[^\n]*\n(.*?)```", re.DOTALL)


def extract_program(text: str) -> str:
    """The largest fenced code block, else the whole message."""
    blocks = _FENCE.findall(text)
    if blocks:
        return max(blocks, key=len).strip()
    return text.strip()


def default_system_template() -> str:
    return resources.files("lbac").joinpath("prompts/system.md").read_text("utf-8")


# ---------------------------------------------------------------------------
# sessions


@dataclass
class AgentConfig:
    retry_budget: int = 3
    max_depth: int = 8
    retry_on_exec_error: bool = False
    max_prior_errors: int = 3
    system_template: str = field(default_factory=default_system_template)
    step_budget: int = 1_000_000
    eval_max_depth: int = 512


@dataclass
class AgentSession:
    defs: Defs
    prompt: str
    target_type: TypeTerm
    retry_budget: int
    depth: int
    path: str
    attempts: list[dict] = field(default_factory=list)

    def prior_errors(self, cap: int) -> list[str]:
        errs = [a["error"] for a in self.attempts if a["outcome"] != "Success"]
        return errs[-cap:]


def render_request(session: AgentSession, system_template: str, cap: int = 3) -> Request:
    return Request(
        system=system_template,
        defs_rendering=session.defs.render(),
        target_type_rendering=render_type(session.target_type),
        user_prompt=session.prompt,
        prior_errors=session.prior_errors(cap),
    )


class AgentRuntime:
    """Owns the client, config and transcript for a tree of agent sessions."""

    def __init__(self, client: LlmClient, config: AgentConfig | None = None,
                 registry: Registry | None = None):
        self.client = client
        self.config = config or AgentConfig()
        self.registry = registry or default_registry()
        self.transcript: list[dict] = []
        self._child_counters: dict[str, int] = {}

    # -- the language-level agent primitive ---------------------------------

    def agent_prim(self) -> VPrim:
        def call(target: TypeTerm | None, args: tuple[Value, ...], ev: Evaluator) -> Value:
            defs_v, prompt_v = args
            if target is None:
                raise RuntimeFault(
                    "CertificateMissing", "agent call site has no recorded target type"
                )
            if not (isinstance(defs_v, VOpaque) and defs_v.tag == "Defs"):
                raise RuntimeFault("Internal", "agent requires a Defs value")
            if not isinstance(prompt_v, VStr):
                raise RuntimeFault("Internal", "agent requires a text prompt")
            defs: Defs = defs_v.payload
            prompt = prompt_v.value
            parent_path = getattr(ev, "_agent_path", "root")
            if isinstance(target, EffectApp):
                def run(ctx: EffectContext, inner_ev: Evaluator) -> Value:
                    return self._spawn(defs, prompt, target, ctx, inner_ev, parent_path)

                return VThunkEffect(target.effect, HostAction(run))
            return self._spawn(defs, prompt, target, None, ev, parent_path)

        return VPrim("agent", 2, None, call, special="agent")

    def _spawn(self, defs: Defs, prompt: str, target: TypeTerm,
               ctx: EffectContext | None, ev: Evaluator, parent_path: str) -> Value:
        depth = getattr(ev, "_agent_depth", 0) + 1
        k = self._child_counters.get(parent_path, 0) + 1
        self._child_counters[parent_path] = k
        path = f"{parent_path}/{k}"
        return self.run_session(defs, prompt, target, ctx, depth=depth, path=path)

    # -- the lifecycle loop ---------------------------------------------------

    def run_session(self, defs: Defs, prompt: str, target: TypeTerm,
                    ctx: EffectContext | None, depth: int = 0, path: str = "root") -> Value:
        if depth > self.config.max_depth:
            raise AgentError("DepthExceeded", f"agent recursion exceeded depth {self.config.max_depth}")
        if isinstance(target, EffectApp) and ctx is not None and ctx.effect != target.effect:
            raise RuntimeFault(
                "EffectIsolation",
                f"session target '{render_type(target)}' does not match context '{ctx.effect}'",
            )
        session = AgentSession(defs, prompt, target, self.config.retry_budget, depth, path)
        env = defs.type_env()
        last_error: str | None = None
        state_token = (
            ctx.snapshot_state(ctx.state)
            if ctx is not None and ctx.snapshot_state is not None
            else None
        )
        for attempt in range(self.config.retry_budget + 1):
            request = render_request(session, self.config.system_template,
                                     self.config.max_prior_errors)
            if hasattr(self.client, "path"):
                self.client.path = path
            try:
                raw = self.client.complete(request)
            except AgentError:
                raise
            except Exception as exc:
                raise AgentError("ClientFailure", f"client raised: {exc}")
            program_text = extract_program(raw)
            record = {
                "path": path,
                "depth": depth,
                "attempt": attempt,
                "target": render_type(target),
                "program": program_text,
            }
            try:
                expr = parse_program(program_text, self.registry)
                cert = check_against(env, expr, target)
            except (ParseError, TypeCheckError) as exc:
                last_error = str(exc) if isinstance(exc, ParseError) else exc.rendered
                record.update(outcome="TypeError", error=last_error)
                session.attempts.append(record)
                self.transcript.append(record)
                continue
            try:
                value = self._execute(defs, expr, cert, ctx, depth, path)
            except (EffectError, RuntimeFault) as exc:
                err = f"execution error: {exc}"
                record.update(outcome="ExecError", error=err)
                session.attempts.append(record)
                self.transcript.append(record)
                if ctx is not None and ctx.restore_state is not None:
                    ctx.restore_state(ctx.state, state_token)
                if self.config.retry_on_exec_error:
                    last_error = err
                    continue
                raise
            record.update(outcome="Success")
            session.attempts.append(record)
            self.transcript.append(record)
            return value
        raise AgentError(
            "RetriesExhausted",
            f"no well-typed program after {self.config.retry_budget + 1} attempts",
            last_error=last_error,
        )

    def _execute(self, defs: Defs, expr: Expr, cert, ctx: EffectContext | None,
                 depth: int, path: str) -> Value:
        budget = Budget(self.config.step_budget, self.config.eval_max_depth)
        ev = Evaluator(self.registry, budget, cert)
        ev._agent_depth = depth
        ev._agent_path = path
        env = defs.value_env()
        expected_effect = cert.effect_name()
        if expected_effect is None:
            # pure target: evaluate under a sealed context, nothing can run
            return ev.eval(env, expr)
        if ctx is None:
            raise RuntimeFault(
                "CertificateMissing",
                f"no effect context supplied for target '{render_type(cert.expected)}'",
            )
        thunk = ev.eval(env, expr)
        return ev.force(ctx, thunk)

    def transcript_jsonl(self) -> str:
        return "\n".join(json.dumps(r, sort_keys=True) for r in self.transcript)


# ---------------------------------------------------------------------------
# config files


def load_config(path) -> dict:
    """INI config flattened to dotted keys (section.option)."""
    import configparser

    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file '{path}'")
    out: dict[str, str] = {}
    for section in parser.sections():
        for option, value in parser.items(section):
            out[f"{section}.{option}"] = value
    return out


def agent_config_from(cfg: dict) -> AgentConfig:
    config = AgentConfig()
    if "agent.retry_budget" in cfg:
        config.retry_budget = int(cfg["agent.retry_budget"])
    if "agent.max_depth" in cfg:
        config.max_depth = int(cfg["agent.max_depth"])
    if "agent.retry_on_exec_error" in cfg:
        config.retry_on_exec_error = cfg["agent.retry_on_exec_error"].lower() in ("1", "true", "yes", "on")
    if "eval.step_budget" in cfg:
        config.step_budget = int(cfg["eval.step_budget"])
    if "eval.max_depth" in cfg:
        config.eval_max_depth = int(cfg["eval.max_depth"])
    return config
