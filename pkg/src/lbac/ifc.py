"""DC: information-flow control with a floating current label.

A DC session tracks every observation in its current label; sinks check
flows before writing, toLabeled isolates sub-computations behind an
opaque Labeled value, and a privilege held inside the sendDM tool
declassifies drafted messages while accounting for their origin.
Backed by a mock web and messaging environment loaded from fixtures.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from urllib.parse import urlparse

from lbac.evaluator import (
    EffectError,
    Evaluator,
    Value,
    VList,
    VOpaque,
    VStr,
    VUnit,
)
from lbac.labels import (
    PUBLIC,
    CnfFormula,
    DCLabel,
    Privilege,
    can_flow_to,
    join,
    privileged_flow,
)
from lbac.registry import EffectDef, PrimitiveDef, Registry


@dataclass
class CapturedError:
    """An EffectError raised inside toLabeled, sealed with the result."""

    error: EffectError


@dataclass
class LabeledValue:
    label: DCLabel
    payload: Value | CapturedError


@dataclass
class DcState:
    current_label: DCLabel
    clearance: DCLabel
    initial_label: DCLabel
    web: dict[str, tuple[str, DCLabel]]
    users: dict[str, DCLabel]  # user name -> DM sink label
    user_sink: DCLabel  # sink label for writeToUser
    dm_privilege: Privilege
    outbox: list[dict] = field(default_factory=list)
    audit: list[dict] = field(default_factory=list)


def _auto_clearance(principals: list[str]) -> DCLabel:
    sec = CnfFormula.of(*[[p] for p in principals]) if principals else CnfFormula.of()
    return DCLabel(sec, CnfFormula.of())


def make_state(web_fixture: str | Path | dict | None = None,
               env_fixture: str | Path | dict | None = None) -> DcState:
    web_data = _load_json(web_fixture, "fixtures/web_fixture.json")
    env_data = _load_json(env_fixture, "fixtures/env_fixture.json")
    web = {
        host: (entry["body"], DCLabel.from_json(entry["label"]))
        for host, entry in web_data.get("hosts", {}).items()
    }
    principals = env_data.get("principals", [])
    clearance_cfg = env_data.get("clearance", "auto")
    clearance = (
        _auto_clearance(principals)
        if clearance_cfg == "auto"
        else DCLabel.from_json(clearance_cfg)
    )
    initial = DCLabel.from_json(env_data.get("initial_label", {}))
    return DcState(
        current_label=initial,
        clearance=clearance,
        initial_label=initial,
        web=web,
        users={name: DCLabel.from_json(l) for name, l in env_data.get("users", {}).items()},
        user_sink=DCLabel.from_json(env_data.get("user_sink", {})),
        dm_privilege=Privilege.of(*env_data.get("dm_privilege", [])),
    )


def _load_json(source, default_resource: str) -> dict:
    if isinstance(source, dict):
        return source
    if source is None:
        text = resources.files("lbac").joinpath(default_resource).read_text("utf-8")
    else:
        text = Path(source).read_text(encoding="utf-8")
    return json.loads(text)


def raise_label(state: DcState, l: DCLabel) -> None:
    new = join(state.current_label, l)
    if not can_flow_to(new, state.clearance):
        raise EffectError(
            "ClearanceExceeded",
            f"raising the current label to {new} would exceed clearance {state.clearance}",
        )
    state.current_label = new


def declassify(priv: Privilege, lv: LabeledValue, sink: DCLabel = PUBLIC) -> Value:
    """Trusted-code declassification; never exported into agent Defs."""
    if isinstance(lv.payload, CapturedError):
        raise lv.payload.error
    if not privileged_flow(priv, lv.label, sink):
        raise EffectError(
            "InsufficientPrivilege",
            f"privilege over {sorted(priv.owned)} cannot release {lv.label} to {sink}",
        )
    return lv.payload


# ---------------------------------------------------------------------------
# primitives


def _expect_labeled(v: Value) -> LabeledValue:
    if not (isinstance(v, VOpaque) and v.tag == "Labeled"):
        raise EffectError("LabelViolation", "a Labeled value is required")
    return v.payload


def _expect_label(v: Value) -> DCLabel:
    if not (isinstance(v, VOpaque) and v.tag == "Label"):
        raise EffectError("LabelViolation", "a Label value is required")
    return v.payload


def _http_get(ctx, args: tuple[Value, ...], ev: Evaluator) -> Value:
    (url,) = args
    assert isinstance(url, VStr)
    state: DcState = ctx.state
    host = urlparse(url.value).netloc or url.value
    if host not in state.web:
        raise EffectError("UnknownHost", f"host '{host}' is not in the web fixture")
    body, label = state.web[host]
    raise_label(state, label)
    state.audit.append({
        "op": "httpGet",
        "sink": host,
        "current_label": state.current_label.to_json(),
        "value_label": label.to_json(),
        "allowed": True,
    })
    return VStr(body)


def _write_to_user(ctx, args: tuple[Value, ...], ev: Evaluator) -> Value:
    (content,) = args
    assert isinstance(content, VStr)
    state: DcState = ctx.state
    allowed = can_flow_to(state.current_label, state.user_sink)
    state.audit.append({
        "op": "writeToUser",
        "sink": state.user_sink.to_json(),
        "current_label": state.current_label.to_json(),
        "value_label": state.current_label.to_json(),
        "allowed": allowed,
    })
    if not allowed:
        raise EffectError(
            "LabelViolation",
            f"current label {state.current_label} does not flow to the user sink {state.user_sink}",
        )
    state.outbox.append({
        "kind": "user",
        "to": "user",
        "body": content.value,
        "current_label": state.current_label.to_json(),
        "value_label": state.current_label.to_json(),
    })
    return VUnit()


def _send_dm(ctx, args: tuple[Value, ...], ev: Evaluator) -> Value:
    user_v, msg_v = args
    if not (isinstance(user_v, VOpaque) and user_v.tag == "User"):
        raise EffectError("LabelViolation", "sendDM requires a User from getUser")
    lv = _expect_labeled(msg_v)
    state: DcState = ctx.state
    user = user_v.payload
    sink = state.users.get(user)
    if sink is None:
        raise EffectError("UnknownUser", f"no such user '{user}'")

    # check 1: the caller itself is clean enough to name the recipient
    caller_ok = can_flow_to(state.current_label, sink)
    # check 2: the tool's privilege can release the drafted message
    captured = isinstance(lv.payload, CapturedError)
    value_flow_ok = privileged_flow(state.dm_privilege, lv.label, sink)
    value_ok = not captured and value_flow_ok
    state.audit.append({
        "op": "sendDM",
        "sink": sink.to_json(),
        "current_label": state.current_label.to_json(),
        "value_label": lv.label.to_json(),
        "allowed": caller_ok and value_ok,
        "detail": {
            "caller_ok": caller_ok,
            "value_flow_ok": value_flow_ok,
            "captured_error": captured,
            "to": user,
        },
    })
    if not caller_ok:
        raise EffectError(
            "LabelViolation",
            f"caller label {state.current_label} does not flow to the DM sink for '{user}'",
        )
    if isinstance(lv.payload, CapturedError):
        raise lv.payload.error
    if not value_ok:
        raise EffectError(
            "LabelViolation",
            f"declassification failed: {lv.label} cannot be released to the DM sink for '{user}'",
        )
    body = lv.payload
    if not (isinstance(body, VOpaque) and body.tag == "Message"):
        raise EffectError("LabelViolation", "sendDM requires a Labeled Message")
    state.outbox.append({
        "kind": "dm",
        "to": user,
        "body": body.payload,
        "current_label": state.current_label.to_json(),
        "value_label": lv.label.to_json(),
    })
    return VUnit()


def _to_labeled(ctx, args: tuple[Value, ...], ev: Evaluator) -> Value:
    bound_v, sub = args
    bound = _expect_label(bound_v)
    state: DcState = ctx.state
    if not can_flow_to(state.current_label, bound):
        raise EffectError(
            "LabelBoundExceeded",
            f"current label {state.current_label} does not flow to the bound {bound}",
        )
    if not can_flow_to(bound, state.clearance):
        raise EffectError(
            "ClearanceExceeded", f"bound {bound} exceeds clearance {state.clearance}"
        )
    saved = state.current_label
    payload: Value | CapturedError
    try:
        payload = ev.force(ctx, sub)
    except EffectError as exc:
        payload = CapturedError(exc)
    end_label = state.current_label
    state.current_label = saved
    if not can_flow_to(end_label, bound):
        raise EffectError(
            "LabelBoundExceeded",
            f"sub-computation label {end_label} exceeds the bound {bound}",
        )
    return VOpaque("Labeled", LabeledValue(bound, payload))


def _unlabel(ctx, args: tuple[Value, ...], ev: Evaluator) -> Value:
    (msg_v,) = args
    lv = _expect_labeled(msg_v)
    state: DcState = ctx.state
    raise_label(state, lv.label)
    if isinstance(lv.payload, CapturedError):
        raise lv.payload.error
    return lv.payload


def _get_user(ctx, args: tuple[Value, ...], ev: Evaluator) -> Value:
    (name,) = args
    assert isinstance(name, VStr)
    state: DcState = ctx.state
    if name.value not in state.users:
        raise EffectError("UnknownUser", f"no such user '{name.value}'")
    return VOpaque("User", name.value)


def _current_label(ctx, args: tuple[Value, ...], ev: Evaluator) -> Value:
    return VOpaque("Label", ctx.state.current_label)


def _bound_for(ctx, args: tuple[Value, ...], ev: Evaluator) -> Value:
    (hosts,) = args
    assert isinstance(hosts, VList)
    state: DcState = ctx.state
    label = state.current_label
    for h in hosts.items:
        assert isinstance(h, VStr)
        if h.value not in state.web:
            raise EffectError("UnknownHost", f"host '{h.value}' is not in the web fixture")
        label = join(label, state.web[h.value][1])
    return VOpaque("Label", label)


def _mk_message(args: tuple[Value, ...], ev: Evaluator) -> Value:
    (s,) = args
    assert isinstance(s, VStr)
    return VOpaque("Message", s.value)


def _label_of(args: tuple[Value, ...], ev: Evaluator) -> Value:
    (msg_v,) = args
    lv = _expect_labeled(msg_v)
    return VOpaque("Label", lv.label)


PRIMITIVES: list[PrimitiveDef] = [
    PrimitiveDef("httpGet", "String -> DC String", _http_get,
                 "fetch a page body; the current label absorbs the source's label"),
    PrimitiveDef("writeToUser", "String -> DC ()", _write_to_user,
                 "post to the user's stream if the current label flows to it"),
    PrimitiveDef("sendDM", "User -> Labeled Message -> DC ()", _send_dm,
                 "deliver a drafted message; the caller must be clean and the tool declassifies the draft"),
    PrimitiveDef("toLabeled", "Label -> DC a -> DC (Labeled a)", _to_labeled,
                 "run a sub-computation in isolation, sealing its result under a bound"),
    PrimitiveDef("unlabel", "Labeled a -> DC a", _unlabel,
                 "open a sealed value, raising the current label"),
    PrimitiveDef("getUser", "String -> DC User", _get_user,
                 "look up a user in the messaging directory"),
    PrimitiveDef("currentLabel", "DC Label", _current_label,
                 "the caller's current label"),
    PrimitiveDef("boundFor", "[String] -> DC Label", _bound_for,
                 "the current label joined with the listed hosts' labels, for toLabeled bounds"),
    PrimitiveDef("mkMessage", "String -> Message", _mk_message,
                 "wrap text in a message body", pure=True),
    PrimitiveDef("labelOf", "Labeled a -> Label", _label_of,
                 "the label of a sealed value, without opening it", pure=True),
]


def register(registry: Registry) -> None:
    registry.register_opaque("Label", 0)
    registry.register_effect(
        EffectDef(
            name="DC",
            primitives={p.name: p for p in PRIMITIVES},
            state_factory=make_state,
        )
    )
    registry.show_hooks["Label"] = str
    registry.show_hooks["Message"] = lambda body: body
    registry.show_hooks["User"] = lambda name: name


def dc_context(state: DcState):
    """EffectContext for a DC session; a failed execution restores the
    label it floated to, never the messages it already delivered."""
    from lbac.evaluator import EffectContext

    return EffectContext(
        "DC",
        state,
        {p.name: p.impl for p in PRIMITIVES if not p.pure},
        snapshot_state=lambda s: s.current_label,
        restore_state=lambda s, label: setattr(s, "current_label", label),
    )


def snapshot(state: DcState) -> dict:
    """The final environment view the benchmark checkers assert over."""
    return {
        "outbox": state.outbox,
        "current_label": state.current_label.to_json(),
        "audit": state.audit,
    }


def replay_audit(state: DcState) -> list[str]:
    """Recompute every sink decision in the audit log from its recorded
    labels; returns descriptions of entries whose decision was wrong."""
    bad = []
    for i, entry in enumerate(state.audit):
        if entry["op"] == "writeToUser":
            cur = DCLabel.from_json(entry["current_label"])
            sink = DCLabel.from_json(entry["sink"])
            if can_flow_to(cur, sink) != entry["allowed"]:
                bad.append(f"audit[{i}]: writeToUser decision does not replay")
        elif entry["op"] == "sendDM":
            cur = DCLabel.from_json(entry["current_label"])
            sink = DCLabel.from_json(entry["sink"])
            value = DCLabel.from_json(entry["value_label"])
            expect = (
                can_flow_to(cur, sink)
                and privileged_flow(state.dm_privilege, value, sink)
                and not entry["detail"]["captured_error"]
            )
            if expect != entry["allowed"]:
                bad.append(f"audit[{i}]: sendDM decision does not replay")
    return bad
