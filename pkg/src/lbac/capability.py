"""RIO: filesystem access gated by unforgeable Path capabilities.

A PathCap proves authority over one subtree.  ``//`` narrows a
capability with full runtime resolution: symlinks are followed hop by
hop and every intermediate result must stay inside the capability being
narrowed, so escapes fail before any read or write primitive runs.
Reads and writes re-verify confinement at use time.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from lbac.evaluator import (
    EffectError,
    Evaluator,
    Value,
    VList,
    VOpaque,
    VStr,
    VUnit,
)
from lbac.registry import EffectDef, PrimitiveDef, Registry

_SYMLINK_HOP_BOUND = 40

_cap_token = object()


@dataclass(frozen=True)
class PathCap:
    """Capability over one path; only this module constructs instances."""

    root: str  # canonical absolute origin of the authority
    rel: tuple[str, ...]  # segments under root, post-resolution
    resolved: str  # canonical absolute path (cached)

    def __post_init__(self) -> None:
        if getattr(_CAP_GUARD, "token", None) is not _cap_token:
            raise TypeError("PathCap has no public constructor")


class _CapGuard:
    token: object | None = None


_CAP_GUARD = _CapGuard()


def _make_cap(root: str, rel: tuple[str, ...], resolved: str) -> PathCap:
    _CAP_GUARD.token = _cap_token
    try:
        return PathCap(root, rel, resolved)
    finally:
        _CAP_GUARD.token = None


class HostFS:
    """Host filesystem indirection; records every access when auditing."""

    def __init__(self, audit: list[dict] | None = None):
        self.audit = audit

    def _log(self, op: str, path: str, allowed: bool) -> None:
        if self.audit is not None:
            self.audit.append({"op": op, "path": path, "allowed": allowed})

    def read(self, path: str) -> str:
        self._log("read", path, True)
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()

    def write(self, path: str, contents: str) -> None:
        self._log("write", path, True)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(contents)

    def listdir(self, path: str) -> list[str]:
        self._log("listdir", path, True)
        return sorted(os.listdir(path))

    def denied(self, op: str, path: str) -> None:
        self._log(op, path, False)

    def is_link(self, path: str) -> bool:
        return os.path.islink(path)

    def read_link(self, path: str) -> str:
        self._log("readlink", path, True)
        return os.readlink(path)

    def exists(self, path: str) -> bool:
        return os.path.lexists(path)

    def is_dir(self, path: str) -> bool:
        return os.path.isdir(path)


@dataclass
class RioState:
    granted_root: PathCap
    fs: HostFS = field(default_factory=HostFS)


def _contained(path: str, confine: str) -> bool:
    return path == confine or path.startswith(confine.rstrip("/") + "/")


def _resolve_under(
    fs: HostFS, base: str, text: str, confine: str, op: str
) -> tuple[str, bool]:
    """Resolve ``text`` against ``base`` with symlink following.

    Every intermediate path must stay inside ``confine``.  Only the final
    component may be missing.  Returns (canonical path, exists).
    """
    hops = _SYMLINK_HOP_BOUND
    if text.startswith("/"):
        cur = "/"
    else:
        cur = base
    queue = [seg for seg in text.replace("\\", "/").split("/") if seg not in ("", ".")]
    if not _contained(cur, confine):
        fs.denied(op, cur)
        raise EffectError("CapabilityEscape", f"'{text}' leaves the capability subtree")
    while queue:
        seg = queue.pop(0)
        if seg == "..":
            cur = os.path.dirname(cur) or "/"
            if not _contained(cur, confine):
                fs.denied(op, cur)
                raise EffectError("CapabilityEscape", f"'{text}' leaves the capability subtree")
            continue
        candidate = cur.rstrip("/") + "/" + seg
        if fs.is_link(candidate):
            hops -= 1
            if hops < 0:
                raise EffectError("ResolutionFailure", f"too many symbolic links resolving '{text}'")
            target = fs.read_link(candidate)
            tsegs = [s for s in target.replace("\\", "/").split("/") if s not in ("", ".")]
            if target.startswith("/"):
                cur = "/"
                if not _contained(cur, confine):
                    fs.denied(op, target)
                    raise EffectError("CapabilityEscape", f"symlink target '{target}' leaves the capability subtree")
            queue = tsegs + queue
            continue
        if fs.exists(candidate):
            cur = candidate
            if not _contained(cur, confine):
                fs.denied(op, cur)
                raise EffectError("CapabilityEscape", f"'{text}' leaves the capability subtree")
            continue
        if queue:
            raise EffectError("ResolutionFailure", f"'{candidate}' does not exist")
        # missing leaf: a single escape-free segment under a checked parent
        if not _contained(candidate, confine):
            fs.denied(op, candidate)
            raise EffectError("CapabilityEscape", f"'{text}' leaves the capability subtree")
        return candidate, False
    return cur, True


def grant_root(root: str | Path, fs: HostFS | None = None) -> RioState:
    fs = fs or HostFS()
    root_str = str(root)
    if not os.path.isdir(root_str):
        raise EffectError("NoSuchRoot", f"'{root_str}' is not an existing directory")
    canonical = os.path.realpath(root_str)
    cap = _make_cap(canonical, (), canonical)
    return RioState(granted_root=cap, fs=fs)


def narrow_cap(state: RioState, cap: PathCap, segment: str) -> PathCap:
    resolved, _ = _resolve_under(state.fs, cap.resolved, segment, cap.resolved, "narrow")
    rel = tuple(p for p in resolved[len(cap.root):].split("/") if p)
    return _make_cap(cap.root, rel, resolved)


def _reverify(state: RioState, cap: PathCap, op: str) -> tuple[str, bool]:
    """Re-resolve a capability at use time (TOCTOU hygiene)."""
    text = "/".join(cap.rel) if cap.rel else "."
    return _resolve_under(state.fs, cap.root, text, cap.root, op)


# ---------------------------------------------------------------------------
# primitives


def _expect_cap(v: Value) -> PathCap:
    if not (isinstance(v, VOpaque) and v.tag == "Path"):
        raise EffectError("CapabilityEscape", "a Path capability is required")
    return v.payload


def _narrow(ctx, args: tuple[Value, ...], ev: Evaluator) -> Value:
    cap_v, seg = args
    cap = _expect_cap(cap_v)
    assert isinstance(seg, VStr)
    return VOpaque("Path", narrow_cap(ctx.state, cap, seg.value))


def _read_rio(ctx, args: tuple[Value, ...], ev: Evaluator) -> Value:
    (cap_v,) = args
    cap = _expect_cap(cap_v)
    state: RioState = ctx.state
    resolved, exists = _reverify(state, cap, "read")
    if not exists:
        raise EffectError("IoFailure", f"'{resolved}' does not exist")
    try:
        return VStr(state.fs.read(resolved))
    except OSError as exc:
        raise EffectError("IoFailure", str(exc))


def _write_rio(ctx, args: tuple[Value, ...], ev: Evaluator) -> Value:
    cap_v, contents = args
    cap = _expect_cap(cap_v)
    assert isinstance(contents, VStr)
    state: RioState = ctx.state
    resolved, _ = _reverify(state, cap, "write")
    try:
        state.fs.write(resolved, contents.value)
    except OSError as exc:
        raise EffectError("IoFailure", str(exc))
    return VUnit()


def _ls(ctx, args: tuple[Value, ...], ev: Evaluator) -> Value:
    (cap_v,) = args
    cap = _expect_cap(cap_v)
    state: RioState = ctx.state
    resolved, exists = _reverify(state, cap, "list")
    if not exists:
        raise EffectError("IoFailure", f"'{resolved}' does not exist")
    if not state.fs.is_dir(resolved):
        raise EffectError("NotADirectory", f"'{resolved}' is not a directory")
    try:
        names = state.fs.listdir(resolved)
    except OSError as exc:
        raise EffectError("IoFailure", str(exc))
    out = []
    for name in names:
        out.append(VOpaque("Path", narrow_cap(state, cap, name)))
    return VList(out)


PRIMITIVES: list[PrimitiveDef] = [
    PrimitiveDef(
        "narrow", "Path -> String -> RIO Path", _narrow,
        "narrow a capability to a child path; surface operator //",
    ),
    PrimitiveDef("readRIO", "Path -> RIO String", _read_rio, "read a file the capability covers"),
    PrimitiveDef(
        "writeRIO", "Path -> String -> RIO ()", _write_rio,
        "truncate-and-write a file the capability covers",
    ),
    PrimitiveDef("ls", "Path -> RIO [Path]", _ls, "child capabilities in name order"),
]


def register(registry: Registry) -> None:
    registry.register_effect(
        EffectDef(
            name="RIO",
            primitives={p.name: p for p in PRIMITIVES},
            state_factory=grant_root,
            operators={"//": "narrow"},
        )
    )
    registry.show_hooks["Path"] = lambda cap: "/".join(cap.rel) if cap.rel else "."


def eval_rio(root: str | Path, cert, env, registry=None, budget=None,
             audit: list[dict] | None = None) -> Value:
    """Run a checked RIO program with authority over one root directory.

    The granted root capability is bound as ``root`` in the program's
    environment; pass an audit list to capture the host-access log.
    """
    from lbac.evaluator import EffectContext, run_checked

    state = grant_root(root, HostFS(audit))
    ctx = EffectContext(
        "RIO",
        state,
        {p.name: p.impl for p in PRIMITIVES if not p.pure},
    )
    run_env = env.child({"root": VOpaque("Path", state.granted_root)})
    return run_checked(cert, run_env, ctx, budget, registry)
