"""BibIO: search and fetch from a mock DBLP store, append to a bib file.

The guarantee is provenance: values of the opaque ``Trusted`` type arise
only from ``dblpFetchBib``, and ``appendToBibFile`` accepts nothing
else, so every byte written to disk originates from the store.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from lbac.evaluator import (
    EffectError,
    Evaluator,
    Value,
    VInt,
    VList,
    VOpaque,
    VStr,
    VUnit,
)
from lbac.registry import EffectDef, PrimitiveDef, Registry


@dataclass(frozen=True)
class Bib:
    doi_key: str
    title: str
    year: int
    bibtex: str


@dataclass(frozen=True)
class TrustedBib:
    """A fetched entry plus its provenance record; never built from raw text."""

    bib: Bib
    store_id: str
    fetched_at: float


class BibStore:
    """Read-only store of bib entries with a token index over titles."""

    def __init__(self, entries: list[Bib], store_id: str):
        self.entries = {e.doi_key: e for e in entries}
        self.store_id = store_id

    @classmethod
    def from_json(cls, text: str) -> "BibStore":
        data = json.loads(text)
        entries = [Bib(d["doi"], d["title"], int(d["year"]), d["bibtex"]) for d in data]
        store_id = hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]
        return cls(entries, store_id)

    @classmethod
    def load(cls, path: str | Path) -> "BibStore":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    @classmethod
    def shipped(cls) -> "BibStore":
        text = resources.files("lbac").joinpath("fixtures/dblp_fixture.json").read_text("utf-8")
        return cls.from_json(text)

    def search(self, query: str) -> list[str]:
        """DOI keys of entries whose lowercased title contains every
        whitespace-separated query token, in ascending key order."""
        tokens = query.lower().split()
        keys = [
            key
            for key, entry in self.entries.items()
            if all(tok in entry.title.lower() for tok in tokens)
        ]
        return sorted(keys)

    def fetch(self, doi_key: str) -> Bib:
        entry = self.entries.get(doi_key)
        if entry is None:
            raise EffectError("UnknownDoi", f"no entry for DOI '{doi_key}'")
        return entry


@dataclass
class BibState:
    store: BibStore
    outdir: Path
    writes: list[Path] = field(default_factory=list)


def make_state(fixture: str | Path | None = None, outdir: str | Path = ".") -> BibState:
    store = BibStore.load(fixture) if fixture else BibStore.shipped()
    return BibState(store, Path(outdir))


# ---------------------------------------------------------------------------
# primitives


def _dblp_search(ctx, args: tuple[Value, ...], ev: Evaluator) -> Value:
    (query,) = args
    assert isinstance(query, VStr)
    state: BibState = ctx.state
    return VList([VOpaque("DOI", key) for key in state.store.search(query.value)])


def _dblp_fetch(ctx, args: tuple[Value, ...], ev: Evaluator) -> Value:
    (doi,) = args
    if not (isinstance(doi, VOpaque) and doi.tag == "DOI"):
        raise EffectError("UnknownDoi", "dblpFetchBib requires a DOI from dblpSearch")
    state: BibState = ctx.state
    entry = state.store.fetch(doi.payload)
    return VOpaque("Trusted", TrustedBib(entry, state.store.store_id, time.time()))


def _resolve_out_path(state: BibState, raw: str) -> Path:
    if raw.startswith("/") or raw.startswith("\\"):
        raise EffectError("PathEscape", f"absolute path '{raw}' is not allowed")
    parts = [p for p in raw.replace("\\", "/").split("/") if p not in ("", ".")]
    if not parts or ".." in parts:
        raise EffectError("PathEscape", f"path '{raw}' escapes the output directory")
    return state.outdir.joinpath(*parts)


def _append_to_bib_file(ctx, args: tuple[Value, ...], ev: Evaluator) -> Value:
    path_v, trusted = args
    assert isinstance(path_v, VStr)
    if not (isinstance(trusted, VOpaque) and trusted.tag == "Trusted"):
        raise EffectError("PathEscape", "appendToBibFile requires a Trusted entry")
    state: BibState = ctx.state
    target = _resolve_out_path(state, path_v.value)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, "ab") as fh:
            fh.write(trusted.payload.bib.bibtex.encode("utf-8") + b"\n")
    except OSError as exc:
        raise EffectError("IoFailure", str(exc))
    state.writes.append(target)
    return VUnit()


def _get_date(args: tuple[Value, ...], ev: Evaluator) -> Value:
    (trusted,) = args
    assert isinstance(trusted, VOpaque) and trusted.tag == "Trusted"
    return VInt(trusted.payload.bib.year)


PRIMITIVES: list[PrimitiveDef] = [
    PrimitiveDef(
        "dblpSearch", "String -> BibIO [DOI]", _dblp_search,
        "DOIs of entries whose title contains every query token",
    ),
    PrimitiveDef(
        "dblpFetchBib", "DOI -> BibIO (Trusted Bib)", _dblp_fetch,
        "fetch the trusted bib entry for a DOI",
    ),
    PrimitiveDef(
        "appendToBibFile", "String -> Trusted Bib -> BibIO ()", _append_to_bib_file,
        "append a trusted entry to a bib file under the output directory",
    ),
    PrimitiveDef(
        "getDate", "Trusted Bib -> Int", _get_date,
        "publication year of a trusted entry", pure=True,
    ),
]


def register(registry: Registry) -> None:
    registry.register_effect(
        EffectDef(
            name="BibIO",
            primitives={p.name: p for p in PRIMITIVES},
            state_factory=make_state,
        )
    )
    registry.show_hooks["DOI"] = lambda key: key
    registry.show_hooks["Trusted"] = lambda tb: tb.bib.bibtex


# ---------------------------------------------------------------------------
# post-run auditor


def audit_outputs(store: BibStore, outdir: str | Path) -> list[str]:
    """Check the provenance property over everything under outdir.

    Every written file must be a concatenation of blocks, each byte-equal
    to some store entry's bibtex followed by one LF.  Returns violation
    descriptions; an empty list means the property held.
    """
    blocks = sorted(
        ((e.bibtex + "\n").encode("utf-8") for e in store.entries.values()),
        key=len,
        reverse=True,
    )
    violations: list[str] = []
    outdir = Path(outdir)
    for path in sorted(p for p in outdir.rglob("*") if p.is_file()):
        data = path.read_bytes()
        if not _segments_into(data, blocks):
            violations.append(f"{path}: contents are not a sequence of store entries")
    return violations


def _segments_into(data: bytes, blocks: list[bytes]) -> bool:
    # greedy with backtracking in case one block is a prefix of another
    stack = [0]
    seen = set()
    while stack:
        pos = stack.pop()
        if pos == len(data):
            return True
        if pos in seen:
            continue
        seen.add(pos)
        for block in blocks:
            if data.startswith(block, pos):
                stack.append(pos + len(block))
    return False
