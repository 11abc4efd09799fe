"""The BibIO store, primitives and the provenance auditor."""

import json
import random
import re
from pathlib import Path

import pytest

from generators import gen_bib_program
from helpers import bib_context, union_defs
from lbac import provenance
from lbac.evaluator import (
    EffectError,
    VInt,
    VList,
    VOpaque,
    VStr,
    VUnit,
    run_checked,
)
from lbac.registry import default_registry
from lbac.syntax import parse_program, parse_type
from lbac.typecheck import check_against


@pytest.fixture(scope="module")
def store():
    return provenance.BibStore.shipped()


@pytest.fixture(scope="module")
def defs():
    return union_defs()


def run_bib(defs, src, ty, outdir):
    reg = default_registry()
    expr = parse_program(src, reg)
    cert = check_against(defs.type_env(), expr, parse_type(ty, reg))
    ctx = bib_context(outdir)
    return run_checked(cert, defs.value_env(), ctx, registry=reg), ctx.state


# -- search --------------------------------------------------------------------


def test_search_differential_privacy(store):
    keys = store.search("differential privacy")
    assert any(k.startswith("10.1007") for k in keys)


def test_search_empty_query_returns_all(store):
    assert store.search("") == sorted(store.entries)


def test_search_no_match(store):
    assert store.search("zzzz-no-such-title") == []


def test_search_ordering_and_semantics_oracle(store):
    """Token-AND over lowercased titles, ascending key order."""
    rng = random.Random(5)
    words = ["differential", "privacy", "noise", "DATA", "Learning", "zzz", "the"]
    for _ in range(200):
        query = " ".join(rng.sample(words, rng.randrange(0, 3)))
        expected = sorted(
            key for key, e in store.entries.items()
            if all(tok in e.title.lower() for tok in query.lower().split())
        )
        assert store.search(query) == expected


def test_search_case_insensitive(store):
    assert store.search("DIFFERENTIAL PRIVACY") == store.search("differential privacy")


# -- fetch ---------------------------------------------------------------------


def test_fetch_2006_entry(store):
    key = next(k for k in store.entries if k.startswith("10.1007"))
    entry = store.fetch(key)
    assert entry.year == 2006
    assert entry.title.startswith("Calibrating noise")


def test_fetch_unknown_doi(store):
    with pytest.raises(EffectError) as exc:
        store.fetch("10.9999/none")
    assert exc.value.kind == "UnknownDoi"


def test_fetch_provenance_records_store_id(defs, tmp_path):
    v, state = run_bib(defs, 'do { hits <- dblpSearch "differential privacy";'
                             " bibs <- mapM dblpFetchBib hits; return bibs }",
                       "BibIO [Trusted Bib]", tmp_path)
    assert isinstance(v, VList) and v.items
    for tb in v.items:
        assert isinstance(tb, VOpaque) and tb.tag == "Trusted"
        assert tb.payload.store_id == state.store.store_id


def test_no_public_trusted_constructor():
    """API-surface audit: no exported callable builds a Trusted value from
    raw text, in Python or in the language surface."""
    import lbac.provenance as mod

    public = [n for n in dir(mod) if not n.startswith("_")]
    assert "TrustedBib" in public  # the type is visible, its values are not forgeable
    # language surface: only dblpFetchBib returns Trusted
    producing = [
        p.name for p in provenance.PRIMITIVES
        if "Trusted" in p.type_text.split("->")[-1]
    ]
    assert producing == ["dblpFetchBib"]


# -- append --------------------------------------------------------------------


def test_append_writes_bibtex_plus_lf(defs, tmp_path):
    run_bib(defs, 'do { hits <- dblpSearch "calibrating";'
                  ' bibs <- mapM dblpFetchBib hits;'
                  ' appendToBibFile "refs.bib" (head bibs) }', "BibIO ()", tmp_path)
    data = (tmp_path / "refs.bib").read_bytes()
    store = provenance.BibStore.shipped()
    key = next(k for k in store.entries if k.startswith("10.1007"))
    assert data == store.entries[key].bibtex.encode() + b"\n"


def test_append_twice_byte_identical_blocks(defs, tmp_path):
    run_bib(defs, 'do { hits <- dblpSearch "calibrating";'
                  ' bibs <- mapM dblpFetchBib hits;'
                  ' appendToBibFile "r.bib" (head bibs);'
                  ' appendToBibFile "r.bib" (head bibs) }', "BibIO ()", tmp_path)
    data = (tmp_path / "r.bib").read_bytes()
    assert len(data) % 2 == 0
    half = len(data) // 2
    assert data[:half] == data[half:]


def test_append_rejects_traversal(defs, tmp_path):
    with pytest.raises(EffectError) as exc:
        run_bib(defs, 'do { hits <- dblpSearch "calibrating";'
                      ' bibs <- mapM dblpFetchBib hits;'
                      ' appendToBibFile "../../etc/x" (head bibs) }', "BibIO ()", tmp_path)
    assert exc.value.kind == "PathEscape"
    assert not list(tmp_path.iterdir())


def test_append_rejects_absolute(defs, tmp_path):
    with pytest.raises(EffectError) as exc:
        run_bib(defs, 'do { hits <- dblpSearch "calibrating";'
                      ' bibs <- mapM dblpFetchBib hits;'
                      ' appendToBibFile "/etc/x" (head bibs) }', "BibIO ()", tmp_path)
    assert exc.value.kind == "PathEscape"


# -- getDate -------------------------------------------------------------------


def test_getdate_2006(defs, tmp_path):
    v, _ = run_bib(defs, 'do { hits <- dblpSearch "calibrating";'
                         " bibs <- mapM dblpFetchBib hits;"
                         " return (getDate (head bibs)) }", "BibIO Int", tmp_path)
    assert v == VInt(2006)


def test_getdate_matches_bibtex_year_scan(store):
    """Independent oracle: the year field scanned out of the bibtex text."""
    for entry in store.entries.values():
        m = re.search(r"year=\{(\d+)\}", entry.bibtex)
        assert m, f"fixture entry {entry.doi_key} has no year field"
        assert int(m.group(1)) == entry.year


def test_getdate_year_zero_synthetic():
    store = provenance.BibStore.from_json(json.dumps(
        [{"doi": "x", "title": "t", "year": 0, "bibtex": "@misc{x, year={0}}"}]
    ))
    assert store.fetch("x").year == 0


# -- bibtex round-trip -----------------------------------------------------------


def test_bibtex_round_trips_byte_equal(store, defs, tmp_path):
    run_bib(defs, 'do { hits <- dblpSearch "";'
                  ' bibs <- mapM dblpFetchBib hits;'
                  ' mapM_ (appendToBibFile "all.bib") bibs }', "BibIO ()", tmp_path)
    data = (tmp_path / "all.bib").read_text(encoding="utf-8")
    for entry in store.entries.values():
        assert entry.bibtex + "\n" in data


# -- the auditor -----------------------------------------------------------------


def test_auditor_accepts_store_output(defs, tmp_path, store):
    run_bib(defs, 'do { hits <- dblpSearch "privacy";'
                  ' bibs <- mapM dblpFetchBib hits;'
                  ' mapM_ (appendToBibFile "out/refs.bib") bibs }', "BibIO ()", tmp_path)
    assert provenance.audit_outputs(store, tmp_path) == []


def test_auditor_flags_tampered_output(tmp_path, store):
    (tmp_path / "refs.bib").write_text("@misc{forged, year={1999}}\n")
    violations = provenance.audit_outputs(store, tmp_path)
    assert violations


def test_auditor_flags_partial_block(tmp_path, store):
    entry = next(iter(store.entries.values()))
    (tmp_path / "refs.bib").write_text(entry.bibtex[: len(entry.bibtex) // 2])
    assert provenance.audit_outputs(store, tmp_path)


def test_provenance_soundness_fuzz(defs, store, tmp_path):
    """Randomly generated well-typed BibIO programs never write anything
    the store did not supply."""
    rng = random.Random(2024)
    reg = default_registry()
    env_t = defs.type_env()
    for i in range(60):
        outdir = tmp_path / f"run{i}"
        outdir.mkdir()
        src = gen_bib_program(rng)
        expr = parse_program(src, reg)
        cert = check_against(env_t, expr, parse_type("BibIO ()", reg))
        run_checked(cert, defs.value_env(), bib_context(outdir), registry=reg)
        assert provenance.audit_outputs(store, outdir) == [], src


def test_store_read_only_during_session(defs, tmp_path, store):
    before = {k: e.bibtex for k, e in store.entries.items()}
    run_bib(defs, 'do { hits <- dblpSearch "privacy";'
                  ' bibs <- mapM dblpFetchBib hits;'
                  ' mapM_ (appendToBibFile "refs.bib") bibs }', "BibIO ()", tmp_path)
    after = {k: e.bibtex for k, e in provenance.BibStore.shipped().entries.items()}
    assert before == after
