"""DC labels: pairs of monotone CNF formulas over principals.

A formula is a conjunction of clauses, each clause a disjunction of
principals; the empty conjunction is True.  ``secrecy`` answers who may
observe a value, ``integrity`` which sources influenced it.  The flow
order, join and meet are the standard lattice over canonical formulas,
pinned elsewhere by a brute-force truth-table oracle.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

Clause = frozenset[str]


@dataclass(frozen=True)
class CnfFormula:
    clauses: frozenset[Clause]

    @staticmethod
    def of(*clauses) -> "CnfFormula":
        """Canonicalize: drop any clause that is a superset of another."""
        sets = {frozenset(c) for c in clauses}
        for c in sets:
            if not c:
                raise ValueError("clauses must be non-empty")
            for p in c:
                if not p or not isinstance(p, str):
                    raise ValueError("principals are non-empty strings")
        minimal = frozenset(c for c in sets if not any(o < c for o in sets))
        return CnfFormula(minimal)

    def is_true(self) -> bool:
        return not self.clauses

    def to_json(self) -> list[list[str]]:
        return [sorted(c) for c in sorted(self.clauses, key=lambda c: (len(c), sorted(c)))]

    @staticmethod
    def from_json(data: list[list[str]]) -> "CnfFormula":
        return CnfFormula.of(*data)

    def __str__(self) -> str:
        if self.is_true():
            return "True"
        return " /\\ ".join(
            "(" + " \\/ ".join(sorted(c)) + ")"
            for c in sorted(self.clauses, key=lambda c: (len(c), sorted(c)))
        )


TRUE = CnfFormula(frozenset())


def implies(f: CnfFormula, g: CnfFormula) -> bool:
    """f entails g: every clause of g contains some clause of f."""
    return all(any(cf <= cg for cf in f.clauses) for cg in g.clauses)


def cnf_and(f: CnfFormula, g: CnfFormula) -> CnfFormula:
    return CnfFormula.of(*f.clauses, *g.clauses)


def cnf_or(f: CnfFormula, g: CnfFormula) -> CnfFormula:
    # distribute; an empty (True) side absorbs, as the empty product shows
    return CnfFormula.of(*(cf | cg for cf, cg in product(f.clauses, g.clauses)))


@dataclass(frozen=True)
class DCLabel:
    secrecy: CnfFormula
    integrity: CnfFormula

    def to_json(self) -> dict:
        return {"secrecy": self.secrecy.to_json(), "integrity": self.integrity.to_json()}

    @staticmethod
    def from_json(data: dict) -> "DCLabel":
        return DCLabel(
            CnfFormula.from_json(data.get("secrecy", [])),
            CnfFormula.from_json(data.get("integrity", [])),
        )

    def __str__(self) -> str:
        return f"<{self.secrecy}, {self.integrity}>"


PUBLIC = DCLabel(TRUE, TRUE)


def can_flow_to(l1: DCLabel, l2: DCLabel) -> bool:
    return implies(l2.secrecy, l1.secrecy) and implies(l1.integrity, l2.integrity)


def join(l1: DCLabel, l2: DCLabel) -> DCLabel:
    """Least upper bound under can_flow_to."""
    return DCLabel(cnf_and(l1.secrecy, l2.secrecy), cnf_or(l1.integrity, l2.integrity))


def meet(l1: DCLabel, l2: DCLabel) -> DCLabel:
    """Greatest lower bound under can_flow_to."""
    return DCLabel(cnf_or(l1.secrecy, l2.secrecy), cnf_and(l1.integrity, l2.integrity))


# ---------------------------------------------------------------------------
# privilege-mediated flow


@dataclass(frozen=True)
class Privilege:
    """Principals the holder speaks for; constructible only by trusted
    scaffolding and tool internals, never exported into agent Defs."""

    owned: frozenset[str]

    @staticmethod
    def of(*principals: str) -> "Privilege":
        return Privilege(frozenset(principals))


def weaken_secrecy(f: CnfFormula, priv: Privilege) -> CnfFormula:
    """Delete privilege principals from secrecy clauses; a clause thereby
    emptied is discharged entirely (the secrecy requirement weakens)."""
    kept = []
    for clause in f.clauses:
        remaining = clause - priv.owned
        if remaining:
            kept.append(remaining)
    return CnfFormula.of(*kept)


def strengthen_integrity(f: CnfFormula, priv: Privilege) -> tuple[CnfFormula, bool]:
    """Dual weakening for integrity: deleting privilege principals makes
    each clause stronger; a clause emptied entirely entails everything,
    reported via the flag since no False formula is representable."""
    kept = []
    entails_all = False
    for clause in f.clauses:
        remaining = clause - priv.owned
        if remaining:
            kept.append(remaining)
        else:
            entails_all = True
    return CnfFormula.of(*kept), entails_all


def privileged_flow(priv: Privilege, value: DCLabel, sink: DCLabel) -> bool:
    """can_flow_to with the value's label weakened by the privilege."""
    sec = weaken_secrecy(value.secrecy, priv)
    integ, entails_all = strengthen_integrity(value.integrity, priv)
    sec_ok = implies(sink.secrecy, sec)
    int_ok = entails_all or implies(integ, sink.integrity)
    return sec_ok and int_ok


# ---------------------------------------------------------------------------
# enumeration helpers for exhaustive checks


def all_formulas(principals: tuple[str, ...]) -> list[CnfFormula]:
    """Every canonical formula over the principals (antichains of the
    non-empty subsets ordered by inclusion, True included)."""
    subsets = []
    n = len(principals)
    for mask in range(1, 1 << n):
        subsets.append(frozenset(p for i, p in enumerate(principals) if mask >> i & 1))
    out: list[CnfFormula] = []

    def extend(idx: int, chosen: list[Clause]) -> None:
        if idx == len(subsets):
            out.append(CnfFormula(frozenset(chosen)))
            return
        extend(idx + 1, chosen)
        cand = subsets[idx]
        if all(not (c < cand or cand < c) for c in chosen):
            extend(idx + 1, chosen + [cand])

    extend(0, [])
    return out


def all_labels(principals: tuple[str, ...]) -> list[DCLabel]:
    formulas = all_formulas(principals)
    return [DCLabel(s, i) for s in formulas for i in formulas]
