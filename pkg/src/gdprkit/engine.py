"""Declarative rule engine over extracted facts.

Facts populate a fixed inventory of boolean predicates; a catalog of
article-tagged rules (boolean expressions over those predicates) is then
evaluated to produce findings.  A finding's confidence grows with the
amount of supporting evidence:

    confidence = weight * (1 + ln(1 + n_supporting_facts))

Article rankings order articles by their best finding, ties broken by
ascending article number so output is fully deterministic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

from .corpus import SpanRef
from .errors import InputError, RuleLoadError
from .facts import (
    SENSITIVE_CATEGORIES,
    DataCategory,
    Fact,
    FactKind,
    FrontendRegistry,
    PatternTable,
    extract_facts,
)

_DATA_DIR = Path(__file__).parent / "data"

_PRIVACY_PHRASES = ("privacy policy", "privacy notice", "privacy statement", "data protection")


# ---------------------------------------------------------------------------
# Rule condition expressions


@dataclass(frozen=True)
class AtomExpr:
    name: str

    def evaluate(self, state: Mapping[str, "Predicate"]) -> bool:
        return state[self.name].holds

    def walk(self, positive: bool, out: list[tuple[str, bool]]) -> None:
        out.append((self.name, positive))

    def to_obj(self):
        return self.name


@dataclass(frozen=True)
class NotExpr:
    child: "Expr"

    def evaluate(self, state) -> bool:
        return not self.child.evaluate(state)

    def walk(self, positive, out) -> None:
        self.child.walk(not positive, out)

    def to_obj(self):
        return ["not", self.child.to_obj()]


@dataclass(frozen=True)
class AndExpr:
    children: tuple["Expr", ...]

    def evaluate(self, state) -> bool:
        return all(c.evaluate(state) for c in self.children)

    def walk(self, positive, out) -> None:
        for c in self.children:
            c.walk(positive, out)

    def to_obj(self):
        return ["and"] + [c.to_obj() for c in self.children]


@dataclass(frozen=True)
class OrExpr:
    children: tuple["Expr", ...]

    def evaluate(self, state) -> bool:
        return any(c.evaluate(state) for c in self.children)

    def walk(self, positive, out) -> None:
        for c in self.children:
            c.walk(positive, out)

    def to_obj(self):
        return ["or"] + [c.to_obj() for c in self.children]


Expr = AtomExpr | NotExpr | AndExpr | OrExpr


def parse_condition(obj) -> Expr:
    if isinstance(obj, str):
        return AtomExpr(obj)
    if isinstance(obj, (list, tuple)) and obj:
        op = obj[0]
        args = obj[1:]
        if op == "not":
            if len(args) != 1:
                raise RuleLoadError("'not' takes exactly one operand")
            return NotExpr(parse_condition(args[0]))
        if op in ("and", "or"):
            if not args:
                raise RuleLoadError(f"{op!r} needs at least one operand")
            children = tuple(parse_condition(a) for a in args)
            return AndExpr(children) if op == "and" else OrExpr(children)
        raise RuleLoadError(f"unknown operator {op!r}")
    raise RuleLoadError(f"malformed condition: {obj!r}")


# ---------------------------------------------------------------------------
# Predicates


@dataclass(frozen=True)
class Predicate:
    name: str
    holds: bool
    support: tuple[Fact, ...] = ()


_EVIDENCE_ATOMS = [f"CollectsData({c.value})" for c in sorted(SENSITIVE_CATEGORIES, key=lambda c: c.value)]
_OTHER_ATOMS = [
    "CollectsAnyPersonalData",
    "HasConsentCheck",
    "DeclaresPermission",
    "UsesInsecureTransport",
    "SendsDataOffDevice",
    "StoresDataLocally",
    "HandlesCredentials",
    "StoresPlaintextCredentials",
    "UsesEncryption",
    "LogsSensitiveAccess",
    "WritesLogs",
    "HasPrivacyNoticeText",
    "AccessesSpecialCategoryData",
]


def atom_inventory() -> tuple[str, ...]:
    """Every predicate name a rule condition may reference."""
    return tuple(_EVIDENCE_ATOMS + _OTHER_ATOMS)


def populate_predicates(facts: Sequence[Fact]) -> dict[str, Predicate]:
    """Evaluate the full predicate inventory over one fact set.

    Every inventory name is present in the result, held or not.  Evidence
    predicates only look at non-contextual facts; guard predicates
    (consent, encryption, privacy notice) look at everything, so a guard
    anywhere in the file still covers a narrow focus span.
    """
    local = [f for f in facts if not f.contextual]
    state: dict[str, Predicate] = {}

    def put(name: str, support: Sequence[Fact]) -> None:
        state[name] = Predicate(name, bool(support), tuple(support))

    collect_all: list[Fact] = []
    for category in sorted(SENSITIVE_CATEGORIES, key=lambda c: c.value):
        matches = [f for f in local if f.kind is FactKind.API_CALL and f.data_category is category]
        put(f"CollectsData({category.value})", matches)
        collect_all.extend(matches)
    put("CollectsAnyPersonalData", collect_all)

    put("HasConsentCheck", [f for f in facts if f.kind is FactKind.CONSENT_GUARD])
    put("DeclaresPermission", [f for f in local if f.kind is FactKind.PERMISSION_DECL])
    put(
        "UsesInsecureTransport",
        [f for f in local if f.kind is FactKind.URL_LITERAL and f.detail.startswith("http://")],
    )
    put("SendsDataOffDevice", [f for f in local if f.kind is FactKind.NETWORK_SEND])
    put("StoresDataLocally", [f for f in local if f.kind is FactKind.STORAGE_WRITE])

    credentials = [f for f in local if f.data_category is DataCategory.CREDENTIALS]
    put("HandlesCredentials", credentials)
    crypto_anywhere = [f for f in facts if f.kind is FactKind.CRYPTO_USE]
    plaintext = [
        f for f in credentials if f.kind in (FactKind.STRING_LITERAL, FactKind.STORAGE_WRITE)
    ]
    put("StoresPlaintextCredentials", plaintext if not crypto_anywhere else [])
    put("UsesEncryption", crypto_anywhere)

    logs = [f for f in local if f.kind is FactKind.LOG_WRITE]
    put("WritesLogs", logs)
    sensitive = collect_all + credentials
    put("LogsSensitiveAccess", logs + sensitive if logs and sensitive else [])

    notices = [
        f
        for f in facts
        if f.kind is FactKind.STRING_LITERAL
        and any(phrase in f.detail.lower() for phrase in _PRIVACY_PHRASES)
    ]
    put("HasPrivacyNoticeText", notices)
    put(
        "AccessesSpecialCategoryData",
        [f for f in local if f.kind is FactKind.API_CALL and f.data_category is DataCategory.GENERIC],
    )

    assert set(state) == set(atom_inventory())
    return state


# ---------------------------------------------------------------------------
# Rules and findings


@dataclass(frozen=True)
class Rule:
    id: str
    article: int
    condition: Expr
    weight: float
    message: str

    @property
    def positive_only(self) -> bool:
        atoms: list[tuple[str, bool]] = []
        self.condition.walk(True, atoms)
        return all(positive for _, positive in atoms)


class RuleCatalog:
    def __init__(self, rules: Sequence[Rule], version: int = 1):
        self.version = version
        self.rules = tuple(rules)
        self.by_id = {r.id: r for r in self.rules}

    def __len__(self) -> int:
        return len(self.rules)

    def __iter__(self):
        return iter(self.rules)

    def articles(self) -> tuple[int, ...]:
        return tuple(sorted({r.article for r in self.rules}))

    def rescaled(self, factor: float) -> "RuleCatalog":
        """Copy with every weight multiplied by ``factor`` (for invariance checks)."""
        return RuleCatalog([replace(r, weight=r.weight * factor) for r in self.rules], self.version)


def load_rules(path: str | Path | None = None) -> RuleCatalog:
    raw = json.loads(Path(path or _DATA_DIR / "rules.json").read_text(encoding="utf-8"))
    known = set(atom_inventory())
    rules: list[Rule] = []
    seen: set[str] = set()
    for obj in raw["rules"]:
        rule_id = obj["id"]
        if rule_id in seen:
            raise RuleLoadError(f"duplicate rule id {rule_id!r}")
        seen.add(rule_id)
        condition = parse_condition(obj["when"])
        atoms: list[tuple[str, bool]] = []
        condition.walk(True, atoms)
        for name, _ in atoms:
            if name not in known:
                raise RuleLoadError(f"rule {rule_id!r} references unknown predicate {name!r}")
        weight = obj["weight"]
        if not (isinstance(weight, (int, float)) and 0 < weight <= 1):
            raise RuleLoadError(f"rule {rule_id!r} weight must be in (0, 1], got {weight!r}")
        article = obj["article"]
        if not (isinstance(article, int) and article > 0):
            raise RuleLoadError(f"rule {rule_id!r} article must be a positive integer")
        rules.append(Rule(rule_id, article, condition, float(weight), obj["message"]))
    return RuleCatalog(rules, version=raw.get("version", 1))


_default_catalog: RuleCatalog | None = None


def default_catalog() -> RuleCatalog:
    global _default_catalog
    if _default_catalog is None:
        _default_catalog = load_rules()
    return _default_catalog


@dataclass(frozen=True)
class Finding:
    article: int
    rule_id: str
    confidence: float
    spans: tuple[SpanRef, ...]
    explanation: str

    def to_dict(self) -> dict:
        return {
            "article": self.article,
            "rule_id": self.rule_id,
            "confidence": self.confidence,
            "spans": [s.to_dict() for s in self.spans],
            "explanation": self.explanation,
        }


@dataclass(frozen=True)
class RankedPrediction:
    """Articles ordered most-suspect first, with their scores."""

    articles: tuple[int, ...]
    scores: tuple[float, ...] = ()

    def __post_init__(self):
        if len(set(self.articles)) != len(self.articles):
            raise InputError("ranked articles must be distinct")
        if self.scores and len(self.scores) != len(self.articles):
            raise InputError("scores and articles must be parallel")

    def to_dict(self) -> dict:
        return {"articles": list(self.articles), "scores": list(self.scores)}


def confidence_for(weight: float, support_count: int) -> float:
    return weight * (1.0 + math.log1p(support_count))


def evaluate_rules(
    facts: Sequence[Fact], catalog: RuleCatalog | None = None
) -> list[Finding]:
    """Fire every satisfied rule, one finding per rule."""
    catalog = catalog or default_catalog()
    state = populate_predicates(facts)
    findings: list[Finding] = []
    for rule in catalog:
        if not rule.condition.evaluate(state):
            continue
        atoms: list[tuple[str, bool]] = []
        rule.condition.walk(True, atoms)
        support: list[Fact] = []
        seen = set()
        for name, positive in atoms:
            if not positive or not state[name].holds:
                continue
            for fact in state[name].support:
                key = id(fact)
                if key not in seen:
                    seen.add(key)
                    support.append(fact)
        spans = tuple(sorted({f.span for f in support}, key=lambda s: (s.start_line, s.end_line, s.file_path)))
        symbols = sorted({f.symbol for f in support})[:5]
        explanation = rule.message
        if symbols:
            explanation = f"{rule.message} (evidence: {', '.join(symbols)})"
        findings.append(
            Finding(
                article=rule.article,
                rule_id=rule.id,
                confidence=confidence_for(rule.weight, len(support)),
                spans=spans,
                explanation=explanation,
            )
        )
    return findings


def rank_articles(findings: Sequence[Finding]) -> RankedPrediction:
    """Order articles by best finding confidence, ties by article number."""
    best: dict[int, float] = {}
    for finding in findings:
        prev = best.get(finding.article)
        if prev is None or finding.confidence > prev:
            best[finding.article] = finding.confidence
    ordered = sorted(best.items(), key=lambda item: (-item[1], item[0]))
    return RankedPrediction(
        articles=tuple(a for a, _ in ordered), scores=tuple(s for _, s in ordered)
    )


# ---------------------------------------------------------------------------
# End-to-end analysis


@dataclass(frozen=True)
class AnalysisResult:
    facts: tuple[Fact, ...]
    findings: tuple[Finding, ...]
    ranking: RankedPrediction

    def to_dict(self) -> dict:
        return {
            "facts": [f.to_dict() for f in self.facts],
            "findings": [f.to_dict() for f in self.findings],
            "ranking": self.ranking.to_dict(),
        }


@dataclass(frozen=True)
class MultiGranularityResult:
    file: AnalysisResult
    modules: dict[str, AnalysisResult]
    lines: dict[tuple[int, int], AnalysisResult]

    def to_dict(self) -> dict:
        return {
            "file": self.file.to_dict(),
            "modules": {name: r.to_dict() for name, r in self.modules.items()},
            "lines": {f"{s}-{e}": r.to_dict() for (s, e), r in self.lines.items()},
        }


def _analyze_facts(facts: Sequence[Fact], catalog: RuleCatalog) -> AnalysisResult:
    findings = evaluate_rules(facts, catalog)
    return AnalysisResult(tuple(facts), tuple(findings), rank_articles(findings))


def analyze_source(
    source: str,
    language: str,
    *,
    path: str = "",
    registry: FrontendRegistry | None = None,
    table: PatternTable | None = None,
    catalog: RuleCatalog | None = None,
) -> AnalysisResult:
    catalog = catalog or default_catalog()
    facts = extract_facts(source, language, path=path, registry=registry, table=table)
    return _analyze_facts(facts, catalog)


def _refocus(facts: Sequence[Fact], start: int, end: int) -> list[Fact]:
    # same fact set, with out-of-span facts demoted to contextual
    return [
        fact
        if start <= fact.span.start_line and fact.span.end_line <= end
        else replace(fact, contextual=True)
        for fact in facts
    ]


def analyze_multigranularity(
    source: str,
    language: str,
    *,
    path: str = "",
    module_map: Mapping[str, tuple[int, int]] | None = None,
    line_spans: Sequence[tuple[int, int]] | None = None,
    registry: FrontendRegistry | None = None,
    table: PatternTable | None = None,
    catalog: RuleCatalog | None = None,
) -> MultiGranularityResult:
    """Analyze one file at file, module, and line granularity.

    Module and line scopes see only facts inside their span as evidence,
    but file-wide guards (consent checks, crypto, notice text) still apply
    to them.  Requested spans must fall inside the file.
    """
    catalog = catalog or default_catalog()
    line_count = source.count("\n") + 1

    def check(start: int, end: int, what: str) -> None:
        if not (1 <= start <= end):
            raise InputError(f"{what} span {start}-{end} is not a valid line range")
        if end > line_count:
            raise InputError(
                f"{what} span {start}-{end} exceeds file length ({line_count} lines)"
            )

    facts = extract_facts(source, language, path=path, registry=registry, table=table)
    modules: dict[str, AnalysisResult] = {}
    for name, (start, end) in (module_map or {}).items():
        check(start, end, f"module {name!r}")
        modules[name] = _analyze_facts(_refocus(facts, start, end), catalog)
    lines: dict[tuple[int, int], AnalysisResult] = {}
    for start, end in line_spans or ():
        check(start, end, "line")
        lines[(start, end)] = _analyze_facts(_refocus(facts, start, end), catalog)
    return MultiGranularityResult(
        file=_analyze_facts(facts, catalog), modules=modules, lines=lines
    )
