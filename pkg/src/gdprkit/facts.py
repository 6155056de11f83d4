"""Extraction of analysis facts from source code.

Facts are small, language-independent observations ("this file calls
``getDeviceId``", "this string literal is an http:// URL") that the rule
engine later combines into findings.  Extraction runs through per-language
frontends; languages without a structural frontend fall back to a lexical
scan driven by the same pattern table, so every input yields *some* facts.
"""

from __future__ import annotations

import bisect
import json
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .corpus import SpanRef
from .errors import ConfigurationError

_DATA_DIR = Path(__file__).parent / "data"


class FactKind(str, Enum):
    API_CALL = "ApiCall"
    STRING_LITERAL = "StringLiteral"
    URL_LITERAL = "UrlLiteral"
    PERMISSION_DECL = "PermissionDecl"
    CONSENT_GUARD = "ConsentGuard"
    CRYPTO_USE = "CryptoUse"
    STORAGE_WRITE = "StorageWrite"
    NETWORK_SEND = "NetworkSend"
    LOG_WRITE = "LogWrite"
    CLASS_DECL = "ClassDecl"


class DataCategory(str, Enum):
    DEVICE_ID = "DEVICE_ID"
    LOCATION = "LOCATION"
    CAMERA = "CAMERA"
    MICROPHONE = "MICROPHONE"
    CONTACTS = "CONTACTS"
    SMS = "SMS"
    KEYSTROKES = "KEYSTROKES"
    CREDENTIALS = "CREDENTIALS"
    GENERIC = "GENERIC"


# Categories that count as personal data collection when observed in a call.
SENSITIVE_CATEGORIES: frozenset[DataCategory] = frozenset(
    {
        DataCategory.DEVICE_ID,
        DataCategory.LOCATION,
        DataCategory.CAMERA,
        DataCategory.MICROPHONE,
        DataCategory.CONTACTS,
        DataCategory.SMS,
        DataCategory.KEYSTROKES,
    }
)


@dataclass(frozen=True)
class Fact:
    """One observation about a piece of source code.

    ``contextual`` marks facts that fall outside the requested focus span.
    They still participate in evaluation of file-wide guard conditions but
    are not themselves evidence local to the focus.
    """

    kind: FactKind
    symbol: str
    detail: str
    span: SpanRef
    language: str
    data_category: DataCategory | None = None
    contextual: bool = False

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "symbol": self.symbol,
            "detail": self.detail,
            "span": self.span.to_dict(),
            "language": self.language,
            "data_category": self.data_category.value if self.data_category else None,
            "contextual": self.contextual,
        }


# ---------------------------------------------------------------------------
# Pattern table


@dataclass(frozen=True)
class PatternEntry:
    pattern: str
    kind: FactKind
    data_category: DataCategory | None
    languages: frozenset[str] | None  # None means any language
    match: str  # "word" or "regex"
    compiled: re.Pattern = field(compare=False)

    def applies_to(self, language: str) -> bool:
        return self.languages is None or language in self.languages


def _compile_word(pattern: str) -> re.Pattern:
    # qualified names ("Log.d") tolerate whitespace around the dot
    parts = [re.escape(p) for p in pattern.split(".")]
    return re.compile(r"\b" + r"\s*\.\s*".join(parts) + r"\b")


class PatternTable:
    """Indexed view over the sensitive-API pattern list."""

    def __init__(self, entries: Sequence[PatternEntry], version: int = 1):
        self.version = version
        self.entries = tuple(entries)
        self._by_name: dict[str, PatternEntry] = {}
        for entry in self.entries:
            if entry.match == "word":
                self._by_name[entry.pattern] = entry

    def word_entries(self, language: str) -> list[PatternEntry]:
        return [e for e in self.entries if e.match == "word" and e.applies_to(language)]

    def regex_entries(self, language: str) -> list[PatternEntry]:
        return [e for e in self.entries if e.match == "regex" and e.applies_to(language)]

    def lookup_call(self, receiver: str | None, name: str, language: str) -> PatternEntry | None:
        """Match a call expression against the table, most-qualified first."""
        if receiver is not None:
            entry = self._by_name.get(f"{receiver}.{name}")
            if entry is not None and entry.applies_to(language):
                return entry
        entry = self._by_name.get(name)
        if entry is not None and "." not in entry.pattern and entry.applies_to(language):
            return entry
        return None


def load_pattern_table(path: str | Path | None = None) -> PatternTable:
    raw = json.loads(Path(path or _DATA_DIR / "patterns.json").read_text(encoding="utf-8"))
    entries = []
    for obj in raw["patterns"]:
        match = obj.get("match", "word")
        pattern = obj["pattern"]
        if match == "word":
            compiled = _compile_word(pattern)
        elif match == "regex":
            compiled = re.compile(pattern, re.IGNORECASE if obj.get("ignore_case") else 0)
        else:
            raise ConfigurationError(f"unknown match mode {match!r} for pattern {pattern!r}")
        category = obj.get("data_category")
        languages = obj.get("languages")
        entries.append(
            PatternEntry(
                pattern=pattern,
                kind=FactKind(obj["kind"]),
                data_category=DataCategory(category) if category else None,
                languages=frozenset(languages) if languages else None,
                match=match,
                compiled=compiled,
            )
        )
    return PatternTable(entries, version=raw.get("version", 1))


_default_table: PatternTable | None = None


def default_pattern_table() -> PatternTable:
    global _default_table
    if _default_table is None:
        _default_table = load_pattern_table()
    return _default_table


# ---------------------------------------------------------------------------
# Shared scanning helpers


class _LineIndex:
    def __init__(self, source: str):
        self.starts = [0]
        for m in re.finditer("\n", source):
            self.starts.append(m.end())

    def line_of(self, offset: int) -> int:
        return bisect.bisect_right(self.starts, offset)


_URL_RE = re.compile(r"https?://[^\s\"'<>\\]+")


def _literal_facts(
    content: str, start_line: int, end_line: int, language: str, path: str
) -> list[Fact]:
    span = SpanRef(path, start_line, end_line)
    url = _URL_RE.search(content)
    if url is not None:
        return [
            Fact(
                kind=FactKind.URL_LITERAL,
                symbol="url",
                detail=url.group(0),
                span=span,
                language=language,
            )
        ]
    if not content.strip():
        return []
    return [
        Fact(
            kind=FactKind.STRING_LITERAL,
            symbol="literal",
            detail=content,
            span=span,
            language=language,
        )
    ]


def _regex_pass(
    source: str, language: str, table: PatternTable, path: str, index: _LineIndex
) -> list[Fact]:
    """Run every regex-mode entry over the raw text."""
    facts = []
    defaults = {FactKind.URL_LITERAL: "url", FactKind.STRING_LITERAL: "literal"}
    for entry in table.regex_entries(language):
        for m in entry.compiled.finditer(source):
            groups = m.groupdict()
            symbol = groups.get("symbol") or defaults.get(entry.kind, entry.kind.value.lower())
            detail = groups.get("detail")
            if detail is None:
                detail = m.group(0)
            line = index.line_of(m.start())
            end_line = index.line_of(max(m.start(), m.end() - 1))
            facts.append(
                Fact(
                    kind=entry.kind,
                    symbol=symbol,
                    detail=detail,
                    span=SpanRef(path, line, end_line),
                    language=language,
                    data_category=entry.data_category,
                )
            )
    return facts


def _finalize(facts: Iterable[Fact]) -> list[Fact]:
    seen = set()
    out = []
    for fact in facts:
        key = (fact.kind, fact.symbol, fact.detail, fact.span.start_line, fact.span.end_line)
        if key in seen:
            continue
        seen.add(key)
        out.append(fact)
    out.sort(key=lambda f: (f.span.start_line, f.span.end_line, f.kind.value, f.symbol, f.detail))
    return out


# ---------------------------------------------------------------------------
# Lexical fallback frontend


def lexical_fallback(
    source: str,
    language: str,
    path: str = "",
    table: PatternTable | None = None,
) -> list[Fact]:
    """Pattern-table scan with no parsing at all.

    Word entries match on identifier boundaries, so ``getDeviceId`` does not
    fire inside ``widgetDeviceIdx``.  Used for every language that has no
    structural frontend registered, and as the safety net when a structural
    frontend raises.
    """
    table = table or default_pattern_table()
    index = _LineIndex(source)
    facts = []
    for entry in table.word_entries(language):
        for m in entry.compiled.finditer(source):
            line = index.line_of(m.start())
            facts.append(
                Fact(
                    kind=entry.kind,
                    symbol=entry.pattern,
                    detail=m.group(0),
                    span=SpanRef(path, line, line),
                    language=language,
                    data_category=entry.data_category,
                )
            )
    facts.extend(_regex_pass(source, language, table, path, index))
    return _finalize(facts)


# ---------------------------------------------------------------------------
# Structural frontend (java / kt)

_CLASS_DECL_RE = re.compile(r"\b(?:class|interface|object|enum)\s+([A-Za-z_$][\w$]*)")
_CALL_RE = re.compile(r"(?:(?P<recv>[A-Za-z_$][\w$]*)\s*\.\s*)?(?P<name>[A-Za-z_$][\w$]*)\s*\(")

# keywords that look like calls when followed by '('
_CONTROL_KEYWORDS = frozenset(
    {"if", "for", "while", "switch", "catch", "when", "synchronized", "return",
     "throw", "do", "else", "try", "assert", "using", "foreach", "lock", "super", "this"}
)
# words before `name(` that still mean `name(` is a call, not a declaration
_CALL_PRECEDING_WORDS = frozenset(
    {"return", "new", "throw", "else", "case", "do", "in", "is", "await",
     "yield", "typeof", "delete", "not", "and", "or", "instanceof"}
)


def _scan_java_like(source: str) -> tuple[str, list[tuple[int, int, str]]]:
    """Blank out comments and string contents, preserving offsets.

    Returns the blanked text plus extracted literals as
    ``(start_line, end_line, content)``.
    """
    out = list(source)
    literals = []
    line = 1
    i = 0
    n = len(source)

    def blank(j: int) -> None:
        if out[j] != "\n":
            out[j] = " "

    while i < n:
        ch = source[i]
        if ch == "\n":
            line += 1
            i += 1
            continue
        if ch == "/" and i + 1 < n and source[i + 1] == "/":
            while i < n and source[i] != "\n":
                blank(i)
                i += 1
            continue
        if ch == "/" and i + 1 < n and source[i + 1] == "*":
            blank(i)
            blank(i + 1)
            i += 2
            while i < n and not (source[i] == "*" and i + 1 < n and source[i + 1] == "/"):
                if source[i] == "\n":
                    line += 1
                blank(i)
                i += 1
            if i < n:
                blank(i)
                blank(i + 1)
                i += 2
            continue
        if ch == '"':
            if source.startswith('"""', i):
                start_line, start = line, i + 3
                i += 3
                while i < n and not source.startswith('"""', i):
                    if source[i] == "\n":
                        line += 1
                    blank(i)
                    i += 1
                literals.append((start_line, line, source[start:i]))
                i = min(i + 3, n)
                continue
            start_line, start = line, i + 1
            i += 1
            while i < n and source[i] != '"':
                if source[i] == "\\" and i + 1 < n:
                    blank(i)
                    i += 1
                if source[i] == "\n":
                    line += 1
                blank(i)
                i += 1
            literals.append((start_line, line, source[start:i]))
            i += 1
            continue
        if ch == "'":
            i += 1
            while i < n and source[i] != "'":
                if source[i] == "\\" and i + 1 < n:
                    blank(i)
                    i += 1
                if source[i] == "\n":
                    line += 1
                blank(i)
                i += 1
            i += 1
            continue
        i += 1
    return "".join(out), literals


def _preceding_word(text: str, pos: int) -> str | None:
    j = pos
    while j > 0 and text[j - 1] in " \t":
        j -= 1
    if j == 0 or not (text[j - 1].isalnum() or text[j - 1] in "_$>]"):
        return None
    end = j
    while j > 0 and (text[j - 1].isalnum() or text[j - 1] in "_$"):
        j -= 1
    return text[j:end]


def structural_frontend(
    source: str,
    language: str,
    path: str = "",
    table: PatternTable | None = None,
) -> list[Fact]:
    """Comment/string-aware scan for curly-brace languages.

    Emits class declarations, table-matched call expressions, guard
    identifiers, string/URL literals, and the shared regex-entry facts.
    """
    table = table or default_pattern_table()
    index = _LineIndex(source)
    blanked, literals = _scan_java_like(source)
    facts = []

    for m in _CLASS_DECL_RE.finditer(blanked):
        line = index.line_of(m.start(1))
        facts.append(
            Fact(
                kind=FactKind.CLASS_DECL,
                symbol=m.group(1),
                detail=m.group(0),
                span=SpanRef(path, line, line),
                language=language,
            )
        )

    for m in _CALL_RE.finditer(blanked):
        name = m.group("name")
        if name in _CONTROL_KEYWORDS:
            continue
        recv = m.group("recv")
        if recv is None:
            word = _preceding_word(blanked, m.start())
            if word is not None and word not in _CALL_PRECEDING_WORDS:
                continue  # `void foo(` style declaration
        if recv in _CONTROL_KEYWORDS:
            recv = None
        entry = table.lookup_call(recv, name, language)
        if entry is None:
            continue
        line = index.line_of(m.start("name"))
        symbol = entry.pattern if "." in entry.pattern else name
        facts.append(
            Fact(
                kind=entry.kind,
                symbol=symbol,
                detail=m.group(0).rstrip("( \t"),
                span=SpanRef(path, line, line),
                language=language,
                data_category=entry.data_category,
            )
        )

    # bare identifiers still count for consent guards and permission strings:
    # `if (consentGiven)` has no call expression but is a guard all the same
    for entry in table.word_entries(language):
        if entry.kind not in (FactKind.CONSENT_GUARD, FactKind.PERMISSION_DECL):
            continue
        for m in entry.compiled.finditer(blanked):
            tail = blanked[m.end():].lstrip(" \t")
            if tail.startswith("("):
                continue  # call form is covered by the call pass above
            line = index.line_of(m.start())
            facts.append(
                Fact(
                    kind=entry.kind,
                    symbol=entry.pattern,
                    detail=m.group(0),
                    span=SpanRef(path, line, line),
                    language=language,
                    data_category=entry.data_category,
                )
            )

    for start_line, end_line, content in literals:
        facts.extend(_literal_facts(content, start_line, end_line, language, path))

    facts.extend(_regex_pass(source, language, table, path, index))
    return _finalize(facts)


# ---------------------------------------------------------------------------
# Frontend registry

Frontend = Callable[..., list[Fact]]


class FrontendRegistry:
    """Maps language tags to extraction frontends.

    The registry freezes when analysis starts; registering a frontend after
    that point, or re-binding a tag, is a configuration error.
    """

    def __init__(self, fallback: Frontend = lexical_fallback):
        self._frontends: dict[str, Frontend] = {}
        self._fallback = fallback
        self._frozen = False

    def register(self, language: str, frontend: Frontend) -> None:
        if self._frozen:
            raise ConfigurationError(
                f"cannot register frontend for {language!r}: registry is frozen"
            )
        if language in self._frontends:
            raise ConfigurationError(f"frontend for {language!r} already registered")
        self._frontends[language] = frontend

    def freeze(self) -> None:
        self._frozen = True

    @property
    def frozen(self) -> bool:
        return self._frozen

    def languages(self) -> list[str]:
        return sorted(self._frontends)

    def frontend_for(self, language: str) -> Frontend:
        return self._frontends.get(language, self._fallback)

    def has_structural(self, language: str) -> bool:
        return language in self._frontends


def _make_default_registry() -> FrontendRegistry:
    registry = FrontendRegistry()
    registry.register("java", structural_frontend)
    registry.register("kt", structural_frontend)
    return registry


_DEFAULT_REGISTRY = _make_default_registry()


def default_registry() -> FrontendRegistry:
    return _DEFAULT_REGISTRY


def register_frontend(
    language: str, frontend: Frontend, *, registry: FrontendRegistry | None = None
) -> None:
    (registry or _DEFAULT_REGISTRY).register(language, frontend)


def extract_facts(
    source: str,
    language: str,
    *,
    path: str = "",
    focus: SpanRef | None = None,
    registry: FrontendRegistry | None = None,
    table: PatternTable | None = None,
) -> list[Fact]:
    """Extract facts from one source text.

    The whole text is always scanned; ``focus`` only tags facts outside the
    focus span as contextual, so narrowing focus never invents new local
    facts.  A structural frontend that raises degrades to the lexical
    fallback instead of failing the caller.
    """
    registry = registry or _DEFAULT_REGISTRY
    frontend = registry.frontend_for(language)
    try:
        facts = frontend(source, language, path=path, table=table)
    except Exception:
        if frontend is lexical_fallback:
            raise
        facts = lexical_fallback(source, language, path=path, table=table)
    if focus is not None:
        facts = [
            replace(fact, contextual=True)
            if not (focus.start_line <= fact.span.start_line and fact.span.end_line <= focus.end_line)
            else fact
            for fact in facts
        ]
    return facts
