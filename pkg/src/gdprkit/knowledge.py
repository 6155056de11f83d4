"""Article catalog and retrieval knowledge base.

The catalog maps article numbers to titles and one-line summaries; prompt
construction and the agent's lookup tool both read from it.  The knowledge
base holds article texts plus labeled violation examples and answers
nearest-neighbour queries with a plain token-frequency cosine, which keeps
retrieval deterministic and dependency-free.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import ViolationRecord
from .errors import ConfigurationError, UnknownArticleError

_DATA_DIR = Path(__file__).parent / "data"

ARTICLE_TEXT = "article_text"
VIOLATION_EXAMPLE = "violation_example"


@dataclass(frozen=True)
class ArticleInfo:
    number: int
    title: str
    summary: str


def load_articles(path: str | Path | None = None) -> dict[int, ArticleInfo]:
    raw = json.loads(Path(path or _DATA_DIR / "articles.json").read_text(encoding="utf-8"))
    catalog = {}
    for obj in raw["articles"]:
        info = ArticleInfo(number=obj["number"], title=obj["title"], summary=obj["summary"])
        catalog[info.number] = info
    return dict(sorted(catalog.items()))


_catalog: dict[int, ArticleInfo] | None = None


def article_catalog() -> dict[int, ArticleInfo]:
    global _catalog
    if _catalog is None:
        _catalog = load_articles()
    return _catalog


def article_lookup(number: int, catalog: dict[int, ArticleInfo] | None = None) -> ArticleInfo:
    catalog = catalog or article_catalog()
    try:
        return catalog[number]
    except KeyError:
        raise UnknownArticleError(f"article {number} is not in the catalog") from None


# ---------------------------------------------------------------------------
# Similarity

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def similarity(a: str, b: str) -> float:
    """Cosine over token frequency vectors; 0.0 when either side is empty."""
    ca, cb = Counter(tokenize(a)), Counter(tokenize(b))
    if not ca or not cb:
        return 0.0
    dot = sum(count * cb[token] for token, count in ca.items())
    norm = math.sqrt(sum(c * c for c in ca.values()) * sum(c * c for c in cb.values()))
    return dot / norm if norm else 0.0


# ---------------------------------------------------------------------------
# Knowledge base


@dataclass(frozen=True)
class KbDoc:
    doc_id: str
    kind: str  # ARTICLE_TEXT or VIOLATION_EXAMPLE
    body: str
    labels: frozenset[int]

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "kind": self.kind,
            "body": self.body,
            "labels": sorted(self.labels),
        }


class KnowledgeBase:
    def __init__(self, docs: Sequence[KbDoc]):
        self.docs = tuple(docs)
        self._by_id = {d.doc_id: d for d in self.docs}
        if len(self._by_id) != len(self.docs):
            raise ConfigurationError("knowledge base doc ids must be unique")

    def __len__(self) -> int:
        return len(self.docs)

    def get(self, doc_id: str) -> KbDoc | None:
        return self._by_id.get(doc_id)

    def retrieve(self, query: str, top_n: int = 3) -> list[tuple[KbDoc, float]]:
        """Best-scoring docs first; ties broken by doc id for determinism."""
        scored = [(doc, similarity(query, doc.body)) for doc in self.docs]
        scored.sort(key=lambda pair: (-pair[1], pair[0].doc_id))
        return scored[: max(top_n, 0)]

    def to_json(self) -> str:
        payload = {"version": 1, "docs": [d.to_dict() for d in self.docs]}
        return json.dumps(payload, indent=2, ensure_ascii=False) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def from_json(cls, text: str) -> "KnowledgeBase":
        raw = json.loads(text)
        docs = []
        for obj in raw["docs"]:
            kind = obj["kind"]
            if kind not in (ARTICLE_TEXT, VIOLATION_EXAMPLE):
                raise ConfigurationError(f"unknown knowledge doc kind {kind!r}")
            docs.append(
                KbDoc(
                    doc_id=obj["doc_id"],
                    kind=kind,
                    body=obj["body"],
                    labels=frozenset(obj["labels"]),
                )
            )
        return cls(docs)

    @classmethod
    def load(cls, path: str | Path) -> "KnowledgeBase":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def build_kb(
    records: Iterable[ViolationRecord],
    *,
    catalog: dict[int, ArticleInfo] | None = None,
    include_articles: bool = True,
) -> KnowledgeBase:
    """Article texts plus one labeled example per distinct snippet location.

    Example grouping follows the snippet-classification dataset: records
    sharing a code_snippet_path merge into one document labeled with the
    union of their articles.
    """
    catalog = catalog or article_catalog()
    docs: list[KbDoc] = []
    if include_articles:
        for number, info in catalog.items():
            docs.append(
                KbDoc(
                    doc_id=f"article-{number:03d}",
                    kind=ARTICLE_TEXT,
                    body=f"Article {number}: {info.title}. {info.summary}",
                    labels=frozenset({number}),
                )
            )

    grouped: dict[str, dict] = {}
    order: list[str] = []
    for record in records:
        slot = grouped.get(record.code_snippet_path)
        if slot is None:
            slot = {"snippet": record.code_snippet, "articles": set(), "notes": []}
            grouped[record.code_snippet_path] = slot
            order.append(record.code_snippet_path)
        slot["articles"].add(record.violated_article)
        if record.annotation_note and record.annotation_note not in slot["notes"]:
            slot["notes"].append(record.annotation_note)

    for i, key in enumerate(order, start=1):
        slot = grouped[key]
        body = slot["snippet"]
        if slot["notes"]:
            body = body.rstrip("\n") + "\n" + "\n".join(slot["notes"])
        docs.append(
            KbDoc(
                doc_id=f"example-{i:04d}",
                kind=VIOLATION_EXAMPLE,
                body=body,
                labels=frozenset(slot["articles"]),
            )
        )
    return KnowledgeBase(docs)
