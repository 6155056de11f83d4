"""Violation corpus: record schema, loading, span parsing, summary statistics.

The corpus file is a UTF-8 JSON array of seven-field record objects. Both
``commit_id`` and ``Commit_ID`` key spellings occur in published data; the
loader accepts either and normalizes to ``commit_id``.
"""

from __future__ import annotations

import json
import re
import statistics
from dataclasses import dataclass
from pathlib import Path

from .errors import CorpusSchemaError, SpanParseError

_COMMIT_RE = re.compile(r"^[0-9a-fA-F]{40}$")

# "line N" or "lines A-B" (hyphen or en-dash), case-insensitive.
_LINE_SPEC_RE = re.compile(
    r"^\s*lines?\s+(\d+)\s*(?:[-–]\s*(\d+))?\s*$",
    re.IGNORECASE,
)

LANGUAGE_BY_EXTENSION = {
    ".js": "js",
    ".json": "json",
    ".java": "java",
    ".kt": "kt",
    ".cs": "cs",
    ".php": "php",
    ".xml": "xml",
    ".html": "html",
    ".py": "py",
    ".h": "h",
}


@dataclass(frozen=True)
class SpanRef:
    """1-based inclusive line span within a file."""

    file_path: str
    start_line: int
    end_line: int

    def __post_init__(self):
        if self.start_line < 1 or self.end_line < self.start_line:
            raise SpanParseError(
                f"invalid span ({self.start_line}, {self.end_line}) for {self.file_path!r}"
            )

    def contains(self, other: "SpanRef") -> bool:
        return self.start_line <= other.start_line and other.end_line <= self.end_line

    def to_dict(self) -> dict:
        return {
            "file_path": self.file_path,
            "start_line": self.start_line,
            "end_line": self.end_line,
        }


@dataclass(frozen=True)
class ViolationRecord:
    """One annotated violation instance: provenance + article + snippet + note."""

    app_name: str
    repo_url: str
    commit_id: str
    violated_article: int
    code_snippet_path: str
    code_snippet: str
    annotation_note: str

    def to_dict(self) -> dict:
        return {
            "app_name": self.app_name,
            "repo_url": self.repo_url,
            "commit_id": self.commit_id,
            "violated_article": self.violated_article,
            "code_snippet_path": self.code_snippet_path,
            "code_snippet": self.code_snippet,
            "annotation_note": self.annotation_note,
        }


@dataclass(frozen=True)
class LengthStats:
    """Character-count summary; stddev is population stddev."""

    min: int
    max: int
    mean: float
    median: float
    stddev: float

    def to_dict(self) -> dict:
        return {
            "min": self.min,
            "max": self.max,
            "mean": self.mean,
            "median": self.median,
            "stddev": self.stddev,
        }


@dataclass(frozen=True)
class CorpusStats:
    total_records: int
    single_line_count: int
    multi_line_count: int
    per_article_counts: dict[int, int]
    per_extension_counts: dict[str, int]
    snippet_length_stats: LengthStats
    note_length_stats: LengthStats

    def to_dict(self) -> dict:
        return {
            "total_records": self.total_records,
            "single_line_count": self.single_line_count,
            "multi_line_count": self.multi_line_count,
            "per_article_counts": {str(k): v for k, v in sorted(self.per_article_counts.items())},
            "per_extension_counts": dict(sorted(self.per_extension_counts.items())),
            "snippet_length_stats": self.snippet_length_stats.to_dict(),
            "note_length_stats": self.note_length_stats.to_dict(),
        }


_REQUIRED_FIELDS = (
    "app_name",
    "repo_url",
    "commit_id",
    "violated_article",
    "code_snippet_path",
    "code_snippet",
    "annotation_note",
)


def _record_from_obj(obj: dict, index: int) -> ViolationRecord:
    data = dict(obj)
    if "commit_id" not in data and "Commit_ID" in data:
        data["commit_id"] = data.pop("Commit_ID")
    for name in _REQUIRED_FIELDS:
        if name not in data:
            raise CorpusSchemaError(index, name, "missing")

    article = data["violated_article"]
    if not isinstance(article, int) or isinstance(article, bool) or article < 1:
        raise CorpusSchemaError(index, "violated_article", f"must be a positive integer, got {article!r}")
    commit = data["commit_id"]
    if not isinstance(commit, str) or not _COMMIT_RE.match(commit):
        raise CorpusSchemaError(index, "commit_id", "must be a 40-char hex Git SHA")
    if not data["code_snippet"]:
        raise CorpusSchemaError(index, "code_snippet", "must be non-empty")
    note = data["annotation_note"]
    if not isinstance(note, str) or not note.strip():
        raise CorpusSchemaError(index, "annotation_note", "must contain text")

    return ViolationRecord(
        app_name=str(data["app_name"]),
        repo_url=str(data["repo_url"]),
        commit_id=commit,
        violated_article=article,
        code_snippet_path=str(data["code_snippet_path"]),
        code_snippet=str(data["code_snippet"]),
        annotation_note=str(data["annotation_note"]),
    )


def load_corpus(path: str | Path) -> list[ViolationRecord]:
    """Load a JSON corpus file, preserving input order.

    Raises CorpusSchemaError naming the record index and field on a schema
    violation, OSError if the file cannot be read.
    """
    with open(path, encoding="utf-8") as f:
        raw = json.load(f)
    if not isinstance(raw, list):
        raise CorpusSchemaError(0, "<document>", "top-level value must be an array")
    return [_record_from_obj(obj, i) for i, obj in enumerate(raw)]


def dump_corpus(records: list[ViolationRecord], path: str | Path) -> None:
    """Serialize records with canonical field names; load_corpus round-trips."""
    with open(path, "w", encoding="utf-8") as f:
        json.dump([r.to_dict() for r in records], f, indent=2, ensure_ascii=False)
        f.write("\n")


def parse_span(code_snippet_path: str) -> tuple[str, SpanRef | None]:
    """Split a snippet path into (file_path, span).

    The line spec, when present, follows the last ``:`` separator: ``line N``
    maps to (N, N), ``lines A-B`` (hyphen or en-dash) to (A, B). Text after
    the last ``:`` that is not a line spec is kept as part of the path.
    """
    if not code_snippet_path:
        raise SpanParseError("empty code_snippet_path")
    head, sep, tail = code_snippet_path.rpartition(":")
    if sep:
        m = _LINE_SPEC_RE.match(tail)
        if m:
            start = int(m.group(1))
            end = int(m.group(2)) if m.group(2) else start
            file_path = head.strip()
            if start < 1 or end < start:
                raise SpanParseError(
                    f"invalid line spec {tail.strip()!r} in {code_snippet_path!r}"
                )
            return file_path, SpanRef(file_path, start, end)
    return code_snippet_path.strip(), None


def detect_language(file_path: str) -> str:
    """Map a file extension (case-insensitive) to a language tag, else 'unknown'."""
    suffix = Path(file_path).suffix.lower()
    return LANGUAGE_BY_EXTENSION.get(suffix, "unknown")


def _safe_parse(code_snippet_path: str) -> tuple[str, SpanRef | None]:
    """parse_span that degrades to (whole path, no span) on a malformed spec."""
    try:
        return parse_span(code_snippet_path)
    except SpanParseError:
        return code_snippet_path.strip(), None


def _length_stats(lengths: list[int]) -> LengthStats:
    if not lengths:
        return LengthStats(0, 0, 0.0, 0.0, 0.0)
    return LengthStats(
        min=min(lengths),
        max=max(lengths),
        mean=statistics.fmean(lengths),
        median=statistics.median(lengths),
        stddev=statistics.pstdev(lengths),
    )


def compute_stats(
    corpus: list[ViolationRecord],
    *,
    absent_span_is_multi_line: bool = True,
) -> CorpusStats:
    """Summarize a corpus.

    Granularity comes from parse_span: start == end counts single-line,
    start < end multi-line. Records with no parseable span count multi-line
    by default (an unspecified span denotes a region, not a statement);
    flip ``absent_span_is_multi_line`` to count them single-line instead.
    """
    single = 0
    multi = 0
    per_article: dict[int, int] = {}
    per_extension: dict[str, int] = {}
    for record in corpus:
        file_path, span = _safe_parse(record.code_snippet_path)
        if span is None:
            if absent_span_is_multi_line:
                multi += 1
            else:
                single += 1
        elif span.start_line == span.end_line:
            single += 1
        else:
            multi += 1
        per_article[record.violated_article] = per_article.get(record.violated_article, 0) + 1
        ext = Path(file_path).suffix.lower()
        per_extension[ext] = per_extension.get(ext, 0) + 1

    return CorpusStats(
        total_records=len(corpus),
        single_line_count=single,
        multi_line_count=multi,
        per_article_counts=per_article,
        per_extension_counts=per_extension,
        snippet_length_stats=_length_stats([len(r.code_snippet) for r in corpus]),
        note_length_stats=_length_stats([len(r.annotation_note) for r in corpus]),
    )
