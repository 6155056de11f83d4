"""Prediction methods and model bindings.

Four interchangeable methods produce article predictions: the formal rule
engine, zero-shot prompting, retrieval-augmented prompting, and a tool-using
agent loop.  Model access goes through a tiny Reasoner interface with three
bindings: live HTTP, scripted (for tests), and cache replay, which serves
previously recorded responses and refuses to go to the network.  All prompts
are byte-stable so cached runs reproduce exactly.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence

import requests

from .engine import (
    AnalysisResult,
    RankedPrediction,
    RuleCatalog,
    analyze_multigranularity,
    analyze_source,
)
from .errors import ConfigurationError, InputError, MethodError, ModelOutputError, ReplayMissError
from .facts import FrontendRegistry, PatternTable
from .knowledge import (
    ArticleInfo,
    KnowledgeBase,
    VIOLATION_EXAMPLE,
    article_catalog,
    article_lookup,
)
from .errors import UnknownArticleError


# ---------------------------------------------------------------------------
# Label sets


class LabelSet(frozenset):
    """Set of violated article numbers; empty means no violation."""

    def __new__(cls, articles: Sequence[int] = ()):
        items = []
        for a in articles:
            if not isinstance(a, int) or isinstance(a, bool) or a < 1:
                raise InputError(f"article labels must be positive integers, got {a!r}")
            items.append(a)
        return super().__new__(cls, items)

    def as_sorted(self) -> tuple[int, ...]:
        return tuple(sorted(self))


def format_labels(labels: LabelSet) -> str:
    """Inverse of strict parsing: '0' for none, else ascending comma list."""
    if not labels:
        return "0"
    return ",".join(str(a) for a in sorted(labels))


_STRICT_RE = re.compile(r"^\s*(\d+(?:\s*,\s*\d+)*)\s*$")
_INT_RE = re.compile(r"\d+")


def parse_model_output(text: str, *, strict: bool = True) -> tuple[int, ...]:
    """Extract an ordered tuple of distinct article numbers from model text.

    Strict mode requires the whole response to be a comma-separated number
    list (or exactly ``0`` for no violation) and rejects anything else.
    Lenient mode scavenges every integer in order of appearance and drops
    zeros.  First appearance wins for ranking purposes either way.
    """
    if strict:
        m = _STRICT_RE.match(text)
        if m is None:
            raise ModelOutputError(text)
        numbers = [int(p) for p in m.group(1).split(",")]
        if 0 in numbers:
            if numbers == [0]:
                return ()
            raise ModelOutputError(text, "zero mixed with article numbers")
    else:
        numbers = [int(p) for p in _INT_RE.findall(text) if int(p) != 0]
    out: list[int] = []
    for n in numbers:
        if n not in out:
            out.append(n)
    return tuple(out)


# ---------------------------------------------------------------------------
# Inference configuration


@dataclass(frozen=True)
class InferenceConfig:
    temperature: float = 0.0
    top_p: float = 1.0
    max_response_tokens: int = 512
    completions: int = 1
    parallelism: int = 1

    def __post_init__(self):
        if self.completions != 1:
            raise ConfigurationError("reproducible runs require exactly one completion")
        if self.temperature < 0:
            raise ConfigurationError("temperature must be >= 0")
        if not (0 < self.top_p <= 1):
            raise ConfigurationError("top_p must be in (0, 1]")
        if self.max_response_tokens <= 0:
            raise ConfigurationError("max_response_tokens must be positive")
        if self.parallelism < 1:
            raise ConfigurationError("parallelism must be >= 1")


# ---------------------------------------------------------------------------
# Reasoner bindings


class Reasoner(Protocol):
    reasoner_id: str

    def complete(self, prompt: str) -> str: ...


class ScriptedReasoner:
    """Deterministic test double: answers from a dict, list, or callable."""

    def __init__(self, script, reasoner_id: str = "scripted"):
        self.reasoner_id = reasoner_id
        self._script = script
        self.calls: list[str] = []

    def complete(self, prompt: str) -> str:
        self.calls.append(prompt)
        if callable(self._script):
            return self._script(prompt)
        if isinstance(self._script, Mapping):
            try:
                return self._script[prompt]
            except KeyError:
                raise MethodError("scripted reasoner has no response for this prompt") from None
        if isinstance(self._script, list):
            if not self._script:
                raise MethodError("scripted reasoner ran out of responses")
            return self._script.pop(0)
        return str(self._script)


class LiveHttpReasoner:
    """Completion-over-HTTP binding.

    Endpoint, credential, and model name come from arguments or the
    GDPRKIT_ENDPOINT / GDPRKIT_API_KEY / GDPRKIT_MODEL environment
    variables.  Transient transport failures retry with exponential backoff
    before surfacing as a MethodError.
    """

    MAX_ATTEMPTS = 3

    def __init__(
        self,
        endpoint: str | None = None,
        api_key: str | None = None,
        model: str | None = None,
        config: InferenceConfig | None = None,
        session=None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.endpoint = endpoint or os.environ.get("GDPRKIT_ENDPOINT")
        if not self.endpoint:
            raise ConfigurationError(
                "no endpoint configured; pass endpoint= or set GDPRKIT_ENDPOINT"
            )
        self.api_key = api_key or os.environ.get("GDPRKIT_API_KEY")
        self.model = model or os.environ.get("GDPRKIT_MODEL", "default")
        self.config = config or InferenceConfig()
        self.session = session or requests.Session()
        self.sleep = sleep
        self.reasoner_id = f"http:{self.model}"

    def complete(self, prompt: str) -> str:
        payload = {
            "model": self.model,
            "prompt": prompt,
            "temperature": self.config.temperature,
            "top_p": self.config.top_p,
            "max_tokens": self.config.max_response_tokens,
            "n": self.config.completions,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error: Exception | None = None
        for attempt in range(self.MAX_ATTEMPTS):
            try:
                resp = self.session.post(
                    self.endpoint, json=payload, headers=headers, timeout=60
                )
                resp.raise_for_status()
                return self._extract_text(resp.json())
            except (requests.RequestException, ValueError) as exc:
                last_error = exc
                if attempt < self.MAX_ATTEMPTS - 1:
                    self.sleep(2.0**attempt)
        raise MethodError(
            f"model endpoint failed after {self.MAX_ATTEMPTS} attempts: {last_error}"
        ) from last_error

    @staticmethod
    def _extract_text(body: dict) -> str:
        if isinstance(body.get("text"), str):
            return body["text"]
        choices = body.get("choices")
        if isinstance(choices, list) and choices:
            first = choices[0]
            if isinstance(first.get("text"), str):
                return first["text"]
            message = first.get("message")
            if isinstance(message, dict) and isinstance(message.get("content"), str):
                return message["content"]
        raise MethodError(f"unrecognized completion response shape: {sorted(body)}")


class ResponseCache:
    """One JSON file per (reasoner, prompt) pair, keyed by content hash."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    @staticmethod
    def cache_key(reasoner_id: str, prompt: str) -> str:
        digest = hashlib.sha256()
        digest.update(reasoner_id.encode("utf-8"))
        digest.update(b"\x00")
        digest.update(prompt.encode("utf-8"))
        return digest.hexdigest()

    def _path(self, key: str) -> Path:
        return self.root / f"{key}.json"

    def get(self, reasoner_id: str, prompt: str) -> str | None:
        path = self._path(self.cache_key(reasoner_id, prompt))
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))["response"]

    def put(self, reasoner_id: str, prompt: str, response: str) -> None:
        key = self.cache_key(reasoner_id, prompt)
        path = self._path(key)
        if path.exists() and json.loads(path.read_text(encoding="utf-8"))["response"] == response:
            return  # idempotent re-record
        self.root.mkdir(parents=True, exist_ok=True)
        payload = {
            "reasoner_id": reasoner_id,
            "prompt": prompt,
            "response": response,
            "created_at": datetime.now(timezone.utc).isoformat(),
        }
        path.write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")

    def contains(self, reasoner_id: str, prompt: str) -> bool:
        return self._path(self.cache_key(reasoner_id, prompt)).exists()


class CachingReasoner:
    """Wraps any reasoner with read-through response caching."""

    def __init__(self, wrapped: Reasoner, cache: ResponseCache):
        self.wrapped = wrapped
        self.cache = cache
        self.reasoner_id = wrapped.reasoner_id
        self.hits = 0
        self.misses = 0

    def complete(self, prompt: str) -> str:
        cached = self.cache.get(self.reasoner_id, prompt)
        if cached is not None:
            self.hits += 1
            return cached
        self.misses += 1
        response = self.wrapped.complete(prompt)
        self.cache.put(self.reasoner_id, prompt, response)
        return response


class CacheReplayReasoner:
    """Offline binding: every prompt must already be in the cache."""

    def __init__(self, cache: ResponseCache, reasoner_id: str):
        self.cache = cache
        self.reasoner_id = reasoner_id

    def complete(self, prompt: str) -> str:
        response = self.cache.get(self.reasoner_id, prompt)
        if response is None:
            raise ReplayMissError([self.cache.cache_key(self.reasoner_id, prompt)])
        return response


# ---------------------------------------------------------------------------
# Prompt templates

PROMPT_HEADER = (
    "You are a GDPR compliance expert. Your task is to determine which GDPR "
    "articles are violated by the following code snippet."
)
MEANINGS_HEADING = "GDPR Article Meanings:"
CONTEXT_HEADING = "Context:"
INSTRUCTIONS_HEADING = "Instructions:"
INSTRUCTION_LINES = (
    "- Carefully analyze the code snippet.",
    "- Only output the violated GDPR article numbers, separated by commas (e.g.,5,6,32).",
    "- If there is no violation, output exactly 0.",
)
CODE_HEADING = "Code snippet:"


def _meanings_block(catalog: Mapping[int, ArticleInfo]) -> str:
    return "\n".join(f"- Article {n}: {info.title}" for n, info in sorted(catalog.items()))


def render_zero_shot_prompt(
    snippet: str, catalog: Mapping[int, ArticleInfo] | None = None
) -> str:
    catalog = catalog or article_catalog()
    return (
        f"{PROMPT_HEADER}\n\n"
        f"{MEANINGS_HEADING}\n{_meanings_block(catalog)}\n\n"
        f"{INSTRUCTIONS_HEADING}\n" + "\n".join(INSTRUCTION_LINES) + "\n\n"
        f"{CODE_HEADING}\n{snippet}"
    )


def _context_block(retrieved: Sequence[tuple]) -> str:
    parts = []
    for i, (doc, _score) in enumerate(retrieved, start=1):
        if doc.kind == VIOLATION_EXAMPLE:
            labels = ",".join(str(a) for a in sorted(doc.labels)) or "none"
            parts.append(f"{i}. Example (articles {labels}):\n{doc.body.rstrip()}")
        else:
            parts.append(f"{i}. {doc.body.rstrip()}")
    return "\n".join(parts)


def render_rag_prompt(
    snippet: str,
    kb: KnowledgeBase,
    *,
    top_n: int = 3,
    catalog: Mapping[int, ArticleInfo] | None = None,
) -> str:
    """Zero-shot prompt plus a retrieved-context section.

    With nothing retrieved (empty knowledge base or top_n of 0) the output
    is byte-identical to the plain zero-shot prompt.
    """
    catalog = catalog or article_catalog()
    retrieved = kb.retrieve(snippet, top_n) if len(kb) else []
    if not retrieved:
        return render_zero_shot_prompt(snippet, catalog)
    return (
        f"{PROMPT_HEADER}\n\n"
        f"{MEANINGS_HEADING}\n{_meanings_block(catalog)}\n\n"
        f"{CONTEXT_HEADING}\n{_context_block(retrieved)}\n\n"
        f"{INSTRUCTIONS_HEADING}\n" + "\n".join(INSTRUCTION_LINES) + "\n\n"
        f"{CODE_HEADING}\n{snippet}"
    )


# ---------------------------------------------------------------------------
# One-shot predictions


@dataclass(frozen=True)
class ModelPrediction:
    labels: LabelSet
    ranking: RankedPrediction
    prompt: str
    response: str


def _predict_from_prompt(prompt: str, reasoner: Reasoner, *, strict: bool) -> ModelPrediction:
    response = reasoner.complete(prompt)
    ordered = parse_model_output(response, strict=strict)
    return ModelPrediction(
        labels=LabelSet(ordered),
        ranking=RankedPrediction(ordered),
        prompt=prompt,
        response=response,
    )


def zero_shot_predict(
    snippet: str,
    reasoner: Reasoner,
    *,
    catalog: Mapping[int, ArticleInfo] | None = None,
    strict: bool = True,
) -> ModelPrediction:
    return _predict_from_prompt(
        render_zero_shot_prompt(snippet, catalog), reasoner, strict=strict
    )


def rag_predict(
    snippet: str,
    reasoner: Reasoner,
    kb: KnowledgeBase,
    *,
    top_n: int = 3,
    catalog: Mapping[int, ArticleInfo] | None = None,
    strict: bool = True,
) -> ModelPrediction:
    return _predict_from_prompt(
        render_rag_prompt(snippet, kb, top_n=top_n, catalog=catalog), reasoner, strict=strict
    )


# ---------------------------------------------------------------------------
# Tool-using agent loop


@dataclass(frozen=True)
class AgentStep:
    thought: str
    action: str
    action_input: str
    observation: str


@dataclass(frozen=True)
class AgentTrace:
    steps: tuple[AgentStep, ...]
    truncated: bool


@dataclass(frozen=True)
class ReactResult:
    labels: LabelSet
    ranking: RankedPrediction
    trace: AgentTrace
    transcript: str


REACT_TOOLS = ("gdpr_lookup", "code_search", "rule_check", "finish")

_REACT_SCAFFOLD = """You are a GDPR compliance expert investigating a code snippet for GDPR violations.
You can use the following tools:
- gdpr_lookup: look up the meaning of a GDPR article by number.
- code_search: find lines in the snippet that contain a keyword.
- rule_check: run a static rule analysis over the snippet.
- finish: give the final answer.

Use this format:
Thought: what you are thinking
Action: one of gdpr_lookup, code_search, rule_check, finish
Action Input: the input to the action
Observation: the result of the action

When you know the answer, use Action: finish with the violated GDPR article
numbers separated by commas, or 0 if there is no violation.

Code snippet:
{snippet}

Thought:"""

_ACTION_RE = re.compile(r"^Action:\s*(?P<action>.+?)\s*$", re.MULTILINE)
_ACTION_INPUT_RE = re.compile(
    r"Action Input:\s*(?P<value>.*?)\s*(?:\nObservation:|\nThought:|\Z)", re.DOTALL
)


def _parse_react_step(text: str) -> tuple[str, str, str] | None:
    """Split one model turn into (thought, action, action input)."""
    m = _ACTION_RE.search(text)
    if m is None:
        return None
    thought = text[: m.start()].strip()
    if thought.startswith("Thought:"):
        thought = thought[len("Thought:"):].strip()
    action = m.group("action").strip()
    input_m = _ACTION_INPUT_RE.search(text, m.end())
    action_input = input_m.group("value").strip() if input_m else ""
    return thought, action, action_input


def _tool_gdpr_lookup(arg: str, context: "ReactContext") -> str:
    m = _INT_RE.search(arg)
    if m is None:
        return "error: expected an article number"
    number = int(m.group(0))
    try:
        info = article_lookup(number, context.catalog)
    except UnknownArticleError:
        return f"error: article {number} is not in the catalog"
    return f"Article {number}: {info.title}. {info.summary}"


def _tool_code_search(arg: str, context: "ReactContext") -> str:
    keyword = arg.strip()
    if not keyword:
        return "error: expected a keyword"
    hits = [
        f"line {i}: {line.strip()}"
        for i, line in enumerate(context.snippet.splitlines(), start=1)
        if keyword.lower() in line.lower()
    ]
    return "\n".join(hits[:20]) if hits else f"no lines match {keyword!r}"


def _tool_rule_check(arg: str, context: "ReactContext") -> str:
    result = analyze_source(
        context.snippet,
        context.language,
        registry=context.registry,
        table=context.table,
        catalog=context.rules,
    )
    if not result.findings:
        return "no rule findings"
    lines = [
        f"article {f.article} ({f.rule_id}, confidence {f.confidence:.2f}): {f.explanation}"
        for f in sorted(result.findings, key=lambda f: (-f.confidence, f.article, f.rule_id))
    ]
    return "\n".join(lines[:10])


_TOOL_IMPLS = {
    "gdpr_lookup": _tool_gdpr_lookup,
    "code_search": _tool_code_search,
    "rule_check": _tool_rule_check,
}


@dataclass
class ReactContext:
    snippet: str
    language: str = "java"
    catalog: Mapping[int, ArticleInfo] | None = None
    rules: RuleCatalog | None = None
    registry: FrontendRegistry | None = None
    table: PatternTable | None = None


def react_run(
    snippet: str,
    reasoner: Reasoner,
    *,
    language: str = "java",
    catalog: Mapping[int, ArticleInfo] | None = None,
    rules: RuleCatalog | None = None,
    max_iterations: int = 5,
) -> ReactResult:
    """Run the Thought/Action/Observation loop until finish or the cap.

    A turn with no parseable action is treated as an attempt to finish and
    read leniently.  Hitting the iteration cap marks the trace truncated and
    also falls back to a lenient read of the last turn.
    """
    if max_iterations < 1:
        raise ConfigurationError("max_iterations must be >= 1")
    context = ReactContext(snippet=snippet, language=language, catalog=catalog, rules=rules)
    transcript = _REACT_SCAFFOLD.format(snippet=snippet)
    steps: list[AgentStep] = []
    last_response = ""

    def result(ordered: tuple[int, ...], truncated: bool) -> ReactResult:
        return ReactResult(
            labels=LabelSet(ordered),
            ranking=RankedPrediction(ordered),
            trace=AgentTrace(tuple(steps), truncated),
            transcript=transcript,
        )

    for _ in range(max_iterations):
        try:
            last_response = reasoner.complete(transcript)
        except MethodError as exc:
            exc.trace = AgentTrace(tuple(steps), True)
            raise
        transcript += " " + last_response.strip() + "\n"
        parsed = _parse_react_step(last_response)
        if parsed is None:
            ordered = parse_model_output(last_response, strict=False)
            steps.append(AgentStep(last_response.strip(), "finish", "", ""))
            return result(ordered, truncated=False)
        thought, action, action_input = parsed
        if action == "finish":
            try:
                ordered = parse_model_output(action_input, strict=True)
            except ModelOutputError:
                ordered = parse_model_output(action_input, strict=False)
            steps.append(AgentStep(thought, action, action_input, ""))
            return result(ordered, truncated=False)
        tool = _TOOL_IMPLS.get(action)
        if tool is None:
            observation = f"unknown tool {action!r}; available: {', '.join(REACT_TOOLS)}"
        else:
            observation = tool(action_input, context)
        steps.append(AgentStep(thought, action, action_input, observation))
        transcript += f"Observation: {observation}\nThought:"

    ordered = parse_model_output(last_response, strict=False)
    return result(ordered, truncated=True)


# ---------------------------------------------------------------------------
# Method adapters


@dataclass(frozen=True)
class GranularRankings:
    """Per-granularity article rankings for one file."""

    file: RankedPrediction
    modules: dict[str, RankedPrediction]
    lines: dict[tuple[int, int], RankedPrediction]


def source_slice(source: str, start: int, end: int) -> str:
    lines = source.split("\n")
    if not (1 <= start <= end <= len(lines)):
        raise InputError(f"span {start}-{end} exceeds source length ({len(lines)} lines)")
    return "\n".join(lines[start - 1 : end])


class FormalMethod:
    """Rule-engine predictions; no model involved."""

    name = "formal"

    def __init__(
        self,
        rules: RuleCatalog | None = None,
        registry: FrontendRegistry | None = None,
        table: PatternTable | None = None,
        label_threshold: float = 1.0,
        max_labels: int = 3,
    ):
        self.rules = rules
        self.registry = registry
        self.table = table
        self.label_threshold = label_threshold
        self.max_labels = max_labels

    def _labels_from(self, result: AnalysisResult) -> LabelSet:
        picked = [
            article
            for article, score in zip(result.ranking.articles, result.ranking.scores)
            if score >= self.label_threshold
        ]
        return LabelSet(picked[: self.max_labels])

    def predict_labels(
        self, snippet: str, language: str = "java", path: str = ""
    ) -> tuple[LabelSet, RankedPrediction]:
        result = analyze_source(
            snippet, language, path=path, registry=self.registry, table=self.table,
            catalog=self.rules,
        )
        return self._labels_from(result), result.ranking

    def predict_file(
        self,
        source: str,
        language: str,
        *,
        module_map: Mapping[str, tuple[int, int]] | None = None,
        line_spans: Sequence[tuple[int, int]] | None = None,
        path: str = "",
    ) -> GranularRankings:
        result = analyze_multigranularity(
            source,
            language,
            path=path,
            module_map=module_map,
            line_spans=line_spans,
            registry=self.registry,
            table=self.table,
            catalog=self.rules,
        )
        return GranularRankings(
            file=result.file.ranking,
            modules={name: r.ranking for name, r in result.modules.items()},
            lines={span: r.ranking for span, r in result.lines.items()},
        )


class _PromptedMethod:
    """Shared scope-slicing logic for the model-backed methods."""

    name = "prompted"

    def __init__(self, reasoner: Reasoner, *, strict: bool = True):
        self.reasoner = reasoner
        self.strict = strict

    def _predict(self, snippet: str) -> ModelPrediction:
        raise NotImplementedError

    def predict_labels(
        self, snippet: str, language: str = "java", path: str = ""
    ) -> tuple[LabelSet, RankedPrediction]:
        prediction = self._predict(snippet)
        return prediction.labels, prediction.ranking

    def predict_file(
        self,
        source: str,
        language: str,
        *,
        module_map: Mapping[str, tuple[int, int]] | None = None,
        line_spans: Sequence[tuple[int, int]] | None = None,
        path: str = "",
    ) -> GranularRankings:
        file_ranking = self._predict(source).ranking
        modules = {
            name: self._predict(source_slice(source, start, end)).ranking
            for name, (start, end) in (module_map or {}).items()
        }
        lines = {
            (start, end): self._predict(source_slice(source, start, end)).ranking
            for start, end in (line_spans or ())
        }
        return GranularRankings(file=file_ranking, modules=modules, lines=lines)


class ZeroShotMethod(_PromptedMethod):
    name = "zero_shot"

    def __init__(
        self,
        reasoner: Reasoner,
        *,
        catalog: Mapping[int, ArticleInfo] | None = None,
        strict: bool = True,
    ):
        super().__init__(reasoner, strict=strict)
        self.catalog = catalog

    def _predict(self, snippet: str) -> ModelPrediction:
        return zero_shot_predict(
            snippet, self.reasoner, catalog=self.catalog, strict=self.strict
        )


class RagMethod(_PromptedMethod):
    name = "rag"

    def __init__(
        self,
        reasoner: Reasoner,
        kb: KnowledgeBase,
        *,
        top_n: int = 3,
        catalog: Mapping[int, ArticleInfo] | None = None,
        strict: bool = True,
    ):
        super().__init__(reasoner, strict=strict)
        self.kb = kb
        self.top_n = top_n
        self.catalog = catalog

    def _predict(self, snippet: str) -> ModelPrediction:
        return rag_predict(
            snippet,
            self.reasoner,
            self.kb,
            top_n=self.top_n,
            catalog=self.catalog,
            strict=self.strict,
        )


class ReactMethod(_PromptedMethod):
    name = "react"

    def __init__(
        self,
        reasoner: Reasoner,
        *,
        catalog: Mapping[int, ArticleInfo] | None = None,
        rules: RuleCatalog | None = None,
        max_iterations: int = 5,
        language: str = "java",
    ):
        super().__init__(reasoner, strict=False)
        self.catalog = catalog
        self.rules = rules
        self.max_iterations = max_iterations
        self.language = language

    def _predict(self, snippet: str) -> ModelPrediction:
        outcome = react_run(
            snippet,
            self.reasoner,
            language=self.language,
            catalog=self.catalog,
            rules=self.rules,
            max_iterations=self.max_iterations,
        )
        return ModelPrediction(
            labels=outcome.labels,
            ranking=outcome.ranking,
            prompt=outcome.transcript,
            response="",
        )
