"""Shared fixtures: the hand-built corpus and a pair of camera records."""

import json
from pathlib import Path

import pytest

from gdprkit.corpus import ViolationRecord, load_corpus

DATA_DIR = Path(__file__).parent / "data"
GOLDEN_DIR = DATA_DIR / "golden"

CAMERA_SNIPPET = "            manager.openCamera(camerId, stateCallback, null);\n"
CAMERA_PATH = "app/src/main/java/me/hawkshaw/test/MainActivity2.java: line 202"


@pytest.fixture(scope="session")
def fixture_corpus_path() -> Path:
    return DATA_DIR / "fixture_corpus.json"


@pytest.fixture(scope="session")
def fixture_corpus(fixture_corpus_path) -> list[ViolationRecord]:
    return load_corpus(fixture_corpus_path)


@pytest.fixture(scope="session")
def raw_fixture_objects(fixture_corpus_path) -> list[dict]:
    return json.loads(fixture_corpus_path.read_text(encoding="utf-8"))


@pytest.fixture
def camera_record_pair(fixture_corpus) -> list[ViolationRecord]:
    """The two records annotating the same openCamera line with articles 6 and 32."""
    pair = [r for r in fixture_corpus if r.code_snippet_path == CAMERA_PATH]
    assert len(pair) == 2
    return pair
