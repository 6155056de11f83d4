"""Validate a full published corpus JSON against its documented statistics.

Checks record counts, dataset sizes, per-article and per-extension
distributions, and character-length summaries.  Prints one line per check
and exits nonzero if any disagree.  Useful after downloading the dataset
to confirm the copy is intact before benchmarking against it.
"""

import argparse
import sys

from gdprkit.corpus import compute_stats, load_corpus
from gdprkit.taskgen import build_task1, build_task2

EXPECTED_EXTENSIONS = {
    ".js": 528, ".json": 474, ".java": 298, ".kt": 244, ".cs": 174,
    ".php": 126, ".xml": 63, ".html": 26, ".py": 17, ".h": 1,
}
EXPECTED_ARTICLES = {6: 442, 5: 430, 25: 311, 32: 254}
# (min, max, mean, median, stddev); floats compared to within 0.01
EXPECTED_SNIPPET = (12, 1717, 171.01, 95.0, 206.58)
EXPECTED_NOTE = (60, 684, 224.38, 208.0, 90.00)


def check(label: str, got, want, failures: list[str], *, tol: float = 0.0) -> None:
    ok = abs(got - want) <= tol if tol else got == want
    print(f"{'ok  ' if ok else 'FAIL'} {label}: got {got}, want {want}")
    if not ok:
        failures.append(label)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("corpus", help="path to the published corpus JSON")
    args = parser.parse_args(argv)

    corpus = load_corpus(args.corpus)
    stats = compute_stats(corpus)
    failures: list[str] = []

    check("total records", len(corpus), 1951, failures)
    check("localization dataset files", len(build_task1(corpus)), 368, failures)
    check("classification dataset snippets", len(build_task2(corpus)), 887, failures)
    check("multi-line records", stats.multi_line_count, 994, failures)
    check("single-line records", stats.single_line_count, 957, failures)
    for article, want in sorted(EXPECTED_ARTICLES.items()):
        check(f"article {article} records", stats.per_article_counts.get(article, 0), want, failures)
    for ext, want in EXPECTED_EXTENSIONS.items():
        check(f"{ext} records", stats.per_extension_counts.get(ext, 0), want, failures)
    for label, lengths, expected in (
        ("snippet", stats.snippet_length_stats, EXPECTED_SNIPPET),
        ("note", stats.note_length_stats, EXPECTED_NOTE),
    ):
        check(f"{label} min", lengths.min, expected[0], failures)
        check(f"{label} max", lengths.max, expected[1], failures)
        check(f"{label} mean", lengths.mean, expected[2], failures, tol=0.01)
        check(f"{label} median", lengths.median, expected[3], failures, tol=0.01)
        check(f"{label} stddev", lengths.stddev, expected[4], failures, tol=0.01)

    if failures:
        print(f"\n{len(failures)} check(s) failed")
        return 1
    print("\nall checks passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
