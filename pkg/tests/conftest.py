import sys
from pathlib import Path

import pytest

TESTS_DIR = Path(__file__).resolve().parent
sys.path.insert(0, str(TESTS_DIR))

FIXTURE_DIR = TESTS_DIR / "fixtures" / "episode1"
GOLDEN_DIR = TESTS_DIR / "golden"

from castlines.io import load_bundles, load_config, load_stub  # noqa: E402
from castlines.oracle import ScriptedStubOracle  # noqa: E402


@pytest.fixture(scope="session")
def fixture_dir() -> Path:
    return FIXTURE_DIR


@pytest.fixture(scope="session")
def golden_dir() -> Path:
    return GOLDEN_DIR


@pytest.fixture(scope="session")
def fixture_config():
    return load_config(FIXTURE_DIR / "config.json")


@pytest.fixture()
def fixture_bundle():
    (bundle,) = load_bundles(
        segments_path=FIXTURE_DIR / "segments.jsonl",
        embeddings_path=FIXTURE_DIR / "embeddings.jsonl",
        cast_path=FIXTURE_DIR / "cast.json",
        visual_path=FIXTURE_DIR / "visual.jsonl",
        overlap_path=FIXTURE_DIR / "overlap.jsonl",
        reference_path=FIXTURE_DIR / "reference.jsonl",
    )
    return bundle


@pytest.fixture()
def fixture_oracle():
    return ScriptedStubOracle(load_stub(FIXTURE_DIR / "stub.jsonl"))


# ---------------------------------------------------------------------------
# Acceptance reporting: one pass/fail line per criterion at session end.
# ---------------------------------------------------------------------------

_acceptance_results: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call":
        _acceptance_results[name] = "PASS" if report.passed else "FAIL"
    elif report.when == "setup" and report.failed:
        _acceptance_results[name] = "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in sorted(_acceptance_results.items()):
        terminalreporter.write_line(f"[{outcome}] {name}")
