from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import pytest

from imattract.analysis import run_analysis
from imattract.config import load_config

FIXTURES = Path(__file__).resolve().parents[1] / "src" / "imattract" / "fixtures"

CRITERIA = {
    1: "golden classifications",
    2: "printed inner-product formulas",
    3: "invariance residuals and the non-invariant gate",
    4: "oracle agreement and the y=0 decay orbit",
    5: "property suites at 100 trials",
    6: "byte-identical reports modulo timings",
}

_outcomes: dict[int, list[bool]] = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n): test belongs to acceptance criterion n")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if call.when == "call" or (call.when == "setup" and call.excinfo is not None):
        _outcomes[marker.args[0]].append(call.excinfo is None)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n, label in CRITERIA.items():
        results = _outcomes.get(n)
        if not results:
            status = "NOT RUN"
        else:
            status = "PASS" if all(results) else "FAIL"
        count = f"({sum(results)}/{len(results)} checks)" if results else ""
        terminalreporter.write_line(f"criterion {n}: {status} {label} {count}".rstrip())


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


_cache: dict[str, object] = {}


@pytest.fixture(scope="session")
def analyzed():
    """Full analysis of a shipped fixture, computed once per session."""

    def get(name: str):
        if name not in _cache:
            _cache[name] = run_analysis(load_config(FIXTURES / f"{name}.json"))
        return _cache[name]

    return get
