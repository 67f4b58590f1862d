import re
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def phantom42():
    from cytoseg.phantom import PhantomSpec, generate_phantom

    return generate_phantom(PhantomSpec(seed=42))


@pytest.fixture(scope="session")
def pipeline42(phantom42):
    from cytoseg.pipeline import run_pipeline

    return run_pipeline(phantom42[0])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE = {}


@pytest.fixture
def record():
    """Log one acceptance line and fail the test when the criterion fails."""

    def _record(number, title, ok, detail=""):
        status = "PASS" if ok else "FAIL"
        line = f"criterion {number:>2} {status}  {title}: {detail}"
        ACCEPTANCE[number] = line
        print(line)
        assert ok, line

    return _record


def pytest_runtest_logreport(report):
    m = re.match(r"test_c(\d+)_", report.head_line or "")
    if m and report.skipped and int(m.group(1)) not in ACCEPTANCE:
        reason = report.longrepr[2] if isinstance(report.longrepr, tuple) else ""
        ACCEPTANCE[int(m.group(1))] = f"criterion {int(m.group(1)):>2} SKIP  {reason.removeprefix('Skipped: ')}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number])
