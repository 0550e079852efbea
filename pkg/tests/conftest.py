import numpy as np
import pytest

from apfbm.streams import make_rng


@pytest.fixture
def rng():
    return make_rng(20241016, "tests")


def se_of_mean(sample):
    sample = np.asarray(sample, dtype=float)
    return sample.std(ddof=1) / np.sqrt(sample.size)


_VERDICTS = "apfbm_acceptance_verdicts"


@pytest.fixture
def verdict(request):
    """Record one acceptance line; the test still asserts on ``ok`` itself."""
    lines = request.config.__dict__.setdefault(_VERDICTS, [])

    def record(number, title, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {title} ({detail})"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.__dict__.get(_VERDICTS)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
