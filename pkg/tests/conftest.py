import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20241019)


@pytest.fixture(scope="session")
def sb_cavity():
    from memcav.config import build_cavity, load_preset

    return build_cavity(load_preset("SB"))


@pytest.fixture(scope="session")
def sa_cavity():
    from memcav.config import build_cavity, load_preset

    return build_cavity(load_preset("SA"))


@pytest.fixture(scope="session")
def sb_map(sb_cavity):
    from memcav.cavity import dispersion_map

    return dispersion_map(sb_cavity, np.arange(0, 1501, 15.0), np.arange(880, 1040.01, 0.2), threads=4)


@pytest.fixture(scope="session")
def sa_map(sa_cavity):
    from memcav.cavity import dispersion_map

    return dispersion_map(sa_cavity, np.arange(0, 1501, 15.0), np.arange(880, 1040.01, 0.2), threads=4)


ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion, then assert it."""

    def record(number: int, title: str, ok: bool, detail: str) -> None:
        line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
        ACCEPTANCE[number] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
