import numpy as np
import pytest

from peginhole.contact_sim import HoleSpec, SimConfig, Simulator
from peginhole.controller import Controller


def quiet_config(**kw) -> SimConfig:
    """Noise-free sensor with no bias; force quantisation left at its default."""
    base = dict(sigma_force_n=0.0, sigma_moment_nm=0.0, sigma_pos_mm=0.0, pos_bias_mm=0.0)
    base.update(kw)
    return SimConfig(**base)


@pytest.fixture
def quiet_cfg():
    return quiet_config()


@pytest.fixture
def quiet_controller():
    return Controller(Simulator(quiet_config(), HoleSpec()))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record one pass/fail line for an acceptance criterion, then assert it."""
    def record(number: int, title: str, ok: bool, detail: str) -> None:
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
