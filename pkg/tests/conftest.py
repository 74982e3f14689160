import numpy as np
import pytest

from molsync.channel import ChannelParams, build_transparent_cir
from molsync.receiver import ReceiverModel, SchemeParams
from molsync.timeline import TimelineConfig

DT = 50e-6


@pytest.fixture(scope="session")
def unit_cir():
    return build_transparent_cir(ChannelParams(release_count=1.0), DT)


@pytest.fixture(scope="session")
def timeline_config():
    return TimelineConfig()


def make_receiver(unit_cir, snr_linear=2.0, noise=5.0, scheme="ML", config=None, **kw):
    n = snr_linear * noise / unit_cir.peak_value
    cir = unit_cir.scaled(n)
    return ReceiverModel.build(cir, cir, noise, noise, config or TimelineConfig(), SchemeParams(scheme, **kw))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report_line():
    def record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
