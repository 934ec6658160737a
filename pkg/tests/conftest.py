import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from edgefuse.anc import SMALL as ANC_SMALL
from edgefuse.anc import AncModel
from edgefuse.core.rng import Rng
from edgefuse.sttf import SMALL as STTF_SMALL
from edgefuse.sttf import SttfModel

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return Rng(1234)


@pytest.fixture(scope="session")
def sttf_model():
    return SttfModel(STTF_SMALL, Rng(0))


@pytest.fixture(scope="session")
def anc_model():
    return AncModel(ANC_SMALL)


def random_frame(rng, h=64, w=64):
    return rng.uniform((3, h, w)).astype(np.float32)


def event_box(h, w, y0, y1, x0, x1, count=2.0):
    e = np.zeros((2, h, w), np.float32)
    e[1, y0:y1, x0:x1] = count
    return e


ACCEPTANCE_LINES: list[str] = []


def acceptance_line(n: int, title: str, passed: bool, measured: str, tolerance: str) -> bool:
    line = f"{'PASS' if passed else 'FAIL'}  criterion {n:>2} {title}: {measured} (tolerance: {tolerance})"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
