import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from adobi.core import SamplingMask, SensitivityMaps
from adobi.rng import complex_normal, stream

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def random_image(rng, h, w):
    return complex_normal(rng, (h, w))


def random_maps(rng, n_coils, h, w, normalized=True):
    m = SensitivityMaps(complex_normal(rng, (n_coils, h, w)))
    return m.normalize() if normalized else m


def random_mask(rng, h, w, acs=0):
    kept = rng.random(w) < 0.5
    if acs:
        start = w // 2 - acs // 2
        kept[start:start + acs] = True
    kept[rng.integers(w)] = True
    return SamplingMask(h, w, kept, acs)


@pytest.fixture
def rng():
    return stream(1234, "tests")


# One summary line per acceptance criterion, shown after the test run.
CRITERIA_LINES: list[str] = []


def report_criterion(label, ok: bool, detail: str) -> bool:
    line = f"criterion {label}: {'PASS' if ok else 'FAIL'}  {detail}"
    CRITERIA_LINES.append(line)
    print(line)
    return ok


def report_info(label, detail: str) -> None:
    line = f"criterion {label} (info): {detail}"
    CRITERIA_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA_LINES:
            terminalreporter.write_line(line)
