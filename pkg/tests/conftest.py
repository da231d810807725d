import numpy as np
import pytest

from boxgeom.synth import random_affine_cuboid

# criterion number -> (title, status, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[str, str, str]] = {}
CRITERIA = {
    1: "geometry suite",
    2: "unpack suite",
    3: "rast suite",
    4: "angle codec",
    5: "construct_box round trip",
    6: "estimate_box end to end",
    7: "evaluation suite",
    8: "augmentation determinism",
    9: "camera-disjoint splits",
    10: "reference dataset counts",
    11: "non-reproducibility statement",
}


@pytest.fixture
def acceptance():
    def record(number: int, passed, detail: str = "") -> None:
        status = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
        ACCEPTANCE[number] = (CRITERIA[number], status, detail)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, title in CRITERIA.items():
        name, status, detail = ACCEPTANCE.get(n, (title, "NOT RUN", ""))
        terminalreporter.write_line(f"[{status}] {n:2d}. {name}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def cuboid(rng):
    return random_affine_cuboid(rng)
