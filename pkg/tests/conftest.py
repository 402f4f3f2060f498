from __future__ import annotations

import math

import numpy as np
import pytest

from antipode.reduced import HALF_PI, ReducedPoint


def random_points(rng: np.random.Generator, count: int) -> list[ReducedPoint]:
    return [ReducedPoint(rng.uniform(0, HALF_PI), rng.uniform(0, math.pi), rng.uniform(0, math.pi))
            for _ in range(count)]


def random_pairs(seed: int, count: int) -> list[tuple[ReducedPoint, ReducedPoint]]:
    rng = np.random.default_rng(seed)
    pts = random_points(rng, 2 * count)
    return list(zip(pts[::2], pts[1::2]))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
