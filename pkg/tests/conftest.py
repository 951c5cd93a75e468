from __future__ import annotations

import pytest

from ddlab.polycore import BlockGrading, parse_poly

CONIC = "x0*x2 - x1^2"
CUBIC = "x0^3 + x1^3 + x2^3 - 2*x0*x1*x2"


@pytest.fixture(autouse=True)
def single_job(monkeypatch):
    monkeypatch.setenv("DDLAB_JOBS", "1")


@pytest.fixture(scope="session")
def plane():
    return BlockGrading.single(3)


@pytest.fixture(scope="session")
def conic(plane):
    return parse_poly(CONIC, plane)


@pytest.fixture(scope="session")
def cubic(plane):
    return parse_poly(CUBIC, plane)
