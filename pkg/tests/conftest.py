"""Shared fixtures and the acceptance-criterion summary lines."""

from __future__ import annotations

import math

import pytest

from curvemin.forcing import TrigMode, TrigPoly, build_field
from curvemin.grid import unit_torus
from curvemin.stencil import make_stencil

TRIG_AMPLITUDE = 0.75

_criterion_results: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, passed: bool, detail: str = "") -> None:
    _criterion_results[number] = (bool(passed), detail)


@pytest.fixture(scope="session")
def criterion():
    """Record one acceptance criterion verdict and assert it."""

    def check(number: int, passed: bool, detail: str = "") -> None:
        record_criterion(number, passed, detail)
        assert passed, f"criterion {number}: {detail}"

    return check


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _criterion_results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criterion_results):
        passed, detail = _criterion_results[number]
        verdict = "PASS" if passed else "FAIL"
        suffix = f"  ({detail})" if detail else ""
        terminalreporter.write_line(f"CRITERION {number:2d} {verdict}{suffix}")


def trig_forcing_spec(amplitude: float = TRIG_AMPLITUDE) -> TrigPoly:
    """The standard periodic medium: a product of transverse cosine waves.

    A sin(2 pi (x - y) + pi/2) / 2 - A sin(2 pi (x + y) + pi/2) / 2
    equals A sin(2 pi x) sin(2 pi y), zero-mean with sup norm A.
    """
    return TrigPoly(
        modes=(
            TrigMode(k=(1, -1), amplitude=amplitude / 2, phase=math.pi / 2),
            TrigMode(k=(1, 1), amplitude=-amplitude / 2, phase=math.pi / 2),
        )
    )


@pytest.fixture(scope="session")
def d2_16():
    return make_stencil("d2_16")


@pytest.fixture(scope="session")
def d2_4():
    return make_stencil("d2_4")


@pytest.fixture(scope="session")
def trig64(d2_16):
    """The trig medium sampled on a 64-cell period, the homogenization fixture."""
    return build_field(trig_forcing_spec(), unit_torus(64))
