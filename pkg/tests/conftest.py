import math

import pytest

from chiral_interconnect.lindblad import TimeGrid
from chiral_interconnect.network import DeviceParams
from chiral_interconnect.protocol import ProtocolConfig, photon_gamma
from chiral_interconnect.pulses import IdealPulses

# the ideal sech photon needs ~400 ns to be emitted and absorbed without truncation
LONG_GRID = TimeGrid(0.0, 400.0, 0.05, 10)
LONG_PULSES = IdealPulses(photon_gamma, center=200.0)


def lossless_config(**kw) -> ProtocolConfig:
    base = dict(device=DeviceParams(), pulses=LONG_PULSES, grid=LONG_GRID)
    base.update(kw)
    return ProtocolConfig(**base)


@pytest.fixture(scope="session")
def budget_device():
    return DeviceParams.measured()


@pytest.fixture(scope="session")
def lossless_transfer():
    from chiral_interconnect.protocol import run
    return run(lossless_config())


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line per acceptance criterion."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(tag: str, ok: bool, detail: str, elapsed: float, budget: float) -> bool:
        ok = bool(ok) and elapsed <= budget
        line = f"ACCEPTANCE {tag:<3} {'PASS' if ok else 'FAIL'}  {detail}  [{elapsed:.1f} s of {budget:.0f} s]"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: (int("".join(c for c in s.split()[1] if c.isdigit())), s)):
            terminalreporter.write_line(line)
