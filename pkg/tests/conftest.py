import os
import sys

import pytest
from hypothesis import HealthCheck, settings

from evomir.bench import load_kernel

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=300,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("EVOMIR_HYPOTHESIS", "default"))

IDENTITY = """
global @G[i32 x 64]
kernel fn @k() {
entry:
  %t = tid.block
  st.global @G, %t, %t
  ret
}
"""


@pytest.fixture(scope="session")
def sw_naive():
    return load_kernel("sw_naive")


@pytest.fixture(scope="session")
def sw_tuned():
    return load_kernel("sw_tuned")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
