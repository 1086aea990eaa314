import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def dense8():
    from sbmpost import EdgeProbs, Labelling, ModelFamily, build_prior
    fam = ModelFamily(8, [(8,), (4, 4)])
    return fam, build_prior("flat-uniform", fam), EdgeProbs.dense(0.9, 0.1), Labelling.blocks((4, 4))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)
