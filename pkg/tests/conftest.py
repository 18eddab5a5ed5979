import pytest
from hypothesis import settings

from mecmobility.offloading import OffloadModel
from mecmobility.scenario import ScenarioConfig

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def cfg():
    return ScenarioConfig()


@pytest.fixture(scope="session")
def model(cfg):
    return OffloadModel.from_config(cfg)


def short(cfg=None, frames=40, **changes):
    """Default scenario cut to a few frames, for fast engine tests."""
    cfg = cfg or ScenarioConfig()
    return cfg.replace(**{"schedule.horizon": frames, **changes})


def pytest_terminal_summary(terminalreporter):
    from .verdicts import RESULTS, summary_lines

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in summary_lines():
        terminalreporter.write_line(line)
