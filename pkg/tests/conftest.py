import os
import sys

from hypothesis import settings

from chaossim.config import ExperimentConfig
from chaossim.runner import build_run, execute
from chaossim.trace import parse_trace

settings.register_profile("default", deadline=None, max_examples=25)
settings.register_profile("thorough", deadline=None, max_examples=200)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def simulate(protocol="pbft", max_time=300.0, seed=0, patch=None, **kw):
    """Build and execute one traced run; returns the live Run object.

    ``patch(run)`` is called between wiring and execution.
    """
    cfg = ExperimentConfig(protocol=protocol, max_time=max_time, seed=seed, **kw)
    run = build_run(cfg, record_trace=True)
    if patch is not None:
        patch(run)
    execute(run)
    return run


def events_of(run):
    return parse_trace(run.trace.render())[1]


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
