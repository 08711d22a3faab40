import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from motionloop.annotate import AnnotationConfig, build_vocabulary


@pytest.fixture(scope="session")
def ann_cfg():
    return AnnotationConfig()


@pytest.fixture(scope="session")
def vocab(ann_cfg):
    return build_vocabulary(ann_cfg, mode="combined")


@pytest.fixture(scope="session")
def flat_vocab(ann_cfg):
    return build_vocabulary(ann_cfg, mode="flat")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    lines = []
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py" in nodeid:
                name = nodeid.split("::")[-1]
                lines.append((name, status.upper()))
    if not lines:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name, status in sorted(lines):
        terminalreporter.write_line(f"{status:>6}  {name}")
