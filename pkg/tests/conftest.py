import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    from egoindex.synth import default_scenario, synth_generate

    root = tmp_path_factory.mktemp("small_ds")
    return synth_generate(default_scenario(scale=0.4), root, seed=11)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
