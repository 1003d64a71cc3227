import pytest

TINY_INI = """\
[experiment]
preset = rocket-no-obstacle
planning_steps = 400
imitation_steps = 400
seeds = 0
gate_distance = 100.0

[ppo]
steps_per_update = 50
minibatch_size = 64
epochs_per_update = 2
hidden_sizes = 16, 16

[search]
trials = 2
steps_per_trial = 200
"""


@pytest.fixture
def tiny_config(tmp_path):
    """A rocket config small enough to run the whole pipeline in about a second.
    The gate is wide open so the untrained plan is still imitated."""
    path = tmp_path / "tiny.ini"
    path.write_text(TINY_INI)
    return path


_CRITERIA: dict[str, str] = {}


@pytest.fixture
def report_criterion():
    """Record (and print) one PASS/FAIL line per acceptance criterion."""
    def record(cid: str, passed: bool, detail: str) -> bool:
        line = f"{cid} {'PASS' if passed else 'FAIL'}: {detail}"
        _CRITERIA[cid] = line
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_CRITERIA, key=lambda c: int(c[1:])):
        terminalreporter.write_line(_CRITERIA[cid])
