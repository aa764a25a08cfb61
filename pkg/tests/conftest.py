import pytest

SMALL_TOML = """\
seeds = [0]
methods = ["TCA"]

[dgp]
n = 1500
n_test = 300
"""


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.toml"
    path.write_text(SMALL_TOML)
    return path


@pytest.fixture(autouse=True)
def _online_by_default(monkeypatch):
    # the CLI's --offline flag sets an environment variable; undo it after each test
    from textcate.remote import OFFLINE_ENV
    monkeypatch.delenv(OFFLINE_ENV, raising=False)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import ACCEPTANCE_LINES
    except ImportError:
        return
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
