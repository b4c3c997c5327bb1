import pytest


@pytest.fixture
def tmp_config(tmp_path):
    def write(text, name="cfg.yaml"):
        path = tmp_path / name
        path.write_text(text)
        return path

    return write


# criterion number -> (passed, description), filled by test_acceptance
ACCEPTANCE_RESULTS: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        passed, text = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {text}")
