import shutil

import pytest

from uavforensics import synthetic

EPOCH = "2024-06-01T00:00:00Z"


@pytest.fixture(scope="session")
def built_case(tmp_path_factory):
    return synthetic.write_case(tmp_path_factory.mktemp("pristine") / "case")


@pytest.fixture
def case_dir(built_case, tmp_path):
    """A fresh, writable copy of the constructed case."""
    return shutil.copytree(built_case, tmp_path / "case")


@pytest.fixture
def run_cli(capsys, monkeypatch):
    from uavforensics.cli import main

    monkeypatch.setenv("UAVFORENSICS_TEST_EPOCH", EPOCH)

    def run(*argv):
        try:
            code = main([str(a) for a in argv])
        except SystemExit as exc:
            code = exc.code
        out, err = capsys.readouterr()
        return code, out, err

    return run


# -- acceptance summary: one PASS/FAIL line per criterion ----------------------

_criteria = {}


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    if report.when == "call" or report.failed:
        n, title = props["criterion"]
        if report.failed or n not in _criteria:
            _criteria[n] = ("PASS" if report.passed else "FAIL", title)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        verdict, title = _criteria[n]
        terminalreporter.write_line(f"criterion {n:2d}: {verdict}  {title}")
