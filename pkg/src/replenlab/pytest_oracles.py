"""
pytest plugin: compare main-path values with oracle values.

The ``oracle_check`` fixture records an OracleReport for every comparison
(to ``--oracle-report`` as JSON lines when given) and fails the test on
disagreement.
"""
import pytest

from replenlab.oracles import ReportRecorder, compare

PLUGIN_NAME = "replenlab-oracle-recorder"


def pytest_addoption(parser):
    group = parser.getgroup("replenlab", "replenlab oracles")
    group.addoption(
        "--oracle-report",
        action="store",
        dest="oracle_report",
        metavar="path",
        default=None,
        help="append oracle comparison reports to a JSON-lines file",
    )


def pytest_configure(config):
    if not config.pluginmanager.has_plugin(PLUGIN_NAME):
        recorder = ReportRecorder(config.getoption("oracle_report"))
        config.pluginmanager.register(recorder, PLUGIN_NAME)


def get_recorder(config):
    return config.pluginmanager.getplugin(PLUGIN_NAME)


@pytest.fixture
def oracle_check(request):
    """Return ``check(main, oracle, abs_tol=0, rel_tol=0, case_id=None)``."""
    recorder = get_recorder(request.config)

    def check(main_value, oracle_value, abs_tol=0.0, rel_tol=0.0, case_id=None):
        report = compare(
            case_id or request.node.nodeid, main_value, oracle_value, abs_tol, rel_tol
        )
        recorder.record(report)
        if not report.passed:
            pytest.fail(
                "oracle disagreement in {}: main={!r} oracle={!r} "
                "(abs {:.3g}, rel {:.3g})".format(
                    report.case_id,
                    report.main_value,
                    report.oracle_value,
                    report.abs_deviation,
                    report.rel_deviation,
                ),
                pytrace=False,
            )
        return report

    return check


@pytest.hookimpl(trylast=True)
def pytest_terminal_summary(terminalreporter):
    recorder = get_recorder(terminalreporter.config)
    if recorder is None or not recorder.reports:
        return
    terminalreporter.write_sep(
        "-",
        "oracle checks: {}, disagreements: {}".format(
            len(recorder.reports), len(recorder.failures)
        ),
    )
