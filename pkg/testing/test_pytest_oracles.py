import json


def test_agreement_is_recorded(pytester):
    pytester.makepyfile(
        """
        def test_close(oracle_check):
            report = oracle_check(1.0, 1.05, abs_tol=0.1, case_id="close")
            assert report.passed

        def test_exact(oracle_check):
            oracle_check([1, 2], [1, 2])
        """
    )
    report = pytester.path.joinpath("oracles.jsonl")
    result = pytester.runpytest("-p", "replenlab.pytest_oracles", "--oracle-report", str(report))
    result.assert_outcomes(passed=2)
    result.stdout.fnmatch_lines(["*oracle checks: 2, disagreements: 0*"])
    lines = [json.loads(line) for line in report.read_text().splitlines()]
    assert lines[0]["case_id"] == "close"
    assert lines[1]["case_id"].endswith("::test_exact")
    assert {d["verdict"] for d in lines} == {"pass"}


def test_disagreement_fails(pytester):
    pytester.makepyfile(
        """
        def test_off(oracle_check):
            oracle_check(3, 4, case_id="off-by-one")
        """
    )
    result = pytester.runpytest("-p", "replenlab.pytest_oracles")
    result.assert_outcomes(failed=1)
    result.stdout.fnmatch_lines(
        [
            "*oracle disagreement in off-by-one: main=3* oracle=4*",
            "*oracle checks: 1, disagreements: 1*",
        ]
    )


def test_no_summary_without_checks(pytester):
    pytester.makepyfile("def test_plain(): pass")
    result = pytester.runpytest("-p", "replenlab.pytest_oracles")
    result.assert_outcomes(passed=1)
    result.stdout.no_fnmatch_line("*oracle checks*")
