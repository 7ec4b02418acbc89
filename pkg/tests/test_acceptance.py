"""The twelve acceptance criteria at their stated tolerances, one summary line each."""

import pytest

from hslab.acceptance import CRITERIA, run_criterion


@pytest.mark.slow
@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_acceptance_criterion(number, capsys):
    result = run_criterion(number)
    with capsys.disabled():
        print()
        print(result.summary_line())
        for check in result.checks:
            if not check.passed:
                print(f"    {check.name}: value={check.value!r} target={check.target!r} tol={check.tol!r} {check.note}")
    assert result.passed, result.summary_line()
