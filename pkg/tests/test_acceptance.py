"""The fourteen acceptance criteria, each at its stated tolerance.

Every criterion prints one line of the form ``[PASS] n title: detail (t s)``
and the test fails when the criterion does. Run just this file with
``pytest -s tests/test_acceptance.py`` or, equivalently, ``neurocomp --check``.
"""

import pytest

from neurocomp import harness


@pytest.mark.parametrize("number", sorted(harness.CRITERIA))
def test_criterion(number, capsys):
    outcome = harness.run_criterion(number, seed=0)
    with capsys.disabled():
        print("\n" + outcome.line())
    assert outcome.passed, outcome.line()
