"""End-to-end acceptance criteria 1-12.

Each test prints one ``[PASS]``/``[FAIL]`` line with the measured values;
``ibcg check`` runs the same checks from the command line.
"""
import pytest

from ibcg.acceptance import CRITERIA, run_criterion


@pytest.mark.slow
@pytest.mark.parametrize("number", [c[0] for c in CRITERIA], ids=lambda n: f"criterion{n}")
def test_criterion(number, capsys):
    result = run_criterion(number)
    with capsys.disabled():
        print("\n" + result.line())
    assert result.passed, result.line()
