"""Acceptance gate: one PASS/FAIL line per criterion.

The lines appear in the pytest terminal summary (see conftest.py) and when
this file is run directly with ``python tests/test_acceptance.py``.
"""

import sys

import pytest

from gdtm.acceptance import CRITERIA, run_criterion

LIMITS = {1: 5.0, 2: 5.0}
RESULTS = []


@pytest.mark.parametrize("number", [k for k, _, _ in CRITERIA])
def test_criterion(number):
    res = run_criterion(number)
    RESULTS.append(res)
    print(res.line())
    assert res.passed, res.detail
    if number in LIMITS:
        assert res.seconds < LIMITS[number], f"took {res.seconds:.2f}s"


def test_verify_command_passes(capsys):
    from gdtm.cli import main
    assert main(["verify"]) == 0
    out = capsys.readouterr().out
    assert out.count("[PASS]") == len(CRITERIA)


if __name__ == "__main__":
    results = [run_criterion(k) for k, _, _ in CRITERIA]
    for r in results:
        print(r.line())
    sys.exit(0 if all(r.passed for r in results) else 1)
