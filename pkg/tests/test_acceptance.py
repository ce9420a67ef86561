"""Acceptance criteria at full size; each prints one PASS/FAIL line."""
import pytest

from qbl import verify


@pytest.mark.slow
@pytest.mark.parametrize("name", sorted(verify.ACCEPTANCE))
def test_acceptance(name, capsys):
    check = verify.timed(verify.ACCEPTANCE[name], "full")
    with capsys.disabled():
        print(f"\n{check.line()}  [{check.seconds:.1f}s]")
    assert check.passed, check.line()
    if check.budget is not None:
        assert check.seconds <= check.budget, f"{name} took {check.seconds:.1f}s (budget {check.budget}s)"
