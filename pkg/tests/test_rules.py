import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cyclicdp import InfeasibleRuleError, generic_rule, max_delay_rule, min_delay_rule
from cyclicdp.rules import fresh_read_possible


def test_max_delay_is_all_stale():
    rule = max_delay_rule(5)
    assert rule.stale_read_count() == 25
    assert all(
        rule.version_read(i, j, 7) == 6 for i in range(1, 6) for j in range(1, 6)
    )


@pytest.mark.parametrize("n", range(1, 17))
def test_min_delay_closed_form(n):
    rule = min_delay_rule(n)
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            assert rule.reads_fresh(i, j) == (j >= n - i + 1)
    assert rule.stale_read_count() == n * (n - 1) // 2


def test_min_delay_strictly_fewer_stale_than_max():
    for n in range(2, 17):
        assert min_delay_rule(n).stale_read_count() < max_delay_rule(n).stale_read_count()


def test_generic_rule_feasibility_error_names_coordinates():
    bad = [[False, False], [False, False]]
    bad[0][0] = True  # i=1, j=1: needs i+j >= 3
    with pytest.raises(InfeasibleRuleError) as err:
        generic_rule(bad)
    assert err.value.micro_batch == 1
    assert err.value.stage == 1


def test_generic_rule_square_required():
    with pytest.raises(ValueError):
        generic_rule([[False, False], [False]])


@settings(max_examples=80, deadline=None)
@given(
    n=st.integers(1, 8),
    data=st.data(),
)
def test_generic_rule_accepts_iff_feasible(n, data):
    table = [
        [data.draw(st.booleans()) for _ in range(n)] for _ in range(n)
    ]
    feasible = all(
        not table[i - 1][j - 1] or fresh_read_possible(i, j, n)
        for i in range(1, n + 1)
        for j in range(1, n + 1)
    )
    if feasible:
        rule = generic_rule(table)
        assert rule.n == n
    else:
        with pytest.raises(InfeasibleRuleError):
            generic_rule(table)
