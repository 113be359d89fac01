import pytest
from hypothesis import given, strategies as st

from oracles import recurrence_points
from vitsplit.splitting import SplitPolicy, candidate_split_points


@pytest.mark.parametrize("n, k, expected", [
    (12, 3, (0, 1, 2, 3, 5, 7, 9, 12, 13)),
    (24, 5, (0, 1, 2, 3, 4, 5, 7, 9, 11, 13, 15, 18, 21, 24, 25)),
    (4, 4, (0, 1, 2, 3, 4, 5)),
])
def test_goldens(n, k, expected):
    assert candidate_split_points(n, k) == expected


@given(st.integers(1, 200), st.integers(1, 50))
def test_structure(n, k):
    c = candidate_split_points(n, k)
    assert c[0] == 0 and c[-1] == n + 1
    assert all(a < b for a, b in zip(c, c[1:]))
    assert all(1 <= s <= n for s in c[1:-1])
    assert len(c) <= n + 2
    assert list(c) == recurrence_points(n, k)
    gaps = [b - a for a, b in zip(c[1:-1], c[2:-1])]
    assert gaps == sorted(gaps)  # fine near the input, coarse near the head


@given(st.integers(1, 60), st.integers(0, 60))
def test_large_k_keeps_every_layer(n, extra):
    assert candidate_split_points(n, n + extra) == tuple(range(n + 2))


def test_smaller_k_gives_fewer_points():
    # the growth term ceil(i/k) is larger for small k, so the set thins out
    sizes = [len(candidate_split_points(24, k)) for k in range(1, 10)]
    assert sizes == sorted(sizes)


def test_invalid_arguments():
    with pytest.raises(ValueError):
        candidate_split_points(0, 3)
    with pytest.raises(ValueError):
        candidate_split_points(12, 0)
    with pytest.raises(ValueError):
        SplitPolicy(0)
