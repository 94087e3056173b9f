import itertools

from hypothesis import given, settings
from hypothesis import strategies as st

from swapforge.sat import Solver, all_models

N = 5
literals = st.integers(1, N).flatmap(lambda v: st.sampled_from([v, -v]))
cnfs = st.lists(st.lists(literals, min_size=1, max_size=3), max_size=12)


def brute_force(clauses, project):
    out = set()
    for bits in itertools.product((False, True), repeat=N):
        if all(any(bits[abs(l) - 1] == (l > 0) for l in c) for c in clauses):
            out.add(tuple(bits[v - 1] for v in project))
    return out


@settings(max_examples=300, deadline=None)
@given(cnfs, st.integers(0, N))
def test_projected_models_match_brute_force(clauses, k):
    project = list(range(1, k + 1))
    got = list(all_models(N, clauses, project))
    assert len(got) == len(set(got)), "each projected model is reported once"
    assert set(got) == brute_force(clauses, project)


@settings(max_examples=200, deadline=None)
@given(cnfs)
def test_solve_agrees_with_brute_force(clauses):
    model = Solver(N, clauses).solve()
    if model is None:
        assert not brute_force(clauses, [])
    else:
        assert all(any(model[abs(l)] == (l > 0) for l in c) for c in clauses)


def test_models_come_false_first():
    got = list(all_models(2, [], [1, 2]))
    assert got == [(False, False), (False, True), (True, False), (True, True)]


def test_empty_clause_is_unsat():
    assert Solver(1, [[]]).solve() is None
    assert list(all_models(1, [[]], [1])) == []
