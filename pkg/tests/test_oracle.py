import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tame_ldjt import fixtures
from tame_ldjt.oracle import (
    GroundFactor,
    OracleBudgetExceeded,
    compare_marginals,
    exact_marginal,
    ground,
    query_pdm,
    randvars,
)
from tame_ldjt.pmodel import (
    PRV,
    Constraint,
    Evidence,
    GroundAtom,
    Model,
    ModelError,
    Parfactor,
    Query,
    unroll,
)

A = GroundAtom("A", ())
B = GroundAtom("B", ())
C = GroundAtom("C", ())
BOOL = (True, False)


def single(pots):
    p = Parfactor([PRV("A")], pots, Constraint.top([], []))
    return ground(Model((), (p,)))


@pytest.mark.parametrize("pots, want", [((4, 2), 0.667), ((8.1, 3.9), 0.675)])
def test_single_randvar_worked_examples(pots, want):
    dist = exact_marginal(single(pots), A)
    assert dist[0] == pytest.approx(want, abs=1e-3)
    assert dist.sum() == pytest.approx(1.0, abs=1e-12)


def test_uniform():
    np.testing.assert_allclose(exact_marginal(single((1, 1)), A), [0.5, 0.5])


def test_compare_marginals():
    assert compare_marginals([0.5, 0.5], [0.5, 0.5]) == 0
    assert compare_marginals([0.667, 0.333], [0.675, 0.325]) == pytest.approx(0.008)
    with pytest.raises(ModelError):
        compare_marginals([1.0], [0.5, 0.5])


def test_ground_counts():
    pdm = fixtures.gex_pdm(persons=3, journals=2)
    by_name = {}
    for p in pdm.initial.parfactors:
        by_name[p.name] = len(ground(Model(pdm.initial.logvars, (p,))))
    assert by_name == {"g0": 6, "g1": 3}
    assert len(ground(pdm.initial)) == sum(p.gr for p in pdm.initial.parfactors)


def test_ground_of_ground_model_is_identity():
    m = Model((), (Parfactor([PRV("A"), PRV("B")], [1, 2, 3, 4], Constraint.top([], [])),))
    g = ground(m)
    assert len(g) == 1 and g[0].args == (A, B)
    np.testing.assert_array_equal(g[0].table, [[1, 2], [3, 4]])


def test_ground_unroll_count():
    pdm = fixtures.gex_pdm(persons=2)
    m = unroll(pdm, 2)
    assert len(ground(m)) == sum(p.gr for p in m.parfactors)


def test_errors():
    with pytest.raises(ModelError, match="not in model"):
        exact_marginal(single((1, 1)), B)
    f = GroundFactor((A,), (BOOL,), np.array([1.0, 0.0]))
    with pytest.raises(ModelError, match="contradictory"):
        exact_marginal([f, GroundFactor((B,), (BOOL,), np.ones(2))], B, {A: False})
    many = [GroundFactor((GroundAtom("V", (str(i),)),), (BOOL,), np.ones(2)) for i in range(30)]
    with pytest.raises(OracleBudgetExceeded):
        exact_marginal(many, many[0].args[0])


def test_observed_target_is_delta():
    f = GroundFactor((A, B), (BOOL, BOOL), np.array([[1.0, 2.0], [3.0, 4.0]]))
    np.testing.assert_array_equal(exact_marginal([f], A, {A: False}), [0.0, 1.0])


def chain_factors(rng):
    ab = GroundFactor((A, B), (BOOL, BOOL), rng.uniform(0.1, 5, (2, 2)))
    bc = GroundFactor((B, C), (BOOL, BOOL), rng.uniform(0.1, 5, (2, 2)))
    ca = GroundFactor((C, A), (BOOL, BOOL), rng.uniform(0.1, 5, (2, 2)))
    return [ab, bc, ca]


def brute(factors, target):
    rv = list(randvars(factors))
    dist = np.zeros(2)
    for vals in itertools.product(range(2), repeat=len(rv)):
        assign = dict(zip(rv, vals))
        w = 1.0
        for f in factors:
            w *= f.table[tuple(assign[a] for a in f.args)]
        dist[assign[target]] += w
    return dist / dist.sum()


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=50)
def test_ve_and_enumeration_match_brute_force(seed):
    fs = chain_factors(np.random.default_rng(seed))
    want = brute(fs, A)
    np.testing.assert_allclose(exact_marginal(fs, A, method="ve"), want, atol=1e-12)
    np.testing.assert_allclose(exact_marginal(fs, A, method="enumerate"), want, atol=1e-12)


@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3), st.integers(0, 2))
@settings(max_examples=50)
def test_scaling_a_factor_leaves_marginal(seed, c, k):
    fs = chain_factors(np.random.default_rng(seed))
    scaled = list(fs)
    scaled[k] = GroundFactor(fs[k].args, fs[k].ranges, fs[k].table * c)
    np.testing.assert_allclose(exact_marginal(scaled, A), exact_marginal(fs, A), atol=1e-12)


@given(st.permutations([B, C]))
def test_elimination_order_independence(order):
    fs = chain_factors(np.random.default_rng(7))
    np.testing.assert_allclose(exact_marginal(fs, A, method="ve", order=order),
                               exact_marginal(fs, A, method="ve", order=[C, B]), atol=1e-12)


def test_query_pdm_prediction_without_evidence_is_symmetric():
    pdm = fixtures.gex_pdm(persons=2)
    ev = Evidence({})
    q1 = query_pdm(pdm, ev, Query(GroundAtom("A", ("x1",)), 2, 0), max_randvars=40, method="ve")
    q2 = query_pdm(pdm, ev, Query(GroundAtom("A", ("x2",)), 2, 0), max_randvars=40, method="ve")
    np.testing.assert_allclose(q1, q2, atol=1e-12)
