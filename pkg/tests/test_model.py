import itertools
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from mislid.model import (FeatureMatrix, Instance, ModelSet, RunResult, SufficientStats, TopMQuery, check_weights,
                          dump_problem, is_alternative, is_correct, load_problem, pairs_for, sample_reward,
                          top_m_answer)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def test_feature_matrix_rank_and_norm():
    A = np.array([[3.0, 4.0], [1.0, 0.0], [0.0, 1.0]])
    F = FeatureMatrix(A)
    assert (F.K, F.d) == (3, 2)
    assert F.L == pytest.approx(5.0)
    with pytest.raises(ValueError):
        FeatureMatrix(np.array([[1.0, 2.0], [2.0, 4.0]]))
    with pytest.raises(ValueError):
        FeatureMatrix(np.ones((1, 2)))


def test_model_set_membership():
    F = FeatureMatrix(np.array([[1.0], [1.0]]))
    M = ModelSet(F, epsilon=0.5)
    assert M.contains([1.0, 2.0])
    assert not M.contains([1.0, 2.5])
    with pytest.raises(ValueError):
        ModelSet(F, epsilon=-1)
    strict = ModelSet(F, epsilon=0.5, mean_bound=1.0, enforce_mean_bound=True)
    assert not strict.contains([1.0, 2.0])


def test_instance_witness():
    A = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    theta, eta = np.array([0.5, -0.2]), np.array([0.0, 0.1, -0.1])
    inst = Instance(A @ theta + eta, theta, eta)
    inst.check_witness(ModelSet(FeatureMatrix(A), 0.1))
    with pytest.raises(ValueError):
        inst.check_witness(ModelSet(FeatureMatrix(A), 0.05))
    with pytest.raises(ValueError):
        Instance([1.0, 2.0], witness_theta=[1.0])


def test_query_validation():
    with pytest.raises(ValueError):
        TopMQuery(0, 0.1)
    with pytest.raises(ValueError):
        TopMQuery(1, 1.0)
    with pytest.raises(ValueError):
        TopMQuery(3, 0.1).validate(3)


def test_top_m_examples():
    assert top_m_answer([3, 1, 2], 2) == {0, 2}
    assert top_m_answer([1, 1, 1], 2) == {0, 1}


@given(arrays(float, st.integers(2, 7), elements=st.integers(-3, 3).map(float)), st.data())
def test_top_m_matches_enumeration(nu, data):
    m = data.draw(st.integers(1, len(nu) - 1))
    ans = top_m_answer(nu, m)
    assert ans in oracles.top_m_sets(nu, m)
    assert top_m_answer(nu + 7.5, m) == ans


def test_is_alternative_examples():
    assert is_alternative([3, 2, 1], [1, 2, 3], 1)
    assert not is_alternative([3, 2, 1], [5, 0, 0], 1)
    with pytest.raises(ValueError):
        is_alternative([1, 1, 0], [0, 0, 0], 1)


def test_is_alternative_grid_k3():
    grid = np.linspace(-1, 1, 5)
    for m in (1, 2):
        for mu in itertools.product(grid, repeat=3):
            if len(oracles.top_m_sets(mu, m)) != 1:
                continue
            assert not is_alternative(mu, mu, m)
            for lam in itertools.product(grid, repeat=3):
                assert is_alternative(mu, lam, m) == oracles.alternative_by_sets(mu, lam, m)


def test_sample_reward_statistics():
    inst = Instance([0.0, 1.0])
    a = sample_reward(inst, 0, np.random.default_rng(5))
    b = sample_reward(inst, 0, np.random.default_rng(5))
    assert a == b
    rng = np.random.default_rng(11)
    draws = np.array([sample_reward(inst, 1, rng) for _ in range(100_000)])
    assert abs(draws.mean() - 1.0) < 0.02
    assert abs(draws.var(ddof=1) - 1.0) < 0.03


def test_sufficient_stats_bookkeeping():
    A = np.array([[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]])
    s = SufficientStats.from_counts(FeatureMatrix(A), [2.0, 0.0, 1.0])
    s.add(1, 0.5)
    s.check()
    assert s.t == pytest.approx(4.0)
    assert np.allclose(s.design, sum(n * np.outer(a, a) for n, a in zip(s.counts, A)))
    means = s.empirical_means()
    assert means[1] == pytest.approx(0.5)


@given(arrays(float, st.integers(2, 6), elements=st.floats(0, 1)))
def test_check_weights(w):
    if w.sum() == 0:
        return
    w = w / w.sum()
    assert np.allclose(check_weights(w), w)


def test_check_weights_rejects():
    with pytest.raises(ValueError):
        check_weights([0.5, 0.6])
    with pytest.raises(ValueError):
        check_weights([1.5, -0.5])


def test_is_correct_with_ties():
    assert is_correct([0, 2], [1.0, 0.0, 1.0], 2)
    assert is_correct([0, 1], [1.0, 1.0, 1.0], 2)
    assert not is_correct([1], [1.0, 0.0], 1)


def test_problem_round_trip(tmp_path):
    A = np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]])
    theta, eta = np.array([1.0, -1.0]), np.array([0.0, 0.0, 0.2])
    inst = Instance(A @ theta + eta, theta, eta)
    model = ModelSet(FeatureMatrix(A), 0.2, mean_bound=3.0)
    path = tmp_path / "p.json"
    dump_problem(path, inst, model)
    raw = json.loads(path.read_text())
    assert set(raw) == {"K", "d", "features", "epsilon", "mean_bound", "mu", "theta", "eta"}
    inst2, model2 = load_problem(path)
    assert np.array_equal(inst2.mu, inst.mu)
    assert np.array_equal(model2.A, model.A)
    assert model2.epsilon == 0.2


def test_run_result_round_trip():
    r = RunResult("mislid", 10, [0, 2], True, {"generator": "g", "base": 1, "rep": 0, "alg": 0},
                  timings={"init": 0.1}, extra={"x": 1})
    assert RunResult.from_dict(json.loads(json.dumps(r.to_dict()))) == r


def test_pairs_for_lexicographic():
    assert pairs_for([1, 3], 4) == [(0, 1), (0, 3), (2, 1), (2, 3)]
