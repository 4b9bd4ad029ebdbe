import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

import oracles
from mislid.bench import gen_experiment_a
from mislid.geometry import closest_alternative
from mislid.mislid import (AlgorithmState, MisLid, MisLidConfig, StoppingConfig, bonuses, gain_vector,
                           init_sequence, run, step, stopping_statistic, stopping_threshold)
from mislid.model import FeatureMatrix, Instance, ModelSet, SufficientStats, TopMQuery, top_m_answer
from mislid.numeric import barycentric_spanner, min_eigenvalue

HEUR = MisLidConfig(stopping=StoppingConfig("heuristic"))


# --------------------------------------------------------------------------
# initial design
# --------------------------------------------------------------------------


def test_init_identity_pulls_each_arm_twice():
    seq = init_sequence(FeatureMatrix(np.eye(4)))
    assert sorted(seq.tolist()) == [0, 0, 1, 1, 2, 2, 3, 3]


@settings(max_examples=30)
@given(st.integers(0, 2**31 - 1))
def test_init_prefix_is_minimal(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 4))
    K = int(rng.integers(d, 8))
    F = FeatureMatrix(rng.standard_normal((K, d)))
    seq = init_sequence(F)
    target = 2 * F.L**2

    def design(idx):
        return F.rows[idx].T @ F.rows[idx]

    assert min_eigenvalue(design(seq)) >= target * (1 - 1e-12)
    if len(seq) > 1:
        assert min_eigenvalue(design(seq[:-1])) < target
    spanner = barycentric_spanner(F)
    sig = min_eigenvalue(design(np.array(spanner)))
    assert len(seq) <= d * int(np.ceil(target / sig))


# --------------------------------------------------------------------------
# thresholds, bonuses and gains
# --------------------------------------------------------------------------


def _model(K=10, d=5, eps=1.0, seed=0):
    A = np.random.default_rng(seed).standard_normal((K, d))
    return ModelSet(FeatureMatrix(A), eps, mean_bound=3.0)


def test_heuristic_threshold():
    model = _model()
    assert stopping_threshold(1, TopMQuery(3, 0.05), model, "heuristic") == pytest.approx(np.log((1 + np.log(2)) / 0.05))
    with pytest.raises(ValueError):
        stopping_threshold(0, TopMQuery(3, 0.05), model)


@pytest.mark.parametrize("t", [1, 2, 100, 10_000, 10**7])
@pytest.mark.parametrize("eps", [0.0, 0.01, 1.0])
def test_theoretical_threshold_matches_high_precision(t, eps):
    model = _model(eps=eps)
    ours = stopping_threshold(t, TopMQuery(3, 0.05), model)
    ref = min(oracles.beta_uns(t, 0.05, 10), oracles.beta_lin(t, 0.05, 5, eps))
    assert ours == pytest.approx(ref, rel=1e-10)


def test_zero_budget_threshold_has_no_inflation():
    q = TopMQuery(3, 0.05)
    for t in (10, 1000, 10**6):
        lin0 = oracles.beta_lin(t, 0.05, 5, 0.0)
        assert stopping_threshold(t, q, _model(eps=0.0)) <= lin0 * (1 + 1e-12)
        assert stopping_threshold(t, q, _model(eps=0.0)) <= stopping_threshold(t, q, _model(eps=0.5))


@settings(max_examples=40)
@given(st.integers(0, 2**31 - 1))
def test_bonuses_match_formula(seed):
    rng = np.random.default_rng(seed)
    K = int(rng.integers(2, 9))
    d = int(rng.integers(1, K + 1))
    A = rng.standard_normal((K, d))
    model = ModelSet(FeatureMatrix(A), float(rng.choice([0.0, rng.uniform(0, 1)])), mean_bound=float(rng.uniform(1, 5)))
    N = rng.integers(0, 200, K).astype(float)
    N[:d] += 1 + rng.integers(0, 3)
    if np.linalg.eigvalsh(A.T @ (N[:, None] * A))[0] < 1e-3:
        return
    stats = SufficientStats.from_counts(model.features, N)
    ours = bonuses(stats, model)
    Vinv = np.linalg.inv(stats.design)
    for k in range(K):
        ref = oracles.bonus(A[k], Vinv, N[k], N.sum(), model.epsilon, model.features.L, K, d, model.mean_bound)
        assert ours[k] == pytest.approx(ref, rel=1e-10)


def test_bonus_caps():
    A = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    huge = ModelSet(FeatureMatrix(A), 1e3, mean_bound=2.0)
    stats = SufficientStats.from_counts(huge.features, [5.0, 5.0, 0.0])
    assert bonuses(stats, huge)[2] == pytest.approx(16.0)
    flat = ModelSet(FeatureMatrix(A), 0.0, mean_bound=1e6)
    stats = SufficientStats.from_counts(flat.features, [5.0, 5.0, 3.0])
    c = bonuses(stats, flat)
    t = stats.t
    alpha = np.log(5) + 4 * np.log(t) + 2 * np.log(1 + t**2 / 4)
    q = np.einsum("ka,ab,kb->k", A, np.linalg.inv(stats.design), A)
    assert np.all(c <= 4 * alpha * q * (1 + 1e-12))


def test_gain_examples():
    mu = np.array([1.0, 0.5, -0.2])
    zero = np.zeros(3)
    for mode in ("optimistic", "aggressive", "empirical"):
        assert np.array_equal(gain_vector(mu, mu, zero, mode), zero)
    lam = np.array([0.7, 0.7, -0.2])
    modes = [gain_vector(mu, lam, zero, m) for m in ("optimistic", "aggressive", "empirical")]
    assert np.allclose(modes[0], modes[1]) and np.allclose(modes[1], modes[2])
    with pytest.raises(ValueError):
        gain_vector(mu, lam, zero, "lazy")


@given(st.integers(0, 2**31 - 1))
def test_optimistic_gains_dominate_empirical(seed):
    rng = np.random.default_rng(seed)
    mu, lam = rng.standard_normal(5), rng.standard_normal(5)
    c = rng.exponential(size=5)
    assert np.all(gain_vector(mu, lam, c, "optimistic") >= gain_vector(mu, lam, c, "empirical") - 1e-12)
    assert np.all(gain_vector(mu, lam, c, "aggressive") >= gain_vector(mu, lam, c, "empirical") - 1e-12)


@settings(max_examples=40)
@given(st.integers(0, 2**31 - 1))
def test_optimism_with_exact_bonuses(seed):
    rng = np.random.default_rng(seed)
    K, d, m = 5, 2, 2
    A = rng.standard_normal((K, d))
    model = ModelSet(FeatureMatrix(A), 0.2)
    mu = A @ rng.standard_normal(d) + rng.uniform(-0.2, 0.2, K)
    mu_tilde = mu + 0.1 * rng.standard_normal(K)
    answer = top_m_answer(mu, m)
    if top_m_answer(mu_tilde, m) != answer or np.ptp(mu) == 0:
        return
    c = (mu_tilde - mu) ** 2
    truth_alt = closest_alternative
    for _ in range(5):
        w = rng.dirichlet(np.ones(K))
        lam = closest_alternative(mu_tilde, w, sorted(answer), model).lam
        truth = truth_alt(mu, w, sorted(answer), model).value
        assert w @ gain_vector(mu_tilde, lam, c, "optimistic") >= truth - 1e-9
        assert 2 * w @ gain_vector(mu_tilde, lam, c, "aggressive") >= truth - 1e-9


def test_tied_estimate_never_stops():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((4, 2))
    theta = rng.standard_normal(2)
    mu_t = A @ theta
    order = np.argsort(-mu_t)
    # tie the 2nd and 3rd means with a deviation that stays inside the budget
    a, b = order[1], order[2]
    eps = 0.5 * (mu_t[a] - mu_t[b]) + 1e-9
    mu_t[a] = mu_t[b] = 0.5 * (mu_t[a] + mu_t[b])
    val, _, _ = stopping_statistic(A, np.full(4, 50.0), mu_t, theta, eps, 2, -1.0)
    assert val == pytest.approx(0.0, abs=1e-10)


# --------------------------------------------------------------------------
# the sampling loop
# --------------------------------------------------------------------------


def _small():
    A = np.array([[1.0, 0.0], [0.0, 1.0], [0.7, 0.7], [0.2, -0.5]])
    mu = A @ np.array([1.0, 0.3])
    model = ModelSet(FeatureMatrix(A), 0.1, mean_bound=2.0)
    return Instance(mu), TopMQuery(1, 0.05), model


def test_single_step_bookkeeping():
    env, q, model = _small()
    state = AlgorithmState(env, q, model, HEUR, seed=3)
    state.advance(len(state.init_seq))
    assert state.phase == "running"
    N0, V0 = state.N.copy(), state.V.copy()
    step(state)
    diff = state.N - N0
    assert diff.sum() == 1 and diff.max() == 1
    k = int(np.argmax(diff))
    assert np.allclose(state.V - V0, np.outer(model.A[k], model.A[k]))
    assert state.t == len(state.init_seq) + 1


def test_ftl_corner_is_pulled():
    env, q, model = _small()
    state = AlgorithmState(env, q, model, MisLidConfig(learner="ftl", stopping=StoppingConfig("heuristic")), seed=4)
    state.advance(len(state.init_seq))
    for _ in range(30):
        if state.phase != "running":
            break
        lead = int(np.argmax(state.learner_gains))
        before = state.N.copy()
        step(state)
        if state.phase == "running":
            assert state.N[lead] == before[lead] + 1


def test_huge_margin_stops_right_after_initialization():
    A = np.eye(3)
    res = run(Instance([100.0, 0.0, -100.0]), TopMQuery(1, 0.05), ModelSet(FeatureMatrix(A), 0.0), HEUR, seed=1)
    assert res.tau == len(init_sequence(FeatureMatrix(A)))
    assert res.answer == [0] and res.correct and res.extra["stopping_checks"] == 1


def test_easy_instance_and_determinism():
    env, q, model = _small()
    a = run(env, q, model, HEUR, seed=11)
    b = run(env, q, model, HEUR, seed=11)
    assert not a.incomplete and a.correct
    strip = lambda r: {k: v for k, v in r.to_dict().items() if k not in ("wall_time", "timings")}
    assert strip(a) == strip(b)
    assert a.tau != run(env, q, model, HEUR, seed=12).tau or a.answer == [0]


@pytest.mark.parametrize("gain_mode", ["optimistic", "aggressive", "empirical"])
@pytest.mark.parametrize("learner", ["adahedge", "ftl"])
def test_all_variants_finish(gain_mode, learner):
    env, q, model = _small()
    res = run(env, q, model, MisLidConfig(gain_mode, learner, StoppingConfig("heuristic")), seed=5)
    assert not res.incomplete and res.correct


def test_safety_cap_flags_the_run():
    env, q, model = _small()
    res = run(env, q, model, MisLidConfig(safety_cap=20), seed=5)
    assert res.incomplete and res.tau == 20 and len(res.answer) == 1


def test_restricted_arms_never_change_the_stop_decision():
    inst, model, q = gen_experiment_a(23, 0.0)
    cfg = MisLidConfig(restricted_arms=True, stopping=StoppingConfig("heuristic"))
    state = AlgorithmState(inst, q, model, cfg, seed=7)
    state.advance(len(state.init_seq))
    while state.phase == "running":
        exact = state.stopping_value()
        two_beta = 2 * stopping_threshold(state.t, q, model, "heuristic")
        step(state)
        assert (state.phase == "stopped") == (exact > two_beta)
        if state.phase == "stopped":
            assert state.trace[0] == pytest.approx(exact, rel=1e-9)


def test_geometric_grid_replay():
    inst, model, q = gen_experiment_a(23, 0.0)
    every = run(inst, q, model, HEUR, seed=8)
    gamma = 1.2
    cfg = MisLidConfig(stopping=StoppingConfig("heuristic", gamma))
    state = AlgorithmState(inst, q, model, cfg, seed=8)
    state.advance(len(state.init_seq))
    nxt, first_exceed = state.t, None
    while state.phase == "running":
        n = state.t
        exceeded = state.stopping_value() > 2 * stopping_threshold(n, q, model, "heuristic")
        if exceeded and first_exceed is None:
            first_exceed = n
        step(state)
        if n == nxt:
            assert (state.phase == "stopped") == exceeded
            nxt = max(n + 1, int(np.ceil(gamma * n)))
        else:
            assert state.phase == "running"
    # the sampling path does not depend on when the rule is checked
    assert first_exceed == every.tau
    grid = [len(state.init_seq)]
    while grid[-1] < every.tau:
        grid.append(max(grid[-1] + 1, int(np.ceil(gamma * grid[-1]))))
    assert every.tau <= state.t <= gamma * grid[-1]


def test_mean_bound_mode_is_rejected():
    env, q, _ = _small()
    model = ModelSet(FeatureMatrix(np.eye(4)), 0.1, mean_bound=2.0, enforce_mean_bound=True)
    with pytest.raises(NotImplementedError):
        run(env, q, model)


def test_config_round_trip():
    cfg = MisLidConfig("aggressive", "ftl", StoppingConfig("heuristic", 1.2), True, 1000)
    assert MisLidConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        MisLidConfig.from_dict({"algorithm": "lucb"})
    with pytest.raises(ValueError):
        StoppingConfig("heuristic", 1.5)


def test_estimator_interface():
    env, q, model = _small()
    est = MisLid(m=1, epsilon=0.1, mean_bound=2.0, stopping="heuristic", random_state=11)
    assert clone(est).get_params() == est.get_params()
    est.fit(model.A, env.mu)
    assert est.predict().tolist() == run(env, q, model, HEUR, seed=11).answer
    assert est.tau_ == est.result_.tau and est.n_features_in_ == 2
