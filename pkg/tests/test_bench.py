import json

import numpy as np
import pytest

from mislid.bench import (ExperimentSpec, emit_report, gen_experiment_a, gen_experiment_b, gen_experiment_c,
                          instance_gap, load_results, run_monte_carlo, summarize, to_csv)
from mislid.cli import main
from mislid.model import RunResult, load_problem
from mislid.streams import seed_record


def test_experiment_a_linear_case():
    inst, model, q = gen_experiment_a(23, 0.0)
    assert (model.K, model.d, q.m) == (10, 5, 3)
    assert np.array_equal(inst.witness_eta, np.zeros(10))
    inst.check_witness(model)
    assert np.max(np.abs(model.A)) == pytest.approx(1.0)


def test_experiment_a_deviation_flips_the_answer():
    lin, _, q = gen_experiment_a(23, 0.0)
    mis, model, _ = gen_experiment_a(23, 5.0)
    assert instance_gap(lin.mu, 3) > 0.05
    fourth = int(np.argsort(-lin.mu)[3])
    assert fourth in mis.top_m(3) and lin.top_m(3) != mis.top_m(3)
    assert model.epsilon == 5.0
    mis.check_witness(model)


def test_generators_are_deterministic():
    a, _, _ = gen_experiment_a(7, 1.0)
    b, _, _ = gen_experiment_a(7, 1.0)
    assert a.mu.tobytes() == b.mu.tobytes()
    c, _, _ = gen_experiment_a(7, 1.0, normalization="row")
    assert np.allclose(np.max(np.abs(load_rows(7)), axis=1), 1.0)
    assert c.K == 10


def load_rows(seed):
    _, model, _ = gen_experiment_a(seed, 0.0, normalization="row")
    return model.A


@pytest.mark.parametrize("eps_user", [0.5, 1.0, 2.0])
def test_experiment_b(eps_user):
    inst, model, q = gen_experiment_b(3, eps_user, epsilon_star=1.0)
    assert (model.K, model.d, q.m) == (15, 8, 3)
    assert np.max(np.abs(inst.witness_eta)) == pytest.approx(1.0, abs=1e-12)
    assert model.epsilon == eps_user
    if eps_user >= 1.0:
        assert model.contains(inst.mu)
    if eps_user == 2.0:
        assert np.max(np.abs(inst.witness_eta)) < model.epsilon


def test_experiment_c_is_small():
    inst, model, q = gen_experiment_c(1)
    inst.check_witness(model)


def _spec(reps=3, algorithms=None):
    return ExperimentSpec(
        generator={"name": "exp_a", "seed": 23, "epsilon": 0.0},
        algorithms=algorithms or [{"algorithm": "mislid", "stopping": {"mode": "heuristic"}}],
        repetitions=reps, seed=5)


def test_monte_carlo_counts_and_determinism():
    spec = _spec(algorithms=[{"algorithm": "mislid", "stopping": {"mode": "heuristic"}, "label": "ml"},
                             {"algorithm": "lucb", "label": "lucb"}])
    first = run_monte_carlo(spec)
    assert len(first) == 6
    assert [r.algorithm for r in first] == ["ml"] * 3 + ["lucb"] * 3
    second = run_monte_carlo(spec)
    assert [(r.algorithm, r.tau, r.answer) for r in first] == [(r.algorithm, r.tau, r.answer) for r in second]
    seeds = {(r.seed["base"], r.seed["rep"], r.seed["alg"]) for r in first}
    assert len(seeds) == 6


def test_parallel_matches_serial(monkeypatch):
    spec = _spec(reps=2)
    serial = run_monte_carlo(spec, jobs=1)
    monkeypatch.setenv("MISLID_JOBS", "2")
    parallel = run_monte_carlo(spec)
    assert [r.tau for r in serial] == [r.tau for r in parallel]


def test_spec_validation():
    with pytest.raises(ValueError):
        _spec(reps=0)
    with pytest.raises(ValueError):
        ExperimentSpec.from_dict({"generator": {"name": "exp_a"}, "algorithms": [{}], "colour": 1})
    with pytest.raises(ValueError):
        _spec(algorithms=[{"algorithm": "lucb"}, {"algorithm": "lucb"}])
    assert ExperimentSpec.from_dict(_spec().to_dict()) == _spec()


def _fake(tau, correct=True, name="x", rep=0):
    return RunResult(name, tau, [0], correct, seed_record(1, rep, 0), extra={"rep": rep})


def test_summary_arithmetic():
    s = summarize([_fake(10), _fake(20, rep=1)])["x"]
    assert s["mean_tau"] == 15 and s["std_tau"] == pytest.approx(7.0710678, rel=1e-6)
    assert s["error_rate"] == 0.0 and (s["min"], s["median"], s["max"]) == (10, 15, 20)
    assert summarize([_fake(3, correct=False)])["x"]["std_tau"] is None
    with pytest.raises(ValueError):
        summarize([])


def test_summary_recomputes_from_jsonl(tmp_path):
    results = [_fake(t, correct=t % 3 > 0, rep=i) for i, t in enumerate([4, 9, 12, 30])]
    paths = emit_report(results, tmp_path)
    back = load_results(tmp_path)
    assert back == results
    assert json.loads(paths["summary"].read_text())["algorithms"] == summarize(back)
    rows = paths["csv"].read_text().splitlines()
    assert len(rows) == 5 and rows[1:] == to_csv(back).splitlines()[1:]


def test_cli_end_to_end(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps(_spec(reps=2).to_dict()))
    out = tmp_path / "out"
    assert main(["run", "--spec", str(spec), "--out", str(out)]) == 0
    assert len(load_results(out)) == 2
    capsys.readouterr()
    assert main(["report", "--in", str(out), "--format", "csv"]) == 0
    assert capsys.readouterr().out.startswith("algorithm,rep,tau")
    prob = tmp_path / "prob.json"
    assert main(["instance", "--experiment", "a", "--seed", "23", "--out", str(prob)]) == 0
    load_problem(prob)
    capsys.readouterr()
    assert main(["lower-bound", "--instance", str(prob), "--m", "3", "--delta", "0.05"]) == 0
    body = json.loads(capsys.readouterr().out)
    assert body["h_mu"] > 0 and body["floor"] == pytest.approx(np.log(1 / 0.12) / body["h_mu"])
    assert main(["report", "--in", str(tmp_path / "missing")]) == 1


def test_cli_flags_incomplete_runs(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps(_spec(reps=1, algorithms=[{"algorithm": "mislid", "safety_cap": 30}]).to_dict()))
    assert main(["run", "--spec", str(spec), "--out", str(tmp_path / "o")]) == 2
    assert main(["run", "--spec", str(spec), "--out", str(tmp_path / "o"), "--allow-incomplete"]) == 0
