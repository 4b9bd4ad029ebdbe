"""Instance generators, Monte Carlo execution and report emission.

An experiment fixes one instance (from its generator seed), then runs every
configured algorithm for ``repetitions`` paired repetitions: repetition ``r``
of every algorithm draws reward noise from the same per-arm streams, keyed by
``(seed, r)``.
"""

from __future__ import annotations

import csv
import io
import json
import os
import traceback
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from joblib import Parallel, delayed

from .baselines import ALGORITHMS as BASELINES
from .baselines import BaselineConfig, run_baseline
from .mislid import MisLidConfig
from .mislid import run as mislid_run
from .model import FeatureMatrix, Instance, ModelSet, RunResult, TopMQuery, load_problem
from .streams import seed_record

__all__ = [
    "gen_experiment_a",
    "gen_experiment_b",
    "gen_experiment_c",
    "ExperimentSpec",
    "build_problem",
    "run_monte_carlo",
    "summarize",
    "emit_report",
    "load_results",
    "JOBS_ENV",
]

JOBS_ENV = "MISLID_JOBS"
_MAX_TRIES = 100
_TIE_TOL = 1e-9


def _normalize_features(A, normalization):
    if normalization == "matrix":
        return A / np.max(np.abs(A))
    if normalization == "row":
        return A / np.max(np.abs(A), axis=1, keepdims=True)
    raise ValueError(f"unknown normalization {normalization!r}")


def _separated(mu, m):
    s = np.sort(mu)[::-1]
    return s[m - 1] - s[m] > _TIE_TOL


def gen_experiment_a(seed: int, epsilon: float, normalization: str = "matrix", K: int = 10, d: int = 5,
                     m: int = 3):
    """Random linear instance whose fourth-best arm is lifted by ``epsilon``.

    Features and ``theta`` are standard normal, scaled by their largest absolute
    entry (whole matrix, or per row with ``normalization="row"``). With
    ``epsilon`` above the gap between the third and fourth arms, the lifted arm
    enters the top three.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    if K < 4 or m >= K:
        raise ValueError("need K >= 4 and m < K")
    rng = np.random.default_rng(seed)
    for _ in range(_MAX_TRIES):
        A = _normalize_features(rng.standard_normal((K, d)), normalization)
        theta = rng.standard_normal(d)
        theta /= np.max(np.abs(theta))
        base = A @ theta
        eta = np.zeros(K)
        eta[np.argsort(-base, kind="mergesort")[3]] = epsilon
        mu = base + eta
        if np.linalg.matrix_rank(A) == d and _separated(base, m) and _separated(mu, m):
            break
    else:
        raise RuntimeError("could not draw a tie-free instance")
    model = ModelSet(FeatureMatrix(A), epsilon=epsilon, mean_bound=d + epsilon)
    return Instance(mu, theta, eta), model, TopMQuery(m, 0.05)


def gen_experiment_b(seed: int, epsilon_user: float, epsilon_star: float = 1.0, normalization: str = "matrix",
                     K: int = 15, d: int = 8, m: int = 3):
    """Random instance with deviation of sup-norm exactly ``epsilon_star``; the model uses ``epsilon_user``."""
    if not epsilon_star > 0:
        raise ValueError("epsilon_star must be positive")
    if epsilon_user < 0:
        raise ValueError("epsilon_user must be non-negative")
    rng = np.random.default_rng(seed)
    for _ in range(_MAX_TRIES):
        A = _normalize_features(rng.standard_normal((K, d)), normalization)
        theta = rng.standard_normal(d)
        theta /= np.max(np.abs(theta))
        eta = rng.standard_normal(K)
        eta *= epsilon_star / np.max(np.abs(eta))
        mu = A @ theta + eta
        if np.linalg.matrix_rank(A) == d and _separated(mu, m):
            break
    else:
        raise RuntimeError("could not draw a tie-free instance")
    model = ModelSet(FeatureMatrix(A), epsilon=epsilon_user, mean_bound=d + epsilon_star)
    return Instance(mu, theta, eta), model, TopMQuery(m, 0.05)


def gen_experiment_c(seed: int, epsilon: float = 1.0, normalization: str = "matrix"):
    """Experiment B's generator with a well-specified model set (``epsilon_user = epsilon_star``)."""
    return gen_experiment_b(seed, epsilon, epsilon, normalization)


def instance_gap(mu, m: int) -> float:
    """Difference between the m-th and (m+1)-th largest means."""
    s = np.sort(np.asarray(mu, dtype=float))[::-1]
    return float(s[m - 1] - s[m])


@dataclass
class ExperimentSpec:
    """What to run: a generator, algorithm configs, repetitions, a base seed and delta.

    ``generator`` is a dict with ``name`` in ``exp_a``, ``exp_b``, ``exp_c`` or
    ``custom``, plus that generator's arguments (``seed``, ``epsilon``, ...;
    ``path`` and ``m`` for ``custom``). Each algorithm entry is a config dict
    whose ``algorithm`` field selects ``mislid``, ``lucb`` or ``lingape``; an
    optional ``label`` names it in reports.
    """

    generator: dict
    algorithms: list
    repetitions: int = 100
    seed: int = 0
    delta: float = 0.05
    m: Optional[int] = None

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if not self.algorithms:
            raise ValueError("need at least one algorithm")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        labels = self.labels()
        if len(set(labels)) != len(labels):
            raise ValueError(f"algorithm labels must be unique, got {labels}")
        for raw in self.algorithms:
            _parse_config(raw)

    def labels(self) -> list:
        return [raw.get("label", raw.get("algorithm", "mislid")) for raw in self.algorithms]

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentSpec":
        keep = ("generator", "algorithms", "repetitions", "seed", "delta", "m")
        unknown = set(raw) - set(keep)
        if unknown:
            raise ValueError(f"unknown spec fields {sorted(unknown)}")
        return cls(**{k: raw[k] for k in keep if k in raw})

    @classmethod
    def from_file(cls, path) -> "ExperimentSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return {
            "generator": self.generator,
            "algorithms": self.algorithms,
            "repetitions": self.repetitions,
            "seed": self.seed,
            "delta": self.delta,
            "m": self.m,
        }


def _parse_config(raw: dict):
    algo = raw.get("algorithm", "mislid")
    body = {k: v for k, v in raw.items() if k != "label"}
    if algo == "mislid":
        return MisLidConfig.from_dict(body)
    if algo in BASELINES:
        return BaselineConfig.from_dict(body)
    raise ValueError(f"unknown algorithm {algo!r}")


def build_problem(spec: ExperimentSpec):
    """The fixed ``(Instance, ModelSet, TopMQuery)`` an experiment runs on."""
    gen = dict(spec.generator)
    name = gen.pop("name")
    if name == "custom":
        instance, model = load_problem(gen["path"])
        if spec.m is None:
            raise ValueError("custom instances need an explicit m")
        query = TopMQuery(spec.m, spec.delta)
    else:
        makers = {"exp_a": gen_experiment_a, "exp_b": gen_experiment_b, "exp_c": gen_experiment_c}
        if name not in makers:
            raise ValueError(f"unknown generator {name!r}")
        instance, model, query = makers[name](**gen)
        query = TopMQuery(spec.m or query.m, spec.delta)
    query.validate(model.K)
    return instance, model, query


def _one(label, raw, instance, model, query, seed, rep, alg):
    config = _parse_config(raw)
    try:
        if isinstance(config, MisLidConfig):
            res = mislid_run(instance, query, model, config, seed=seed, rep=rep, alg=alg)
        else:
            res = run_baseline(instance, query, model, config, seed=seed, rep=rep, alg=alg)
    except Exception as exc:  # a failed run is recorded, not fatal
        return RunResult(label, 0, [], False, seed_record(seed, rep, alg), incomplete=True,
                         extra={"error": f"{type(exc).__name__}: {exc}", "traceback": traceback.format_exc()})
    res.algorithm = label
    res.extra["rep"] = rep
    return res


def _n_jobs(jobs):
    env = os.environ.get(JOBS_ENV)
    if env:
        return int(env)
    return 1 if jobs is None else int(jobs)


def run_monte_carlo(spec: ExperimentSpec, jobs: Optional[int] = None) -> list:
    """All ``repetitions x algorithms`` runs, ordered by algorithm then repetition.

    ``jobs`` (overridden by the ``MISLID_JOBS`` environment variable) sets the
    number of worker processes.
    """
    instance, model, query = build_problem(spec)
    tasks = [(label, raw, alg, rep) for alg, (label, raw) in enumerate(zip(spec.labels(), spec.algorithms))
             for rep in range(spec.repetitions)]
    n_jobs = _n_jobs(jobs)
    if n_jobs == 1:
        return [_one(label, raw, instance, model, query, spec.seed, rep, alg) for label, raw, alg, rep in tasks]
    return Parallel(n_jobs=n_jobs)(
        delayed(_one)(label, raw, instance, model, query, spec.seed, rep, alg) for label, raw, alg, rep in tasks
    )


_CSV_FIELDS = ["algorithm", "rep", "tau", "correct", "incomplete", "answer", "wall_time", "seed_base",
               "seed_rep", "seed_alg", "generator"]


def _csv_row(r: RunResult) -> dict:
    return {
        "algorithm": r.algorithm,
        "rep": r.extra.get("rep", r.seed.get("rep")),
        "tau": int(r.tau),
        "correct": int(bool(r.correct)),
        "incomplete": int(bool(r.incomplete)),
        "answer": " ".join(str(a) for a in r.answer),
        "wall_time": f"{r.wall_time:.6g}",
        "seed_base": r.seed.get("base"),
        "seed_rep": r.seed.get("rep"),
        "seed_alg": r.seed.get("alg"),
        "generator": r.seed.get("generator"),
    }


def to_csv(results) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=_CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for r in results:
        writer.writerow(_csv_row(r))
    return buf.getvalue()


def summarize(results) -> dict:
    """Per-algorithm statistics of the stopping time and error frequency.

    ``std_tau`` is the sample standard deviation (``ddof=1``; ``None`` for a
    single run). Quantiles use linear interpolation.
    """
    if not results:
        raise ValueError("no results to summarize")
    groups: dict = {}
    for r in results:
        groups.setdefault(r.algorithm, []).append(r)
    out = {}
    for name, runs in groups.items():
        tau = np.array([r.tau for r in runs], dtype=float)
        q = np.percentile(tau, [0, 25, 50, 75, 100])
        out[name] = {
            "runs": len(runs),
            "mean_tau": float(tau.mean()),
            "std_tau": float(tau.std(ddof=1)) if len(runs) > 1 else None,
            "error_rate": float(np.mean([not r.correct for r in runs])),
            "incomplete": int(sum(r.incomplete for r in runs)),
            "min": float(q[0]),
            "q1": float(q[1]),
            "median": float(q[2]),
            "q3": float(q[3]),
            "max": float(q[4]),
        }
    return out


def emit_report(results, out_dir, formats=("jsonl", "csv", "summary"), meta: Optional[dict] = None) -> dict:
    """Write ``runs.jsonl``, ``runs.csv`` and ``summary.json`` (as requested) into ``out_dir``.

    Returns the paths written, keyed by format.
    """
    results = list(results)
    if not results:
        raise ValueError("no results to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for fmt in formats:
        if fmt == "jsonl":
            p = out / "runs.jsonl"
            p.write_text("".join(json.dumps(r.to_dict()) + "\n" for r in results))
        elif fmt == "csv":
            p = out / "runs.csv"
            p.write_text(to_csv(results))
        elif fmt == "summary":
            p = out / "summary.json"
            body = {"algorithms": summarize(results)}
            if meta:
                body["experiment"] = meta
            p.write_text(json.dumps(body, indent=2))
        else:
            raise ValueError(f"unknown format {fmt!r}")
        paths[fmt] = p
    return paths


def load_results(path) -> list:
    """Read run records back from a ``runs.jsonl`` file or a directory holding one."""
    p = Path(path)
    if p.is_dir():
        p = p / "runs.jsonl"
    return [RunResult.from_dict(json.loads(line)) for line in p.read_text().splitlines() if line.strip()]


def experiment_meta(spec: ExperimentSpec, instance: Instance, query: TopMQuery) -> dict:
    """Instance facts worth keeping next to the results, for auditing."""
    return {
        "spec": spec.to_dict(),
        "mu": instance.mu.tolist(),
        "gap": instance_gap(instance.mu, query.m),
        "top_m": sorted(instance.top_m(query.m)),
    }
