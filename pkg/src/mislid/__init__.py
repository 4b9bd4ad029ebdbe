"""Top-m arm identification in misspecified linear bandits."""

from .baselines import BaselineConfig, lingape_run, lucb_run
from .bench import ExperimentSpec, emit_report, gen_experiment_a, gen_experiment_b, run_monte_carlo
from .bounds import characteristic_value, sample_complexity_floor, unstructured_characteristic_value
from .geometry import closest_alternative, project_onto_model
from .mislid import MisLid, MisLidConfig, StoppingConfig, run
from .model import FeatureMatrix, Instance, ModelSet, RunResult, TopMQuery

__all__ = [
    "BaselineConfig",
    "ExperimentSpec",
    "FeatureMatrix",
    "Instance",
    "MisLid",
    "MisLidConfig",
    "ModelSet",
    "RunResult",
    "StoppingConfig",
    "TopMQuery",
    "characteristic_value",
    "closest_alternative",
    "emit_report",
    "gen_experiment_a",
    "gen_experiment_b",
    "lingape_run",
    "lucb_run",
    "project_onto_model",
    "run",
    "run_monte_carlo",
    "sample_complexity_floor",
    "unstructured_characteristic_value",
]
