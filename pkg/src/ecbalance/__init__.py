"""Balancing-weight treatment-effect estimation for RCTs augmented with external controls."""

__version__ = "0.1.0"

from .balancing import EstimandKind, WeightSet, effective_sample_size, weighted_density_export, weights_for
from .core import CombinedDataset, SubjectRecord, build_dataset, ingest_csv, write_csv
from .estimators import EstimateResult, check_identification, estimate
from .harness import MetricsTable, emit_report, run_replications
from .oracle import TrueEstimands, true_estimand_custom_lambda, true_estimands, true_pi
from .psmodel import PropensityFit, fit_propensity, predict_pi
from .simgen import ScenarioSpec, enumerate_scenarios, generate, scenario

__all__ = [
    "CombinedDataset", "EstimandKind", "EstimateResult", "MetricsTable", "PropensityFit", "ScenarioSpec",
    "SubjectRecord", "TrueEstimands", "WeightSet", "build_dataset", "check_identification",
    "effective_sample_size", "emit_report", "enumerate_scenarios", "estimate", "fit_propensity", "generate",
    "ingest_csv", "predict_pi", "run_replications", "scenario", "true_estimand_custom_lambda",
    "true_estimands", "true_pi", "weighted_density_export", "weights_for", "write_csv",
]
