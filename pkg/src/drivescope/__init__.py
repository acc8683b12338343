"""Unsupervised detection of rare driving scenarios from multivariate telemetry."""

from .dif import DeepIsolationForest, RepresentationNetwork
from .features import FeatureMatrix, WindowSpec, build_feature_matrix
from .iforest import IsolationForest, c_factor, threshold_by_contamination
from .ingest import SignalSchema, TimeSeriesMeasurement, load_measurement
from .proxy import ProxyRuleSet, apply_rules, default_ruleset
from .synthetic import ScenarioConfig, generate_hard_anomaly_cloud, generate_measurements

__version__ = "0.1.0"

__all__ = [
    "DeepIsolationForest",
    "FeatureMatrix",
    "IsolationForest",
    "ProxyRuleSet",
    "RepresentationNetwork",
    "ScenarioConfig",
    "SignalSchema",
    "TimeSeriesMeasurement",
    "WindowSpec",
    "apply_rules",
    "build_feature_matrix",
    "c_factor",
    "default_ruleset",
    "generate_hard_anomaly_cloud",
    "generate_measurements",
    "load_measurement",
    "threshold_by_contamination",
]
