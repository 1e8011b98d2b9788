from .network import Network, build_classifier_spec, build_estimator_spec, validate_netspec
from .training import (
    MonitorModel,
    TrainOpts,
    cross_entropy,
    fine_tune,
    load_model,
    mse,
    predict,
    save_model,
    train_classifier,
    train_estimator,
)

__all__ = [
    "Network", "build_classifier_spec", "build_estimator_spec",
    "validate_netspec", "MonitorModel", "TrainOpts", "cross_entropy",
    "fine_tune", "load_model", "mse", "predict", "save_model",
    "train_classifier", "train_estimator",
]
