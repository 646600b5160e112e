from .config import Dropout, ExperimentConfig, validate_config
from .runner import CSV_COLUMNS, ExperimentResult, InvalidConfig, MetricsRow, run_experiment, sweep_q

__all__ = [
    "CSV_COLUMNS",
    "Dropout",
    "ExperimentConfig",
    "ExperimentResult",
    "InvalidConfig",
    "MetricsRow",
    "run_experiment",
    "sweep_q",
    "validate_config",
]
