"""Next-POI forecasting: category classifier x proximity prior ranking."""

from ._core import (
    ConfigError,
    DataError,
    Dataset,
    DatasetSplit,
    ProximityPrior,
    TrainError,
    estimate_prior,
    find_threshold_for_unseen_ratio,
    hour_of_week,
    parse_checkins,
    parse_checkins_file,
    project,
    run,
    temporal_split,
)

__all__ = [
    "ConfigError",
    "DataError",
    "Dataset",
    "DatasetSplit",
    "ProximityPrior",
    "TrainError",
    "estimate_prior",
    "find_threshold_for_unseen_ratio",
    "hour_of_week",
    "parse_checkins",
    "parse_checkins_file",
    "project",
    "run",
    "temporal_split",
]
