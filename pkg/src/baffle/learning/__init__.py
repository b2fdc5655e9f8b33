"""Taxi repositioning batch-RL case study: environment, Q-network, evaluator."""

from .env import (
    CityGrid,
    DemandParams,
    RideRecord,
    RideFormatError,
    RideValidationError,
    generate_rides,
    ingest_rides_csv,
)
from .qmodel import QNetwork, TrainingDivergedError, bellman_targets, encode_states, train_step
from .evaluate import (
    Benchmark,
    EvaluationError,
    asr_evaluate,
    asr_report,
    build_benchmark,
    greedy_policy,
    no_learning_policy,
)

__all__ = [
    "CityGrid",
    "DemandParams",
    "RideRecord",
    "RideFormatError",
    "RideValidationError",
    "generate_rides",
    "ingest_rides_csv",
    "QNetwork",
    "TrainingDivergedError",
    "bellman_targets",
    "encode_states",
    "train_step",
    "Benchmark",
    "EvaluationError",
    "asr_evaluate",
    "asr_report",
    "build_benchmark",
    "greedy_policy",
    "no_learning_policy",
]
