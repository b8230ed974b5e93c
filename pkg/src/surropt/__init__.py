"""Constrained black-box optimization via adaptive sampling, MLP surrogates
with exact analytic derivatives, and an SQP feasible-path solver."""

from .problems import (
    ProblemSpec,
    available_problems,
    benchmark_optimum,
    evaluate_benchmark,
    problem_spec,
)
from .sampling import Dataset, SamplingConfig, adaptive_sample, lhs
from .sqp import NumericModel, SqpConfig, SqpResult, solve
from .surrogate import MlpSurrogate, TrainConfig, train_mlp
from .svm import SvmModel, conservative_retrain, train_svm
from .williams_otto import WoState, wo_simulate

__all__ = [
    "Dataset",
    "MlpSurrogate",
    "NumericModel",
    "ProblemSpec",
    "SamplingConfig",
    "SqpConfig",
    "SqpResult",
    "SvmModel",
    "TrainConfig",
    "WoState",
    "adaptive_sample",
    "available_problems",
    "benchmark_optimum",
    "conservative_retrain",
    "evaluate_benchmark",
    "lhs",
    "problem_spec",
    "solve",
    "train_mlp",
    "train_svm",
    "wo_simulate",
]
