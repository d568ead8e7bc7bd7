"""Boundary-concentrated sampling, classical estimators, adversarial attacks,
and adversarial active-learning pipelines at desk scale."""

from . import attacks, classifiers, datasets, model_io, neural, pipeline, theory
from .datasets import (
    BetaSamplerConfig,
    Box,
    GroundTruthModel,
    LabeledDataset,
    generate_halfmoon,
    halfmoon_ground_truth,
    load_abalone,
    load_mnist_idx,
    sample_beta_concentrated,
)
from .errors import (
    AttackInfeasible,
    BoundaryLabError,
    FormatError,
    IllConditionedError,
    NumericError,
    ParseError,
    SamplerStalled,
    TrainingDiverged,
    UnsupportedStrategy,
)

__version__ = "0.1.0"
