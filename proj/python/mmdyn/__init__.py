"""Python front end for the mmdyn C++ core.

Configs and synthetic specs are plain dicts with the same keys as the JSON
files the command line reads.
"""

import json

from ._mmdyn import (
    ConfigError,
    DataError,
    Dataset,
    Error,
    ShapeError,
    Split,
    TrainedModel,
    TrainingError,
    cli,
    load_tabular,
    patient_split,
    rank_features,
    tcp_error_curve,
)
from . import _mmdyn

__all__ = [
    "ConfigError", "DataError", "Dataset", "Error", "ShapeError", "Split", "TrainedModel", "TrainingError",
    "cli", "compute_metrics", "evaluate", "evaluate_masked", "history", "infer", "load_tabular", "patient_split",
    "rank_features", "run_ablation", "run_sweep", "synthesize", "tcp_error_curve", "train", "train_early_fusion",
]


def synthesize(spec, seed=0):
    """Returns (dataset, ground_truth dict)."""
    dataset, truth = _mmdyn._synthesize(json.dumps(spec), seed)
    return dataset, json.loads(truth)


def train(config, dataset, split):
    return _mmdyn._train(json.dumps(config or {}), dataset, split)


def train_early_fusion(config, dataset, split):
    return _mmdyn._train_early_fusion(json.dumps(config or {}), dataset, split)


def evaluate(model, dataset, indices):
    return json.loads(model._evaluate(dataset, list(indices)))


def evaluate_masked(model, dataset, split, modality, intensity=0.5):
    return json.loads(model._evaluate_masked(dataset, split, modality, intensity))


def infer(model, dataset, indices=None):
    """Predictions, probabilities, per-modality tcp/tcp_hat and mean gates."""
    return json.loads(model._infer(dataset, None if indices is None else list(indices)))


def history(model):
    return json.loads(model._history)


def compute_metrics(predictions, labels, class_count):
    return json.loads(_mmdyn._compute_metrics(list(predictions), list(labels), class_count))


def run_ablation(config, dataset, split, variants=("none", "FI", "MI", "both"), seeds=(0,)):
    return json.loads(_mmdyn._run_ablation(json.dumps(config or {}), dataset, split, list(variants), list(seeds)))


def run_sweep(config, axis, values, dataset, split, seeds=(0,)):
    values = [list(map(float, v)) for v in values]
    return json.loads(_mmdyn._run_sweep(json.dumps(config or {}), axis, values, dataset, split, list(seeds)))
