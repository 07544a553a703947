"""Subgraph representation learning with position-aware pooling, autoencoder
pretraining and explore/exploit contrastive learning.

Built on numpy and scipy with a small reverse-mode autodiff engine
(:mod:`padel.tensor`).
"""

from .graph import BaseGraph, DataFormatError, DatasetBundle, SubgraphRecord, load_dataset
from .pipeline import ABLATIONS, PadelModel, RunConfig, evaluate, run_pipeline
from .position import pca_reduce, phase_encode, preprocess

__all__ = [
    "ABLATIONS", "BaseGraph", "DataFormatError", "DatasetBundle", "PadelModel", "RunConfig", "SubgraphRecord",
    "evaluate", "load_dataset", "pca_reduce", "phase_encode", "preprocess", "run_pipeline",
]
__version__ = "0.1.0"
