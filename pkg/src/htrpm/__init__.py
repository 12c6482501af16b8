"""Hierarchical temporal random partition model for clustering functional binary trajectories."""
from __future__ import annotations

__version__ = "0.1.0"

from .chain import ChainArchive, run_chain
from .model import (
    VARIANTS,
    Hyperparameters,
    ModelState,
    PanelDataset,
    ValidationError,
    default_hyperparameters,
    validate_dataset,
)
from .simulate import ScenarioTruth, generate_scenario1, generate_scenario2, library_function

__all__ = [
    "__version__",
    "VARIANTS",
    "ChainArchive",
    "Hyperparameters",
    "ModelState",
    "PanelDataset",
    "ScenarioTruth",
    "ValidationError",
    "default_hyperparameters",
    "generate_scenario1",
    "generate_scenario2",
    "library_function",
    "run_chain",
    "validate_dataset",
]
