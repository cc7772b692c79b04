"""Data-driven hysteresis-aware kinematics with Gaussian mixture regression."""

__version__ = "0.1.0"

from .dataset import Branch, CycleDataset, load_csv, split_cycles, train_test_split, write_csv
from .gmm import GaussianMixture, fit_em, information_criteria, select_k
from .gmr import GmrModel, Prediction
from .hysteresis import (
    HysteresisModel,
    InverseSolution,
    SolverState,
    armijo_step,
    evaluate,
    nominal_inverse,
    predict_directional,
    solve_inverse,
    train_hysteresis_model,
)
from .simulator import BacklashPlant, CubicGain, generate_dataset

__all__ = [
    "BacklashPlant",
    "Branch",
    "CubicGain",
    "CycleDataset",
    "GaussianMixture",
    "GmrModel",
    "HysteresisModel",
    "InverseSolution",
    "Prediction",
    "SolverState",
    "armijo_step",
    "evaluate",
    "fit_em",
    "generate_dataset",
    "information_criteria",
    "load_csv",
    "nominal_inverse",
    "predict_directional",
    "select_k",
    "solve_inverse",
    "split_cycles",
    "train_hysteresis_model",
    "train_test_split",
    "write_csv",
]
