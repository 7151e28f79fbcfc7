"""Sparse discriminant analysis under spiked covariance models."""

from .dataio import LabeledDataset, load_csv, save_csv, train_test_split
from .errors import SpikeLDAError
from .pclda import (
    PCLDAModel,
    Threshold,
    TopS,
    bayes_risk,
    fit_kclass,
    fit_pclda,
    oracle_fisher,
    predict_kclass,
    predict_pclda,
)
from .whitening import choose_d, fit_spiked, pooled_covariance, whiten

__version__ = "0.1.0"

__all__ = [
    "LabeledDataset",
    "PCLDAModel",
    "SpikeLDAError",
    "Threshold",
    "TopS",
    "bayes_risk",
    "choose_d",
    "fit_kclass",
    "fit_pclda",
    "fit_spiked",
    "load_csv",
    "oracle_fisher",
    "pooled_covariance",
    "predict_kclass",
    "predict_pclda",
    "save_csv",
    "train_test_split",
    "whiten",
]
