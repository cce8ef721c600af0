"""Piecewise ARX identification with gated expert mixtures.

The package fits a mixture of affine ARX experts whose discrete mode is
selected by a softmax gate (feed-forward network or linear map) using a
generalized EM procedure; a linear gate converts exactly to a polyhedral
piecewise model.
"""

from .arx import ArxMode, VariancePrior, map_variance, mode_log_density
from .arx import pooled_mle_variance, predict, weighted_least_squares
from .benchmark import evaluate, generate, mode_fit, parameter_fit, reorder_modes
from .dataset import (
    DataError,
    Dataset,
    RegressorConfig,
    SeriesData,
    build_regressors,
    read_csv,
    split,
    write_csv,
)
from .em import (
    AdamConfig,
    EmConfig,
    EmTrace,
    FitError,
    FitResult,
    MixtureModel,
    ModelSpec,
    e_step,
    fit,
    kmeans_bias_init,
    m_step,
    observed_loglik,
    permute_modes,
    run_em,
)
from .gate import GateNetwork, LinearGate, init_gate, init_linear_gate
from .gate import probabilities, train_soft_labels
from .model_io import load_model, save_model
from .pwarx import PolyhedralPartition, hard_assign, predict_output, prarx_to_pwarx

__version__ = "0.1.0"
