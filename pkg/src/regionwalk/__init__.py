"""Region-graph reasoning for video-text retrieval.

Builds a semantic relation graph over per-frame region features, reasons
over it with a residual graph-convolution layer under selectable random-walk
style normalizations, and scores cross-modal retrieval with a hard-negative
triplet objective. Ships a compiled Jacobi eigensolver with a pure NumPy
fallback (set REGIONWALK_PURE=1 to force the fallback).
"""

from .dataio import Dataset, load_dataset, save_dataset, synth_dataset
from .eigen import active_kernel, available_kernels, jacobi_eigh
from .errors import (
    ConfigError,
    DataError,
    FormatError,
    NumericError,
    RegionWalkError,
    UsageError,
)
from .graph import build_adjacency, laplacian, normalize, spectral_decompose, verify_rw_sym_similarity
from .reason import rw_gcn_backward, rw_gcn_forward
from .retrieval import evaluate, rank_queries, report
from .train import Checkpoint, Model, TrainConfig, gradcheck_all, train

__version__ = "0.1.0"

__all__ = [
    "Checkpoint",
    "ConfigError",
    "DataError",
    "Dataset",
    "FormatError",
    "Model",
    "NumericError",
    "RegionWalkError",
    "TrainConfig",
    "UsageError",
    "__version__",
    "active_kernel",
    "available_kernels",
    "build_adjacency",
    "evaluate",
    "gradcheck_all",
    "jacobi_eigh",
    "laplacian",
    "load_dataset",
    "normalize",
    "rank_queries",
    "report",
    "rw_gcn_backward",
    "rw_gcn_forward",
    "save_dataset",
    "spectral_decompose",
    "synth_dataset",
    "train",
    "verify_rw_sym_similarity",
]
