"""Speaker embeddings: diagonal-covariance UBM plus total-variability i-vectors."""

from .fileio import read_tmatrix, read_ubm, write_tmatrix, write_ubm
from .total_variability import (
    INIT_SCALE,
    RIDGE,
    TMatrix,
    extract_ivector,
    train_tmatrix,
)
from .ubm import (
    VARIANCE_FLOOR_ABS,
    VARIANCE_FLOOR_FRACTION,
    WEIGHT_FLOOR,
    BwStats,
    Ubm,
    accumulate_stats,
    log_likelihood,
    responsibilities,
    train_ubm,
)

__all__ = [
    "INIT_SCALE",
    "RIDGE",
    "VARIANCE_FLOOR_ABS",
    "VARIANCE_FLOOR_FRACTION",
    "WEIGHT_FLOOR",
    "BwStats",
    "TMatrix",
    "Ubm",
    "accumulate_stats",
    "extract_ivector",
    "log_likelihood",
    "read_tmatrix",
    "read_ubm",
    "responsibilities",
    "train_tmatrix",
    "train_ubm",
    "write_tmatrix",
    "write_ubm",
]
