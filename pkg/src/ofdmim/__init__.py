"""OFDM with index modulation: pattern mapping, detectors and Monte Carlo tools."""

__version__ = "0.1.0"

from .mapping import (  # noqa: E402
    InvalidParameterError,
    Sap,
    SubblockParams,
    derive_params,
    illegal_ratio,
    index_to_sap,
    is_legal,
    sap_to_rank,
)
from .detectors import (  # noqa: E402
    ActiveLikelihoods,
    classify_outcome,
    compute_metrics,
    klv_detect,
    kth_best_saps,
    ml_detect,
    subml_detect,
)
from .estimators import IndexModulationMapper, SapDetector  # noqa: E402

__all__ = [
    "InvalidParameterError",
    "Sap",
    "SubblockParams",
    "derive_params",
    "illegal_ratio",
    "index_to_sap",
    "is_legal",
    "sap_to_rank",
    "ActiveLikelihoods",
    "classify_outcome",
    "compute_metrics",
    "klv_detect",
    "kth_best_saps",
    "ml_detect",
    "subml_detect",
    "IndexModulationMapper",
    "SapDetector",
]
