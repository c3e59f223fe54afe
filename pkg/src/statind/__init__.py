"""Statistical industry classifications built from stock returns."""

from .classification import BinaryClassification, MultilevelClassification, nesting_violations, rand_index
from .hierarchy import bottom_up, relaxation_all, relaxation_cluster, top_down
from .hybrid import FundamentalClassification, improve_classification
from .kmeans import aggregate_samplings, kmeans_cluster
from .returns import ReturnMatrix, demean_cross_sectionally, normalize_returns, row_variances
from .spectral import (
    classify_dynamic,
    correlation_eigen,
    derive_topdown_l,
    dynamic_cluster_numbers,
    erank,
    statistical_risk_model,
)

__version__ = "0.1.0"
