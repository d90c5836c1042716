"""Diagnose the quality of a train/test split.

The distance between the two partitions is measured with a pooled-covariance
Mahalanobis metric and compared against its distribution over random
re-splits of the same data.
"""

from .dataset import (
    ColumnSelection,
    Dataset,
    DatasetError,
    SplitIndices,
    load_csv,
    select_columns,
    view,
    write_csv,
)
from .metric import (
    DegenerateDataError,
    LambdaStatistic,
    MomentSummary,
    factorize,
    lambda_metric,
    mahalanobis_sq,
    moments,
    pooled_covariance,
)
from .model import ModelFit, ModelFormula, association_sweep, design_matrix, fit_ols
from .montecarlo import SimulationResult, TestConfig, decide, run_test, simulate_null
from .splitters import (
    SplitSpec,
    adversarial_split,
    cadex_split,
    cluster_split,
    duplex_split,
    make_split,
    random_split,
    read_split_csv,
    stratified_split,
    write_split_csv,
)

__version__ = "0.1.0"
