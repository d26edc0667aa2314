"""Benchmarking imputation methods for mixed-type tables.

Inject MCAR/MAR missingness, impute with naive, chained-equation or
iterative random-forest engines, and score the completions on predictive
accuracy (NRMSE, PFC) and distributional accuracy (KS, Cramer-von Mises,
Mallows L2, Kullback-Leibler, Cramer's V) with permutation p-values.
"""

__version__ = "0.1.0"

from .forest import Forest, ForestConfig, fit_forest, predict, sample_predictions, sample_tree_prediction
from .frame import (
    ColumnSchema,
    ColumnView,
    DataTable,
    Kind,
    infer_schema,
    pearson_correlation,
    read_csv,
    read_schema,
    summary_stats,
    write_csv,
    write_schema,
)
from .harness import ExperimentConfig, RunReport, load_config, run_experiment, summarize
from .impute import ImputationResult, ImputerSpec, Method, run_method
from .measures import (
    cm_statistic,
    cramers_v,
    crosstab,
    kappa,
    kde,
    kl_divergence,
    ks_statistic,
    mallows_l2,
    nrmse,
    pfc,
)
from .missing import MAR, MCAR, AmputationPlan, Direction, MissingMask, apply_plan
from .permtest import permutation_p_value, permutation_tests
from .synth import default_spec, generate_synthetic
