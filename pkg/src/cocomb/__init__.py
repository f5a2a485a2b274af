"""cocomb: coherent combination of multi-expert forecasts under linear constraints."""

from .coherent import CoherentResult, mint_reconcile, occ, scr, src
from .combiners import (
    MultiTaskResult,
    WeightScheme,
    combine_multi_task,
    combine_single_task,
    simplex_weights,
    single_task_weights,
)
from .constraints import (
    ConstraintSystem,
    from_aggregation,
    from_general_constraints,
    is_coherent,
    read_constraint_file,
)
from .covariance import (
    CovarianceEstimate,
    as_covariance,
    block_by_expert,
    block_by_variable,
    diagonal_mse,
    sample_mse,
    shrink,
    shrink_intensity,
)
from .exceptions import CocombError, DataError, NumericalError
from .metrics import AccuracyTable, DMResult, accuracy, dm_test
from .panel import (
    ForecastPanel,
    build_panel,
    from_availability,
    residual_panel,
    residuals_from_arrays,
    to_by_variable,
)
from .simulation import (
    ExperimentResult,
    Replication,
    SimulationConfig,
    dgp_system,
    generate_replication,
    nearest_correlation,
    run_experiment,
)

__version__ = "0.1.0"

__all__ = [
    "AccuracyTable",
    "CocombError",
    "CoherentResult",
    "ConstraintSystem",
    "CovarianceEstimate",
    "DMResult",
    "DataError",
    "ExperimentResult",
    "ForecastPanel",
    "MultiTaskResult",
    "NumericalError",
    "Replication",
    "SimulationConfig",
    "WeightScheme",
    "accuracy",
    "as_covariance",
    "block_by_expert",
    "block_by_variable",
    "build_panel",
    "combine_multi_task",
    "combine_single_task",
    "dgp_system",
    "diagonal_mse",
    "dm_test",
    "from_aggregation",
    "from_availability",
    "from_general_constraints",
    "generate_replication",
    "is_coherent",
    "mint_reconcile",
    "nearest_correlation",
    "occ",
    "read_constraint_file",
    "residual_panel",
    "residuals_from_arrays",
    "run_experiment",
    "sample_mse",
    "scr",
    "shrink",
    "shrink_intensity",
    "simplex_weights",
    "single_task_weights",
    "src",
    "to_by_variable",
    "__version__",
]
