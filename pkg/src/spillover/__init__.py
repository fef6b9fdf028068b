"""Direct and spillover treatment effects in group-randomized experiments.

Units are nested in groups and a unit's outcome may depend on its own
treatment and on how many (or which) of its group neighbors are treated.
The package estimates every identifiable direct and spillover effect by
cell means, characterizes what common regressions (difference in means,
linear in means, pooled and partial-population contrasts) converge to under
a known design, provides normal and wild-bootstrap inference, and ranks
candidate randomization designs by how well their smallest assignment cell
fills up.
"""

__version__ = "0.1.0"

from .assignments import (
    EXCHANGEABLE,
    SATURATED,
    EffectiveAssignment,
    enumerate_assignments,
    n_assignments,
    observed_assignment,
)
from .dataset import GroupedDataset, dataset_from_matrices
from .design import DesignEntry, DesignReport, InfeasibleDesignError, compare_designs, required_groups
from .errors import (
    ConfigError,
    DataValidationError,
    IncompleteCellsError,
    InvalidGroupSizeError,
    MissingOrderingError,
    SingularDesignError,
    SpilloverError,
    StratificationRequiredError,
    UnsupportedMechanismError,
)
from .estimators import (
    CellEffects,
    CellMeanEstimator,
    CellTable,
    DifferenceInMeans,
    EffectEstimate,
    LinearInMeans,
    PartialPopulationEstimator,
    PooledSpillover,
    build_cell_table,
    difference_in_means,
    direct_and_spillover,
    least_squares,
    lim_fit,
    partial_population_effect,
    pooled_spillover,
    saturated_fit,
    stratify_and_estimate,
)
from .harness import (
    ReplicationResult,
    StudyConfig,
    StudySummary,
    coverage_curve,
    run_replication,
    run_study,
    simulate_dataset,
)
from .inference import (
    BootstrapResult,
    BootstrapSpec,
    CellContrast,
    ConfidenceInterval,
    ExchangeabilityResult,
    contrast_estimate,
    direct_contrast,
    exchangeability_test,
    normal_ci,
    spillover_contrast,
    wild_bootstrap_ci,
)
from .io import load_dataset, save_dataset
from .mechanisms import (
    AssignmentMechanism,
    ClusterRandom,
    PartialPopulation,
    RateDiagnostics,
    SimpleRandom,
    TwoStageFixedMargins,
    parse_mechanism,
    rate_diagnostics,
)
from .oracle import (
    OracleReport,
    lim_weights,
    oracle_report,
    population_count_cell_mean,
    population_difference_in_means,
    population_lim_slope,
    population_partial_population_effect,
    population_pooled_spillover,
    vector_weights_given_count,
)
from .outcomes import (
    BernoulliNoise,
    EffectVector,
    GaussianNoise,
    OutcomeModel,
    constant_spillover_model,
    effects_from_means,
    linear_spillover_model,
    model_from_config,
    table_model,
)

__all__ = [name for name in dir() if not name.startswith("_")]
