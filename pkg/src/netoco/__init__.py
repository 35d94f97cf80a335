"""Networked online convex optimization with long-term constraints.

Simulation library and benchmark harness for units that share a time-varying
communication graph, run consensus primal-dual updates under full-information
or one-point bandit feedback, and are scored by system regret and cumulative
absolute constraint violation.
"""

from .algorithm import (
    HyperSchedule,
    RunTrajectory,
    make_schedule,
    one_point_estimator,
    project_ball,
    run_experiment,
    sample_unit_sphere,
)
from .bench import ScenarioConfig, list_presets, load_config, preset_config, run_suite
from .metrics import (
    BoundConstants,
    MetricSeries,
    averaged_metrics,
    bound_constants,
    cacv,
    checkpoint_grid,
    communication_cost,
    metric_series,
    offline_comparator,
    regret,
    sreg,
)
from .network import (
    Graph,
    TopologySchedule,
    WeightMatrix,
    consensus_mix,
    default_ring_6,
    max_degree_weights,
    product_deviation,
    schedule_from_graphs,
    validate_mixing,
    verify_window_connectivity,
)
from .problems import (
    BoxConstraintSet,
    ConstraintSet,
    LossOracle,
    RegressionExample,
    RegressionStream,
    clipped_subgradient,
    dataset_stream,
    parse_libsvm,
    regression_loss,
    serialize_libsvm,
    synthetic_stream,
)

__version__ = "0.1.0"
