"""idtrack: identity-aware multi-person tracking by label propagation.

Sparse identity labels (e.g. face recognitions) are propagated to all person
detections over appearance and spatial affinity graphs, under mutual-exclusion
and spatial-locality constraints enforced by a quadratic penalty schedule with
projected nonnegative gradient descent. The package also ships tracking metrics
(MOTA, identity-aware micro P/R/F1), a synthetic scene generator and rule-based
visual-diary summarization.
"""

__version__ = "0.1.0"

from .affinity import AffinityGraphs, build_graphs, exp_chi2, pair_velocity
from .model import (
    GroundTruth,
    Observation,
    ObservationSet,
    TrackerConfig,
    Trajectory,
    build_label_matrix,
    load_detections,
    load_ground_truth,
    load_trajectories,
    write_detections,
    write_ground_truth,
    write_trajectories,
)
from .solver import SolveTrace, estimate_class_sizes, initialize, solve
from .trajectories import (discretize, filter_sporadic, form_trajectories,
                           merge_per_frame, resolve_velocity_conflicts)
from .metrics import EvalCounts, EvalReport, evaluate, match_and_count, micro_prf, mota

__all__ = [
    "AffinityGraphs", "build_graphs", "exp_chi2", "pair_velocity",
    "GroundTruth", "Observation", "ObservationSet", "TrackerConfig", "Trajectory",
    "build_label_matrix", "load_detections", "load_ground_truth", "load_trajectories",
    "write_detections", "write_ground_truth", "write_trajectories",
    "SolveTrace", "estimate_class_sizes", "initialize", "solve",
    "discretize", "filter_sporadic", "form_trajectories", "merge_per_frame",
    "resolve_velocity_conflicts",
    "EvalCounts", "EvalReport", "evaluate", "match_and_count", "micro_prf", "mota",
    "__version__",
]
