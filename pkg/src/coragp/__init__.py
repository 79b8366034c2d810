"""Cooperative correlation-aware GP learning for distributed tracking control
of Euler-Lagrange multi-agent systems under semi-Markov switching topologies."""

__version__ = "0.1.0"

from .aggregation import (  # noqa: F401
    AggregationMode,
    AggregationSettings,
    BoundParams,
    WeightVector,
    aggregate_mean,
    cgp_weights,
    cora_weights,
    correlation_avg,
    correlation_top,
    error_bound,
)
from .backend import BACKEND_NAME, COMPILED  # noqa: F401
from .config import SimConfig, load_config  # noqa: F401
from .control import BoundReport, ControlGains, control_input, sync_error, theorem1_check  # noqa: F401
from .dynamics import ELParams, LeaderTrajectory, forward_dynamics, unknown_f  # noqa: F401
from .gp import GPModel, KernelParams, Prediction, fit, kernel_eval, kernel_vector  # noqa: F401
from .sim import bench_weights, generate_training_data, monte_carlo, run  # noqa: F401
from .topology import (  # noqa: F401
    Digraph,
    SemiMarkovSwitcher,
    TopologyEnsemble,
    follower_laplacian,
    has_leader_rooted_spanning_tree,
    is_irreducible,
)
