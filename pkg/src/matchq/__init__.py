"""Simulation and numerical analysis of multi-category matching queues
with perishable components, their diffusion scaling, and the coupled
reflected limit process.

Layers
  params       parameter containers and the heavy-traffic regime family
  simulate     exact event-driven simulation (compiled core with a pure
               Python fallback)
  events       event logs, step paths, exact structural invariants
  ctmc         truncated-generator transient distributions (oracle)
  scaling      diffusion-scaled path bundles from event logs
  limits       grid solvers for the coupled limit equation
  diagnostics  virtual waits, Little's-law gap, discounted costs
  experiments  batch experiment runner and artifacts
  cli          command-line interface (`matchq`)
"""

from ._version import __version__
from .ctmc import (
    CapacityError,
    TruncatedCTMC,
    build_truncated_ctmc,
    empirical_distribution,
    total_variation,
    transient_distribution,
)
from .diagnostics import (
    AllCensoredError,
    ConvergenceReport,
    CostEstimate,
    CostSpec,
    StreamingMoments,
    VirtualWaitSeries,
    convergence_study,
    cost_limit,
    cost_prelimit,
    default_sample_times,
    gamma_feasible,
    littles_law_gap,
    littles_law_gaps,
    replay_balance_errors,
    virtual_wait_replay,
)
from .events import (
    ABANDONMENT,
    ARRIVAL,
    MATCH,
    EventLog,
    InvariantError,
    StepPaths,
    queue_step_paths,
    recompute_R,
    verify_invariants,
)
from .limits import (
    ConfigurationError,
    ConvergenceError,
    LimitPath,
    NoiseDraws,
    SemimartingaleReport,
    coarsen,
    contraction_blocks,
    contraction_factor,
    noise_draws,
    semimartingale_decomposition,
    solve_explicit,
    solve_explicit_many,
    solve_fixed_point,
    solve_no_abandonment,
    tolerance_zero,
    verify_limit_invariants,
)
from .params import (
    LimitParams,
    ParameterError,
    RegimeFamily,
    SystemParams,
    limit_of,
    make_regime_member,
)
from .rng import derive_seed, generator_for, map_replications, replication_seeds
from .scaling import ScaledPathBundle, occupation_at_zero, scale, sup_norm
from .simulate import available_backends, default_backend, simulate

__all__ = [
    "__version__",
    "ABANDONMENT",
    "ARRIVAL",
    "MATCH",
    "AllCensoredError",
    "CapacityError",
    "ConfigurationError",
    "ConvergenceError",
    "ConvergenceReport",
    "CostEstimate",
    "CostSpec",
    "EventLog",
    "InvariantError",
    "LimitParams",
    "LimitPath",
    "NoiseDraws",
    "ParameterError",
    "RegimeFamily",
    "ScaledPathBundle",
    "SemimartingaleReport",
    "StepPaths",
    "StreamingMoments",
    "SystemParams",
    "TruncatedCTMC",
    "VirtualWaitSeries",
    "available_backends",
    "build_truncated_ctmc",
    "coarsen",
    "contraction_blocks",
    "contraction_factor",
    "convergence_study",
    "cost_limit",
    "cost_prelimit",
    "default_backend",
    "default_sample_times",
    "derive_seed",
    "empirical_distribution",
    "gamma_feasible",
    "generator_for",
    "limit_of",
    "littles_law_gap",
    "littles_law_gaps",
    "make_regime_member",
    "map_replications",
    "noise_draws",
    "occupation_at_zero",
    "queue_step_paths",
    "recompute_R",
    "replay_balance_errors",
    "replication_seeds",
    "scale",
    "semimartingale_decomposition",
    "simulate",
    "solve_explicit",
    "solve_explicit_many",
    "solve_fixed_point",
    "solve_no_abandonment",
    "sup_norm",
    "tolerance_zero",
    "total_variation",
    "transient_distribution",
    "verify_invariants",
    "verify_limit_invariants",
]
