"""lbsim: a desk-scale laboratory for dynamic load balancing of
block-decomposed particle-mesh workloads.

The package simulates, deterministically and without any real parallel
hardware, the load-balancing loop of a distributed particle-mesh code:
a fixed box tiling of the domain, per-box cost assessment (heuristic or
simulated on-device timers), knapsack and space-filling-curve mapping
policies behind a gated adoption rule, a modeled walltime with
communication / gather / redistribution terms, per-rank memory capacity
with early termination, and a strong-scaling model that predicts the
maximum speedup balancing can deliver.
"""

from .balancer import (BalanceOutcome, BalancePolicy, Strategy,
                       attempt_rebalance, efficiency, efficiency_flagged,
                       knapsack_assign, sfc_assign, sfc_assign_optimal)
from .cost import (CostVector, HeuristicWeights, MeasurementConfig,
                   WEIGHT_PRESETS, gather_costs, heuristic_cost,
                   make_provider, measured_cost)
from .decomposition import (Box, BoxArray, DistributionMapping,
                            build_box_array, morton_index, morton_order,
                            rank_box_counts)
from .errors import ConfigError
from .kernels import BACKEND as KERNEL_BACKEND
from .perfmodel import (EXPONENT_PRESETS, ScalingModel, achieved_fraction,
                        fit_scaling, max_speedup)
from .scenarios import RunSpec, apply_overrides, load_spec
from .workload import (BlobSpec, CostModel, KickSpec, RunResult,
                       ScenarioConfig, StepMetrics, WorkloadState, advance,
                       init_scenario, run_simulation, step_walltime,
                       true_work)

__version__ = "0.1.0"
