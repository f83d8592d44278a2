"""Time-evolving particle-mesh surrogate workload and the modeled run loop.

A dense circular blob of particles (uniform core, exponential skirt) sits
in a 2D cell domain. At a configured step every particle gets an outward
radial velocity plus an axial drift; afterwards the blob expands into a
ring and drifts, which drags the spatial cost profile across the box
tiling. That is the only physics: enough to exercise the balancer the way
a real particle-mesh run would, with none of the field solve.

The walltime model charges, per step: the maximum per-rank compute sum,
the maximum per-rank off-rank face count times a per-face cost, a flat
gather cost on rebalance-attempt steps, and (on adoption) a redistribution
cost proportional to the particles that changed owner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .balancer import (BalanceOutcome, BalancePolicy, attempt_rebalance,
                       efficiency_flagged, should_attempt)
from .cost import CostProvider, CostVector
from .decomposition import (BoxArray, DistributionMapping, build_box_array,
                            morton_order, round_robin_mapping, slab_mapping)
from .errors import ConfigError

# Acceptance probability below exp(-_SKIRT_CUTOFF) is treated as zero when
# choosing candidate cells for blob sampling.
_SKIRT_CUTOFF = 12.0

_SEED_INIT = 1
_SEED_KICK = 2


@dataclass(frozen=True)
class BlobSpec:
    """Initial particle blob: uniform core, exponential skirt."""

    center: tuple[float, float]
    core_radius: float
    edge_scale: float
    particles_per_cell: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(self.center))
        if self.core_radius < 0 or self.edge_scale < 0:
            raise ConfigError("blob radii must be nonnegative")
        if self.particles_per_cell < 0:
            raise ConfigError("blob particles_per_cell must be nonnegative")


@dataclass(frozen=True)
class KickSpec:
    """Outward radial kick plus axial (z) drift applied at one step."""

    step: int
    speed: float
    drift: float = 0.0

    def __post_init__(self):
        if self.step < 0:
            raise ConfigError("kick step must be nonnegative")
        if self.speed < 0:
            raise ConfigError("kick speed must be nonnegative")


@dataclass(frozen=True)
class CostModel:
    """Walltime model coefficients, in work units."""

    comm_per_face: float
    gather: float
    redistribute_per_particle: float
    redistribute_latency: float

    def __post_init__(self):
        for name in ("comm_per_face", "gather", "redistribute_per_particle",
                     "redistribute_latency"):
            if getattr(self, name) < 0:
                raise ConfigError(f"cost model field {name} must be >= 0")


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything that defines one deterministic scenario run."""

    scenario_id: str
    domain_extent: tuple[int, int]
    box_size: int
    n_ranks: int
    blob: BlobSpec
    kick: KickSpec
    total_steps: int
    compute_fraction: float = 0.5
    work_weights: tuple[float, float] = (0.75, 0.25)
    costs: CostModel | None = None
    capacity_particles: int | None = None
    initial_mapping: str = "slab"
    seed: int = 1

    def __post_init__(self):
        # Coerce sequence fields so configs stay hashable (resolve_costs
        # memoizes on the config).
        object.__setattr__(self, "domain_extent", tuple(self.domain_extent))
        object.__setattr__(self, "work_weights", tuple(self.work_weights))
        if self.total_steps < 1:
            raise ConfigError("total_steps must be >= 1")
        if not 0.0 < self.compute_fraction <= 1.0:
            raise ConfigError("compute_fraction must be in (0, 1]")
        if self.n_ranks < 1:
            raise ConfigError("n_ranks must be >= 1")
        if self.work_weights[0] < 0 or self.work_weights[1] < 0:
            raise ConfigError("work weights must be nonnegative")
        if self.initial_mapping not in ("slab", "roundrobin", "knapsack", "sfc"):
            raise ConfigError(
                f"initial_mapping must be slab, roundrobin, knapsack, or sfc; "
                f"got {self.initial_mapping!r}")
        if (self.capacity_particles is not None
                and self.capacity_particles < 1):
            raise ConfigError("capacity_particles must be >= 1 when set")


@dataclass(frozen=True)
class WorkloadState:
    """Particle ensemble at one step; per-box counts are kept in sync."""

    positions: np.ndarray
    velocities: np.ndarray
    step: int
    per_box_particles: np.ndarray

    def __post_init__(self):
        for name in ("positions", "velocities", "per_box_particles"):
            arr = np.ascontiguousarray(getattr(self, name))
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n_particles(self) -> int:
        return int(self.positions.shape[0])


@dataclass(frozen=True)
class StepMetrics:
    """Per-step record; walltime is the exact sum of its four components."""

    step: int
    efficiency_before: float
    efficiency_after: float
    adopted: bool
    compute_max: float
    comm_max: float
    gather: float
    redistribute: float
    walltime: float
    max_rank_particles: int
    oom: bool


@dataclass
class RunResult:
    """Everything a run produces: metrics, summary, and replayable traces."""

    metrics: list[StepMetrics]
    summary: dict
    cost_trace: np.ndarray
    initial_owner: np.ndarray
    adoption_snapshots: list[tuple[int, np.ndarray]]


def box_array_for(cfg: ScenarioConfig) -> BoxArray:
    return build_box_array(cfg.domain_extent, cfg.box_size)


@lru_cache(maxsize=64)
def resolve_costs(cfg: ScenarioConfig) -> CostModel:
    """The scenario's cost model; derived from its geometry when not given.

    Derived defaults are pinned to an estimate of the balanced step
    walltime W so that, near perfect balance: communication is about
    compute * (1 - f) / f (f = compute fraction); one cost gather is about
    2.5% of a step (so gathering every step stays in the few-percent
    range); and redistributing every particle once costs 3 W plus a
    0.05 W latency, keeping redistribution the dominant cost of an
    adopted rebalance.
    """
    if cfg.costs is not None:
        return cfg.costs
    n_cells = cfg.domain_extent[0] * cfg.domain_extent[1]
    r, scale = cfg.blob.core_radius, cfg.blob.edge_scale
    est_particles = cfg.blob.particles_per_cell * (
        math.pi * r * r + 2.0 * math.pi * r * scale)
    w_p, w_c = cfg.work_weights
    est_total_work = w_p * est_particles + w_c * n_cells
    c_avg = est_total_work / cfg.n_ranks
    w_est = c_avg / cfg.compute_fraction
    nbz = cfg.domain_extent[0] // cfg.box_size
    nbx = cfg.domain_extent[1] // cfg.box_size
    n_faces = 2 * nbz * nbx - nbz - nbx
    # Scattered balanced mapping: nearly every face is off-rank and each
    # face is charged to both of its ranks.
    est_faces_per_rank = max(
        2.0 * n_faces / cfg.n_ranks * (1.0 - 1.0 / cfg.n_ranks), 1.0)
    comm_budget = c_avg * (1.0 - cfg.compute_fraction) / cfg.compute_fraction
    return CostModel(
        comm_per_face=comm_budget / est_faces_per_rank,
        gather=0.025 * w_est,
        redistribute_per_particle=3.0 * w_est / max(est_particles, 1.0),
        redistribute_latency=0.05 * w_est,
    )


def init_scenario(cfg: ScenarioConfig) -> WorkloadState:
    """Sample the initial blob deterministically from the scenario seed.

    Every cell whose center lies within reach of the blob contributes
    particles_per_cell candidates (fractional part resolved by a Bernoulli
    draw), placed uniformly inside the cell; a candidate at radius rho
    survives with probability 1 inside the core and exp(-(rho - core)/scale)
    beyond it.
    """
    nz, nx = cfg.domain_extent
    blob = cfg.blob
    reach = blob.core_radius + _SKIRT_CUTOFF * blob.edge_scale + 1.0
    iz, ix = np.meshgrid(np.arange(nz), np.arange(nx), indexing="ij")
    iz = iz.ravel()
    ix = ix.ravel()
    center_dist = np.hypot(iz + 0.5 - blob.center[0], ix + 0.5 - blob.center[1])
    cand = center_dist <= reach
    iz, ix = iz[cand], ix[cand]
    if iz.size == 0 or blob.particles_per_cell == 0:
        raise ConfigError("scenario produces zero particles; "
                          "check blob radius and particles_per_cell")

    rng = np.random.default_rng((int(cfg.seed), _SEED_INIT))
    base = int(math.floor(blob.particles_per_cell))
    frac = blob.particles_per_cell - base
    counts = np.full(iz.size, base, dtype=np.int64)
    if frac > 0.0:
        counts += rng.random(iz.size) < frac
    total = int(counts.sum())
    if total == 0:
        raise ConfigError("scenario produces zero particles; "
                          "check blob radius and particles_per_cell")
    origin_z = np.repeat(iz, counts).astype(np.float64)
    origin_x = np.repeat(ix, counts).astype(np.float64)
    offsets = rng.random((total, 2))
    pos = np.column_stack((origin_z + offsets[:, 0], origin_x + offsets[:, 1]))
    rho = np.hypot(pos[:, 0] - blob.center[0], pos[:, 1] - blob.center[1])
    if blob.edge_scale > 0.0:
        accept = np.where(rho <= blob.core_radius, 1.0,
                          np.exp(-(rho - blob.core_radius) / blob.edge_scale))
    else:
        accept = (rho <= blob.core_radius).astype(np.float64)
    keep = rng.random(total) < accept
    positions = np.ascontiguousarray(pos[keep])
    if positions.shape[0] == 0:
        raise ConfigError("scenario produces zero particles; "
                          "check blob radius and particles_per_cell")
    velocities = np.zeros_like(positions)
    nbz, nbx = nz // cfg.box_size, nx // cfg.box_size
    per_box = kernels.bin_particles(positions, float(cfg.box_size), nbz, nbx)
    return WorkloadState(positions=positions, velocities=velocities, step=0,
                         per_box_particles=per_box)


def _kick_velocities(state: WorkloadState, cfg: ScenarioConfig) -> np.ndarray:
    """Outward radial velocities (seeded per-particle speed factor) + drift."""
    rng = np.random.default_rng((int(cfg.seed), _SEED_KICK))
    factor = rng.uniform(0.5, 1.5, size=state.n_particles)
    dz = state.positions[:, 0] - cfg.blob.center[0]
    dx = state.positions[:, 1] - cfg.blob.center[1]
    rho = np.hypot(dz, dx)
    uz = np.divide(dz, rho, out=np.zeros_like(dz), where=rho > 0)
    ux = np.divide(dx, rho, out=np.zeros_like(dx), where=rho > 0)
    speed = cfg.kick.speed * factor
    vel = np.column_stack((speed * uz + cfg.kick.drift, speed * ux))
    return np.ascontiguousarray(vel)


def advance(state: WorkloadState, cfg: ScenarioConfig) -> WorkloadState:
    """One step: apply the kick when due, move, absorb, recount."""
    if state.step >= cfg.total_steps:
        raise ValueError(f"cannot advance past total_steps={cfg.total_steps}")
    vel = state.velocities
    if state.step == cfg.kick.step:
        vel = _kick_velocities(state, cfg)
    positions, velocities = kernels.advance_particles(
        state.positions, vel, float(cfg.domain_extent[0]),
        float(cfg.domain_extent[1]))
    nbz = cfg.domain_extent[0] // cfg.box_size
    nbx = cfg.domain_extent[1] // cfg.box_size
    per_box = kernels.bin_particles(positions, float(cfg.box_size), nbz, nbx)
    return WorkloadState(positions=positions, velocities=velocities,
                         step=state.step + 1, per_box_particles=per_box)


def true_work(state: WorkloadState, cfg: ScenarioConfig) -> np.ndarray:
    """Ground-truth per-box work from the scenario's own weights.

    Deliberately separate from whatever weights the balancer's heuristic
    uses, so miscalibrated heuristics can be studied.
    """
    w_p, w_c = cfg.work_weights
    cells = float(cfg.box_size * cfg.box_size)
    return w_p * state.per_box_particles.astype(np.float64) + w_c * cells


def step_walltime(rank_compute: np.ndarray, dm: DistributionMapping,
                  ba: BoxArray, outcome: BalanceOutcome,
                  prev_dm: DistributionMapping, state: WorkloadState,
                  cfg: ScenarioConfig, *, overhead: float = 1.0,
                  faces: tuple[np.ndarray, np.ndarray] | None = None
                  ) -> StepMetrics:
    """Assemble one step's StepMetrics from the walltime model."""
    model = resolve_costs(cfg)
    compute_max = float(np.max(rank_compute))

    a, b = faces if faces is not None else ba.interior_faces()
    off = dm.owner[a] != dm.owner[b]
    per_rank_faces = (np.bincount(dm.owner[a][off], minlength=dm.n_ranks)
                      + np.bincount(dm.owner[b][off], minlength=dm.n_ranks))
    comm_max = float(per_rank_faces.max()) * model.comm_per_face

    gather = model.gather if outcome.attempted else 0.0

    redistribute = 0.0
    if outcome.adopted:
        changed = dm.owner != prev_dm.owner
        moved = int(state.per_box_particles[changed].sum())
        redistribute = (model.redistribute_latency
                        + model.redistribute_per_particle * moved)

    occupancy = np.bincount(dm.owner, weights=state.per_box_particles,
                            minlength=dm.n_ranks)
    max_rank_particles = int(occupancy.max())
    oom = (cfg.capacity_particles is not None
           and max_rank_particles > cfg.capacity_particles)

    compute_max *= overhead
    comm_max *= overhead
    gather *= overhead
    redistribute *= overhead
    eff_after = (outcome.efficiency_proposed if outcome.adopted
                 else outcome.efficiency_current)
    return StepMetrics(
        step=state.step - 1,
        efficiency_before=outcome.efficiency_current,
        efficiency_after=eff_after,
        adopted=outcome.adopted,
        compute_max=compute_max,
        comm_max=comm_max,
        gather=gather,
        redistribute=redistribute,
        walltime=compute_max + comm_max + gather + redistribute,
        max_rank_particles=max_rank_particles,
        oom=oom,
    )


def initial_mapping(cfg: ScenarioConfig, ba: BoxArray,
                    state: WorkloadState) -> DistributionMapping:
    """Mapping the run starts from, before any balancing."""
    from .balancer import knapsack_assign, sfc_assign

    if cfg.initial_mapping == "slab":
        return slab_mapping(ba, cfg.n_ranks)
    if cfg.initial_mapping == "roundrobin":
        return round_robin_mapping(ba, cfg.n_ranks)
    work = CostVector(values=true_work(state, cfg), step=0)
    if cfg.initial_mapping == "knapsack":
        return knapsack_assign(work, cfg.n_ranks)
    return sfc_assign(work, morton_order(ba), cfg.n_ranks)


def policy_kind(policy: BalancePolicy, total_steps: int) -> str:
    """none / static / dynamic, as scheduling works out for this run."""
    if policy.interval <= total_steps:
        return "dynamic"
    return "static" if policy.static_step is not None else "none"


def run_simulation(cfg: ScenarioConfig, policy: BalancePolicy,
                   provider: CostProvider) -> RunResult:
    """Advance, assess costs, attempt rebalance, and price each step.

    Halts early with OOM status when any rank's particle occupancy exceeds
    the configured capacity; the summary then records the completed
    fraction of the run.
    """
    ba = box_array_for(cfg)
    curve = morton_order(ba)
    faces = ba.interior_faces()
    cells = ba.cells_vector()
    state = init_scenario(cfg)
    dm = initial_mapping(cfg, ba, state)
    initial_owner = dm.owner.copy()

    metrics: list[StepMetrics] = []
    trace = np.empty((cfg.total_steps, ba.n_boxes), dtype=np.float64)
    snapshots: list[tuple[int, np.ndarray]] = []
    adoption_count = 0
    attempt_count = 0
    oom = False

    for step in range(cfg.total_steps):
        state = advance(state, cfg)
        work = true_work(state, cfg)
        box_costs = provider.assess(state.per_box_particles, cells, work, step)
        trace[step] = box_costs.values

        if should_attempt(policy, step, cfg.total_steps):
            outcome = attempt_rebalance(box_costs, dm, policy, step,
                                        curve=curve, force=True)
            attempt_count += 1
        else:
            e_cur, _ = efficiency_flagged(box_costs, dm)
            outcome = BalanceOutcome(proposed=dm, efficiency_current=e_cur,
                                     efficiency_proposed=e_cur,
                                     adopted=False, attempted=False)
        prev_dm = dm
        if outcome.adopted:
            dm = outcome.proposed
            adoption_count += 1
            snapshots.append((step, dm.owner.copy()))

        rank_compute = np.bincount(dm.owner, weights=work,
                                   minlength=cfg.n_ranks)
        m = step_walltime(rank_compute, dm, ba, outcome, prev_dm, state, cfg,
                          overhead=provider.overhead_factor, faces=faces)
        metrics.append(m)
        if m.oom:
            oom = True
            break

    completed = len(metrics)
    eff_after = np.array([m.efficiency_after for m in metrics])
    summary = {
        "scenario_id": cfg.scenario_id,
        "n_ranks": cfg.n_ranks,
        "n_boxes": ba.n_boxes,
        "box_grid": list(ba.grid_shape),
        "seed": cfg.seed,
        "policy": policy_kind(policy, cfg.total_steps),
        "strategy": policy.strategy.value,
        "interval": policy.interval,
        "improvement_threshold": policy.improvement_threshold,
        "threshold_mode": policy.threshold_mode,
        "static_step": policy.static_step,
        "provider": provider.kind,
        "overhead_factor": provider.overhead_factor,
        "total_steps": cfg.total_steps,
        "completed_steps": completed,
        "completion_fraction": completed / cfg.total_steps,
        "total_walltime": float(sum(m.walltime for m in metrics)),
        "mean_efficiency": float(eff_after.mean()) if completed else 0.0,
        "adoption_count": adoption_count,
        "attempt_count": attempt_count,
        "oom": oom,
        "final_particles": state.n_particles,
    }
    return RunResult(metrics=metrics, summary=summary,
                     cost_trace=trace[:completed],
                     initial_owner=initial_owner,
                     adoption_snapshots=snapshots)
