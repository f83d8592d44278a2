"""Per-box cost assessment: heuristic weighted sums and simulated timers.

Three strategies are available to the balancer. The heuristic estimates
cost from particle and cell counts with user-tuned weights. The two
"measured" providers observe the true per-box work through multiplicative
jitter, standing in for on-device timers; they differ only in the walltime
overhead they charge for being active.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

# Named weight presets: the general-purpose default, and the cell-heavy
# tuning that emulates a per-rank box cap when partitioning along a
# space-filling curve.
WEIGHT_PRESETS: dict[str, tuple[float, float]] = {
    "default": (0.75, 0.25),
    "sfc": (0.02, 0.98),
}


@dataclass(frozen=True)
class CostVector:
    """Nonnegative per-box costs gathered at one timestep."""

    values: np.ndarray
    step: int = 0

    def __post_init__(self):
        values = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        if values.ndim != 1:
            raise ValueError("cost vector must be one-dimensional")
        if values.size and values.min() < 0:
            raise ValueError("cost entries must be nonnegative")

    @property
    def n_boxes(self) -> int:
        return int(self.values.size)

    @property
    def total(self) -> float:
        return float(self.values.sum())


@dataclass(frozen=True)
class HeuristicWeights:
    """Relative weights of a particle and a cell in the heuristic cost."""

    w_particle: float
    w_cell: float

    def __post_init__(self):
        if self.w_particle < 0 or self.w_cell < 0:
            raise ConfigError("heuristic weights must be nonnegative")
        if self.w_particle == 0 and self.w_cell == 0:
            raise ConfigError("heuristic weights must not both be zero")


@dataclass(frozen=True)
class MeasurementConfig:
    """Jitter and overhead of a simulated measured-cost provider."""

    noise_amplitude: float = 0.05
    overhead_factor: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.noise_amplitude < 1.0:
            raise ConfigError(
                f"noise_amplitude must be in [0, 1), got {self.noise_amplitude}")
        if self.overhead_factor < 1.0:
            raise ConfigError(
                f"overhead_factor must be >= 1, got {self.overhead_factor}")


def heuristic_cost(particles_per_box, cells_per_box, w: HeuristicWeights,
                   step: int = 0) -> CostVector:
    """cost_b = w_particle * particles_b + w_cell * cells_b."""
    particles = np.asarray(particles_per_box, dtype=np.float64)
    cells = np.asarray(cells_per_box, dtype=np.float64)
    if particles.shape != cells.shape:
        raise ValueError(
            f"particle vector length {particles.size} does not match "
            f"cell vector length {cells.size}")
    if (particles < 0).any() or (cells < 0).any():
        raise ValueError("counts must be nonnegative")
    return CostVector(values=w.w_particle * particles + w.w_cell * cells,
                      step=step)


def measured_cost(true_work, cfg: MeasurementConfig, step: int = 0) -> CostVector:
    """Noisy observation of true work: cost_b = work_b * (1 + eps_b).

    eps_b is i.i.d. uniform on [-noise_amplitude, +noise_amplitude], drawn
    from a stream keyed by (seed, step); repeated calls with the same key
    return the same vector, and the per-box draw is position b of that
    stream, so box evaluations may be parallelized without changing results.
    """
    work = np.asarray(true_work, dtype=np.float64)
    if work.size and work.min() < 0:
        raise ValueError("true work must be nonnegative")
    if cfg.noise_amplitude == 0.0:
        return CostVector(values=work.copy(), step=step)
    rng = np.random.default_rng((int(cfg.seed), 0x6D65_6173, int(step)))
    eps = rng.uniform(-cfg.noise_amplitude, cfg.noise_amplitude, size=work.size)
    return CostVector(values=work * (1.0 + eps), step=step)


def gather_costs(per_rank_partial_costs, step: int = 0) -> CostVector:
    """Reassemble a global cost vector from per-rank (box_id, cost) batches.

    Every box id must appear exactly once across all batches; the single
    process here plays the root of the gather.
    """
    entries: list[tuple[int, float]] = []
    for batch in per_rank_partial_costs:
        entries.extend((int(b), float(c)) for b, c in batch)
    if not entries:
        raise ValueError("no costs gathered")
    n = max(box_id for box_id, _ in entries) + 1
    values = np.zeros(n, dtype=np.float64)
    seen = np.zeros(n, dtype=bool)
    for box_id, c in entries:
        if box_id < 0:
            raise ValueError(f"negative box id {box_id} in gathered costs")
        if seen[box_id]:
            raise ValueError(f"duplicate box {box_id} in gathered costs")
        seen[box_id] = True
        values[box_id] = c
    if not seen.all():
        missing = int(np.flatnonzero(~seen)[0])
        raise ValueError(f"missing box {missing} in gathered costs")
    return CostVector(values=values, step=step)


def split_by_ownership(costs: CostVector, owner) -> list[list[tuple[int, float]]]:
    """Inverse of gather_costs: per-rank (box_id, cost) batches."""
    owner = np.asarray(owner)
    n_ranks = int(owner.max()) + 1 if owner.size else 0
    batches: list[list[tuple[int, float]]] = [[] for _ in range(n_ranks)]
    for box_id, c in enumerate(costs.values):
        batches[int(owner[box_id])].append((box_id, float(c)))
    return batches


class CostProvider:
    """Uniform interface the stepping loop uses to assess box costs."""

    kind = "base"
    overhead_factor = 1.0

    def assess(self, particles_per_box, cells_per_box, true_work,
               step: int) -> CostVector:
        raise NotImplementedError


class HeuristicProvider(CostProvider):
    """Weighted particle/cell count heuristic; no overhead, no noise."""

    kind = "heuristic"

    def __init__(self, weights: HeuristicWeights):
        self.weights = weights

    def assess(self, particles_per_box, cells_per_box, true_work,
               step: int) -> CostVector:
        return heuristic_cost(particles_per_box, cells_per_box, self.weights,
                              step=step)


class MeasuredProvider(CostProvider):
    """Simulated on-device timer: true work seen through jitter."""

    kind = "measured"

    def __init__(self, cfg: MeasurementConfig):
        self.cfg = cfg
        self.overhead_factor = cfg.overhead_factor

    def assess(self, particles_per_box, cells_per_box, true_work,
               step: int) -> CostVector:
        return measured_cost(true_work, self.cfg, step=step)


def make_provider(kind: str, *, weights: HeuristicWeights | None = None,
                  noise_amplitude: float = 0.05, seed: int = 0,
                  instrumented_overhead: float = 2.0) -> CostProvider:
    """Build one of the three named providers.

    "measured" models the low-overhead device-clock timer; "instrumented"
    models the profiling-interface timer, which is identical except for a
    2x walltime overhead while active.
    """
    if kind == "heuristic":
        if weights is None:
            weights = HeuristicWeights(*WEIGHT_PRESETS["default"])
        return HeuristicProvider(weights)
    if kind == "measured":
        return MeasuredProvider(MeasurementConfig(
            noise_amplitude=noise_amplitude, overhead_factor=1.0, seed=seed))
    if kind == "instrumented":
        provider = MeasuredProvider(MeasurementConfig(
            noise_amplitude=noise_amplitude,
            overhead_factor=instrumented_overhead, seed=seed))
        provider.kind = "instrumented"
        return provider
    raise ConfigError(f"unknown cost provider {kind!r}; "
                      "expected heuristic, measured, or instrumented")
