"""Load-balance efficiency, distribution-mapping policies, and the gated
rebalance decision.

Efficiency is the ratio of average to maximum per-rank cost; 1 means the
work is spread perfectly. Two policies propose new mappings: knapsack
(unconstrained greedy assignment with a per-rank box cap, refined by
pairwise swaps) and SFC (contiguous segments of the Morton curve). A
proposed mapping is adopted only when it beats the current efficiency by
the configured improvement threshold, because adopting means paying for
redistribution.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .cost import CostVector
from .decomposition import DistributionMapping
from .errors import ConfigError


class Strategy(enum.Enum):
    KNAPSACK = "knapsack"
    SFC = "sfc"


@dataclass(frozen=True)
class BalancePolicy:
    """When to attempt a rebalance and which mapping policy to propose.

    Periodic attempts run at steps 0, interval, 2*interval, ...; an interval
    larger than the run length disables them, which is how a run without
    load balancing is configured. ``static_step``, when set, forces a single
    attempt at that step regardless of the interval (static load balancing =
    oversized interval + one forced early attempt).
    """

    strategy: Strategy = Strategy.KNAPSACK
    interval: int = 10
    improvement_threshold: float = 0.10
    knapsack_cap_factor: float = 1.5
    threshold_mode: str = "relative"
    static_step: int | None = None

    def __post_init__(self):
        if self.interval < 1:
            raise ConfigError(f"interval must be >= 1, got {self.interval}")
        if self.improvement_threshold < 0:
            raise ConfigError("improvement_threshold must be >= 0")
        if self.knapsack_cap_factor < 1:
            raise ConfigError("knapsack_cap_factor must be >= 1")
        if self.threshold_mode not in ("relative", "absolute"):
            raise ConfigError(
                f"threshold_mode must be 'relative' or 'absolute', "
                f"got {self.threshold_mode!r}")


@dataclass(frozen=True)
class BalanceOutcome:
    """Result of one rebalance attempt (or of a step gated by the interval)."""

    proposed: DistributionMapping
    efficiency_current: float
    efficiency_proposed: float
    adopted: bool
    attempted: bool = True


def rank_loads(costs: CostVector, dm: DistributionMapping) -> np.ndarray:
    """Per-rank cost: sum of the costs of owned boxes, in rank order."""
    if costs.n_boxes != dm.n_boxes:
        raise ValueError(
            f"cost vector length {costs.n_boxes} does not match mapping "
            f"length {dm.n_boxes}")
    return np.bincount(dm.owner, weights=costs.values, minlength=dm.n_ranks)


def efficiency_flagged(costs: CostVector,
                       dm: DistributionMapping) -> tuple[float, bool]:
    """Load-balance efficiency plus a degenerate-input flag.

    All-zero costs make the ratio undefined; that case is reported as a
    perfectly balanced 1.0 with the flag set.
    """
    loads = rank_loads(costs, dm)
    c_max = loads.max()
    if c_max == 0.0:
        return 1.0, True
    return float(loads.mean() / c_max), False


def efficiency(costs: CostVector, dm: DistributionMapping) -> float:
    """Average per-rank cost over maximum per-rank cost, in (0, 1]."""
    value, _ = efficiency_flagged(costs, dm)
    return value


def knapsack_assign(costs: CostVector, n_ranks: int,
                    cap_factor: float = 1.5) -> DistributionMapping:
    """Spread box costs over ranks as equally as possible, ignoring locality.

    Greedy longest-processing-time pass (boxes by descending cost, each to
    the least-loaded rank that still has box capacity), then pairwise swaps
    until no swap lowers the maximum rank load. The per-rank box cap is
    ceil(cap_factor * boxes / ranks). Fully deterministic: cost ties resolve
    to the lower box id, load ties to the lower rank id.
    """
    if n_ranks < 1:
        raise ValueError(f"n_ranks must be >= 1, got {n_ranks}")
    values = costs.values
    n = values.size
    cap = math.ceil(cap_factor * n / n_ranks) if n else 0
    if cap * n_ranks < n:
        raise ValueError(
            f"box cap {cap} per rank cannot place {n} boxes on {n_ranks} "
            f"ranks (cap_factor {cap_factor} too tight)")

    order = np.lexsort((np.arange(n), -values))
    owner = np.empty(n, dtype=np.int64)
    loads = np.zeros(n_ranks, dtype=np.float64)
    counts = np.zeros(n_ranks, dtype=np.int64)
    for b in order:
        masked = np.where(counts < cap, loads, np.inf)
        r = int(np.argmin(masked))
        owner[b] = r
        loads[r] += values[b]
        counts[r] += 1

    _refine_by_swaps(owner, loads, values, n_ranks)
    return DistributionMapping(owner=owner, n_ranks=n_ranks)


def _refine_by_swaps(owner: np.ndarray, loads: np.ndarray,
                     values: np.ndarray, n_ranks: int) -> None:
    """Swap box pairs between ranks while doing so lowers the max load.

    Only swaps involving the unique most-loaded rank can lower the global
    maximum, so the search stops as soon as the maximum is shared. Swaps
    exchange one box for one box and therefore never violate the box cap.
    Best improvement wins; ties go to the lower box id on the loaded rank,
    then the lower box id on the partner.
    """
    if n_ranks < 2 or values.size < 2:
        return
    while True:
        load_max = loads.max()
        maxed = np.flatnonzero(loads == load_max)
        if maxed.size != 1:
            return
        r_max = int(maxed[0])
        mine = np.flatnonzero(owner == r_max)
        others = np.flatnonzero(owner != r_max)
        if mine.size == 0 or others.size == 0:
            return
        other_loads = loads[owner[others]]
        best = None
        for a in mine:
            ca = values[a]
            new_here = load_max - ca + values[others]
            new_there = other_loads - values[others] + ca
            pair_max = np.maximum(new_here, new_there)
            improving = np.flatnonzero(pair_max < load_max)
            if improving.size == 0:
                continue
            j = improving[np.argmin(pair_max[improving])]
            cand = (float(pair_max[j]), int(a), int(others[j]))
            if best is None or cand[0] < best[0]:
                best = cand
        if best is None:
            return
        _, a, b = best
        r_b = int(owner[b])
        loads[r_max] += values[b] - values[a]
        loads[r_b] += values[a] - values[b]
        owner[a], owner[b] = r_b, r_max


def sfc_assign(costs: CostVector, curve, n_ranks: int) -> DistributionMapping:
    """Split the space-filling curve into contiguous per-rank segments.

    Greedy prefix accumulation against the fixed target total/n_ranks: a
    segment closes when taking the next box would land its sum further from
    the target than stopping here, subject to leaving at least one box for
    every remaining rank. The last rank takes whatever is left.
    """
    if n_ranks < 1:
        raise ValueError(f"n_ranks must be >= 1, got {n_ranks}")
    curve = np.asarray(curve, dtype=np.int64)
    n = curve.size
    if n == 0:
        raise ValueError("cannot partition an empty cost vector")
    if not np.array_equal(np.sort(curve), np.arange(n)):
        raise ValueError("curve must be a permutation of box indices")
    along = costs.values[curve]
    target = along.sum() / n_ranks
    owner = np.empty(n, dtype=np.int64)
    i = 0
    for r in range(n_ranks):
        if i == n:
            break
        if r == n_ranks - 1:
            owner[curve[i:]] = r
            break
        start = i
        seg = along[i]
        i += 1
        reserve = n_ranks - r - 1  # boxes that must remain for later ranks
        while i < n - reserve:
            nxt = along[i]
            if abs(seg + nxt - target) > abs(seg - target):
                break
            seg += nxt
            i += 1
        owner[curve[start:i]] = r
    return DistributionMapping(owner=owner, n_ranks=n_ranks)


def sfc_assign_optimal(costs: CostVector, curve,
                       n_ranks: int) -> DistributionMapping:
    """Exact minimum-max contiguous split of the curve (dynamic program).

    Reference mode for validating the greedy split; O(ranks * boxes^2) with
    vectorized inner minimization, fine at laboratory scale.
    """
    curve = np.asarray(curve, dtype=np.int64)
    n = curve.size
    if n == 0:
        raise ValueError("cannot partition an empty cost vector")
    r_eff = min(n_ranks, n)
    prefix = np.concatenate(([0.0], np.cumsum(costs.values[curve])))
    # best[i] = minimal max segment sum splitting the first i boxes into the
    # current number of segments; cut[k][i] remembers the split point.
    best = prefix[1:].copy()
    cuts = np.zeros((r_eff, n + 1), dtype=np.int64)
    for k in range(1, r_eff):
        new = np.empty(n)
        for i in range(k + 1, n + 1):
            j = np.arange(k, i)
            cand = np.maximum(best[j - 1], prefix[i] - prefix[j])
            jj = int(np.argmin(cand))
            new[i - 1] = cand[jj]
            cuts[k][i] = j[jj]
        new[: k] = np.inf
        best = new
    owner = np.empty(n, dtype=np.int64)
    end = n
    for k in range(r_eff - 1, -1, -1):
        start = cuts[k][end] if k else 0
        owner[curve[start:end]] = k
        end = start
    return DistributionMapping(owner=owner, n_ranks=n_ranks)


def attempt_rebalance(costs: CostVector, current: DistributionMapping,
                      policy: BalancePolicy, step: int, *,
                      curve=None, force: bool = False) -> BalanceOutcome:
    """One pass of the dynamic load balancing routine at a given step.

    Steps off the interval grid return immediately with the current mapping
    and its efficiency. Otherwise the policy's mapping is proposed and
    adopted only when its efficiency meets the improvement threshold
    (relative by default: E_prop >= E_cur * (1 + threshold)); a proposal is
    never adopted if it is worse than the current mapping. ``force``
    bypasses the interval gate for a forced static attempt.
    """
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    e_cur, _ = efficiency_flagged(costs, current)
    if not force and step % policy.interval != 0:
        return BalanceOutcome(proposed=current, efficiency_current=e_cur,
                              efficiency_proposed=e_cur, adopted=False,
                              attempted=False)
    if policy.strategy is Strategy.KNAPSACK:
        proposed = knapsack_assign(costs, current.n_ranks,
                                   policy.knapsack_cap_factor)
    else:
        if curve is None:
            raise ValueError("sfc strategy requires the morton curve")
        proposed = sfc_assign(costs, curve, current.n_ranks)
    e_prop, _ = efficiency_flagged(costs, proposed)
    if policy.threshold_mode == "relative":
        required = e_cur * (1.0 + policy.improvement_threshold)
    else:
        required = e_cur + policy.improvement_threshold
    adopted = bool(e_prop >= required and e_prop >= e_cur)
    return BalanceOutcome(proposed=proposed, efficiency_current=e_cur,
                          efficiency_proposed=e_prop, adopted=adopted,
                          attempted=True)


def periodic_enabled(policy: BalancePolicy, total_steps: int) -> bool:
    """Whether periodic attempts are active for a run of this length."""
    return policy.interval <= total_steps


def should_attempt(policy: BalancePolicy, step: int, total_steps: int) -> bool:
    """Scheduling used by the stepping loop and by trace replay."""
    if policy.static_step is not None and step == policy.static_step:
        return True
    return periodic_enabled(policy, total_steps) and step % policy.interval == 0
