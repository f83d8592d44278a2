"""Scenario files: YAML schema, named presets, and CLI override handling.

A scenario file fully determines a run: domain tiling, blob and kick,
walltime-model coefficients (or "derived"), balance policy, and cost
provider. Units are cells and steps throughout; velocities are cells per
step, costs are work units. See the packaged files under
``lbsim/scenarios/`` for the reference schema.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, replace
from pathlib import Path

import yaml

from .balancer import BalancePolicy, Strategy
from .cost import WEIGHT_PRESETS, CostProvider, HeuristicWeights, make_provider
from .errors import ConfigError
from .workload import BlobSpec, CostModel, KickSpec, ScenarioConfig

PRESET_NAMES = ("default", "tight-memory", "mini")


@dataclass(frozen=True)
class RunSpec:
    """Scenario plus the policy and provider that drive it."""

    scenario: ScenarioConfig
    policy: BalancePolicy
    provider_kind: str = "heuristic"
    provider_weights: tuple[float, float] = WEIGHT_PRESETS["default"]
    provider_noise: float = 0.05
    instrumented_overhead: float = 2.0

    def build_provider(self) -> CostProvider:
        return make_provider(
            self.provider_kind,
            weights=HeuristicWeights(*self.provider_weights),
            noise_amplitude=self.provider_noise,
            seed=self.scenario.seed,
            instrumented_overhead=self.instrumented_overhead)


def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise ConfigError(f"missing field {context}{key}")
    return mapping[key]


def _pair(value, context: str) -> tuple:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(f"field {context} must be a pair, got {value!r}")
    return tuple(value)


def spec_from_dict(doc: dict) -> RunSpec:
    """Build a RunSpec from a parsed scenario document."""
    if not isinstance(doc, dict):
        raise ConfigError("scenario document must be a mapping")
    try:
        domain = _require(doc, "domain", "")
        extent = _pair(_require(domain, "extent", "domain."), "domain.extent")
        blob_doc = _require(doc, "blob", "")
        kick_doc = _require(doc, "kick", "")
        blob = BlobSpec(
            center=tuple(float(v) for v in _pair(
                _require(blob_doc, "center", "blob."), "blob.center")),
            core_radius=float(_require(blob_doc, "core_radius", "blob.")),
            edge_scale=float(blob_doc.get("edge_scale", 0.0)),
            particles_per_cell=float(
                _require(blob_doc, "particles_per_cell", "blob.")))
        kick = KickSpec(step=int(_require(kick_doc, "step", "kick.")),
                        speed=float(_require(kick_doc, "speed", "kick.")),
                        drift=float(kick_doc.get("drift", 0.0)))
        costs_doc = doc.get("costs")
        costs = None
        if costs_doc is not None:
            costs = CostModel(
                comm_per_face=float(_require(costs_doc, "comm_per_face", "costs.")),
                gather=float(_require(costs_doc, "gather", "costs.")),
                redistribute_per_particle=float(
                    _require(costs_doc, "redistribute_per_particle", "costs.")),
                redistribute_latency=float(
                    _require(costs_doc, "redistribute_latency", "costs.")))
        capacity = doc.get("capacity_particles")
        scenario = ScenarioConfig(
            scenario_id=str(_require(doc, "scenario_id", "")),
            domain_extent=(int(extent[0]), int(extent[1])),
            box_size=int(_require(domain, "box_size", "domain.")),
            n_ranks=int(_require(doc, "ranks", "")),
            blob=blob,
            kick=kick,
            total_steps=int(_require(doc, "steps", "")),
            compute_fraction=float(doc.get("compute_fraction", 0.5)),
            work_weights=tuple(float(v) for v in _pair(
                doc.get("work_weights", [0.75, 0.25]), "work_weights")),
            costs=costs,
            capacity_particles=None if capacity is None else int(capacity),
            initial_mapping=str(doc.get("initial_mapping", "slab")),
            seed=int(doc.get("seed", 1)))

        bal = doc.get("balance", {})
        static_step = bal.get("static_step")
        policy = BalancePolicy(
            strategy=Strategy(str(bal.get("strategy", "knapsack"))),
            interval=int(bal.get("interval", 10)),
            improvement_threshold=float(bal.get("threshold", 0.10)),
            knapsack_cap_factor=float(bal.get("cap_factor", 1.5)),
            threshold_mode=str(bal.get("threshold_mode", "relative")),
            static_step=None if static_step is None else int(static_step))

        prov = doc.get("provider", {})
        weights = prov.get("weights", "default")
        if isinstance(weights, str):
            if weights not in WEIGHT_PRESETS:
                raise ConfigError(
                    f"provider.weights preset {weights!r} unknown; "
                    f"options: {sorted(WEIGHT_PRESETS)}")
            weights = WEIGHT_PRESETS[weights]
        weights = tuple(float(v) for v in _pair(weights, "provider.weights"))
        return RunSpec(
            scenario=scenario,
            policy=policy,
            provider_kind=str(prov.get("kind", "heuristic")),
            provider_weights=weights,
            provider_noise=float(prov.get("noise", 0.05)),
            instrumented_overhead=float(prov.get("instrumented_overhead", 2.0)))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_spec(name_or_path: str) -> RunSpec:
    """Load a scenario by preset name or by YAML file path."""
    path = Path(name_or_path)
    if name_or_path in PRESET_NAMES:
        ref = importlib.resources.files("lbsim") / "scenarios" / f"{name_or_path}.yaml"
        text = ref.read_text()
    elif path.exists():
        text = path.read_text()
    else:
        raise ConfigError(
            f"scenario {name_or_path!r} is neither a preset "
            f"({', '.join(PRESET_NAMES)}) nor an existing file")
    doc = yaml.safe_load(text)
    return spec_from_dict(doc)


def apply_overrides(spec: RunSpec, *, policy: str | None = None,
                    interval: int | None = None,
                    threshold: float | None = None,
                    threshold_mode: str | None = None,
                    box_size: int | None = None,
                    cost: str | None = None,
                    weights: tuple[float, float] | None = None,
                    seed: int | None = None,
                    steps: int | None = None) -> RunSpec:
    """Apply CLI flag overrides on top of a loaded scenario."""
    scenario = spec.scenario
    pol = spec.policy
    if steps is not None:
        scenario = replace(scenario, total_steps=steps)
    if box_size is not None:
        scenario = replace(scenario, box_size=box_size)
    if seed is not None:
        scenario = replace(scenario, seed=seed)
    if interval is not None:
        pol = replace(pol, interval=interval)
    if threshold is not None:
        pol = replace(pol, improvement_threshold=threshold)
    if threshold_mode is not None:
        pol = replace(pol, threshold_mode=threshold_mode)
    if policy is not None:
        disabled = scenario.total_steps + 1
        if policy == "none":
            pol = replace(pol, interval=disabled, static_step=None)
        elif policy == "static":
            static_step = pol.static_step if pol.static_step is not None else 0
            pol = replace(pol, interval=disabled, static_step=static_step)
        elif policy in ("knapsack", "sfc"):
            pol = replace(pol, strategy=Strategy(policy), static_step=None)
            if pol.interval > scenario.total_steps:
                pol = replace(pol, interval=10)
        else:
            raise ConfigError(
                f"--policy must be none, static, knapsack, or sfc; "
                f"got {policy!r}")
    out = replace(spec, scenario=scenario, policy=pol)
    if cost is not None:
        if cost not in ("heuristic", "measured", "instrumented"):
            raise ConfigError(
                f"--cost must be heuristic, measured, or instrumented; "
                f"got {cost!r}")
        out = replace(out, provider_kind=cost)
    if weights is not None:
        out = replace(out, provider_weights=weights)
    return out
