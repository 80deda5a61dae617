"""Strict JSON configuration: parsing, validation, and round-trip serialization.

Unknown keys are rejected everywhere so a typo cannot silently fall back to a
default, and every domain invariant is revalidated after parsing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Optional

from .harness import (
    Direction,
    PerturbMode,
    PerturbationPlan,
    SweepPlan,
    WorkloadSpec,
)
from .schedulers import SchedulerKind
from .topology import RackTopology, TaskType
from .workload import ServiceDistribution, ServiceRates, service_distribution_from_config


class ConfigError(ValueError):
    """Configuration file is malformed or violates an invariant."""


@dataclass
class SweepSection:
    schedulers: list[SchedulerKind]
    loads: list[float]
    epsilons: list[float]
    modes: list[PerturbMode]
    directions: list[Direction]
    replications: int
    horizon: float
    warmup: float
    seed: int
    instability_threshold: Optional[float] = None

    def perturbations(self) -> list[PerturbationPlan]:
        return [
            PerturbationPlan(epsilon=e, direction=d, mode=m)
            for e in self.epsilons
            for d in self.directions
            for m in self.modes
        ]


@dataclass
class OutputSection:
    path: str = "results"
    format: str = "csv"


@dataclass
class ConfigFile:
    topology: RackTopology
    rates: ServiceRates
    workload: WorkloadSpec
    target_load: Optional[float]
    service: ServiceDistribution
    sweep: Optional[SweepSection]
    output: OutputSection

    def sweep_plan(self) -> SweepPlan:
        if self.sweep is None:
            raise ConfigError("config has no sweep section")
        s = self.sweep
        return SweepPlan(
            schedulers=s.schedulers,
            loads=s.loads,
            perturbations=s.perturbations(),
            replications=s.replications,
            topology=self.topology,
            rates=self.rates,
            workload=self.workload,
            service=self.service,
            horizon=s.horizon,
            warmup_fraction=s.warmup,
            instability_threshold=s.instability_threshold,
            master_seed=s.seed,
        )


def _require_keys(section: Mapping, allowed: set[str], required: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    missing = required - set(section)
    if missing:
        raise ConfigError(f"missing keys in {where}: {sorted(missing)}")


def _parse_topology(raw: Mapping) -> RackTopology:
    _require_keys(raw, {"num_servers", "rack_size", "locality_levels"},
                  {"num_servers", "rack_size"}, "topology")
    try:
        return RackTopology(
            num_servers=int(raw["num_servers"]),
            rack_size=int(raw["rack_size"]),
            locality_levels=int(raw.get("locality_levels", 3)),
        )
    except ValueError as exc:
        raise ConfigError(f"topology: {exc}") from exc


def _parse_rates(raw: Mapping) -> ServiceRates:
    _require_keys(raw, {"alpha", "beta", "gamma"}, {"alpha", "beta", "gamma"}, "rates")
    try:
        return ServiceRates(float(raw["alpha"]), float(raw["beta"]), float(raw["gamma"]))
    except ValueError as exc:
        raise ConfigError(f"rates: {exc}") from exc


def _parse_workload(raw: Mapping) -> tuple[WorkloadSpec, Optional[float]]:
    _require_keys(raw, {"generator", "target_load", "hot_fraction", "entries"},
                  {"generator"}, "workload")
    generator = raw["generator"]
    target = raw.get("target_load")
    target_load = float(target) if target is not None else None
    try:
        if generator == "uniform":
            if "hot_fraction" in raw or "entries" in raw:
                raise ConfigError("uniform workload takes only target_load")
            return WorkloadSpec(kind="uniform"), target_load
        if generator == "hot_rack":
            if "entries" in raw:
                raise ConfigError("hot_rack workload takes no explicit entries")
            return WorkloadSpec(
                kind="hot_rack", hot_fraction=float(raw.get("hot_fraction", 0.7))
            ), target_load
        if generator == "explicit":
            if "hot_fraction" in raw:
                raise ConfigError("explicit workload takes no hot_fraction")
            entries = []
            for entry in raw.get("entries", []):
                _require_keys(entry, {"type", "rate"}, {"type", "rate"}, "workload entry")
                triple = entry["type"]
                if len(triple) != 3:
                    raise ConfigError(f"workload entry type must list 3 servers, got {triple}")
                task_type = TaskType(int(triple[0]), int(triple[1]), int(triple[2]))
                task_type.validate()
                entries.append((task_type, float(entry["rate"])))
            return WorkloadSpec(kind="explicit", entries=tuple(entries)), target_load
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"workload: {exc}") from exc
    raise ConfigError(f"unknown workload generator: {generator!r}")


def _parse_enum(cls, value: str, where: str):
    try:
        return cls(value)
    except ValueError as exc:
        allowed = [member.value for member in cls]
        raise ConfigError(f"{where}: {value!r} not one of {allowed}") from exc


def _parse_sweep(raw: Mapping) -> SweepSection:
    allowed = {"schedulers", "loads", "epsilons", "modes", "directions",
               "replications", "horizon", "warmup", "seed", "instability_threshold"}
    required = {"schedulers", "loads", "epsilons", "replications", "horizon", "seed"}
    _require_keys(raw, allowed, required, "sweep")
    threshold = raw.get("instability_threshold")
    section = SweepSection(
        schedulers=[_parse_enum(SchedulerKind, s, "sweep.schedulers") for s in raw["schedulers"]],
        loads=[float(x) for x in raw["loads"]],
        epsilons=[float(x) for x in raw["epsilons"]],
        modes=[_parse_enum(PerturbMode, m, "sweep.modes")
               for m in raw.get("modes", ["independent"])],
        directions=[_parse_enum(Direction, d, "sweep.directions")
                    for d in raw.get("directions", ["lower"])],
        replications=int(raw["replications"]),
        horizon=float(raw["horizon"]),
        warmup=float(raw.get("warmup", 0.2)),
        seed=int(raw["seed"]),
        instability_threshold=float(threshold) if threshold is not None else None,
    )
    if section.replications < 1:
        raise ConfigError("sweep.replications must be >= 1")
    for load in section.loads:
        if not 0 < load < 1:
            raise ConfigError(f"sweep load {load} outside (0, 1)")
    for eps in section.epsilons:
        if not 0 <= eps <= 0.5:
            raise ConfigError(f"sweep epsilon {eps} outside [0, 0.5]")
    if section.horizon <= 0:
        raise ConfigError("sweep.horizon must be positive")
    if not 0 <= section.warmup <= 0.5:
        raise ConfigError("sweep.warmup must lie in [0, 0.5]")
    return section


def _parse_output(raw: Mapping) -> OutputSection:
    _require_keys(raw, {"path", "format"}, set(), "output")
    section = OutputSection(
        path=str(raw.get("path", "results")),
        format=str(raw.get("format", "csv")),
    )
    if section.format not in ("csv", "json"):
        raise ConfigError(f"output.format must be csv or json, got {section.format!r}")
    return section


def parse_config(raw: Mapping) -> ConfigFile:
    _require_keys(
        raw,
        {"topology", "rates", "workload", "service_distribution", "sweep", "output"},
        {"topology", "rates", "workload"},
        "config",
    )
    topology = _parse_topology(raw["topology"])
    rates = _parse_rates(raw["rates"])
    workload, target_load = _parse_workload(raw["workload"])
    try:
        service = service_distribution_from_config(
            raw.get("service_distribution", {"kind": "exponential"})
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    sweep = _parse_sweep(raw["sweep"]) if "sweep" in raw else None
    output = _parse_output(raw.get("output", {}))

    # Cross-checks the individual sections cannot do alone.
    if workload.kind == "explicit":
        for task_type, _ in workload.entries:
            try:
                topology.validate_task_type(task_type)
            except ValueError as exc:
                raise ConfigError(f"workload entry {task_type}: {exc}") from exc
    return ConfigFile(
        topology=topology,
        rates=rates,
        workload=workload,
        target_load=target_load,
        service=service,
        sweep=sweep,
        output=output,
    )


def load_config(path: str) -> ConfigFile:
    try:
        with open(path) as handle:
            raw = json.load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    return parse_config(raw)


def serialize_config(config: ConfigFile) -> dict:
    """Inverse of parse_config, up to defaulted fields being materialized."""
    raw: dict = {
        "topology": {
            "num_servers": config.topology.num_servers,
            "rack_size": config.topology.rack_size,
            "locality_levels": config.topology.locality_levels,
        },
        "rates": {
            "alpha": config.rates.alpha,
            "beta": config.rates.beta,
            "gamma": config.rates.gamma,
        },
        "workload": {"generator": config.workload.kind},
        "service_distribution": {"kind": config.service.kind},
        "output": {"path": config.output.path, "format": config.output.format},
    }
    if config.target_load is not None:
        raw["workload"]["target_load"] = config.target_load
    if config.workload.kind == "hot_rack":
        raw["workload"]["hot_fraction"] = config.workload.hot_fraction
    if config.workload.kind == "explicit":
        raw["workload"]["entries"] = [
            {"type": list(task_type), "rate": rate}
            for task_type, rate in config.workload.entries
        ]
    if config.service.kind == "pareto":
        raw["service_distribution"]["shape"] = config.service.shape  # type: ignore[attr-defined]
    if config.sweep is not None:
        s = config.sweep
        raw["sweep"] = {
            "schedulers": [k.value for k in s.schedulers],
            "loads": s.loads,
            "epsilons": s.epsilons,
            "modes": [m.value for m in s.modes],
            "directions": [d.value for d in s.directions],
            "replications": s.replications,
            "horizon": s.horizon,
            "warmup": s.warmup,
            "seed": s.seed,
        }
        if s.instability_threshold is not None:
            raw["sweep"]["instability_threshold"] = s.instability_threshold
    return raw
