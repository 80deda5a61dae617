"""Arrival-rate vectors, service-time distributions, and the capacity region.

The load factor of an arrival-rate vector is the smallest achievable maximum
per-server load over all ways of splitting each task type's rate across
servers, where a unit of rate routed to a server costs the reciprocal of that
server's service rate for the type (local, rack-local, or remote). A vector is
supportable exactly when its load factor is below 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
from scipy.optimize import linprog

from .topology import Locality, RackTopology, TaskType

_WITNESS_TOL = 1e-6


@dataclass(frozen=True)
class ServiceRates:
    """True service rates: local ``alpha`` > rack-local ``beta`` > remote ``gamma`` > 0."""

    alpha: float
    beta: float
    gamma: float

    def __post_init__(self) -> None:
        if not (self.alpha > self.beta > self.gamma > 0):
            raise ValueError(
                f"rates must satisfy alpha > beta > gamma > 0, got "
                f"({self.alpha}, {self.beta}, {self.gamma})"
            )

    def rate_for(self, locality: Locality) -> float:
        if locality is Locality.LOCAL:
            return self.alpha
        if locality is Locality.RACK_LOCAL:
            return self.beta
        return self.gamma


class ArrivalSpec:
    """Nonnegative arrival rate per task type."""

    def __init__(self, rates: Mapping[TaskType, float]):
        for task_type, rate in rates.items():
            task_type.validate()
            if rate < 0 or not math.isfinite(rate):
                raise ValueError(f"arrival rate for {task_type} must be finite and >= 0, got {rate}")
        self.rates: dict[TaskType, float] = dict(rates)

    @property
    def total_rate(self) -> float:
        return sum(self.rates.values())

    def active_types(self) -> list[TaskType]:
        return sorted(t for t, r in self.rates.items() if r > 0)

    def scaled(self, factor: float) -> "ArrivalSpec":
        return ArrivalSpec({t: r * factor for t, r in self.rates.items()})

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ArrivalSpec) and self.rates == other.rates

    def __repr__(self) -> str:
        return f"ArrivalSpec({len(self.rates)} types, total_rate={self.total_rate:g})"


class ServiceDistribution:
    """Positive service-duration sampler parameterized by its mean at draw time."""

    kind = "base"

    def sample(self, mean: float, rng: np.random.Generator) -> float:
        raise NotImplementedError

    def validate_mean(self, mean: float) -> None:
        if mean <= 0:
            raise ValueError(f"service mean must be positive, got {mean}")


class ExponentialService(ServiceDistribution):
    kind = "exponential"

    def sample(self, mean: float, rng: np.random.Generator) -> float:
        return rng.exponential(mean)


class GeometricService(ServiceDistribution):
    """Integer multiples of a unit slot; success probability 1/mean gives the requested mean."""

    kind = "geometric"

    def sample(self, mean: float, rng: np.random.Generator) -> float:
        return float(rng.geometric(1.0 / mean))

    def validate_mean(self, mean: float) -> None:
        super().validate_mean(mean)
        if mean < 1.0:
            raise ValueError(
                f"geometric service on whole slots cannot have mean {mean} < 1"
            )


class ParetoService(ServiceDistribution):
    """Heavy-tailed durations; shape > 1 so the mean exists (default 2.5 keeps variance finite)."""

    kind = "pareto"

    def __init__(self, shape: float = 2.5):
        if shape <= 1:
            raise ValueError(f"pareto shape must exceed 1, got {shape}")
        self.shape = shape

    def sample(self, mean: float, rng: np.random.Generator) -> float:
        scale = mean * (self.shape - 1.0) / self.shape
        return (rng.pareto(self.shape) + 1.0) * scale


def service_distribution_from_config(raw: Mapping[str, object]) -> ServiceDistribution:
    kind = raw.get("kind")
    known = {"kind", "shape"}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown service_distribution keys: {sorted(unknown)}")
    if kind == "exponential":
        return ExponentialService()
    if kind == "geometric":
        return GeometricService()
    if kind == "pareto":
        shape = raw.get("shape", 2.5)
        return ParetoService(float(shape))  # type: ignore[arg-type]
    raise ValueError(f"unknown service distribution kind: {kind!r}")


@dataclass
class Decomposition:
    """Split of each type's arrival rate across servers: (type, server) -> rate share."""

    split: dict[tuple[TaskType, int], float] = field(default_factory=dict)

    def type_totals(self) -> dict[TaskType, float]:
        totals: dict[TaskType, float] = {}
        for (task_type, _), value in self.split.items():
            totals[task_type] = totals.get(task_type, 0.0) + value
        return totals

    def server_loads(self, topology: RackTopology, rates: ServiceRates) -> list[float]:
        """Per-server load (index 0 = server 1): routed rate weighted by 1/service-rate."""
        loads = [0.0] * topology.num_servers
        for (task_type, server), value in self.split.items():
            rate = rates.rate_for(topology.locality_of(task_type, server))
            loads[server - 1] += value / rate
        return loads


def load_factor(
    spec: ArrivalSpec,
    rates: ServiceRates,
    topology: RackTopology,
) -> tuple[float, Decomposition]:
    """Minimum achievable maximum per-server load, with a decomposition attaining it.

    Solved as a linear program over the transportation polytope: variables are
    the per-(type, server) rate shares plus the bound on every server's load,
    which is minimized. The spec is supportable iff the returned value < 1.
    """
    types = spec.active_types()
    if not types:
        raise ValueError("arrival spec has no positive rates")
    for task_type in types:
        topology.validate_task_type(task_type)

    n_servers = topology.num_servers
    n_types = len(types)
    n_vars = n_types * n_servers + 1  # splits plus the max-load bound
    rho_col = n_vars - 1

    cost = np.zeros(n_vars)
    cost[rho_col] = 1.0

    # One equality row per type: its shares sum to its arrival rate.
    a_eq = np.zeros((n_types, n_vars))
    b_eq = np.zeros(n_types)
    for i, task_type in enumerate(types):
        a_eq[i, i * n_servers:(i + 1) * n_servers] = 1.0
        b_eq[i] = spec.rates[task_type]

    # One inequality row per server: weighted load minus the bound <= 0.
    a_ub = np.zeros((n_servers, n_vars))
    for i, task_type in enumerate(types):
        for m in range(1, n_servers + 1):
            rate = rates.rate_for(topology.locality_of(task_type, m))
            a_ub[m - 1, i * n_servers + (m - 1)] = 1.0 / rate
    a_ub[:, rho_col] = -1.0
    b_ub = np.zeros(n_servers)

    bounds = [(0, None)] * (n_vars - 1) + [(0, None)]
    result = linprog(cost, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
                     bounds=bounds, method="highs")
    if not result.success:
        raise RuntimeError(f"load-factor solve failed: {result.message}")

    rho = float(result.x[rho_col])
    split: dict[tuple[TaskType, int], float] = {}
    for i, task_type in enumerate(types):
        for m in range(1, n_servers + 1):
            value = float(result.x[i * n_servers + (m - 1)])
            if value > _WITNESS_TOL:
                split[(task_type, m)] = value
    return rho, Decomposition(split)


def uniform_workload(
    topology: RackTopology,
    rates: ServiceRates,
    target_rho: float,
) -> ArrivalSpec:
    """Equal rate on every task type, totalling target_rho * M * alpha.

    With the fastest rate being local, the even all-local split is optimal, so
    the load factor of the result is exactly ``target_rho``.
    """
    if not 0 < target_rho < 1:
        raise ValueError(f"target load must lie in (0, 1), got {target_rho}")
    types = topology.task_types()
    total = target_rho * topology.num_servers * rates.alpha
    per_type = total / len(types)
    return ArrivalSpec({t: per_type for t in types})


def hot_rack_workload(
    topology: RackTopology,
    rates: ServiceRates,
    target_rho: float,
    hot_fraction: float,
) -> ArrivalSpec:
    """Skewed workload concentrating ``hot_fraction`` of the load on rack-1 triples.

    Task types whose three replica holders all sit in rack 1 share
    ``hot_fraction`` of the total rate uniformly; all other types share the
    remainder uniformly. The total is calibrated against the capacity LP so
    the returned spec's load factor is ``target_rho`` to within 1e-3.
    """
    if not 0 < target_rho < 1:
        raise ValueError(f"target load must lie in (0, 1), got {target_rho}")
    if not 0 <= hot_fraction <= 1:
        raise ValueError(f"hot fraction must lie in [0, 1], got {hot_fraction}")

    hot_types = [t for t in topology.task_types()
                 if topology.rack_of(t.m1) == topology.rack_of(t.m2)
                 == topology.rack_of(t.m3) == 1]
    hot_set = set(hot_types)
    cold_types = [t for t in topology.task_types() if t not in hot_set]
    if hot_fraction > 0 and not hot_types:
        raise RuntimeError(
            f"no task type fits entirely in rack 1 (rack_size={topology.rack_size}); "
            "cannot place hot load"
        )
    if hot_fraction < 1 and not cold_types:
        raise RuntimeError("topology has only rack-1 task types; cannot place cold load")

    shape: dict[TaskType, float] = {}
    if hot_fraction > 0:
        for t in hot_types:
            shape[t] = hot_fraction / len(hot_types)
    if hot_fraction < 1:
        for t in cold_types:
            shape[t] = (1.0 - hot_fraction) / len(cold_types)

    # The load factor is linear in a uniform scaling of the spec, so one LP
    # solve at unit total rate calibrates the total exactly.
    base = ArrivalSpec(shape)
    rho_unit, _ = load_factor(base, rates, topology)
    if rho_unit <= 0:
        raise RuntimeError("degenerate workload shape: zero load at unit rate")
    calibrated = base.scaled(target_rho / rho_unit)
    rho_check, _ = load_factor(calibrated, rates, topology)
    if abs(rho_check - target_rho) > 1e-3:
        raise RuntimeError(
            f"hot-rack calibration failed: wanted load {target_rho}, got {rho_check}"
        )
    return calibrated


def sample_arrival_arrays(
    spec: ArrivalSpec,
    horizon: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, list[TaskType]]:
    """Sampled Poisson arrivals on [0, horizon] as (times, type indices, type table).

    The superposition is drawn directly: a Poisson count of events at the total
    rate, uniform event times, and types chosen proportionally to their rates.
    """
    if horizon <= 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    types = spec.active_types()
    if not types:
        return np.empty(0), np.empty(0, dtype=np.int64), []
    rate_vec = np.array([spec.rates[t] for t in types])
    total = float(rate_vec.sum())
    count = int(rng.poisson(total * horizon))
    times = np.sort(rng.uniform(0.0, horizon, size=count))
    type_idx = rng.choice(len(types), size=count, p=rate_vec / total)
    return times, type_idx.astype(np.int64), types


def sample_arrivals(
    spec: ArrivalSpec,
    horizon: float,
    rng: np.random.Generator,
) -> list[tuple[float, TaskType]]:
    """Time-ordered (arrival_time, task_type) pairs on [0, horizon]."""
    times, type_idx, types = sample_arrival_arrays(spec, horizon, rng)
    return [(float(t), types[k]) for t, k in zip(times, type_idx)]
