"""Experiment harness: rate-perturbation plans, sweep grids, and summaries.

A sweep executes one seeded engine run per (scheduler, load, perturbation,
replication) cell. Decision-side rate estimates are produced by perturbing the
true rates per cell; the engine itself always serves at the true rates. Seeds
derive deterministically from the master seed and the cell coordinates, so a
sweep's results are reproducible row for row and independent of execution
order or concurrency.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import stats as _scipy_stats

from .engine import MetricsReport, SimConfig, run as run_engine
from .schedulers import EstimatedRates, SchedulerKind
from .streams import stream_rng, stream_seed
from .topology import RackTopology, TaskType
from .workload import (
    ArrivalSpec,
    ServiceDistribution,
    ServiceRates,
    hot_rack_workload,
    load_factor,
    uniform_workload,
)

SWEEP_CSV_COLUMNS = (
    "scheduler",
    "load",
    "epsilon",
    "direction",
    "mode",
    "replication",
    "seed",
    "mean_completion_time",
    "tasks_completed",
    "unstable",
)


class Direction(Enum):
    LOWER = "lower"
    HIGHER = "higher"


class PerturbMode(Enum):
    COSCALED = "coscaled"
    INDEPENDENT = "independent"
    SKEW_SLOW_TIERS = "skew_slow_tiers"


@dataclass(frozen=True)
class PerturbationPlan:
    """Error level and shape applied to the scheduler's rate estimates."""

    epsilon: float
    direction: Direction = Direction.LOWER
    mode: PerturbMode = PerturbMode.INDEPENDENT

    def __post_init__(self) -> None:
        if not 0 <= self.epsilon <= 0.5:
            raise ValueError(f"perturbation level must lie in [0, 0.5], got {self.epsilon}")


def perturb(
    true_rates: ServiceRates,
    plan: PerturbationPlan,
    rng: np.random.Generator,
) -> EstimatedRates:
    """Estimated rates derived from the true ones per the plan.

    Co-scaled: all three rates shift by the same factor 1 -/+ epsilon.
    Independent: each rate gets its own uniform factor from [1-e, 1+e]
    (direction is irrelevant; the draw is fresh per call). Skewed slow tiers:
    the local rate stays exact and only the two slower tiers shift.
    """
    eps = plan.epsilon
    if eps >= 1:
        raise ValueError(f"perturbation level must stay below 1, got {eps}")
    if eps == 0:
        return EstimatedRates.from_true(true_rates)
    if plan.mode is PerturbMode.INDEPENDENT:
        factors = [rng.uniform(1.0 - eps, 1.0 + eps) for _ in range(3)]
        return EstimatedRates(
            true_rates.alpha * factors[0],
            true_rates.beta * factors[1],
            true_rates.gamma * factors[2],
        )
    factor = 1.0 - eps if plan.direction is Direction.LOWER else 1.0 + eps
    if plan.mode is PerturbMode.COSCALED:
        return EstimatedRates(
            true_rates.alpha * factor,
            true_rates.beta * factor,
            true_rates.gamma * factor,
        )
    return EstimatedRates(true_rates.alpha, true_rates.beta * factor, true_rates.gamma * factor)


@dataclass(frozen=True)
class WorkloadSpec:
    """Named arrival-spec generator, recalibrated to each target load of a sweep."""

    kind: str  # uniform | hot_rack | explicit
    hot_fraction: float = 0.7
    entries: tuple[tuple[TaskType, float], ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in ("uniform", "hot_rack", "explicit"):
            raise ValueError(f"unknown workload generator: {self.kind!r}")
        if self.kind == "explicit" and not self.entries:
            raise ValueError("explicit workload needs at least one (type, rate) entry")

    def build(
        self,
        topology: RackTopology,
        rates: ServiceRates,
        target_load: Optional[float] = None,
    ) -> ArrivalSpec:
        if self.kind == "uniform":
            if target_load is None:
                raise ValueError("uniform workload needs a target load")
            return uniform_workload(topology, rates, target_load)
        if self.kind == "hot_rack":
            if target_load is None:
                raise ValueError("hot-rack workload needs a target load")
            return hot_rack_workload(topology, rates, target_load, self.hot_fraction)
        spec = ArrivalSpec(dict(self.entries))
        if target_load is None:
            return spec
        rho, _ = load_factor(spec, rates, topology)
        return spec.scaled(target_load / rho)


@dataclass
class SweepPlan:
    schedulers: Sequence[SchedulerKind]
    loads: Sequence[float]
    perturbations: Sequence[PerturbationPlan]
    replications: int
    topology: RackTopology
    rates: ServiceRates
    workload: WorkloadSpec
    service: ServiceDistribution
    horizon: float
    warmup_fraction: float = 0.2
    instability_threshold: Optional[float] = None
    master_seed: int = 0

    def __post_init__(self) -> None:
        if self.replications < 1:
            raise ValueError("need at least one replication")
        for load in self.loads:
            if not 0 < load < 1:
                raise ValueError(f"sweep loads must lie in (0, 1), got {load}")
        if not self.schedulers:
            raise ValueError("sweep needs at least one scheduler")
        if not self.perturbations:
            raise ValueError("sweep needs at least one perturbation plan")


@dataclass
class SweepRow:
    scheduler: str
    load: float
    epsilon: float
    direction: str
    mode: str
    replication: int
    seed: int
    mean_completion_time: float
    tasks_completed: int
    unstable: bool
    error: Optional[str] = None  # kept out of the CSV schema

    def cell_key(self) -> tuple:
        return (self.scheduler, self.load, self.epsilon, self.direction, self.mode)


@dataclass
class SweepResult:
    rows: list[SweepRow] = field(default_factory=list)

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(SWEEP_CSV_COLUMNS)
            for row in self.rows:
                writer.writerow([
                    row.scheduler,
                    repr(row.load),
                    repr(row.epsilon),
                    row.direction,
                    row.mode,
                    row.replication,
                    row.seed,
                    repr(row.mean_completion_time),
                    row.tasks_completed,
                    "true" if row.unstable else "false",
                ])

    def csv_bytes(self) -> bytes:
        import io

        buffer = io.StringIO(newline="")
        writer = csv.writer(buffer)
        writer.writerow(SWEEP_CSV_COLUMNS)
        for row in self.rows:
            writer.writerow([
                row.scheduler,
                repr(row.load),
                repr(row.epsilon),
                row.direction,
                row.mode,
                row.replication,
                row.seed,
                repr(row.mean_completion_time),
                row.tasks_completed,
                "true" if row.unstable else "false",
            ])
        return buffer.getvalue().encode()


def read_sweep_csv(path: str) -> SweepResult:
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != list(SWEEP_CSV_COLUMNS):
            raise ValueError(
                f"unexpected sweep CSV header in {path}: {header!r}"
            )
        rows = []
        for record in reader:
            rows.append(SweepRow(
                scheduler=record[0],
                load=float(record[1]),
                epsilon=float(record[2]),
                direction=record[3],
                mode=record[4],
                replication=int(record[5]),
                seed=int(record[6]),
                mean_completion_time=float(record[7]),
                tasks_completed=int(record[8]),
                unstable=record[9] == "true",
            ))
    return SweepResult(rows)


def cell_seed(
    master_seed: int,
    scheduler: SchedulerKind,
    load: float,
    plan: PerturbationPlan,
    replication: int,
) -> int:
    return stream_seed(
        master_seed,
        "cell",
        scheduler.value,
        repr(float(load)),
        repr(float(plan.epsilon)),
        plan.direction.value,
        plan.mode.value,
        replication,
    )


def _run_cell(payload: dict) -> SweepRow:
    plan: PerturbationPlan = payload["perturbation"]
    scheduler: SchedulerKind = payload["scheduler"]
    seed = payload["seed"]
    est = perturb(
        payload["rates"],
        plan,
        stream_rng(seed, "perturbation"),
    )
    row = SweepRow(
        scheduler=scheduler.value,
        load=payload["load"],
        epsilon=plan.epsilon,
        direction=plan.direction.value,
        mode=plan.mode.value,
        replication=payload["replication"],
        seed=seed,
        mean_completion_time=math.nan,
        tasks_completed=0,
        unstable=False,
    )
    config = SimConfig(
        topology=payload["topology"],
        rates=payload["rates"],
        scheduler=scheduler,
        arrival_spec=payload["arrival_spec"],
        service=payload["service"],
        horizon=payload["horizon"],
        seed=seed,
        warmup_fraction=payload["warmup_fraction"],
        est_rates=est,
        instability_threshold=payload["instability_threshold"],
    )
    try:
        report = run_engine(config)
    except Exception as exc:  # recorded, sweep continues
        row.error = f"{type(exc).__name__}: {exc}"
        return row
    row.mean_completion_time = report.mean_completion_time
    row.tasks_completed = report.tasks_completed
    row.unstable = report.unstable
    return row


def run_sweep(plan: SweepPlan, jobs: int = 1) -> SweepResult:
    """Execute the whole grid; rows come back in plan order regardless of jobs."""
    arrival_specs = {
        load: plan.workload.build(plan.topology, plan.rates, load) for load in plan.loads
    }
    payloads = []
    for scheduler in plan.schedulers:
        for load in plan.loads:
            for perturbation in plan.perturbations:
                for replication in range(plan.replications):
                    payloads.append({
                        "scheduler": scheduler,
                        "load": load,
                        "perturbation": perturbation,
                        "replication": replication,
                        "seed": cell_seed(plan.master_seed, scheduler, load,
                                          perturbation, replication),
                        "topology": plan.topology,
                        "rates": plan.rates,
                        "arrival_spec": arrival_specs[load],
                        "service": plan.service,
                        "horizon": plan.horizon,
                        "warmup_fraction": plan.warmup_fraction,
                        "instability_threshold": plan.instability_threshold,
                    })
    if jobs <= 1:
        rows = [_run_cell(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_cell, payloads, chunksize=1))
    return SweepResult(rows)


@dataclass
class CellStats:
    scheduler: str
    load: float
    epsilon: float
    direction: str
    mode: str
    n: int
    mean: float
    stddev: float
    ci95_half_width: Optional[float]
    any_unstable: bool
    any_error: bool


def _t_half_width(values: Sequence[float]) -> Optional[float]:
    n = len(values)
    if n < 2:
        return None
    spread = float(np.std(values, ddof=1))
    return float(_scipy_stats.t.ppf(0.975, n - 1)) * spread / math.sqrt(n)


def aggregate(result: SweepResult) -> list[CellStats]:
    """Per-cell mean, spread, and Student-t 95% interval over replications."""
    groups: dict[tuple, list[SweepRow]] = {}
    order: list[tuple] = []
    for row in result.rows:
        key = row.cell_key()
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(row)
    cells = []
    for key in order:
        rows = groups[key]
        values = [r.mean_completion_time for r in rows
                  if r.error is None and math.isfinite(r.mean_completion_time)]
        n = len(values)
        cells.append(CellStats(
            scheduler=key[0],
            load=key[1],
            epsilon=key[2],
            direction=key[3],
            mode=key[4],
            n=n,
            mean=float(np.mean(values)) if n else math.nan,
            stddev=float(np.std(values, ddof=1)) if n >= 2 else (0.0 if n == 1 else math.nan),
            ci95_half_width=_t_half_width(values),
            any_unstable=any(r.unstable for r in rows),
            any_error=any(r.error is not None for r in rows),
        ))
    return cells


def aggregates_to_json(cells: Iterable[CellStats]) -> str:
    def clean(value):
        if value is None or (isinstance(value, float) and not math.isfinite(value)):
            return None
        return value

    payload = [
        {
            "scheduler": c.scheduler,
            "load": c.load,
            "epsilon": c.epsilon,
            "direction": c.direction,
            "mode": c.mode,
            "n": c.n,
            "mean_completion_time": clean(c.mean),
            "stddev": clean(c.stddev),
            "ci95_half_width": clean(c.ci95_half_width),
            "any_unstable": c.any_unstable,
            "any_error": c.any_error,
        }
        for c in cells
    ]
    return json.dumps({"cells": payload}, indent=2)


@dataclass
class SensitivityStat:
    scheduler: str
    load: float
    epsilon: float
    direction: str
    mode: str
    degradation: float  # ratio of cell means
    paired_degradation: float  # mean of per-replication ratios; the CI's center
    ci95_half_width: Optional[float]
    n: int
    any_unstable: bool


def sensitivity(result: SweepResult) -> list[SensitivityStat]:
    """Relative completion-time degradation of each perturbed cell vs its zero-error baseline.

    Baselines match on (scheduler, load, mode, direction) when such a zero-error
    cell exists; otherwise any zero-error cell with the same scheduler and load
    serves, since zero-error estimates are identical whatever the labels. The
    interval comes from pairing replications by index.
    """
    by_cell: dict[tuple, list[SweepRow]] = {}
    for row in result.rows:
        by_cell.setdefault(row.cell_key(), []).append(row)

    def baseline_for(key: tuple) -> Optional[list[SweepRow]]:
        scheduler, load, _, direction, mode = key
        exact = by_cell.get((scheduler, load, 0.0, direction, mode))
        if exact:
            return exact
        for (s, l, e, _, _), rows in by_cell.items():
            if s == scheduler and l == load and e == 0.0:
                return rows
        return None

    stats: list[SensitivityStat] = []
    for key, rows in by_cell.items():
        scheduler, load, epsilon, direction, mode = key
        if epsilon == 0.0:
            continue
        base = baseline_for(key)
        if base is None:
            raise ValueError(
                f"no zero-error baseline for scheduler={scheduler} load={load}"
            )
        base_by_rep = {r.replication: r for r in base if r.error is None}
        pairs = []
        for row in rows:
            mate = base_by_rep.get(row.replication)
            if (mate is not None and row.error is None
                    and math.isfinite(row.mean_completion_time)
                    and math.isfinite(mate.mean_completion_time)
                    and mate.mean_completion_time != 0):
                pairs.append((row.mean_completion_time - mate.mean_completion_time)
                             / mate.mean_completion_time)
        perturbed_mean = float(np.mean([
            r.mean_completion_time for r in rows
            if r.error is None and math.isfinite(r.mean_completion_time)
        ])) if rows else math.nan
        baseline_mean = float(np.mean([
            r.mean_completion_time for r in base
            if r.error is None and math.isfinite(r.mean_completion_time)
        ]))
        stats.append(SensitivityStat(
            scheduler=scheduler,
            load=load,
            epsilon=epsilon,
            direction=direction,
            mode=mode,
            degradation=(perturbed_mean - baseline_mean) / baseline_mean,
            paired_degradation=float(np.mean(pairs)) if pairs else math.nan,
            ci95_half_width=_t_half_width(pairs),
            n=len(pairs),
            any_unstable=any(r.unstable for r in rows) or any(r.unstable for r in base),
        ))
    return stats
