"""Rack-aware data-center load-balancing simulator.

Four schedulers (weighted-workload balancing, shortest-queue MaxWeight
stealing, two-level priority, and plain FIFO) run against a seeded
continuous-time event loop, with a harness that measures how much each
algorithm degrades when its service-rate estimates are wrong.
"""

from .engine import MetricsReport, SimConfig, Simulation, run
from .harness import (
    Direction,
    PerturbationPlan,
    PerturbMode,
    SweepPlan,
    SweepResult,
    WorkloadSpec,
    aggregate,
    perturb,
    run_sweep,
    sensitivity,
)
from .schedulers import EstimatedRates, SchedulerKind, Task, workload_of, true_rate
from .topology import Locality, RackTopology, TaskType
from .workload import (
    ArrivalSpec,
    ExponentialService,
    GeometricService,
    ParetoService,
    ServiceRates,
    hot_rack_workload,
    load_factor,
    sample_arrivals,
    uniform_workload,
)

__all__ = [
    "ArrivalSpec",
    "Direction",
    "EstimatedRates",
    "ExponentialService",
    "GeometricService",
    "Locality",
    "MetricsReport",
    "ParetoService",
    "PerturbMode",
    "PerturbationPlan",
    "RackTopology",
    "SchedulerKind",
    "ServiceRates",
    "SimConfig",
    "Simulation",
    "SweepPlan",
    "SweepResult",
    "Task",
    "TaskType",
    "WorkloadSpec",
    "aggregate",
    "hot_rack_workload",
    "load_factor",
    "perturb",
    "run",
    "run_sweep",
    "sample_arrivals",
    "sensitivity",
    "true_rate",
    "uniform_workload",
    "workload_of",
]
