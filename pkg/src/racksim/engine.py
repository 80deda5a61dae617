"""Seeded continuous-time discrete-event simulation loop.

One run replays a Poisson arrival stream against a scheduler: arrivals are
routed and enqueued, idle servers pull work (polled in random order when the
choice matters), service durations are drawn from the *true* rates for the
actual task/server locality, and departures free servers for the next pull.
Departures are processed before arrivals carrying the same timestamp so a
freed server can serve a same-instant arrival.

Every random draw comes from a named stream derived from the run seed, so an
identical configuration reproduces a bit-identical event trace and report.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .schedulers import EstimatedRates, SchedulerKind, Task, make_scheduler
from .streams import stream_rng
from .topology import RackTopology, TaskType
from .workload import (
    ArrivalSpec,
    ServiceDistribution,
    ServiceRates,
    sample_arrival_arrays,
)

_INF = math.inf


def default_instability_threshold(topology: RackTopology) -> int:
    return max(10_000, 100 * topology.num_servers)


@dataclass
class SimConfig:
    """Everything one run needs; immutable by convention once handed to ``run``."""

    topology: RackTopology
    rates: ServiceRates
    scheduler: SchedulerKind
    arrival_spec: ArrivalSpec
    service: ServiceDistribution
    horizon: float
    seed: int = 0
    warmup_fraction: float = 0.2
    est_rates: Optional[EstimatedRates] = None
    instability_threshold: Optional[float] = None

    def validate(self) -> None:
        if self.horizon <= 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if not 0 <= self.warmup_fraction <= 0.5:
            raise ValueError(
                f"warmup fraction must lie in [0, 0.5], got {self.warmup_fraction}"
            )
        if self.instability_threshold is not None and self.instability_threshold <= 0:
            raise ValueError("instability threshold must be positive")
        for rate in (self.rates.alpha, self.rates.beta, self.rates.gamma):
            self.service.validate_mean(1.0 / rate)

    def effective_estimates(self) -> EstimatedRates:
        return self.est_rates if self.est_rates is not None else EstimatedRates.from_true(self.rates)


@dataclass
class MetricsReport:
    """Outcome of one run; completion statistics cover post-warmup departures."""

    scheduler: str
    seed: int
    horizon: float
    tasks_arrived: int
    tasks_completed: int
    mean_completion_time: float
    completion_time_stddev: float
    served_local: int
    served_rack_local: int
    served_remote: int
    avg_in_system: float
    final_in_system: int
    unstable: bool
    trace: Optional[list[tuple]] = field(default=None, compare=False, repr=False)


class Simulation:
    """Single-owner simulation state; build, ``run()`` once, then inspect."""

    def __init__(
        self,
        config: SimConfig,
        arrivals: Optional[Sequence[tuple[float, TaskType]]] = None,
        record_trace: bool = False,
        check_invariants: bool = False,
    ):
        config.validate()
        self.config = config
        self.record_trace = record_trace
        self.check_invariants = check_invariants
        seed = config.seed

        if arrivals is None:
            self.arr_times, self.arr_types, self.types = sample_arrival_arrays(
                config.arrival_spec, config.horizon, stream_rng(seed, "arrivals")
            )
        else:
            for when, _ in arrivals:
                if not 0 <= when <= config.horizon:
                    raise ValueError(f"injected arrival at {when} outside [0, horizon]")
            self.types = sorted({t for _, t in arrivals})
            index = {t: k for k, t in enumerate(self.types)}
            self.arr_times = np.array([when for when, _ in arrivals])
            self.arr_types = np.array([index[t] for _, t in arrivals], dtype=np.int64)
            if np.any(np.diff(self.arr_times) < 0):
                raise ValueError("injected arrivals must be time-ordered")

        self.service_rng = stream_rng(seed, "service")
        self.ties_rng = stream_rng(seed, "ties")
        self.scheduler = make_scheduler(
            config.scheduler,
            config.topology,
            config.effective_estimates(),
            self.types,
            self.ties_rng,
        )
        rates = config.rates
        true_by_class = (rates.alpha, rates.beta, rates.gamma)
        # Mean service duration of type k on server s (index s-1), by true rates.
        self.mean_duration = [
            tuple(1.0 / true_by_class[c] for c in row) for row in self.scheduler.loc_class
        ]

        self.clock = 0.0
        self.in_system = 0
        self.arrived = 0
        self.completed = 0
        self.served_by_class = [0, 0, 0]
        self._dep_heap: list[tuple[float, int, int]] = []
        self._dep_seq = 0
        self._area = 0.0  # integral of in-system count over time
        self._warmup_time = config.warmup_fraction * config.horizon
        self._ct_count = 0
        self._ct_mean = 0.0
        self._ct_m2 = 0.0
        self.trace: list[tuple] = []
        self._ran = False

    # -- event handlers -----------------------------------------------------

    def _advance_clock(self, now: float) -> None:
        if now < self.clock:
            raise RuntimeError(
                f"event queue corrupted: time went from {self.clock} to {now}"
            )
        self._area += self.in_system * (now - self.clock)
        self.clock = now

    def _start_service(self, server: int, task: Task, now: float) -> None:
        task.start_time = now
        task.serving_server = server
        mean = self.mean_duration[task.type_index][server - 1]
        duration = float(self.config.service.sample(mean, self.service_rng))
        if not duration > 0:
            raise RuntimeError(f"service draw must be positive, got {duration}")
        departs = now + duration
        if departs <= self.config.horizon:
            self._dep_seq += 1
            heapq.heappush(self._dep_heap, (departs, self._dep_seq, server))
        if self.record_trace:
            self.trace.append(("start", now, task.id, server, duration))

    def _dispatch_one(self, server: int, now: float) -> bool:
        picked = self.scheduler.schedule(server)
        if picked is None:
            return False
        task, source = picked
        if self.record_trace:
            self.trace.append(("pull", now, task.id, server, _source_label(source)))
        self._start_service(server, task, now)
        return True

    def _dispatch_idle(self, now: float) -> None:
        # At most one assignment can become possible per event, but keep
        # polling passes until a full pass starts nothing.
        while True:
            idle = self.scheduler.idle_servers()
            if not idle:
                return
            if len(idle) > 1:
                order = self.ties_rng.permutation(len(idle))
                idle = [idle[i] for i in order]
            started = False
            for server in idle:
                if self.scheduler.is_idle(server) and self._dispatch_one(server, now):
                    started = True
            if not started:
                return

    def _handle_arrival(self, now: float, type_index: int) -> None:
        self._advance_clock(now)
        self.arrived += 1
        task = Task(
            id=self.arrived,
            type_index=type_index,
            task_type=self.types[type_index],
            arrival_time=now,
        )
        self.in_system += 1
        server, queue_class = self.scheduler.route(task)
        if self.record_trace:
            self.trace.append(
                ("arrival", now, task.id, server, _source_label(queue_class))
            )
        self._dispatch_idle(now)
        self._post_event_checks()

    def _handle_departure(self, now: float, server: int) -> None:
        self._advance_clock(now)
        task = self.scheduler.complete(server)
        self.completed += 1
        self.in_system -= 1
        cls = self.scheduler.locality_class(task.type_index, server)
        self.served_by_class[cls] += 1
        if now >= self._warmup_time:
            # Welford update over post-warmup completion times.
            value = now - task.arrival_time
            self._ct_count += 1
            delta = value - self._ct_mean
            self._ct_mean += delta / self._ct_count
            self._ct_m2 += delta * (value - self._ct_mean)
        if self.record_trace:
            self.trace.append(("departure", now, task.id, server, now - task.arrival_time))
        self._dispatch_one(server, now)
        self._post_event_checks()

    def _post_event_checks(self) -> None:
        if not self.check_invariants:
            return
        sched = self.scheduler
        for server in sched.idle_servers():
            if sched.can_start(server):
                raise AssertionError(f"idle server {server} left with startable work")
        queued = sched.waiting_count()
        busy = sum(1 for s in range(1, self.config.topology.num_servers + 1)
                   if not sched.is_idle(s))
        if queued + busy != self.in_system:
            raise AssertionError("flow conservation violated")
        if self.arrived != self.completed + self.in_system:
            raise AssertionError("arrival/completion accounting violated")

    # -- public surface -----------------------------------------------------

    def run(self) -> MetricsReport:
        if self._ran:
            raise RuntimeError("a Simulation instance runs exactly once")
        self._ran = True
        times = self.arr_times
        kinds = self.arr_types
        n = len(times)
        i = 0
        heap = self._dep_heap
        while True:
            t_arr = times[i] if i < n else _INF
            if heap and heap[0][0] <= t_arr:
                when, _, server = heapq.heappop(heap)
                self._handle_departure(when, server)
            elif i < n:
                i += 1
                self._handle_arrival(float(t_arr), int(kinds[i - 1]))
            else:
                break
        self._advance_clock(self.config.horizon)
        return self._report()

    def _report(self) -> MetricsReport:
        config = self.config
        threshold = (
            config.instability_threshold
            if config.instability_threshold is not None
            else default_instability_threshold(config.topology)
        )
        if self._ct_count > 0:
            mean = self._ct_mean
            stddev = math.sqrt(self._ct_m2 / self._ct_count)
        else:
            mean = math.nan
            stddev = math.nan
        return MetricsReport(
            scheduler=config.scheduler.value,
            seed=config.seed,
            horizon=config.horizon,
            tasks_arrived=self.arrived,
            tasks_completed=self.completed,
            mean_completion_time=mean,
            completion_time_stddev=stddev,
            served_local=self.served_by_class[0],
            served_rack_local=self.served_by_class[1],
            served_remote=self.served_by_class[2],
            avg_in_system=self._area / config.horizon,
            final_in_system=self.in_system,
            unstable=self.in_system > threshold,
            trace=self.trace if self.record_trace else None,
        )

    def snapshot(self) -> dict:
        """Read-only view of per-server queue lengths (and workloads where defined)."""
        sched = self.scheduler
        view = {
            "time": self.clock,
            "in_system": self.in_system,
            "queue_lengths": sched.queue_length_vector(),
        }
        if hasattr(sched, "workloads"):
            view["workloads"] = sched.workloads()
        return view


def _source_label(source: object) -> str:
    if source is None:
        return "global"
    value = getattr(source, "value", source)
    return str(value)


def run(
    config: SimConfig,
    arrivals: Optional[Sequence[tuple[float, TaskType]]] = None,
    record_trace: bool = False,
    check_invariants: bool = False,
) -> MetricsReport:
    """Execute one seeded run and return its metrics."""
    return Simulation(
        config,
        arrivals=arrivals,
        record_trace=record_trace,
        check_invariants=check_invariants,
    ).run()


def write_trace_csv(trace: list[tuple], path: str) -> None:
    """Persist a recorded event trace: kind, time, task id, server, detail."""
    import csv

    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["kind", "time", "task_id", "server", "detail"])
        for row in trace:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
