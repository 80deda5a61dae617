"""The four load-balancing algorithms behind one routing/scheduling interface.

Each scheduler owns its queue state and makes two kinds of decisions: where an
arriving task is enqueued (``route``) and which waiting task an idle server
picks up (``schedule``). Decisions consume only the *estimated* service rates;
whoever runs the simulation draws actual service durations from the true rates,
so estimation error can never leak into the physics of a run.

Queue-length conventions: a task in service keeps counting toward the queue it
occupies (its class queue at the serving server for the weighted-workload
scheduler, the serving server's queue for the single-queue schedulers) until it
departs. Only tasks still waiting in a FIFO can be picked up, so a queue whose
sole count is an in-service task is never a steal candidate.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .topology import Locality, RackTopology, TaskType
from .workload import ServiceRates

_CLASS_OF = {Locality.LOCAL: 0, Locality.RACK_LOCAL: 1, Locality.REMOTE: 2}
_LOCALITY_OF_CLASS = (Locality.LOCAL, Locality.RACK_LOCAL, Locality.REMOTE)

GLOBAL_QUEUE = "global"


class SchedulerKind(Enum):
    BALANCED_PANDAS = "balanced_pandas"
    JSQ_MAXWEIGHT = "jsq_maxweight"
    PRIORITY = "priority"
    FIFO = "fifo"


@dataclass(frozen=True)
class EstimatedRates:
    """Rates the scheduler believes in. Positive, but perturbation may reorder them."""

    alpha: float
    beta: float
    gamma: float

    def __post_init__(self) -> None:
        if min(self.alpha, self.beta, self.gamma) <= 0:
            raise ValueError(
                f"estimated rates must be positive, got "
                f"({self.alpha}, {self.beta}, {self.gamma})"
            )

    @classmethod
    def from_true(cls, rates: ServiceRates) -> "EstimatedRates":
        return cls(rates.alpha, rates.beta, rates.gamma)

    def rate_for(self, locality: Locality) -> float:
        if locality is Locality.LOCAL:
            return self.alpha
        if locality is Locality.RACK_LOCAL:
            return self.beta
        return self.gamma


@dataclass(slots=True)
class Task:
    id: int
    type_index: int
    task_type: TaskType
    arrival_time: float
    start_time: Optional[float] = None
    serving_server: Optional[int] = None


@dataclass
class PandasServerState:
    """Read-only view of one server's three class queues."""

    q_local: tuple[int, ...]
    q_rack: tuple[int, ...]
    q_remote: tuple[int, ...]
    in_service: Optional[tuple[int, Locality]]
    counts: tuple[int, int, int]


@dataclass
class SingleQueueServerState:
    q: tuple[int, ...]
    in_service: Optional[int]
    count: int


@dataclass
class FifoState:
    global_queue: tuple[int, ...]
    in_service: tuple[Optional[int], ...]


def workload_of(counts: Sequence[int], est: EstimatedRates) -> float:
    """Estimated work held by a server: class counts weighted by reciprocal rates."""
    return counts[0] / est.alpha + counts[1] / est.beta + counts[2] / est.gamma


def true_rate(
    rates: ServiceRates,
    task_type: TaskType,
    server: int,
    topology: RackTopology,
) -> float:
    """Actual service rate of ``server`` for a task of ``task_type``."""
    return rates.rate_for(topology.locality_of(task_type, server))


def min_indices(scores: Sequence[float]) -> list[int]:
    """All positions attaining the minimum (exact float ties)."""
    best = min(scores)
    return [i for i, s in enumerate(scores) if s == best]


def max_indices(scores: Sequence[float]) -> list[int]:
    best = max(scores)
    return [i for i, s in enumerate(scores) if s == best]


class _SchedulerBase:
    """Shared precomputation: per-type locality classes against the topology."""

    kind: SchedulerKind

    def __init__(
        self,
        topology: RackTopology,
        est: EstimatedRates,
        types: Sequence[TaskType],
        rng: np.random.Generator,
    ):
        self.topology = topology
        self.est = est
        self.types = list(types)
        self.rng = rng
        m = topology.num_servers
        # loc_class[k][s] is 0/1/2 for server s+1 against type k.
        self.loc_class: list[tuple[int, ...]] = []
        for t in self.types:
            topology.validate_task_type(t)
            self.loc_class.append(
                tuple(_CLASS_OF[topology.locality_of(t, s)] for s in range(1, m + 1))
            )
        self.in_service: list[object] = [None] * (m + 1)  # 1-based

    def _pick(self, tied: list[int]) -> int:
        if len(tied) == 1:
            return tied[0]
        return tied[int(self.rng.integers(len(tied)))]

    def idle_servers(self) -> list[int]:
        return [s for s in range(1, self.topology.num_servers + 1)
                if self.in_service[s] is None]

    def is_idle(self, server: int) -> bool:
        return self.in_service[server] is None

    def locality_class(self, type_index: int, server: int) -> int:
        return self.loc_class[type_index][server - 1]


class BalancedPandasScheduler(_SchedulerBase):
    """Weighted-workload routing with local-first serving.

    Three queues per server (local / rack-local / remote tasks). An arrival
    joins the server minimizing estimated workload divided by the rate that
    server could offer the task; an idle server drains its own local queue,
    then rack-local, then remote.
    """

    kind = SchedulerKind.BALANCED_PANDAS

    def __init__(self, topology, est, types, rng):
        super().__init__(topology, est, types, rng)
        m = topology.num_servers
        self.queues: list[Optional[list[deque[Task]]]] = (
            [None] + [[deque(), deque(), deque()] for _ in range(m)]
        )
        # Class counts include the in-service task until departure.
        self.counts: list[Optional[list[int]]] = [None] + [[0, 0, 0] for _ in range(m)]
        self._est_by_class = (est.alpha, est.beta, est.gamma)
        # den[k][s] is the rate this server would offer type k, per its class.
        self.den: list[tuple[float, ...]] = [
            tuple(self._est_by_class[c] for c in row) for row in self.loc_class
        ]

    def workloads(self) -> list[float]:
        """Current estimated workload of every server (index 0 = server 1)."""
        a, b, g = self._est_by_class
        return [c[0] / a + c[1] / b + c[2] / g for c in self.counts[1:]]

    def route_candidates(self, type_index: int) -> list[int]:
        """Servers minimizing workload over offered rate for this type (1-based)."""
        scores = self._scores(type_index)
        return [i + 1 for i in min_indices(scores)]

    def _scores(self, type_index: int) -> list[float]:
        a, b, g = self._est_by_class
        den = self.den[type_index]
        counts = self.counts
        return [
            (c[0] / a + c[1] / b + c[2] / g) / den[s]
            for s, c in enumerate(counts[1:])
        ]

    def route(self, task: Task) -> tuple[int, Locality]:
        server = self._pick([i + 1 for i in min_indices(self._scores(task.type_index))])
        cls = self.loc_class[task.type_index][server - 1]
        self.queues[server][cls].append(task)
        self.counts[server][cls] += 1
        return server, _LOCALITY_OF_CLASS[cls]

    def schedule(self, server: int) -> Optional[tuple[Task, Locality]]:
        if self.in_service[server] is not None:
            raise RuntimeError(f"schedule called on busy server {server}")
        queues = self.queues[server]
        for cls in (0, 1, 2):
            if queues[cls]:
                task = queues[cls].popleft()
                self.in_service[server] = (task, cls)
                return task, _LOCALITY_OF_CLASS[cls]
        return None

    def complete(self, server: int) -> Task:
        task, cls = self.in_service[server]  # type: ignore[misc]
        self.in_service[server] = None
        self.counts[server][cls] -= 1
        return task

    def can_start(self, server: int) -> bool:
        return any(self.queues[server])

    def server_state(self, server: int) -> PandasServerState:
        queues = self.queues[server]
        in_service = self.in_service[server]
        view = None
        if in_service is not None:
            task, cls = in_service
            view = (task.id, _LOCALITY_OF_CLASS[cls])
        return PandasServerState(
            q_local=tuple(t.id for t in queues[0]),
            q_rack=tuple(t.id for t in queues[1]),
            q_remote=tuple(t.id for t in queues[2]),
            in_service=view,
            counts=tuple(self.counts[server]),
        )

    def queue_length_vector(self) -> list[int]:
        return [sum(c) for c in self.counts[1:]]

    def waiting_count(self) -> int:
        return sum(len(q) for qs in self.queues[1:] for q in qs)


class _SingleQueueScheduler(_SchedulerBase):
    """Common state for the schedulers keeping one local-task queue per server."""

    def __init__(self, topology, est, types, rng):
        super().__init__(topology, est, types, rng)
        m = topology.num_servers
        self.queues: list[Optional[deque[Task]]] = [None] + [deque() for _ in range(m)]
        # Queue count includes the task the server is working on.
        self.counts: list[int] = [0] * (m + 1)

    def route(self, task: Task) -> tuple[int, Locality]:
        """Join the shortest queue among the task's three replica holders."""
        locals_ = self.types[task.type_index]
        counts = self.counts
        best = min(counts[s] for s in locals_)
        server = self._pick([s for s in locals_ if counts[s] == best])
        self.queues[server].append(task)
        self.counts[server] += 1
        return server, Locality.LOCAL

    def _start(self, server: int, source: int) -> tuple[Task, int]:
        task = self.queues[source].popleft()
        self.counts[source] -= 1
        self.counts[server] += 1
        self.in_service[server] = task
        return task, source

    def complete(self, server: int) -> Task:
        task = self.in_service[server]  # type: ignore[assignment]
        self.in_service[server] = None
        self.counts[server] -= 1
        return task

    def can_start(self, server: int) -> bool:
        return any(self.queues[s] for s in range(1, self.topology.num_servers + 1))

    def server_state(self, server: int) -> SingleQueueServerState:
        task = self.in_service[server]
        return SingleQueueServerState(
            q=tuple(t.id for t in self.queues[server]),
            in_service=None if task is None else task.id,
            count=self.counts[server],
        )

    def queue_length_vector(self) -> list[int]:
        return list(self.counts[1:])

    def waiting_count(self) -> int:
        return sum(len(q) for q in self.queues[1:])


class JsqMaxWeightScheduler(_SingleQueueScheduler):
    """Shortest-local-queue routing; idle servers drain the max rate-weighted queue.

    The steal weight looks at where the queue lives relative to the idle
    server (own queue, same rack, other rack), not at the task's own replica
    placement; the served task's actual speed still comes from its placement.
    """

    kind = SchedulerKind.JSQ_MAXWEIGHT

    def __init__(self, topology, est, types, rng):
        super().__init__(topology, est, types, rng)
        m = topology.num_servers
        # weight[s][n]: value per queued task of queue n to an idle server s.
        self.weight: list[Optional[list[float]]] = [None] * (m + 1)
        for s in range(1, m + 1):
            row = [0.0] * (m + 1)
            for n in range(1, m + 1):
                if n == s:
                    row[n] = est.alpha
                elif topology.locality_levels == 3 and topology.rack_of(n) == topology.rack_of(s):
                    row[n] = est.beta
                else:
                    row[n] = est.gamma
            self.weight[s] = row

    def steal_candidates(self, server: int) -> list[int]:
        """Queues with a waiting task attaining the maximum weighted count."""
        weight = self.weight[server]
        counts = self.counts
        candidates = [n for n in range(1, self.topology.num_servers + 1) if self.queues[n]]
        if not candidates:
            return []
        scores = [weight[n] * counts[n] for n in candidates]
        best = max(scores)
        return [n for n, sc in zip(candidates, scores) if sc == best]

    def schedule(self, server: int) -> Optional[tuple[Task, int]]:
        if self.in_service[server] is not None:
            raise RuntimeError(f"schedule called on busy server {server}")
        tied = self.steal_candidates(server)
        if not tied:
            return None
        return self._start(server, self._pick(tied))


class PriorityScheduler(_SingleQueueScheduler):
    """Shortest-local-queue routing; an idle server serves its own queue, else the longest.

    Designed for plain two-level locality; with a rack structure it is the
    known-unstable extension and is included to exhibit exactly that.
    """

    kind = SchedulerKind.PRIORITY

    def steal_candidates(self, server: int) -> list[int]:
        if self.queues[server]:
            return [server]
        counts = self.counts
        candidates = [n for n in range(1, self.topology.num_servers + 1) if self.queues[n]]
        if not candidates:
            return []
        best = max(counts[n] for n in candidates)
        return [n for n in candidates if counts[n] == best]

    def schedule(self, server: int) -> Optional[tuple[Task, int]]:
        if self.in_service[server] is not None:
            raise RuntimeError(f"schedule called on busy server {server}")
        tied = self.steal_candidates(server)
        if not tied:
            return None
        return self._start(server, self._pick(tied))


class FifoScheduler(_SchedulerBase):
    """One shared arrival-order queue, blind to data placement in both directions."""

    kind = SchedulerKind.FIFO

    def __init__(self, topology, est, types, rng):
        super().__init__(topology, est, types, rng)
        self.global_queue: deque[Task] = deque()

    def route(self, task: Task) -> tuple[None, None]:
        self.global_queue.append(task)
        return None, None

    def schedule(self, server: int) -> Optional[tuple[Task, str]]:
        if self.in_service[server] is not None:
            raise RuntimeError(f"schedule called on busy server {server}")
        if not self.global_queue:
            return None
        task = self.global_queue.popleft()
        self.in_service[server] = task
        return task, GLOBAL_QUEUE

    def complete(self, server: int) -> Task:
        task = self.in_service[server]  # type: ignore[assignment]
        self.in_service[server] = None
        return task

    def can_start(self, server: int) -> bool:
        return bool(self.global_queue)

    def state(self) -> FifoState:
        return FifoState(
            global_queue=tuple(t.id for t in self.global_queue),
            in_service=tuple(
                None if t is None else t.id for t in self.in_service[1:]
            ),
        )

    def queue_length_vector(self) -> list[int]:
        per_server = [0 if t is None else 1 for t in self.in_service[1:]]
        return per_server + [len(self.global_queue)]

    def waiting_count(self) -> int:
        return len(self.global_queue)


_SCHEDULER_CLASSES = {
    SchedulerKind.BALANCED_PANDAS: BalancedPandasScheduler,
    SchedulerKind.JSQ_MAXWEIGHT: JsqMaxWeightScheduler,
    SchedulerKind.PRIORITY: PriorityScheduler,
    SchedulerKind.FIFO: FifoScheduler,
}


def make_scheduler(
    kind: SchedulerKind,
    topology: RackTopology,
    est: EstimatedRates,
    types: Sequence[TaskType],
    rng: np.random.Generator,
):
    return _SCHEDULER_CLASSES[kind](topology, est, types, rng)
