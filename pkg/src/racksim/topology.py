"""Server/rack layout and the locality relation between task types and servers.

Servers are numbered 1..M and grouped into equal contiguous racks of size
``rack_size`` (servers 1..rack_size form rack 1, and so on). A task type is
the sorted triple of servers holding the task's data replicas; every other
server is either rack-local (shares a rack with a replica holder) or remote.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple


class Locality(Enum):
    LOCAL = "local"
    RACK_LOCAL = "rack_local"
    REMOTE = "remote"


class TaskType(NamedTuple):
    """Strictly increasing triple of the three servers storing a task's data."""

    m1: int
    m2: int
    m3: int

    def validate(self) -> None:
        if not (0 < self.m1 < self.m2 < self.m3):
            raise ValueError(f"task type must be strictly increasing, got {self}")


@dataclass(frozen=True)
class RackTopology:
    """Immutable cluster layout: ``num_servers`` servers in equal racks.

    ``locality_levels`` is 3 for the full local / rack-local / remote
    hierarchy, or 2 to collapse every non-local server to remote (the setting
    the two-level priority algorithm is designed for).
    """

    num_servers: int
    rack_size: int
    locality_levels: int = 3

    def __post_init__(self) -> None:
        if self.num_servers < 3:
            raise ValueError("need at least 3 servers to place one task type")
        if self.rack_size < 1:
            raise ValueError("rack_size must be positive")
        if self.num_servers % self.rack_size != 0:
            raise ValueError(
                f"num_servers={self.num_servers} is not a multiple of rack_size={self.rack_size}"
            )
        if self.locality_levels not in (2, 3):
            raise ValueError("locality_levels must be 2 or 3")

    @property
    def num_racks(self) -> int:
        return self.num_servers // self.rack_size

    def validate_server(self, server: int) -> None:
        if not 1 <= server <= self.num_servers:
            raise ValueError(f"server id {server} outside 1..{self.num_servers}")

    def validate_task_type(self, task_type: TaskType) -> None:
        task_type.validate()
        self.validate_server(task_type.m3)

    def rack_of(self, server: int) -> int:
        """Rack index in 1..num_racks; blocks of ``rack_size`` consecutive ids."""
        self.validate_server(server)
        return (server - 1) // self.rack_size + 1

    def locality_of(self, task_type: TaskType, server: int) -> Locality:
        """Relation of ``server`` to ``task_type``: replica holder, same rack, or neither."""
        self.validate_task_type(task_type)
        self.validate_server(server)
        if server in task_type:
            return Locality.LOCAL
        if self.locality_levels == 2:
            return Locality.REMOTE
        rack = self.rack_of(server)
        if rack in (self.rack_of(task_type.m1), self.rack_of(task_type.m2), self.rack_of(task_type.m3)):
            return Locality.RACK_LOCAL
        return Locality.REMOTE

    def rack_local_servers(self, task_type: TaskType) -> list[int]:
        return [m for m in range(1, self.num_servers + 1)
                if self.locality_of(task_type, m) is Locality.RACK_LOCAL]

    def remote_servers(self, task_type: TaskType) -> list[int]:
        return [m for m in range(1, self.num_servers + 1)
                if self.locality_of(task_type, m) is Locality.REMOTE]

    def task_types(self) -> list[TaskType]:
        """All C(M, 3) task types in lexicographic order."""
        return [TaskType(*combo)
                for combo in itertools.combinations(range(1, self.num_servers + 1), 3)]

    def locality_row(self, task_type: TaskType) -> tuple[Locality, ...]:
        """Locality of every server 1..M to ``task_type`` (index 0 = server 1)."""
        return tuple(self.locality_of(task_type, m) for m in range(1, self.num_servers + 1))
