"""Grid topology and the transmission state machine.

Nodes are numbered row-major, 0..rows*cols-1. A run advances in synchronized
waves: every node submits exactly one story per iteration, each story citing
a parent from the node's candidate set (its neighbours' stories from the
previous iteration).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Optional

from .errors import (
    ConflictError,
    DomainError,
    InvalidConfigError,
    ProtocolViolationError,
    SequencingError,
)

MAX_NODES = 1_000_000


class Neighborhood(str, Enum):
    VON_NEUMANN = "von_neumann"
    MOORE = "moore"


def now_rfc3339() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass(frozen=True)
class NetworkTopology:
    """A rows x cols grid with a fixed neighbourhood rule."""

    rows: int
    cols: int
    neighborhood: Neighborhood = Neighborhood.VON_NEUMANN
    wrap: bool = False

    @property
    def node_count(self) -> int:
        return self.rows * self.cols

    def nodes(self) -> range:
        return range(self.node_count)

    def coords(self, node: int) -> tuple[int, int]:
        self._check_node(node)
        return divmod(node, self.cols)

    def node_at(self, row: int, col: int) -> int:
        return row * self.cols + col

    def neighbors(self, node: int) -> list[int]:
        """Neighbour node ids in deterministic ascending order, self excluded."""
        self._check_node(node)
        r, c = divmod(node, self.cols)
        if self.neighborhood is Neighborhood.VON_NEUMANN:
            offsets = [(-1, 0), (1, 0), (0, -1), (0, 1)]
        else:
            offsets = [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dr, dc) != (0, 0)]
        found: set[int] = set()
        for dr, dc in offsets:
            nr, nc = r + dr, c + dc
            if self.wrap:
                nr %= self.rows
                nc %= self.cols
            elif not (0 <= nr < self.rows and 0 <= nc < self.cols):
                continue
            neighbor = self.node_at(nr, nc)
            if neighbor != node:
                found.add(neighbor)
        return sorted(found)

    def _check_node(self, node: int) -> None:
        if not isinstance(node, int) or not 0 <= node < self.node_count:
            raise DomainError(f"unknown node {node!r} for {self.rows}x{self.cols} grid")


def build_grid(
    rows: int,
    cols: int,
    neighborhood: Neighborhood | str = Neighborhood.VON_NEUMANN,
    wrap: bool = False,
) -> NetworkTopology:
    """Build a grid topology; raises InvalidConfigError on bad dimensions."""
    if not isinstance(rows, int) or not isinstance(cols, int):
        raise InvalidConfigError("grid dimensions must be integers")
    if rows < 1 or cols < 1:
        raise InvalidConfigError(f"grid dimensions must be positive, got {rows}x{cols}")
    if rows * cols < 2:
        raise InvalidConfigError("grid needs at least 2 nodes")
    if rows * cols > MAX_NODES:
        raise InvalidConfigError(f"grid of {rows * cols} nodes exceeds the {MAX_NODES} node limit")
    if isinstance(neighborhood, str):
        try:
            neighborhood = Neighborhood(neighborhood)
        except ValueError:
            raise InvalidConfigError(f"unknown neighborhood {neighborhood!r}") from None
    return NetworkTopology(rows=rows, cols=cols, neighborhood=neighborhood, wrap=bool(wrap))


def neighbors(topology: NetworkTopology, node: int) -> list[int]:
    return topology.neighbors(node)


@dataclass(frozen=True)
class AgentKind:
    """Who produced a story: seed, scripted:<name>, llm:<model>, or human:<pid>."""

    family: str
    detail: str | None = None

    FAMILIES = ("seed", "scripted", "llm", "human")

    def __post_init__(self) -> None:
        if self.family not in self.FAMILIES:
            raise InvalidConfigError(f"unknown agent family {self.family!r}")
        if self.family == "seed" and self.detail is not None:
            raise InvalidConfigError("seed agent kind carries no detail")

    def encode(self) -> str:
        return self.family if self.detail is None else f"{self.family}:{self.detail}"

    @classmethod
    def decode(cls, text: str) -> "AgentKind":
        family, sep, detail = text.partition(":")
        return cls(family, detail if sep else None)


SEED = AgentKind("seed")


@dataclass(frozen=True)
class StoryRecord:
    """One story submission: the unit of the event log."""

    run_id: str
    node: int
    iteration: int
    text: str
    agent_kind: AgentKind
    parent: Optional[tuple[int, int]] = None  # (node, iteration) of the selected source
    created_at: str = field(default_factory=now_rfc3339)
    meta: dict | None = None  # never affects simulation semantics

    def __post_init__(self) -> None:
        if not self.text:
            raise ProtocolViolationError(f"empty story text at node {self.node}, t={self.iteration}")
        if self.iteration < 0:
            raise ProtocolViolationError(f"negative iteration {self.iteration}")
        if self.iteration == 0:
            if self.agent_kind.family != "seed" or self.parent is not None:
                raise ProtocolViolationError("iteration-0 records must be parentless seed records")
        elif self.parent is None:
            raise ProtocolViolationError(f"record at t={self.iteration} needs a parent")


class RunState:
    """Board of completed stories plus the wave counter.

    Mutation is serialized by the orchestrator; reads are safe on a snapshot.
    """

    def __init__(self, topology: NetworkTopology, run_id: str, include_self: bool = False):
        self.topology = topology
        self.run_id = run_id
        self.include_self = include_self
        self.current_iteration = -1  # nothing seeded yet
        self.board: dict[tuple[int, int], StoryRecord] = {}

    # -- queries ----------------------------------------------------------

    def record(self, node: int, iteration: int) -> StoryRecord:
        try:
            return self.board[(node, iteration)]
        except KeyError:
            raise DomainError(f"no record for node {node} at t={iteration}") from None

    def records_at(self, iteration: int) -> list[StoryRecord]:
        return [self.board[(n, iteration)] for n in self.topology.nodes() if (n, iteration) in self.board]

    def candidate_nodes(self, node: int) -> list[int]:
        nodes = self.topology.neighbors(node)
        if self.include_self:
            nodes = sorted(nodes + [node])
        return nodes

    def candidate_set(self, node: int, iteration: int) -> list[StoryRecord]:
        """Stories this node's agent may select from at iteration t (t >= 1)."""
        if iteration < 1:
            raise SequencingError("candidate sets exist from iteration 1 on")
        if iteration - 1 > self.current_iteration:
            raise SequencingError(
                f"iteration {iteration - 1} incomplete; current is {self.current_iteration}"
            )
        return [self.board[(n, iteration - 1)] for n in self.candidate_nodes(node)]

    # -- mutation ---------------------------------------------------------

    def seed(self, seed_story: str, agent_kind: AgentKind = SEED, created_at: str | None = None) -> list[StoryRecord]:
        """Place the seed story on every node as iteration 0."""
        if not seed_story:
            raise InvalidConfigError("seed story must be nonempty")
        if self.current_iteration >= 0:
            raise ConflictError("run already seeded")
        records = []
        for node in self.topology.nodes():
            rec = StoryRecord(
                run_id=self.run_id,
                node=node,
                iteration=0,
                text=seed_story,
                agent_kind=agent_kind,
                parent=None,
                created_at=created_at or now_rfc3339(),
            )
            self.board[(node, 0)] = rec
            records.append(rec)
        self.current_iteration = 0
        return records

    def apply_submission(self, record: StoryRecord) -> None:
        """Store one story; advances the wave counter when the wave is full."""
        t = record.iteration
        if t != self.current_iteration + 1:
            raise ProtocolViolationError(
                f"expected a submission for t={self.current_iteration + 1}, got t={t}"
            )
        key = (record.node, t)
        if key in self.board:
            raise ConflictError(f"slot (node {record.node}, t={t}) already filled")
        self.topology._check_node(record.node)
        parent = record.parent
        assert parent is not None  # guaranteed by StoryRecord for t >= 1
        if parent[1] != t - 1:
            raise ProtocolViolationError(
                f"parent iteration {parent[1]} is not {t - 1} for a t={t} submission"
            )
        if parent[0] not in self.candidate_nodes(record.node):
            raise ProtocolViolationError(
                f"parent node {parent[0]} outside candidate set of node {record.node}"
            )
        self.board[key] = record
        if all((n, t) in self.board for n in self.topology.nodes()):
            self.current_iteration = t

    def pending_nodes(self) -> list[int]:
        """Nodes that have not yet submitted for the wave in progress."""
        t = self.current_iteration + 1
        return [n for n in self.topology.nodes() if (n, t) not in self.board]


def init_run(
    topology: NetworkTopology,
    run_id: str,
    seed_story: str,
    include_self: bool = False,
) -> RunState:
    """Fresh run state with iteration 0 populated by identical seed records."""
    state = RunState(topology, run_id, include_self=include_self)
    state.seed(seed_story)
    return state
