"""Per-base-block dependency lists with reference-counted operation nodes.

Instead of a global DAG, every block (base-block or rank-local temporary
buffer) keeps an insertion-ordered list of live access-nodes.  Inserting an
operation scans only the lists of the blocks it touches; its reference
counter is the number of earlier live access-nodes that conflict with one of
its own.  Retiring an operation removes its access-nodes and decrements the
counter of every later conflicting access-node's operation.
"""
from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Hashable, Iterable

from .errors import InvariantViolation
from .regions import Region, format_region, regions_intersect


class OpKind(enum.Enum):
    SEND = "send"
    RECV = "recv"
    COMPUTE = "compute"

    @property
    def is_comm(self) -> bool:
        return self is not OpKind.COMPUTE


class Category(enum.Enum):
    COMM = "comm"
    COMP = "comp"


class Mode(enum.Enum):
    READ = "r"
    WRITE = "w"


class OpState(enum.Enum):
    PENDING = "pending"
    READY = "ready"
    RUNNING = "running"
    DONE = "done"


@dataclass(eq=False)
class AccessNode:
    block: Hashable
    region: Region
    mode: Mode
    op: "OperationNode" = field(repr=False)


@dataclass(eq=False)
class OperationNode:
    id: int
    kind: OpKind
    rank: int
    payload: Any = None
    cost: int = 0
    accesses: list[AccessNode] = field(default_factory=list)
    counter: int = 0
    state: OpState = OpState.PENDING

    @property
    def category(self) -> Category:
        return Category.COMM if self.kind.is_comm else Category.COMP

    def read(self, block: Hashable, region: Region) -> "OperationNode":
        self.accesses.append(AccessNode(block, region, Mode.READ, self))
        return self

    def write(self, block: Hashable, region: Region) -> "OperationNode":
        self.accesses.append(AccessNode(block, region, Mode.WRITE, self))
        return self

    def __repr__(self) -> str:
        return f"Op({self.id}, {self.kind.value}, rank={self.rank}, counter={self.counter})"


def conflict(a: AccessNode, b: AccessNode) -> bool:
    """Same block, overlapping elements, and at least one write."""
    if a.mode is Mode.READ and b.mode is Mode.READ:
        return False
    return a.block == b.block and regions_intersect(a.region, b.region)


class DependencySystem:
    def __init__(self) -> None:
        self._lists: dict[Hashable, list[AccessNode]] = {}
        self._ready: dict[tuple[int, Category], deque[OperationNode]] = {}
        self._live: dict[int, OperationNode] = {}
        self._comparisons = 0

    def __len__(self) -> int:
        return len(self._live)

    @property
    def live_ops(self) -> list[OperationNode]:
        return list(self._live.values())

    def dependency_list(self, block: Hashable) -> list[AccessNode]:
        return list(self._lists.get(block, ()))

    def comparison_count(self) -> int:
        return self._comparisons

    def reset_comparisons(self) -> None:
        self._comparisons = 0

    def insert(self, op: OperationNode) -> list[int]:
        """Register ``op``; return the ids of the live ops it waits on, one per conflicting pair."""
        if op.id in self._live or op.state is not OpState.PENDING:
            raise InvariantViolation(f"{op!r} inserted twice")
        preds = []
        for acc in op.accesses:
            lst = self._lists.setdefault(acc.block, [])
            for prev in lst:
                self._comparisons += 1
                if conflict(prev, acc):
                    preds.append(prev.op.id)
        for acc in op.accesses:
            self._lists[acc.block].append(acc)
        op.counter = len(preds)
        self._live[op.id] = op
        if not preds:
            self._enqueue(op)
        return preds

    def retire(self, op: OperationNode) -> list[OperationNode]:
        """Remove a finished operation; return the operations it made ready."""
        if op.counter != 0 or op.state not in (OpState.READY, OpState.RUNNING):
            raise InvariantViolation(f"retiring {op!r} in state {op.state.value}")
        if self._live.pop(op.id, None) is None:
            raise InvariantViolation(f"{op!r} is not live")
        op.state = OpState.DONE
        released = []
        for acc in op.accesses:
            lst = self._lists[acc.block]
            idx = next(i for i, a in enumerate(lst) if a is acc)
            del lst[idx]
            for later in lst[idx:]:
                if later.op is op:
                    continue
                self._comparisons += 1
                if conflict(acc, later):
                    dep = later.op
                    dep.counter -= 1
                    if dep.counter < 0:
                        raise InvariantViolation(f"negative counter on {dep!r}")
                    if dep.counter == 0:
                        self._enqueue(dep)
                        released.append(dep)
            if not lst:
                del self._lists[acc.block]
        return released

    def _enqueue(self, op: OperationNode) -> None:
        op.state = OpState.READY
        self._ready.setdefault((op.rank, op.category), deque()).append(op)

    def _queue(self, rank: int, category: Category) -> deque[OperationNode] | None:
        q = self._ready.get((rank, category))
        # entries started or retired outside pop_ready are dropped lazily
        while q and q[0].state is not OpState.READY:
            q.popleft()
        return q

    def has_ready(self, rank: int, category: Category) -> bool:
        return bool(self._queue(rank, category))

    def pop_ready(self, rank: int, category: Category) -> OperationNode | None:
        """Take the FIFO head of a ready sub-queue and mark it running."""
        q = self._queue(rank, category)
        if not q:
            return None
        op = q.popleft()
        op.state = OpState.RUNNING
        return op

    def compact(self) -> None:
        """Drop queue entries that were started outside ``pop_ready``."""
        for key in list(self._ready):
            q = deque(op for op in self._ready[key] if op.state is OpState.READY)
            if q:
                self._ready[key] = q
            else:
                del self._ready[key]

    def start(self, op: OperationNode) -> None:
        """Mark a ready operation as executing without going through the queue head."""
        if op.state is not OpState.READY or op.counter != 0:
            raise InvariantViolation(f"starting {op!r} in state {op.state.value}")
        op.state = OpState.RUNNING

    def ready_ops(self, category: Category | None = None, rank: int | None = None) -> list[OperationNode]:
        out = []
        for (r, c), q in sorted(self._ready.items(), key=lambda kv: (kv[0][0], kv[0][1].value)):
            if (rank is None or r == rank) and (category is None or c is category):
                out.extend(op for op in q if op.state is OpState.READY)
        return out

    def check_ready_completeness(self) -> None:
        """Every live op with counter zero is queued or running, and vice versa."""
        queued = {id(op) for q in self._ready.values() for op in q}
        for op in self._live.values():
            if op.counter < 0:
                raise InvariantViolation(f"negative counter on {op!r}")
            if op.counter == 0 and op.state is OpState.PENDING:
                raise InvariantViolation(f"{op!r} has no dependencies but is not in the ready queue")
            if op.state is OpState.READY and id(op) not in queued:
                raise InvariantViolation(f"{op!r} marked ready but missing from the queue")
            if op.counter > 0 and op.state is not OpState.PENDING:
                raise InvariantViolation(f"{op!r} has dependencies but state {op.state.value}")

    def dump(self, blocks: Iterable[Hashable] | None = None) -> str:
        """Text listing of the dependency lists, one block per paragraph."""
        keys = list(blocks) if blocks is not None else sorted(self._lists, key=str)
        lines = []
        for key in keys:
            lines.append(f"{key}:")
            for acc in self._lists.get(key, ()):
                lines.append(f"  op{acc.op.id} {acc.mode.value} {format_region(acc.region)}")
        return "\n".join(lines)
