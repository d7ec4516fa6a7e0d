"""Full-DAG baseline: every new operation is compared with every live one.

Used as the correctness oracle for the dependency lists and as the cost
baseline for comparison counts.  The all-pairs scan is vectorised with numpy
but still counts one comparison per (new access, live access) pair.  Exact
overlap of strided ranges is decided by enumerating elements, independently
of the range arithmetic in :mod:`distlazy.regions`.
"""
from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Hashable

import numpy as np

from .deps import Mode, OperationNode
from .errors import DeadlockError

MAX_DIMS = 4


@dataclass(eq=False)
class DagNode:
    op: OperationNode
    successors: dict[int, int] = field(default_factory=dict)  # succ id -> multiplicity
    in_degree: int = 0
    live: bool = True


def _elements(region) -> frozenset:
    return frozenset(itertools.product(*region))


class DagReference:
    def __init__(self) -> None:
        self.nodes: dict[int, DagNode] = {}
        self.order: list[int] = []
        self.comparisons = 0
        self._block_ids: dict[Hashable, int] = {}
        cap = 64
        self._n = 0
        self._blk = np.zeros(cap, np.int64)
        self._write = np.zeros(cap, bool)
        self._lo = np.zeros((cap, MAX_DIMS), np.int64)
        self._hi = np.ones((cap, MAX_DIMS), np.int64)
        self._unit = np.zeros(cap, bool)
        self._opid = np.zeros(cap, np.int64)
        self._live = np.zeros(cap, bool)
        self._regions: list = []
        self._nlive = 0

    def _grow(self) -> None:
        cap = 2 * len(self._blk)

        def grow(a, fill=0):
            out = np.full((cap,) + a.shape[1:], fill, a.dtype)
            out[: len(a)] = a
            return out

        self._blk = grow(self._blk)
        self._write = grow(self._write)
        self._lo = grow(self._lo)
        self._hi = grow(self._hi, 1)
        self._unit = grow(self._unit)
        self._opid = grow(self._opid)
        self._live = grow(self._live)

    def insert(self, op: OperationNode) -> None:
        if op.id in self.nodes:
            raise ValueError(f"op {op.id} already in the graph")
        node = DagNode(op)
        n = self._n
        live = self._live[:n]
        rows = []
        for acc in op.accesses:
            blk = self._block_ids.setdefault(acc.block, len(self._block_ids))
            lo = np.zeros(MAX_DIMS, np.int64)
            hi = np.ones(MAX_DIMS, np.int64)
            unit = True
            empty = False
            for d, r in enumerate(acc.region):
                if len(r) == 0:
                    empty = True
                    continue
                lo[d], hi[d] = r[0], r[-1] + 1
                unit &= r.step == 1 or len(r) == 1
            write = acc.mode is Mode.WRITE
            rows.append((blk, write, lo, hi, unit, empty))
            self.comparisons += self._nlive
            if empty or self._nlive == 0:
                continue
            cand = (
                live
                & (self._blk[:n] == blk)
                & (self._write[:n] | write)
                & np.all((self._lo[:n] < hi) & (lo < self._hi[:n]), axis=1)
            )
            for i in np.flatnonzero(cand):
                if not (unit and self._unit[i]):
                    if not (_elements(acc.region) & _elements(self._regions[i])):
                        continue
                pred = int(self._opid[i])
                succs = self.nodes[pred].successors
                succs[op.id] = succs.get(op.id, 0) + 1
                node.in_degree += 1
        for (blk, write, lo, hi, unit, empty), acc in zip(rows, op.accesses):
            if self._n == len(self._blk):
                self._grow()
            i = self._n
            self._blk[i], self._write[i] = blk, write
            self._lo[i], self._hi[i] = lo, hi
            self._unit[i] = unit
            self._opid[i] = op.id
            self._live[i] = True
            self._regions.append(acc.region)
            self._n += 1
            self._nlive += 1
        self.nodes[op.id] = node
        self.order.append(op.id)

    def remove(self, op_id: int) -> list[int]:
        """Drop an executed node; return successors whose in-degree hit zero."""
        node = self.nodes[op_id]
        if node.in_degree:
            raise ValueError(f"op {op_id} still has {node.in_degree} predecessors")
        node.live = False
        mask = self._opid[: self._n] == op_id
        self._nlive -= int(np.count_nonzero(mask & self._live[: self._n]))
        self._live[: self._n][mask] = False
        freed = []
        for succ, mult in node.successors.items():
            s = self.nodes[succ]
            s.in_degree -= mult
            if s.in_degree == 0:
                freed.append(succ)
        return freed

    def in_degree(self, op_id: int) -> int:
        return self.nodes[op_id].in_degree

    def edges(self) -> set[tuple[int, int]]:
        return {(p, s) for p, node in self.nodes.items() for s in node.successors}

    def live_ids(self) -> list[int]:
        return [i for i in self.order if self.nodes[i].live]

    def has_cycle(self) -> bool:
        indeg = {i: 0 for i in self.nodes}
        for node in self.nodes.values():
            for s in node.successors:
                indeg[s] += 1
        queue = deque(i for i, d in indeg.items() if d == 0)
        seen = 0
        while queue:
            i = queue.popleft()
            seen += 1
            for s in self.nodes[i].successors:
                indeg[s] -= 1
                if indeg[s] == 0:
                    queue.append(s)
        return seen != len(self.nodes)

    def schedule_blocking(
        self,
        execute: Callable[[OperationNode], None],
        can_run: Callable[[OperationNode], bool] | None = None,
    ) -> list[int]:
        """Execute every live node one at a time, oldest ready node first.

        ``can_run`` lets the executor decline a ready node it cannot finish
        yet (a receive whose send has not run); the next ready node is tried.
        """
        ready = [i for i in self.live_ids() if self.nodes[i].in_degree == 0]
        done = []
        while ready:
            for pos, i in enumerate(ready):
                if can_run is None or can_run(self.nodes[i].op):
                    break
            else:
                raise DeadlockError(f"no runnable node among {ready}")
            del ready[pos]
            execute(self.nodes[i].op)
            ready.extend(self.remove(i))
            done.append(i)
        if self.live_ids():
            raise DeadlockError(f"nodes left unscheduled: {self.live_ids()}")
        return done

    def to_dot(self) -> str:
        lines = ["digraph deps {"]
        for i in self.order:
            op = self.nodes[i].op
            lines.append(f'  op{i} [label="op{i} {op.kind.value} r{op.rank}"];')
        for p, s in sorted(self.edges()):
            lines.append(f"  op{p} -> op{s};")
        lines.append("}")
        return "\n".join(lines)


def dag_insert(graph: DagReference, op: OperationNode) -> None:
    graph.insert(op)


def dag_edges(graph: DagReference) -> set[tuple[int, int]]:
    return graph.edges()


def dag_schedule_blocking(graph: DagReference, execute, can_run=None) -> list[int]:
    return graph.schedule_blocking(execute, can_run)
