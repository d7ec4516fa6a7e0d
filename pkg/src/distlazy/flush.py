"""Executing recorded operations over the simulated transport.

A single driver interleaves the ranks: at every step it advances the rank
whose next event has the earliest virtual time (ties go to the lower rank),
so a run is bit-reproducible.  What a rank does in its step depends on the
mode:

latency-hiding
    initiate every ready communication, retire whatever has already finished,
    and only when no communication is ready run one computation.  A rank
    blocks on the transport only when it has nothing ready at all.
blocking
    walk the rank's operations in recording order and wait for each
    communication to finish before moving on.
naive BSP (``naive_bsp_flush``)
    run the rank's current ready set as one generation and wait for all of
    that generation's communication before looking at the next.  This can
    deadlock when a receive's matching send sits in a later generation.
"""
from __future__ import annotations

import enum
import json
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

from .dag import DagReference
from .deps import Category, DependencySystem, OperationNode, OpKind, OpState
from .errors import DeadlockError, InvariantViolation, MatchError
from .ops import Store, TempKey, load, save
from .transport import CommHandle, HandleState, Transport


class FlushMode(enum.Enum):
    LATENCY_HIDING = "latency_hiding"
    BLOCKING = "blocking"
    # sequential execution in full-DAG order; a cross-check, not a timing model
    DAG_BLOCKING = "dag_blocking"


EVENTS = ("initiate", "complete", "compute-start", "compute-end", "stall-start", "stall-end")


class EventLog:
    """Executed-op log: (seq, virtual time, rank, op id, kind, event) records."""

    def __init__(self, enabled: bool = True) -> None:
        self.enabled = enabled
        self.records: list[tuple] = []

    def add(self, time: float, rank: int, op: int | None, kind: str, event: str) -> None:
        if self.enabled:
            self.records.append((len(self.records), time, rank, op, kind, event))

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def events(self, event: str | None = None, op: int | None = None) -> list[tuple]:
        return [r for r in self.records if (event is None or r[5] == event) and (op is None or r[3] == op)]

    def first(self, op: int, event: str) -> int:
        """Sequence number of the first ``event`` record for ``op``."""
        for rec in self.records:
            if rec[3] == op and rec[5] == event:
                return rec[0]
        raise KeyError((op, event))

    def to_jsonl(self) -> str:
        keys = ("seq", "time", "rank", "op", "kind", "event")
        return "".join(json.dumps(dict(zip(keys, r))) + "\n" for r in self.records)


@dataclass
class DeadlockReport:
    """Outcome of an evaluator that stopped making progress."""

    blocked: dict[int, list[int]]
    executed: int
    remaining: int
    time: float = 0.0

    def __str__(self) -> str:
        waits = "; ".join(f"rank {r} waits on ops {ops}" for r, ops in sorted(self.blocked.items()))
        return f"deadlock after {self.executed} ops with {self.remaining} left: {waits}"


@dataclass
class _Gen:
    comps: deque
    ops: list
    handles: list = field(default_factory=list)


class _Engine:
    def __init__(
        self,
        deps: DependencySystem,
        transport: Transport,
        stores: Sequence[Store],
        ops: Sequence[OperationNode],
        log: EventLog | None,
        check: bool,
    ) -> None:
        self.deps = deps
        self.tr = transport
        self.stores = stores
        self.log = log if log is not None else EventLog(enabled=False)
        self.check = check
        self.nprocs = transport.nprocs
        self.remaining = len(ops)
        self.executed = 0
        self.inflight: list[list[tuple[CommHandle, OperationNode]]] = [[] for _ in range(self.nprocs)]
        self.todo = [deque() for _ in range(self.nprocs)]
        for op in ops:
            self.todo[op.rank].append(op)
        self.current: list[tuple[CommHandle, OperationNode] | None] = [None] * self.nprocs
        self.gen: list[_Gen | None] = [None] * self.nprocs

    # -- single-op mechanics -------------------------------------------------

    def _retire(self, op: OperationNode) -> None:
        self.deps.retire(op)
        self.remaining -= 1
        self.executed += 1

    def _initiate(self, op: OperationNode) -> CommHandle:
        r = op.rank
        p = op.payload
        if op.kind is OpKind.SEND:
            data = load(self.stores[r], p.ref).copy()
            h = self.tr.post_send(p.src, p.dst, p.tag, data)
        else:
            h = self.tr.post_recv(p.dst, p.src, p.tag)
        self.log.add(self.tr.now[r], r, op.id, op.kind.value, "initiate")
        return h

    def _finish_comm(self, h: CommHandle, op: OperationNode) -> None:
        msg = h.consume()
        if op.kind is OpKind.RECV:
            save(self.stores[op.rank], op.payload.ref, msg.payload)
        self.log.add(self.tr.now[op.rank], op.rank, op.id, op.kind.value, "complete")

    def _compute(self, op: OperationNode) -> None:
        r = op.rank
        self.log.add(self.tr.now[r], r, op.id, op.kind.value, "compute-start")
        op.payload.run(self.stores[r])
        self.tr.advance_compute(r, op.cost)
        self.log.add(self.tr.now[r], r, op.id, op.kind.value, "compute-end")

    def _stall(self, r: int, handles: list[CommHandle]) -> CommHandle:
        self.log.add(self.tr.now[r], r, None, "wait", "stall-start")
        h = self.tr.wait_any(r, handles)
        self.log.add(self.tr.now[r], r, None, "wait", "stall-end")
        return h

    # -- driver ----------------------------------------------------------------

    def drive(self, next_time, step) -> DeadlockReport | None:
        while self.remaining:
            best_t, best_r = None, None
            for r in range(self.nprocs):
                t = next_time(r)
                if t is not None and (best_t is None or t < best_t):
                    best_t, best_r = t, r
            if best_r is None:
                return self._report()
            step(best_r)
        return None

    def _report(self) -> DeadlockReport:
        blocked = {}
        for r in range(self.nprocs):
            ops = [op.id for _, op in self.inflight[r]]
            if self.current[r] is not None:
                ops.append(self.current[r][1].id)
            if self.gen[r] is not None:
                ops.extend(op.id for h, op in self.gen[r].handles if h.state is HandleState.IN_FLIGHT)
            if ops:
                blocked[r] = sorted(ops)
        return DeadlockReport(blocked, self.executed, self.remaining, max(self.tr.now))

    def finish(self) -> None:
        if self.tr.unmatched():
            raise MatchError(f"transfers left unmatched: {self.tr.unmatched()}")
        for store in self.stores:
            for key in [k for k in store if isinstance(k, TempKey)]:
                del store[key]

    # -- latency hiding --------------------------------------------------------

    def lh_next(self, r: int) -> float | None:
        deps = self.deps
        if deps.has_ready(r, Category.COMM) or deps.has_ready(r, Category.COMP):
            return self.tr.now[r]
        c = self.tr.earliest([h for h, _ in self.inflight[r]])
        if c is None:
            return None
        return max(c, self.tr.now[r])

    def lh_step(self, r: int) -> None:
        deps = self.deps
        inflight = self.inflight[r]
        waited = None
        if not (deps.has_ready(r, Category.COMM) or deps.has_ready(r, Category.COMP)):
            if self.check and deps.ready_ops(rank=r):
                raise InvariantViolation(f"rank {r} blocks with ready operations")
            waited = self._stall(r, [h for h, _ in inflight])
        while True:
            # 1. initiate every ready communication
            while (op := deps.pop_ready(r, Category.COMM)) is not None:
                inflight.append((self._initiate(op), op))
            # 2. retire communication that has finished by now
            done = self.tr.test_complete(r, [h for h, _ in inflight])
            if waited is not None:
                done.append(waited)
                waited = None
            if not done:
                break
            finished = {id(h) for h in done}
            keep = []
            for h, op in inflight:
                if id(h) in finished:
                    self._finish_comm(h, op)
                    self._retire(op)
                else:
                    keep.append((h, op))
            inflight[:] = keep
        # 3. no communication is ready: run exactly one computation
        if deps.has_ready(r, Category.COMP):
            if self.check and deps.has_ready(r, Category.COMM):
                raise InvariantViolation(f"rank {r} computes while communication is ready")
            op = deps.pop_ready(r, Category.COMP)
            self._compute(op)
            self._retire(op)
        if self.check:
            assert_invariants(self, r)

    # -- blocking --------------------------------------------------------------

    def blk_next(self, r: int) -> float | None:
        if not self.todo[r]:
            return None
        cur = self.current[r]
        if cur is None:
            return self.tr.now[r]
        c = cur[0].completion
        return None if c is None else max(c, self.tr.now[r])

    def blk_step(self, r: int) -> None:
        op = self.todo[r][0]
        if self.current[r] is None:
            if op.state is not OpState.READY:
                raise InvariantViolation(f"{op!r} reached in recording order but is not ready")
            self.deps.start(op)
            if op.kind is OpKind.COMPUTE:
                self._compute(op)
                self._retire(op)
                self.todo[r].popleft()
                return
            self.current[r] = (self._initiate(op), op)
        h, op = self.current[r]
        if h.completion is None:
            return
        if h.completion > self.tr.now[r]:
            self._stall(r, [h])
        else:
            self.tr.test_complete(r, [h])
        self._finish_comm(h, op)
        self._retire(op)
        self.current[r] = None
        self.todo[r].popleft()

    # -- naive generation-by-generation evaluation -----------------------------

    def bsp_next(self, r: int) -> float | None:
        g = self.gen[r]
        now = self.tr.now[r]
        if g is None:
            ready = self.deps.has_ready(r, Category.COMM) or self.deps.has_ready(r, Category.COMP)
            return now if ready else None
        if g.comps:
            return now
        pending = [h for h, _ in g.handles if h.state is HandleState.IN_FLIGHT]
        if not pending:
            return now
        c = self.tr.earliest(pending)
        return None if c is None else max(c, now)

    def bsp_step(self, r: int) -> None:
        g = self.gen[r]
        deps = self.deps
        if g is None:
            ops = []
            for cat in (Category.COMM, Category.COMP):
                while (op := deps.pop_ready(r, cat)) is not None:
                    ops.append(op)
            g = self.gen[r] = _Gen(deque(op for op in ops if not op.kind.is_comm), ops)
            for op in ops:
                if op.kind.is_comm:
                    g.handles.append((self._initiate(op), op))
            return
        if g.comps:
            self._compute(g.comps.popleft())
            return
        pending = [h for h, _ in g.handles if h.state is HandleState.IN_FLIGHT]
        if pending:
            h = self._stall(r, pending)
            op = next(o for hh, o in g.handles if hh is h)
            self._finish_comm(h, op)
            return
        for op in g.ops:
            self._retire(op)
        self.gen[r] = None


def assert_invariants(engine: _Engine, rank: int | None = None) -> None:
    """Check the flush invariants; raise ``InvariantViolation`` on failure.

    1. every operation with no outstanding dependency is in the ready queue
       (or already executing);
    2. a computation starts only with no communication in the ready queue;
    3. a rank blocks only when it has no ready computation.

    Rules 2 and 3 are checked by the latency-hiding step itself, at the
    moment a computation is chosen or a stall begins; this function covers
    rule 1 plus clock sanity.
    """
    engine.deps.check_ready_completeness()
    ranks = range(engine.nprocs) if rank is None else [rank]
    for r in ranks:
        if engine.tr.now[r] < 0 or engine.tr.wait[r] < 0 or engine.tr.compute[r] < 0:
            raise InvariantViolation(f"rank {r} has a negative clock or accumulator")


def flush(
    deps: DependencySystem,
    transport: Transport,
    stores: Sequence[Store],
    ops: Sequence[OperationNode],
    mode: FlushMode = FlushMode.LATENCY_HIDING,
    log: EventLog | None = None,
    check: bool = False,
) -> None:
    """Execute ``ops`` (already inserted into ``deps``) to completion."""
    if mode is FlushMode.DAG_BLOCKING:
        _dag_flush(deps, transport, stores, ops, log)
        return
    eng = _Engine(deps, transport, stores, ops, log, check)
    if mode is FlushMode.LATENCY_HIDING:
        report = eng.drive(eng.lh_next, eng.lh_step)
    else:
        report = eng.drive(eng.blk_next, eng.blk_step)
    if report is not None:
        raise DeadlockError(str(report))
    if check:
        assert_invariants(eng)
    eng.finish()


def naive_bsp_flush(
    deps: DependencySystem,
    transport: Transport,
    stores: Sequence[Store],
    ops: Sequence[OperationNode],
    log: EventLog | None = None,
) -> DeadlockReport | None:
    """Generation-by-generation evaluation; returns a report instead of hanging."""
    eng = _Engine(deps, transport, stores, ops, log, check=False)
    report = eng.drive(eng.bsp_next, eng.bsp_step)
    if report is None:
        eng.finish()
    return report


def _dag_flush(deps, transport, stores, ops, log) -> None:
    graph = DagReference()
    for op in ops:
        graph.insert(op)
    mailbox = {}
    log = log if log is not None else EventLog(enabled=False)

    def can_run(op: OperationNode) -> bool:
        return op.kind is not OpKind.RECV or op.payload.tag in mailbox

    def execute(op: OperationNode) -> None:
        if op.counter != 0:
            raise InvariantViolation(f"DAG order reached {op!r} before its dependencies")
        deps.start(op)
        r, p = op.rank, op.payload
        if op.kind is OpKind.SEND:
            mailbox[p.tag] = load(stores[r], p.ref).copy()
        elif op.kind is OpKind.RECV:
            save(stores[r], p.ref, mailbox.pop(p.tag))
        else:
            p.run(stores[r])
            transport.advance_compute(r, op.cost)
        log.add(transport.now[r], r, op.id, op.kind.value, "complete")
        deps.retire(op)

    graph.schedule_blocking(execute, can_run)
    for store in stores:
        for key in [k for k in store if isinstance(k, TempKey)]:
            del store[key]
