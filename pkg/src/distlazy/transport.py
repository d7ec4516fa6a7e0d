"""Deterministic simulated message passing under per-rank virtual clocks.

Sends are eager: a message leaves when the send is posted and arrives after
``alpha + nbytes / beta`` (after the link frees up, if links serialize).  A
send completes on arrival; a receive completes at the later of its own post
time and the arrival of its matching send.  Receives posted before their send
have no known completion until the send is posted.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from .errors import DeadlockError, MatchError


@dataclass(frozen=True)
class LatencyModel:
    """Transfer time ``alpha + nbytes / beta``; compute time ``elements * compute_cost``.

    The defaults make moving one element cost the same as computing one
    (8 bytes at 32 bytes per unit versus 0.25 units per element), with a
    per-message latency that dwarfs small halo transfers.
    """

    alpha: float = 1000.0
    beta: float = 32.0
    compute_cost: float = 0.25
    serialize: bool = False

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if not self.beta > 0:
            raise ValueError("beta must be > 0")
        if self.compute_cost < 0:
            raise ValueError("compute_cost must be >= 0")

    def transfer_time(self, nbytes: int) -> float:
        if math.isinf(self.beta):
            return self.alpha
        return self.alpha + nbytes / self.beta


@dataclass(frozen=True)
class TransportMessage:
    src: int
    dst: int
    tag: Hashable
    payload: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return int(self.payload.nbytes)


class HandleState(enum.Enum):
    IN_FLIGHT = "in-flight"
    COMPLETE = "complete"
    CONSUMED = "consumed"


@dataclass(eq=False)
class CommHandle:
    kind: str
    rank: int
    peer: int
    tag: Hashable
    post_time: float
    completion: float | None = None
    message: TransportMessage | None = None
    state: HandleState = HandleState.IN_FLIGHT

    def consume(self) -> TransportMessage | None:
        if self.state is not HandleState.COMPLETE:
            raise MatchError(f"consuming {self.kind} handle {self.tag} in state {self.state.value}")
        self.state = HandleState.CONSUMED
        return self.message


@dataclass
class RunMetrics:
    makespan: float
    wait: list[float]
    compute: list[float]
    messages: int
    bytes: int
    comparisons: int = 0

    @property
    def nprocs(self) -> int:
        return len(self.wait)

    @property
    def idle(self) -> list[float]:
        return [self.makespan - w - c for w, c in zip(self.wait, self.compute)]

    @property
    def wait_pct(self) -> float:
        """Share of all rank-time spent stalled on communication."""
        if self.makespan <= 0:
            return 0.0
        return sum(self.wait) / (self.makespan * self.nprocs)


class Transport:
    def __init__(self, nprocs: int, model: LatencyModel | None = None) -> None:
        self.nprocs = nprocs
        self.model = model or LatencyModel()
        self.now = [0.0] * nprocs
        self.wait = [0.0] * nprocs
        self.compute = [0.0] * nprocs
        self.messages = 0
        self.bytes = 0
        self._link_free: dict[tuple[int, int], float] = {}
        self._sends: dict[Hashable, CommHandle] = {}
        self._recvs: dict[Hashable, CommHandle] = {}
        self._matched: set[Hashable] = set()

    def post_send(self, src: int, dst: int, tag: Hashable, payload: np.ndarray) -> CommHandle:
        if tag in self._sends or tag in self._matched:
            raise MatchError(f"duplicate send tag {tag!r}")
        msg = TransportMessage(src, dst, tag, payload)
        t = self.now[src]
        start = t
        if self.model.serialize:
            start = max(t, self._link_free.get((src, dst), 0.0))
        arrival = start + self.model.transfer_time(msg.size)
        if self.model.serialize:
            self._link_free[(src, dst)] = arrival
        self.messages += 1
        self.bytes += msg.size
        handle = CommHandle("send", src, dst, tag, t, arrival, msg)
        recv = self._recvs.pop(tag, None)
        if recv is not None:
            self._match(recv, msg, arrival)
        else:
            self._sends[tag] = handle
        return handle

    def post_recv(self, dst: int, src: int, tag: Hashable) -> CommHandle:
        if tag in self._recvs or tag in self._matched:
            raise MatchError(f"receive tag {tag!r} matches a send that already has a receiver")
        handle = CommHandle("recv", dst, src, tag, self.now[dst])
        send = self._sends.pop(tag, None)
        if send is not None:
            self._match(handle, send.message, send.completion)
        else:
            self._recvs[tag] = handle
        return handle

    def _match(self, recv: CommHandle, msg: TransportMessage, arrival: float) -> None:
        if msg.src != recv.peer or msg.dst != recv.rank:
            raise MatchError(f"tag {msg.tag!r}: send {msg.src}->{msg.dst} vs receive {recv.peer}->{recv.rank}")
        recv.message = msg
        recv.completion = max(recv.post_time, arrival)
        self._matched.add(msg.tag)

    def test_complete(self, rank: int, handles: Sequence[CommHandle]) -> list[CommHandle]:
        """Handles already finished at the rank's current time; never advances the clock."""
        t = self.now[rank]
        done = []
        for h in handles:
            if h.state is HandleState.IN_FLIGHT and h.completion is not None and h.completion <= t:
                h.state = HandleState.COMPLETE
                done.append(h)
        return done

    @staticmethod
    def earliest(handles: Sequence[CommHandle]) -> float | None:
        times = [h.completion for h in handles if h.state is HandleState.IN_FLIGHT and h.completion is not None]
        return min(times) if times else None

    def wait_any(self, rank: int, handles: Sequence[CommHandle]) -> CommHandle:
        """Advance the rank's clock to the earliest known completion and return that handle."""
        pending = [h for h in handles if h.state is HandleState.IN_FLIGHT]
        if not pending:
            raise DeadlockError(f"rank {rank} waits with nothing in flight")
        known = [h for h in pending if h.completion is not None]
        if not known:
            raise DeadlockError(f"rank {rank} waits on receives whose sends were never posted")
        h = min(known, key=lambda h: h.completion)
        self.advance_wait(rank, h.completion)
        h.state = HandleState.COMPLETE
        return h

    def advance_wait(self, rank: int, until: float) -> float:
        delta = until - self.now[rank]
        if delta > 0:
            self.wait[rank] += delta
            self.now[rank] = until
            return delta
        return 0.0

    def advance_compute(self, rank: int, elements: int) -> float:
        cost = elements * self.model.compute_cost
        self.now[rank] += cost
        self.compute[rank] += cost
        return cost

    def collective(self, nbytes: int = 0) -> float:
        """All ranks meet; the clock jumps to the latest rank plus one transfer.

        A single rank exchanges nothing and pays nothing.
        """
        t = max(self.now)
        if self.nprocs > 1:
            t += self.model.transfer_time(nbytes)
        for r in range(self.nprocs):
            self.advance_wait(r, t)
        return t

    def unmatched(self) -> list[Hashable]:
        return list(self._sends) + list(self._recvs)

    def metrics(self, comparisons: int = 0) -> RunMetrics:
        return RunMetrics(
            makespan=max(self.now),
            wait=list(self.wait),
            compute=list(self.compute),
            messages=self.messages,
            bytes=self.bytes,
            comparisons=comparisons,
        )
