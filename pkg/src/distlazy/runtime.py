"""Lazy frontend: records elementwise operations as per-block operation nodes.

Every array operation is split into nodes and inserted into the dependency
system at record time; nothing executes until a flush, which is triggered by
a read of distributed data, by the number of delayed nodes reaching the
threshold, or by :meth:`Runtime.finalize`.

For each piece of the output (one output sub-view-block under the default
``"owner"`` rule) the executing rank

1. receives every input fragment that lives on another rank (a send node on
   the owner plus a receive node into a scratch buffer on the executing rank),
2. computes the piece region by region, where regions are the common
   refinement of all operands' base-block boundaries,
3. under the ``"view_block"`` rule only, sends output elements it does not
   own back to their owner.
"""
from __future__ import annotations

import itertools
from bisect import bisect_right
from dataclasses import dataclass, field
from functools import lru_cache
from numbers import Number
from typing import Callable, Sequence

import numpy as np

from .deps import DependencySystem, OperationNode, OpKind
from .flush import EventLog, FlushMode, flush
from .layout import ArrayBase, ArrayView, create_distributed_array, decompose, dim_segments
from .ops import BlockKey, Compute, Fill, Ref, Tag, TempKey, Transfer, temp_ref
from .regions import full_region, region_size, regions_intersect, to_slices
from .transport import LatencyModel, RunMetrics, Transport

DEFAULT_THRESHOLD = 512
EXEC_RULES = ("owner", "view_block")


@dataclass(frozen=True)
class UfuncSpec:
    name: str
    arity: int
    kernel: Callable


def _identity(x):
    return x


ADD = UfuncSpec("add", 2, np.add)
SUBTRACT = UfuncSpec("subtract", 2, np.subtract)
MULTIPLY = UfuncSpec("multiply", 2, np.multiply)
DIVIDE = UfuncSpec("divide", 2, np.true_divide)
ABSOLUTE = UfuncSpec("absolute", 1, np.absolute)
IDENTITY = UfuncSpec("identity", 1, _identity)


@dataclass
class DeferredProgram:
    threshold: int = DEFAULT_THRESHOLD
    ops: list[OperationNode] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.ops)


@lru_cache(maxsize=4096)
def _seg_index(rng: range, block: int):
    segs = dim_segments(rng, block)
    return segs, [s.lo for s in segs]


def _clip(rng: range, block: int, lo: int, hi: int) -> list[tuple[int, int, int, range]]:
    """Base-block runs of one view dimension restricted to view indices [lo, hi)."""
    segs, los = _seg_index(rng, block)
    out = []
    i = max(bisect_right(los, lo) - 1, 0)
    while i < len(segs) and segs[i].lo < hi:
        s = segs[i]
        a, b = max(s.lo, lo), min(s.hi, hi)
        if a < b:
            out.append((a, b, s.block, s.local[a - s.lo : b - s.lo]))
        i += 1
    return out


class _Operand:
    """One view operand restricted to a piece: its fragments and their refs."""

    def __init__(self, view: ArrayView, box: Sequence[tuple[int, int]]):
        self.view = view
        self.dims = [
            _clip(rng, bs, lo, hi) for rng, bs, (lo, hi) in zip(view.ranges, view.base.block_size, box)
        ]
        self.lows = [[s[0] for s in d] for d in self.dims]
        self.refs: dict[tuple[int, ...], Ref] = {}

    def fragments(self):
        for idx in itertools.product(*(range(len(d)) for d in self.dims)):
            segs = [d[i] for d, i in zip(self.dims, idx)]
            yield idx, tuple(s[2] for s in segs), tuple(s[3] for s in segs), tuple((s[0], s[1]) for s in segs)

    def cuts(self, d: int) -> set[int]:
        return {s[0] for s in self.dims[d]} | {s[1] for s in self.dims[d]}

    def ref_for(self, box: Sequence[tuple[int, int]]) -> Ref:
        idx = tuple(bisect_right(l, lo) - 1 for l, (lo, _) in zip(self.lows, box))
        ref = self.refs[idx]
        region = tuple(
            r[lo - d[i][0] : hi - d[i][0]] for r, d, i, (lo, hi) in zip(ref.region, self.dims, idx, box)
        )
        return Ref(ref.key, region)


class Runtime:
    """A simulated P-rank lazy array runtime."""

    def __init__(
        self,
        nprocs: int,
        model: LatencyModel | None = None,
        mode: FlushMode | str = FlushMode.LATENCY_HIDING,
        threshold: int = DEFAULT_THRESHOLD,
        exec_rule: str = "owner",
        check_invariants: bool = False,
        log: bool = True,
    ) -> None:
        if nprocs < 1:
            raise ValueError("nprocs must be >= 1")
        if exec_rule not in EXEC_RULES:
            raise ValueError(f"exec_rule must be one of {EXEC_RULES}")
        self.nprocs = nprocs
        self.mode = FlushMode(mode)
        self.exec_rule = exec_rule
        self.check_invariants = check_invariants
        self.deps = DependencySystem()
        self.transport = Transport(nprocs, model)
        self.stores: list[dict] = [{} for _ in range(nprocs)]
        self.program = DeferredProgram(threshold)
        self.log = EventLog(enabled=log)
        self.flushes = 0
        self.recorded = 0
        self._op_ids = itertools.count(1)
        self._array_ids = itertools.count()
        self._temp_ids = itertools.count()
        self._tags = itertools.count()

    # -- arrays ----------------------------------------------------------------

    def array(self, data, block_size: Sequence[int], dtype=None) -> ArrayView:
        """Distributed copy of ``data``; records one fill node per base-block."""
        data = np.asarray(data, dtype=dtype)
        if data.dtype.kind in "biu":
            data = data.astype(np.int64)
        elif data.dtype.kind == "f":
            data = data.astype(np.float64)
        base = self._allocate(data.shape, block_size, data.dtype)
        self._record_fill(base, data)
        return base.view()

    def zeros(self, shape: Sequence[int], block_size: Sequence[int], dtype="float64") -> ArrayView:
        shape = tuple(shape)
        return self.array(np.zeros(shape, dtype), block_size)

    empty = zeros

    def assign(self, view: ArrayView, data) -> None:
        """Overwrite a whole array with host data, block by block (no communication)."""
        if view.ranges != full_region(view.base.shape):
            raise ValueError("assign() takes a full-array view")
        data = np.asarray(data)
        if data.shape != view.shape:
            raise ValueError(f"shape mismatch {data.shape} vs {view.shape}")
        self._record_fill(view.base, data)

    def _allocate(self, shape, block_size, dtype) -> ArrayBase:
        base = create_distributed_array(shape, block_size, self.nprocs, dtype, next(self._array_ids))
        for blk in base.blocks():
            self.stores[blk.owner][BlockKey(base.id, blk.coords)] = np.zeros(base.block_shape(blk.coords), base.dtype)
        return base

    def _record_fill(self, base: ArrayBase, data: np.ndarray) -> None:
        for blk in base.blocks():
            key = BlockKey(base.id, blk.coords)
            origin = base.block_origin(blk.coords)
            shape = base.block_shape(blk.coords)
            part = data[tuple(slice(o, o + n) for o, n in zip(origin, shape))].astype(base.dtype, copy=True)
            ref = Ref(key, full_region(shape))
            op = self._node(OpKind.COMPUTE, blk.owner, Fill(ref, part))
            op.write(key, ref.region)
            self.deps.insert(op)
        self.maybe_autoflush()

    # -- recording -------------------------------------------------------------

    def _node(self, kind: OpKind, rank: int, payload, cost: int = 0) -> OperationNode:
        op = OperationNode(next(self._op_ids), kind, rank, payload, cost)
        self.program.ops.append(op)
        self.recorded += 1
        return op

    def _temp(self, shape, dtype) -> TempKey:
        return TempKey(next(self._temp_ids), tuple(shape), np.dtype(dtype))

    def _transfer(self, src: int, dst: int, src_ref: Ref, dst_ref: Ref) -> None:
        tag = Tag(next(self._tags), src_ref.key, src_ref.region)
        send = self._node(OpKind.SEND, src, Transfer(tag, src, dst, src_ref))
        send.read(src_ref.key, src_ref.region)
        recv = self._node(OpKind.RECV, dst, Transfer(tag, src, dst, dst_ref))
        recv.write(dst_ref.key, dst_ref.region)
        self.deps.insert(send)
        self.deps.insert(recv)

    def record_ufunc(self, spec: UfuncSpec, out: ArrayView, ins: Sequence) -> None:
        """Record ``out[...] = spec(*ins)`` elementwise; scalars broadcast."""
        ins = list(ins)
        if len(ins) != spec.arity:
            raise ValueError(f"{spec.name} takes {spec.arity} inputs, got {len(ins)}")
        for v in ins:
            if isinstance(v, ArrayView):
                if v.shape != out.shape:
                    raise ValueError(f"shape mismatch: {v.shape} vs output {out.shape}")
                if v.base.id == out.base.id and v.ranges != out.ranges and regions_intersect(v.ranges, out.ranges):
                    raise ValueError("input partially overlaps the output; only identical aliasing is supported")
            elif not isinstance(v, (Number, np.number)):
                raise TypeError(f"operand {v!r} is neither a view nor a scalar")
        for vb in decompose(out):
            if self.exec_rule == "owner":
                for svb in vb.subblocks:
                    box = tuple((r.start, r.stop) for r in svb.view_region)
                    self._record_piece(spec, svb.block.owner, box, out, ins)
            else:
                box = tuple((r.start, r.stop) for r in vb.view_region)
                self._record_piece(spec, vb.subblocks[0].block.owner, box, out, ins)
        self.maybe_autoflush()

    def _record_piece(self, spec, rank: int, box, out: ArrayView, ins: list) -> None:
        operands = []
        for v in ins:
            if not isinstance(v, ArrayView):
                operands.append(v)
                continue
            opnd = _Operand(v, box)
            for idx, coords, local, fbox in opnd.fragments():
                key = BlockKey(v.base.id, coords)
                owner = v.base.owner_of(coords)
                if owner == rank:
                    opnd.refs[idx] = Ref(key, local)
                else:
                    tmp = temp_ref(self._temp(tuple(len(r) for r in local), v.dtype))
                    self._transfer(owner, rank, Ref(key, local), tmp)
                    opnd.refs[idx] = tmp
            operands.append(opnd)

        target = _Operand(out, box)
        writebacks = []
        for idx, coords, local, fbox in target.fragments():
            key = BlockKey(out.base.id, coords)
            owner = out.base.owner_of(coords)
            if owner == rank:
                target.refs[idx] = Ref(key, local)
            else:
                tmp = temp_ref(self._temp(tuple(len(r) for r in local), out.dtype))
                target.refs[idx] = tmp
                writebacks.append((owner, tmp, Ref(key, local)))

        views = [o for o in operands if isinstance(o, _Operand)] + [target]
        intervals = []
        for d in range(len(box)):
            cuts = sorted(set().union(*(o.cuts(d) for o in views)))
            intervals.append(list(zip(cuts, cuts[1:])))
        for region_box in itertools.product(*intervals):
            out_ref = target.ref_for(region_box)
            in_refs = [o.ref_for(region_box) if isinstance(o, _Operand) else o for o in operands]
            op = self._node(OpKind.COMPUTE, rank, Compute(spec.kernel, out_ref, in_refs), out_ref.size)
            for a in in_refs:
                if isinstance(a, Ref):
                    op.read(a.key, a.region)
            op.write(out_ref.key, out_ref.region)
            self.deps.insert(op)
        for owner, tmp, dest in writebacks:
            self._transfer(rank, owner, tmp, dest)

    def record_copy(self, out: ArrayView, src: ArrayView) -> None:
        """``out[...] = src``; copying a view onto itself records nothing."""
        if isinstance(src, ArrayView) and src.base.id == out.base.id and src.ranges == out.ranges:
            if src.shape != out.shape:
                raise ValueError("shape mismatch")
            self.maybe_autoflush()
            return
        self.record_ufunc(IDENTITY, out, [src])

    def apply(self, spec: UfuncSpec, *ins, block_size: Sequence[int] | None = None, dtype=None) -> ArrayView:
        """Allocate a fresh output array (like a numpy expression) and record into it."""
        views = [v for v in ins if isinstance(v, ArrayView)]
        if not views:
            raise ValueError("apply() needs at least one array operand")
        shape = views[0].shape
        bs = block_size or tuple(min(b, n) for b, n in zip(views[0].base.block_size, shape))
        if dtype is None:
            dtype = np.result_type(*(v.dtype if isinstance(v, ArrayView) else np.asarray(v).dtype for v in ins))
        out = self.zeros(shape, bs, dtype)
        self.record_ufunc(spec, out, ins)
        return out

    # -- flushing --------------------------------------------------------------

    def maybe_autoflush(self) -> bool:
        if self.program.count >= self.program.threshold:
            self.flush()
            return True
        return False

    def flush(self) -> None:
        ops, self.program.ops = self.program.ops, []
        if not ops:
            return
        flush(self.deps, self.transport, self.stores, ops, self.mode, self.log, self.check_invariants)
        self.deps.compact()
        self.flushes += 1

    def finalize(self) -> None:
        self.flush()

    def read_elements(self, view: ArrayView) -> list:
        """Flush, then gather ``view`` to every rank (a collective) and return it flat."""
        self.flush()
        values = self.gather(view)
        self.transport.collective(values.nbytes)
        return values.ravel().tolist()

    def read_sum(self, view: ArrayView) -> float:
        """Flush, then sum ``view``: local partial sums plus one scalar allreduce.

        The value is numpy's sum over the assembled view, so it matches a
        sequential ``np.sum`` exactly; only the cost model is distributed.
        """
        self.flush()
        for vb in decompose(view):
            for svb in vb.subblocks:
                self.transport.advance_compute(svb.block.owner, region_size(svb.local))
        self.transport.collective(view.dtype.itemsize)
        return np.sum(self.gather(view)).item()

    def gather(self, view: ArrayView) -> np.ndarray:
        """Current contents of ``view`` assembled from the rank stores; no cost charged."""
        out = np.empty(view.shape, view.dtype)
        for vb in decompose(view):
            for svb in vb.subblocks:
                block = self.stores[svb.block.owner][BlockKey(view.base.id, svb.block.coords)]
                out[to_slices(svb.view_region)] = block[to_slices(svb.local)]
        return out

    def metrics(self) -> RunMetrics:
        return self.transport.metrics(self.deps.comparison_count())
