"""Distributed arrays, views and the base/view/sub-view-block hierarchy.

Base-blocks are dealt out to ranks block-cyclically: the row-major flattened
block coordinate modulo the number of ranks.  A view is a strided window on a
base and never on another view; slicing a view composes the slices.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from math import prod
from typing import Iterable, Sequence

import numpy as np

from .regions import Region, full_region

DTYPES = {"int64": np.dtype(np.int64), "float64": np.dtype(np.float64)}


def _as_dtype(dtype) -> np.dtype:
    dt = np.dtype(dtype)
    if dt not in DTYPES.values():
        raise ValueError(f"unsupported dtype {dt}; expected int64 or float64")
    return dt


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


@dataclass(frozen=True)
class BaseBlock:
    base_id: int
    coords: tuple[int, ...]
    owner: int


@dataclass(frozen=True)
class ArrayBase:
    """Whole-array metadata; storage lives in the owner ranks' stores."""

    id: int
    shape: tuple[int, ...]
    block_size: tuple[int, ...]
    nprocs: int
    dtype: np.dtype

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def grid(self) -> tuple[int, ...]:
        return tuple(_ceil_div(n, b) for n, b in zip(self.shape, self.block_size))

    @property
    def nblocks(self) -> int:
        return prod(self.grid)

    def owner_of(self, coords: Sequence[int]) -> int:
        return owner_of(self, coords)

    def block(self, coords: Sequence[int]) -> BaseBlock:
        coords = tuple(coords)
        return BaseBlock(self.id, coords, owner_of(self, coords))

    def blocks(self) -> list[BaseBlock]:
        """All base-blocks in row-major coordinate order."""
        return [self.block(c) for c in itertools.product(*(range(g) for g in self.grid))]

    def block_shape(self, coords: Sequence[int]) -> tuple[int, ...]:
        """Extent of one block; edge blocks may be partial."""
        return tuple(
            min(b, n - c * b) for c, b, n in zip(coords, self.block_size, self.shape)
        )

    def block_origin(self, coords: Sequence[int]) -> tuple[int, ...]:
        return tuple(c * b for c, b in zip(coords, self.block_size))

    def view(self) -> "ArrayView":
        return ArrayView(self, full_region(self.shape))

    def __getitem__(self, key) -> "ArrayView":
        return self.view()[key]


def create_distributed_array(
    shape: Sequence[int],
    block_size: Sequence[int],
    nprocs: int,
    dtype="int64",
    array_id: int = 0,
) -> ArrayBase:
    shape = tuple(int(n) for n in shape)
    block_size = tuple(int(b) for b in block_size)
    if not shape or len(shape) != len(block_size):
        raise ValueError("shape and block_size must have the same non-zero length")
    if any(n < 1 for n in shape):
        raise ValueError(f"every dimension must be >= 1, got shape {shape}")
    if any(b < 1 for b in block_size):
        raise ValueError(f"every block dimension must be >= 1, got {block_size}")
    if nprocs < 1:
        raise ValueError("nprocs must be >= 1")
    return ArrayBase(array_id, shape, block_size, int(nprocs), _as_dtype(dtype))


def owner_of(base: ArrayBase, coords: Sequence[int]) -> int:
    """Rank holding the base-block at ``coords``."""
    coords = tuple(coords)
    grid = base.grid
    if len(coords) != len(grid) or any(not 0 <= c < g for c, g in zip(coords, grid)):
        raise ValueError(f"block coordinates {coords} outside grid {grid}")
    flat = 0
    for c, g in zip(coords, grid):
        flat = flat * g + c
    return flat % base.nprocs


@dataclass(frozen=True)
class ArrayView:
    """A strided window on an ``ArrayBase`` given as one range per dimension."""

    base: ArrayBase
    ranges: Region

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(r) for r in self.ranges)

    @property
    def ndim(self) -> int:
        return len(self.ranges)

    @property
    def size(self) -> int:
        return prod(self.shape)

    @property
    def dtype(self) -> np.dtype:
        return self.base.dtype

    def __getitem__(self, key) -> "ArrayView":
        # frontend indexing: resolve negative bounds, then hand over to slice()
        if not isinstance(key, tuple):
            key = (key,)
        spec = []
        for k, n in zip(key, self.shape):
            if not isinstance(k, slice):
                raise TypeError("only slice indexing is supported")
            start, stop, step = k.start, k.stop, k.step
            if start is not None and start < 0:
                start += n
            if stop is not None and stop < 0:
                stop += n
            spec.append(slice(start, stop, step))
        return slice_view(self, spec)

    def __repr__(self) -> str:
        dims = ",".join(
            f"{r.start}:{r.start + len(r) * r.step}" + (f":{r.step}" if r.step != 1 else "")
            for r in self.ranges
        )
        return f"ArrayView(base={self.base.id}, [{dims}])"


def _normalize(spec, extent: int) -> tuple[int, int, int]:
    if isinstance(spec, slice):
        start, stop, step = spec.start, spec.stop, spec.step
    else:
        start, stop, *rest = spec
        step = rest[0] if rest else 1
    start = 0 if start is None else int(start)
    stop = extent if stop is None else int(stop)
    step = 1 if step is None else int(step)
    if step < 1:
        raise ValueError(f"step must be >= 1, got {step}")
    if not 0 <= start <= stop <= extent:
        raise ValueError(f"slice {start}:{stop} out of bounds for extent {extent}")
    return start, stop, step


def slice_view(src: ArrayBase | ArrayView, spec: Iterable) -> ArrayView:
    """View of ``src`` selected by one slice per dimension.

    Slicing a view composes the selections, so the result still refers to the
    underlying base directly.
    """
    view = src.view() if isinstance(src, ArrayBase) else src
    spec = list(spec)
    if len(spec) > view.ndim:
        raise ValueError("too many indices")
    spec += [slice(None)] * (view.ndim - len(spec))
    ranges = []
    for s, r in zip(spec, view.ranges):
        start, stop, step = _normalize(s, len(r))
        ranges.append(r[start:stop:step])
    return ArrayView(view.base, tuple(ranges))


@dataclass(frozen=True)
class Segment:
    """A run of view indices in one dimension that stays inside one base-block."""

    lo: int
    hi: int
    block: int
    local: range


@lru_cache(maxsize=4096)
def dim_segments(rng: range, block: int, view_block: int | None = None) -> tuple[Segment, ...]:
    """Split the view indices of one dimension at base-block boundaries.

    With ``view_block`` set, runs are also split at multiples of it (the
    view-block boundaries in view coordinates).
    """
    n = len(rng)
    out = []
    v = 0
    while v < n:
        b = rng[v] // block
        end = _ceil_div((b + 1) * block - rng.start, rng.step)
        if view_block is not None:
            end = min(end, (v // view_block + 1) * view_block)
        end = min(end, n)
        origin = b * block
        out.append(Segment(v, end, b, range(rng[v] - origin, rng[end - 1] - origin + 1, rng.step)))
        v = end
    return tuple(out)


@dataclass(frozen=True)
class SubViewBlock:
    """Intersection of a view-block with a single base-block."""

    block: BaseBlock
    local: Region
    view_region: Region
    offset: tuple[int, ...]

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(r) for r in self.local)


@dataclass(frozen=True)
class ViewBlock:
    view: ArrayView = field(repr=False)
    coords: tuple[int, ...]
    view_region: Region
    subblocks: tuple[SubViewBlock, ...]

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(r) for r in self.view_region)


def decompose(view: ArrayView) -> list[ViewBlock]:
    """Partition ``view`` into view-blocks and their sub-view-blocks.

    View-blocks are ``block_size`` tiles in view coordinates (edge tiles may be
    partial); each is cut at base-block boundaries into sub-view-blocks.
    """
    base = view.base
    if view.size == 0:
        return []
    per_dim = []
    for rng, bs in zip(view.ranges, base.block_size):
        groups: dict[int, list[Segment]] = {}
        for seg in dim_segments(rng, bs, bs):
            groups.setdefault(seg.lo // bs, []).append(seg)
        per_dim.append(groups)
    out = []
    for vb_coords in itertools.product(*(sorted(g) for g in per_dim)):
        seg_lists = [g[c] for g, c in zip(per_dim, vb_coords)]
        vb_region = tuple(range(s[0].lo, s[-1].hi) for s in seg_lists)
        subs = []
        for segs in itertools.product(*seg_lists):
            coords = tuple(s.block for s in segs)
            subs.append(
                SubViewBlock(
                    block=base.block(coords),
                    local=tuple(s.local for s in segs),
                    view_region=tuple(range(s.lo, s.hi) for s in segs),
                    offset=tuple(s.lo - r.start for s, r in zip(segs, vb_region)),
                )
            )
        out.append(ViewBlock(view, vb_coords, vb_region, tuple(subs)))
    return out


def is_aligned(view: ArrayView) -> bool:
    """True if every view-block is exactly one whole base-block."""
    for vb in decompose(view):
        if len(vb.subblocks) != 1:
            return False
        svb = vb.subblocks[0]
        if svb.local != full_region(view.base.block_shape(svb.block.coords)):
            return False
    return True
