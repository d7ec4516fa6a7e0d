"""Payloads carried by operation nodes and the rank-local buffers they touch."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, NamedTuple, Union

import numpy as np

from .regions import Region, full_region, region_size, to_slices


@dataclass(frozen=True)
class BlockKey:
    array: int
    coords: tuple[int, ...]

    def __str__(self) -> str:
        return f"a{self.array}{list(self.coords)}"


@dataclass(frozen=True)
class TempKey:
    """A rank-local scratch buffer for received or to-be-sent elements."""

    id: int
    shape: tuple[int, ...]
    dtype: np.dtype

    def __str__(self) -> str:
        return f"tmp{self.id}"


Key = Union[BlockKey, TempKey]


class Tag(NamedTuple):
    seq: int
    key: Key
    region: Region


@dataclass(frozen=True)
class Ref:
    key: Key
    region: Region

    @property
    def size(self) -> int:
        return region_size(self.region)


Store = dict


def buffer(store: Store, key: Key) -> np.ndarray:
    buf = store.get(key)
    if buf is None:
        if not isinstance(key, TempKey):
            raise KeyError(f"block {key} is not stored on this rank")
        buf = store[key] = np.empty(key.shape, key.dtype)
    return buf


def load(store: Store, ref: Ref) -> np.ndarray:
    return buffer(store, ref.key)[to_slices(ref.region)]


def save(store: Store, ref: Ref, values) -> None:
    buffer(store, ref.key)[to_slices(ref.region)] = values


@dataclass(eq=False)
class Fill:
    """Write initial contents into one whole base-block."""

    out: Ref
    data: np.ndarray = field(repr=False)

    def run(self, store: Store) -> None:
        save(store, self.out, self.data)


@dataclass(eq=False)
class Compute:
    """Elementwise kernel over one region; inputs are refs or scalar constants."""

    kernel: Callable
    out: Ref
    ins: list[Any]

    def run(self, store: Store) -> None:
        args = [load(store, a) if isinstance(a, Ref) else a for a in self.ins]
        save(store, self.out, self.kernel(*args))


@dataclass(eq=False)
class Transfer:
    """One side of a point-to-point transfer; ``ref`` is read (send) or written (recv)."""

    tag: Tag
    src: int
    dst: int
    ref: Ref


def temp_ref(key: TempKey) -> Ref:
    return Ref(key, full_region(key.shape))
