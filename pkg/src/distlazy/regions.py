"""Strided element ranges and their intersection arithmetic.

A region is a tuple of ``range`` objects, one per dimension, selecting the
cartesian product of the per-dimension indices.  Only positive steps occur.
"""
from __future__ import annotations

from math import gcd, prod
from typing import Tuple

Region = Tuple[range, ...]


def ranges_intersect(a: range, b: range) -> bool:
    """True if the two positive-step ranges share at least one integer."""
    if not a or not b:
        return False
    lo = max(a[0], b[0])
    hi = min(a[-1], b[-1])
    if lo > hi:
        return False
    sa, sb = a.step, b.step
    if sa == 1 or sb == 1:
        # the unit-step range covers every integer in [lo, hi]; the other has
        # an element there iff its first element >= lo is <= hi
        other = b if sa == 1 else a
        first = other[0] + -(-(lo - other[0]) // other.step) * other.step
        return first <= hi
    g = gcd(sa, sb)
    if (b[0] - a[0]) % g:
        return False
    x = a[0] + -(-(lo - a[0]) // sa) * sa
    # residues of x mod sb repeat with period sb // g
    for _ in range(sb // g):
        if x > hi:
            return False
        if (x - b[0]) % sb == 0:
            return True
        x += sa
    return False


def regions_intersect(a: Region, b: Region) -> bool:
    return all(ranges_intersect(x, y) for x, y in zip(a, b))


def region_shape(region: Region) -> tuple[int, ...]:
    return tuple(len(r) for r in region)


def region_size(region: Region) -> int:
    return prod(len(r) for r in region)


def to_slices(region: Region) -> tuple[slice, ...]:
    return tuple(slice(r.start, r.stop, r.step) for r in region)


def full_region(shape: tuple[int, ...]) -> Region:
    return tuple(range(n) for n in shape)


def sub_region(region: Region, lo: tuple[int, ...], hi: tuple[int, ...]) -> Region:
    """Positions ``lo[d]:hi[d]`` of each dimension of ``region``."""
    return tuple(r[a:b] for r, a, b in zip(region, lo, hi))


def format_region(region: Region) -> str:
    parts = []
    for r in region:
        if r.step == 1:
            parts.append(f"{r.start}:{r.start + len(r)}")
        else:
            parts.append(f"{r.start}:{r.start + len(r) * r.step}:{r.step}")
    return "[" + ",".join(parts) + "]"
