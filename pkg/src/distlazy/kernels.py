"""Benchmark kernels, each as a lazy distributed program plus a plain numpy twin.

The numpy versions apply the same elementwise operations in the same order,
so float results are expected to agree bit for bit, not just approximately.
Every kernel returns a dict of named results; ``"reads"`` holds the values
read back during the run (the convergence deltas, for the Jacobi kernels).
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from .runtime import ABSOLUTE, ADD, DIVIDE, MULTIPLY, SUBTRACT, Runtime


def _rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


# -- stencil3: the 1-D three-point stencil ------------------------------------


def stencil3(rt: Runtime, size: int, block: int, iters: int, seed: int) -> dict:
    n = size
    M = rt.array(np.arange(1, n + 1, dtype=np.int64), (block,))
    N = rt.zeros((n,), (block,), dtype="int64")
    for it in range(iters):
        rt.record_ufunc(ADD, N[1 : n - 1], [M[2:n], M[0 : n - 2]])
        if it + 1 < iters:
            rt.record_copy(M[:], N[:])
    rt.finalize()
    return {"N": rt.gather(N), "reads": []}


def stencil3_oracle(size: int, block: int, iters: int, seed: int) -> dict:
    n = size
    M = np.arange(1, n + 1, dtype=np.int64)
    N = np.zeros(n, np.int64)
    for it in range(iters):
        N[1 : n - 1] = M[2:n] + M[0 : n - 2]
        if it + 1 < iters:
            M[:] = N
    return {"N": N, "reads": []}


# -- jacobi_stencil: five-point stencil with a delta read every sweep ----------


def jacobi_stencil(rt: Runtime, size: int, block: int, iters: int, seed: int) -> dict:
    n = size
    full = rt.array(_rng(seed).random((n, n)), (block, block))
    work = rt.zeros((n - 2, n - 2), (block, block))
    tmp = rt.zeros((n - 2, n - 2), (block, block))
    cells = full[1:-1, 1:-1]
    up, down = full[0:-2, 1:-1], full[2:, 1:-1]
    left, right = full[1:-1, 0:-2], full[1:-1, 2:]
    deltas = []
    for _ in range(iters):
        rt.record_copy(work, cells)
        rt.record_ufunc(ADD, tmp, [up, down])
        rt.record_ufunc(ADD, tmp, [tmp, left])
        rt.record_ufunc(ADD, tmp, [tmp, right])
        rt.record_ufunc(MULTIPLY, tmp, [0.2, tmp])
        rt.record_ufunc(ADD, work, [work, tmp])
        rt.record_ufunc(SUBTRACT, tmp, [cells, work])
        rt.record_ufunc(ABSOLUTE, tmp, [tmp])
        deltas.append(rt.read_sum(tmp))
        rt.record_copy(cells, work)
    rt.finalize()
    return {"full": rt.gather(full), "reads": deltas}


def jacobi_stencil_oracle(size: int, block: int, iters: int, seed: int) -> dict:
    n = size
    full = _rng(seed).random((n, n))
    work = np.zeros((n - 2, n - 2))
    tmp = np.zeros((n - 2, n - 2))
    cells = full[1:-1, 1:-1]
    up, down = full[0:-2, 1:-1], full[2:, 1:-1]
    left, right = full[1:-1, 0:-2], full[1:-1, 2:]
    deltas = []
    for _ in range(iters):
        work[...] = cells
        tmp[...] = up + down
        tmp[...] = tmp + left
        tmp[...] = tmp + right
        tmp[...] = 0.2 * tmp
        work[...] = work + tmp
        tmp[...] = cells - work
        tmp[...] = np.absolute(tmp)
        deltas.append(np.sum(tmp).item())
        cells[...] = work
    return {"full": full, "reads": deltas}


# -- jacobi: row-distributed matrix-vector iteration ---------------------------


def _jacobi_system(n: int, seed: int):
    rng = _rng(seed)
    A = rng.random((n, n)) + n * np.eye(n)
    b = rng.random((n, 1))
    return A, b


def _column_halving(width: int):
    """(dst, src) column spans of the in-place tree that sums columns into column 0."""
    steps = []
    w = width
    while w > 1:
        if w % 2:
            steps.append(((0, 1), (w - 1, w)))
            w -= 1
        h = w // 2
        steps.append(((0, h), (h, w)))
        w = h
    return steps


def jacobi(rt: Runtime, size: int, block: int, iters: int, seed: int) -> dict:
    n = size
    A_h, b_h = _jacobi_system(n, seed)
    A = rt.array(A_h, (block, n))
    X = rt.zeros((n, n), (block, n))
    T = rt.zeros((n, n), (block, n))
    b = rt.array(b_h, (block, 1))
    D = rt.array(np.diag(A_h).reshape(n, 1), (block, 1))
    x = rt.zeros((n, 1), (block, 1))
    tmp = rt.zeros((n, 1), (block, 1))
    reads = []
    for _ in range(iters):
        xv = np.array(rt.read_elements(x)).reshape(1, n)
        reads.append(float(np.sum(xv)))
        rt.assign(X, np.tile(xv, (n, 1)))
        rt.record_ufunc(MULTIPLY, T, [A, X])
        for (d0, d1), (s0, s1) in _column_halving(n):
            rt.record_ufunc(ADD, T[:, d0:d1], [T[:, d0:d1], T[:, s0:s1]])
        rt.record_ufunc(MULTIPLY, tmp, [D, x])
        rt.record_ufunc(SUBTRACT, tmp, [T[:, 0:1], tmp])
        rt.record_ufunc(SUBTRACT, tmp, [b, tmp])
        rt.record_ufunc(DIVIDE, x, [tmp, D])
    rt.finalize()
    return {"x": rt.gather(x), "reads": reads}


def jacobi_oracle(size: int, block: int, iters: int, seed: int) -> dict:
    n = size
    A, b = _jacobi_system(n, seed)
    D = np.diag(A).reshape(n, 1).copy()
    x = np.zeros((n, 1))
    T = np.zeros((n, n))
    tmp = np.zeros((n, 1))
    reads = []
    for _ in range(iters):
        xv = x.reshape(1, n).copy()
        reads.append(float(np.sum(xv)))
        X = np.tile(xv, (n, 1))
        T[...] = A * X
        for (d0, d1), (s0, s1) in _column_halving(n):
            T[:, d0:d1] = T[:, d0:d1] + T[:, s0:s1]
        tmp[...] = D * x
        tmp[...] = T[:, 0:1] - tmp
        tmp[...] = b - tmp
        x[...] = tmp / D
    return {"x": x, "reads": reads}


# -- elementwise: aligned arrays only, no communication at all -----------------


def elementwise(rt: Runtime, size: int, block: int, iters: int, seed: int) -> dict:
    rng = _rng(seed)
    shape, bs = (size, size), (block, block)
    a = rt.array(rng.random(shape), bs)
    b = rt.array(rng.random(shape), bs)
    c = rt.zeros(shape, bs)
    for _ in range(iters):
        rt.record_ufunc(MULTIPLY, c, [a, b])
        rt.record_ufunc(ADD, c, [c, 0.5])
        rt.record_ufunc(DIVIDE, a, [c, b])
    rt.finalize()
    return {"a": rt.gather(a), "c": rt.gather(c), "reads": []}


def elementwise_oracle(size: int, block: int, iters: int, seed: int) -> dict:
    rng = _rng(seed)
    shape = (size, size)
    a = rng.random(shape)
    b = rng.random(shape)
    c = np.zeros(shape)
    for _ in range(iters):
        c[...] = a * b
        c[...] = c + 0.5
        a[...] = c / b
    return {"a": a, "c": c, "reads": []}


KERNELS: dict[str, tuple[Callable, Callable]] = {
    "stencil3": (stencil3, stencil3_oracle),
    "jacobi": (jacobi, jacobi_oracle),
    "jacobi_stencil": (jacobi_stencil, jacobi_stencil_oracle),
    "elementwise": (elementwise, elementwise_oracle),
}


def compare(got: dict, want: dict, rtol: float = 1e-12) -> list[str]:
    """Human-readable differences between two kernel results; empty if they agree."""
    problems = []
    for name, expected in want.items():
        actual = got.get(name)
        if name == "reads":
            exp, act = np.asarray(expected, float), np.asarray(actual, float)
        else:
            exp, act = np.asarray(expected), np.asarray(actual)
        if exp.shape != act.shape:
            problems.append(f"{name}: shape {act.shape} != expected {exp.shape}")
            continue
        if exp.dtype.kind in "iub":
            bad = np.argwhere(exp != act)
        else:
            scale = np.maximum(np.abs(exp), np.finfo(float).tiny)
            with np.errstate(invalid="ignore", over="ignore"):
                off = ~(np.abs(act - exp) <= rtol * scale)
            bad = np.argwhere(off & ~((act == exp) | (np.isnan(act) & np.isnan(exp))))
        if bad.size:
            idx = tuple(int(i) for i in bad[0])
            problems.append(
                f"{name}: {len(bad)} element(s) differ, first at {idx}: got {act[idx].item()!r}, expected {exp[idx].item()!r}"
            )
    return problems
