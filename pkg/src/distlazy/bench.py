"""Benchmark harness: run kernels per (ranks, mode), check them, report CSV rows."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import OracleMismatch
from .flush import DeadlockReport, FlushMode, naive_bsp_flush
from .kernels import KERNELS, compare, stencil3, stencil3_oracle
from .runtime import ADD, DEFAULT_THRESHOLD, Runtime
from .transport import LatencyModel, RunMetrics

CSV_COLUMNS = ("kernel", "mode", "ranks", "makespan", "wait_pct", "speedup", "comparisons", "bytes")
MODES = (FlushMode.BLOCKING.value, FlushMode.LATENCY_HIDING.value)


@dataclass(frozen=True)
class BenchmarkSpec:
    kernel: str
    size: int
    block: int
    ranks: tuple[int, ...] = (1, 2, 4)
    iters: int = 1
    threshold: int = DEFAULT_THRESHOLD
    model: LatencyModel = field(default_factory=LatencyModel)
    seed: int = 0
    modes: tuple[str, ...] = MODES
    check_invariants: bool = False

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel!r}; choose from {sorted(KERNELS)}")
        if self.iters < 1:
            raise ValueError("iters must be >= 1")
        if self.size < 1 or self.block < 1:
            raise ValueError("size and block must be >= 1")
        if self.kernel == "jacobi_stencil" and self.size < 3:
            raise ValueError("jacobi_stencil needs size >= 3")
        if not self.ranks or min(self.ranks) < 1:
            raise ValueError("ranks must be a non-empty list of positive counts")
        for m in self.modes:
            FlushMode(m)


@dataclass
class BenchRow:
    kernel: str
    mode: str
    ranks: int
    makespan: float
    wait_pct: float
    speedup: float
    comparisons: int
    bytes: int
    metrics: RunMetrics = field(repr=False)
    log: str = field(default="", repr=False)

    def csv_values(self) -> list:
        return [getattr(self, c) for c in CSV_COLUMNS]


def sequential_oracle(spec: BenchmarkSpec) -> dict:
    return KERNELS[spec.kernel][1](spec.size, spec.block, spec.iters, spec.seed)


def run_once(spec: BenchmarkSpec, ranks: int, mode: str, log: bool = True) -> tuple[dict, Runtime]:
    rt = Runtime(
        ranks,
        spec.model,
        mode=mode,
        threshold=spec.threshold,
        check_invariants=spec.check_invariants,
        log=log,
    )
    result = KERNELS[spec.kernel][0](rt, spec.size, spec.block, spec.iters, spec.seed)
    return result, rt


def run_benchmark(spec: BenchmarkSpec, keep_logs: bool = True) -> list[BenchRow]:
    """One row per (rank count, mode); raises ``OracleMismatch`` on a wrong result."""
    expected = sequential_oracle(spec)
    rows = []
    for mode in spec.modes:
        baseline = None
        for ranks in sorted(set(spec.ranks) | {1}):
            result, rt = run_once(spec, ranks, mode, log=keep_logs)
            problems = compare(result, expected)
            if problems:
                raise OracleMismatch(
                    f"{spec.kernel} mode={mode} ranks={ranks} disagrees with the sequential result:\n  "
                    + "\n  ".join(problems)
                )
            m = rt.metrics()
            if ranks == 1:
                baseline = m.makespan
            if ranks not in spec.ranks:
                continue
            speedup = baseline / m.makespan if m.makespan > 0 else 1.0
            rows.append(
                BenchRow(
                    spec.kernel,
                    mode,
                    ranks,
                    m.makespan,
                    m.wait_pct,
                    speedup,
                    m.comparisons,
                    m.bytes,
                    m,
                    rt.log.to_jsonl(),
                )
            )
    rows.sort(key=lambda r: (r.ranks, spec.modes.index(r.mode)))
    return rows


def format_csv(rows: Sequence[BenchRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r.csv_values()])
    return buf.getvalue()


def format_summary(rows: Sequence[BenchRow]) -> str:
    header = f"{'kernel':<15}{'mode':<16}{'ranks':>6}{'makespan':>14}{'wait%':>8}{'speedup':>9}{'comparisons':>13}{'bytes':>12}"
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(
            f"{r.kernel:<15}{r.mode:<16}{r.ranks:>6}{r.makespan:>14.1f}{100 * r.wait_pct:>7.1f}%"
            f"{r.speedup:>9.2f}{r.comparisons:>13}{r.bytes:>12}"
        )
    return "\n".join(lines) + "\n"


def format_logs(rows: Sequence[BenchRow]) -> str:
    out = []
    for r in rows:
        out.append(json.dumps({"run": {"kernel": r.kernel, "mode": r.mode, "ranks": r.ranks}}) + "\n")
        out.append(r.log)
    return "".join(out)


def emit_report(
    rows: Sequence[BenchRow],
    csv_path: str | None = None,
    summary_path: str | None = None,
    log_path: str | None = None,
) -> tuple[str, str]:
    """Write the CSV, summary table and op logs where paths are given; return CSV and summary text."""
    text, summary = format_csv(rows), format_summary(rows)
    for path, content in ((csv_path, text), (summary_path, summary)):
        if path:
            with open(path, "w", newline="") as fh:
                fh.write(content)
    if log_path:
        with open(log_path, "w") as fh:
            fh.write(format_logs(rows))
    return text, summary


@dataclass
class DeadlockDemo:
    report: DeadlockReport | None
    values: list
    expected: list

    @property
    def ok(self) -> bool:
        return self.report is not None and self.values == self.expected


def deadlock_demo(iters: int = 2) -> DeadlockDemo:
    """The 6-element, 2-rank stencil under generation-by-generation evaluation, then latency hiding.

    The first generation holds the initial fills and the receives; the sends
    that would satisfy those receives depend on the fills and so belong to
    the second generation, which never starts.
    """
    naive = Runtime(2, threshold=10**9)
    M = naive.array(np.arange(1, 7, dtype=np.int64), (3,))
    N = naive.zeros((6,), (3,), dtype="int64")
    for it in range(iters):
        naive.record_ufunc(ADD, N[1:5], [M[2:6], M[0:4]])
        if it + 1 < iters:
            naive.record_copy(M[:], N[:])
    report = naive_bsp_flush(naive.deps, naive.transport, naive.stores, naive.program.ops, naive.log)

    lh = Runtime(2, mode=FlushMode.LATENCY_HIDING, check_invariants=True)
    values = stencil3(lh, 6, 3, iters, 0)["N"].tolist()
    expected = stencil3_oracle(6, 3, iters, 0)["N"].tolist()
    return DeadlockDemo(report, values, expected)
