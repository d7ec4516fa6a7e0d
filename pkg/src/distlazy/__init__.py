"""Simulated distributed lazy array runtime with latency-hiding flushes."""
from .dag import DagReference, dag_edges, dag_insert, dag_schedule_blocking
from .deps import Category, DependencySystem, Mode, OperationNode, OpKind, OpState, conflict
from .errors import DeadlockError, InvariantViolation, MatchError, OracleMismatch
from .flush import DeadlockReport, EventLog, FlushMode, assert_invariants, flush, naive_bsp_flush
from .layout import (
    ArrayBase,
    ArrayView,
    create_distributed_array,
    decompose,
    is_aligned,
    owner_of,
    slice_view,
)
from .runtime import (
    ABSOLUTE,
    ADD,
    DIVIDE,
    IDENTITY,
    MULTIPLY,
    SUBTRACT,
    DeferredProgram,
    Runtime,
    UfuncSpec,
)
from .transport import LatencyModel, RunMetrics, Transport

__version__ = "0.1.0"

__all__ = [
    "DagReference",
    "dag_edges",
    "dag_insert",
    "dag_schedule_blocking",
    "Category",
    "DependencySystem",
    "Mode",
    "OperationNode",
    "OpKind",
    "OpState",
    "conflict",
    "DeadlockError",
    "InvariantViolation",
    "MatchError",
    "OracleMismatch",
    "DeadlockReport",
    "EventLog",
    "FlushMode",
    "assert_invariants",
    "flush",
    "naive_bsp_flush",
    "ArrayBase",
    "ArrayView",
    "create_distributed_array",
    "decompose",
    "is_aligned",
    "owner_of",
    "slice_view",
    "ABSOLUTE",
    "ADD",
    "DIVIDE",
    "IDENTITY",
    "MULTIPLY",
    "SUBTRACT",
    "DeferredProgram",
    "Runtime",
    "UfuncSpec",
    "LatencyModel",
    "RunMetrics",
    "Transport",
]
