import numpy as np
import pytest

from distlazy import Category, DagReference, DependencySystem, InvariantViolation, OperationNode, OpKind, OpState
from distlazy.deps import AccessNode, Mode, conflict
from programs import random_access_ops


def acc(mode, region, block="b"):
    return AccessNode(block, (region,), mode, None)


def write_op(i, block="b", region=range(0, 3), kind=OpKind.COMPUTE, rank=0):
    return OperationNode(i, kind, rank).write(block, (region,))


def test_conflict_rules():
    assert not conflict(acc(Mode.READ, range(0, 3)), acc(Mode.READ, range(0, 3)))
    assert conflict(acc(Mode.WRITE, range(0, 3)), acc(Mode.READ, range(2, 3)))
    assert not conflict(acc(Mode.WRITE, range(0, 1)), acc(Mode.READ, range(2, 3)))
    assert not conflict(acc(Mode.WRITE, range(0, 3)), acc(Mode.WRITE, range(0, 3), block="c"))
    assert not conflict(acc(Mode.WRITE, range(0, 8, 2)), acc(Mode.WRITE, range(1, 8, 2)))


def test_first_insert_is_ready():
    deps = DependencySystem()
    op = write_op(1)
    assert deps.insert(op) == []
    assert op.counter == 0 and op.state is OpState.READY
    assert deps.ready_ops() == [op]


def test_write_chain_counts_every_live_predecessor():
    k = 6
    deps, dag = DependencySystem(), DagReference()
    ops = [write_op(i) for i in range(1, k + 1)]
    for op in ops:
        deps.insert(op)
        dag.insert(op)
    assert [op.counter for op in ops] == list(range(k))
    assert [dag.in_degree(op.id) for op in ops] == list(range(k))

    deps.start(ops[0])
    released = deps.retire(ops[0])
    assert released == [ops[1]]
    assert [op.counter for op in ops[1:]] == list(range(k - 1))


def test_retire_last_op_empties_everything():
    deps = DependencySystem()
    op = write_op(1)
    deps.insert(op)
    assert deps.pop_ready(0, Category.COMP) is op
    assert deps.retire(op) == []
    assert len(deps) == 0
    assert deps.dependency_list("b") == []
    assert op.state is OpState.DONE


def test_retire_with_dependencies_aborts():
    deps = DependencySystem()
    a, b = write_op(1), write_op(2)
    deps.insert(a)
    deps.insert(b)
    with pytest.raises(InvariantViolation):
        deps.retire(b)


def test_double_insert_aborts():
    deps = DependencySystem()
    op = write_op(1)
    deps.insert(op)
    with pytest.raises(InvariantViolation):
        deps.insert(op)


def test_ready_queue_is_split_by_rank_and_category():
    deps = DependencySystem()
    send = write_op(1, block="x", kind=OpKind.SEND, rank=1)
    comp = write_op(2, block="y", rank=1)
    other = write_op(3, block="z", rank=0)
    for op in (send, comp, other):
        deps.insert(op)
    assert deps.ready_ops(Category.COMM) == [send]
    assert deps.ready_ops(Category.COMP, rank=1) == [comp]
    assert deps.has_ready(0, Category.COMP) and not deps.has_ready(0, Category.COMM)
    assert deps.pop_ready(1, Category.COMM) is send
    assert send.state is OpState.RUNNING
    assert deps.pop_ready(1, Category.COMM) is None


def test_reads_do_not_serialise():
    deps = DependencySystem()
    w = write_op(1)
    r1 = OperationNode(2, OpKind.COMPUTE, 0).read("b", (range(0, 2),))
    r2 = OperationNode(3, OpKind.COMPUTE, 0).read("b", (range(1, 3),))
    w2 = write_op(4, region=range(1, 2))
    for op in (w, r1, r2, w2):
        deps.insert(op)
    assert [op.counter for op in (w, r1, r2, w2)] == [0, 1, 1, 3]
    deps.start(w)
    assert set(deps.retire(w)) == {r1, r2}
    assert w2.counter == 2


def test_comparisons_count_both_insert_and_retire():
    deps = DependencySystem()
    a, b = write_op(1), write_op(2)
    deps.insert(a)
    assert deps.comparison_count() == 0
    deps.insert(b)
    assert deps.comparison_count() == 1
    deps.start(a)
    deps.retire(a)
    assert deps.comparison_count() == 2
    deps.reset_comparisons()
    assert deps.comparison_count() == 0


def test_dump_lists_accesses_in_insertion_order():
    deps = DependencySystem()
    deps.insert(write_op(1))
    deps.insert(OperationNode(2, OpKind.COMPUTE, 0).read("b", (range(1, 2),)))
    assert deps.dump() == "b:\n  op1 w [0:3]\n  op2 r [1:2]"


def test_counters_track_the_graph_through_random_retirement():
    rng = np.random.default_rng(3)
    for _ in range(20):
        ops = random_access_ops(rng, 40)
        deps, dag = DependencySystem(), DagReference()
        for op in ops:
            deps.insert(op)
            dag.insert(op)
        while len(deps):
            deps.check_ready_completeness()
            ready = deps.ready_ops()
            assert {op.id for op in ready} == {i for i in dag.live_ids() if dag.in_degree(i) == 0}
            op = ready[int(rng.integers(len(ready)))]
            deps.start(op)
            deps.retire(op)
            dag.remove(op.id)
            for live in deps.live_ops:
                assert live.counter == dag.in_degree(live.id)
