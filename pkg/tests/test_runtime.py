import numpy as np
import pytest

from distlazy import ADD, IDENTITY, MULTIPLY, OpKind, Runtime
from distlazy.ops import BlockKey, Fill
from programs import random_program, run_oracle, run_runtime, same_values


def stencil(rt):
    M = rt.array(np.arange(1, 7), (3,))
    N = rt.zeros((6,), (3,), dtype="int64")
    rt.record_ufunc(ADD, N[1:5], [M[2:6], M[0:4]])
    return M, N


def transfers(ops):
    return [(op.kind, op.rank, op.payload.ref.key, op.payload.ref.region) for op in ops if op.kind.is_comm]


def test_stencil_records_twelve_nodes():
    rt = Runtime(2)
    stencil(rt)
    ops = rt.program.ops
    assert len(ops) == 12
    assert sum(isinstance(op.payload, Fill) for op in ops) == 4
    assert sorted(op.id for op in rt.deps.ready_ops()) == [1, 2, 3, 4, 6, 10]


def test_stencil_fetches_remote_fragment():
    rt = Runtime(2)
    M, N = stencil(rt)
    comm = transfers(rt.program.ops)
    # rank 0 computes C[0:2] and needs base element 3 of M from rank 1
    assert (OpKind.SEND, 1, BlockKey(M.base.id, (1,)), (range(0, 1),)) in comm
    assert (OpKind.SEND, 0, BlockKey(M.base.id, (0,)), (range(2, 3),)) in comm
    assert sorted((k.value, r) for k, r, _, _ in comm) == [("recv", 0), ("recv", 1), ("send", 0), ("send", 1)]


def test_stencil_values():
    rt = Runtime(2)
    M, N = stencil(rt)
    assert rt.read_elements(N[1:5]) == [4, 6, 8, 10]
    assert rt.program.count == 0


def test_aligned_add_needs_no_communication():
    rt = Runtime(3)
    a = rt.array(np.arange(36).reshape(6, 6), (2, 3))
    b = rt.array(np.ones((6, 6), int), (2, 3))
    before = rt.program.count
    rt.record_ufunc(ADD, a, [a, b])
    new = rt.program.ops[before:]
    assert not any(op.kind.is_comm for op in new)
    assert len(new) == a.base.nblocks
    assert rt.read_elements(a) == (np.arange(36) + 1).tolist()


def test_shifted_copy_moves_one_element():
    rt = Runtime(2)
    M = rt.array(np.arange(1, 7), (3,))
    N = rt.zeros((6,), (3,), dtype="int64")
    before = rt.program.count
    rt.record_copy(N[1:5], M[0:4])
    comm = transfers(rt.program.ops[before:])
    assert comm == [
        (OpKind.SEND, 0, BlockKey(M.base.id, (0,)), (range(2, 3),)),
        (OpKind.RECV, 1, comm[1][2], comm[1][3]),
    ]
    assert rt.read_elements(N) == [0, 1, 2, 3, 4, 0]


def test_self_copy_is_elided():
    rt = Runtime(2)
    M = rt.array(np.arange(6), (3,))
    before = rt.program.count
    rt.record_copy(M[1:4], M[1:4])
    assert rt.program.count == before


def test_read_before_any_operation():
    rt = Runtime(3)
    M = rt.array(np.arange(10), (4,))
    assert rt.read_elements(M) == list(range(10))
    flushes = rt.flushes
    assert rt.read_elements(M[2:5]) == [2, 3, 4]
    assert rt.flushes == flushes


def test_empty_read_still_flushes():
    rt = Runtime(2)
    M, N = stencil(rt)
    assert rt.read_elements(N[3:3]) == []
    assert rt.program.count == 0
    assert rt.gather(N).tolist() == [0, 4, 6, 8, 10, 0]


def test_autoflush_at_threshold():
    rt = Runtime(1, threshold=2)
    a = rt.array(np.zeros(3), (3,))
    assert rt.flushes == 0 and rt.program.count == 1
    rt.record_ufunc(ADD, a, [a, 1.0])
    assert rt.flushes == 1 and rt.program.count == 0


def test_no_autoflush_below_threshold():
    rt = Runtime(1, threshold=1000)
    a = rt.array(np.zeros(1), (1,))
    for _ in range(998):
        rt.record_ufunc(ADD, a, [a, 1.0])
    assert rt.program.count == 999 and rt.flushes == 0
    assert not rt.maybe_autoflush()


def test_zero_threshold_flushes_every_record():
    rt = Runtime(2, threshold=0)
    M, N = stencil(rt)
    assert rt.program.count == 0
    assert rt.flushes == 3


def test_finalize_empties_the_program():
    rt = Runtime(2)
    stencil(rt)
    rt.finalize()
    assert rt.program.count == 0 and len(rt.deps) == 0


def test_shape_mismatch():
    rt = Runtime(2)
    a = rt.zeros((6,), (3,))
    with pytest.raises(ValueError):
        rt.record_ufunc(ADD, a[0:3], [a[0:4], a[0:3]])
    with pytest.raises(ValueError):
        rt.record_ufunc(ADD, a, [a])


def test_partial_alias_is_rejected():
    rt = Runtime(2)
    a = rt.zeros((6,), (3,))
    with pytest.raises(ValueError):
        rt.record_copy(a[1:5], a[0:4])
    rt.record_ufunc(ADD, a[0:2], [a[0:2], a[4:6]])
    rt.record_ufunc(MULTIPLY, a[0:3], [a[0:3], 2.0])


def test_scalars_broadcast():
    rt = Runtime(2)
    a = rt.array(np.arange(6.0), (2,))
    rt.record_ufunc(MULTIPLY, a, [0.5, a])
    assert rt.read_elements(a) == [0.0, 0.5, 1.0, 1.5, 2.0, 2.5]
    with pytest.raises(TypeError):
        rt.record_ufunc(ADD, a, [a, "x"])


def test_apply_allocates_output():
    rt = Runtime(3)
    a = rt.array(np.arange(8), (3,))
    b = rt.array(np.arange(8) * 10, (2,))
    c = rt.apply(ADD, a, b)
    assert c.shape == (8,)
    assert rt.read_elements(c) == (np.arange(8) * 11).tolist()


def test_assign_overwrites_whole_array():
    rt = Runtime(2)
    a = rt.zeros((2, 4), (1, 4))
    rt.assign(a, np.arange(8).reshape(2, 4))
    assert rt.read_elements(a) == list(range(8))
    with pytest.raises(ValueError):
        rt.assign(a[0:1, :], np.zeros((1, 4)))


def test_view_block_rule_writes_back():
    rt = Runtime(2, exec_rule="view_block")
    M, N = stencil(rt)
    recvs = [op for op in rt.program.ops if op.kind is OpKind.RECV]
    # one write-back lands in N's second block
    assert any(op.payload.ref.key == BlockKey(N.base.id, (1,)) for op in recvs)
    assert rt.read_elements(N[1:5]) == [4, 6, 8, 10]


@pytest.mark.parametrize("rule", ["owner", "view_block"])
def test_random_programs_match_numpy(rule):
    rng = np.random.default_rng(11)
    for i in range(25):
        prog = random_program(rng, [1, 2, 3, 5][i % 4], max_ops=15, max_dim=20)
        got, reads, _ = run_runtime(prog, exec_rule=rule)
        want, wreads = run_oracle(prog)
        assert all(same_values(g, w) for g, w in zip(got, want)), prog.describe()
        assert all(same_values(g, w) for g, w in zip(reads, wreads))


def test_extra_flushes_do_not_change_results():
    rng = np.random.default_rng(5)
    for _ in range(15):
        prog = random_program(rng, 3, max_ops=20, max_dim=16, flush_p=0.0, read_p=0.0)
        plain, _, _ = run_runtime(prog)
        eager, _, _ = run_runtime(prog, threshold=1)
        assert all(np.array_equal(a, b) for a, b in zip(plain, eager))


def test_identity_is_a_copy():
    rt = Runtime(2)
    a = rt.array(np.arange(4), (2,))
    b = rt.zeros((4,), (3,), dtype="int64")
    rt.record_ufunc(IDENTITY, b, [a])
    assert rt.read_elements(b) == [0, 1, 2, 3]


def test_bad_arguments():
    with pytest.raises(ValueError):
        Runtime(0)
    with pytest.raises(ValueError):
        Runtime(2, exec_rule="nearest")
