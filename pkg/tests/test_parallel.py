import threading

import numpy as np
import pytest

from sdpcut.bnb import SolverConfig, solve_serial
from sdpcut.instance import make_graph, reduce_subproblem, root_subproblem
from sdpcut.parallel import (
    Channels,
    Message,
    MessageKind,
    NodeRecord,
    ProtocolError,
    decode_message,
    decode_node,
    encode_message,
    encode_node,
    node_record_for,
    solve_parallel,
    subproblem_from_record,
    worker_loop,
)

from oracles import brute_force_max_cut, random_graph, unit_density_graph

WEAK = dict(max_rounds=0, root_max_rounds=0)


def roundtrip(msg: Message) -> Message:
    return decode_message(encode_message(msg))


def test_node_roundtrip_examples():
    root = NodeRecord(fixed=(), upper_bound=12.5, depth=0)
    assert decode_node(encode_node(root)) == root
    node = NodeRecord(fixed=((3, 1), (7, 0)), upper_bound=12.5, depth=2)
    assert decode_node(encode_node(node)) == node


def test_node_roundtrip_fuzz():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        nfix = int(rng.integers(0, 12))
        vertices = rng.choice(500, size=nfix, replace=False) + 1
        fixed = tuple(sorted((int(v), int(rng.integers(0, 2))) for v in vertices))
        record = NodeRecord(
            fixed=fixed,
            upper_bound=float(rng.standard_normal() * 10 ** rng.integers(0, 6)),
            depth=int(rng.integers(0, 60)),
        )
        back = decode_node(encode_node(record))
        assert back == record  # bit-exact, including the float bound


def test_message_roundtrips_all_kinds():
    g = make_graph(3, [(1, 2, 1.5), (2, 3, -2.0)])
    cases = [
        Message(MessageKind.BROADCAST_INSTANCE, graph=g),
        Message(MessageKind.BROADCAST_DIFF, diff=1.25),
        Message(MessageKind.WORKER_IDLE, rank=3),
        Message(MessageKind.NEW_INCUMBENT, value=7.0, assignment=(0, 1, 1)),
        Message(MessageKind.REQUEST_WORKERS, count=4),
        Message(MessageKind.ASSIGN_WORKERS, ranks=(0, 2)),
        Message(MessageKind.ASSIGN_WORKERS, ranks=()),
        Message(
            MessageKind.SUBPROBLEM_TRANSFER,
            lb=3.5,
            node=NodeRecord(fixed=((2, 1),), upper_bound=9.0, depth=1),
        ),
        Message(MessageKind.TERMINATE),
    ]
    for msg in cases:
        back = roundtrip(msg)
        assert back.kind == msg.kind
        for field in ("diff", "rank", "value", "assignment", "count", "ranks", "node", "lb"):
            assert getattr(back, field) == getattr(msg, field)
    back = roundtrip(cases[0])
    assert back.graph == g


def test_decode_rejects_garbage():
    with pytest.raises(ProtocolError):
        decode_message(b"\x00\x00")
    good = encode_message(Message(MessageKind.TERMINATE))
    with pytest.raises(ProtocolError):
        decode_message(good[:-1] + b"\x07\x07")  # length mismatch
    tampered = bytearray(good)
    tampered[4] = 99  # unsupported version
    with pytest.raises(ProtocolError):
        decode_message(bytes(tampered))
    tampered = bytearray(good)
    tampered[5] = 200  # unknown kind
    with pytest.raises(ProtocolError):
        decode_message(bytes(tampered))


def test_record_replay_matches_direct_reduction():
    rng = np.random.default_rng(1)
    g = random_graph(rng, 9, density=0.8)
    sub = root_subproblem(g)
    sub = reduce_subproblem(sub, 4, 1)
    sub = reduce_subproblem(sub, 2, 0)
    record = node_record_for(sub, 11.0, 2)
    rebuilt = subproblem_from_record(record, g)
    assert rebuilt.fixed == sub.fixed
    assert rebuilt.offset == sub.offset
    assert rebuilt.vertex_map == sub.vertex_map
    assert rebuilt.reduced == sub.reduced


def test_worker_rejects_wrong_first_message():
    channels = Channels(1)
    channels.send(Channels.COORDINATOR, 0, Message(MessageKind.BROADCAST_DIFF, diff=0.0))
    with pytest.raises(ProtocolError):
        worker_loop(0, channels, SolverConfig())


def test_single_worker_matches_serial():
    for seed in (0, 3, 4):
        g = random_graph(np.random.default_rng((99, seed)), 12, density=0.7)
        cfg = SolverConfig(seed=1, workers=1, **WEAK)
        serial = solve_serial(g, SolverConfig(seed=1, **WEAK))
        par = solve_parallel(g, cfg)
        assert par.optimum == serial.optimum
        assert par.proof


def test_parallel_equivalence_and_termination():
    g = unit_density_graph(0, 18)
    expect, _ = brute_force_max_cut(g)
    for workers in (1, 2, 4, 8):
        cfg = SolverConfig(seed=1, workers=workers, **WEAK)
        sol = solve_parallel(g, cfg)
        assert sol.optimum == expect
        assert sol.stats["terminates_per_worker"] == [1] * workers
        created = sol.stats["nodes_created"]
        classified = (
            sol.stats["nodes_pruned"]
            + sol.stats["nodes_branched"]
            + sol.stats["nodes_leaf"]
            + 1  # the root, evaluated by the coordinator
        )
        assert created == classified
        assert sol.nodes_evaluated == created


def test_both_root_children_are_dispatched():
    sends = []
    real_send = Channels.send

    class Recording(Channels):
        def send(self, src, dst, msg):
            if src == Channels.COORDINATOR and msg.kind == MessageKind.SUBPROBLEM_TRANSFER:
                sends.append(dst)
            real_send(self, src, dst, msg)

    g = unit_density_graph(0, 18)  # known to branch at the root under WEAK
    cfg = SolverConfig(seed=1, workers=2, **WEAK)

    import sdpcut.parallel as par_mod

    channels = Recording(2)
    results = {}

    def run(rank):
        results[rank] = worker_loop(rank, channels, cfg)

    threads = [threading.Thread(target=run, args=(w,)) for w in range(2)]
    for t in threads:
        t.start()
    incumbent, root_ub, created, diff = par_mod.coordinator_loop(g, cfg, channels)
    for t in threads:
        t.join(timeout=60)
    assert sends == [0, 1]  # one root child to each idle worker
    assert incumbent.value == brute_force_max_cut(g)[0]
    assert all(results[w].terminates_seen == 1 for w in (0, 1))


def test_interleaving_robustness():
    g = unit_density_graph(0, 16)
    expect, _ = brute_force_max_cut(g)
    for trial in range(25):
        cfg = SolverConfig(seed=1, workers=3, **WEAK)
        sol = solve_parallel(g, cfg, jitter_rng=np.random.default_rng(trial))
        assert sol.optimum == expect
        assert sol.stats["terminates_per_worker"] == [1, 1, 1]
