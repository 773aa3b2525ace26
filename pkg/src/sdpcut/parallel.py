"""Coordinator-worker branch and bound over message-passing channels.

One coordinator tracks worker status, merges and rebroadcasts incumbents,
and brokers work sharing; workers run the same node step as the serial
driver on local best-bound queues.  All traffic crosses the channels as
length-prefixed versioned binary records, so the wire format is exercised
on every run.  Transport is in-process (one thread per worker); the
protocol itself never touches shared state, and the channel layer accepts
an RNG to randomize cross-sender delivery order for interleaving tests.
"""

from __future__ import annotations

import heapq
import queue
import struct
import threading
import time
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .bnb import BBNode, SolverConfig, Solution, evaluate_node, should_prune
from .heuristic import CutSolution, trivial_cut
from .instance import Graph, Subproblem, make_graph, reduce_subproblem, root_subproblem

WIRE_VERSION = 1
RECV_TIMEOUT = 300.0  # safety net: a stalled protocol aborts instead of hanging


class ProtocolError(RuntimeError):
    pass


class MessageKind(IntEnum):
    BROADCAST_INSTANCE = 1
    BROADCAST_DIFF = 2
    WORKER_IDLE = 3
    NEW_INCUMBENT = 4
    REQUEST_WORKERS = 5
    ASSIGN_WORKERS = 6
    SUBPROBLEM_TRANSFER = 7
    TERMINATE = 8


@dataclass(frozen=True)
class NodeRecord:
    """Wire form of a search node: fixed variables, inherited bound, depth."""

    fixed: tuple[tuple[int, int], ...]
    upper_bound: float
    depth: int


@dataclass
class Message:
    kind: MessageKind
    graph: Graph | None = None
    diff: float | None = None
    rank: int | None = None
    value: float | None = None
    assignment: tuple[int, ...] | None = None
    count: int | None = None
    ranks: tuple[int, ...] | None = None
    node: NodeRecord | None = None
    lb: float | None = None


def encode_node(node: NodeRecord) -> bytes:
    parts = [struct.pack("<I", len(node.fixed))]
    for vertex, val in node.fixed:
        parts.append(struct.pack("<IB", vertex, val))
    parts.append(struct.pack("<dI", node.upper_bound, node.depth))
    return b"".join(parts)


def decode_node(data: bytes) -> NodeRecord:
    try:
        (nfix,) = struct.unpack_from("<I", data, 0)
        off = 4
        fixed = []
        for _ in range(nfix):
            vertex, val = struct.unpack_from("<IB", data, off)
            off += 5
            fixed.append((vertex, val))
        ub, depth = struct.unpack_from("<dI", data, off)
        off += 12
    except struct.error as exc:
        raise ProtocolError(f"truncated node record: {exc}") from None
    if off != len(data):
        raise ProtocolError("trailing bytes in node record")
    return NodeRecord(fixed=tuple(fixed), upper_bound=ub, depth=depth)


def node_record_for(sub: Subproblem, upper_bound: float, depth: int) -> NodeRecord:
    return NodeRecord(
        fixed=tuple(sorted(sub.fixed.items())), upper_bound=upper_bound, depth=depth
    )


def subproblem_from_record(record: NodeRecord, instance: Graph) -> Subproblem:
    """Rebuild the node by replaying its fixings on the shared instance."""
    sub = root_subproblem(instance)
    for vertex, val in record.fixed:
        sub = reduce_subproblem(sub, vertex, val)
    return sub


def _encode_graph(g: Graph) -> bytes:
    parts = [struct.pack("<IIB", g.n, len(g.edges), 1 if g.integer_weights else 0)]
    for i, j, w in g.edges:
        parts.append(struct.pack("<IId", i, j, w))
    return b"".join(parts)


def _decode_graph(data: bytes, off: int) -> tuple[Graph, int]:
    n, m, _flag = struct.unpack_from("<IIB", data, off)
    off += 9
    edges = []
    for _ in range(m):
        i, j, w = struct.unpack_from("<IId", data, off)
        off += 16
        edges.append((i, j, w))
    return make_graph(n, edges), off


def encode_message(msg: Message) -> bytes:
    body = [struct.pack("<BB", WIRE_VERSION, int(msg.kind))]
    kind = msg.kind
    if kind == MessageKind.BROADCAST_INSTANCE:
        body.append(_encode_graph(msg.graph))
    elif kind == MessageKind.BROADCAST_DIFF:
        body.append(struct.pack("<d", msg.diff))
    elif kind == MessageKind.WORKER_IDLE:
        body.append(struct.pack("<I", msg.rank))
    elif kind == MessageKind.NEW_INCUMBENT:
        body.append(struct.pack("<dI", msg.value, len(msg.assignment)))
        body.append(bytes(msg.assignment))
    elif kind == MessageKind.REQUEST_WORKERS:
        body.append(struct.pack("<I", msg.count))
    elif kind == MessageKind.ASSIGN_WORKERS:
        body.append(struct.pack("<I", len(msg.ranks)))
        body.extend(struct.pack("<I", r) for r in msg.ranks)
    elif kind == MessageKind.SUBPROBLEM_TRANSFER:
        body.append(struct.pack("<d", msg.lb))
        body.append(encode_node(msg.node))
    elif kind == MessageKind.TERMINATE:
        pass
    else:  # pragma: no cover
        raise ProtocolError(f"cannot encode kind {kind}")
    payload = b"".join(body)
    return struct.pack("<I", len(payload)) + payload


def decode_message(data: bytes) -> Message:
    try:
        (length,) = struct.unpack_from("<I", data, 0)
        if length != len(data) - 4:
            raise ProtocolError(
                f"length prefix {length} does not match payload {len(data) - 4}"
            )
        version, kind_raw = struct.unpack_from("<BB", data, 4)
        if version != WIRE_VERSION:
            raise ProtocolError(f"unsupported wire version {version}")
        try:
            kind = MessageKind(kind_raw)
        except ValueError:
            raise ProtocolError(f"unknown message kind {kind_raw}") from None
        off = 6
        if kind == MessageKind.BROADCAST_INSTANCE:
            graph, off = _decode_graph(data, off)
            return Message(kind=kind, graph=graph)
        if kind == MessageKind.BROADCAST_DIFF:
            (diff,) = struct.unpack_from("<d", data, off)
            return Message(kind=kind, diff=diff)
        if kind == MessageKind.WORKER_IDLE:
            (rank,) = struct.unpack_from("<I", data, off)
            return Message(kind=kind, rank=rank)
        if kind == MessageKind.NEW_INCUMBENT:
            value, n = struct.unpack_from("<dI", data, off)
            off += 12
            assignment = tuple(data[off : off + n])
            if len(assignment) != n:
                raise ProtocolError("truncated incumbent assignment")
            return Message(kind=kind, value=value, assignment=assignment)
        if kind == MessageKind.REQUEST_WORKERS:
            (count,) = struct.unpack_from("<I", data, off)
            return Message(kind=kind, count=count)
        if kind == MessageKind.ASSIGN_WORKERS:
            (cnt,) = struct.unpack_from("<I", data, off)
            off += 4
            ranks = struct.unpack_from(f"<{cnt}I", data, off) if cnt else ()
            return Message(kind=kind, ranks=tuple(ranks))
        if kind == MessageKind.SUBPROBLEM_TRANSFER:
            (lb,) = struct.unpack_from("<d", data, off)
            node = decode_node(data[off + 8 :])
            return Message(kind=kind, lb=lb, node=node)
        return Message(kind=MessageKind.TERMINATE)
    except struct.error as exc:
        raise ProtocolError(f"malformed message: {exc}") from None


class Mailbox:
    """Point-to-point inbox of (source, bytes) envelopes.

    With an RNG attached, receives pick a uniformly random sender among
    those with pending traffic while preserving per-sender FIFO order --
    the legal delivery reorderings of a rank-to-rank FIFO transport.
    """

    def __init__(self, rng: np.random.Generator | None = None):
        self._q: queue.Queue = queue.Queue()
        self._rng = rng
        self._pending: dict[int, list[bytes]] = {}

    def put(self, src: int, data: bytes):
        self._q.put((src, data))

    def get(self, timeout: float = RECV_TIMEOUT) -> tuple[int, bytes]:
        if self._rng is None:
            try:
                return self._q.get(timeout=timeout)
            except queue.Empty:
                raise ProtocolError("receive timed out; protocol stalled") from None
        while True:
            try:
                src, data = self._q.get_nowait()
                self._pending.setdefault(src, []).append(data)
            except queue.Empty:
                break
        senders = sorted(s for s, msgs in self._pending.items() if msgs)
        if not senders:
            try:
                src, data = self._q.get(timeout=timeout)
            except queue.Empty:
                raise ProtocolError("receive timed out; protocol stalled") from None
            return src, data
        src = senders[int(self._rng.integers(0, len(senders)))]
        return src, self._pending[src].pop(0)


class Channels:
    """All mailboxes of one run: one per worker plus the coordinator's."""

    COORDINATOR = -1

    def __init__(self, workers: int, jitter_rng: np.random.Generator | None = None):
        self.workers = workers
        self.to_coordinator = Mailbox(rng=jitter_rng)
        self.to_worker = [Mailbox() for _ in range(workers)]

    def send(self, src: int, dst: int, msg: Message):
        data = encode_message(msg)
        if dst == self.COORDINATOR:
            self.to_coordinator.put(src, data)
        else:
            self.to_worker[dst].put(src, data)

    def recv(self, rank: int, timeout: float = RECV_TIMEOUT) -> tuple[int, Message]:
        box = self.to_coordinator if rank == self.COORDINATOR else self.to_worker[rank]
        src, data = box.get(timeout=timeout)
        return src, decode_message(data)

    def try_recv(self, rank: int) -> tuple[int, Message] | None:
        box = self.to_coordinator if rank == self.COORDINATOR else self.to_worker[rank]
        try:
            src, data = box.get(timeout=0.0)
        except ProtocolError:
            return None
        return src, decode_message(data)


@dataclass
class WorkerStats:
    nodes_evaluated: int = 0
    nodes_created: int = 0
    nodes_pruned: int = 0
    nodes_branched: int = 0
    nodes_leaf: int = 0
    admm_iterations: int = 0
    cuts_separated: dict = field(default_factory=lambda: {3: 0, 5: 0, 7: 0})
    terminates_seen: int = 0


def coordinator_loop(
    instance: Graph, cfg: SolverConfig, channels: Channels
) -> tuple[CutSolution, float, int, float]:
    """Run the coordinator role; returns (incumbent, root bound, nodes created at root, diff).

    Broadcasts the instance, evaluates the root, distributes diff and the
    first incumbent, hands the root children to the first idle workers, then
    serves status/incumbent/work-sharing messages until every worker is
    idle, at which point it sends one TERMINATE to each worker.
    """
    W = channels.workers
    for w in range(W):
        channels.send(Channels.COORDINATOR, w, Message(MessageKind.BROADCAST_INSTANCE, graph=instance))

    incumbent = trivial_cut(instance)
    root = root_subproblem(instance)
    outcome = evaluate_node(root, np.inf, 0, incumbent.value, cfg, None, root=True)
    if outcome.cut is not None and outcome.cut.value > incumbent.value:
        incumbent = outcome.cut
    diff = 0.0
    if outcome.kind != "leaf":
        diff = max(0.0, outcome.basic_bound - outcome.ub)

    for w in range(W):
        channels.send(Channels.COORDINATOR, w, Message(MessageKind.BROADCAST_DIFF, diff=diff))
        channels.send(
            Channels.COORDINATOR, w,
            Message(MessageKind.NEW_INCUMBENT, value=incumbent.value, assignment=incumbent.assignment),
        )

    idle = set(range(W))
    root_created = 1 + len(outcome.children)
    if not outcome.children:
        for w in range(W):
            channels.send(Channels.COORDINATOR, w, Message(MessageKind.TERMINATE))
        return incumbent, outcome.ub, root_created, diff

    for (child_sub, child_ub), w in zip(outcome.children, range(W)):
        record = node_record_for(child_sub, child_ub, depth=1)
        channels.send(
            Channels.COORDINATOR, w,
            Message(MessageKind.SUBPROBLEM_TRANSFER, lb=incumbent.value, node=record),
        )
        idle.discard(w)
    if len(outcome.children) > W:  # single worker gets both root children
        for child_sub, child_ub in outcome.children[W:]:
            record = node_record_for(child_sub, child_ub, depth=1)
            channels.send(
                Channels.COORDINATOR, 0,
                Message(MessageKind.SUBPROBLEM_TRANSFER, lb=incumbent.value, node=record),
            )

    while len(idle) < W:
        src, msg = channels.recv(Channels.COORDINATOR)
        if msg.kind == MessageKind.WORKER_IDLE:
            idle.add(msg.rank)
        elif msg.kind == MessageKind.NEW_INCUMBENT:
            if msg.value > incumbent.value:
                incumbent = CutSolution(assignment=msg.assignment, value=msg.value)
                for w in range(W):
                    channels.send(
                        Channels.COORDINATOR, w,
                        Message(MessageKind.NEW_INCUMBENT, value=incumbent.value,
                                assignment=incumbent.assignment),
                    )
        elif msg.kind == MessageKind.REQUEST_WORKERS:
            grant = sorted(idle)[: msg.count]
            for w in grant:
                idle.discard(w)
            channels.send(
                Channels.COORDINATOR, src,
                Message(MessageKind.ASSIGN_WORKERS, ranks=tuple(grant)),
            )
        else:
            raise ProtocolError(f"coordinator got unexpected {msg.kind.name} from {src}")

    for w in range(W):
        channels.send(Channels.COORDINATOR, w, Message(MessageKind.TERMINATE))
    return incumbent, outcome.ub, root_created, diff


def worker_loop(rank: int, channels: Channels, cfg: SolverConfig) -> WorkerStats:
    """Run one worker: local best-bound search with shared incumbents and work."""
    stats = WorkerStats()
    src, msg = channels.recv(rank)
    if msg.kind != MessageKind.BROADCAST_INSTANCE:
        raise ProtocolError(f"worker {rank} expected instance, got {msg.kind.name}")
    instance = msg.graph
    diff = 0.0
    lb = 0.0
    best_local: CutSolution | None = None
    heap: list[tuple[float, int, BBNode]] = []
    next_id = 0

    def push(sub: Subproblem, upper_bound: float, depth: int, fresh: bool):
        # fresh nodes were just branched here; transfers were already counted
        # as created by whoever branched them.
        nonlocal next_id
        node = BBNode(sub=sub, upper_bound=upper_bound, depth=depth, id=next_id)
        heapq.heappush(heap, (-upper_bound, next_id, node))
        next_id += 1
        if fresh:
            stats.nodes_created += 1

    def handle(msg: Message):
        nonlocal diff, lb
        if msg.kind == MessageKind.BROADCAST_DIFF:
            diff = msg.diff
        elif msg.kind == MessageKind.NEW_INCUMBENT:
            lb = max(lb, msg.value)
        elif msg.kind == MessageKind.SUBPROBLEM_TRANSFER:
            lb = max(lb, msg.lb)
            push(
                subproblem_from_record(msg.node, instance),
                msg.node.upper_bound,
                msg.node.depth,
                fresh=False,
            )
        elif msg.kind == MessageKind.TERMINATE:
            stats.terminates_seen += 1
            return False
        else:
            raise ProtocolError(f"worker {rank} got unexpected {msg.kind.name}")
        return True

    alive = True
    while alive:
        while not heap:
            src, msg = channels.recv(rank)
            if not handle(msg):
                return stats
            if msg.kind == MessageKind.SUBPROBLEM_TRANSFER:
                break
        # drain without blocking so fresher incumbents tighten pruning
        while True:
            got = channels.try_recv(rank)
            if got is None:
                break
            if not handle(got[1]):
                return stats
        if not heap:
            continue
        _, _, node = heapq.heappop(heap)
        stats.nodes_evaluated += 1
        if should_prune(node.upper_bound, lb, instance.integer_weights, cfg.gap_tol):
            stats.nodes_pruned += 1
        else:
            outcome = evaluate_node(node.sub, node.upper_bound, node.depth, lb, cfg, diff)
            stats.admm_iterations += outcome.admm_iterations
            for k in (3, 5, 7):
                stats.cuts_separated[k] += outcome.cuts_added.get(k, 0)
            setattr(stats, f"nodes_{outcome.kind}", getattr(stats, f"nodes_{outcome.kind}") + 1)
            if outcome.cut is not None and outcome.cut.value > lb:
                lb = outcome.cut.value
                best_local = outcome.cut
                channels.send(
                    rank, Channels.COORDINATOR,
                    Message(MessageKind.NEW_INCUMBENT, value=best_local.value,
                            assignment=best_local.assignment),
                )
            for child_sub, child_ub in outcome.children:
                push(child_sub, child_ub, node.depth + 1, fresh=True)
            if len(heap) > 1:
                channels.send(
                    rank, Channels.COORDINATOR,
                    Message(MessageKind.REQUEST_WORKERS, count=len(heap) - 1),
                )
                granted = None
                while granted is None:
                    src, msg = channels.recv(rank)
                    if msg.kind == MessageKind.ASSIGN_WORKERS:
                        granted = msg.ranks
                    elif not handle(msg):
                        raise ProtocolError(
                            f"worker {rank} terminated while awaiting assignment"
                        )
                for dst in granted:
                    neg_ub, _, give = heapq.heappop(heap)
                    record = node_record_for(give.sub, give.upper_bound, give.depth)
                    channels.send(
                        rank, dst,
                        Message(MessageKind.SUBPROBLEM_TRANSFER, lb=lb, node=record),
                    )
        if not heap:
            channels.send(rank, Channels.COORDINATOR, Message(MessageKind.WORKER_IDLE, rank=rank))
    return stats


def solve_parallel(
    g: Graph, cfg: SolverConfig | None = None, jitter_rng: np.random.Generator | None = None
) -> Solution:
    """Solve with cfg.workers worker threads plus an in-thread coordinator."""
    cfg = cfg or SolverConfig()
    start = time.perf_counter()
    channels = Channels(cfg.workers, jitter_rng=jitter_rng)
    results: list[WorkerStats | None] = [None] * cfg.workers
    errors: list[BaseException | None] = [None] * cfg.workers

    def run_worker(rank: int):
        try:
            results[rank] = worker_loop(rank, channels, cfg)
        except BaseException as exc:  # surfaced after join
            errors[rank] = exc
            # let the coordinator drain to termination instead of stalling
            channels.send(rank, Channels.COORDINATOR, Message(MessageKind.WORKER_IDLE, rank=rank))

    threads = [
        threading.Thread(target=run_worker, args=(w,), name=f"sdpcut-worker-{w}")
        for w in range(cfg.workers)
    ]
    for t in threads:
        t.start()
    try:
        incumbent, root_ub, root_created, diff = coordinator_loop(g, cfg, channels)
    finally:
        for t in threads:
            t.join(timeout=RECV_TIMEOUT)
    for exc in errors:
        if exc is not None:
            raise exc

    stats = {
        "nodes_created": root_created,
        "nodes_pruned": 0,
        "nodes_branched": 0,
        "nodes_leaf": 0,
        "admm_iterations": 0,
        "cuts_separated": {3: 0, 5: 0, 7: 0},
        "diff": diff,
        "terminates_per_worker": [],
    }
    nodes = 1  # root, evaluated by the coordinator
    for ws in results:
        if ws is None:
            raise ProtocolError("a worker thread did not finish")
        nodes += ws.nodes_evaluated
        stats["nodes_created"] += ws.nodes_created
        stats["nodes_pruned"] += ws.nodes_pruned
        stats["nodes_branched"] += ws.nodes_branched
        stats["nodes_leaf"] += ws.nodes_leaf
        stats["admm_iterations"] += ws.admm_iterations
        for k in (3, 5, 7):
            stats["cuts_separated"][k] += ws.cuts_separated[k]
        stats["terminates_per_worker"].append(ws.terminates_seen)
    return Solution(
        best_cut=incumbent,
        optimum=incumbent.value,
        nodes_evaluated=nodes,
        wall_time=time.perf_counter() - start,
        proof=True,
        best_bound=incumbent.value,
        stats=stats,
    )
