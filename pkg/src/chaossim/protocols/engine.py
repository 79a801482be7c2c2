"""Common machinery for the protocol engines.

An engine owns the validator :class:`NodeState` objects, its channels on a
:class:`Network`, the proposer loop that pulls batches from the pool, and
the bookkeeping hooks into metrics and trace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..kernel import Simulator
from ..metrics import MetricsCollector
from ..network import Envelope, Network
from .base import Batch, BlockRecord, IdSource, NodeState, ProtocolError, commit_block, validate_block


@dataclass
class ProtocolParams:
    """Protocol knobs.  Unset timing values scale with the message rate."""

    rate: float = 2.0
    tx_per_block: int = 70
    phase_timeout: float | None = None
    stakes: tuple | None = None
    clique_period: float | None = None
    election_timeout: tuple | None = None
    heartbeat: float | None = None
    proposal_cutoff: float = math.inf

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("rate must be positive")
        if self.tx_per_block < 1:
            raise ValueError("tx_per_block must be positive")
        r = self.rate
        if self.phase_timeout is None:
            self.phase_timeout = 10.0 / r
        if self.clique_period is None:
            self.clique_period = 3.0 / r
        if self.election_timeout is None:
            self.election_timeout = (5.0 / r, 10.0 / r)
        if self.heartbeat is None:
            self.heartbeat = 1.0 / r
        lo, hi = self.election_timeout
        if not 0 < lo <= hi:
            raise ValueError("election timeout bounds must satisfy 0 < low <= high")
        for name in ("phase_timeout", "clique_period", "heartbeat"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


class Engine:
    """Base class; subclasses implement the protocol-specific handlers."""

    name = "base"
    initial_state = None

    def __init__(self, n_validators: int, params: ProtocolParams | None = None, *,
                 sim: Simulator | None = None, network: Network | None = None,
                 collector: MetricsCollector | None = None, trace=None, pool=None):
        if n_validators < 1:
            raise ValueError("n_validators must be >= 1")
        self.params = params or ProtocolParams()
        self.sim = sim or Simulator()
        self.net = network or Network(self.sim, self.params.rate, trace)
        self.trace = trace
        self.n = n_validators
        self.ids = list(range(n_validators))
        self.nodes = [NodeState(i, consensus_state=self.initial_state) for i in self.ids]
        if self.params.stakes is not None:
            if len(self.params.stakes) != n_validators:
                raise ValueError("one stake per validator required")
            for node, s in zip(self.nodes, self.params.stakes):
                node.stake = s
        self.collector = collector or MetricsCollector(self.ids, self.commit_threshold())
        self.pool = pool
        self.new_id = IdSource()
        self.canonical: list[BlockRecord] = []
        self.round = 0
        self._capture: list | None = None
        self._started = False
        for i in self.ids:
            self.net.register(i, self._handler_for(i))

    # --- hooks for subclasses ---------------------------------------------
    def commit_threshold(self) -> int:
        return 1

    def elect_leader(self, round_id: int):
        raise NotImplementedError

    def on_message(self, node, env: Envelope):
        """Deliver ``env`` to ``node``; returns ``((old, new), emitted envelopes)``."""
        if self.net.is_paused(node):
            raise ProtocolError(f"node {node!r} is paused")
        st = self.nodes[node] if isinstance(node, int) else None
        before = st.consensus_state if st is not None else None
        self._capture = []
        try:
            self._dispatch(node, env)
            emitted = self._capture
        finally:
            self._capture = None
        after = st.consensus_state if st is not None else None
        return (before, after), emitted

    _handlers: dict = {}

    def _dispatch(self, node, env):
        h = self._handlers.get(type(env.payload))
        if h is not None:
            h(node, env)

    def _handler_for(self, node):
        def handle(env):
            h = self._handlers.get(type(env.payload))
            if h is not None:
                h(node, env)
        return handle

    def start(self) -> None:
        self._started = True

    # --- shared helpers ---------------------------------------------------
    def validate_block(self, node, proposal, corrupted: bool = False) -> bool:
        return validate_block(self.nodes[node], proposal, corrupted)

    def commit_block(self, node, record: BlockRecord, how: str = "commit") -> bool:
        rec = BlockRecord(record.number, record.block_id, record.proposer, record.tx_count, self.sim.now)
        return commit_block(self.nodes[node], rec, self.collector, self.trace, how)

    def send(self, src, dst, payload, corrupted: bool = False):
        cid = self.net.channel(src, dst)
        if self._capture is not None:
            self._capture.append(Envelope(src, dst, payload, self.sim.now, corrupted))
        return self.net.send(cid, payload, corrupted)

    def broadcast(self, src, dsts, payload):
        chan = self.net.channel
        cids = [chan(src, d) for d in dsts]
        if self._capture is not None:
            self._capture.extend(Envelope(src, d, payload, self.sim.now) for d in dsts)
        return self.net.broadcast(cids, payload)

    def new_block(self, proposer, batch: Batch, number: int | None = None) -> BlockRecord:
        """Register a freshly created block with metrics and trace."""
        if batch.tx_count < 1:
            raise ProtocolError("empty batch")
        number = len(self.canonical) + 1 if number is None else number
        rec = BlockRecord(number, self.new_id(), proposer, batch.tx_count, self.sim.now)
        self.collector.block_created(rec.block_id, number, proposer, self.sim.now, batch.tx_first, batch.tx_count)
        if self.trace is not None:
            self.trace.record(self.sim.now, proposer, "block-created", self.round, number, rec.block_id,
                              detail=f"tx_first={batch.tx_first};tx_count={batch.tx_count}")
        return rec

    def round_failed(self, record: BlockRecord | None, why: str) -> None:
        if record is not None:
            self.collector.round_failed(record.block_id, self.sim.now)
        if self.trace is not None:
            self.trace.record(self.sim.now, "leader", "round-failed", self.round,
                              record.number if record else "", record.block_id if record else "",
                              detail=f"reason={why}")

    def next_batch_time(self) -> float:
        """When the proposer loop may cut its next batch (``inf``: never)."""
        if self.pool is None:
            return math.inf
        t = max(self.pool.ready_at(), self.sim.now)
        return t if t < self.params.proposal_cutoff else math.inf

    def chain_lengths(self) -> list[int]:
        return [node.chain_length for node in self.nodes]

    def current_leader(self):
        return None

    def trace_vote(self, voter, round_id, phase, block_id, detail=""):
        if self.trace is not None:
            self.trace.record(self.sim.now, voter, "vote", round_id, "",
                              "" if block_id is None else block_id, phase, detail)
