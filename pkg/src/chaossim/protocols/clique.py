"""Proof-of-authority (Clique) as a strict leader-follower protocol.

Signers take turns in round-robin order, one slot per block period.  The
in-turn signer sends its block to every peer; each peer validates it on its
own and commits locally, then reports accept/invalid to the leader
component.  Peers never talk to each other.  A slot whose signer is paused
is skipped.  The leader component treats the first accepting report as
success.  When no report settles the slot within the timeout it polls the
peers; a peer that has not committed the block answers by refusing that
round for good, so once every peer has refused or rejected, the slot fails
without any peer holding the block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .. import chaos
from ..network import EXPONENTIAL, REFERENCE, Envelope, sentinel_id
from .base import LEADER, Batch, BlockRecord, Proposal, ProtocolError, State, majority_size
from .bft import SyncReply, SyncRequest
from .engine import Engine


@dataclass(frozen=True, slots=True)
class Report:
    round: int
    block_id: int | None
    node: int


@dataclass(frozen=True, slots=True)
class Poll:
    round: int


class CliqueEngine(Engine):
    name = "clique"
    initial_state = State.FOLLOWER

    def __init__(self, n_validators, params=None, **kw):
        super().__init__(n_validators, params, **kw)
        net = self.net
        net.register(LEADER, lambda env: self._leader_receive(env))
        for v in self.ids:
            net.open_channel(LEADER, v, REFERENCE)
            net.open_channel(v, LEADER, EXPONENTIAL)
            for w in self.ids:
                net.open_channel(v, w, EXPONENTIAL)
        self.open: BlockRecord | None = None
        self.signer = None
        self._slot_start = 0.0
        self._reports: dict = {}
        self._token = 0
        self._refused = [set() for _ in self.ids]
        self._last_commit = [(0, None)] * self.n
        self._held = [None] * self.n
        self._syncing = [-math.inf] * self.n  # time of the outstanding request
        self._handlers = {
            Proposal: self._on_proposal,
            Poll: self._on_poll,
            SyncReply: self._on_sync_reply,
        }

    def commit_threshold(self) -> int:
        return majority_size(self.n)

    def elect_leader(self, round_id: int):
        return self.ids[(round_id - 1) % self.n]

    def current_leader(self):
        return self.signer

    # --- leader component ---------------------------------------------------
    def start(self) -> None:
        if self._started:
            return
        super().start()
        self._schedule_slot(0.0)

    def _schedule_slot(self, earliest: float):
        t = self.next_batch_time()
        if t == math.inf:
            return
        t = max(t, earliest)
        if t >= self.params.proposal_cutoff:
            return
        self._token += 1
        self.sim.schedule(t, self._begin_slot, self._token)

    def _begin_slot(self, token):
        if token != self._token:
            return
        self.round += 1
        signer = self.elect_leader(self.round)
        self._slot_start = self.sim.now
        if self.net.is_paused(signer):
            if self.trace is not None:
                self.trace.record(self.sim.now, signer, "slot-skipped", self.round)
            self._schedule_slot(self.sim.now + self.params.clique_period)
            return
        batch = self.pool.cut(self.sim.now)
        self._launch(signer, batch)

    def propose_block(self, leader, batch: Batch) -> list[Envelope]:
        expected = self.elect_leader(max(self.round, 1))
        if leader != expected:
            raise ProtocolError(f"node {leader!r} is not the in-turn signer ({expected!r})")
        rec = self.new_block(leader, batch)
        return self._proposals(leader, rec)

    def _proposals(self, signer, rec):
        now = self.sim.now
        p = Proposal(self.round, rec.number, rec.block_id, signer, now, rec.tx_count)
        envs = [Envelope(signer, w, p, now) for w in self.ids]
        if self.nodes[signer].malicious:
            envs = chaos.mutate_proposal(envs)
        return envs

    def _launch(self, signer, batch):
        if self.signer is not None:
            self.nodes[self.signer].consensus_state = State.FOLLOWER
        self.signer = signer
        self.nodes[signer].consensus_state = State.LEADER
        rec = self.new_block(signer, batch)
        self.open = rec
        self._reports = {}
        for env in self._proposals(signer, rec):
            self.send(env.source, env.destination, env.payload, env.corrupted)
        self.net.set_timer(LEADER, self.params.phase_timeout, self._slot_expired, self.round)

    def _slot_expired(self, round_id):
        if self.open is None or round_id != self.round:
            return
        self.broadcast(LEADER, self.ids, Poll(round_id))
        self.net.set_timer(LEADER, self.params.phase_timeout, self._slot_expired, round_id)

    def _fail(self, why):
        self.round_failed(self.open, why)
        self.open = None
        self._schedule_slot(self._slot_start + self.params.clique_period)

    def _leader_receive(self, env):
        msg = env.payload
        if type(msg) is Report:
            rec = self.open
            if rec is None or msg.round != self.round:
                return
            self._reports[msg.node] = msg.block_id
            if msg.block_id == rec.block_id:
                self.canonical.append(BlockRecord(rec.number, rec.block_id, rec.proposer, rec.tx_count, self.sim.now))
                self.open = None
                self._schedule_slot(self._slot_start + self.params.clique_period)
            elif len(self._reports) == self.n:
                self._fail("rejected")
        elif type(msg) is SyncRequest:
            self.send(LEADER, msg.node, SyncReply(tuple(self.canonical[msg.have:])))

    # --- peers ----------------------------------------------------------------

    def _on_poll(self, v, env):
        r = env.payload.round
        done_round, bid = self._last_commit[v]
        if done_round == r:
            self._report(v, r, bid)
        else:
            self._refused[v].add(r)
            self._report(v, r, None)

    def _report(self, v, round_id, block_id):
        self.send(v, LEADER, Report(round_id, block_id, v))

    def _on_proposal(self, v, env):
        p = env.payload
        node = self.nodes[v]
        if p.round in self._refused[v]:
            return
        if not env.corrupted and p.block_id > 0 and p.number > node.chain_length + 1:
            self._held[v] = env
            self._request_sync(v)
            return
        if not self.validate_block(v, p, env.corrupted):
            if self.trace is not None:
                self.trace.record(self.sim.now, v, "invalid", p.round, p.number, p.block_id)
            self._report(v, p.round, None)
            return
        if node.malicious:
            # claims a different block and does not import the real one
            self._report(v, p.round, sentinel_id(p.block_id))
            return
        self.commit_block(v, BlockRecord(p.number, p.block_id, p.proposer, p.tx_count, self.sim.now))
        self._last_commit[v] = (p.round, p.block_id)
        self._report(v, p.round, p.block_id)

    def _request_sync(self, v):
        # a lost request or reply must not wedge the node: ask again after a timeout
        if self.sim.now - self._syncing[v] < self.params.phase_timeout:
            return
        self._syncing[v] = self.sim.now
        self.send(v, LEADER, SyncRequest(v, self.nodes[v].chain_length))

    def _on_sync_reply(self, v, env):
        self._syncing[v] = -math.inf
        node = self.nodes[v]
        for rec in env.payload.records:
            if rec.number == node.chain_length + 1:
                self.commit_block(v, rec, how="sync")
        held = self._held[v]
        self._held[v] = None
        if held is not None:
            if held.payload.number > node.chain_length + 1:
                held = Envelope(held.source, held.destination, held.payload, held.sent_at, True)
            self._on_proposal(v, held)
