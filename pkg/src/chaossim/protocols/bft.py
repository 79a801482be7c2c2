"""Vote-based engines: PBFT (one voting phase) and Tendermint (two).

Component layout, shared by both:

* a leader component that cuts batches, announces rounds and keeps the
  canonical chain (used to answer sync requests from lagging peers);
* the elected proposer, which broadcasts the block to every peer;
* peers, each running Start -> Waiting -> Propose (-> Prevote) -> Precommit;
* a counter that tallies every phase and announces quorum or failure.

Round notices and counter announcements travel on zero-delay reference
channels; proposals, votes and sync requests on exponential ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .. import chaos
from ..network import EXPONENTIAL, REFERENCE, Envelope
from .base import (
    COUNTER,
    LEADER,
    Batch,
    BlockRecord,
    Proposal,
    ProtocolError,
    State,
    TallyStatus,
    Vote,
    VoteTally,
    quorum_size,
)
from .engine import Engine


@dataclass(frozen=True, slots=True)
class RoundStart:
    round: int
    number: int
    proposer: object
    view: int
    tx_count: int = 0


@dataclass(frozen=True, slots=True)
class PhaseQuorum:
    round: int
    phase: int
    block_id: int


@dataclass(frozen=True, slots=True)
class Decision:
    round: int
    number: int
    block_id: int
    proposer: object
    tx_count: int


@dataclass(frozen=True, slots=True)
class RoundFailed:
    round: int


@dataclass(frozen=True, slots=True)
class SyncRequest:
    node: int
    have: int


@dataclass(frozen=True, slots=True)
class SyncReply:
    records: tuple


_TIMED = (State.WAITING, State.PROPOSE, State.PREVOTE)


class BftEngine(Engine):
    name = "bft"
    phases = 1
    initial_state = State.START

    def __init__(self, n_validators, params=None, **kw):
        super().__init__(n_validators, params, **kw)
        net = self.net
        net.register(LEADER, lambda env: self._leader_receive(env))
        net.register(COUNTER, lambda env: self._counter_receive(env))
        for v in self.ids:
            net.open_channel(LEADER, v, REFERENCE)
            net.open_channel(COUNTER, v, REFERENCE)
            net.open_channel(v, COUNTER, EXPONENTIAL)
            net.open_channel(v, LEADER, EXPONENTIAL)
            for w in self.ids:
                net.open_channel(v, w, EXPONENTIAL)
        net.open_channel(LEADER, COUNTER, REFERENCE)
        net.open_channel(COUNTER, LEADER, REFERENCE)
        self.quorum = quorum_size(n_validators)
        self._notice_targets = [COUNTER] + self.ids
        self._decision_targets = [LEADER] + self.ids
        self.final_state = State.PROPOSE if self.phases == 1 else State.PREVOTE
        self.view = 0
        # peer-local bookkeeping (indexed by validator id)
        self._cur_round = [0] * self.n
        self._voted = [None] * self.n
        self._deadline = [0.0] * self.n
        self._timer_armed = [False] * self.n
        self._held = [None] * self.n
        self._syncing = [-math.inf] * self.n  # time of the outstanding request
        # latest counter announcements seen this round (reference variables)
        self._known_quorum = [None] * self.n
        self._known_decision = [None] * self.n
        # counter
        self._c_round = None
        self._c_tallies: dict = {}
        self._c_done: set = set()
        # leader component
        self.open: BlockRecord | None = None
        self.proposer = None
        self._token = 0
        self._handlers = {
            RoundStart: self._on_round_start,
            Proposal: self._on_proposal,
            PhaseQuorum: self._on_phase_quorum,
            Decision: self._on_decision,
            SyncReply: self._on_sync_reply,
        }

    def commit_threshold(self) -> int:
        return quorum_size(self.n)

    def round_timeout(self) -> float:
        return self.params.phase_timeout * (self.phases + 1)

    # --- proposer choice ----------------------------------------------------
    def elect_leader(self, round_id: int):
        return self.ids[self.view % self.n]

    def current_leader(self):
        return self.proposer

    # --- leader component ---------------------------------------------------
    def start(self) -> None:
        if self._started:
            return
        super().start()
        self._schedule_round()

    def _schedule_round(self):
        t = self.next_batch_time()
        if t == math.inf:
            return
        self._token += 1
        self.sim.schedule(t, self._begin_round, self._token)

    def _begin_round(self, token):
        if token != self._token:
            return
        batch = self.pool.cut(self.sim.now)
        self.round += 1
        proposer = self.elect_leader(self.round)
        self._launch(proposer, batch)

    def propose_block(self, leader, batch: Batch) -> list[Envelope]:
        """Create the block for ``batch`` and return the proposal envelopes."""
        expected = self.elect_leader(self.round)
        if leader != expected:
            raise ProtocolError(f"node {leader!r} is not the elected proposer ({expected!r})")
        rec = self.new_block(leader, batch)
        return self._proposals(leader, rec)

    def _proposals(self, proposer, rec: BlockRecord) -> list[Envelope]:
        now = self.sim.now
        p = Proposal(self.round, rec.number, rec.block_id, proposer, now, rec.tx_count)
        envs = [Envelope(proposer, w, p, now) for w in self.ids]
        if self.nodes[proposer].malicious:
            envs = chaos.mutate_proposal(envs)
        return envs

    def _launch(self, proposer, batch):
        rec = self.new_block(proposer, batch)
        self.open = rec
        self.proposer = proposer
        notice = RoundStart(self.round, rec.number, proposer, self.view, rec.tx_count)
        self.broadcast(LEADER, self._notice_targets, notice)
        for env in self._proposals(proposer, rec):
            self.send(env.source, env.destination, env.payload, env.corrupted)
        self.net.set_timer(LEADER, self.round_timeout(), self._round_expired, self.round)

    def _round_expired(self, round_id):
        if self.open is not None and round_id == self.round:
            self._fail("timeout")

    def _fail(self, why):
        self.round_failed(self.open, why)
        self.open = None
        self.view += 1
        self._schedule_round()

    def _leader_receive(self, env: Envelope):
        msg = env.payload
        kind = type(msg)
        if kind is Decision:
            if self.open is not None and msg.round == self.round and msg.block_id == self.open.block_id:
                rec = self.open
                self.canonical.append(BlockRecord(rec.number, rec.block_id, rec.proposer, rec.tx_count, self.sim.now))
                self.open = None
                self._schedule_round()
        elif kind is RoundFailed:
            if self.open is not None and msg.round == self.round:
                self._fail("no-quorum")
        elif kind is SyncRequest:
            self.send(LEADER, msg.node, SyncReply(tuple(self.canonical[msg.have:])))

    # --- counter ----------------------------------------------------------------
    def tally(self, t: VoteTally, vote: Vote):
        if vote.round != t.round_id or vote.phase != t.phase:
            raise ProtocolError("vote does not belong to this tally")
        return t.add(vote.voter, vote.block_id)

    def _counter_receive(self, env: Envelope):
        msg = env.payload
        if type(msg) is RoundStart:
            self._c_round = msg
            self._c_tallies = {}
            self._c_done = set()
            return
        if type(msg) is not Vote:
            return
        notice = self._c_round
        if notice is None or msg.round != notice.round:
            return
        key = msg.phase
        self.trace_vote(msg.voter, msg.round, msg.phase, msg.block_id)
        if key in self._c_done:
            return
        t = self._c_tallies.get(key)
        if t is None:
            t = self._c_tallies[key] = VoteTally(msg.round, msg.phase, self.n, self.quorum)
        status, bid = self.tally(t, msg)
        if status is TallyStatus.PENDING:
            return
        self._c_done.add(key)
        if status is TallyStatus.FAILED:
            self.send(COUNTER, LEADER, RoundFailed(msg.round))
            return
        if msg.phase < self.phases:
            self.broadcast(COUNTER, self.ids, PhaseQuorum(msg.round, msg.phase, bid))
        else:
            d = Decision(msg.round, notice.number, bid, notice.proposer, notice.tx_count)
            self.broadcast(COUNTER, self._decision_targets, d)

    # --- peers --------------------------------------------------------------------

    def _enter(self, v, state):
        node = self.nodes[v]
        node.consensus_state = state
        if state in _TIMED:
            self._deadline[v] = self.sim.now + self.params.phase_timeout
            if not self._timer_armed[v]:
                self._timer_armed[v] = True
                self.net.set_timer(v, self.params.phase_timeout, self._peer_timer, v)

    def _peer_timer(self, v):
        self._timer_armed[v] = False
        node = self.nodes[v]
        if node.consensus_state not in _TIMED:
            return
        left = self._deadline[v] - self.sim.now
        if left > 0:
            self._timer_armed[v] = True
            self.net.set_timer(v, left, self._peer_timer, v)
            return
        node.consensus_state = State.START
        if self.trace is not None:
            self.trace.record(self.sim.now, v, "timeout", self._cur_round[v])

    def _vote(self, v, phase, block_id):
        vote = Vote(self._cur_round[v], phase, block_id, v)
        if self.nodes[v].malicious:
            vote = chaos.mutate_vote(vote)
        self.send(v, COUNTER, vote)

    def _on_round_start(self, v, env):
        msg = env.payload
        self._cur_round[v] = msg.round
        self._voted[v] = None
        self._held[v] = None
        self._known_quorum[v] = None
        self._known_decision[v] = None
        self.nodes[v].term_or_view = msg.view
        self._enter(v, State.WAITING)

    def _on_proposal(self, v, env):
        p = env.payload
        node = self.nodes[v]
        if p.round != self._cur_round[v] or node.consensus_state is not State.WAITING:
            return
        if not env.corrupted and p.block_id > 0 and p.number > node.chain_length + 1:
            self._held[v] = env
            self._request_sync(v)
            return
        if not self.validate_block(v, p, env.corrupted):
            self._voted[v] = None
            self._vote(v, 1, None)
            node.consensus_state = State.START
            if self.trace is not None:
                self.trace.record(self.sim.now, v, "invalid", p.round, p.number, p.block_id)
            return
        self._voted[v] = p.block_id
        self._enter(v, State.PROPOSE)
        self._vote(v, 1, p.block_id)
        self._advance(v)

    def _on_phase_quorum(self, v, env):
        q = env.payload
        if q.round == self._cur_round[v] and q.phase == 1:
            self._known_quorum[v] = q.block_id
            self._advance(v)

    def _on_decision(self, v, env):
        d = env.payload
        if d.round == self._cur_round[v]:
            self._known_decision[v] = d
            self._advance(v)

    def _advance(self, v):
        """Move on as far as the counter's announcements allow."""
        node = self.nodes[v]
        voted = self._voted[v]
        if voted is None:
            return
        if (self.phases == 2 and node.consensus_state is State.PROPOSE
                and self._known_quorum[v] == voted):
            self._enter(v, State.PREVOTE)
            self._vote(v, 2, voted)
        d = self._known_decision[v]
        if d is None or node.consensus_state is not self.final_state or d.block_id != voted:
            return
        node.consensus_state = State.PRECOMMIT
        if d.number == node.chain_length + 1:
            rec = BlockRecord(d.number, d.block_id, d.proposer, d.tx_count, self.sim.now)
            self.commit_block(v, rec)
        elif d.number > node.chain_length + 1:
            self._request_sync(v)
        node.consensus_state = State.START

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
        if held is not None and node.consensus_state is State.WAITING:
            if held.payload.number > node.chain_length + 1:
                # still behind (reply lost or raced); vote the proposal invalid
                held = Envelope(held.source, held.destination, held.payload, held.sent_at, True)
            self._on_proposal(v, held)


class PbftEngine(BftEngine):
    name = "pbft"
    phases = 1


class TendermintEngine(BftEngine):
    name = "tendermint"
    phases = 2

    def __init__(self, n_validators, params=None, **kw):
        super().__init__(n_validators, params, **kw)
        self._draws: dict[int, object] = {}
        self._stream = self.sim.stream("tendermint/proposer")

    def elect_leader(self, round_id: int):
        who = self._draws.get(round_id)
        if who is None:
            weights = [node.stake for node in self.nodes]
            who = self._draws[round_id] = self.ids[self._stream.choice_index(weights)]
        return who

    def _begin_round(self, token):
        # forget old draws; only the current round is ever asked again
        if len(self._draws) > 64:
            self._draws = {k: w for k, w in self._draws.items() if k >= self.round}
        super()._begin_round(token)
