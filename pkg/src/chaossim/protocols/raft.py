"""Raft: terms, randomized elections and log replication.

Only the leader takes batches from the pool.  Replication is driven by the
heartbeat: entries travel only inside the periodic AppendEntries, and the
leader keeps at most one uncommitted entry of its own term in flight,
appending the next one only after the new commit index has gone out on a
previous heartbeat.  A block counts as committed as soon as the leader
commits it; uncommitted or overwritten entries are failed blocks.

Byzantine behaviour: a malicious follower answers a block-carrying
AppendEntries with a contradicting id and an inflated term (forcing the
leader to step down), and refuses every vote request.  A malicious leader
sends contradicting entries to half of its followers, who reject them.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..network import EXPONENTIAL, Envelope, sentinel_id
from .base import Batch, BlockRecord, ProtocolError, State, majority_size
from .engine import Engine


@dataclass(frozen=True, slots=True)
class Entry:
    term: int
    record: BlockRecord


@dataclass(frozen=True, slots=True)
class AppendEntries:
    term: int
    leader: int
    prev_index: int
    prev_term: int
    entries: tuple
    leader_commit: int


@dataclass(frozen=True, slots=True)
class AppendReply:
    term: int
    success: bool
    match_index: int
    node: int
    block_id: int | None = None
    rejected_corrupt: bool = False


@dataclass(frozen=True, slots=True)
class RequestVote:
    term: int
    candidate: int
    last_index: int
    last_term: int


@dataclass(frozen=True, slots=True)
class VoteReply:
    term: int
    granted: bool
    node: int


class RaftEngine(Engine):
    name = "raft"
    initial_state = State.FOLLOWER

    def __init__(self, n_validators, params=None, **kw):
        super().__init__(n_validators, params, **kw)
        for v in self.ids:
            for w in self.ids:
                if v != w:
                    self.net.open_channel(v, w, EXPONENTIAL)
        n = self.n
        self.majority = majority_size(n)
        self.term = [0] * n
        self.voted_for = [None] * n
        self.log: list[list[Entry]] = [[] for _ in range(n)]
        self.commit_index = [0] * n
        self.leader_id = None
        self._votes = [set() for _ in range(n)]
        self._next = [[1] * n for _ in range(n)]
        self._match = [[0] * n for _ in range(n)]
        self._announced = [0] * n
        self._deadline = [0.0] * n
        self._timer_armed = [False] * n
        self._estream = self.sim.stream("raft/election")
        self._handlers = {
            AppendEntries: self._on_append,
            AppendReply: self._on_append_reply,
            RequestVote: self._on_request_vote,
            VoteReply: self._on_vote_reply,
        }

    def commit_threshold(self) -> int:
        return 1

    def elect_leader(self, round_id: int = 0):
        return self.leader_id

    def current_leader(self):
        return self.leader_id

    def start(self) -> None:
        if self._started:
            return
        super().start()
        if self.n == 1:
            self._campaign(0)
            return
        for v in self.ids:
            self._reset_election(v)

    # --- helpers ----------------------------------------------------------------
    def _last(self, v):
        log = self.log[v]
        return (len(log), log[-1].term) if log else (0, 0)

    def _term_at(self, v, index):
        return self.log[v][index - 1].term if index > 0 else 0

    def _reset_election(self, v):
        lo, hi = self.params.election_timeout
        self._deadline[v] = self.sim.now + self._estream.uniform_between(lo, hi)
        if not self._timer_armed[v]:
            self._timer_armed[v] = True
            self.net.set_timer(v, self._deadline[v] - self.sim.now, self._election_timer, v)

    def _election_timer(self, v):
        self._timer_armed[v] = False
        if self.nodes[v].consensus_state is State.LEADER:
            return
        left = self._deadline[v] - self.sim.now
        if left > 0:
            self._timer_armed[v] = True
            self.net.set_timer(v, left, self._election_timer, v)
            return
        self._campaign(v)

    def _set_term(self, v, term):
        if term > self.term[v]:
            self.term[v] = term
            self.voted_for[v] = None
            self.nodes[v].term_or_view = term
        if self.nodes[v].consensus_state is not State.FOLLOWER:
            was_leader = self.nodes[v].consensus_state is State.LEADER
            self.nodes[v].consensus_state = State.FOLLOWER
            if was_leader:
                if self.leader_id == v:
                    self.leader_id = None
                if self.trace is not None:
                    self.trace.record(self.sim.now, v, "step-down", term)
                self._reset_election(v)

    # --- elections ----------------------------------------------------------------
    def _campaign(self, v):
        self.term[v] += 1
        self.nodes[v].term_or_view = self.term[v]
        self.nodes[v].consensus_state = State.CANDIDATE
        self.voted_for[v] = v
        self._votes[v] = {v}
        if len(self._votes[v]) >= self.majority:
            self._become_leader(v)
            return
        last_index, last_term = self._last(v)
        rv = RequestVote(self.term[v], v, last_index, last_term)
        for w in self.ids:
            if w != v:
                self.send(v, w, rv)
        self._reset_election(v)

    def _on_request_vote(self, v, env):
        rv = env.payload
        if env.corrupted:
            return
        if rv.term > self.term[v]:
            self._set_term(v, rv.term)
        last_index, last_term = self._last(v)
        granted = (
            rv.term == self.term[v]
            and self.voted_for[v] in (None, rv.candidate)
            and (rv.last_term, rv.last_index) >= (last_term, last_index)
            and not self.nodes[v].malicious
        )
        if granted:
            self.voted_for[v] = rv.candidate
            self._reset_election(v)
        self.send(v, rv.candidate, VoteReply(self.term[v], granted, v))

    def _on_vote_reply(self, v, env):
        r = env.payload
        if env.corrupted:
            return
        if r.term > self.term[v]:
            self._set_term(v, r.term)
            return
        if self.nodes[v].consensus_state is not State.CANDIDATE or r.term != self.term[v] or not r.granted:
            return
        self._votes[v].add(r.node)
        if len(self._votes[v]) >= self.majority:
            self._become_leader(v)

    def _become_leader(self, v):
        self.nodes[v].consensus_state = State.LEADER
        self.leader_id = v
        last_index, _ = self._last(v)
        self._next[v] = [last_index + 1] * self.n
        self._match[v] = [0] * self.n
        self._match[v][v] = last_index
        self._announced[v] = -1
        if self.trace is not None:
            self.trace.record(self.sim.now, v, "elected", self.term[v])
        self._tick(v, self.term[v])

    # --- replication ----------------------------------------------------------------
    def _tick(self, v, term):
        if self.nodes[v].consensus_state is not State.LEADER or self.term[v] != term:
            return
        self._maybe_append(v)
        self._broadcast(v)
        self._announced[v] = self.commit_index[v]
        self.net.set_timer(v, self.params.heartbeat, self._tick, v, term)

    def _may_append(self, v) -> bool:
        if self._announced[v] != self.commit_index[v]:
            return False
        log = self.log[v]
        for i in range(len(log), self.commit_index[v], -1):
            if log[i - 1].term == self.term[v]:
                return False
        return self.pool is not None and self.next_batch_time() <= self.sim.now

    def _maybe_append(self, v):
        if not self._may_append(v):
            return
        self.round += 1
        batch = self.pool.cut(self.sim.now)
        self._append_batch(v, batch)

    def propose_block(self, leader, batch: Batch) -> list[Envelope]:
        if leader != self.leader_id or self.nodes[leader].consensus_state is not State.LEADER:
            raise ProtocolError(f"node {leader!r} is not the Raft leader")
        self._append_batch(leader, batch)
        return self._append_envelopes(leader)

    def _append_batch(self, v, batch):
        index = len(self.log[v]) + 1
        rec = self.new_block(v, batch, number=index)
        self.log[v].append(Entry(self.term[v], rec))
        self._match[v][v] = index
        if self.majority == 1:
            self._advance_commit(v)

    def _append_envelopes(self, v) -> list[Envelope]:
        now = self.sim.now
        log = self.log[v]
        envs = []
        for w in self.ids:
            if w == v:
                continue
            nxt = self._next[v][w]
            prev = nxt - 1
            ae = AppendEntries(self.term[v], v, prev, self._term_at(v, prev),
                               tuple(log[prev:]), self.commit_index[v])
            envs.append(Envelope(v, w, ae, now))
        if self.nodes[v].malicious:
            carrying = [e for e in envs if e.payload.entries]
            keep = (len(carrying) + 1) // 2
            bad = {e.destination for e in carrying[keep:]}
            envs = [Envelope(e.source, e.destination, e.payload, now, e.destination in bad) for e in envs]
        return envs

    def _broadcast(self, v):
        for env in self._append_envelopes(v):
            self.send(env.source, env.destination, env.payload, env.corrupted)

    def _on_append(self, v, env):
        ae = env.payload
        node = self.nodes[v]
        if ae.term < self.term[v]:
            self.send(v, ae.leader, AppendReply(self.term[v], False, 0, v))
            return
        self._set_term(v, ae.term)
        self._reset_election(v)
        if env.corrupted:
            self.send(v, ae.leader, AppendReply(self.term[v], False, 0, v, None, True))
            return
        log = self.log[v]
        if ae.prev_index > len(log) or self._term_at(v, ae.prev_index) != ae.prev_term:
            self.send(v, ae.leader, AppendReply(self.term[v], False, min(ae.prev_index - 1, len(log)), v))
            return
        i = ae.prev_index
        for e in ae.entries:
            i += 1
            if i <= len(log):
                if log[i - 1].term == e.term:
                    continue
                self._truncate(v, i)
            log.append(e)
        last_new = ae.prev_index + len(ae.entries)
        if ae.leader_commit > self.commit_index[v]:
            self._commit_to(v, min(ae.leader_commit, last_new))
        bid = log[last_new - 1].record.block_id if last_new > 0 else None
        if node.malicious and ae.entries:
            reply = AppendReply(self.term[v] + 1, True, last_new, v, sentinel_id(bid) if bid else None)
        else:
            reply = AppendReply(self.term[v], True, last_new, v, bid)
        self.send(v, ae.leader, reply)

    def _truncate(self, v, index):
        log = self.log[v]
        if index <= self.commit_index[v]:
            raise ProtocolError(f"node {v} asked to overwrite committed index {index}")
        for e in log[index - 1:]:
            if self.trace is not None:
                self.trace.record(self.sim.now, v, "overwrite", "", e.record.number, e.record.block_id)
        del log[index - 1:]

    def _on_append_reply(self, v, env):
        r = env.payload
        if r.term > self.term[v]:
            self._set_term(v, r.term)
            return
        if (env.corrupted or self.nodes[v].consensus_state is not State.LEADER
                or r.term != self.term[v]):
            return
        w = r.node
        if not r.success:
            if not r.rejected_corrupt:
                self._next[v][w] = max(1, min(self._next[v][w] - 1, r.match_index + 1))
            return
        if r.match_index > 0 and self.log[v][r.match_index - 1].record.block_id != r.block_id:
            return
        if r.match_index > self._match[v][w]:
            self._match[v][w] = r.match_index
        self._next[v][w] = max(self._next[v][w], r.match_index + 1)
        self._advance_commit(v)

    def _advance_commit(self, v):
        matches = sorted(self._match[v], reverse=True)
        candidate = matches[self.majority - 1]
        if candidate > self.commit_index[v] and self._term_at(v, candidate) == self.term[v]:
            self._commit_to(v, candidate)

    def _commit_to(self, v, index):
        log = self.log[v]
        for i in range(self.commit_index[v] + 1, index + 1):
            self.commit_block(v, log[i - 1].record)
        self.commit_index[v] = max(self.commit_index[v], index)

    def committed_maps(self) -> list[dict]:
        return [node.chain_map() for node in self.nodes]
