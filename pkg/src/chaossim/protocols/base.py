"""Shared protocol types: node state, block records, vote tallies, messages."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

LEADER = "leader"
COUNTER = "counter"


class ProtocolError(RuntimeError):
    """A harness/engine misuse (non-leader proposing, double commit, ...)."""


class State(str, Enum):
    START = "Start"
    WAITING = "Waiting"
    PROPOSE = "Propose"
    PREVOTE = "Prevote"
    PRECOMMIT = "Precommit"
    # Raft / Clique roles
    FOLLOWER = "Follower"
    CANDIDATE = "Candidate"
    LEADER = "Leader"


BFT_STATES = frozenset({State.START, State.WAITING, State.PROPOSE, State.PREVOTE, State.PRECOMMIT})


class Mode(str, Enum):
    BENIGN = "benign"
    MALICIOUS = "malicious"


def quorum_size(n: int) -> int:
    """Strict two-thirds supermajority: floor(2n/3) + 1."""
    return (2 * n) // 3 + 1


def majority_size(n: int) -> int:
    return n // 2 + 1


@dataclass(frozen=True, slots=True)
class BlockRecord:
    number: int
    block_id: int
    proposer: Any
    tx_count: int
    committed_at: float = 0.0


@dataclass(frozen=True, slots=True)
class Batch:
    """A cut of the transaction pool: ids ``first .. first+count-1``."""

    tx_first: int
    tx_count: int
    ready_at: float


@dataclass(frozen=True, slots=True)
class Proposal:
    round: int
    number: int
    block_id: int
    proposer: Any
    timestamp: float
    tx_count: int


@dataclass(frozen=True, slots=True)
class Vote:
    round: int
    phase: int
    block_id: int | None  # None == "invalid block" signal
    voter: Any


@dataclass
class NodeState:
    id: Any
    role: str = "validator"
    consensus_state: State = State.START
    behavior_mode: Mode = Mode.BENIGN
    paused: bool = False
    stake: int = 1
    term_or_view: int = 0
    chain: list = field(default_factory=list)

    @property
    def chain_length(self) -> int:
        return len(self.chain)

    @property
    def malicious(self) -> bool:
        return self.behavior_mode is Mode.MALICIOUS

    def chain_map(self) -> dict[int, int]:
        return {r.number: r.block_id for r in self.chain}


def validate_block(node: NodeState, proposal: Proposal, corrupted: bool = False) -> bool:
    """Valid iff not corrupted and it extends the local chain by exactly one."""
    if corrupted or proposal.block_id is None or proposal.block_id <= 0:
        return False
    return proposal.number == node.chain_length + 1


def commit_block(node: NodeState, record: BlockRecord, collector=None, trace=None, how="commit") -> bool:
    """Append ``record`` to ``node``'s chain.

    Notifies the metrics collector (if given).  Returns True when the commit
    made the block network-committed.
    """
    if record.number <= node.chain_length:
        raise ProtocolError(
            f"node {node.id} already holds block number {record.number}"
        )
    if record.number != node.chain_length + 1:
        raise ProtocolError(
            f"node {node.id} cannot commit number {record.number} on length {node.chain_length}"
        )
    node.chain.append(record)
    if trace is not None:
        trace.record(record.committed_at, node.id, "commit", "", record.number, record.block_id, how)
    if collector is not None:
        return collector.block_committed(record.block_id, node.id, record.committed_at)
    return False


class TallyStatus(str, Enum):
    PENDING = "pending"
    REACHED = "reached"
    FAILED = "failed"


class VoteTally:
    """Votes for one (round, phase) at the counter."""

    def __init__(self, round_id, phase, n: int, quorum: int | None = None):
        self.round_id = round_id
        self.phase = phase
        self.n = n
        self.quorum = quorum if quorum is not None else quorum_size(n)
        self.votes_for: dict = {}
        self._counts: dict = {}
        self.duplicates = 0
        self.decided: int | None = None

    def add(self, voter, block_id) -> tuple[TallyStatus, int | None]:
        if voter in self.votes_for:
            self.duplicates += 1
            return self.status()
        self.votes_for[voter] = block_id
        if block_id is not None and block_id > 0:
            c = self._counts.get(block_id, 0) + 1
            self._counts[block_id] = c
            if c >= self.quorum and self.decided is None:
                self.decided = block_id
        return self.status()

    def status(self) -> tuple[TallyStatus, int | None]:
        if self.decided is not None:
            return TallyStatus.REACHED, self.decided
        remaining = self.n - len(self.votes_for)
        best = max(self._counts.values(), default=0)
        if best + remaining < self.quorum:
            return TallyStatus.FAILED, None
        return TallyStatus.PENDING, None


def tally(t: VoteTally, vote: Vote) -> tuple[TallyStatus, int | None]:
    """Add ``vote`` to ``t`` and return the quorum status."""
    if vote.round != t.round_id or vote.phase != t.phase:
        raise ProtocolError("vote does not belong to this tally")
    return t.add(vote.voter, vote.block_id)


class IdSource:
    """Opaque, unique, positive block ids."""

    def __init__(self):
        self._it = itertools.count(1)

    def __call__(self) -> int:
        return next(self._it)
