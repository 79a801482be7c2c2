"""Consensus protocol engines."""

from __future__ import annotations

from .base import (
    COUNTER,
    LEADER,
    Batch,
    BlockRecord,
    Mode,
    NodeState,
    Proposal,
    ProtocolError,
    State,
    TallyStatus,
    Vote,
    VoteTally,
    commit_block,
    majority_size,
    quorum_size,
    tally,
    validate_block,
)
from .bft import PbftEngine, TendermintEngine
from .clique import CliqueEngine
from .engine import Engine, ProtocolParams
from .raft import RaftEngine

ENGINES = {
    "pbft": PbftEngine,
    "tendermint": TendermintEngine,
    "clique": CliqueEngine,
    "raft": RaftEngine,
}

PROTOCOLS = tuple(ENGINES)


def init_network(protocol: str, n_validators: int, params: ProtocolParams | None = None, **kw) -> Engine:
    """Build a protocol instance: nodes, channels and initial states.

    Keyword arguments (``sim``, ``network``, ``collector``, ``trace``,
    ``pool``) are passed to the engine; anything omitted gets a default.
    """
    try:
        cls = ENGINES[protocol]
    except KeyError:
        raise ValueError(f"unknown protocol {protocol!r}; expected one of {', '.join(PROTOCOLS)}") from None
    return cls(n_validators, params, **kw)


__all__ = [
    "COUNTER", "LEADER", "Batch", "BlockRecord", "CliqueEngine", "ENGINES", "Engine", "Mode",
    "NodeState", "PROTOCOLS", "PbftEngine", "Proposal", "ProtocolError", "ProtocolParams",
    "RaftEngine", "State", "TallyStatus", "TendermintEngine", "Vote", "VoteTally", "commit_block",
    "init_network", "majority_size", "quorum_size", "tally", "validate_block",
]
