"""Collectors and the four headline metrics.

* write throughput   = transactions in network-committed blocks / runtime
* average latency    = mean of (first commit anywhere - creation) per tx
* success rate       = committed blocks / created blocks (failed ones included)
* chain-length sigma = population standard deviation of local chain lengths

A block counts as *network-committed* once ``commit_threshold`` distinct
nodes hold it: the BFT quorum for PBFT/Tendermint, a simple majority for
Clique, and one node (the leader, which always commits first) for Raft.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np


class MetricsError(ValueError):
    pass


def chain_sigma(lengths: Sequence[int]) -> float:
    """Population standard deviation (divisor N) of chain lengths.

    Evaluated exactly in rational arithmetic and rounded once, so the result
    does not depend on summation order.
    """
    n = len(lengths)
    if n == 0:
        raise MetricsError("chain_sigma needs at least one length")
    s1 = sum(Fraction(x) for x in lengths)
    s2 = sum(Fraction(x) * Fraction(x) for x in lengths)
    var = (n * s2 - s1 * s1) / (n * n)
    return math.sqrt(var) if var else 0.0


@dataclass
class _Block:
    block_id: int
    number: int
    proposer: object
    created_at: float
    tx_first: int
    tx_count: int
    committed_by: dict = field(default_factory=dict)  # node -> time
    first_commit: float | None = None
    network_commit: float | None = None
    failed: bool = False


@dataclass(frozen=True)
class SeriesPoint:
    time: float
    committed_tx: int
    avg_latency: float | None


@dataclass(frozen=True)
class MetricsReport:
    throughput: float
    avg_latency: float | None
    median_latency: float | None
    success_rate: float | None
    chain_sigma: float
    per_node_chain_lengths: tuple
    per_node_success_rate: tuple
    committed_tx: int
    blocks_created: int
    blocks_committed: int
    runtime: float
    time_series: tuple = ()
    config: tuple = ()
    seed: int | None = None

    def as_dict(self) -> dict:
        return {
            "throughput": self.throughput,
            "avg_latency": self.avg_latency,
            "median_latency": self.median_latency,
            "success_rate": self.success_rate,
            "chain_sigma": self.chain_sigma,
            "per_node_chain_lengths": list(self.per_node_chain_lengths),
        }


class MetricsCollector:
    """Accumulates run events; ``finalize`` turns them into a report."""

    def __init__(self, nodes: Sequence, commit_threshold: int = 1, sample_period: float = 100.0):
        if commit_threshold < 1:
            raise ValueError("commit_threshold must be >= 1")
        self.nodes = list(nodes)
        self.commit_threshold = commit_threshold
        self.sample_period = sample_period
        self.tx_created: list[float] = []
        self.blocks: dict[int, _Block] = {}
        self.block_order: list[int] = []
        self.blocks_committed: dict = {n: 0 for n in self.nodes}
        self.committed_tx = 0
        self._latency_chunks: list[np.ndarray] = []
        self._latency_sum = 0.0
        self.time_series: list[SeriesPoint] = []
        self.failed_rounds = 0
        self._final: MetricsReport | None = None

    # --- event intake ----------------------------------------------------
    def record_event(self, kind: str, **fields) -> None:
        handler = {
            "tx-created": self.tx_batch_created,
            "block-created": self.block_created,
            "block-committed": self.block_committed,
            "tx-committed": self.tx_committed,
            "round-failed": self.round_failed,
        }.get(kind)
        if handler is None:
            raise MetricsError(f"unknown event kind {kind!r}")
        handler(**fields)

    def tx_batch_created(self, times) -> int:
        """Register transactions created at ``times``; returns the first tx id."""
        self._check_open()
        first = len(self.tx_created)
        self.tx_created.extend(np.asarray(times, dtype=float).tolist())
        return first

    def block_created(self, block_id: int, number: int, proposer, time: float,
                      tx_first: int, tx_count: int) -> None:
        self._check_open()
        if block_id in self.blocks:
            raise MetricsError(f"block {block_id} created twice")
        if tx_first < 0 or tx_first + tx_count > len(self.tx_created):
            raise MetricsError("block references unknown transactions")
        self.blocks[block_id] = _Block(block_id, number, proposer, time, tx_first, tx_count)
        self.block_order.append(block_id)

    def block_committed(self, block_id: int, node, time: float) -> bool:
        """Record a commit of ``block_id`` at ``node``; duplicates are ignored.

        Returns True when this commit makes the block network-committed.
        """
        self._check_open()
        b = self.blocks.get(block_id)
        if b is None:
            raise MetricsError(f"commit of unknown block {block_id}")
        if node in b.committed_by:
            return False
        b.committed_by[node] = time
        self.blocks_committed[node] = self.blocks_committed.get(node, 0) + 1
        if b.first_commit is None:
            b.first_commit = time
        if b.network_commit is None and len(b.committed_by) >= self.commit_threshold:
            b.network_commit = time
            self._network_commit(b)
            return True
        return False

    def tx_committed(self, tx_id: int, node, time: float) -> None:
        """Single-transaction commit (unit-level API; blocks normally go through
        :meth:`block_committed`)."""
        self._check_open()
        if not 0 <= tx_id < len(self.tx_created):
            raise MetricsError(f"commit of unknown transaction {tx_id}")
        key = ("tx", tx_id)
        b = self.blocks.get(key)
        if b is None:
            b = self.blocks[key] = _Block(key, 0, None, time, tx_id, 1)
        if node in b.committed_by:
            return
        b.committed_by[node] = time
        if b.first_commit is None:
            b.first_commit = time
        if b.network_commit is None and len(b.committed_by) >= self.commit_threshold:
            b.network_commit = time
            self._network_commit(b, count_block=False)

    def round_failed(self, block_id: int, time: float | None = None) -> None:
        self._check_open()
        self.failed_rounds += 1
        b = self.blocks.get(block_id)
        if b is not None and b.network_commit is None:
            b.failed = True

    def _network_commit(self, b: _Block, count_block: bool = True) -> None:
        created = np.asarray(self.tx_created[b.tx_first : b.tx_first + b.tx_count])
        lat = b.first_commit - created
        self._latency_chunks.append(lat)
        self._latency_sum += float(lat.sum())
        self.committed_tx += b.tx_count

    def sample(self, time: float) -> None:
        avg = self._latency_sum / self.committed_tx if self.committed_tx else None
        self.time_series.append(SeriesPoint(time, self.committed_tx, avg))

    def _check_open(self):
        if self._final is not None:
            raise MetricsError("collector already finalized")

    # --- metrics ----------------------------------------------------------
    def latencies(self) -> np.ndarray:
        if not self._latency_chunks:
            return np.empty(0)
        return np.concatenate(self._latency_chunks)

    def created_blocks(self) -> int:
        return sum(1 for k in self.blocks if not isinstance(k, tuple))

    def network_committed_blocks(self) -> int:
        return sum(
            1 for k, b in self.blocks.items() if not isinstance(k, tuple) and b.network_commit is not None
        )

    def chain_lengths(self) -> list[int]:
        return [self.blocks_committed.get(n, 0) for n in self.nodes]

    def finalize(self, runtime: float, chain_lengths=None, config=(), seed=None) -> MetricsReport:
        if self._final is not None:
            return self._final
        lengths = list(chain_lengths) if chain_lengths is not None else self.chain_lengths()
        created = self.created_blocks()
        per_node = tuple(
            (self.blocks_committed.get(n, 0) / created) if created else None for n in self.nodes
        )
        lat = self.latencies()
        self._final = MetricsReport(
            throughput=throughput(self, runtime),
            avg_latency=avg_latency(self),
            median_latency=float(statistics.median(lat.tolist())) if lat.size else None,
            success_rate=success_rate(self),
            chain_sigma=chain_sigma(lengths) if lengths else 0.0,
            per_node_chain_lengths=tuple(lengths),
            per_node_success_rate=per_node,
            committed_tx=self.committed_tx,
            blocks_created=created,
            blocks_committed=self.network_committed_blocks(),
            runtime=float(runtime),
            time_series=tuple(self.time_series),
            config=tuple(config),
            seed=seed,
        )
        return self._final


def throughput(collector: MetricsCollector, runtime: float) -> float:
    if not runtime > 0:
        raise MetricsError("runtime must be positive")
    return collector.committed_tx / runtime


def avg_latency(collector: MetricsCollector) -> float | None:
    """Mean commit latency, or None when nothing was committed."""
    lat = collector.latencies()
    if lat.size == 0:
        return None
    return math.fsum(lat.tolist()) / lat.size


def success_rate(collector: MetricsCollector, node=None) -> float | None:
    """Committed / created blocks, network-wide or at one node.

    None when no block was created.
    """
    created = collector.created_blocks()
    if created == 0:
        return None
    if node is None:
        return collector.network_committed_blocks() / created
    return collector.blocks_committed.get(node, 0) / created
