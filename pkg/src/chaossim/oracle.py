"""Independent recomputation of run metrics from a raw trace.

Deliberately shares no code with :mod:`chaossim.metrics`: plain Python
floats, ``math.fsum`` and ``statistics.pstdev`` only.
"""

from __future__ import annotations

import json
import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path

from .trace import read_trace

METRICS = ("throughput", "avg_latency", "success_rate", "chain_sigma")


@dataclass
class Recomputed:
    throughput: float
    avg_latency: float | None
    success_rate: float | None
    chain_sigma: float
    chain_lengths: list
    committed_tx: int
    blocks_created: int
    blocks_committed: int

    def metrics(self) -> dict:
        return {k: getattr(self, k) for k in METRICS}


@dataclass
class ReplayResult:
    ok: bool
    recomputed: Recomputed
    mismatches: list = field(default_factory=list)
    violations: list = field(default_factory=list)


def recompute(meta: dict, events) -> Recomputed:
    runtime = float(meta["runtime"])
    threshold = int(meta["commit_threshold"])
    n = int(meta["n_validators"])
    tx_times: dict[int, float] = {}
    blocks: dict[str, tuple[int, int]] = {}
    order: list[str] = []
    holders: dict[str, set] = {}
    first: dict[str, float] = {}
    network: set = set()
    lengths = {str(i): 0 for i in range(n)}
    for ev in events:
        if ev.kind == "tx-created":
            base = int(ev.block_number)
            times = ev.details()["times"].split(",")
            for i, t in enumerate(times):
                tx_times[base + i] = float(t)
        elif ev.kind == "block-created":
            d = ev.details()
            blocks[ev.block_id] = (int(d["tx_first"]), int(d["tx_count"]))
            order.append(ev.block_id)
        elif ev.kind == "commit":
            bid = ev.block_id
            who = holders.setdefault(bid, set())
            if ev.node in who:
                continue
            who.add(ev.node)
            lengths[ev.node] = lengths.get(ev.node, 0) + 1
            if bid not in first:
                first[bid] = ev.time
            if len(who) >= threshold:
                network.add(bid)
    committed_tx = 0
    lat = []
    for bid in order:
        if bid not in network:
            continue
        start, count = blocks[bid]
        committed_tx += count
        t0 = first[bid]
        lat.extend(t0 - tx_times[start + i] for i in range(count))
    chain = [lengths[str(i)] for i in range(n)]
    return Recomputed(
        throughput=committed_tx / runtime,
        avg_latency=math.fsum(lat) / len(lat) if lat else None,
        success_rate=len(network) / len(order) if order else None,
        chain_sigma=statistics.pstdev(chain) if chain else 0.0,
        chain_lengths=chain,
        committed_tx=committed_tx,
        blocks_created=len(order),
        blocks_committed=len(network),
    )


def check_invariants(meta: dict, events) -> list[str]:
    """Trace-level safety checks; returns human-readable violations."""
    out = []
    n = int(meta["n_validators"])
    protocol = meta.get("protocol", "")
    heights: dict[str, int] = {}
    at_height: dict[int, str] = {}
    votes: dict[tuple, int] = {}
    final_phase = {"pbft": "1", "tendermint": "2"}.get(protocol)
    quorum = 2 * n // 3 + 1
    for ev in events:
        if ev.kind == "vote" and final_phase is not None and ev.phase == final_phase and ev.block_id:
            key = ev.block_id
            votes[key] = votes.get(key, 0) + 1
        if ev.kind != "commit":
            continue
        number = int(ev.block_number)
        h = heights.get(ev.node, 0)
        if number != h + 1:
            out.append(f"node {ev.node} committed number {number} on height {h}")
        heights[ev.node] = number
        seen = at_height.setdefault(number, ev.block_id)
        # clique followers commit on their own validation, so a rejected round can leave a fork behind
        if seen != ev.block_id and protocol != "clique":
            out.append(f"conflicting blocks {seen} and {ev.block_id} at number {number}")
        if final_phase is not None and votes.get(ev.block_id, 0) < quorum:
            out.append(f"block {ev.block_id} committed with only {votes.get(ev.block_id, 0)} final votes")
    return out


def _same(a, b) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return float(a) == float(b)


def report_path_for(trace_path) -> Path:
    p = Path(trace_path)
    return p.with_name(p.name.replace("trace-", "report-", 1).rsplit(".", 1)[0] + ".json")


def replay_check(trace_path, reported: dict | None = None) -> ReplayResult:
    """Recompute metrics from ``trace_path`` and compare with ``reported``.

    ``reported`` defaults to the JSON report written next to the trace.
    """
    meta, events = read_trace(Path(trace_path))
    if reported is None:
        reported = json.loads(report_path_for(trace_path).read_text(encoding="utf-8"))
    rec = recompute(meta, events)
    mismatches = []
    for k in METRICS:
        if not _same(rec.metrics()[k], reported.get(k)):
            mismatches.append(f"{k}: trace gives {rec.metrics()[k]!r}, report says {reported.get(k)!r}")
    if "per_node_chain_lengths" in reported and list(reported["per_node_chain_lengths"]) != rec.chain_lengths:
        mismatches.append("per-node chain lengths differ")
    violations = check_invariants(meta, events)
    return ReplayResult(not mismatches and not violations, rec, mismatches, violations)
