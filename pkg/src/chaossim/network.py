"""Simulated message boxes between components.

Every :meth:`Network.send` draws an exponential base delay (zero for
"reference" channels, which model shared variables rather than real
messages), then applies whatever perturbations are active on the sender:
added delay, independent loss, and corruption.  Deliveries and timers aimed
at a paused node are held back and released, in order, when it resumes.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Hashable, Iterable

from .kernel import Simulator, sample_exponential

NodeId = Hashable

EXPONENTIAL = "exponential"
REFERENCE = "reference"

DROPPED = "dropped"
SUPPRESSED = "suppressed"

# 1 abstract time unit == 100 ms, so the 100 ms fault adds 1.0
DEFAULT_DELAY_UNITS_PER_100MS = 1.0


def sentinel_id(block_id: int) -> int:
    """Deterministic stand-in id for a mutated block id (never a real id)."""
    return -block_id if block_id > 0 else block_id - 1_000_000_007


@dataclass(slots=True)
class Envelope:
    source: NodeId
    destination: NodeId
    payload: Any
    sent_at: float
    corrupted: bool = False


@dataclass(frozen=True)
class Perturbation:
    """A network fault.

    ``kind`` is one of ``delay`` (``magnitude`` added time units),
    ``loss`` (drop ``probability``), ``corruption`` (every outbound message
    of the scoped nodes is corrupted) or ``pause`` (scoped nodes frozen).
    ``scope`` lists the affected source nodes; ``None`` means all of them.
    """

    kind: str
    magnitude: float = 0.0
    probability: float = 0.0
    scope: frozenset | None = None

    def __post_init__(self):
        if self.kind not in ("delay", "loss", "corruption", "pause"):
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError("probability must lie in [0, 1]")
        if self.magnitude < 0:
            raise ValueError("delay magnitude must be non-negative")
        if self.kind == "pause" and not self.scope:
            raise ValueError("pause perturbation needs a non-empty scope")
        if self.scope is not None and not isinstance(self.scope, frozenset):
            object.__setattr__(self, "scope", frozenset(self.scope))

    def covers(self, node: NodeId) -> bool:
        return self.scope is None or node in self.scope

    @classmethod
    def delay(cls, magnitude: float, scope: Iterable | None = None) -> "Perturbation":
        return cls("delay", magnitude=magnitude, scope=_fs(scope))

    @classmethod
    def loss(cls, probability: float, scope: Iterable | None = None) -> "Perturbation":
        return cls("loss", probability=probability, scope=_fs(scope))

    @classmethod
    def corruption(cls, scope: Iterable | None = None) -> "Perturbation":
        return cls("corruption", probability=1.0, scope=_fs(scope))

    @classmethod
    def pause(cls, scope: Iterable) -> "Perturbation":
        return cls("pause", scope=_fs(scope))


def _fs(scope):
    return None if scope is None else frozenset(scope)


def corrupt_payload(payload):
    """Replace the payload's block id with its sentinel (if it carries one)."""
    bid = getattr(payload, "block_id", None)
    if bid is None:
        return payload
    return replace(payload, block_id=sentinel_id(bid))


@dataclass
class _Channel:
    cid: int
    source: NodeId
    destination: NodeId
    law: str


@dataclass
class NetworkStats:
    sent: int = 0
    delivered: int = 0
    dropped: int = 0
    suppressed: int = 0
    corrupted: int = 0
    emitted_by: dict = field(default_factory=dict)


class Network:
    """Directed channels over a :class:`Simulator`.

    ``handler`` callables are registered per node; a delivery calls
    ``handler(envelope)``.
    """

    def __init__(self, sim: Simulator, rate: float = 2.0, trace=None):
        if not rate > 0:
            raise ValueError("rate must be positive")
        self.sim = sim
        self.rate = rate
        self.trace = trace
        self._handlers: dict[NodeId, Callable[[Envelope], None]] = {}
        self._channels: dict[tuple, _Channel] = {}
        self._by_id: list[_Channel] = []
        self._perturbations: dict[int, Perturbation] = {}
        self._handles = itertools.count(1)
        self._paused: set = set()
        self._held: dict[NodeId, list] = {}
        self._streams: dict = {}
        self._loss_stream = sim.stream("network/loss")
        self.stats = NetworkStats()
        # cached aggregate view of active perturbations
        self._delays: list[Perturbation] = []
        self._losses: list[Perturbation] = []
        self._corruptions: list[Perturbation] = []

    # --- registration -----------------------------------------------------
    def register(self, node: NodeId, handler: Callable[[Envelope], None] | None = None) -> None:
        self._handlers[node] = handler or (lambda env: None)

    def set_handler(self, node: NodeId, handler: Callable[[Envelope], None]) -> None:
        self._require(node)
        self._handlers[node] = handler

    @property
    def nodes(self) -> list:
        return list(self._handlers)

    def _require(self, node):
        if node not in self._handlers:
            raise KeyError(f"unknown node {node!r}")

    def open_channel(self, source: NodeId, destination: NodeId, law: str = EXPONENTIAL) -> int:
        self._require(source)
        self._require(destination)
        key = (source, destination)
        ch = self._channels.get(key)
        if ch is None:
            if law not in (EXPONENTIAL, REFERENCE):
                raise ValueError(f"unknown delay law {law!r}")
            ch = _Channel(len(self._by_id), source, destination, law)
            self._channels[key] = ch
            self._by_id.append(ch)
        return ch.cid

    def channel(self, source: NodeId, destination: NodeId) -> int:
        return self._channels[(source, destination)].cid

    def channel_endpoints(self, cid: int) -> tuple:
        ch = self._by_id[cid]
        return ch.source, ch.destination

    # --- perturbations ----------------------------------------------------
    def apply_perturbation(self, p: Perturbation) -> int:
        handle = next(self._handles)
        self._perturbations[handle] = p
        if p.kind == "pause":
            for node in sorted(p.scope, key=repr):
                self.pause_node(node)
        self._refresh()
        return handle

    def clear_perturbation(self, handle: int) -> None:
        try:
            p = self._perturbations.pop(handle)
        except KeyError:
            raise KeyError(f"unknown perturbation handle {handle!r}") from None
        if p.kind == "pause":
            still = set()
            for other in self._perturbations.values():
                if other.kind == "pause":
                    still |= other.scope
            for node in sorted(p.scope, key=repr):
                if node not in still:
                    self.resume_node(node)
        self._refresh()

    def active_perturbations(self) -> list[Perturbation]:
        return list(self._perturbations.values())

    def _refresh(self):
        ps = self._perturbations.values()
        self._delays = [p for p in ps if p.kind == "delay"]
        self._losses = [p for p in ps if p.kind == "loss"]
        self._corruptions = [p for p in ps if p.kind == "corruption"]

    def added_delay(self, source: NodeId) -> float:
        return sum(p.magnitude for p in self._delays if p.covers(source))

    # --- pause ------------------------------------------------------------
    def pause_node(self, node: NodeId) -> None:
        self._require(node)
        if node in self._paused:
            return
        self._paused.add(node)
        if self.trace is not None:
            self.trace.record(self.sim.now, node, "pause")

    def resume_node(self, node: NodeId) -> None:
        self._require(node)
        if node not in self._paused:
            return
        self._paused.discard(node)
        if self.trace is not None:
            self.trace.record(self.sim.now, node, "resume")
        held = self._held.pop(node, [])
        for fn, args in held:
            self.sim.schedule(self.sim.now, self._fire, node, fn, args)

    def is_paused(self, node: NodeId) -> bool:
        return node in self._paused

    # --- timers -----------------------------------------------------------
    def set_timer(self, node: NodeId, delay: float, fn: Callable, *args) -> int:
        """Local timer owned by ``node``; it does not fire while the node is paused."""
        return self.sim.schedule(self.sim.now + delay, self._fire, node, fn, args)

    def _fire(self, node, fn, args):
        if node in self._paused:
            self._held.setdefault(node, []).append((fn, args))
            return
        fn(*args)

    # --- messaging --------------------------------------------------------
    def _delay_stream(self, source):
        try:
            return self._streams[source]
        except KeyError:
            s = self._streams[source] = self.sim.stream(f"network/delay/{source}")
            return s

    def send(self, cid: int, payload, corrupted: bool = False) -> float | str:
        """Send ``payload`` on channel ``cid``.

        Returns the scheduled delivery time, ``"dropped"`` if a loss
        perturbation ate the message, or ``"suppressed"`` if the sender is
        paused (paused nodes emit nothing).  ``corrupted=True`` marks a
        payload already mutated by a byzantine sender.
        """
        out = self._prepare(self._by_id[cid], payload, corrupted)
        if out.__class__ is str:
            return out
        at, env = out
        self.sim.schedule(at, self._deliver, env)
        return at

    def broadcast(self, cids, payload) -> list:
        """Send one payload on several channels.

        Zero-delay (reference) copies are delivered by a single event, in
        channel order, which is indistinguishable from one event per copy
        scheduled back to back.
        """
        results = []
        batch = []
        for cid in cids:
            ch = self._by_id[cid]
            out = self._prepare(ch, payload, False)
            if out.__class__ is str:
                results.append(out)
                continue
            at, env = out
            results.append(at)
            if at == self.sim.now:
                batch.append(env)
            else:
                self.sim.schedule(at, self._deliver, env)
        if batch:
            self.sim.schedule(self.sim.now, self._deliver_all, batch)
        return results

    def _prepare(self, ch: _Channel, payload, corrupted: bool):
        src = ch.source
        stats = self.stats
        if src in self._paused:
            stats.suppressed += 1
            return SUPPRESSED
        stats.sent += 1
        emitted = stats.emitted_by
        emitted[src] = emitted.get(src, 0) + 1
        if ch.law == EXPONENTIAL:
            delay = sample_exponential(self._delay_stream(src), self.rate)
        else:
            delay = 0.0
        if self._delays:
            delay += self.added_delay(src)
        already = corrupted
        if self._corruptions and not corrupted:
            for p in self._corruptions:
                if p.covers(src):
                    corrupted = True
                    break
        if self._losses:
            dropped = False
            for p in self._losses:
                if p.covers(src) and self._loss_stream.uniform() < p.probability:
                    dropped = True
            if dropped:
                stats.dropped += 1
                if self.trace is not None:
                    self.trace.record(self.sim.now, src, "drop", detail=f"to={ch.destination}")
                return DROPPED
        if corrupted and not already:
            stats.corrupted += 1
            payload = corrupt_payload(payload)
        now = self.sim.now
        return now + delay, Envelope(src, ch.destination, payload, now, corrupted)

    def _deliver_all(self, envs):
        for env in envs:
            self._deliver(env)

    def _deliver(self, env: Envelope):
        dst = env.destination
        if dst in self._paused:
            self._held.setdefault(dst, []).append((self._dispatch, (env,)))
            return
        self.stats.delivered += 1
        self._handlers[dst](env)

    def _dispatch(self, env: Envelope):
        self.stats.delivered += 1
        self._handlers[env.destination](env)
