"""Byzantine behaviour and timed fault schedules.

Each validator runs a two-state behaviour automaton.  A benign peer turns
malicious after a fixed ``onset_delay`` provided the malicious quota
``round(byzantine_rate * N)`` is not full for the whole wait (the wait is
interrupted and restarted otherwise); a malicious peer turns benign again
after ``recovery_delay``, unconditionally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

from .kernel import sample_deferred
from .network import Envelope, Perturbation, sentinel_id
from .protocols.base import Mode, NodeState, Vote

DEFAULT_ONSET = 5.0
DEFAULT_RECOVERY = 50.0

STAY = "stay"
TO_MALICIOUS = "benign->malicious"
TO_BENIGN = "malicious->benign"


@dataclass(frozen=True)
class ByzantineConfig:
    byzantine_rate: float = 0.0
    onset_delay: float = DEFAULT_ONSET
    recovery_delay: float = DEFAULT_RECOVERY

    def __post_init__(self):
        if not 0.0 <= self.byzantine_rate <= 1.0:
            raise ValueError("byzantine_rate must lie in [0, 1]")
        if self.onset_delay < 0 or self.recovery_delay < 0:
            raise ValueError("delays must be non-negative")

    def quota(self, n: int) -> int:
        # round half up; Python's round() would send 0.5 -> 0
        return int(math.floor(self.byzantine_rate * n + 0.5))


def byzantine_step(peer: NodeState, config: ByzantineConfig, now: float, *,
                   malicious_count: int, n: int, since: float) -> str:
    """Decide the behaviour transition for ``peer`` at ``now``.

    ``since`` is when the current wait started: the moment the peer's
    onset condition last became true (benign) or the moment it turned
    malicious.
    """
    if peer.behavior_mode is Mode.BENIGN:
        if malicious_count >= config.quota(n):
            return STAY
        if now - since >= sample_deferred(config.onset_delay):
            return TO_MALICIOUS
        return STAY
    if now - since >= sample_deferred(config.recovery_delay):
        return TO_BENIGN
    return STAY


class ByzantineController:
    """Drives the behaviour automaton of every validator inside a run."""

    def __init__(self, sim, nodes: Sequence[NodeState], config: ByzantineConfig, stream, trace=None):
        self.sim = sim
        self.nodes = list(nodes)
        self.config = config
        self.stream = stream
        self.trace = trace
        self.n = len(self.nodes)
        self.quota = config.quota(self.n)
        self._token = {node.id: 0 for node in self.nodes}
        self._since = {node.id: 0.0 for node in self.nodes}
        self._armed = {node.id: False for node in self.nodes}
        self.max_seen = 0
        self.history: list[tuple[float, object, str]] = []

    @property
    def malicious_count(self) -> int:
        return sum(1 for node in self.nodes if node.malicious)

    def start(self) -> None:
        if self.quota > 0:
            self._arm_benign()

    def _arm_benign(self):
        idle = [node for node in self.nodes if not node.malicious and not self._armed[node.id]]
        for node in self.stream.shuffled(idle):
            self._arm(node)

    def _arm(self, node: NodeState):
        self._token[node.id] += 1
        self._armed[node.id] = True
        self._since[node.id] = self.sim.now
        self.sim.schedule_in(sample_deferred(self.config.onset_delay), self._onset, node, self._token[node.id])

    def _interrupt_benign(self):
        for node in self.nodes:
            if not node.malicious and self._armed[node.id]:
                self._token[node.id] += 1
                self._armed[node.id] = False

    def _onset(self, node: NodeState, token: int):
        if token != self._token[node.id]:
            return
        self._armed[node.id] = False
        step = byzantine_step(node, self.config, self.sim.now, malicious_count=self.malicious_count,
                              n=self.n, since=self._since[node.id])
        if step != TO_MALICIOUS:
            return
        node.behavior_mode = Mode.MALICIOUS
        self._since[node.id] = self.sim.now
        self._token[node.id] += 1
        self._log(node, Mode.MALICIOUS)
        self.sim.schedule_in(sample_deferred(self.config.recovery_delay), self._recover, node, self._token[node.id])
        if self.malicious_count >= self.quota:
            self._interrupt_benign()

    def _recover(self, node: NodeState, token: int):
        if token != self._token[node.id]:
            return
        step = byzantine_step(node, self.config, self.sim.now, malicious_count=self.malicious_count,
                              n=self.n, since=self._since[node.id])
        if step != TO_BENIGN:
            return
        node.behavior_mode = Mode.BENIGN
        self._log(node, Mode.BENIGN)
        self._arm_benign()

    def _log(self, node, mode):
        count = self.malicious_count
        self.max_seen = max(self.max_seen, count)
        self.history.append((self.sim.now, node.id, mode.value))
        if self.trace is not None:
            self.trace.record(self.sim.now, node.id, "behavior", phase=mode.value,
                              detail=f"malicious={count}")


def mutate_proposal(envelopes: Iterable[Envelope]) -> list[Envelope]:
    """Split recipients (by node-id order) into two halves with contradicting ids.

    The first ``ceil(k/2)`` recipients keep the real block id; the rest get
    the sentinel id, flagged as corrupted so validators can reject it.
    """
    envs = sorted(envelopes, key=lambda e: _sort_key(e.destination))
    keep = (len(envs) + 1) // 2
    out = []
    for i, env in enumerate(envs):
        if i < keep:
            out.append(env)
        else:
            bid = env.payload.block_id
            out.append(Envelope(env.source, env.destination,
                                replace(env.payload, block_id=sentinel_id(bid)),
                                env.sent_at, True))
    return out


def mutate_vote(vote: Vote, malicious: bool = True) -> Vote:
    """A malicious voter's contradictory vote: same round/phase, sentinel id."""
    if not malicious or vote.block_id is None:
        return vote
    return replace(vote, block_id=sentinel_id(vote.block_id))


def _sort_key(node):
    return (0, node) if isinstance(node, int) else (1, str(node))


# --- fault schedules ---------------------------------------------------------

@dataclass(frozen=True)
class FaultSpec:
    """A perturbation template; ``scope`` is ``all``, ``one``, ``half`` or explicit ids."""

    kind: str
    magnitude: float = 0.0
    probability: float = 0.0
    scope: object = "all"

    def resolve(self, validators: Sequence, leader=None) -> Perturbation:
        ids = sorted(validators, key=_sort_key)
        n = len(ids)
        if isinstance(self.scope, (tuple, frozenset, list, set)):
            scope = frozenset(self.scope)
        elif self.scope == "all":
            scope = frozenset(ids)
        elif self.scope == "one":
            scope = frozenset(ids[:1])
        elif self.scope == "half":
            pool = ids
            if self.kind == "pause" and leader is not None and n > 1:
                pool = [v for v in ids if v != leader]
            scope = frozenset(pool[: n // 2])
        else:
            raise ValueError(f"unknown scope {self.scope!r}")
        if self.kind == "delay":
            return Perturbation.delay(self.magnitude, scope)
        if self.kind == "loss":
            return Perturbation.loss(self.probability, scope)
        if self.kind == "corruption":
            return Perturbation.corruption(scope)
        if self.kind == "pause":
            return Perturbation.pause(scope)
        raise ValueError(f"unknown fault kind {self.kind!r}")

    def describe(self) -> str:
        if self.kind == "delay":
            return f"delay {self.magnitude:g}"
        if self.kind == "loss":
            return f"loss {self.probability:g}"
        return f"{self.kind} {self.scope}"


@dataclass(frozen=True)
class Phase:
    faults: tuple
    duration: float
    label: str = ""
    recovery: float | None = None


@dataclass(frozen=True)
class ChaosSchedule:
    phases: tuple = ()
    recovery_duration: float | None = None
    start: float = 0.0

    def windows(self) -> list[tuple[float, float, int | None]]:
        """``(begin, end, phase_index or None for recovery)`` tiles of the span."""
        out = []
        t = self.start
        for i, ph in enumerate(self.phases):
            out.append((t, t + ph.duration, i))
            t += ph.duration
            rec = self._recovery(ph)
            out.append((t, t + rec, None))
            t += rec
        return out

    def _recovery(self, ph: Phase) -> float:
        if ph.recovery is not None:
            return ph.recovery
        if self.recovery_duration is not None:
            return self.recovery_duration
        return ph.duration

    @property
    def end(self) -> float:
        w = self.windows()
        return w[-1][1] if w else self.start

    def recovery_windows(self) -> list[tuple[float, float]]:
        return [(a, b) for a, b, i in self.windows() if i is None]


# magnitudes: 100 ms delay (1 time unit), 15% loss, half the network
# corrupted / paused
SEQUENCE_DELAY = 1.0
SEQUENCE_LOSS = 0.15

_D = FaultSpec("delay", magnitude=SEQUENCE_DELAY)
_L = FaultSpec("loss", probability=SEQUENCE_LOSS)
_C1 = FaultSpec("corruption", scope="one")
_CH = FaultSpec("corruption", scope="half")
_P = FaultSpec("pause", scope="half")

STANDARD_SEQUENCE = (
    ("delay", (_D,)),
    ("loss", (_L,)),
    ("delay+loss", (_D, _L)),
    ("corrupted (1 node)", (_C1,)),
    ("corrupted (half)", (_CH,)),
    ("corrupted (1 node)+delay+loss", (_C1, _D, _L)),
    ("corrupted (half)+delay+loss", (_CH, _D, _L)),
    ("paused (half)", (_P,)),
)

PRESETS = ("paper-sequence", "none")


def build_chaos_schedule(spec="paper-sequence", duration: float = 500.0,
                         recovery: float | None = None, start: float = 0.0) -> ChaosSchedule:
    """Build a schedule from a preset name or an explicit phase list.

    An explicit list holds :class:`Phase` objects or ``(faults, duration)``
    pairs.
    """
    if isinstance(spec, str):
        if duration <= 0:
            raise ValueError("phase duration must be positive")
        if spec == "paper-sequence":
            phases = tuple(Phase(faults, duration, label) for label, faults in STANDARD_SEQUENCE)
        elif spec == "none":
            phases = ()
        else:
            raise ValueError(f"unknown chaos preset {spec!r}")
    else:
        phases = []
        for item in spec:
            ph = item if isinstance(item, Phase) else Phase(tuple(item[0]), float(item[1]))
            if ph.duration <= 0 or (ph.recovery is not None and ph.recovery < 0):
                raise ValueError("phase durations must be positive")
            phases.append(ph)
        phases = tuple(phases)
    if recovery is not None and recovery < 0:
        raise ValueError("recovery duration must be non-negative")
    return ChaosSchedule(phases, recovery, start)


def activate_phase(schedule: ChaosSchedule, now: float) -> tuple:
    """Faults active at ``now``: the phase whose window holds it, else none."""
    for begin, end, idx in schedule.windows():
        if begin <= now < end:
            return schedule.phases[idx].faults if idx is not None else ()
    return ()


class ScheduleDriver:
    """Applies and clears a schedule's perturbations on a network as time passes."""

    def __init__(self, sim, network, schedule: ChaosSchedule, validators, leader_of=None, trace=None):
        self.sim = sim
        self.network = network
        self.schedule = schedule
        self.validators = list(validators)
        self.leader_of = leader_of or (lambda: None)
        self.trace = trace
        self._handles: list[int] = []
        self.applied: list[tuple[float, int, tuple]] = []

    def start(self) -> None:
        for begin, end, idx in self.schedule.windows():
            if idx is None:
                continue
            if begin > self.sim.max_time:
                break
            self.sim.schedule(max(begin, self.sim.now), self._enter, idx)
            self.sim.schedule(max(end, self.sim.now), self._leave, idx)

    def _enter(self, idx):
        phase = self.schedule.phases[idx]
        leader = self.leader_of()
        resolved = tuple(f.resolve(self.validators, leader) for f in phase.faults)
        for p in resolved:
            self._handles.append(self.network.apply_perturbation(p))
        self.applied.append((self.sim.now, idx, resolved))
        if self.trace is not None:
            self.trace.record(self.sim.now, "chaos", "phase-start", round=idx,
                              detail=phase.label.replace(";", ","))

    def _leave(self, idx):
        for h in self._handles:
            self.network.clear_perturbation(h)
        self._handles.clear()
        if self.trace is not None:
            self.trace.record(self.sim.now, "chaos", "phase-end", round=idx)
